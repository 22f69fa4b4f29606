//! CSV and JSON emitters for experiment artifacts.
//!
//! Every file starts with a provenance comment `# config_hash=… seed=…` so
//! results are traceable to the exact configuration; numeric columns use
//! Rust's shortest-round-trip float formatting, which is deterministic, so a
//! rerun with the same hash reproduces files byte for byte.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::semigroup::{HarmonicProfile, LyapunovEstimate};
use crate::simulate::{GenerationRow, ReplicateSummary, TypeFrequencyRow};
use crate::spine::SpineRecord;
use crate::verify::AppendixReport;

/// Provenance stamp embedded in every output file.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

fn open_with_header(path: &Path, prov: &Provenance) -> Result<File> {
    let mut file = File::create(path)?;
    writeln!(
        file,
        "# config_hash={} seed={}",
        prov.config_hash, prov.seed
    )?;
    Ok(file)
}

/// Per-step growth series: `k, lambda_k, log_norm_k, gamma_k`.
pub fn write_lyapunov_series(
    path: &Path,
    prov: &Provenance,
    estimate: &LyapunovEstimate,
) -> Result<()> {
    let file = open_with_header(path, prov)?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["k", "lambda_k", "log_norm_k", "gamma_k"])?;
    for row in &estimate.series {
        w.write_record([
            row.k.to_string(),
            row.lambda_k.to_string(),
            row.log_norm_k.to_string(),
            row.gamma_k.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Harmonic profiles as `(k, age, h)` triples.
pub fn write_profiles(path: &Path, prov: &Provenance, profiles: &[HarmonicProfile]) -> Result<()> {
    let file = open_with_header(path, prov)?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["k", "age", "h"])?;
    for p in profiles {
        for (age, h) in p.h.iter().enumerate() {
            w.write_record([p.k.to_string(), age.to_string(), h.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-replicate summary rows.
pub fn write_replicates(path: &Path, prov: &Provenance, rows: &[ReplicateSummary]) -> Result<()> {
    let file = open_with_header(path, prov)?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record([
        "replicate",
        "extinction_time",
        "w_final",
        "final_total",
        "max_age0",
        "cap_hit",
    ])?;
    for r in rows {
        w.write_record([
            r.replicate.to_string(),
            r.extinction_time.map_or(String::new(), |t| t.to_string()),
            r.w_final.to_string(),
            r.final_total.to_string(),
            r.max_age0.to_string(),
            r.cap_hit.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-generation ensemble rows.
pub fn write_generations(path: &Path, prov: &Provenance, rows: &[GenerationRow]) -> Result<()> {
    let file = open_with_header(path, prov)?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["generation", "survivors", "mean_w", "mean_total"])?;
    for r in rows {
        w.write_record([
            r.generation.to_string(),
            r.survivors.to_string(),
            r.mean_w.to_string(),
            r.mean_total.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-generation spine records.
pub fn write_spine_records(path: &Path, prov: &Provenance, rows: &[SpineRecord]) -> Result<()> {
    let file = open_with_header(path, prov)?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record([
        "n",
        "spine_age",
        "newborns",
        "survived",
        "child_age",
        "offspring_h_value",
    ])?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.spine_age.to_string(),
            r.newborns.to_string(),
            r.survived.to_string(),
            r.child_age.to_string(),
            r.offspring_h_value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-generation type-frequency error rows.
pub fn write_type_frequencies(
    path: &Path,
    prov: &Provenance,
    rows: &[TypeFrequencyRow],
) -> Result<()> {
    let file = open_with_header(path, prov)?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["generation", "survivors", "median_error", "q10", "q90"])?;
    for r in rows {
        w.write_record([
            r.generation.to_string(),
            r.survivors.to_string(),
            r.median_error.to_string(),
            r.q10.to_string(),
            r.q90.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Appendix lemma verification grid.
pub fn write_appendix_grid(path: &Path, prov: &Provenance, report: &AppendixReport) -> Result<()> {
    let file = open_with_header(path, prov)?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["a", "s", "u_certified", "bound", "pass"])?;
    for p in &report.u_points {
        w.write_record([
            p.a.to_string(),
            p.s.to_string(),
            p.u_certified.to_string(),
            p.bound.to_string(),
            p.pass.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    config_hash: &'a str,
    seed: u64,
    version: &'a str,
    summary: &'a T,
}

/// JSON summary wrapped with provenance and the crate version.
pub fn write_json_summary<T: Serialize>(path: &Path, prov: &Provenance, summary: &T) -> Result<()> {
    let envelope = Envelope {
        config_hash: &prov.config_hash,
        seed: prov.seed,
        version: env!("CARGO_PKG_VERSION"),
        summary,
    };
    let mut file = File::create(path)?;
    let body = serde_json::to_string_pretty(&envelope)
        .map_err(|e| crate::error::Error::InvalidArgument(format!("serialization failed: {e}")))?;
    file.write_all(body.as_bytes())?;
    file.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::semigroup::lyapunov_estimate;

    #[test]
    fn series_files_are_byte_identical_across_reruns() {
        let spec = fixtures::l2toy();
        let est = lyapunov_estimate(&spec, 20, 5).unwrap();
        let prov = Provenance {
            config_hash: "deadbeef".into(),
            seed: 5,
        };
        let dir = std::env::temp_dir();
        let p1 = dir.join("gwre_report_test_1.csv");
        let p2 = dir.join("gwre_report_test_2.csv");
        write_lyapunov_series(&p1, &prov, &est).unwrap();
        write_lyapunov_series(&p2, &prov, &est).unwrap();
        let a = std::fs::read(&p1).unwrap();
        let b = std::fs::read(&p2).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("# config_hash=deadbeef seed=5\n"));
        assert!(text.lines().nth(1).unwrap().starts_with("k,lambda_k"));
        std::fs::remove_file(p1).ok();
        std::fs::remove_file(p2).ok();
    }

    #[test]
    fn json_summary_carries_provenance() {
        let prov = Provenance {
            config_hash: "abc".into(),
            seed: 9,
        };
        let dir = std::env::temp_dir();
        let p = dir.join("gwre_report_test.json");
        write_json_summary(&p, &prov, &serde_json::json!({"x": 1})).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["config_hash"], "abc");
        assert_eq!(v["seed"], 9);
        assert_eq!(v["summary"]["x"], 1);
        std::fs::remove_file(p).ok();
    }
}
