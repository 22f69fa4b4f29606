//! End-to-end tests of the `gwre` binary: artifact determinism, thread-count
//! invariance, refusal paths and the shipped fixture configs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_gwre")
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .unwrap()
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

const SMALL_SUPERCRITICAL: &str = r#"
seed = 7

[spec]
environments = ["good", "bad"]
survival = [
  { initial = 0.50, floor = 0.35, rate = 0.6 },
  { initial = 0.42, floor = 0.30, rate = 0.6 },
]

[spec.fertility]
kind = "geometric_tail"
mean = [
  { initial = 0.86, floor = 0.62, rate = 0.6 },
  { initial = 0.68, floor = 0.48, rate = 0.6 },
]

[spec.env_process]
kind = "iid"
weights = [0.5, 0.5]

[simulate]
replicates = 64
n_max = 20

[kesten_stigum]
replicates = 200
n_max = 15
"#;

#[test]
fn simulate_artifacts_are_byte_identical_across_reruns() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "config.toml", SMALL_SUPERCRITICAL);
    let out1 = tmp.path().join("out1");
    let out2 = tmp.path().join("out2");
    for out in [&out1, &out2] {
        let o = run(&[
            "simulate",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(
            o.status.success(),
            "stderr: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    for file in ["replicates.csv", "generations.csv", "summary.json"] {
        let a = std::fs::read(out1.join(file)).unwrap();
        let b = std::fs::read(out2.join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between reruns");
    }
}

#[test]
fn thread_count_does_not_change_aggregates() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "config.toml", SMALL_SUPERCRITICAL);
    let out1 = tmp.path().join("t1");
    let out8 = tmp.path().join("t8");
    for (out, threads) in [(&out1, "1"), (&out8, "8")] {
        let o = run(&[
            "kesten-stigum",
            "--config",
            config.to_str().unwrap(),
            "--threads",
            threads,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(
            o.status.success(),
            "stderr: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    for file in ["summary.json", "replicates.csv", "generations.csv"] {
        let a = std::fs::read(out1.join(file)).unwrap();
        let b = std::fs::read(out8.join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between thread counts");
    }
}

#[test]
fn check_passes_on_the_bundled_supercritical_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    let fixture = workspace_root().join("fixtures/geo_supercritical.toml");
    let o = run(&[
        "check",
        "--config",
        fixture.to_str().unwrap(),
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert!(
        o.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("out/report.json")).unwrap())
            .unwrap();
    assert_eq!(report["summary"]["kesten_stigum_ready"], true);
    assert_eq!(report["summary"]["classification"]["class"], "exp_tail");
    assert!(report["config_hash"].as_str().unwrap().len() == 64);
}

#[test]
fn check_exit_code_reflects_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let fixture = workspace_root().join("fixtures/geo_subcritical.toml");
    let o = run(&[
        "check",
        "--config",
        fixture.to_str().unwrap(),
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(1),
        "stdout: {}",
        String::from_utf8_lossy(&o.stdout)
    );
}

#[test]
fn kesten_stigum_refuses_subcritical_specs_citing_the_assumption() {
    let tmp = tempfile::tempdir().unwrap();
    let fixture = workspace_root().join("fixtures/geo_subcritical.toml");
    let o = run(&[
        "kesten-stigum",
        "--config",
        fixture.to_str().unwrap(),
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("Supercriticality"), "stderr: {stderr}");
}

#[test]
fn unknown_config_keys_are_rejected_with_diagnostics() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        "bad.toml",
        "seed = 1\nnot_a_real_key = 2\n[spec]\nenvironments = [\"e\"]\n",
    );
    let o = run(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("not_a_real_key"), "stderr: {stderr}");
}

#[test]
fn shipped_fixture_configs_parse_to_the_bundled_specs() {
    use gwre::fixtures;
    let cases: [(&str, gwre::LeslieSpec); 8] = [
        ("l2toy", fixtures::l2toy()),
        ("geo_supercritical", fixtures::geo_supercritical()),
        ("geo_slow_growth", fixtures::geo_slow_growth()),
        ("geo_subcritical", fixtures::geo_subcritical()),
        ("bs_binomial", fixtures::bs_binomial()),
        ("polytail_a5", fixtures::polytail_a5()),
        ("poisson_unclassified", fixtures::poisson_unclassified()),
        ("markov_two_state", fixtures::markov_two_state()),
    ];
    #[derive(serde::Deserialize)]
    struct SpecOnly {
        #[allow(dead_code)]
        seed: Option<u64>,
        spec: gwre::LeslieSpec,
    }
    for (name, expected) in cases {
        let path = workspace_root().join(format!("fixtures/{name}.toml"));
        let text = std::fs::read_to_string(&path).unwrap();
        let parsed: SpecOnly = toml::from_str(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(
            parsed.spec, expected,
            "{name} drifted from the bundled fixture"
        );
    }
}

#[test]
fn appendix_runs_without_a_config() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&[
        "appendix",
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    // full default grid takes a few seconds; this is the real run
    assert!(
        o.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(tmp.path().join("out/u_grid.csv").exists());
}
