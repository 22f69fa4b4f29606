//! Experiment configuration: a strict TOML schema with one table per
//! experiment kind. Unknown keys are rejected everywhere; every numeric
//! parameter must be positive.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use gwre::LeslieSpec;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Inline model spec…
    pub spec: Option<LeslieSpec>,
    /// …or a path (relative to the config file) to a TOML file holding one.
    pub spec_path: Option<PathBuf>,
    /// Root seed; overridden by `--seed`.
    pub seed: Option<u64>,
    #[serde(default)]
    pub semigroup: SemigroupSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub spine: SpineSection,
    #[serde(default)]
    pub kesten_stigum: KestenStigumSection,
    #[serde(default)]
    pub type_freq: TypeFreqSection,
    #[serde(default)]
    pub ext_expl: ExtExplSection,
    #[serde(default)]
    pub check: CheckSection,
    #[serde(default)]
    pub appendix: AppendixSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SemigroupSection {
    pub horizon: usize,
    /// Profiles h_0..h_{profile_count-1} are emitted.
    pub profile_count: usize,
    /// Age window of the emitted profiles.
    pub profile_window: usize,
    pub profile_tol: f64,
}

impl Default for SemigroupSection {
    fn default() -> Self {
        Self {
            horizon: 200,
            profile_count: 8,
            profile_window: 8,
            profile_tol: 1e-10,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub replicates: u64,
    pub n_max: usize,
    /// Initial population as (age, count) pairs.
    pub z0: Vec<(usize, u64)>,
    pub population_cap: u64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            replicates: 100,
            n_max: 50,
            z0: vec![(0, 1)],
            population_cap: 10_000_000,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpineSection {
    pub x0: usize,
    pub n_max: usize,
    pub replicates: u64,
    pub population_cap: u64,
    /// Depth of the exhaustive change-of-measure enumeration (bounded-support
    /// fertility only; 0 disables it).
    pub enumeration_levels: usize,
}

impl Default for SpineSection {
    fn default() -> Self {
        Self {
            x0: 0,
            n_max: 100,
            replicates: 100,
            population_cap: 10_000_000,
            enumeration_levels: 2,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KestenStigumSection {
    pub replicates: u64,
    pub n_max: usize,
    pub llogl_epsilon: f64,
    pub population_cap: u64,
}

impl Default for KestenStigumSection {
    fn default() -> Self {
        Self {
            replicates: 10_000,
            n_max: 50,
            llogl_epsilon: 0.5,
            population_cap: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFunction {
    /// Indicator of age 0.
    Age0Indicator,
    /// Constant one (error identically zero).
    ConstantOne,
    /// `1/(1+age)`, a strictly positive bounded function.
    InverseAge,
}

impl TestFunction {
    pub fn eval(self, age: usize) -> f64 {
        match self {
            Self::Age0Indicator => {
                if age == 0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::ConstantOne => 1.0,
            Self::InverseAge => 1.0 / (1.0 + age as f64),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TypeFreqSection {
    pub replicates: u64,
    pub n_max: usize,
    pub test_function: TestFunction,
    pub population_cap: u64,
}

impl Default for TypeFreqSection {
    fn default() -> Self {
        Self {
            replicates: 4_000,
            n_max: 30,
            test_function: TestFunction::Age0Indicator,
            population_cap: 10_000_000,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtExplSection {
    pub replicates: u64,
    pub n_max: usize,
    pub w_floor: f64,
    pub population_cap: u64,
}

impl Default for ExtExplSection {
    fn default() -> Self {
        Self {
            replicates: 10_000,
            n_max: 100,
            w_floor: 1e-6,
            population_cap: 10_000_000,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckSection {
    pub llogl_epsilon: f64,
}

impl Default for CheckSection {
    fn default() -> Self {
        Self { llogl_epsilon: 0.5 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AppendixSection {
    pub series_len: u64,
    pub g_k_max: u64,
}

impl Default for AppendixSection {
    fn default() -> Self {
        Self {
            series_len: 1_000_000,
            g_k_max: 1_000_000,
        }
    }
}

/// A parsed configuration together with the hash of its raw bytes.
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub hash: String,
}

pub fn load(path: &Path) -> Result<LoadedConfig> {
    let raw = std::fs::read(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    let hash = {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(&raw);
        hex_string(&h.finalize())
    };
    let text = String::from_utf8(raw).context("config file is not valid UTF-8")?;
    let config: ExperimentConfig =
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
    validate(&config)?;
    Ok(LoadedConfig { config, hash })
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn validate(config: &ExperimentConfig) -> Result<()> {
    let positives: [(&str, f64); 12] = [
        ("semigroup.horizon", config.semigroup.horizon as f64),
        ("semigroup.profile_tol", config.semigroup.profile_tol),
        ("simulate.replicates", config.simulate.replicates as f64),
        ("simulate.n_max", config.simulate.n_max as f64),
        (
            "simulate.population_cap",
            config.simulate.population_cap as f64,
        ),
        ("spine.n_max", config.spine.n_max as f64),
        ("spine.replicates", config.spine.replicates as f64),
        (
            "kesten_stigum.replicates",
            config.kesten_stigum.replicates as f64,
        ),
        ("kesten_stigum.n_max", config.kesten_stigum.n_max as f64),
        ("ext_expl.w_floor", config.ext_expl.w_floor),
        ("check.llogl_epsilon", config.check.llogl_epsilon),
        ("appendix.series_len", config.appendix.series_len as f64),
    ];
    for (name, v) in positives {
        if v.is_nan() || v <= 0.0 {
            bail!("config field {name} must be positive, got {v}");
        }
    }
    if config.simulate.z0.is_empty() || config.simulate.z0.iter().all(|&(_, c)| c == 0) {
        bail!("config field simulate.z0 must describe a nonempty population");
    }
    Ok(())
}

/// Resolve the model spec from the config (inline beats path).
pub fn resolve_spec(loaded: &ExperimentConfig, config_dir: &Path) -> Result<LeslieSpec> {
    let spec = match (&loaded.spec, &loaded.spec_path) {
        (Some(spec), _) => spec.clone(),
        (None, Some(rel)) => {
            let path = config_dir.join(rel);
            let text = std::fs::read_to_string(&path)
                .with_context(|| format!("cannot read spec file {}", path.display()))?;
            toml::from_str(&text)
                .with_context(|| format!("invalid spec file {}", path.display()))?
        }
        (None, None) => bail!("config needs either an inline [spec] or a spec_path"),
    };
    spec.validate()?;
    Ok(spec)
}
