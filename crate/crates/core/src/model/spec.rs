use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::env::{EnvProcessSpec, EnvSequence};
use crate::model::offspring::OffspringFamily;
use crate::model::profile::AgeProfile;
use crate::rng::SimRng;
use rand::Rng;

/// Full description of an age-structured branching model in a random
/// environment: per-environment newborn laws `F_{x,e}`, survival
/// probabilities `s_{x,e}` and the environmental process.
///
/// An age-`x` individual in environment `e` spawns `F_{x,e}` newborns (age 0)
/// and survives to age `x+1` with probability `s_{x,e}`, independently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeslieSpec {
    pub environments: Vec<String>,
    pub fertility: OffspringFamily,
    /// Survival probability profiles, one per environment.
    pub survival: Vec<AgeProfile>,
    pub env_process: EnvProcessSpec,
}

impl LeslieSpec {
    pub fn new(
        environments: Vec<String>,
        fertility: OffspringFamily,
        survival: Vec<AgeProfile>,
        env_process: EnvProcessSpec,
    ) -> Result<Self> {
        let spec = Self {
            environments,
            fertility,
            survival,
            env_process,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Structural validation. Assumption-level conditions (positivity floors,
    /// monotonicity, moments) are verdicts of the checkers, not construction
    /// errors, so degenerate numeric fixtures stay constructible.
    pub fn validate(&self) -> Result<()> {
        if self.environments.is_empty() {
            return Err(Error::InvalidSpec(
                "at least one environment is required".into(),
            ));
        }
        for (i, l) in self.environments.iter().enumerate() {
            if self.environments[..i].contains(l) {
                return Err(Error::InvalidSpec(format!(
                    "duplicate environment label `{l}`"
                )));
            }
        }
        let n = self.environments.len();
        self.fertility.validate(n)?;
        if self.survival.len() != n {
            return Err(Error::InvalidSpec(format!(
                "survival declares {} environment profiles, spec has {} environments",
                self.survival.len(),
                n
            )));
        }
        for p in &self.survival {
            p.validate()?;
            if p.initial > 1.0 || p.floor > 1.0 {
                return Err(Error::InvalidSpec(
                    "survival profiles are probabilities and must stay <= 1".into(),
                ));
            }
        }
        self.env_process.validate(&self.environments)?;
        Ok(())
    }

    pub fn n_envs(&self) -> usize {
        self.environments.len()
    }

    pub fn env_id(&self, label: &str) -> Result<usize> {
        self.environments
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownEnvironment(label.to_string()))
    }

    /// Mean newborn count `f_{x,e}`.
    pub fn fertility_mean(&self, x: usize, e: usize) -> f64 {
        self.fertility.mean(x, e)
    }

    /// Survival probability `s_{x,e}`.
    pub fn survival(&self, x: usize, e: usize) -> f64 {
        self.survival[e].value(x)
    }

    /// Expected offspring measure mass `f_{x,e} + s_{x,e}`.
    pub fn mean_offspring_total(&self, x: usize, e: usize) -> f64 {
        self.fertility_mean(x, e) + self.survival(x, e)
    }

    /// Joint law of one reproduction event:
    /// `P[F_{x,e} = k, S_{x,e} = σ] = P[F = k] · P[S = σ]`.
    pub fn offspring_pmf(&self, x: usize, e: usize, k: u64, sigma: bool) -> f64 {
        let s = self.survival(x, e);
        self.fertility.pmf(x, e, k) * if sigma { s } else { 1.0 - s }
    }

    /// As [`offspring_pmf`](Self::offspring_pmf) but resolving an environment
    /// label, with a spec error for unknown labels.
    pub fn offspring_pmf_by_label(
        &self,
        x: usize,
        label: &str,
        k: u64,
        sigma: bool,
    ) -> Result<f64> {
        let e = self.env_id(label)?;
        Ok(self.offspring_pmf(x, e, k, sigma))
    }

    /// Draw one reproduction event `(newborns, survived)`.
    pub fn sample_offspring(&self, x: usize, e: usize, rng: &mut SimRng) -> (u64, bool) {
        let k = self.fertility.sample(x, e, rng);
        let sigma = rng.random::<f64>() < self.survival(x, e);
        (k, sigma)
    }

    /// Parameter-level certificate of stochastic monotonicity in age for both
    /// fertility and survival (shape assumption ii).
    pub fn is_parametrically_monotone(&self) -> bool {
        self.fertility.is_parametrically_monotone()
            && self.survival.iter().all(|p| p.is_nonincreasing())
    }

    /// Age past which every per-age parameter sits at its floor within `tol`.
    pub fn convergence_age(&self, tol: f64) -> usize {
        let s = self
            .survival
            .iter()
            .map(|p| p.convergence_age(tol))
            .max()
            .unwrap_or(1);
        s.max(self.fertility.convergence_age(tol))
    }

    /// Marginal law of `ξ_0` over environment ids.
    pub fn env_marginal(&self) -> Vec<f64> {
        self.env_process.marginal(&self.environments)
    }

    /// Realize an environment sequence of `length` labels from `seed`.
    pub fn generate_envs(&self, length: usize, seed: u64) -> Result<EnvSequence> {
        self.env_process.generate(&self.environments, length, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replicate_rng;

    /// F uniform on {1, 2} at age 0, F ≡ 1 afterwards; s = (0.5, 0, 0, ...).
    fn toy() -> LeslieSpec {
        LeslieSpec::new(
            vec!["e0".into()],
            OffspringFamily::BoundedSupport {
                tables: vec![vec![vec![0.0, 0.5, 0.5], vec![0.0, 1.0]]],
            },
            vec![AgeProfile {
                initial: 0.5,
                floor: 0.0,
                rate: 0.0,
            }],
            EnvProcessSpec::Constant { label: "e0".into() },
        )
        .unwrap()
    }

    #[test]
    fn joint_pmf_is_a_product() {
        let spec = toy();
        // P[F=2]·P[S=1] = 0.5 · 0.5
        assert!((spec.offspring_pmf(0, 0, 2, true) - 0.25).abs() < 1e-15);
        // factorization on an enumerable grid
        for x in 0..4 {
            for k in 0..8u64 {
                for sigma in [false, true] {
                    let joint = spec.offspring_pmf(x, 0, k, sigma);
                    let s = spec.survival(x, 0);
                    let marg = spec.fertility.pmf(x, 0, k) * if sigma { s } else { 1.0 - s };
                    assert_eq!(joint, marg);
                }
            }
        }
    }

    #[test]
    fn joint_pmf_normalizes() {
        let spec = toy();
        for x in 0..3 {
            let total: f64 = (0..64u64)
                .flat_map(|k| [(k, false), (k, true)])
                .map(|(k, s)| spec.offspring_pmf(x, 0, k, s))
                .sum();
            assert!((total - 1.0).abs() < 1e-12, "x = {x}: total = {total}");
        }
    }

    #[test]
    fn unknown_label_is_a_spec_error() {
        let spec = toy();
        assert!(matches!(
            spec.offspring_pmf_by_label(0, "nope", 1, true),
            Err(Error::UnknownEnvironment(_))
        ));
        assert!((spec.offspring_pmf_by_label(0, "e0", 2, true).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn degenerate_law_is_deterministic() {
        let spec = LeslieSpec::new(
            vec!["e".into()],
            OffspringFamily::BoundedSupport {
                tables: vec![vec![vec![0.0, 1.0]]],
            },
            vec![AgeProfile::constant(1.0)],
            EnvProcessSpec::Constant { label: "e".into() },
        )
        .unwrap();
        let mut rng = replicate_rng(3, 0);
        for _ in 0..32 {
            assert_eq!(spec.sample_offspring(0, 0, &mut rng), (1, true));
        }
    }

    #[test]
    fn joint_sampler_matches_pmf_within_4_sigma() {
        let spec = toy();
        let n = 100_000u64;
        let mut rng = replicate_rng(17, 0);
        let mut cells = std::collections::BTreeMap::<(u64, bool), u64>::new();
        for _ in 0..n {
            let (k, s) = spec.sample_offspring(0, 0, &mut rng);
            *cells.entry((k, s)).or_insert(0) += 1;
        }
        for k in 0..4u64 {
            for sigma in [false, true] {
                let p = spec.offspring_pmf(0, 0, k, sigma);
                let freq = cells.get(&(k, sigma)).copied().unwrap_or(0) as f64 / n as f64;
                let s4 = 4.0 * (p * (1.0 - p) / n as f64).sqrt();
                assert!((freq - p).abs() <= s4 + 1e-9, "cell ({k},{sigma})");
            }
        }
    }

    #[test]
    fn sampler_is_reproducible() {
        let spec = toy();
        let draw = |seed| -> Vec<(u64, bool)> {
            let mut rng = replicate_rng(seed, 4);
            (0..16)
                .map(|_| spec.sample_offspring(0, 0, &mut rng))
                .collect()
        };
        assert_eq!(draw(8), draw(8));
        assert_ne!(draw(8), draw(9));
    }

    #[test]
    fn structural_validation_catches_mismatches() {
        let bad = LeslieSpec::new(
            vec!["a".into(), "a".into()],
            OffspringFamily::GeometricTail {
                mean: vec![AgeProfile::constant(1.0), AgeProfile::constant(1.0)],
            },
            vec![AgeProfile::constant(0.5), AgeProfile::constant(0.5)],
            EnvProcessSpec::Iid {
                weights: vec![0.5, 0.5],
            },
        );
        assert!(bad.is_err());
        let bad_survival = LeslieSpec::new(
            vec!["a".into()],
            OffspringFamily::GeometricTail {
                mean: vec![AgeProfile::constant(1.0)],
            },
            vec![AgeProfile::constant(1.5)],
            EnvProcessSpec::Constant { label: "a".into() },
        );
        assert!(bad_survival.is_err());
    }
}
