use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::env_rng;

/// Law of the environmental process `(ξ_n)`.
///
/// Environments are referenced by their position in the spec's label list.
/// A Markov spec must be primitive (irreducible and aperiodic) and is always
/// started from its stationary distribution, so the realized sequence is
/// stationary and ergodic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvProcessSpec {
    Constant { label: String },
    Iid { weights: Vec<f64> },
    Markov { transition: Vec<Vec<f64>> },
}

impl EnvProcessSpec {
    pub fn validate(&self, labels: &[String]) -> Result<()> {
        let n = labels.len();
        match self {
            Self::Constant { label } => {
                if !labels.contains(label) {
                    return Err(Error::UnknownEnvironment(label.clone()));
                }
                Ok(())
            }
            Self::Iid { weights } => {
                if weights.len() != n {
                    return Err(Error::InvalidSpec(format!(
                        "iid weights have {} entries, spec has {} environments",
                        weights.len(),
                        n
                    )));
                }
                if weights.iter().any(|&w| !(0.0..=1.0).contains(&w)) {
                    return Err(Error::InvalidSpec("iid weights must lie in [0, 1]".into()));
                }
                let s: f64 = weights.iter().sum();
                if (s - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidSpec(format!(
                        "iid weights sum to {s}, expected 1 within 1e-12"
                    )));
                }
                Ok(())
            }
            Self::Markov { transition } => {
                if transition.len() != n || transition.iter().any(|r| r.len() != n) {
                    return Err(Error::InvalidSpec(format!(
                        "markov transition must be {n}x{n}"
                    )));
                }
                for row in transition {
                    if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                        return Err(Error::InvalidSpec(
                            "transition entries must lie in [0, 1]".into(),
                        ));
                    }
                    let s: f64 = row.iter().sum();
                    if (s - 1.0).abs() > 1e-12 {
                        return Err(Error::InvalidSpec(format!(
                            "transition row sums to {s}, expected 1 within 1e-12"
                        )));
                    }
                }
                if !is_primitive(transition) {
                    return Err(Error::InvalidSpec(
                        "markov transition must be irreducible and aperiodic".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn is_iid(&self) -> bool {
        matches!(self, Self::Constant { .. } | Self::Iid { .. })
    }

    /// Marginal law of `ξ_0` (stationary distribution for Markov specs),
    /// indexed like the label list.
    pub fn marginal(&self, labels: &[String]) -> Vec<f64> {
        match self {
            Self::Constant { label } => {
                let idx = labels.iter().position(|l| l == label).expect("validated");
                let mut m = vec![0.0; labels.len()];
                m[idx] = 1.0;
                m
            }
            Self::Iid { weights } => weights.clone(),
            Self::Markov { transition } => stationary_distribution(transition),
        }
    }

    /// Realize `(ξ_0, …, ξ_{length-1})` from the root seed's environment
    /// stream.
    pub fn generate(&self, labels: &[String], length: usize, seed: u64) -> Result<EnvSequence> {
        if length == 0 {
            return Err(Error::InvalidArgument(
                "environment sequence length must be >= 1".into(),
            ));
        }
        self.validate(labels)?;
        let mut rng = env_rng(seed);
        let mut ids = Vec::with_capacity(length);
        match self {
            Self::Constant { label } => {
                let idx = labels.iter().position(|l| l == label).unwrap();
                ids.resize(length, idx);
            }
            Self::Iid { weights } => {
                for _ in 0..length {
                    ids.push(sample_index(weights, rng.random()));
                }
            }
            Self::Markov { transition } => {
                let pi = stationary_distribution(transition);
                let mut state = sample_index(&pi, rng.random());
                ids.push(state);
                for _ in 1..length {
                    state = sample_index(&transition[state], rng.random());
                    ids.push(state);
                }
            }
        }
        Ok(EnvSequence { ids, seed })
    }
}

fn sample_index(weights: &[f64], u: f64) -> usize {
    let mut cum = 0.0;
    for (i, w) in weights.iter().enumerate() {
        cum += w;
        if u < cum {
            return i;
        }
    }
    weights.len() - 1
}

/// Stationary distribution of a validated stochastic matrix: solves
/// `π P = π, Σ π = 1` by Gaussian elimination with partial pivoting.
pub fn stationary_distribution(transition: &[Vec<f64>]) -> Vec<f64> {
    let n = transition.len();
    // unknowns π_j: rows j of (P^T - I) π = 0, last equation replaced by Σ π = 1
    let mut a = vec![vec![0.0; n + 1]; n];
    for j in 0..n - 1 {
        for i in 0..n {
            a[j][i] = transition[i][j] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for i in 0..n {
        a[n - 1][i] = 1.0;
    }
    a[n - 1][n] = 1.0;
    // elimination
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&r, &s| a[r][col].abs().partial_cmp(&a[s][col].abs()).unwrap())
            .unwrap();
        a.swap(col, piv);
        let p = a[col][col];
        for r in 0..n {
            if r != col && a[r][col] != 0.0 {
                let factor = a[r][col] / p;
                for c in col..=n {
                    a[r][c] -= factor * a[col][c];
                }
            }
        }
    }
    (0..n).map(|i| a[i][n] / a[i][i]).collect()
}

/// Wielandt primitivity test: some boolean power of the adjacency pattern up
/// to `(n-1)^2 + 1` is everywhere positive.
fn is_primitive(transition: &[Vec<f64>]) -> bool {
    let n = transition.len();
    let adj: Vec<Vec<bool>> = transition
        .iter()
        .map(|r| r.iter().map(|&p| p > 0.0).collect())
        .collect();
    let mut power = adj.clone();
    let limit = (n - 1) * (n - 1) + 1;
    for _ in 0..limit {
        if power.iter().all(|row| row.iter().all(|&b| b)) {
            return true;
        }
        let mut next = vec![vec![false; n]; n];
        for i in 0..n {
            for k in 0..n {
                if power[i][k] {
                    for j in 0..n {
                        next[i][j] |= adj[k][j];
                    }
                }
            }
        }
        power = next;
    }
    power.iter().all(|row| row.iter().all(|&b| b))
}

/// A realized environment sequence together with the seed it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvSequence {
    ids: Vec<usize>,
    seed: u64,
}

impl EnvSequence {
    pub fn from_ids(ids: Vec<usize>, seed: u64) -> Self {
        Self { ids, seed }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Environment id at time `n`, or the horizon error telling the caller to
    /// pre-generate a longer sequence.
    pub fn get(&self, n: usize) -> Result<usize> {
        self.ids.get(n).copied().ok_or(Error::HorizonExhausted {
            needed: n + 1,
            available: self.ids.len(),
        })
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels2() -> Vec<String> {
        vec!["a".into(), "b".into()]
    }

    #[test]
    fn constant_sequence() {
        let spec = EnvProcessSpec::Constant { label: "a".into() };
        let seq = spec.generate(&labels2(), 5, 0).unwrap();
        assert_eq!(seq.ids(), &[0, 0, 0, 0, 0]);
    }

    #[test]
    fn iid_frequencies_obey_lln() {
        let spec = EnvProcessSpec::Iid {
            weights: vec![0.5, 0.5],
        };
        let seq = spec.generate(&labels2(), 100_000, 11).unwrap();
        let freq0 = seq.ids().iter().filter(|&&e| e == 0).count() as f64 / 1e5;
        assert!((freq0 - 0.5).abs() < 0.01, "freq0 = {freq0}");
    }

    #[test]
    fn markov_frequencies_match_stationary_eigenvector() {
        // oracle: for P = [[1/2, 1/2], [1, 0]] the stationary row eigenvector
        // solves π0 = π0/2 + π1, π0 + π1 = 1 => π = (2/3, 1/3)
        let t = vec![vec![0.5, 0.5], vec![1.0, 0.0]];
        let pi = stationary_distribution(&t);
        assert!((pi[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((pi[1] - 1.0 / 3.0).abs() < 1e-12);
        let spec = EnvProcessSpec::Markov { transition: t };
        let seq = spec.generate(&labels2(), 100_000, 5).unwrap();
        let freq0 = seq.ids().iter().filter(|&&e| e == 0).count() as f64 / 1e5;
        assert!((freq0 - 2.0 / 3.0).abs() < 0.01, "freq0 = {freq0}");
    }

    #[test]
    fn non_ergodic_chains_are_rejected() {
        let periodic = EnvProcessSpec::Markov {
            transition: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        };
        assert!(periodic.validate(&labels2()).is_err());
        let reducible = EnvProcessSpec::Markov {
            transition: vec![vec![1.0, 0.0], vec![0.5, 0.5]],
        };
        assert!(reducible.validate(&labels2()).is_err());
    }

    #[test]
    fn sequences_are_reproducible() {
        let spec = EnvProcessSpec::Iid {
            weights: vec![0.3, 0.7],
        };
        let a = spec.generate(&labels2(), 64, 99).unwrap();
        let b = spec.generate(&labels2(), 64, 99).unwrap();
        assert_eq!(a, b);
        let c = spec.generate(&labels2(), 64, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn horizon_errors_are_informative() {
        let spec = EnvProcessSpec::Constant { label: "a".into() };
        let seq = spec.generate(&labels2(), 3, 0).unwrap();
        match seq.get(5) {
            Err(Error::HorizonExhausted { needed, available }) => {
                assert_eq!(needed, 6);
                assert_eq!(available, 3);
            }
            other => panic!("expected horizon error, got {other:?}"),
        }
    }
}
