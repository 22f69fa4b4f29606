use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::profile::AgeProfile;
use crate::numeric::zeta;
use crate::rng::SimRng;

/// Newborn-count distribution family `F_{x,e}`, one parameterization per
/// declared environment.
///
/// The four kinds cover the three tail classes used by the checkers plus a
/// super-exponential one that belongs to none of them:
/// - `BoundedSupport`: explicit pmf tables by age (the last table repeats for
///   all older ages), so `P[F > A] = 0` for a deterministic `A`;
/// - `GeometricTail`: exactly `P[F >= k] = q(x,e)^k`, parametrized by the mean
///   profile `f = q/(1-q)`;
/// - `PolyTail`: exactly `P[F >= k] = k^{-δ(x,e)}` for `k >= 1` (so `F >= 1`
///   almost surely), parametrized by the exponent profile;
/// - `Poisson`: mean profile `f(x,e)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OffspringFamily {
    /// `tables[e]` lists pmf tables by age; ages past the end reuse the last.
    BoundedSupport { tables: Vec<Vec<Vec<f64>>> },
    /// Mean profiles `f(x,e)`; `q = f/(1+f)`.
    GeometricTail { mean: Vec<AgeProfile> },
    /// Exponent profiles `δ(x,e) > 0`. The mean `ζ(δ)` is infinite when
    /// `δ <= 1`; such specs are constructible so the checkers can flag them.
    PolyTail { delta: Vec<AgeProfile> },
    /// Mean profiles `f(x,e)`.
    Poisson { mean: Vec<AgeProfile> },
}

impl OffspringFamily {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::BoundedSupport { .. } => "bounded_support",
            Self::GeometricTail { .. } => "geometric_tail",
            Self::PolyTail { .. } => "poly_tail",
            Self::Poisson { .. } => "poisson",
        }
    }

    pub fn validate(&self, n_envs: usize) -> Result<()> {
        let check_profiles = |ps: &Vec<AgeProfile>| -> Result<()> {
            if ps.len() != n_envs {
                return Err(Error::InvalidSpec(format!(
                    "fertility declares {} environment profiles, spec has {} environments",
                    ps.len(),
                    n_envs
                )));
            }
            for p in ps {
                p.validate()?;
            }
            Ok(())
        };
        match self {
            Self::BoundedSupport { tables } => {
                if tables.len() != n_envs {
                    return Err(Error::InvalidSpec(format!(
                        "fertility declares {} environment table sets, spec has {} environments",
                        tables.len(),
                        n_envs
                    )));
                }
                for per_env in tables {
                    if per_env.is_empty() {
                        return Err(Error::InvalidSpec(
                            "bounded-support fertility needs at least one table per environment"
                                .into(),
                        ));
                    }
                    for t in per_env {
                        if t.is_empty() {
                            return Err(Error::InvalidSpec("empty pmf table".into()));
                        }
                        if t.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                            return Err(Error::InvalidSpec(
                                "pmf entries must lie in [0, 1]".into(),
                            ));
                        }
                        let s: f64 = t.iter().sum();
                        if (s - 1.0).abs() > 1e-12 {
                            return Err(Error::InvalidSpec(format!(
                                "pmf table sums to {s}, expected 1 within 1e-12"
                            )));
                        }
                    }
                }
                Ok(())
            }
            Self::GeometricTail { mean } | Self::Poisson { mean } => check_profiles(mean),
            Self::PolyTail { delta } => {
                check_profiles(delta)?;
                for p in delta {
                    if p.initial <= 0.0 || p.floor <= 0.0 {
                        return Err(Error::InvalidSpec(
                            "poly-tail exponent profiles must stay positive".into(),
                        ));
                    }
                }
                Ok(())
            }
        }
    }

    fn bs_table(tables: &[Vec<Vec<f64>>], x: usize, e: usize) -> &[f64] {
        let per_env = &tables[e];
        &per_env[x.min(per_env.len() - 1)]
    }

    /// `f_{x,e} = E[F_{x,e}]` (`+∞` for a poly tail with exponent `<= 1`).
    pub fn mean(&self, x: usize, e: usize) -> f64 {
        match self {
            Self::BoundedSupport { tables } => Self::bs_table(tables, x, e)
                .iter()
                .enumerate()
                .map(|(k, p)| k as f64 * p)
                .sum(),
            Self::GeometricTail { mean } | Self::Poisson { mean } => mean[e].value(x),
            Self::PolyTail { delta } => {
                let d = delta[e].value(x);
                if d > 1.0 {
                    zeta(d)
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// `E[F_{x,e}^2]` (`+∞` where the series diverges).
    pub fn second_moment(&self, x: usize, e: usize) -> f64 {
        match self {
            Self::BoundedSupport { tables } => Self::bs_table(tables, x, e)
                .iter()
                .enumerate()
                .map(|(k, p)| (k as f64) * (k as f64) * p)
                .sum(),
            Self::GeometricTail { mean } => {
                let f = mean[e].value(x);
                let q = f / (1.0 + f);
                q * (1.0 + q) / ((1.0 - q) * (1.0 - q))
            }
            Self::Poisson { mean } => {
                let m = mean[e].value(x);
                m + m * m
            }
            Self::PolyTail { delta } => {
                let d = delta[e].value(x);
                // E F² = Σ (2k-1) P[F>=k] = 2ζ(δ-1) - ζ(δ)
                if d > 2.0 {
                    2.0 * zeta(d - 1.0) - zeta(d)
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// `P[F_{x,e} = k]`, exact for every kind (tail-derived for unbounded
    /// ones, never silently zero unless truly zero).
    pub fn pmf(&self, x: usize, e: usize, k: u64) -> f64 {
        match self {
            Self::BoundedSupport { tables } => {
                let t = Self::bs_table(tables, x, e);
                t.get(k as usize).copied().unwrap_or(0.0)
            }
            Self::GeometricTail { mean } => {
                let f = mean[e].value(x);
                let q = f / (1.0 + f);
                if q == 0.0 {
                    return if k == 0 { 1.0 } else { 0.0 };
                }
                q.powf(k as f64) * (1.0 - q)
            }
            Self::PolyTail { delta } => {
                let d = delta[e].value(x);
                if k == 0 {
                    0.0
                } else {
                    (k as f64).powf(-d) - ((k + 1) as f64).powf(-d)
                }
            }
            Self::Poisson { mean } => {
                let m = mean[e].value(x);
                if m == 0.0 {
                    return if k == 0 { 1.0 } else { 0.0 };
                }
                // exp(k ln m - m - ln k!)
                (k as f64 * m.ln() - m - crate::numeric::ln_gamma(k as f64 + 1.0)).exp()
            }
        }
    }

    /// `P[F_{x,e} >= k]`.
    pub fn tail(&self, x: usize, e: usize, k: u64) -> f64 {
        match self {
            Self::BoundedSupport { tables } => {
                let t = Self::bs_table(tables, x, e);
                t.iter().skip(k as usize).sum()
            }
            Self::GeometricTail { mean } => {
                let f = mean[e].value(x);
                let q = f / (1.0 + f);
                if q == 0.0 {
                    return if k == 0 { 1.0 } else { 0.0 };
                }
                q.powf(k as f64)
            }
            Self::PolyTail { delta } => {
                if k == 0 {
                    1.0
                } else {
                    (k as f64).powf(-delta[e].value(x))
                }
            }
            Self::Poisson { .. } => {
                if k == 0 {
                    return 1.0;
                }
                // super-exponential tail: direct summation terminates fast
                let mut s = 0.0;
                let mut j = k;
                loop {
                    let p = self.pmf(x, e, j);
                    s += p;
                    j += 1;
                    if (p < 1e-300 && j > k + 4) || j > k + 10_000 {
                        break;
                    }
                }
                s.min(1.0)
            }
        }
    }

    /// Largest `k` with `P[F = k] > 0` for bounded kinds, `None` otherwise.
    pub fn support_max(&self, x: usize, e: usize) -> Option<u64> {
        match self {
            Self::BoundedSupport { tables } => {
                let t = Self::bs_table(tables, x, e);
                Some(t.iter().rposition(|&p| p > 0.0).unwrap_or(0) as u64)
            }
            _ => None,
        }
    }

    /// Draw `F_{x,e}` by exact inversion.
    pub fn sample(&self, x: usize, e: usize, rng: &mut SimRng) -> u64 {
        match self {
            Self::BoundedSupport { tables } => {
                let t = Self::bs_table(tables, x, e);
                let u: f64 = rng.random();
                let mut cum = 0.0;
                for (k, p) in t.iter().enumerate() {
                    cum += p;
                    if u < cum {
                        return k as u64;
                    }
                }
                (t.len() - 1) as u64
            }
            Self::GeometricTail { mean } => {
                let f = mean[e].value(x);
                let q = f / (1.0 + f);
                if q == 0.0 {
                    return 0;
                }
                let u: f64 = rng.random();
                ((1.0 - u).ln() / q.ln()).floor() as u64
            }
            Self::PolyTail { delta } => {
                let d = delta[e].value(x);
                // u in (0, 1]; F = floor(u^{-1/δ})
                let u = 1.0 - rng.random::<f64>();
                let v = u.powf(-1.0 / d);
                if v >= 9.0e18 {
                    9_000_000_000_000_000_000
                } else {
                    (v.floor() as u64).max(1)
                }
            }
            Self::Poisson { mean } => {
                let m = mean[e].value(x);
                if m == 0.0 {
                    return 0;
                }
                let u: f64 = rng.random();
                let mut p = (-m).exp();
                let mut cum = p;
                let mut k = 0u64;
                while u >= cum && k < 100_000 {
                    k += 1;
                    p *= m / k as f64;
                    cum += p;
                }
                k
            }
        }
    }

    /// Draw from the size-biased law `P[F̂ = k] = k·P[F = k]/f`.
    ///
    /// Exact for every kind: table inversion for bounded support, `1 + G + G'`
    /// for the geometric tail, `1 + Poisson` for Poisson, cdf scan for the
    /// poly tail. Requires a finite mean.
    pub fn sample_size_biased(&self, x: usize, e: usize, rng: &mut SimRng) -> Result<u64> {
        let f = self.mean(x, e);
        if !f.is_finite() || f <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "size-biased sampling needs a finite positive mean, got {f}"
            )));
        }
        Ok(match self {
            Self::BoundedSupport { tables } => {
                let t = Self::bs_table(tables, x, e);
                let u: f64 = rng.random();
                let mut cum = 0.0;
                let mut last = 0;
                for (k, p) in t.iter().enumerate() {
                    if *p > 0.0 && k > 0 {
                        cum += k as f64 * p / f;
                        last = k;
                        if u < cum {
                            return Ok(k as u64);
                        }
                    }
                }
                last as u64
            }
            Self::GeometricTail { mean } => {
                let q = mean[e].value(x) / (1.0 + mean[e].value(x));
                let geom = |rng: &mut SimRng| -> u64 {
                    let u: f64 = rng.random();
                    ((1.0 - u).ln() / q.ln()).floor() as u64
                };
                1 + geom(rng) + geom(rng)
            }
            Self::Poisson { mean } => {
                let m = mean[e].value(x);
                let u: f64 = rng.random();
                let mut p = (-m).exp();
                let mut cum = p;
                let mut k = 0u64;
                while u >= cum && k < 100_000 {
                    k += 1;
                    p *= m / k as f64;
                    cum += p;
                }
                1 + k
            }
            Self::PolyTail { .. } => {
                let u: f64 = rng.random();
                let mut cum = 0.0;
                let mut k = 1u64;
                loop {
                    cum += k as f64 * self.pmf(x, e, k) / f;
                    if u < cum || k >= 1_000_000_000 {
                        return Ok(k);
                    }
                    k += 1;
                }
            }
        })
    }

    /// Parameter-level stochastic monotonicity in age (`F_{x+1,e} ≼ F_{x,e}`),
    /// the cheap certificate behind the `d = 1` coupling shortcut. The cdf
    /// grid re-verification lives in the checkers.
    pub fn is_parametrically_monotone(&self) -> bool {
        match self {
            Self::BoundedSupport { tables } => tables.iter().all(|per_env| {
                per_env.windows(2).all(|w| {
                    // cdf of the older age dominates pointwise
                    let kmax = w[0].len().max(w[1].len());
                    let cdf = |t: &[f64], k: usize| -> f64 { t.iter().take(k + 1).sum() };
                    (0..kmax).all(|k| cdf(&w[1], k) + 1e-12 >= cdf(&w[0], k))
                })
            }),
            Self::GeometricTail { mean } | Self::Poisson { mean } => {
                mean.iter().all(|p| p.is_nonincreasing())
            }
            Self::PolyTail { delta } => delta.iter().all(|p| p.is_nondecreasing()),
        }
    }

    /// Age past which the age profiles sit at their floors (1 for tables,
    /// which repeat their last entry).
    pub fn convergence_age(&self, tol: f64) -> usize {
        match self {
            Self::BoundedSupport { tables } => tables
                .iter()
                .map(|per_env| per_env.len())
                .max()
                .unwrap_or(1),
            Self::GeometricTail { mean } | Self::Poisson { mean } => mean
                .iter()
                .map(|p| p.convergence_age(tol))
                .max()
                .unwrap_or(1),
            Self::PolyTail { delta } => delta
                .iter()
                .map(|p| p.convergence_age(tol))
                .max()
                .unwrap_or(1),
        }
    }
}
