use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometric relaxation of a per-age parameter towards a limiting value:
/// `p(x) = floor + (initial - floor) * rate^x`.
///
/// `rate = 0` gives a two-level profile (`initial` at age 0, `floor` after),
/// `initial = floor` gives a constant profile. `initial >= floor` yields a
/// nonincreasing profile (the shape monotonicity assumptions ask for);
/// increasing profiles (`initial < floor`) are accepted and left to the
/// checkers to flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgeProfile {
    pub initial: f64,
    pub floor: f64,
    pub rate: f64,
}

/// An age at which every admissible profile has numerically reached its
/// floor exactly: `rate^x` underflows to zero for any `rate < 1` well before
/// this (0.95^20000 ≈ 1e-446).
pub const FLOOR_PROBE_AGE: usize = 20_000;

impl AgeProfile {
    pub fn new(initial: f64, floor: f64, rate: f64) -> Result<Self> {
        let p = Self {
            initial,
            floor,
            rate,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn constant(value: f64) -> Self {
        Self {
            initial: value,
            floor: value,
            rate: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.initial.is_finite() || !self.floor.is_finite() || !self.rate.is_finite() {
            return Err(Error::InvalidSpec(
                "age profile parameters must be finite".into(),
            ));
        }
        if self.initial < 0.0 || self.floor < 0.0 {
            return Err(Error::InvalidSpec(
                "age profile values must be nonnegative".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.rate) {
            return Err(Error::InvalidSpec(format!(
                "age profile rate must lie in [0, 1), got {}",
                self.rate
            )));
        }
        Ok(())
    }

    /// Parameter value at age `x`.
    pub fn value(&self, x: usize) -> f64 {
        if self.rate == 0.0 {
            if x == 0 {
                self.initial
            } else {
                self.floor
            }
        } else {
            self.floor + (self.initial - self.floor) * self.rate.powi(x as i32)
        }
    }

    pub fn is_nonincreasing(&self) -> bool {
        self.initial >= self.floor
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.initial <= self.floor
    }

    /// Age from which the profile differs from its floor by less than `tol`.
    pub fn convergence_age(&self, tol: f64) -> usize {
        let gap = (self.initial - self.floor).abs();
        if gap <= tol || self.rate == 0.0 {
            return 1;
        }
        // gap * rate^x <= tol
        let x = ((tol / gap).ln() / self.rate.ln()).ceil();
        x.max(1.0) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_interpolates_geometrically() {
        let p = AgeProfile::new(1.0, 0.4, 0.5).unwrap();
        assert!((p.value(0) - 1.0).abs() < 1e-15);
        assert!((p.value(1) - 0.7).abs() < 1e-15);
        assert!((p.value(2) - 0.55).abs() < 1e-15);
        assert!((p.value(60) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn zero_rate_is_a_step_profile() {
        let p = AgeProfile::new(0.5, 0.0, 0.0).unwrap();
        assert_eq!(p.value(0), 0.5);
        assert_eq!(p.value(1), 0.0);
        assert_eq!(p.value(10), 0.0);
    }

    #[test]
    fn convergence_age_bounds_the_gap() {
        let p = AgeProfile::new(2.0, 1.0, 0.8).unwrap();
        let a = p.convergence_age(1e-9);
        assert!((p.value(a) - p.floor).abs() <= 1e-9);
        assert!((p.value(a.saturating_sub(2)) - p.floor).abs() > 1e-10);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(AgeProfile::new(1.0, 0.5, 1.0).is_err());
        assert!(AgeProfile::new(-1.0, 0.5, 0.5).is_err());
        assert!(AgeProfile::new(1.0, f64::NAN, 0.5).is_err());
    }
}
