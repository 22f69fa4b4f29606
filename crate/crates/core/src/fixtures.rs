//! Bundled model specs used by tests, experiments and the CLI.
//!
//! Each constructor documents what the fixture is for and which checks it is
//! expected to pass or fail. Numeric fixtures that violate positivity floors
//! (zero survival) are kept on purpose: they have closed-form growth data and
//! exercise the semigroup machinery exactly.

use crate::model::{AgeProfile, EnvProcessSpec, LeslieSpec, OffspringFamily};

/// Two-age numeric toy: `F` uniform on `{1, 2}` at age 0 and `F ≡ 1` after,
/// survival `(0.5, 0, 0, …)`, constant environment. Mean data
/// `f = (1.5, 1, 1, …)`, `s = (0.5, 0, …)`, so the reachable ages are
/// `{0, 1}` and the growth rate is the Perron root of
/// `[[1.5, 0.5], [1.0, 0]]`. Fails the positivity floor (`s_1 = 0`);
/// fixture-only.
pub fn l2toy() -> LeslieSpec {
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
    .expect("l2toy fixture is structurally valid")
}

/// Deterministic doubling: `F ≡ 1`, `s ≡ 1`. Every individual spawns one
/// newborn and survives, so `‖Z_n‖ = 2^n ‖Z_0‖`, `h ≡ 1`, `λ = 2` and
/// `W_n ≡ 1`. The biased law coincides with the unbiased one.
pub fn deterministic_unit() -> LeslieSpec {
    LeslieSpec::new(
        vec!["e0".into()],
        OffspringFamily::BoundedSupport {
            tables: vec![vec![vec![0.0, 1.0]]],
        },
        vec![AgeProfile::constant(1.0)],
        EnvProcessSpec::Constant { label: "e0".into() },
    )
    .expect("deterministic fixture is structurally valid")
}

/// Constant fertility mean and survival at every age, constant environment:
/// `h ≡ 1` and `λ = f + s` in closed form.
pub fn constant_rates(f: f64, s: f64) -> LeslieSpec {
    LeslieSpec::new(
        vec!["e0".into()],
        OffspringFamily::GeometricTail {
            mean: vec![AgeProfile::constant(f)],
        },
        vec![AgeProfile::constant(s)],
        EnvProcessSpec::Constant { label: "e0".into() },
    )
    .expect("constant-rate fixture is structurally valid")
}

/// Pure-birth i.i.d. fixture: no survival, fertility mean 1 or 4 with equal
/// probability. The growth rate has the closed form
/// `log λ = E[log f_{0,ξ}] = ½ ln 4 = ln 2`.
pub fn pure_birth_iid() -> LeslieSpec {
    LeslieSpec::new(
        vec!["lean".into(), "fat".into()],
        OffspringFamily::GeometricTail {
            mean: vec![AgeProfile::constant(1.0), AgeProfile::constant(4.0)],
        },
        vec![AgeProfile::constant(0.0), AgeProfile::constant(0.0)],
        EnvProcessSpec::Iid {
            weights: vec![0.5, 0.5],
        },
    )
    .expect("pure-birth fixture is structurally valid")
}

/// Main supercritical geometric-tail fixture: two i.i.d. environments,
/// nonincreasing profiles with strictly positive floors. Growth rate ~1.15,
/// so 50 generations stay at desk scale while survival stays well above 10%.
/// Passes the shape assumptions, the L log L criterion and the second-moment
/// condition.
pub fn geo_supercritical() -> LeslieSpec {
    LeslieSpec::new(
        vec!["good".into(), "bad".into()],
        OffspringFamily::GeometricTail {
            mean: vec![
                AgeProfile {
                    initial: 0.86,
                    floor: 0.62,
                    rate: 0.6,
                },
                AgeProfile {
                    initial: 0.68,
                    floor: 0.48,
                    rate: 0.6,
                },
            ],
        },
        vec![
            AgeProfile {
                initial: 0.50,
                floor: 0.35,
                rate: 0.6,
            },
            AgeProfile {
                initial: 0.42,
                floor: 0.30,
                rate: 0.6,
            },
        ],
        EnvProcessSpec::Iid {
            weights: vec![0.5, 0.5],
        },
    )
    .expect("supercritical geometric fixture is structurally valid")
}

/// Slow-growth geometric fixture (growth rate ~1.05) for long horizons:
/// extinction/explosion runs to generation 100 and spine statistics to 200
/// remain cheap. Same qualitative properties as [`geo_supercritical`].
pub fn geo_slow_growth() -> LeslieSpec {
    LeslieSpec::new(
        vec!["good".into(), "bad".into()],
        OffspringFamily::GeometricTail {
            mean: vec![
                AgeProfile {
                    initial: 0.76,
                    floor: 0.585,
                    rate: 0.6,
                },
                AgeProfile {
                    initial: 0.66,
                    floor: 0.495,
                    rate: 0.6,
                },
            ],
        },
        vec![
            AgeProfile {
                initial: 0.43,
                floor: 0.31,
                rate: 0.6,
            },
            AgeProfile {
                initial: 0.37,
                floor: 0.27,
                rate: 0.6,
            },
        ],
        EnvProcessSpec::Iid {
            weights: vec![0.5, 0.5],
        },
    )
    .expect("slow-growth fixture is structurally valid")
}

/// Subcritical geometric fixture: growth rate ~0.75, extinction is almost
/// sure. Used to exercise refusal paths and extinction statistics.
pub fn geo_subcritical() -> LeslieSpec {
    LeslieSpec::new(
        vec!["good".into(), "bad".into()],
        OffspringFamily::GeometricTail {
            mean: vec![
                AgeProfile {
                    initial: 0.50,
                    floor: 0.38,
                    rate: 0.6,
                },
                AgeProfile {
                    initial: 0.40,
                    floor: 0.30,
                    rate: 0.6,
                },
            ],
        },
        vec![
            AgeProfile {
                initial: 0.30,
                floor: 0.22,
                rate: 0.6,
            },
            AgeProfile {
                initial: 0.25,
                floor: 0.18,
                rate: 0.6,
            },
        ],
        EnvProcessSpec::Iid {
            weights: vec![0.5, 0.5],
        },
    )
    .expect("subcritical fixture is structurally valid")
}

/// Bounded-support fixture with binomial-shaped tables, two i.i.d.
/// environments. Belongs to the bounded class; used for exhaustive
/// enumeration checks alongside [`l2toy`].
pub fn bs_binomial() -> LeslieSpec {
    LeslieSpec::new(
        vec!["good".into(), "bad".into()],
        OffspringFamily::BoundedSupport {
            tables: vec![
                vec![
                    vec![0.16, 0.48, 0.36],
                    vec![0.25, 0.50, 0.25],
                    vec![0.36, 0.48, 0.16],
                ],
                vec![
                    vec![0.25, 0.50, 0.25],
                    vec![0.36, 0.48, 0.16],
                    vec![0.49, 0.42, 0.09],
                ],
            ],
        },
        vec![
            AgeProfile {
                initial: 0.45,
                floor: 0.30,
                rate: 0.5,
            },
            AgeProfile {
                initial: 0.40,
                floor: 0.25,
                rate: 0.5,
            },
        ],
        EnvProcessSpec::Iid {
            weights: vec![0.5, 0.5],
        },
    )
    .expect("bounded-support fixture is structurally valid")
}

/// Poly-tail fixture with exponents rising from 2.6 to 3.2: passes the
/// L log L criterion and the second-moment condition.
pub fn polytail_a5() -> LeslieSpec {
    LeslieSpec::new(
        vec!["good".into(), "bad".into()],
        OffspringFamily::PolyTail {
            delta: vec![
                AgeProfile {
                    initial: 2.6,
                    floor: 3.2,
                    rate: 0.5,
                },
                AgeProfile {
                    initial: 2.8,
                    floor: 3.4,
                    rate: 0.5,
                },
            ],
        },
        vec![
            AgeProfile {
                initial: 0.40,
                floor: 0.28,
                rate: 0.5,
            },
            AgeProfile {
                initial: 0.34,
                floor: 0.24,
                rate: 0.5,
            },
        ],
        EnvProcessSpec::Iid {
            weights: vec![0.5, 0.5],
        },
    )
    .expect("poly-tail fixture is structurally valid")
}

/// Poly-tail fixture with exponent 1.5 everywhere: finite mean, passes the
/// L log L criterion, but the second moment is infinite.
pub fn polytail_l2_fail() -> LeslieSpec {
    LeslieSpec::new(
        vec!["e0".into()],
        OffspringFamily::PolyTail {
            delta: vec![AgeProfile::constant(1.5)],
        },
        vec![AgeProfile {
            initial: 0.40,
            floor: 0.28,
            rate: 0.5,
        }],
        EnvProcessSpec::Constant { label: "e0".into() },
    )
    .expect("poly-tail fixture is structurally valid")
}

/// Poly-tail fixture with exponent 0.9: the newborn mean diverges and the
/// L log L series diverge; the checkers must flag it, not hang.
pub fn polytail_divergent() -> LeslieSpec {
    LeslieSpec::new(
        vec!["e0".into()],
        OffspringFamily::PolyTail {
            delta: vec![AgeProfile::constant(0.9)],
        },
        vec![AgeProfile {
            initial: 0.40,
            floor: 0.28,
            rate: 0.5,
        }],
        EnvProcessSpec::Constant { label: "e0".into() },
    )
    .expect("poly-tail fixture is structurally valid")
}

/// Poisson fertility: super-exponential tails, so it belongs to none of the
/// three tail classes; the direct L log L criterion still passes.
pub fn poisson_unclassified() -> LeslieSpec {
    LeslieSpec::new(
        vec!["good".into(), "bad".into()],
        OffspringFamily::Poisson {
            mean: vec![
                AgeProfile {
                    initial: 0.90,
                    floor: 0.65,
                    rate: 0.6,
                },
                AgeProfile {
                    initial: 0.70,
                    floor: 0.50,
                    rate: 0.6,
                },
            ],
        },
        vec![
            AgeProfile {
                initial: 0.45,
                floor: 0.32,
                rate: 0.6,
            },
            AgeProfile {
                initial: 0.38,
                floor: 0.27,
                rate: 0.6,
            },
        ],
        EnvProcessSpec::Iid {
            weights: vec![0.5, 0.5],
        },
    )
    .expect("poisson fixture is structurally valid")
}

/// Two-state Markov environment (stationary distribution (2/3, 1/3)) over the
/// slow-growth geometric rates. The extinction/explosion proposition does not
/// apply (environment not i.i.d.); checkers must report that.
pub fn markov_two_state() -> LeslieSpec {
    LeslieSpec::new(
        vec!["good".into(), "bad".into()],
        OffspringFamily::GeometricTail {
            mean: vec![
                AgeProfile {
                    initial: 0.80,
                    floor: 0.60,
                    rate: 0.6,
                },
                AgeProfile {
                    initial: 0.68,
                    floor: 0.50,
                    rate: 0.6,
                },
            ],
        },
        vec![
            AgeProfile {
                initial: 0.45,
                floor: 0.32,
                rate: 0.6,
            },
            AgeProfile {
                initial: 0.38,
                floor: 0.27,
                rate: 0.6,
            },
        ],
        EnvProcessSpec::Markov {
            transition: vec![vec![0.5, 0.5], vec![1.0, 0.0]],
        },
    )
    .expect("markov fixture is structurally valid")
}
