//! Small numeric helpers: log-domain utilities and classical special functions
//! needed by the checkers. Accuracy targets are ~1e-12, far below every
//! tolerance used elsewhere in the crate.

/// `log⁺(t) = max(ln t, 0)`, with `log⁺(0) = 0`.
pub fn log_plus(t: f64) -> f64 {
    if t <= 1.0 {
        0.0
    } else {
        t.ln()
    }
}

/// `log(exp(a) + exp(b))` without overflow.
pub fn logsumexp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY && b == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if a > b {
        a + (b - a).exp().ln_1p()
    } else {
        b + (a - b).exp().ln_1p()
    }
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function, Lanczos approximation (g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection formula
        let pi = std::f64::consts::PI;
        (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let mut acc = LANCZOS_COEF[0];
        for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
            acc += c / (x + i as f64);
        }
        let t = x + LANCZOS_G + 0.5;
        0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
    }
}

/// Regularized upper incomplete gamma `Q(s, x) = Γ(s, x)/Γ(s)` for `s > 0`,
/// `x >= 0`: series for the lower part when `x < s + 1`, Lentz continued
/// fraction otherwise.
pub fn gamma_q(s: f64, x: f64) -> f64 {
    assert!(s > 0.0 && x >= 0.0, "gamma_q needs s > 0, x >= 0");
    if x == 0.0 {
        return 1.0;
    }
    let log_prefactor = -x + s * x.ln() - ln_gamma(s);
    if x < s + 1.0 {
        // P(s,x) by series, Q = 1 - P
        let mut term = 1.0 / s;
        let mut sum = term;
        let mut n = 1.0;
        while term.abs() > sum.abs() * 1e-16 {
            term *= x / (s + n);
            sum += term;
            n += 1.0;
        }
        1.0 - sum * log_prefactor.exp()
    } else {
        // Q(s,x) by continued fraction (modified Lentz)
        let tiny = 1e-300;
        let mut b = x + 1.0 - s;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -(i as f64) * (i as f64 - s);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        log_prefactor.exp() * h
    }
}

/// Unregularized upper incomplete gamma `Γ(s, x)`.
pub fn upper_gamma(s: f64, x: f64) -> f64 {
    gamma_q(s, x) * ln_gamma(s).exp()
}

/// Riemann zeta `ζ(s)` for `s > 1`, Euler-Maclaurin with N = 64 and Bernoulli
/// corrections through B8.
pub fn zeta(s: f64) -> f64 {
    assert!(s > 1.0, "zeta requires s > 1 (got {s})");
    let n = 64.0_f64;
    let mut sum = 0.0;
    for k in 1..=64u64 {
        sum += (k as f64).powf(-s);
    }
    sum += n.powf(1.0 - s) / (s - 1.0);
    sum -= 0.5 * n.powf(-s);
    // B2/2! s N^{-s-1}
    sum += s / 12.0 * n.powf(-s - 1.0);
    // B4/4! s(s+1)(s+2) N^{-s-3}
    sum -= s * (s + 1.0) * (s + 2.0) / 720.0 * n.powf(-s - 3.0);
    // B6/6! s..(s+4) N^{-s-5}
    sum += s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) / 30_240.0 * n.powf(-s - 5.0);
    // B8/8! s..(s+6) N^{-s-7}
    sum -= s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) * (s + 5.0) * (s + 6.0) / 1_209_600.0
        * n.powf(-s - 7.0);
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(3.0) - 2.0f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
        assert!((ln_gamma(1.0)).abs() < 1e-13);
        // Γ(5.5) = 52.34277778455352
        assert!((ln_gamma(5.5) - 52.342_777_784_553_52f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zeta_known_values() {
        let pi = std::f64::consts::PI;
        assert!((zeta(2.0) - pi * pi / 6.0).abs() < 1e-12);
        assert!((zeta(3.0) - 1.202_056_903_159_594_3).abs() < 1e-12);
        assert!((zeta(1.5) - 2.612_375_348_685_488).abs() < 1e-12);
        assert!((zeta(4.0) - pi.powi(4) / 90.0).abs() < 1e-12);
    }

    #[test]
    fn zeta_matches_partial_sums_for_large_s() {
        // direct summation converges quickly for s = 6
        let direct: f64 = (1..200_000u64).map(|k| (k as f64).powf(-6.0)).sum();
        assert!((zeta(6.0) - direct).abs() < 1e-12);
    }

    #[test]
    fn gamma_q_matches_closed_forms() {
        // integer s: Q(n, x) = e^{-x} Σ_{k<n} x^k/k!
        let poisson_q = |n: u32, x: f64| -> f64 {
            let mut term = 1.0;
            let mut sum = 0.0;
            for k in 0..n {
                if k > 0 {
                    term *= x / k as f64;
                }
                sum += term;
            }
            sum * (-x).exp()
        };
        for (n, x) in [(1u32, 0.5), (4, 3.45), (4, 9.0), (3, 1.0)] {
            let q = gamma_q(n as f64, x);
            assert!(
                (q - poisson_q(n, x)).abs() < 1e-12,
                "Q({n}, {x}) = {q} vs {}",
                poisson_q(n, x)
            );
        }
        // Q(1/2, x) = erfc(sqrt(x)); erfc(1) = 0.15729920705028513
        assert!((gamma_q(0.5, 1.0) - 0.157_299_207_050_285_13).abs() < 1e-12);
        // upper_gamma at x = 0 is the full gamma
        assert!((upper_gamma(3.0, 0.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn logsumexp_handles_extremes() {
        assert_eq!(
            logsumexp(f64::NEG_INFINITY, f64::NEG_INFINITY),
            f64::NEG_INFINITY
        );
        let v = logsumexp(1234.0, 1232.0);
        assert!((v - (1234.0 + (1.0 + (-2.0f64).exp()).ln())).abs() < 1e-12);
    }

    #[test]
    fn log_plus_clamps_at_one() {
        assert_eq!(log_plus(0.5), 0.0);
        assert_eq!(log_plus(0.0), 0.0);
        assert!((log_plus(std::f64::consts::E) - 1.0).abs() < 1e-15);
    }
}
