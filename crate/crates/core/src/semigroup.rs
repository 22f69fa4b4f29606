//! Exact quenched mean-operator computations on the reachable age window.
//!
//! The per-step mean operator of the model acts on functions as
//! `(M_e g)(x) = f_{x,e}·g(0) + s_{x,e}·g(x+1)` and on measures as the
//! transpose. Ages advance by at most one per step, so every finite-horizon
//! quantity is computed exactly on a finite window: the backward recursion
//! `m_{k,n}(x) = f_x·m_{k+1,n}(0) + s_x·m_{k+1,n}(x+1)` starts from a terminal
//! function on an auto-extended window and shrinks it by one per step — no
//! truncation error. Every vector carries a separate log magnitude and is
//! renormalized each step, so horizons far beyond the overflow range of
//! `λ^n` are safe.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{AgePopulation, EnvSequence, LeslieSpec};

/// Row data of one environment's mean operator on an age window `[0, A]`.
#[derive(Debug, Clone)]
pub struct MeanOperator {
    f: Vec<f64>,
    s: Vec<f64>,
}

impl MeanOperator {
    /// Materialize `M_e` on ages `0..=max_age`.
    pub fn on_window(spec: &LeslieSpec, e: usize, max_age: usize) -> Self {
        let f = (0..=max_age).map(|x| spec.fertility_mean(x, e)).collect();
        let s = (0..=max_age).map(|x| spec.survival(x, e)).collect();
        Self { f, s }
    }

    pub fn fertility(&self, x: usize) -> f64 {
        self.f[x]
    }

    pub fn survival(&self, x: usize) -> f64 {
        self.s[x]
    }

    /// `(M_e g)(x) = f_x·g(0) + s_x·g(x+1)` for `x` up to `g.len() - 2`.
    pub fn apply_to_function(&self, g: &[f64]) -> Vec<f64> {
        let out_len = g.len() - 1;
        (0..out_len)
            .map(|x| self.f[x] * g[0] + self.s[x] * g[x + 1])
            .collect()
    }

    /// In-place variant of [`apply_to_function`](Self::apply_to_function):
    /// shrinks `g` by one entry. Safe left-to-right because index `x` only
    /// reads the saved `g(0)` and the not-yet-written `g(x+1)`.
    fn apply_to_function_in_place(&self, g: &mut Vec<f64>) {
        let g0 = g[0];
        let out_len = g.len() - 1;
        for x in 0..out_len {
            g[x] = self.f[x] * g0 + self.s[x] * g[x + 1];
        }
        g.truncate(out_len);
    }

    /// `(μ M_e)(0) = Σ_x μ(x) f_x`, `(μ M_e)(x+1) = μ(x) s_x`.
    pub fn apply_to_measure(&self, mu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; mu.len() + 1];
        for (x, &w) in mu.iter().enumerate() {
            out[0] += w * self.f[x];
            out[x + 1] = w * self.s[x];
        }
        out
    }
}

fn operators_on_window(spec: &LeslieSpec, max_age: usize) -> Vec<MeanOperator> {
    (0..spec.n_envs())
        .map(|e| MeanOperator::on_window(spec, e, max_age))
        .collect()
}

/// Nonnegative values on an age window with sup exactly 1, plus the
/// accumulated natural-log magnitude. Ties for the sup resolve to the lowest
/// age, so `direction[0] = 1` whenever age 0 attains the sup.
#[derive(Debug, Clone, Serialize)]
pub struct LogNormalizedVector {
    pub direction: Vec<f64>,
    pub log_scale: f64,
}

/// Renormalize to sup = 1 (ties resolve to the lowest age) and return the
/// log of the removed scale.
fn renormalize_sup(values: &mut [f64]) -> Result<f64> {
    let mut sup = f64::NEG_INFINITY;
    let mut arg = 0;
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "vector entry {i} is {v}; entries must be finite and nonnegative"
            )));
        }
        if v > sup {
            sup = v;
            arg = i;
        }
    }
    if sup <= 0.0 {
        return Err(Error::InvalidArgument(
            "cannot renormalize a vector with sup <= 0".into(),
        ));
    }
    for v in values.iter_mut() {
        *v /= sup;
    }
    values[arg] = 1.0;
    Ok(sup.ln())
}

impl LogNormalizedVector {
    /// Largest age carried by the window.
    pub fn max_age(&self) -> usize {
        self.direction.len() - 1
    }

    /// Value at age `x`, un-logged.
    pub fn value(&self, x: usize) -> f64 {
        self.direction[x] * self.log_scale.exp()
    }

    pub fn is_nonincreasing(&self, tol: f64) -> bool {
        self.direction.windows(2).all(|w| w[1] <= w[0] + tol)
    }
}

/// Backward product `m_{k,n} = M_{ξ_k} ⋯ M_{ξ_{n-1}} · terminal`, exact on
/// `[0, window]`. The terminal function is evaluated on the auto-extended
/// window `[0, window + (n-k)]` and must be positive and bounded there.
/// `k = n` returns the renormalized terminal itself.
///
/// With `terminal ≡ 1` and nonincreasing profiles the sup sits at age 0, so
/// `log_scale` is `log ⫼M_{k,n}⫼`.
pub fn apply_backward<F: Fn(usize) -> f64>(
    spec: &LeslieSpec,
    envs: &EnvSequence,
    k: usize,
    n: usize,
    window: usize,
    terminal: F,
) -> Result<LogNormalizedVector> {
    if k > n {
        return Err(Error::InvalidArgument(format!(
            "need k <= n, got k = {k}, n = {n}"
        )));
    }
    if n > k {
        envs.get(n - 1)?;
    }
    let full = window + (n - k);
    let ops = operators_on_window(spec, full);
    let mut values: Vec<f64> = (0..=full).map(&terminal).collect();
    let mut log_scale = renormalize_sup(&mut values)?;
    for j in (k..n).rev() {
        let e = envs.get(j)?;
        ops[e].apply_to_function_in_place(&mut values);
        log_scale += renormalize_sup(&mut values)?;
    }
    Ok(LogNormalizedVector {
        direction: values,
        log_scale,
    })
}

/// `log ⫼M_{k,n}⫼ = log sup_x m_{k,n}(x)`, with the window sized so the sup
/// over the whole age axis is captured (profiles are constant past their
/// convergence age, hence so is `m_{k,n}`).
pub fn operator_norm_log(spec: &LeslieSpec, envs: &EnvSequence, k: usize, n: usize) -> Result<f64> {
    let window = spec.convergence_age(1e-14) + 1;
    let v = apply_backward(spec, envs, k, n, window, |_| 1.0)?;
    Ok(v.log_scale)
}

/// Harmonic profile at one time index: the uniform limit of
/// `m_{k,n}/‖m_{k,n}‖` on a window, its eigenvalue factor
/// `λ_k = ‖M_k h_{k+1}‖`, the horizon that achieved the tolerance and the
/// a-posteriori error bound (sup-difference between the last two horizons).
#[derive(Debug, Clone, Serialize)]
pub struct HarmonicProfile {
    pub k: usize,
    pub h: Vec<f64>,
    pub lambda: f64,
    pub horizon_used: usize,
    pub err_bound: f64,
}

impl HarmonicProfile {
    pub fn h_at(&self, x: usize) -> f64 {
        self.h[x]
    }
}

/// Harmonic profiles `h_0, …, h_{k_max}` for one realized environment
/// sequence, computed in a shared backward pass, plus the cumulative
/// eigenvalue logs `log λ_{0,k} = Σ_{i<k} log λ_i` for `k <= k_max`.
///
/// Profile `k` covers ages `[0, base_window + k]`: a population started
/// below `base_window` never outgrows that window.
#[derive(Debug, Clone)]
pub struct HarmonicSchedule {
    pub base_window: usize,
    pub profiles: Vec<HarmonicProfile>,
    log_lambda_cum: Vec<f64>,
}

impl HarmonicSchedule {
    pub fn k_max(&self) -> usize {
        self.profiles.len() - 1
    }

    pub fn profile(&self, k: usize) -> &HarmonicProfile {
        &self.profiles[k]
    }

    pub fn h(&self, k: usize, x: usize) -> f64 {
        self.profiles[k].h[x]
    }

    pub fn lambda(&self, k: usize) -> f64 {
        self.profiles[k].lambda
    }

    /// `log λ_{0,k}`, the log of the product of the first `k` factors.
    pub fn log_lambda_cum(&self, k: usize) -> f64 {
        self.log_lambda_cum[k]
    }

    pub fn max_err_bound(&self) -> f64 {
        self.profiles
            .iter()
            .map(|p| p.err_bound)
            .fold(0.0, f64::max)
    }
}

/// One backward sweep from horizon `n_horizon`, recording normalized
/// snapshots (and sup windows) at every `j <= k_max`.
fn schedule_pass(
    spec: &LeslieSpec,
    envs: &EnvSequence,
    k_max: usize,
    base_window: usize,
    conv_age: usize,
    n_horizon: usize,
) -> Result<Vec<Vec<f64>>> {
    envs.get(n_horizon - 1)?;
    // at time j we keep ages [0, base_window + j + conv_age + 2]
    let terminal_len = n_horizon + base_window + conv_age + 3;
    let ops = operators_on_window(spec, terminal_len);
    let mut v = vec![1.0; terminal_len];
    let mut snapshots: Vec<Vec<f64>> = vec![Vec::new(); k_max + 1];
    for j in (0..n_horizon).rev() {
        let e = envs.get(j)?;
        ops[e].apply_to_function_in_place(&mut v);
        renormalize_sup(&mut v)?;
        if j <= k_max {
            let keep = (base_window + j + conv_age + 3).min(v.len());
            snapshots[j] = v[..keep].to_vec();
        }
    }
    Ok(snapshots)
}

/// Build a [`HarmonicSchedule`]: the horizon grows adaptively until two
/// passes ten steps apart agree within `tol` in sup norm at every recorded
/// index. Fails with a horizon error if the environment sequence is too
/// short for the required accuracy.
pub fn harmonic_schedule(
    spec: &LeslieSpec,
    envs: &EnvSequence,
    k_max: usize,
    base_window: usize,
    tol: f64,
) -> Result<HarmonicSchedule> {
    if tol <= 0.0 {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let conv_age = spec.convergence_age(1e-14);
    let mut extra = 40usize;
    loop {
        let n1 = k_max + 1 + extra;
        let n2 = n1 + 10;
        let coarse = schedule_pass(spec, envs, k_max, base_window, conv_age, n1)?;
        let fine = schedule_pass(spec, envs, k_max, base_window, conv_age, n2)?;
        let mut max_diff = 0.0f64;
        let mut diffs = Vec::with_capacity(k_max + 1);
        for (c, f) in coarse.iter().zip(&fine) {
            let d = c
                .iter()
                .zip(f)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            diffs.push(d);
            max_diff = max_diff.max(d);
        }
        if max_diff < tol {
            return finalize_schedule(spec, envs, base_window, conv_age, n2, fine, diffs);
        }
        extra *= 2;
    }
}

fn finalize_schedule(
    spec: &LeslieSpec,
    envs: &EnvSequence,
    base_window: usize,
    conv_age: usize,
    horizon: usize,
    snapshots: Vec<Vec<f64>>,
    err_bounds: Vec<f64>,
) -> Result<HarmonicSchedule> {
    let k_max = snapshots.len() - 1;
    let ops = operators_on_window(spec, base_window + k_max + conv_age + 3);
    let mut profiles = Vec::with_capacity(k_max + 1);
    let mut log_lambda_cum = vec![0.0];
    for (j, snap) in snapshots.iter().enumerate() {
        // λ_j = sup (M_j h_{j+1}); with nonincreasing profiles the sup sits at
        // age 0 and equals f_{0,ξ_j} + s_{0,ξ_j} h_{j+1}(1).
        let lambda = if j < k_max {
            let e = envs.get(j)?;
            ops[e]
                .apply_to_function(&snapshots[j + 1])
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max)
        } else {
            f64::NAN
        };
        profiles.push(HarmonicProfile {
            k: j,
            h: snap[..=(base_window + j).min(snap.len() - 1)].to_vec(),
            lambda,
            horizon_used: horizon - j,
            err_bound: err_bounds[j],
        });
        if j < k_max {
            log_lambda_cum.push(log_lambda_cum[j] + profiles[j].lambda.ln());
        }
    }
    Ok(HarmonicSchedule {
        base_window,
        profiles,
        log_lambda_cum,
    })
}

/// Harmonic profile `h_k` on `[0, window]` with its eigenvalue factor `λ_k`.
pub fn harmonic_profile(
    spec: &LeslieSpec,
    envs: &EnvSequence,
    k: usize,
    window: usize,
    tol: f64,
) -> Result<HarmonicProfile> {
    let schedule = harmonic_schedule(spec, envs, k + 1, window, tol)?;
    let mut p = schedule.profiles[k].clone();
    p.h.truncate(window + 1);
    Ok(p)
}

/// Doeblin-type coupling data of a spec: per environment the minorization
/// measure is the point mass at age 0, `c(e) = inf_x f_{x,e}/(f_{x,e}+s_{x,e})`
/// and `d = 1` (valid under nonincreasing profiles), so `γ(e) = c(e)` and the
/// contraction rate is `η̃ = exp(E[log(1-γ(ξ_0))])`.
#[derive(Debug, Clone, Serialize)]
pub struct CouplingReport {
    pub per_env: Vec<EnvCoupling>,
    pub d: f64,
    pub eta_tilde: f64,
    pub gamma_min: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvCoupling {
    pub label: String,
    pub c: f64,
    pub gamma: f64,
}

impl CouplingReport {
    pub fn gamma_of(&self, e: usize) -> f64 {
        self.per_env[e].gamma
    }
}

/// Compute the closed-form coupling constants. Refuses when the parametric
/// monotonicity certificate fails, because the `d = 1` shortcut is then
/// unjustified.
pub fn coupling_constants(spec: &LeslieSpec) -> Result<CouplingReport> {
    if !spec.is_parametrically_monotone() {
        return Err(Error::MonotonicityViolated(
            "profiles are not nonincreasing in age; d = 1 is not valid for this spec".into(),
        ));
    }
    let mut scan: Vec<usize> = (0..=spec.convergence_age(1e-14) + 2).collect();
    scan.push(crate::model::FLOOR_PROBE_AGE);
    let marginal = spec.env_marginal();
    let mut per_env = Vec::with_capacity(spec.n_envs());
    let mut log_one_minus = 0.0;
    let mut gamma_min = f64::INFINITY;
    for e in 0..spec.n_envs() {
        let mut c = f64::INFINITY;
        for &x in &scan {
            let f = spec.fertility_mean(x, e);
            let s = spec.survival(x, e);
            let ratio = if f + s > 0.0 { f / (f + s) } else { 0.0 };
            c = c.min(ratio);
        }
        let gamma = c; // d = 1
        gamma_min = gamma_min.min(gamma);
        log_one_minus += marginal[e] * (1.0 - gamma).ln();
        per_env.push(EnvCoupling {
            label: spec.environments[e].clone(),
            c,
            gamma,
        });
    }
    Ok(CouplingReport {
        per_env,
        d: 1.0,
        eta_tilde: log_one_minus.exp(),
        gamma_min,
    })
}

/// Forward image `μ M_{k,n}` of a measure supported on `[0, len-1]` at time
/// `k`, renormalized to total mass 1 with the log mass carried separately.
fn forward_measure(
    spec: &LeslieSpec,
    envs: &EnvSequence,
    k: usize,
    n: usize,
    init: &[f64],
) -> Result<(Vec<f64>, f64)> {
    let ops = operators_on_window(spec, init.len() + (n - k) + 1);
    let mut w = init.to_vec();
    let mut log_mass = 0.0;
    let mass: f64 = w.iter().sum();
    if mass <= 0.0 {
        return Err(Error::InvalidArgument(
            "initial measure must have positive mass".into(),
        ));
    }
    for v in &mut w {
        *v /= mass;
    }
    log_mass += mass.ln();
    for j in k..n {
        let e = envs.get(j)?;
        let mut next = ops[e].apply_to_measure(&w);
        let m: f64 = next.iter().sum();
        if m <= 0.0 {
            return Err(Error::Inconsistency(format!(
                "mean mass vanished at step {j}; the spec has zero rows"
            )));
        }
        for v in &mut next {
            *v /= m;
        }
        log_mass += m.ln();
        w = next;
    }
    Ok((w, log_mass))
}

/// `log ‖δ_0 M_{0,k}‖` for `k = 0..=n` in one forward pass, without storing
/// the directions.
fn forward_mass_series(spec: &LeslieSpec, envs: &EnvSequence, n: usize) -> Result<Vec<f64>> {
    if n > 0 {
        envs.get(n - 1)?;
    }
    let ops = operators_on_window(spec, n + 1);
    let mut w = vec![1.0f64];
    let mut log_mass = 0.0;
    let mut out = Vec::with_capacity(n + 1);
    out.push(0.0);
    for j in 0..n {
        let e = envs.get(j)?;
        let mut next = ops[e].apply_to_measure(&w);
        let m: f64 = next.iter().sum();
        for v in &mut next {
            *v /= m;
        }
        log_mass += m.ln();
        w = next;
        out.push(log_mass);
    }
    Ok(out)
}

/// Renormalized quenched mean `π_n = Z_0 M_{0,n} / ‖Z_0 M_{0,n}‖` and
/// `log ‖Z_0 M_{0,n}‖`.
#[derive(Debug, Clone, Serialize)]
pub struct QuenchedMean {
    pub pi: Vec<f64>,
    pub log_mass: f64,
}

impl QuenchedMean {
    /// `π_n(f)`.
    pub fn apply<F: Fn(usize) -> f64>(&self, f: F) -> f64 {
        self.pi.iter().enumerate().map(|(x, &w)| w * f(x)).sum()
    }
}

/// Forward recursion for `π_n`, exact on `[0, max_age(Z_0) + n]`.
pub fn quenched_mean(
    spec: &LeslieSpec,
    envs: &EnvSequence,
    z0: &AgePopulation,
    n: usize,
) -> Result<QuenchedMean> {
    let series = quenched_mean_series(spec, envs, z0, n)?;
    Ok(series.into_iter().next_back().unwrap())
}

/// `π_k` and `log ‖Z_0 M_{0,k}‖` for every `k = 0..=n`.
pub fn quenched_mean_series(
    spec: &LeslieSpec,
    envs: &EnvSequence,
    z0: &AgePopulation,
    n: usize,
) -> Result<Vec<QuenchedMean>> {
    if z0.is_empty() {
        return Err(Error::InvalidArgument(
            "initial population must be nonempty".into(),
        ));
    }
    if n > 0 {
        envs.get(n - 1)?;
    }
    let base = z0.max_age().unwrap();
    let ops = operators_on_window(spec, base + n + 1);
    let mut w = vec![0.0; base + 1];
    for (x, c) in z0.iter() {
        w[x] = c as f64;
    }
    let mass: f64 = w.iter().sum();
    for v in &mut w {
        *v /= mass;
    }
    let mut log_mass = mass.ln();
    let mut out = Vec::with_capacity(n + 1);
    out.push(QuenchedMean {
        pi: w.clone(),
        log_mass,
    });
    for j in 0..n {
        let e = envs.get(j)?;
        let mut next = ops[e].apply_to_measure(&w);
        let m: f64 = next.iter().sum();
        for v in &mut next {
            *v /= m;
        }
        log_mass += m.ln();
        w = next;
        out.push(QuenchedMean {
            pi: w.clone(),
            log_mass,
        });
    }
    Ok(out)
}

/// Both sides of the semigroup contraction inequality for one tuple
/// `(k, n, x, y)`: the total-variation distance between `δ_x M_{k,n}` and the
/// `h_k(x)/h_k(y)`-scaled `δ_y M_{k,n}`, and the coupling bound
/// `(4/γ_{n-1}) Π_{i=k}^{n-1} (1-γ_i) ‖δ_x M_{k,n}‖`. Both are returned in
/// log scale (`-∞` for an exactly zero distance); the caller asserts
/// `lhs <= rhs`.
#[derive(Debug, Clone, Serialize)]
pub struct ErgodicityGap {
    pub log_lhs: f64,
    pub log_rhs: f64,
    /// `log ‖δ_x M_{k,n}‖`, for decay measurements relative to the mass.
    pub log_mass_x: f64,
}

pub fn ergodicity_gap(
    spec: &LeslieSpec,
    envs: &EnvSequence,
    k: usize,
    n: usize,
    x: usize,
    y: usize,
) -> Result<ErgodicityGap> {
    if k > n {
        return Err(Error::InvalidArgument(format!(
            "need k <= n, got k = {k}, n = {n}"
        )));
    }
    let coupling = coupling_constants(spec)?;
    let profile = harmonic_profile(spec, envs, k, x.max(y), 1e-11)?;
    let ratio = profile.h_at(x) / profile.h_at(y);

    let len = x.max(y) + 1;
    let mut init_x = vec![0.0; len];
    init_x[x] = 1.0;
    let mut init_y = vec![0.0; len];
    init_y[y] = 1.0;
    let (wx, log_mx) = forward_measure(spec, envs, k, n, &init_x)?;
    let (wy, log_my) = forward_measure(spec, envs, k, n, &init_y)?;

    // common scale: δ_x M has log mass log_mx, the scaled δ_y M has
    // log_my + ln ratio
    let a = log_mx;
    let b = log_my + ratio.ln();
    let top = a.max(b);
    let fa = (a - top).exp();
    let fb = (b - top).exp();
    let tv: f64 = wx
        .iter()
        .zip(&wy)
        .map(|(&u, &v)| (u * fa - v * fb).abs())
        .sum();
    let log_lhs = if tv == 0.0 {
        f64::NEG_INFINITY
    } else {
        top + tv.ln()
    };

    let mut log_prod = 0.0;
    for i in k..n {
        let e = envs.get(i)?;
        log_prod += (1.0 - coupling.gamma_of(e)).ln();
    }
    let gamma_last = if n > k {
        coupling.gamma_of(envs.get(n - 1)?)
    } else {
        coupling.gamma_min
    };
    let log_rhs = 4.0f64.ln() - gamma_last.ln() + log_prod + log_mx;
    Ok(ErgodicityGap {
        log_lhs,
        log_rhs,
        log_mass_x: log_mx,
    })
}

/// Growth-rate estimate over one realized environment sequence: the
/// eigenvalue-product route `(1/n) Σ_{k<n} log λ_k` (the headline
/// `log_lambda_hat`; exact up to horizon error for constant environments),
/// the operator-norm route `(1/n) log ⫼M_{0,n}⫼` (which carries an inherent
/// `O(1/n)` offset from the direction constant), their discrepancy, the
/// a-priori agreement bound `2|log γ_min|/n`, and the per-step series.
#[derive(Debug, Clone, Serialize)]
pub struct LyapunovEstimate {
    pub n: usize,
    pub log_lambda_hat: f64,
    pub log_lambda_norm: f64,
    pub discrepancy: f64,
    pub agreement_bound: f64,
    pub series: Vec<LyapunovStep>,
}

/// One row of the per-step series: eigenvalue factor, `log ‖δ_0 M_{0,k}‖`
/// (equal to `log ⫼M_{0,k}⫼` under nonincreasing profiles) and the coupling
/// coefficient of the step environment.
#[derive(Debug, Clone, Serialize)]
pub struct LyapunovStep {
    pub k: usize,
    pub lambda_k: f64,
    pub log_norm_k: f64,
    pub gamma_k: f64,
}

pub fn lyapunov_estimate(spec: &LeslieSpec, n: usize, seed: u64) -> Result<LyapunovEstimate> {
    if n == 0 {
        return Err(Error::InvalidArgument("horizon must be >= 1".into()));
    }
    let (_, estimate) = generate_envs_auto(spec, n, seed, |spec, envs| {
        lyapunov_estimate_quenched(spec, envs, n)
    })?;
    Ok(estimate)
}

/// As [`lyapunov_estimate`] but on a caller-provided environment sequence.
pub fn lyapunov_estimate_quenched(
    spec: &LeslieSpec,
    envs: &EnvSequence,
    n: usize,
) -> Result<LyapunovEstimate> {
    let log_norm = operator_norm_log(spec, envs, 0, n)?;
    let schedule = harmonic_schedule(spec, envs, n, 0, 1e-10)?;
    let coupling = coupling_constants(spec).ok();
    let masses = forward_mass_series(spec, envs, n)?;
    let mut series = Vec::with_capacity(n);
    for k in 0..n {
        let e = envs.get(k)?;
        series.push(LyapunovStep {
            k,
            lambda_k: schedule.lambda(k),
            log_norm_k: masses[k],
            gamma_k: coupling.as_ref().map_or(f64::NAN, |c| c.gamma_of(e)),
        });
    }
    let log_lambda_norm = log_norm / n as f64;
    let log_lambda_hat = schedule.log_lambda_cum(n) / n as f64;
    let agreement_bound = coupling
        .as_ref()
        .map_or(f64::NAN, |c| 2.0 * c.gamma_min.ln().abs() / n as f64);
    Ok(LyapunovEstimate {
        n,
        log_lambda_hat,
        log_lambda_norm,
        discrepancy: (log_lambda_norm - log_lambda_hat).abs(),
        agreement_bound,
        series,
    })
}

/// Run `op` against environment sequences of growing length until it stops
/// failing with a horizon error, returning the sequence together with the
/// computed value. ChaCha streams make the longer sequence an exact extension
/// of the shorter one, so the result is seed-deterministic.
pub(crate) fn generate_envs_auto<T>(
    spec: &LeslieSpec,
    min_len: usize,
    seed: u64,
    op: impl Fn(&LeslieSpec, &EnvSequence) -> Result<T>,
) -> Result<(EnvSequence, T)> {
    let mut tail = 128usize;
    loop {
        let envs = spec.generate_envs(min_len + tail, seed)?;
        match op(spec, &envs) {
            Err(Error::HorizonExhausted { .. }) if tail < (1 << 22) => tail *= 4,
            Err(e) => return Err(e),
            Ok(value) => return Ok((envs, value)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    /// Perron data of the 2x2 toy matrix [[1.5, 0.5], [1.0, 0]] by the
    /// quadratic formula: λ² - 1.5λ - 0.5 = 0.
    fn l2toy_lambda_oracle() -> f64 {
        (1.5 + 4.25f64.sqrt()) / 2.0
    }

    #[test]
    fn empty_product_returns_normalized_terminal() {
        let spec = fixtures::l2toy();
        let envs = spec.generate_envs(4, 0).unwrap();
        let v = apply_backward(&spec, &envs, 2, 2, 3, |x| 2.0 + x as f64).unwrap();
        // terminal (2,3,4,5): sup 5 at age 3
        assert!((v.log_scale - 5.0f64.ln()).abs() < 1e-14);
        assert!((v.direction[0] - 0.4).abs() < 1e-14);
        assert_eq!(v.direction[3], 1.0);
    }

    #[test]
    fn rejects_reversed_indices() {
        let spec = fixtures::l2toy();
        let envs = spec.generate_envs(4, 0).unwrap();
        assert!(matches!(
            apply_backward(&spec, &envs, 3, 2, 1, |_| 1.0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn l2toy_growth_matches_quadratic_oracle() {
        // the norm route converges like log(direction constant)/n, so the
        // error shrinks as 1/n towards the Perron log
        let spec = fixtures::l2toy();
        let envs = spec.generate_envs(900, 0).unwrap();
        let lam = l2toy_lambda_oracle();
        let err_at = |n: usize| {
            let log_norm = operator_norm_log(&spec, &envs, 0, n).unwrap();
            (log_norm / n as f64 - lam.ln()).abs()
        };
        let e200 = err_at(200);
        let e800 = err_at(800);
        assert!(e200 < 2e-3, "err(200) = {e200}");
        assert!(e800 < e200 / 3.0, "err(800) = {e800} vs err(200) = {e200}");
    }

    #[test]
    fn pure_birth_matches_birkhoff_oracle() {
        // exp(E log f_{0,ξ}) = exp(0.5 ln 4) = 2
        let spec = fixtures::pure_birth_iid();
        let n = 4000;
        let envs = spec.generate_envs(n + 8, 123).unwrap();
        let log_norm = operator_norm_log(&spec, &envs, 0, n).unwrap();
        let per_step = log_norm / n as f64;
        assert!(
            (per_step - 2.0f64.ln()).abs() < 0.03,
            "per-step {} vs ln 2 {}",
            per_step,
            2.0f64.ln()
        );
    }

    #[test]
    fn l2toy_profile_matches_perron_eigenvector_oracle() {
        // right Perron eigenvector normalized at age 0: h(1) = 1/λ
        let spec = fixtures::l2toy();
        let envs = spec.generate_envs(256, 0).unwrap();
        let p = harmonic_profile(&spec, &envs, 0, 1, 1e-12).unwrap();
        let lam = l2toy_lambda_oracle();
        assert!((p.h_at(0) - 1.0).abs() < 1e-12);
        assert!(
            (p.h_at(1) - 1.0 / lam).abs() < 1e-10,
            "h(1) = {}",
            p.h_at(1)
        );
        assert!((p.lambda - lam).abs() < 1e-10, "lambda = {}", p.lambda);
        assert!(p.err_bound < 1e-12);
    }

    #[test]
    fn constant_rates_profile_matches_dense_eigensolver_oracle() {
        // oracle: power iteration on the dense truncated operator on [0, 30]
        let f = 1.0;
        let s = 0.5;
        let spec = fixtures::constant_rates(f, s);
        let dim = 31;
        let mut v = vec![1.0; dim];
        let mut lam_oracle = 0.0;
        for _ in 0..400 {
            let mut next = vec![0.0; dim];
            for x in 0..dim {
                next[x] = f * v[0] + s * v.get(x + 1).copied().unwrap_or(0.0);
            }
            lam_oracle = next.iter().fold(0.0f64, |a, &b| a.max(b));
            for e in &mut next {
                *e /= lam_oracle;
            }
            v = next;
        }
        let envs = spec.generate_envs(256, 0).unwrap();
        let p = harmonic_profile(&spec, &envs, 0, 20, 1e-12).unwrap();
        // truncation tail of the oracle decays like s^(30-x); compare the head
        for x in 0..=10 {
            assert!(
                (p.h_at(x) - v[x] / v[0]).abs() < 1e-6,
                "h({x}) = {} vs oracle {}",
                p.h_at(x),
                v[x] / v[0]
            );
        }
        assert!((p.lambda - lam_oracle).abs() < 1e-6);
        // closed form for constant rates: h ≡ 1 and λ = f + s
        assert!((p.lambda - (f + s)).abs() < 1e-9);
        assert!(p.h.iter().all(|&h| (h - 1.0).abs() < 1e-9));
    }

    #[test]
    fn harmonicity_residual_is_within_horizon_error() {
        // M_k h_{k+1} = λ_k h_k on the window, for a genuinely random fixture
        let spec = fixtures::geo_supercritical();
        let envs = spec.generate_envs(256, 7).unwrap();
        let schedule = harmonic_schedule(&spec, &envs, 12, 4, 1e-11).unwrap();
        let conv = spec.convergence_age(1e-14);
        for k in 0..12 {
            let e = envs.get(k).unwrap();
            let op = MeanOperator::on_window(&spec, e, schedule.profile(k + 1).h.len());
            let image = op.apply_to_function(&schedule.profile(k + 1).h);
            let lam = schedule.lambda(k);
            let width = schedule.profile(k).h.len().min(image.len()).min(conv + 5);
            for x in 0..width {
                let residual = (image[x] - lam * schedule.h(k, x)).abs();
                assert!(residual < 1e-8, "k = {k}, x = {x}: residual {residual}");
            }
        }
    }

    #[test]
    fn backward_vectors_are_monotone_for_monotone_specs() {
        let spec = fixtures::geo_supercritical();
        assert!(spec.is_parametrically_monotone());
        let envs = spec.generate_envs(64, 3).unwrap();
        for n in [1, 5, 20] {
            let v = apply_backward(&spec, &envs, 0, n, 12, |_| 1.0).unwrap();
            assert!(v.is_nonincreasing(1e-12), "n = {n}");
            assert_eq!(v.direction[0], 1.0);
        }
    }

    #[test]
    fn semigroup_composition_is_consistent() {
        // m_{k,n} computed directly vs through an intermediate time m
        let spec = fixtures::geo_supercritical();
        let envs = spec.generate_envs(64, 9).unwrap();
        let (k, m, n, w) = (2, 7, 19, 6);
        let direct = apply_backward(&spec, &envs, k, n, w, |_| 1.0).unwrap();
        let inner = apply_backward(&spec, &envs, m, n, w + (m - k), |_| 1.0).unwrap();
        let outer = apply_backward(&spec, &envs, k, m, w, |x| inner.direction[x]).unwrap();
        for x in 0..=w {
            assert!(
                (outer.direction[x] - direct.direction[x]).abs() < 1e-12,
                "direction mismatch at {x}"
            );
        }
        let composed_log = outer.log_scale + inner.log_scale;
        assert!((composed_log - direct.log_scale).abs() < 1e-9);
    }

    #[test]
    fn coupling_constants_match_direct_arithmetic() {
        // l2toy: c = min(1.5/2.0, 1.0/1.0) = 0.75, constant env => η̃ = 0.25
        let r = coupling_constants(&fixtures::l2toy()).unwrap();
        assert!((r.per_env[0].c - 0.75).abs() < 1e-12);
        assert!((r.eta_tilde - 0.25).abs() < 1e-12);
        assert_eq!(r.d, 1.0);
        // pure birth: s ≡ 0 => c = 1, η̃ = 0
        let r = coupling_constants(&fixtures::pure_birth_iid()).unwrap();
        assert!((r.gamma_min - 1.0).abs() < 1e-12);
        assert_eq!(r.eta_tilde, 0.0);
    }

    #[test]
    fn coupling_refuses_non_monotone_specs() {
        let spec = LeslieSpec::new(
            vec!["e".into()],
            crate::model::OffspringFamily::GeometricTail {
                mean: vec![crate::model::AgeProfile {
                    initial: 0.5,
                    floor: 1.5,
                    rate: 0.5,
                }],
            },
            vec![crate::model::AgeProfile::constant(0.5)],
            crate::model::EnvProcessSpec::Constant { label: "e".into() },
        )
        .unwrap();
        assert!(matches!(
            coupling_constants(&spec),
            Err(Error::MonotonicityViolated(_))
        ));
    }

    #[test]
    fn gap_is_zero_for_identical_ages() {
        let spec = fixtures::l2toy();
        let envs = spec.generate_envs(128, 0).unwrap();
        let g = ergodicity_gap(&spec, &envs, 0, 8, 1, 1).unwrap();
        assert_eq!(g.log_lhs, f64::NEG_INFINITY);
        assert!(g.log_rhs > f64::NEG_INFINITY);
    }

    #[test]
    fn l2toy_gap_decay_matches_exact_2x2_oracle() {
        // oracle: exact 2x2 matrix products of [[1.5, 0.5], [1.0, 0]]
        let spec = fixtures::l2toy();
        let envs = spec.generate_envs(128, 0).unwrap();
        let m = [[1.5, 0.5], [1.0, 0.0]];
        let lam = l2toy_lambda_oracle();
        let h = [1.0, 1.0 / lam];
        for n in [4, 8, 12] {
            // rows of M^n
            let mut rows = [[1.0, 0.0], [0.0, 1.0]];
            for _ in 0..n {
                for r in &mut rows {
                    *r = [
                        r[0] * m[0][0] + r[1] * m[1][0],
                        r[0] * m[0][1] + r[1] * m[1][1],
                    ];
                }
            }
            let ratio = h[0] / h[1];
            let tv_oracle: f64 = (0..2)
                .map(|j| (rows[0][j] - ratio * rows[1][j]).abs())
                .sum();
            let mass_oracle: f64 = rows[0].iter().sum();
            // cancellation: tv is ~1e-9 of the row masses, so only ~1e-6
            // relative agreement is meaningful in doubles
            let g = ergodicity_gap(&spec, &envs, 0, n, 0, 1).unwrap();
            assert!(
                (g.log_lhs - tv_oracle.ln()).abs() < 1e-5,
                "n = {n}: lhs {} vs oracle {}",
                g.log_lhs,
                tv_oracle.ln()
            );
            assert!((g.log_mass_x - mass_oracle.ln()).abs() < 1e-10);
            assert!(g.log_lhs <= g.log_rhs);
        }
    }

    #[test]
    fn quenched_mean_matches_matrix_vector_oracle() {
        // δ_0 M for l2toy: (1.5, 0.5), mass 2, π_1 = (0.75, 0.25)
        let spec = fixtures::l2toy();
        let envs = spec.generate_envs(8, 0).unwrap();
        let z0 = AgePopulation::singleton(0);
        let qm = quenched_mean(&spec, &envs, &z0, 1).unwrap();
        assert!((qm.pi[0] - 0.75).abs() < 1e-14);
        assert!((qm.pi[1] - 0.25).abs() < 1e-14);
        assert!((qm.log_mass - 2.0f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn quenched_mean_at_zero_steps_is_the_normalized_start() {
        let spec = fixtures::l2toy();
        let envs = spec.generate_envs(8, 0).unwrap();
        let z0 = AgePopulation::from_counts([(0, 3), (1, 1)]);
        let qm = quenched_mean(&spec, &envs, &z0, 0).unwrap();
        assert!((qm.pi[0] - 0.75).abs() < 1e-15);
        assert!((qm.pi[1] - 0.25).abs() < 1e-15);
        assert!((qm.log_mass - 4.0f64.ln()).abs() < 1e-15);
        assert!(quenched_mean(&spec, &envs, &AgePopulation::empty(), 1).is_err());
    }

    #[test]
    fn mass_identity_links_quenched_mean_and_eigenvalue_products() {
        // π_n(h_n)·‖Z_0 M_{0,n}‖ = Z_0(h_0)·λ_{0,n}
        let spec = fixtures::geo_supercritical();
        let envs = spec.generate_envs(128, 21).unwrap();
        let z0 = AgePopulation::from_counts([(0, 2), (3, 1)]);
        let n = 25;
        let schedule = harmonic_schedule(&spec, &envs, n, z0.max_age().unwrap(), 1e-11).unwrap();
        let qm = quenched_mean(&spec, &envs, &z0, n).unwrap();
        let pi_h: f64 = qm.apply(|x| schedule.h(n, x));
        let z0_h0: f64 = z0.apply(|x| schedule.h(0, x));
        let lhs = pi_h.ln() + qm.log_mass;
        let rhs = z0_h0.ln() + schedule.log_lambda_cum(n);
        assert!((lhs - rhs).abs() < 1e-8, "lhs {lhs} rhs {rhs}");
    }

    #[test]
    fn quenched_mean_mass_grows_at_the_lyapunov_rate() {
        // ‖Z_0 M_{0,n}‖^{1/n} approaches λ on the same realized environments
        for (name, spec) in [
            ("geo_supercritical", fixtures::geo_supercritical()),
            ("geo_slow_growth", fixtures::geo_slow_growth()),
            ("poisson", fixtures::poisson_unclassified()),
        ] {
            let n = 500;
            let seed = 77;
            let (envs, est) = (
                spec.generate_envs(n + 128, seed).unwrap(),
                lyapunov_estimate(&spec, n, seed).unwrap(),
            );
            let qm = quenched_mean(&spec, &envs, &AgePopulation::singleton(0), n).unwrap();
            let mass_rate = qm.log_mass / n as f64;
            assert!(
                (mass_rate - est.log_lambda_hat).abs() < 1e-3,
                "{name}: mass rate {mass_rate} vs lambda-hat {}",
                est.log_lambda_hat
            );
        }
    }

    #[test]
    fn lyapunov_routes_agree_within_the_coupling_bound() {
        let spec = fixtures::geo_supercritical();
        let est = lyapunov_estimate(&spec, 200, 5).unwrap();
        assert!(est.discrepancy <= est.agreement_bound, "{est:?}");
        assert_eq!(est.series.len(), 200);
        // constant-env fixture: the product route hits the Perron log to
        // horizon accuracy, the norm route only up to its O(1/n) offset
        let toy = lyapunov_estimate(&fixtures::l2toy(), 200, 5).unwrap();
        let lam = l2toy_lambda_oracle();
        assert!((toy.log_lambda_hat - lam.ln()).abs() < 1e-9);
        assert!((toy.log_lambda_norm - lam.ln()).abs() < 2e-3);
        assert!(toy.discrepancy <= toy.agreement_bound);
    }

    #[test]
    fn schedule_errors_when_the_sequence_is_too_short() {
        let spec = fixtures::geo_supercritical();
        let envs = spec.generate_envs(10, 3).unwrap();
        assert!(matches!(
            harmonic_schedule(&spec, &envs, 8, 0, 1e-10),
            Err(Error::HorizonExhausted { .. })
        ));
    }
}
