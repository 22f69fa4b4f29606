//! Forward Monte Carlo of the branching process under a realized environment,
//! martingale paths along trajectories, exhaustive enumeration checks, and
//! the ensemble experiments behind the limit theorems.
//!
//! All experiments are quenched: one realized environment sequence (drawn
//! from the root seed's environment stream) is shared by every replicate,
//! and harmonic profiles are computed once on it. Replicates own independent
//! ChaCha streams indexed by replicate id and are aggregated in replicate
//! order, so results are bit-identical no matter how many threads run.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{AgePopulation, EnvSequence, LeslieSpec};
use crate::rng::{replicate_rng, SimRng};
use crate::semigroup::{
    generate_envs_auto, harmonic_schedule, quenched_mean_series, HarmonicSchedule, QuenchedMean,
};
use crate::verify;

/// Default sup-norm tolerance for the harmonic profiles behind `W_n`.
pub const DEFAULT_PROFILE_TOL: f64 = 1e-12;

/// Resource limits for a simulation run.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SimulationCaps {
    pub population_cap: u64,
}

impl Default for SimulationCaps {
    fn default() -> Self {
        Self {
            population_cap: 10_000_000,
        }
    }
}

/// One generation step: every age-`x` individual draws `(F, S)` from the
/// environment-`e` law independently, contributing `F` newborns and itself at
/// age `x + 1` when `S = 1`. Empty populations stay empty. Fails without a
/// partial population if the offspring would exceed the cap.
pub fn step(
    spec: &LeslieSpec,
    pop: &AgePopulation,
    e: usize,
    rng: &mut SimRng,
    caps: &SimulationCaps,
) -> Result<AgePopulation> {
    let mut next = AgePopulation::empty();
    let mut newborns = 0u64;
    for (x, count) in pop.iter() {
        let mut survivors = 0u64;
        for _ in 0..count {
            let (k, sigma) = spec.sample_offspring(x, e, rng);
            newborns += k;
            survivors += sigma as u64;
            if newborns + next.total() + survivors > caps.population_cap {
                return Err(Error::PopulationCapExceeded {
                    cap: caps.population_cap,
                });
            }
        }
        next.add(x + 1, survivors);
    }
    next.add(0, newborns);
    Ok(next)
}

/// Environment sequence plus the harmonic data every replicate shares:
/// profiles `h_0..h_{n_max+1}` (one step past the horizon, so spine
/// constructions can reuse the frame) and cumulative eigenvalue logs.
#[derive(Debug, Clone)]
pub struct QuenchedFrame {
    pub envs: EnvSequence,
    pub schedule: HarmonicSchedule,
    pub n_max: usize,
}

impl QuenchedFrame {
    /// Build the frame for populations whose initial ages stay within
    /// `base_window`. The environment sequence is extended automatically
    /// until the profile tolerance is reachable.
    pub fn build(
        spec: &LeslieSpec,
        base_window: usize,
        n_max: usize,
        seed: u64,
        tol: f64,
    ) -> Result<Self> {
        let (envs, schedule) = generate_envs_auto(spec, n_max + 2, seed, |spec, envs| {
            harmonic_schedule(spec, envs, n_max + 1, base_window, tol)
        })?;
        Ok(Self {
            envs,
            schedule,
            n_max,
        })
    }

    /// `Z_0(h_0)`.
    pub fn z0_weight(&self, z0: &AgePopulation) -> f64 {
        z0.apply(|x| self.schedule.h(0, x))
    }

    /// `W_n = Z_n(h_n) / (λ_{0,n} Z_0(h_0))`, log-safe, exactly zero for an
    /// empty population.
    pub fn w_value(&self, z0_h0: f64, pop: &AgePopulation, n: usize) -> f64 {
        if pop.is_empty() {
            return 0.0;
        }
        let zh = pop.apply(|x| self.schedule.h(n, x));
        (zh.ln() - self.schedule.log_lambda_cum(n) - z0_h0.ln()).exp()
    }
}

/// A simulated population path with its martingale values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub populations: Vec<AgePopulation>,
    pub w_path: Vec<f64>,
    pub extinction_time: Option<usize>,
    pub cap_hit: bool,
    /// Requested horizon; the path is shorter only when the cap was hit.
    pub horizon: usize,
}

impl Trajectory {
    pub fn survived(&self) -> bool {
        self.extinction_time.is_none()
    }

    pub fn final_population(&self) -> &AgePopulation {
        self.populations
            .last()
            .expect("trajectory has at least generation 0")
    }

    pub fn final_w(&self) -> f64 {
        *self
            .w_path
            .last()
            .expect("trajectory has at least generation 0")
    }
}

/// Simulate one trajectory with its own seed (environment stream plus
/// replicate stream 0).
pub fn run(
    spec: &LeslieSpec,
    z0: &AgePopulation,
    n_max: usize,
    seed: u64,
    caps: &SimulationCaps,
) -> Result<Trajectory> {
    if n_max == 0 {
        return Err(Error::InvalidArgument("horizon must be >= 1".into()));
    }
    if z0.is_empty() {
        return Err(Error::InvalidArgument(
            "initial population must be nonempty".into(),
        ));
    }
    let frame = QuenchedFrame::build(
        spec,
        z0.max_age().unwrap(),
        n_max,
        seed,
        DEFAULT_PROFILE_TOL,
    )?;
    let mut rng = replicate_rng(seed, 0);
    run_quenched(spec, &frame, z0, &mut rng, caps)
}

/// Simulate one trajectory against a shared frame and a caller-owned rng
/// stream.
pub fn run_quenched(
    spec: &LeslieSpec,
    frame: &QuenchedFrame,
    z0: &AgePopulation,
    rng: &mut SimRng,
    caps: &SimulationCaps,
) -> Result<Trajectory> {
    let z0_h0 = frame.z0_weight(z0);
    let mut populations = Vec::with_capacity(frame.n_max + 1);
    let mut w_path = Vec::with_capacity(frame.n_max + 1);
    let mut extinction_time = None;
    let mut cap_hit = false;
    let mut current = z0.clone();
    populations.push(current.clone());
    w_path.push(frame.w_value(z0_h0, &current, 0));
    for n in 0..frame.n_max {
        if current.is_empty() {
            // absorbing: the rest of the path stays empty with W = 0
            populations.push(AgePopulation::empty());
            w_path.push(0.0);
            continue;
        }
        let e = frame.envs.get(n)?;
        match step(spec, &current, e, rng, caps) {
            Ok(next) => {
                current = next;
                if current.is_empty() && extinction_time.is_none() {
                    extinction_time = Some(n + 1);
                }
                populations.push(current.clone());
                w_path.push(frame.w_value(z0_h0, &current, n + 1));
            }
            Err(Error::PopulationCapExceeded { .. }) => {
                cap_hit = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Trajectory {
        populations,
        w_path,
        extinction_time,
        cap_hit,
        horizon: frame.n_max,
    })
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("could not build thread pool: {e}")))
}

/// Run `replicates` trajectories against a shared frame; the result vector
/// is indexed by replicate id regardless of scheduling.
pub fn run_ensemble(
    spec: &LeslieSpec,
    frame: &QuenchedFrame,
    z0: &AgePopulation,
    replicates: u64,
    seed: u64,
    caps: &SimulationCaps,
    threads: usize,
) -> Result<Vec<Trajectory>> {
    let pool = thread_pool(threads)?;
    pool.install(|| {
        (0..replicates)
            .into_par_iter()
            .map(|rep| {
                let mut rng = replicate_rng(seed, rep);
                run_quenched(spec, frame, z0, &mut rng, caps)
            })
            .collect()
    })
}

/// Per-replicate summary row (the CSV payload of ensemble experiments).
#[derive(Debug, Clone, Serialize)]
pub struct ReplicateSummary {
    pub replicate: u64,
    pub extinction_time: Option<usize>,
    pub w_final: f64,
    pub final_total: u64,
    pub max_age0: u64,
    pub cap_hit: bool,
}

/// Summarize one trajectory as a CSV-ready row.
pub fn summary_row(rep: u64, t: &Trajectory) -> ReplicateSummary {
    ReplicateSummary::from_trajectory(rep, t)
}

/// Aggregate replicate summaries.
pub fn ensemble_stats_of(summaries: &[ReplicateSummary]) -> EnsembleStats {
    ensemble_stats(summaries)
}

impl ReplicateSummary {
    fn from_trajectory(rep: u64, t: &Trajectory) -> Self {
        Self {
            replicate: rep,
            extinction_time: t.extinction_time,
            w_final: t.final_w(),
            final_total: t.final_population().total(),
            max_age0: t.populations.iter().map(|p| p.count(0)).max().unwrap_or(0),
            cap_hit: t.cap_hit,
        }
    }
}

/// Shared ensemble aggregates.
#[derive(Debug, Clone, Serialize)]
pub struct EnsembleStats {
    pub replicates: u64,
    pub mean_w: f64,
    /// 95% half-width of the mean-W estimate.
    pub w_ci_half_width: f64,
    pub survival_fraction: f64,
    pub extinction_fraction: f64,
    pub capped: u64,
}

fn ensemble_stats(summaries: &[ReplicateSummary]) -> EnsembleStats {
    let n = summaries.len() as f64;
    let mean_w = summaries.iter().map(|s| s.w_final).sum::<f64>() / n;
    let var_w = summaries
        .iter()
        .map(|s| (s.w_final - mean_w) * (s.w_final - mean_w))
        .sum::<f64>()
        / (n - 1.0).max(1.0);
    let surviving = summaries
        .iter()
        .filter(|s| s.extinction_time.is_none())
        .count() as f64;
    EnsembleStats {
        replicates: summaries.len() as u64,
        mean_w,
        w_ci_half_width: 1.96 * (var_w / n).sqrt(),
        survival_fraction: surviving / n,
        extinction_fraction: 1.0 - surviving / n,
        capped: summaries.iter().filter(|s| s.cap_hit).count() as u64,
    }
}

fn median(sorted: &[f64]) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

/// Exhaustive martingale check: enumerate the exact distribution of
/// `Z_{g+1}` given every reachable history `Z_g` (bounded-support fertility
/// only) and report the largest `|E[W_{g+1} | Z_g] - W_g|`.
#[derive(Debug, Clone, Serialize)]
pub struct MartingaleCheck {
    pub levels: usize,
    pub histories: u64,
    pub outcomes: u128,
    pub max_residual: f64,
    /// Largest `|Σ P - 1|` over the enumerated levels.
    pub level_mass_error: f64,
}

pub const ENUMERATION_CAP: u128 = 1_000_000;

/// Distribution of `(total newborns, survivors)` for `count` iid individuals
/// of age `x` in environment `e`.
fn age_class_outcomes(
    spec: &LeslieSpec,
    x: usize,
    e: usize,
    count: u64,
) -> Result<BTreeMap<(u64, u64), f64>> {
    let support = spec.fertility.support_max(x, e).ok_or_else(|| {
        Error::PreconditionFailed("exhaustive enumeration needs bounded-support fertility".into())
    })?;
    let mut single: Vec<((u64, u64), f64)> = Vec::new();
    for k in 0..=support {
        for sigma in [0u64, 1u64] {
            let p = spec.offspring_pmf(x, e, k, sigma == 1);
            if p > 0.0 {
                single.push(((k, sigma), p));
            }
        }
    }
    let mut dist: BTreeMap<(u64, u64), f64> = BTreeMap::new();
    dist.insert((0, 0), 1.0);
    for _ in 0..count {
        let mut next: BTreeMap<(u64, u64), f64> = BTreeMap::new();
        for (&(k0, s0), &p0) in &dist {
            for &((k, s), p) in &single {
                *next.entry((k0 + k, s0 + s)).or_insert(0.0) += p0 * p;
            }
        }
        dist = next;
    }
    Ok(dist)
}

/// Exact distribution of the next generation given `pop` in environment `e`.
fn next_generation_distribution(
    spec: &LeslieSpec,
    pop: &AgePopulation,
    e: usize,
    outcome_budget: &mut u128,
) -> Result<Vec<(AgePopulation, f64)>> {
    let mut states: Vec<(Vec<(usize, u64)>, u64, f64)> = vec![(Vec::new(), 0, 1.0)];
    for (x, count) in pop.iter() {
        let class = age_class_outcomes(spec, x, e, count)?;
        let estimated = states.len() as u128 * class.len() as u128;
        if estimated > *outcome_budget {
            return Err(Error::EnumerationTooLarge {
                estimated,
                cap: ENUMERATION_CAP,
            });
        }
        let mut next = Vec::with_capacity(estimated as usize);
        for (survivor_ages, newborns, p0) in &states {
            for (&(k, s), &p) in &class {
                let mut ages = survivor_ages.clone();
                if s > 0 {
                    ages.push((x + 1, s));
                }
                next.push((ages, newborns + k, p0 * p));
            }
        }
        states = next;
    }
    *outcome_budget = outcome_budget.saturating_sub(states.len() as u128);
    Ok(states
        .into_iter()
        .map(|(ages, newborns, p)| {
            let mut pop = AgePopulation::from_counts(ages);
            pop.add(0, newborns);
            (pop, p)
        })
        .collect())
}

/// Check the martingale property by exhausting the outcome space to depth
/// `levels`.
pub fn martingale_enumeration_check(
    spec: &LeslieSpec,
    z0: &AgePopulation,
    levels: usize,
    seed: u64,
) -> Result<MartingaleCheck> {
    let frame = QuenchedFrame::build(
        spec,
        z0.max_age().unwrap_or(0),
        levels,
        seed,
        DEFAULT_PROFILE_TOL,
    )?;
    martingale_enumeration_check_quenched(spec, &frame, z0, levels)
}

/// As [`martingale_enumeration_check`] against a caller-built frame (tests
/// use this to inject perturbed profiles).
pub fn martingale_enumeration_check_quenched(
    spec: &LeslieSpec,
    frame: &QuenchedFrame,
    z0: &AgePopulation,
    levels: usize,
) -> Result<MartingaleCheck> {
    if z0.is_empty() {
        return Err(Error::InvalidArgument(
            "initial population must be nonempty".into(),
        ));
    }
    let z0_h0 = frame.z0_weight(z0);
    let mut budget = ENUMERATION_CAP;
    let mut level: Vec<(AgePopulation, f64)> = vec![(z0.clone(), 1.0)];
    let mut histories = 0u64;
    let mut max_residual = 0.0f64;
    let mut level_mass_error = 0.0f64;
    for g in 0..levels {
        let e = frame.envs.get(g)?;
        let mut next_level: BTreeMap<AgePopulation, f64> = BTreeMap::new();
        for (pop, p_hist) in &level {
            let w_here = frame.w_value(z0_h0, pop, g);
            if pop.is_empty() {
                // absorbing: E[W_{g+1}] = 0 = W_g exactly
                *next_level.entry(AgePopulation::empty()).or_insert(0.0) += p_hist;
                continue;
            }
            histories += 1;
            let children = next_generation_distribution(spec, pop, e, &mut budget)?;
            let mut expected_w = 0.0;
            for (child, p) in &children {
                expected_w += p * frame.w_value(z0_h0, child, g + 1);
                *next_level.entry(child.clone()).or_insert(0.0) += p_hist * p;
            }
            max_residual = max_residual.max((expected_w - w_here).abs());
        }
        let mass: f64 = next_level.values().sum();
        level_mass_error = level_mass_error.max((mass - 1.0).abs());
        level = next_level.into_iter().collect();
    }
    Ok(MartingaleCheck {
        levels,
        histories,
        outcomes: ENUMERATION_CAP - budget,
        max_residual,
        level_mass_error,
    })
}

/// Kesten-Stigum-type experiment: mean of `W_{n_max}` (target 1), survival
/// fraction, the size ratio `Z_n(1)/(W_n ‖Z_0 M_{0,n}‖)` on survivors, and
/// growth-rate samples.
#[derive(Debug, Clone, Serialize)]
pub struct KestenStigumStats {
    pub n_max: usize,
    pub ensemble: EnsembleStats,
    pub ratio_median: f64,
    pub ratio_q10: f64,
    pub ratio_q90: f64,
    pub growth_rate_median: f64,
    pub log_lambda_reference: f64,
    #[serde(skip)]
    pub summaries: Vec<ReplicateSummary>,
    #[serde(skip)]
    pub generations: Vec<GenerationRow>,
}

pub struct KestenStigumParams {
    pub replicates: u64,
    pub n_max: usize,
    pub caps: SimulationCaps,
    pub threads: usize,
    pub llogl_epsilon: f64,
}

impl Default for KestenStigumParams {
    fn default() -> Self {
        Self {
            replicates: 10_000,
            n_max: 50,
            caps: SimulationCaps::default(),
            threads: 1,
            llogl_epsilon: 0.5,
        }
    }
}

pub fn kesten_stigum_experiment(
    spec: &LeslieSpec,
    params: &KestenStigumParams,
    seed: u64,
) -> Result<KestenStigumStats> {
    let llogl = verify::check_llogl(spec, params.llogl_epsilon);
    if !llogl.pass {
        return Err(Error::PreconditionFailed(
            "L log L criterion failed; the non-degeneracy theorem does not apply".into(),
        ));
    }
    let growth = verify::check_supercritical_default(spec)?;
    if !growth.pass {
        return Err(Error::PreconditionFailed(format!(
            "Supercriticality not established: mean log growth {:.4} (se {:.4})",
            growth.log_lambda_mean, growth.std_error
        )));
    }
    let z0 = AgePopulation::singleton(0);
    let frame = QuenchedFrame::build(spec, 0, params.n_max, seed, DEFAULT_PROFILE_TOL)?;
    let trajectories = run_ensemble(
        spec,
        &frame,
        &z0,
        params.replicates,
        seed,
        &params.caps,
        params.threads,
    )?;
    let summaries: Vec<ReplicateSummary> = trajectories
        .iter()
        .enumerate()
        .map(|(i, t)| ReplicateSummary::from_trajectory(i as u64, t))
        .collect();
    let means = quenched_mean_series(spec, &frame.envs, &z0, params.n_max)?;
    let log_mass_final = means[params.n_max].log_mass;
    let mut ratios = Vec::new();
    let mut growth_rates = Vec::new();
    for t in &trajectories {
        if t.survived() && !t.cap_hit && t.w_path.len() == params.n_max + 1 {
            let total = t.final_population().total() as f64;
            let w = t.final_w();
            if w > 0.0 {
                ratios.push((total.ln() - w.ln() - log_mass_final).exp());
            }
            growth_rates.push((total.ln() / params.n_max as f64).exp());
        }
    }
    ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
    growth_rates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let generations = generation_rows(&trajectories);
    Ok(KestenStigumStats {
        n_max: params.n_max,
        ensemble: ensemble_stats(&summaries),
        ratio_median: median(&ratios),
        ratio_q10: quantile(&ratios, 0.1),
        ratio_q90: quantile(&ratios, 0.9),
        growth_rate_median: median(&growth_rates),
        log_lambda_reference: growth.log_lambda_mean,
        summaries,
        generations,
    })
}

/// Per-generation error between empirical type frequencies and the
/// renormalized quenched mean, over surviving replicates.
#[derive(Debug, Clone, Serialize)]
pub struct TypeFrequencyRow {
    pub generation: usize,
    pub survivors: u64,
    pub median_error: f64,
    pub q10: f64,
    pub q90: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TypeFrequencyStats {
    pub rows: Vec<TypeFrequencyRow>,
    pub ensemble: EnsembleStats,
}

pub struct TypeFrequencyParams {
    pub replicates: u64,
    pub n_max: usize,
    pub caps: SimulationCaps,
    pub threads: usize,
}

impl Default for TypeFrequencyParams {
    fn default() -> Self {
        Self {
            replicates: 4_000,
            n_max: 30,
            caps: SimulationCaps::default(),
            threads: 1,
        }
    }
}

/// `f` is any bounded test function on ages; the experiment tracks
/// `|Z_n(f)/Z_n(1) - π_n(f)|` per generation on surviving replicates.
pub fn type_frequency_experiment<F: Fn(usize) -> f64 + Sync>(
    spec: &LeslieSpec,
    f: F,
    params: &TypeFrequencyParams,
    seed: u64,
) -> Result<TypeFrequencyStats> {
    let growth = verify::check_supercritical_default(spec)?;
    if !growth.pass {
        return Err(Error::PreconditionFailed(
            "type-frequency experiment needs a supercritical spec".into(),
        ));
    }
    let z0 = AgePopulation::singleton(0);
    let frame = QuenchedFrame::build(spec, 0, params.n_max, seed, DEFAULT_PROFILE_TOL)?;
    let trajectories = run_ensemble(
        spec,
        &frame,
        &z0,
        params.replicates,
        seed,
        &params.caps,
        params.threads,
    )?;
    let summaries: Vec<ReplicateSummary> = trajectories
        .iter()
        .enumerate()
        .map(|(i, t)| ReplicateSummary::from_trajectory(i as u64, t))
        .collect();
    let means: Vec<QuenchedMean> = quenched_mean_series(spec, &frame.envs, &z0, params.n_max)?;
    let mut rows = Vec::with_capacity(params.n_max + 1);
    for n in 0..=params.n_max {
        let pi_f = means[n].apply(&f);
        let mut errors: Vec<f64> = trajectories
            .iter()
            .filter(|t| t.populations.len() > n && !t.populations[n].is_empty())
            .map(|t| {
                let pop = &t.populations[n];
                (pop.apply(&f) / pop.total() as f64 - pi_f).abs()
            })
            .collect();
        errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
        rows.push(TypeFrequencyRow {
            generation: n,
            survivors: errors.len() as u64,
            median_error: median(&errors),
            q10: quantile(&errors, 0.1),
            q90: quantile(&errors, 0.9),
        });
    }
    if rows.iter().all(|r| r.survivors == 0) {
        return Err(Error::PreconditionFailed(
            "all replicates went extinct; no surviving type frequencies to report".into(),
        ));
    }
    Ok(TypeFrequencyStats {
        rows,
        ensemble: ensemble_stats(&summaries),
    })
}

/// Extinction versus non-explosion: compare the extinction frequency with
/// `P[W_{n_max} < w_floor]`, with floor sensitivity and the growth evidence
/// for the age-0 count on survivors.
#[derive(Debug, Clone, Serialize)]
pub struct ExtinctionExplosionStats {
    pub n_max: usize,
    pub w_floor: f64,
    pub p_ext_hat: f64,
    pub p_ext_ci: f64,
    pub p_wzero_hat: f64,
    pub p_wzero_ci: f64,
    /// `P[W < 10·w_floor]` and `P[W < w_floor/10]` (floor sensitivity).
    pub p_wzero_hi: f64,
    pub p_wzero_lo: f64,
    /// One-step-death lower bound `a^{‖Z_0‖} (1-s)^{‖Z_0‖}`.
    pub one_step_lower_bound: f64,
    /// Fraction of surviving replicates whose running max of `Z_n(0)` grew
    /// strictly between the quarter horizon and the full horizon.
    pub age0_growth_fraction: f64,
    pub max_age0_median_quarter: f64,
    pub max_age0_median_full: f64,
    pub ensemble: EnsembleStats,
    #[serde(skip)]
    pub summaries: Vec<ReplicateSummary>,
}

pub struct ExtinctionExplosionParams {
    pub replicates: u64,
    pub n_max: usize,
    pub w_floor: f64,
    pub caps: SimulationCaps,
    pub threads: usize,
}

impl Default for ExtinctionExplosionParams {
    fn default() -> Self {
        Self {
            replicates: 10_000,
            n_max: 100,
            w_floor: 1e-6,
            caps: SimulationCaps::default(),
            threads: 1,
        }
    }
}

pub fn extinction_explosion_experiment(
    spec: &LeslieSpec,
    params: &ExtinctionExplosionParams,
    seed: u64,
) -> Result<ExtinctionExplosionStats> {
    let conditions = verify::check_ext_expl_conditions(spec);
    match conditions.verdict {
        verify::Verdict::Pass => {}
        verify::Verdict::NotApplicable => {
            return Err(Error::PreconditionFailed(
                "extinction/explosion dichotomy needs an i.i.d. environment".into(),
            ))
        }
        verify::Verdict::Fail => {
            return Err(Error::PreconditionFailed(format!(
                "extinction/explosion conditions failed: {}",
                conditions.witness
            )))
        }
    }
    let z0 = AgePopulation::singleton(0);
    let frame = QuenchedFrame::build(spec, 0, params.n_max, seed, DEFAULT_PROFILE_TOL)?;
    let trajectories = run_ensemble(
        spec,
        &frame,
        &z0,
        params.replicates,
        seed,
        &params.caps,
        params.threads,
    )?;
    let summaries: Vec<ReplicateSummary> = trajectories
        .iter()
        .enumerate()
        .map(|(i, t)| ReplicateSummary::from_trajectory(i as u64, t))
        .collect();
    let n = params.replicates as f64;
    let binom_ci = |p: f64| 1.96 * (p * (1.0 - p) / n).sqrt();
    // capped replicates count as surviving-and-exploding
    let p_ext = summaries
        .iter()
        .filter(|s| s.extinction_time.is_some() && !s.cap_hit)
        .count() as f64
        / n;
    let frac_w_below = |floor: f64| {
        summaries
            .iter()
            .filter(|s| !s.cap_hit && s.w_final < floor)
            .count() as f64
            / n
    };
    let p_wzero = frac_w_below(params.w_floor);
    let quarter = params.n_max / 4;
    let mut grew = 0u64;
    let mut survivors = 0u64;
    let mut max_quarter = Vec::new();
    let mut max_full = Vec::new();
    for t in &trajectories {
        if t.survived() {
            survivors += 1;
            let mq = t
                .populations
                .iter()
                .take(quarter + 1)
                .map(|p| p.count(0))
                .max()
                .unwrap_or(0);
            let mf = t.populations.iter().map(|p| p.count(0)).max().unwrap_or(0);
            if mf > mq {
                grew += 1;
            }
            max_quarter.push(mq as f64);
            max_full.push(mf as f64);
        }
    }
    max_quarter.sort_by(|a, b| a.partial_cmp(b).unwrap());
    max_full.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let one_step_lower_bound = conditions.a * (1.0 - conditions.s_sup);
    Ok(ExtinctionExplosionStats {
        n_max: params.n_max,
        w_floor: params.w_floor,
        p_ext_hat: p_ext,
        p_ext_ci: binom_ci(p_ext),
        p_wzero_hat: p_wzero,
        p_wzero_ci: binom_ci(p_wzero),
        p_wzero_hi: frac_w_below(params.w_floor * 10.0),
        p_wzero_lo: frac_w_below(params.w_floor / 10.0),
        one_step_lower_bound,
        age0_growth_fraction: if survivors > 0 {
            grew as f64 / survivors as f64
        } else {
            f64::NAN
        },
        max_age0_median_quarter: median(&max_quarter),
        max_age0_median_full: median(&max_full),
        ensemble: ensemble_stats(&summaries),
        summaries,
    })
}

/// Per-generation ensemble rows for CSV output.
#[derive(Debug, Clone, Serialize)]
pub struct GenerationRow {
    pub generation: usize,
    pub survivors: u64,
    pub mean_w: f64,
    pub mean_total: f64,
}

pub fn generation_rows(trajectories: &[Trajectory]) -> Vec<GenerationRow> {
    let horizon = trajectories
        .iter()
        .map(|t| t.populations.len())
        .max()
        .unwrap_or(0);
    (0..horizon)
        .map(|n| {
            let mut survivors = 0u64;
            let mut w_sum = 0.0;
            let mut total_sum = 0.0;
            let mut count = 0u64;
            for t in trajectories {
                if let Some(pop) = t.populations.get(n) {
                    count += 1;
                    w_sum += t.w_path[n];
                    total_sum += pop.total() as f64;
                    if !pop.is_empty() {
                        survivors += 1;
                    }
                }
            }
            GenerationRow {
                generation: n,
                survivors,
                mean_w: w_sum / count.max(1) as f64,
                mean_total: total_sum / count.max(1) as f64,
            }
        })
        .collect()
}
