//! Size-biased tree simulation with a marked spine, and exact verification
//! of the change-of-measure identity.
//!
//! At time `n` a spine individual of age `x` reproduces under the biased law
//! with joint pmf proportional to `(k·h_{n+1}(0) + σ·h_{n+1}(x+1))·P[F=k,S=σ]`
//! and normalizer `λ_n·h_n(x)`; the next spine individual is one of its
//! children, picked with probability proportional to `h_{n+1}` of the child's
//! age. Off-spine individuals reproduce under the unbiased law. Sampling uses
//! the exact two-component mixture (size-biased newborn component versus
//! survivor component), so no rejection is involved.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{AgePopulation, LeslieSpec};
use crate::rng::{replicate_rng, SimRng};
use crate::simulate::{step, QuenchedFrame, SimulationCaps, DEFAULT_PROFILE_TOL};

/// The biased reproduction law of a spine individual of age `x` at time `n`,
/// resolved against a frame's harmonic profiles.
#[derive(Debug, Clone)]
pub struct BiasedOffspringLaw {
    pub x: usize,
    pub env: usize,
    /// `h_{n+1}(0)` (newborn weight).
    pub h_next_newborn: f64,
    /// `h_{n+1}(x+1)` (survivor weight).
    pub h_next_survivor: f64,
    /// `λ_n·h_n(x)`.
    pub normalizer: f64,
    /// Mixture weight of the size-biased newborn component,
    /// `f_x·h_{n+1}(0)/normalizer`.
    pub weight_newborn: f64,
    /// Mixture weight of the survivor component,
    /// `s_x·h_{n+1}(x+1)/normalizer`.
    pub weight_survivor: f64,
}

impl BiasedOffspringLaw {
    /// Resolve the law at `(n, x)`. Fails if the normalizer identity
    /// `f_x·h_{n+1}(0) + s_x·h_{n+1}(x+1) = λ_n·h_n(x)` is violated beyond
    /// 1e-8 (a horizon or indexing problem).
    pub fn at(spec: &LeslieSpec, frame: &QuenchedFrame, n: usize, x: usize) -> Result<Self> {
        let e = frame.envs.get(n)?;
        let h_next_newborn = frame.schedule.h(n + 1, 0);
        let h_next_survivor = frame.schedule.h(n + 1, x + 1);
        let normalizer = frame.schedule.lambda(n) * frame.schedule.h(n, x);
        let f = spec.fertility_mean(x, e);
        let s = spec.survival(x, e);
        let direct = f * h_next_newborn + s * h_next_survivor;
        if (direct - normalizer).abs() > 1e-8 * normalizer.max(1.0) {
            return Err(Error::Inconsistency(format!(
                "biased-law normalizer mismatch at n = {n}, x = {x}: \
                 direct {direct} vs lambda_n h_n(x) {normalizer}"
            )));
        }
        Ok(Self {
            x,
            env: e,
            h_next_newborn,
            h_next_survivor,
            normalizer,
            weight_newborn: f * h_next_newborn / normalizer,
            weight_survivor: s * h_next_survivor / normalizer,
        })
    }

    /// `N(h_{n+1}) = k·h_{n+1}(0) + σ·h_{n+1}(x+1)`, the offspring measure
    /// integrated against the next profile.
    pub fn offspring_h_value(&self, k: u64, sigma: bool) -> f64 {
        k as f64 * self.h_next_newborn + if sigma { self.h_next_survivor } else { 0.0 }
    }

    /// Biased joint pmf `P*[F=k, S=σ]`.
    pub fn pmf(&self, spec: &LeslieSpec, k: u64, sigma: bool) -> f64 {
        self.offspring_h_value(k, sigma) * spec.offspring_pmf(self.x, self.env, k, sigma)
            / self.normalizer
    }

    /// Probability that the spine continues through a newborn given the
    /// outcome `(k, σ)`.
    pub fn newborn_choice_probability(&self, k: u64, sigma: bool) -> f64 {
        let total = self.offspring_h_value(k, sigma);
        if total == 0.0 {
            return 0.0;
        }
        k as f64 * self.h_next_newborn / total
    }

    /// Draw `(k, σ, spine child age)` by the exact two-component mixture.
    pub fn sample(&self, spec: &LeslieSpec, rng: &mut SimRng) -> Result<(u64, bool, usize)> {
        let total = self.weight_newborn + self.weight_survivor;
        let u: f64 = rng.random::<f64>() * total;
        if u < self.weight_newborn {
            // size-biased newborn count, unbiased survival, spine through a
            // newborn
            let k = spec.fertility.sample_size_biased(self.x, self.env, rng)?;
            let sigma = rng.random::<f64>() < spec.survival(self.x, self.env);
            Ok((k, sigma, 0))
        } else {
            // survivor component: survival forced, unbiased newborn count,
            // spine through the survivor
            let k = spec.fertility.sample(self.x, self.env, rng);
            Ok((k, true, self.x + 1))
        }
    }
}

/// Biased joint pmf at `(n, x)`: convenience wrapper over
/// [`BiasedOffspringLaw`].
pub fn biased_offspring_pmf(
    spec: &LeslieSpec,
    frame: &QuenchedFrame,
    n: usize,
    x: usize,
    k: u64,
    sigma: bool,
) -> Result<f64> {
    Ok(BiasedOffspringLaw::at(spec, frame, n, x)?.pmf(spec, k, sigma))
}

/// Draw one biased reproduction event at `(n, x)`.
pub fn sample_biased_offspring(
    spec: &LeslieSpec,
    frame: &QuenchedFrame,
    n: usize,
    x: usize,
    rng: &mut SimRng,
) -> Result<(u64, bool, usize)> {
    BiasedOffspringLaw::at(spec, frame, n, x)?.sample(spec, rng)
}

/// One spine reproduction record.
#[derive(Debug, Clone, Serialize)]
pub struct SpineRecord {
    pub n: usize,
    pub spine_age: usize,
    pub newborns: u64,
    pub survived: bool,
    pub child_age: usize,
    /// `N_{s_n}(h_{n+1})`.
    pub offspring_h_value: f64,
}

/// A size-biased tree path: the spine, the off-spine population per
/// generation, and `W_n` along the whole biased population `Z*_n`.
#[derive(Debug, Clone, Serialize)]
pub struct SpineTrajectory {
    pub spine_ages: Vec<usize>,
    pub records: Vec<SpineRecord>,
    pub off_spine: Vec<AgePopulation>,
    pub z_star_totals: Vec<u64>,
    pub w_path: Vec<f64>,
    pub cap_hit: bool,
}

impl SpineTrajectory {
    /// `max_{n >= 1} (1/n)·log⁺ N_{s_n}(h_{n+1})` over the recorded steps.
    pub fn max_normalized_log_offspring(&self) -> f64 {
        self.records
            .iter()
            .filter(|r| r.n >= 1)
            .map(|r| crate::numeric::log_plus(r.offspring_h_value) / r.n as f64)
            .fold(0.0, f64::max)
    }
}

/// Simulate the biased tree with its own seed.
pub fn spine_run(
    spec: &LeslieSpec,
    x0: usize,
    n_max: usize,
    seed: u64,
    caps: &SimulationCaps,
) -> Result<SpineTrajectory> {
    if n_max == 0 {
        return Err(Error::InvalidArgument("horizon must be >= 1".into()));
    }
    let frame = QuenchedFrame::build(spec, x0, n_max, seed, DEFAULT_PROFILE_TOL)?;
    let mut rng = replicate_rng(seed, 0);
    spine_run_quenched(spec, &frame, x0, &mut rng, caps)
}

/// Simulate the biased tree against a shared frame: the spine reproduces
/// under the biased law, every off-spine individual under the unbiased law.
pub fn spine_run_quenched(
    spec: &LeslieSpec,
    frame: &QuenchedFrame,
    x0: usize,
    rng: &mut SimRng,
    caps: &SimulationCaps,
) -> Result<SpineTrajectory> {
    let z0_h0 = frame.schedule.h(0, x0);
    let mut spine_ages = vec![x0];
    let mut records = Vec::with_capacity(frame.n_max);
    let mut off_spine = vec![AgePopulation::empty()];
    let mut z_star_totals = vec![1u64];
    let mut w_path = vec![frame.w_value(z0_h0, &AgePopulation::singleton(x0), 0)];
    let mut cap_hit = false;
    let mut spine_age = x0;
    let mut off = AgePopulation::empty();
    for n in 0..frame.n_max {
        let law = BiasedOffspringLaw::at(spec, frame, n, spine_age)?;
        let (k, sigma, child_age) = law.sample(spec, rng)?;
        let e = law.env;
        // unbiased reproduction of the off-spine population
        let mut next_off = match step(spec, &off, e, rng, caps) {
            Ok(p) => p,
            Err(Error::PopulationCapExceeded { .. }) => {
                cap_hit = true;
                break;
            }
            Err(err) => return Err(err),
        };
        // the spine's children that were not chosen join the off-spine pool
        let mut newborns_left = k;
        if child_age == 0 {
            newborns_left -= 1;
            if sigma {
                next_off.add(spine_age + 1, 1);
            }
        }
        next_off.add(0, newborns_left);
        if next_off.total() + 1 > caps.population_cap {
            cap_hit = true;
            break;
        }
        records.push(SpineRecord {
            n,
            spine_age,
            newborns: k,
            survived: sigma,
            child_age,
            offspring_h_value: law.offspring_h_value(k, sigma),
        });
        spine_age = child_age;
        off = next_off;
        spine_ages.push(spine_age);
        off_spine.push(off.clone());
        z_star_totals.push(off.total() + 1);
        let mut z_star = off.clone();
        z_star.add(spine_age, 1);
        w_path.push(frame.w_value(z0_h0, &z_star, n + 1));
    }
    Ok(SpineTrajectory {
        spine_ages,
        records,
        off_spine,
        z_star_totals,
        w_path,
        cap_hit,
    })
}

/// Spine-only fast path: simulates the marked lineage without the off-spine
/// population (the spine marginal is autonomous), so long horizons stay
/// O(n). Used for the offspring-growth statistic.
pub fn spine_statistic_run(
    spec: &LeslieSpec,
    frame: &QuenchedFrame,
    x0: usize,
    rng: &mut SimRng,
) -> Result<Vec<SpineRecord>> {
    let mut spine_age = x0;
    let mut records = Vec::with_capacity(frame.n_max);
    for n in 0..frame.n_max {
        let law = BiasedOffspringLaw::at(spec, frame, n, spine_age)?;
        let (k, sigma, child_age) = law.sample(spec, rng)?;
        records.push(SpineRecord {
            n,
            spine_age,
            newborns: k,
            survived: sigma,
            child_age,
            offspring_h_value: law.offspring_h_value(k, sigma),
        });
        spine_age = child_age;
    }
    Ok(records)
}

/// Ensemble of spine-only runs tracking `(1/n)·log⁺ N_{s_n}(h_{n+1})`, the
/// statistic whose limsup vanishes along the spine.
///
/// The vanishing is a large-`n` statement: at `n = 1` any outcome with two or
/// more `h`-weighted children already gives `log 2`, so the max over all
/// `n >= 1` never becomes small. The headline numbers therefore take the max
/// over the late window `[n_max/2, n_max]`; the full-range max is reported
/// alongside.
#[derive(Debug, Clone, Serialize)]
pub struct SpineGrowthStats {
    pub replicates: u64,
    pub n_max: usize,
    /// First index of the late window.
    pub window_start: usize,
    /// Mean over replicates of the late-window max.
    pub mean_windowed_max: f64,
    /// Largest late-window value across replicates.
    pub max_windowed: f64,
    /// Mean over replicates of the max over every `n >= 1`.
    pub mean_full_range_max: f64,
    pub per_replicate: Vec<f64>,
}

pub fn spine_growth_experiment(
    spec: &LeslieSpec,
    x0: usize,
    n_max: usize,
    replicates: u64,
    seed: u64,
    threads: usize,
) -> Result<SpineGrowthStats> {
    let frame = QuenchedFrame::build(spec, x0, n_max, seed, DEFAULT_PROFILE_TOL)?;
    let window_start = n_max / 2;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("could not build thread pool: {e}")))?;
    let stats: Result<Vec<(f64, f64)>> = pool.install(|| {
        (0..replicates)
            .into_par_iter()
            .map(|rep| {
                let mut rng = replicate_rng(seed, rep);
                let records = spine_statistic_run(spec, &frame, x0, &mut rng)?;
                let norm =
                    |r: &SpineRecord| crate::numeric::log_plus(r.offspring_h_value) / r.n as f64;
                let windowed = records
                    .iter()
                    .filter(|r| r.n >= window_start.max(1))
                    .map(norm)
                    .fold(0.0f64, f64::max);
                let full = records
                    .iter()
                    .filter(|r| r.n >= 1)
                    .map(norm)
                    .fold(0.0f64, f64::max);
                Ok((windowed, full))
            })
            .collect()
    });
    let stats = stats?;
    let count = stats.len().max(1) as f64;
    let per_replicate: Vec<f64> = stats.iter().map(|&(w, _)| w).collect();
    Ok(SpineGrowthStats {
        replicates,
        n_max,
        window_start,
        mean_windowed_max: per_replicate.iter().sum::<f64>() / count,
        max_windowed: per_replicate.iter().fold(0.0f64, |a, &b| a.max(b)),
        mean_full_range_max: stats.iter().map(|&(_, f)| f).sum::<f64>() / count,
        per_replicate,
    })
}

/// Result of the exhaustive change-of-measure verification.
#[derive(Debug, Clone, Serialize)]
pub struct ChangeOfMeasureCheck {
    pub levels: usize,
    pub trees: u64,
    /// `max_t |P*(t) - W_n(t)·P(t)|` over all depth-`levels` trees.
    pub max_gap: f64,
    /// `|Σ_t P*(t) - 1|`.
    pub total_mass_error: f64,
}

const TREE_ENUMERATION_CAP: u64 = 1_000_000;

/// One enumerated node: its age and reproduction outcome.
#[derive(Debug, Clone, Copy)]
struct NodeOutcome {
    age: usize,
    newborns: u64,
    survived: bool,
}

impl NodeOutcome {
    /// Children ages, survivor first (the offspring tuple convention).
    fn children(&self) -> Vec<usize> {
        let mut c = Vec::with_capacity(self.newborns as usize + 1);
        if self.survived {
            c.push(self.age + 1);
        }
        c.extend(std::iter::repeat_n(0, self.newborns as usize));
        c
    }
}

/// A depth-`levels` labelled tree: outcome assignment per node per level,
/// with the leaves stored as a final outcome-free level.
#[derive(Debug, Clone)]
struct Tree {
    levels: Vec<Vec<NodeOutcome>>,
    probability: f64,
}

fn enumerate_trees(
    spec: &LeslieSpec,
    frame: &QuenchedFrame,
    x0: usize,
    levels: usize,
) -> Result<Vec<Tree>> {
    let mut trees: Vec<(Vec<Vec<NodeOutcome>>, Vec<usize>, f64)> =
        vec![(Vec::new(), vec![x0], 1.0)];
    for depth in 0..levels {
        let e = frame.envs.get(depth)?;
        let mut next: Vec<(Vec<Vec<NodeOutcome>>, Vec<usize>, f64)> = Vec::new();
        for (history, ages, p) in trees {
            // outcome assignments for every node of this generation
            let mut assignments: Vec<(Vec<NodeOutcome>, f64)> = vec![(Vec::new(), p)];
            for &age in &ages {
                let support = spec.fertility.support_max(age, e).ok_or_else(|| {
                    Error::PreconditionFailed(
                        "exhaustive enumeration needs bounded-support fertility".into(),
                    )
                })?;
                let mut grown = Vec::new();
                for (partial, pp) in &assignments {
                    for k in 0..=support {
                        for sigma in [false, true] {
                            let pr = spec.offspring_pmf(age, e, k, sigma);
                            if pr > 0.0 {
                                let mut node = partial.clone();
                                node.push(NodeOutcome {
                                    age,
                                    newborns: k,
                                    survived: sigma,
                                });
                                grown.push((node, pp * pr));
                            }
                        }
                    }
                }
                assignments = grown;
                let estimated = assignments.len() as u64 + next.len() as u64;
                if estimated > TREE_ENUMERATION_CAP {
                    return Err(Error::EnumerationTooLarge {
                        estimated: estimated as u128,
                        cap: TREE_ENUMERATION_CAP as u128,
                    });
                }
            }
            for (outcome_row, pp) in assignments {
                let child_ages: Vec<usize> =
                    outcome_row.iter().flat_map(|n| n.children()).collect();
                let mut history2 = history.clone();
                history2.push(outcome_row);
                next.push((history2, child_ages, pp));
            }
        }
        trees = next;
        if trees.len() as u64 > TREE_ENUMERATION_CAP {
            return Err(Error::EnumerationTooLarge {
                estimated: trees.len() as u128,
                cap: TREE_ENUMERATION_CAP as u128,
            });
        }
    }
    Ok(trees
        .into_iter()
        .map(|(mut levels_rows, leaf_ages, probability)| {
            levels_rows.push(
                leaf_ages
                    .into_iter()
                    .map(|age| NodeOutcome {
                        age,
                        newborns: 0,
                        survived: false,
                    })
                    .collect(),
            );
            Tree {
                levels: levels_rows,
                probability,
            }
        })
        .collect())
}

/// Total biased probability of a tree: sum over spine positions of the
/// explicit product (biased pmf at spine nodes, spine-choice factors,
/// unbiased pmf elsewhere).
fn biased_tree_probability(
    spec: &LeslieSpec,
    frame: &QuenchedFrame,
    tree: &Tree,
    levels: usize,
) -> Result<f64> {
    // state: (spine node index at current depth, accumulated probability)
    let mut paths: Vec<(usize, f64)> = vec![(0, 1.0)];
    for depth in 0..levels {
        let outcomes = &tree.levels[depth];
        let e = frame.envs.get(depth)?;
        let mut next: Vec<(usize, f64)> = Vec::new();
        for &(spine_idx, acc) in &paths {
            let mut level_factor = acc;
            for (i, node) in outcomes.iter().enumerate() {
                if i != spine_idx {
                    level_factor *= spec.offspring_pmf(node.age, e, node.newborns, node.survived);
                }
            }
            let spine_node = outcomes[spine_idx];
            let law = BiasedOffspringLaw::at(spec, frame, depth, spine_node.age)?;
            let biased = law.pmf(spec, spine_node.newborns, spine_node.survived);
            if biased == 0.0 {
                continue;
            }
            // child offset of the spine node within the next level
            let mut offset = 0;
            for node in outcomes.iter().take(spine_idx) {
                offset += node.children().len();
            }
            let h_total = law.offspring_h_value(spine_node.newborns, spine_node.survived);
            for (j, child_age) in spine_node.children().iter().enumerate() {
                let choice = frame.schedule.h(depth + 1, *child_age) / h_total;
                next.push((offset + j, level_factor * biased * choice));
            }
        }
        paths = next;
    }
    Ok(paths.iter().map(|&(_, p)| p).sum())
}

/// Enumerate all depth-`levels` trees under both constructions and verify
/// `dP* = W_n dP` event by event.
pub fn change_of_measure_check(
    spec: &LeslieSpec,
    x0: usize,
    levels: usize,
    seed: u64,
) -> Result<ChangeOfMeasureCheck> {
    let frame = QuenchedFrame::build(spec, x0, levels, seed, DEFAULT_PROFILE_TOL)?;
    change_of_measure_check_quenched(spec, &frame, x0, levels)
}

pub fn change_of_measure_check_quenched(
    spec: &LeslieSpec,
    frame: &QuenchedFrame,
    x0: usize,
    levels: usize,
) -> Result<ChangeOfMeasureCheck> {
    let trees = enumerate_trees(spec, frame, x0, levels)?;
    let z0_h0 = frame.schedule.h(0, x0);
    let mut max_gap = 0.0f64;
    let mut total_star = 0.0;
    for tree in &trees {
        let p_star = biased_tree_probability(spec, frame, tree, levels)?;
        total_star += p_star;
        let mut z_n = AgePopulation::empty();
        for node in &tree.levels[levels] {
            z_n.add(node.age, 1);
        }
        let w_n = frame.w_value(z0_h0, &z_n, levels);
        max_gap = max_gap.max((p_star - w_n * tree.probability).abs());
    }
    Ok(ChangeOfMeasureCheck {
        levels,
        trees: trees.len() as u64,
        max_gap,
        total_mass_error: (total_star - 1.0).abs(),
    })
}
