//! Batch entry point: one experiment per invocation, configuration from a
//! strict TOML file, artifacts (CSV series plus a JSON summary embedding the
//! config hash and seed) into an output directory.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use gwre::report::{self, Provenance};
use gwre::semigroup::{coupling_constants, harmonic_profile, lyapunov_estimate};
use gwre::simulate::{
    self, extinction_explosion_experiment, kesten_stigum_experiment, type_frequency_experiment,
    ExtinctionExplosionParams, KestenStigumParams, QuenchedFrame, SimulationCaps,
    TypeFrequencyParams,
};
use gwre::spine::{spine_growth_experiment, spine_run_quenched};
use gwre::verify;
use gwre::{AgePopulation, Error};

#[derive(Parser)]
#[command(
    name = "gwre",
    version,
    about = "Age-structured branching processes in random environments: \
             semigroup numerics, Monte Carlo experiments and assumption checkers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (TOML). Required by every subcommand except
    /// `appendix`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for replicate parallelism (aggregation is
    /// order-independent, so results do not depend on this).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Growth-rate series, coupling constants and harmonic profiles.
    Semigroup,
    /// Forward Monte Carlo trajectories with martingale paths.
    Simulate,
    /// Size-biased spine runs and the offspring-growth statistic.
    Spine,
    /// Martingale non-degeneracy experiment (mean W, survival, size ratio).
    KestenStigum,
    /// Type-frequency convergence against the renormalized quenched mean.
    TypeFreq,
    /// Extinction versus non-explosion comparison.
    ExtExpl,
    /// Assumption checkers; the exit code reflects the overall verdict.
    Check,
    /// Numeric verification of the appendix lemmas.
    Appendix,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(err) => {
            if let Some(Error::PreconditionFailed(msg)) = err.downcast_ref::<Error>() {
                eprintln!("refused: {msg}");
                return ExitCode::from(2);
            }
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

struct Ctx {
    spec: Option<gwre::LeslieSpec>,
    config: config::ExperimentConfig,
    prov: Provenance,
    seed: u64,
    threads: usize,
    out: PathBuf,
}

fn load_ctx(cli: &Cli, spec_required: bool) -> Result<Ctx> {
    let (config, hash, dir) = match &cli.config {
        Some(path) => {
            let loaded = config::load(path)?;
            let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
            (loaded.config, loaded.hash, dir)
        }
        None if spec_required => {
            anyhow::bail!("this subcommand needs --config pointing at an experiment file")
        }
        None => (
            toml::from_str("").expect("empty config is valid"),
            "none".to_string(),
            PathBuf::from("."),
        ),
    };
    let spec = if spec_required || config.spec.is_some() || config.spec_path.is_some() {
        Some(config::resolve_spec(&config, &dir)?)
    } else {
        None
    };
    let seed = cli.seed.or(config.seed).unwrap_or(0);
    std::fs::create_dir_all(&cli.out)
        .with_context(|| format!("cannot create output directory {}", cli.out.display()))?;
    Ok(Ctx {
        spec,
        config,
        prov: Provenance {
            config_hash: hash,
            seed,
        },
        seed,
        threads: cli.threads.max(1),
        out: cli.out.clone(),
    })
}

fn dispatch(cli: &Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Semigroup => cmd_semigroup(load_ctx(cli, true)?),
        Command::Simulate => cmd_simulate(load_ctx(cli, true)?),
        Command::Spine => cmd_spine(load_ctx(cli, true)?),
        Command::KestenStigum => cmd_kesten_stigum(load_ctx(cli, true)?),
        Command::TypeFreq => cmd_type_freq(load_ctx(cli, true)?),
        Command::ExtExpl => cmd_ext_expl(load_ctx(cli, true)?),
        Command::Check => cmd_check(load_ctx(cli, true)?),
        Command::Appendix => cmd_appendix(load_ctx(cli, false)?),
    }
}

fn cmd_semigroup(ctx: Ctx) -> Result<ExitCode> {
    let spec = ctx.spec.as_ref().unwrap();
    let p = &ctx.config.semigroup;
    let estimate = lyapunov_estimate(spec, p.horizon, ctx.seed)?;
    let envs = spec.generate_envs(p.horizon + 64, ctx.seed)?;
    let mut profiles = Vec::new();
    for k in 0..p.profile_count {
        profiles.push(harmonic_profile(
            spec,
            &envs,
            k,
            p.profile_window,
            p.profile_tol,
        )?);
    }
    let coupling = coupling_constants(spec).ok();
    report::write_lyapunov_series(&ctx.out.join("series.csv"), &ctx.prov, &estimate)?;
    report::write_profiles(&ctx.out.join("profiles.csv"), &ctx.prov, &profiles)?;
    #[derive(serde::Serialize)]
    struct Summary<'a> {
        estimate: &'a gwre::semigroup::LyapunovEstimate,
        coupling: &'a Option<gwre::semigroup::CouplingReport>,
    }
    report::write_json_summary(
        &ctx.out.join("summary.json"),
        &ctx.prov,
        &Summary {
            estimate: &estimate,
            coupling: &coupling,
        },
    )?;
    println!(
        "log lambda hat {:+.6} (norm route {:+.6}); artifacts in {}",
        estimate.log_lambda_hat,
        estimate.log_lambda_norm,
        ctx.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_simulate(ctx: Ctx) -> Result<ExitCode> {
    let spec = ctx.spec.as_ref().unwrap();
    let p = &ctx.config.simulate;
    let z0 = AgePopulation::from_counts(p.z0.iter().copied());
    let caps = SimulationCaps {
        population_cap: p.population_cap,
    };
    let frame = QuenchedFrame::build(
        spec,
        z0.max_age().unwrap_or(0),
        p.n_max,
        ctx.seed,
        simulate::DEFAULT_PROFILE_TOL,
    )?;
    let trajectories = simulate::run_ensemble(
        spec,
        &frame,
        &z0,
        p.replicates,
        ctx.seed,
        &caps,
        ctx.threads,
    )?;
    let summaries: Vec<simulate::ReplicateSummary> = trajectories
        .iter()
        .enumerate()
        .map(|(i, t)| simulate::summary_row(i as u64, t))
        .collect();
    let generations = simulate::generation_rows(&trajectories);
    let stats = simulate::ensemble_stats_of(&summaries);
    report::write_replicates(&ctx.out.join("replicates.csv"), &ctx.prov, &summaries)?;
    report::write_generations(&ctx.out.join("generations.csv"), &ctx.prov, &generations)?;
    report::write_json_summary(&ctx.out.join("summary.json"), &ctx.prov, &stats)?;
    println!(
        "{} replicates to generation {}: survival {:.3}, mean W {:.4}; artifacts in {}",
        p.replicates,
        p.n_max,
        stats.survival_fraction,
        stats.mean_w,
        ctx.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_spine(ctx: Ctx) -> Result<ExitCode> {
    let spec = ctx.spec.as_ref().unwrap();
    let p = &ctx.config.spine;
    let caps = SimulationCaps {
        population_cap: p.population_cap,
    };
    let frame = QuenchedFrame::build(spec, p.x0, p.n_max, ctx.seed, simulate::DEFAULT_PROFILE_TOL)?;
    let mut rng = gwre::rng::replicate_rng(ctx.seed, 0);
    let trajectory = spine_run_quenched(spec, &frame, p.x0, &mut rng, &caps)?;
    let stats = spine_growth_experiment(spec, p.x0, p.n_max, p.replicates, ctx.seed, ctx.threads)?;
    report::write_spine_records(&ctx.out.join("spine.csv"), &ctx.prov, &trajectory.records)?;
    report::write_json_summary(&ctx.out.join("summary.json"), &ctx.prov, &stats)?;
    // exhaustive change-of-measure report where the outcome space is finite
    if p.enumeration_levels > 0 && spec.fertility.support_max(0, 0).is_some() {
        let com =
            gwre::spine::change_of_measure_check(spec, p.x0, p.enumeration_levels, ctx.seed)?;
        report::write_json_summary(&ctx.out.join("change_of_measure.json"), &ctx.prov, &com)?;
        println!(
            "change of measure over {} trees: max gap {:.3e}, mass error {:.3e}",
            com.trees, com.max_gap, com.total_mass_error
        );
    }
    println!(
        "spine statistic (late-window mean over {} runs): {:.4}; artifacts in {}",
        p.replicates,
        stats.mean_windowed_max,
        ctx.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_kesten_stigum(ctx: Ctx) -> Result<ExitCode> {
    let spec = ctx.spec.as_ref().unwrap();
    let p = &ctx.config.kesten_stigum;
    let params = KestenStigumParams {
        replicates: p.replicates,
        n_max: p.n_max,
        caps: SimulationCaps {
            population_cap: p.population_cap,
        },
        threads: ctx.threads,
        llogl_epsilon: p.llogl_epsilon,
    };
    let stats = kesten_stigum_experiment(spec, &params, ctx.seed)?;
    report::write_replicates(&ctx.out.join("replicates.csv"), &ctx.prov, &stats.summaries)?;
    report::write_generations(
        &ctx.out.join("generations.csv"),
        &ctx.prov,
        &stats.generations,
    )?;
    report::write_json_summary(&ctx.out.join("summary.json"), &ctx.prov, &stats)?;
    println!(
        "mean W {:.4} ± {:.4}, survival {:.3}, size ratio median {:.4}; artifacts in {}",
        stats.ensemble.mean_w,
        stats.ensemble.w_ci_half_width,
        stats.ensemble.survival_fraction,
        stats.ratio_median,
        ctx.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_type_freq(ctx: Ctx) -> Result<ExitCode> {
    let spec = ctx.spec.as_ref().unwrap();
    let p = &ctx.config.type_freq;
    let params = TypeFrequencyParams {
        replicates: p.replicates,
        n_max: p.n_max,
        caps: SimulationCaps {
            population_cap: p.population_cap,
        },
        threads: ctx.threads,
    };
    let f = p.test_function;
    let stats = type_frequency_experiment(spec, move |x| f.eval(x), &params, ctx.seed)?;
    report::write_type_frequencies(&ctx.out.join("errors.csv"), &ctx.prov, &stats.rows)?;
    report::write_json_summary(&ctx.out.join("summary.json"), &ctx.prov, &stats)?;
    let last = stats.rows.last().unwrap();
    println!(
        "median error at generation {}: {:.5} over {} survivors; artifacts in {}",
        last.generation,
        last.median_error,
        last.survivors,
        ctx.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_ext_expl(ctx: Ctx) -> Result<ExitCode> {
    let spec = ctx.spec.as_ref().unwrap();
    let p = &ctx.config.ext_expl;
    let params = ExtinctionExplosionParams {
        replicates: p.replicates,
        n_max: p.n_max,
        w_floor: p.w_floor,
        caps: SimulationCaps {
            population_cap: p.population_cap,
        },
        threads: ctx.threads,
    };
    let stats = extinction_explosion_experiment(spec, &params, ctx.seed)?;
    report::write_replicates(&ctx.out.join("replicates.csv"), &ctx.prov, &stats.summaries)?;
    report::write_json_summary(&ctx.out.join("summary.json"), &ctx.prov, &stats)?;
    println!(
        "p_ext {:.4} ± {:.4} vs P[W < floor] {:.4} ± {:.4}; artifacts in {}",
        stats.p_ext_hat,
        stats.p_ext_ci,
        stats.p_wzero_hat,
        stats.p_wzero_ci,
        ctx.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_check(ctx: Ctx) -> Result<ExitCode> {
    let spec = ctx.spec.as_ref().unwrap();
    let report_data = verify::check_all(spec, ctx.config.check.llogl_epsilon)?;
    report::write_json_summary(&ctx.out.join("report.json"), &ctx.prov, &report_data)?;
    for item in &report_data.h.items {
        println!("{:40} {:?}", item.name, item.verdict);
    }
    println!(
        "{:40} {}",
        "supercriticality (log growth)",
        format_args!(
            "{} ({:+.4} ± {:.4})",
            if report_data.supercritical.pass {
                "Pass"
            } else {
                "Fail"
            },
            report_data.supercritical.log_lambda_mean,
            report_data.supercritical.std_error
        )
    );
    println!(
        "{:40} {}",
        "L log L criterion",
        if report_data.llogl.pass {
            "Pass"
        } else {
            "Fail"
        }
    );
    println!(
        "{:40} {}",
        "uniform second moment",
        if report_data.l2.pass { "Pass" } else { "Fail" }
    );
    println!(
        "{:40} {:?}",
        "extinction/explosion conditions", report_data.ext_expl.verdict
    );
    println!("{:40} {:?}", "tail class", report_data.classification.class);
    println!(
        "overall: {}",
        if report_data.kesten_stigum_ready {
            "ready (exit 0)"
        } else {
            "not ready (exit 1)"
        }
    );
    if report_data.kesten_stigum_ready {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(1))
    }
}

fn cmd_appendix(ctx: Ctx) -> Result<ExitCode> {
    let p = &ctx.config.appendix;
    let params = verify::AppendixParams {
        series_len: p.series_len,
        g_k_max: p.g_k_max,
        ..Default::default()
    };
    let report_data = verify::appendix_checks(&params);
    report::write_appendix_grid(&ctx.out.join("u_grid.csv"), &ctx.prov, &report_data)?;
    report::write_json_summary(&ctx.out.join("summary.json"), &ctx.prov, &report_data)?;
    println!(
        "u-bound grid: {} points, g sweeps: {}; all pass: {}; artifacts in {}",
        report_data.u_points.len(),
        report_data.g_sweeps.len(),
        report_data.all_pass,
        ctx.out.display()
    );
    if report_data.all_pass {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(1))
    }
}
