//! `contactum` — contact Hamiltonian mechanics on chart atlases.
//!
//! Subcommands: `catalog` lists builtin models, `simulate` integrates a
//! trajectory, `verify` runs the identity suites, `hj` evaluates contact
//! Hamilton–Jacobi residuals or propagates characteristics.
//!
//! Exit codes: 0 success, 1 verification failure, 2 config error, 3 runtime
//! numeric error. Logging level comes from `CONTACTUM_LOG`
//! (error|warn|info|debug).

mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;

use config::RunConfig;
use contactum_core::hj::GridAxis;
use contactum_core::verify::{run_identity_suites, VerifyOptions};
use contactum_core::{decay_check, hj_characteristics, hj_verify, integrate, Atlas};

#[derive(Parser)]
#[command(name = "contactum", version, about = "contact Hamiltonian mechanics engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List builtin models with their charts and gluing data.
    Catalog {
        /// Only list models whose name contains this text.
        filter: Option<String>,
        /// Include transition formulas and cocycles.
        #[arg(long)]
        verbose: bool,
    },
    /// Integrate a trajectory and write CSV + summary JSON.
    Simulate(RunArgs),
    /// Run the identity suites and write a JSON report.
    Verify(RunArgs),
    /// Hamilton–Jacobi analysis: grid residuals or characteristics.
    Hj(HjArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override for sampled checks.
    #[arg(long)]
    seed: Option<u64>,
    /// Multiply every residual tolerance by this factor.
    #[arg(long)]
    tolerance_scale: Option<f64>,
}

#[derive(Args)]
struct HjArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Analysis mode.
    #[arg(long, value_parser = ["residual", "characteristics"])]
    mode: String,
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
    Check,
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Check => 1,
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

fn config_err(e: anyhow::Error) -> Failure {
    Failure::Config(e)
}

/// Core errors during a run are numeric-runtime failures unless they point at
/// a malformed definition.
fn core_err(e: contactum_core::Error) -> Failure {
    if e.is_definition_error() {
        Failure::Config(anyhow::anyhow!("{e}"))
    } else {
        Failure::Runtime(anyhow::anyhow!("{e}"))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::new()
            .filter_or("CONTACTUM_LOG", "warn"),
    )
    .format_timestamp(None)
    .init();

    let cli = Cli::parse();
    let result = match cli.command {
        Command::Catalog { filter, verbose } => cmd_catalog(filter.as_deref(), verbose),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Verify(args) => cmd_verify(&args),
        Command::Hj(args) => cmd_hj(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            match &failure {
                Failure::Config(e) => eprintln!("config error: {e:#}"),
                Failure::Runtime(e) => eprintln!("runtime error: {e:#}"),
                Failure::Check => {}
            }
            ExitCode::from(failure.code())
        }
    }
}

fn out_dir(args: &RunArgs, config: &RunConfig) -> PathBuf {
    if let Some(out) = &args.out {
        return out.clone();
    }
    if let Some(output) = &config.output {
        return PathBuf::from(&output.dir);
    }
    PathBuf::from(".")
}

// ---------------------------------------------------------------------------
// catalog
// ---------------------------------------------------------------------------

fn cmd_catalog(filter: Option<&str>, verbose: bool) -> Result<(), Failure> {
    let entries: Vec<(&str, &str, Atlas)> = vec![
        (
            "trivial-jet",
            "jet space of real functions on R^n: one global Darboux chart (n configurable)",
            Atlas::trivial_jet(1),
        ),
        (
            "mobius",
            "jet bundle of the dual Mobius line bundle over the circle: one strip chart with a sign-reversing self-gluing (cocycle -1)",
            Atlas::mobius(),
        ),
        (
            "projective",
            "projectivized cotangent bundle P(T*R^(n+1)): n+1 charts with momentum-ratio transitions and cocycle 1/p_l (n configurable)",
            Atlas::projective(2),
        ),
    ];
    for (name, blurb, atlas) in entries {
        if let Some(f) = filter {
            if !name.contains(f) {
                continue;
            }
        }
        println!("{name}: {blurb}");
        for chart in &atlas.charts {
            let coords: Vec<String> = chart
                .coords
                .iter()
                .zip(&chart.roles)
                .enumerate()
                .map(|(slot, (c, r))| {
                    if chart.sign(slot) < 0.0 {
                        format!("{c} [role -{r}]")
                    } else {
                        format!("{c} [role {r}]")
                    }
                })
                .collect();
            println!("  chart {} (dim {}): {}", chart.id, chart.dim(), coords.join(", "));
        }
        if verbose {
            for tr in &atlas.transitions {
                let maps: Vec<String> = tr.forward.iter().map(|e| e.canonical()).collect();
                println!(
                    "  transition {} -> {}: ({}) with cocycle {}",
                    tr.source,
                    tr.target,
                    maps.join(", "),
                    tr.cocycle.canonical()
                );
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SimulationSummary {
    model: String,
    t0: f64,
    t1: f64,
    h: f64,
    method: String,
    samples: usize,
    end_chart: String,
    end_coords: Vec<f64>,
    events: Vec<contactum_core::SwitchEvent>,
    decay_residual: f64,
}

fn cmd_simulate(args: &RunArgs) -> Result<(), Failure> {
    let config = RunConfig::load(&args.config).map_err(config_err)?;
    let (model, _) = config.build_model().map_err(config_err)?;
    let start = config.initial_point(&model).map_err(config_err)?;
    let spec = config.integrator().map_err(config_err)?;
    info!("integrating {} from t={} to t={}", model.atlas.name, spec.t0, spec.t1);

    let traj = integrate(&model, &start, spec.t0, spec.t1, spec.h).map_err(core_err)?;
    let residual = decay_check(&model, &traj).map_err(core_err)?;

    let dir = out_dir(args, &config);
    let csv = output::trajectory_csv(&traj);
    let csv_path = output::write_text(&dir, "trajectory.csv", &csv)
        .map_err(|e| Failure::Runtime(e))?;
    let (t_end, end) = traj.end();
    let summary = SimulationSummary {
        model: model.atlas.name.clone(),
        t0: spec.t0,
        t1: *t_end,
        h: traj.step,
        method: traj.method.clone(),
        samples: traj.samples.len(),
        end_chart: end.chart.clone(),
        end_coords: end.coords.clone(),
        events: traj.events.clone(),
        decay_residual: residual,
    };
    let json_path = output::write_json(&dir, "summary.json", &summary)
        .map_err(|e| Failure::Runtime(e))?;
    println!(
        "simulated {} steps, {} chart switches, decay residual {:.3e}",
        traj.samples.len() - 1,
        summary.events.len(),
        residual
    );
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct VerifyReport {
    model: String,
    seed: u64,
    samples: usize,
    tolerance_scale: f64,
    checks: Vec<contactum_core::CheckReport>,
    all_passed: bool,
}

fn cmd_verify(args: &RunArgs) -> Result<(), Failure> {
    let config = RunConfig::load(&args.config).map_err(config_err)?;
    let (model, section) = config.build_model().map_err(config_err)?;
    let opts = VerifyOptions {
        seed: args.seed.unwrap_or(config.seed),
        samples: config.samples,
        tolerance_scale: args.tolerance_scale.unwrap_or(config.tolerance_scale),
    };
    let checks = run_identity_suites(&model, section.as_ref(), &opts).map_err(core_err)?;
    let all_passed = checks.iter().all(|c| c.passed);
    for check in &checks {
        let cmp = match check.comparison {
            contactum_core::Comparison::Le => "<=",
            contactum_core::Comparison::Ge => ">=",
        };
        println!(
            "{} {}: {:.3e} {} {:.3e} ({} samples)",
            if check.passed { "pass" } else { "FAIL" },
            check.name,
            check.value,
            cmp,
            check.threshold,
            check.samples
        );
    }
    let report = VerifyReport {
        model: model.atlas.name.clone(),
        seed: opts.seed,
        samples: opts.samples,
        tolerance_scale: opts.tolerance_scale,
        checks,
        all_passed,
    };
    let dir = out_dir(args, &config);
    let path = output::write_json(&dir, "verify.json", &report)
        .map_err(|e| Failure::Runtime(e))?;
    println!("wrote {}", path.display());
    if all_passed {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

// ---------------------------------------------------------------------------
// hj
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct HjRunReport {
    model: String,
    mode: String,
    tolerance: f64,
    passed: Option<bool>,
    report: Option<contactum_core::HjReport>,
    launches: Option<usize>,
    t0: Option<f64>,
    t1: Option<f64>,
    h: Option<f64>,
}

fn cmd_hj(args: &HjArgs) -> Result<(), Failure> {
    let config = RunConfig::load(&args.run.config).map_err(config_err)?;
    let (model, section) = config.build_model().map_err(config_err)?;
    let section = section.ok_or_else(|| config_err(anyhow::anyhow!("config has no 'section'")))?;
    let grid = config
        .grid
        .as_ref()
        .ok_or_else(|| config_err(anyhow::anyhow!("config has no 'grid'")))?;
    let chart_id = config.grid_chart(&model).map_err(config_err)?.to_string();
    let tolerance = 1e-9 * args.run.tolerance_scale.unwrap_or(config.tolerance_scale);
    let dir = out_dir(&args.run, &config);

    match args.mode.as_str() {
        "residual" => {
            let t_axis = grid.t.unwrap_or(GridAxis::point(0.0));
            let report = hj_verify(&model, &section, &chart_id, &grid.q, &t_axis)
                .map_err(core_err)?;
            let passed = report.max_residual <= tolerance;
            println!(
                "max |residual| {:.3e} at q = {:?}, t = {}; max tangency {:.3e}",
                report.max_residual, report.argmax_q, report.argmax_t, report.max_tangency
            );
            let out = HjRunReport {
                model: model.atlas.name.clone(),
                mode: args.mode.clone(),
                tolerance,
                passed: Some(passed),
                report: Some(report),
                launches: None,
                t0: None,
                t1: None,
                h: None,
            };
            let path = output::write_json(&dir, "hj_report.json", &out)
                .map_err(|e| Failure::Runtime(e))?;
            println!("wrote {}", path.display());
            if passed {
                Ok(())
            } else {
                Err(Failure::Check)
            }
        }
        "characteristics" => {
            let spec = config.integrator().map_err(config_err)?;
            let starts = contactum_core::hj::grid_points(&grid.q);
            let trajs = hj_characteristics(
                &model, &section, &chart_id, &starts, spec.t0, spec.t1, spec.h,
            )
            .map_err(core_err)?;
            let csv = output::characteristics_csv(&trajs);
            let csv_path = output::write_text(&dir, "characteristics.csv", &csv)
                .map_err(|e| Failure::Runtime(e))?;
            let out = HjRunReport {
                model: model.atlas.name.clone(),
                mode: args.mode.clone(),
                tolerance,
                passed: None,
                report: None,
                launches: Some(trajs.len()),
                t0: Some(spec.t0),
                t1: Some(spec.t1),
                h: Some(spec.h),
            };
            let json_path = output::write_json(&dir, "hj_report.json", &out)
                .map_err(|e| Failure::Runtime(e))?;
            println!(
                "propagated {} characteristics; wrote {} and {}",
                trajs.len(),
                csv_path.display(),
                json_path.display()
            );
            Ok(())
        }
        other => Err(config_err(anyhow::anyhow!("unknown mode '{other}'"))),
    }
}
