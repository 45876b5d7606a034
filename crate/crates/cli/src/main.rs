//! Command-line front end for the free-flyer stack: run the three-leg
//! scenario, plan single legs offline, replay the recorded estimation
//! stream, and time the hot paths against their real-time budgets.
//!
//! Exit codes are stable so scripts can branch on the failure mode:
//! 0 success, 1 runtime error, 2 usage or configuration error,
//! 3 no collision-free path, 4 robust tube design infeasible,
//! 5 simulation timeout.

mod benchrun;
mod config;
mod output;
mod replay;

use clap::{Args, Parser, Subcommand};
use config::{gamma_name, parse_gamma, parse_planner, planner_name, RunConfig};
use freeflyer_core::scenario_sim::{plan_offline, run_scenario_with, ScenarioSpec};
use freeflyer_core::Error;
use output::{
    knot_row, write_json, CsvSink, RunReport, RunWriter, SegmentReport, REPORT_FILE,
    TRAJECTORY_HEADER,
};
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

const EXIT_RUNTIME: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_NO_PATH: u8 = 3;
const EXIT_TUBE_INFEASIBLE: u8 = 4;
const EXIT_TIMEOUT: u8 = 5;

#[derive(Parser)]
#[command(name = "freeflyer", version, about = "Free-flyer guidance, estimation and robust control toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full three-leg scenario and record telemetry.
    Run(RunArgs),
    /// Plan a single leg offline and write the reference trajectory.
    Plan(PlanArgs),
    /// Re-run the estimator over a recorded samples stream.
    EstimateReplay(ReplayArgs),
    /// Time the controller and planners against their budgets.
    Bench(BenchArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario configuration file (TOML); defaults apply when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// RNG seed; a config `seed` takes precedence.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Offline planner: lqr-rrt-star or kino-rrt.
    #[arg(long)]
    planner: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Output directory for telemetry.csv, samples.csv and report.json.
    #[arg(long, default_value = "run-out")]
    out: PathBuf,
    /// Disable the robust tube controller on every segment.
    #[arg(long)]
    no_tube: bool,
    /// Excitation weighting: auto, off or fixed:<w>.
    #[arg(long)]
    gamma: Option<String>,
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Leg to plan: 0 (A-B), 1 (B-C) or 2 (C-A).
    #[arg(long, default_value_t = 0)]
    segment: usize,
    /// Output directory for trajectory.csv and plan.json.
    #[arg(long, default_value = "plan-out")]
    out: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    /// Directory holding report.json and samples.csv from a run.
    #[arg(long)]
    run: PathBuf,
    /// Replay with the outlier gate disabled (accept every sample).
    #[arg(long)]
    gate_off: bool,
    /// Where to write the replay report (JSON); default inside --run.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// all, controller, kino-rrt, lqr-rrt-star or riccati.
    #[arg(long, default_value = "all")]
    suite: String,
    /// Iterations for the controller and Riccati timings.
    #[arg(long, default_value_t = 50)]
    iterations: usize,
    /// Independent planning problems per planner suite.
    #[arg(long, default_value_t = 5)]
    plans: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn build_spec(args: &ScenarioArgs) -> Result<ScenarioSpec, Error> {
    let cfg = match &args.scenario {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let mut spec = cfg.build_spec(args.seed)?;
    if let Some(p) = &args.planner {
        spec.planner = parse_planner(p)?;
    }
    Ok(spec)
}

fn exit_for(e: &Error) -> u8 {
    match e {
        Error::NoPath(_) => EXIT_NO_PATH,
        Error::TubeInfeasible(_) => EXIT_TUBE_INFEASIBLE,
        Error::Invalid(_) => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

fn cmd_run(args: &RunArgs) -> Result<u8, Error> {
    let mut spec = build_spec(&args.scenario)?;
    if args.no_tube {
        spec.disable_tube = true;
    }
    if let Some(g) = &args.gamma {
        spec.gamma = parse_gamma(g)?;
    }
    let mut writer = RunWriter::create(&args.out)?;
    let t0 = Instant::now();
    let mut write_err = None;
    let report = run_scenario_with(&spec, |seg| {
        if write_err.is_none() {
            write_err = writer.write_segment(seg).err();
        }
    })?;
    if let Some(e) = write_err {
        return Err(e);
    }
    let wall_s = t0.elapsed().as_secs_f64();

    let summary = RunReport {
        seed: spec.seed,
        planner: planner_name(spec.planner).into(),
        gamma: gamma_name(spec.gamma),
        tube_enabled: !spec.disable_tube,
        success: report.success,
        total_sim_s: report.total_sim_s,
        wall_s,
        sensor: spec.sensor,
        segments: report.segments.iter().map(SegmentReport::from_result).collect(),
    };
    write_json(&args.out.join(REPORT_FILE), &summary)?;

    for s in &summary.segments {
        println!(
            "segment {}: reached={} sim={:.1}s tube_exits={} gate={}+{} mass_est={:.3}kg",
            s.segment,
            s.reached,
            s.elapsed_sim_s,
            s.tube_exits,
            s.gate_accepted,
            s.gate_rejected,
            s.mass_estimate_kg
        );
    }
    println!(
        "run {}: {:.1} simulated s in {:.1} wall s, artifacts in {}",
        if summary.success { "succeeded" } else { "FAILED" },
        summary.total_sim_s,
        wall_s,
        args.out.display()
    );

    if summary.success {
        return Ok(0);
    }
    let last = summary.segments.last();
    Ok(match last {
        Some(s) if s.planner_failure.is_some() => EXIT_NO_PATH,
        Some(s) if s.tube_infeasible.is_some() => EXIT_TUBE_INFEASIBLE,
        Some(s) if s.timed_out => EXIT_TIMEOUT,
        _ => EXIT_RUNTIME,
    })
}

#[derive(Serialize)]
struct PlanReport {
    segment: usize,
    planner: String,
    seed: u64,
    knots: usize,
    duration_s: f64,
    wall_s: f64,
}

fn cmd_plan(args: &PlanArgs) -> Result<u8, Error> {
    let spec = build_spec(&args.scenario)?;
    let (x0, goal) = spec.leg(args.segment)?;
    // leg 0 flies unloaded; the later legs carry the payload
    let p = if args.segment == 0 {
        spec.true_params_before_pickup
    } else {
        spec.true_params_after_pickup
    };
    let t0 = Instant::now();
    let traj = plan_offline(&x0, &goal, &spec, &p, spec.seed ^ (args.segment as u64))?;
    let wall_s = t0.elapsed().as_secs_f64();

    std::fs::create_dir_all(&args.out)?;
    let mut sink = CsvSink::create(&args.out.join("trajectory.csv"), TRAJECTORY_HEADER)?;
    for k in traj.knots() {
        sink.row(&knot_row(k))?;
    }
    sink.flush()?;
    let report = PlanReport {
        segment: args.segment,
        planner: planner_name(spec.planner).into(),
        seed: spec.seed,
        knots: traj.len(),
        duration_s: traj.duration(),
        wall_s,
    };
    write_json(&args.out.join("plan.json"), &report)?;
    println!(
        "planned leg {} with {}: {} knots over {:.1} s ({:.2} wall s)",
        args.segment,
        report.planner,
        report.knots,
        report.duration_s,
        wall_s
    );
    Ok(0)
}

fn cmd_replay(args: &ReplayArgs) -> Result<u8, Error> {
    let report = replay::replay_run(&args.run, !args.gate_off)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| args.run.join("replay.json"));
    write_json(&out, &report)?;
    for s in &report.segments {
        println!(
            "segment {}: {} samples ({} accepted, {} rejected), {} divergent rows, {}",
            s.segment,
            s.samples,
            s.accepted,
            s.rejected,
            s.divergent_rows,
            if s.matches_recorded {
                "matches the recorded run"
            } else {
                "differs from the recorded run"
            }
        );
    }
    if report.truncated {
        println!("samples stream was truncated; replayed the prefix");
    }
    println!("replay report written to {}", out.display());
    Ok(0)
}

fn cmd_bench(args: &BenchArgs) -> Result<u8, Error> {
    let mut rows = Vec::new();
    let all = args.suite == "all";
    if all || args.suite == "controller" {
        rows.push(benchrun::bench_controller(args.iterations)?);
    }
    if all || args.suite == "kino-rrt" {
        rows.push(benchrun::bench_kino(args.plans, args.seed)?);
    }
    if all || args.suite == "lqr-rrt-star" {
        rows.push(benchrun::bench_lqr_rrt(args.plans, args.seed)?);
    }
    if all || args.suite == "riccati" {
        rows.push(benchrun::bench_riccati(args.iterations)?);
    }
    if rows.is_empty() {
        return Err(Error::Invalid(format!(
            "unknown suite {:?} (expected all, controller, kino-rrt, lqr-rrt-star or riccati)",
            args.suite
        )));
    }
    benchrun::print_table(&rows);
    Ok(if rows.iter().all(|r| r.pass) {
        0
    } else {
        EXIT_RUNTIME
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Plan(a) => cmd_plan(a),
        Command::EstimateReplay(a) => cmd_replay(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}
