//! Wall-clock timing of the hot paths, with the real-time budgets the
//! flight loop needs: the robust controller step must fit a 5 Hz loop
//! with margin, and the kinodynamic planner must replan within seconds.
//! The asymptotically optimal planner has no budget; its time is recorded
//! for comparison.

use freeflyer_core::dynamics::InertialParams;
use freeflyer_core::scenario_sim::{plan_offline, PlannerChoice, ScenarioSpec};
use freeflyer_core::trajectory::Knot;
use freeflyer_core::tube_control::{
    ancillary_gain, axis_dynamics, tube_mpc_step, AxisBounds, DisturbanceSet, TubeCfg, TubeSpec,
};
use freeflyer_core::world::KeepIn;
use freeflyer_core::{Error, State, Trajectory, Wrench};
use nalgebra::Vector3;
use std::time::Instant;

#[derive(Debug)]
pub struct Stat {
    pub name: &'static str,
    pub runs: usize,
    pub mean_ms: f64,
    pub std_ms: f64,
    pub median_ms: f64,
    pub max_ms: f64,
    /// (description, limit in ms, which statistic it applies to).
    pub budget: Option<(&'static str, f64)>,
    pub pass: bool,
}

fn stats(name: &'static str, mut ms: Vec<f64>, budget: Option<(&'static str, f64)>) -> Stat {
    let n = ms.len();
    let mean = ms.iter().sum::<f64>() / n as f64;
    let var = ms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    ms.sort_by(|a, b| a.total_cmp(b));
    let median = ms[n / 2];
    let max = *ms.last().unwrap();
    let pass = match budget {
        Some(("mean", limit)) => mean <= limit,
        Some(("median", limit)) => median <= limit,
        _ => true,
    };
    Stat {
        name,
        runs: n,
        mean_ms: mean,
        std_ms: var.sqrt(),
        median_ms: median,
        max_ms: max,
        budget,
        pass,
    }
}

pub fn bench_controller(iterations: usize) -> Result<Stat, Error> {
    let p = InertialParams::astrobee();
    let keep_in = KeepIn::jem();
    let bounds = [0, 1, 2].map(|i| AxisBounds {
        pos_min: keep_in.min[i],
        pos_max: keep_in.max[i],
        vel_max: 0.5,
        u_max: 0.4,
    });
    let cfg = TubeCfg::default();
    let spec = TubeSpec::build(p.mass, bounds, &DisturbanceSet::default_level(), &cfg)?;
    // constant hold reference; the perturbed start keeps the QP active
    let hold = State::at_rest(Vector3::new(0.0, 0.5, 0.0));
    let reference = Trajectory::new(vec![
        Knot { stamp: 0.0, state: hold, wrench: Wrench::zero(0.0) },
        Knot { stamp: 120.0, state: hold, wrench: Wrench::zero(120.0) },
    ])?;
    let mut ms = Vec::with_capacity(iterations);
    for k in 0..iterations {
        let mut x = hold;
        // deterministic sweep of initial offsets inside the tube's reach
        let phase = k as f64 * 0.37;
        x.r += Vector3::new(0.03 * phase.sin(), 0.05 * phase.cos(), 0.02 * (2.0 * phase).sin());
        x.v += Vector3::new(0.01 * phase.cos(), -0.01 * phase.sin(), 0.005);
        let t0 = Instant::now();
        let cmd = tube_mpc_step(&x, &reference, 1.0, &spec, &cfg)?;
        ms.push(t0.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box(cmd);
    }
    Ok(stats("controller-step", ms, Some(("mean", 10.0))))
}

fn bench_planner(choice: PlannerChoice, runs: usize, seed: u64) -> Result<Vec<f64>, Error> {
    let mut ms = Vec::with_capacity(runs);
    for k in 0..runs {
        let mut spec = ScenarioSpec::default_scenario(seed + k as u64);
        spec.planner = choice;
        let (x0, goal) = spec.leg(0)?;
        let p = spec.true_params_before_pickup;
        let t0 = Instant::now();
        let traj = plan_offline(&x0, &goal, &spec, &p, spec.seed)?;
        ms.push(t0.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box(traj);
    }
    Ok(ms)
}

pub fn bench_kino(runs: usize, seed: u64) -> Result<Stat, Error> {
    Ok(stats(
        "kino-rrt-plan",
        bench_planner(PlannerChoice::KinoRrt, runs, seed)?,
        Some(("median", 2000.0)),
    ))
}

pub fn bench_lqr_rrt(runs: usize, seed: u64) -> Result<Stat, Error> {
    Ok(stats(
        "lqr-rrt-star-plan",
        bench_planner(PlannerChoice::LqrRrtStar, runs, seed)?,
        None,
    ))
}

pub fn bench_riccati(iterations: usize) -> Result<Stat, Error> {
    let cfg = TubeCfg::default();
    let (a, b) = axis_dynamics(InertialParams::astrobee().mass, cfg.dt);
    let mut ms = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let t0 = Instant::now();
        let kp = ancillary_gain(&a, &b, &cfg.q, cfg.r)?;
        ms.push(t0.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box(kp);
    }
    Ok(stats("ancillary-riccati", ms, None))
}

pub fn print_table(rows: &[Stat]) {
    println!(
        "{:<20} {:>5} {:>11} {:>11} {:>11} {:>11}  {:<16} {}",
        "suite", "runs", "mean_ms", "std_ms", "median_ms", "max_ms", "budget", "status"
    );
    for s in rows {
        let budget = match s.budget {
            Some((stat, limit)) => format!("{stat} <= {limit}"),
            None => "-".into(),
        };
        println!(
            "{:<20} {:>5} {:>11.3} {:>11.3} {:>11.3} {:>11.3}  {:<16} {}",
            s.name,
            s.runs,
            s.mean_ms,
            s.std_ms,
            s.median_ms,
            s.max_ms,
            budget,
            if s.pass { "ok" } else { "OVER BUDGET" }
        );
    }
}
