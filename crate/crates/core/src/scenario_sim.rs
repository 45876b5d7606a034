//! Deterministic three-segment assembly scenario: waypoint A to B on an
//! offline plan with standard MPC, B to C with online replanning,
//! excitation-aware local plans, and parameter learning under a
//! payload-perturbed model, then C to A tracking the offline plan with
//! the robust tube controller and the learned model.
//!
//! The loop is single-threaded and tick-driven; every random draw comes
//! from counters seeded off the scenario seed, so telemetry is
//! bit-identical across runs.

use nalgebra::{Matrix3, UnitQuaternion, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, InertialParams, State, Wrench, WrenchLimits};
use crate::error::{Error, Result};
use crate::estimator::{
    self, InertialBelief, MeasurementSample, NoiseCov, OutlierGate, ScalingModel,
};
use crate::global_planner::{
    kino_rrt, lqr_rrt_star, shortcut, GoalTolerance, KinoConfig, MotionPrimitiveSet, RrtConfig,
    ShortcutConfig,
};
use crate::info_planner::{covar_weight, fisher_info, plan_local, InfoWeights, LocalCfg, LocalPlan};
use crate::trajectory::Trajectory;
use crate::tube_control::{
    attitude_lqr_step, tube_mpc_step, AttitudeLqr, AxisBounds, DisturbanceSet, TubeCfg, TubeSpec,
};
use crate::world::{CheckMode, Ellipsoid, KeepIn, WorldModel};

/// Control period, s (5 Hz).
pub const CONTROL_DT: f64 = 0.2;
/// Truth integration sub-steps per control period.
pub const TRUTH_SUBSTEPS: usize = 4;
/// Measurements per control period (10 Hz sensing).
pub const SENSOR_PER_CONTROL: usize = 2;
/// Local replan period, s.
pub const REPLAN_PERIOD: f64 = 12.0;

/// Per-segment pipeline switches, mirroring the three-maneuver table:
/// A-B none, B-C all, C-A robust tracking only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentFlags {
    pub online_planning: bool,
    pub robust_tracking: bool,
    pub model_improvement: bool,
}

/// Sensor corruption model. With all levels zero, sensing is exact.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SensorModel {
    pub pos_std: f64,
    pub att_std: f64,
    pub vel_std: f64,
    pub ang_vel_std: f64,
    /// Acceleration measurement noise fed to the estimator, m/s^2.
    pub accel_std: f64,
    /// Angular-acceleration noise fed to the estimator, rad/s^2.
    pub ang_accel_std: f64,
    /// Probability per sensor tick of a localization jump.
    pub jump_prob: f64,
    /// Position jump magnitude range, m.
    pub jump_pos: (f64, f64),
    /// Attitude jump magnitude range, rad.
    pub jump_att: (f64, f64),
    /// Per-axis accelerometer scale error injected into raw readings.
    pub accel_scale: Vector3<f64>,
}

impl SensorModel {
    pub fn exact() -> Self {
        Self {
            pos_std: 0.0,
            att_std: 0.0,
            vel_std: 0.0,
            ang_vel_std: 0.0,
            accel_std: 0.0,
            ang_accel_std: 0.0,
            jump_prob: 0.0,
            jump_pos: (0.0, 0.0),
            jump_att: (0.0, 0.0),
            accel_scale: Vector3::new(1.0, 1.0, 1.0),
        }
    }

    pub fn nominal() -> Self {
        Self {
            pos_std: 2e-3,
            att_std: 2e-3,
            vel_std: 1e-3,
            ang_vel_std: 5e-4,
            // finite-difference smoothing leaves less noise than the raw
            // IMU figures the estimator is tuned against
            accel_std: 1e-3,
            ang_accel_std: 8e-3,
            jump_prob: 0.002,
            jump_pos: (0.05, 0.10),
            jump_att: (2f64.to_radians(), 5f64.to_radians()),
            accel_scale: Vector3::new(1.0, 1.0, 1.0),
        }
    }
}

/// Truth-side disturbance levels applied to the plant.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DisturbanceModel {
    /// Body-frame force disturbance bound per axis, N.
    pub force_max: f64,
    /// Body-frame torque disturbance bound per axis, N m.
    pub torque_max: f64,
    /// Fraction of control periods drawing the worst case: every axis at
    /// a bound with random sign (a corner of the disturbance box) instead
    /// of uniform inside it.
    #[serde(default)]
    pub corner_fraction: f64,
}

impl DisturbanceModel {
    pub fn none() -> Self {
        Self {
            force_max: 0.0,
            torque_max: 0.0,
            corner_fraction: 0.0,
        }
    }

    pub fn nominal() -> Self {
        Self {
            force_max: 0.01,
            torque_max: 0.001,
            corner_fraction: 0.0,
        }
    }
}

/// Which offline planner produces the A-B and C-A references.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlannerChoice {
    LqrRrtStar,
    KinoRrt,
}

/// Excitation-weight policy for the online local planner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GammaMode {
    /// Covariance-driven decay (the default).
    Auto,
    /// Excitation disabled.
    Off,
    /// Constant weight on every parameter channel.
    Fixed(f64),
}

/// Full scenario description.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub waypoint_a: State,
    pub waypoint_b: State,
    pub waypoint_c: State,
    pub world: WorldModel,
    pub true_params_before_pickup: InertialParams,
    pub true_params_after_pickup: InertialParams,
    pub sensor: SensorModel,
    pub disturbance: DisturbanceModel,
    /// Disturbance set the tube controller is designed against; the
    /// injected truth disturbance plus modeling error must stay inside it
    /// for the containment guarantee to carry over.
    pub tube_w: DisturbanceSet,
    /// Global scale on the excitation weights fed to the local planner.
    pub excitation_gain: f64,
    /// Per-parameter excitation priorities (mass, Ixx, Iyy, Izz); the
    /// product with the gain is the starting Γ handed to the planner.
    pub excitation_grades: Vector4<f64>,
    pub seed: u64,
    pub segments: [SegmentFlags; 3],
    pub planner: PlannerChoice,
    pub gamma: GammaMode,
    /// Force the non-robust controller everywhere (comparison runs).
    pub disable_tube: bool,
    /// Hold position at C until the goal tolerance is met.
    pub regulate_at_c: bool,
    pub goal_tol: GoalTolerance,
    pub timeout_s: f64,
    pub limits: WrenchLimits,
    /// Belief covariance inflation applied at the payload pickup.
    pub pickup_inflation: f64,
}

impl ScenarioSpec {
    /// Default scenario in the station test-volume geometry: a central
    /// static obstacle blocks the straight A-B and C-A legs.
    pub fn default_scenario(seed: u64) -> Self {
        let obstacle = Ellipsoid::sphere(Vector3::new(0.0, 0.8, 0.0), 0.25);
        let world = WorldModel::new(KeepIn::jem(), vec![obstacle]);
        let before = InertialParams::astrobee();
        // grasped payload: +2 kg, +40-60% inertia, CM pulled off-origin
        let mut after = before;
        after.mass += 2.0;
        after.inertia = Matrix3::from_diagonal(&Vector3::new(
            before.inertia[(0, 0)] * 1.6,
            before.inertia[(1, 1)] * 1.5,
            before.inertia[(2, 2)] * 1.4,
        ));
        after.c = Vector3::new(0.005, 0.0, 0.0);
        Self {
            waypoint_a: State::at_rest(Vector3::new(0.0, 2.4, 0.0)),
            waypoint_b: State::at_rest(Vector3::new(0.0, -2.4, 0.0)),
            waypoint_c: State::at_rest(Vector3::new(0.35, -0.8, 0.0)),
            world,
            true_params_before_pickup: before,
            true_params_after_pickup: after,
            sensor: SensorModel::nominal(),
            disturbance: DisturbanceModel::nominal(),
            tube_w: DisturbanceSet::default_level(),
            excitation_gain: 25.0,
            excitation_grades: Vector4::new(1.0, 0.15, 0.5, 0.015),
            seed,
            segments: [
                SegmentFlags {
                    online_planning: false,
                    robust_tracking: false,
                    model_improvement: false,
                },
                SegmentFlags {
                    online_planning: true,
                    robust_tracking: true,
                    model_improvement: true,
                },
                SegmentFlags {
                    online_planning: false,
                    robust_tracking: true,
                    model_improvement: false,
                },
            ],
            planner: PlannerChoice::LqrRrtStar,
            gamma: GammaMode::Auto,
            disable_tube: false,
            regulate_at_c: true,
            goal_tol: GoalTolerance::default(),
            timeout_s: 300.0,
            limits: WrenchLimits::astrobee_2000rpm(),
            pickup_inflation: 25.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("A", &self.waypoint_a),
            ("B", &self.waypoint_b),
            ("C", &self.waypoint_c),
        ] {
            if !self.world.position_free(&w.r, CheckMode::EllipsoidOnEllipsoid) {
                return Err(Error::Invalid(format!("waypoint {name} is in collision")));
            }
        }
        self.true_params_before_pickup.validate()?;
        self.true_params_after_pickup.validate()?;
        Ok(())
    }

    /// Start and goal states of leg 0 (A-B), 1 (B-C) or 2 (C-A).
    pub fn leg(&self, segment: usize) -> Result<(State, State)> {
        match segment {
            0 => Ok((self.waypoint_a, self.waypoint_b)),
            1 => Ok((self.waypoint_b, self.waypoint_c)),
            2 => Ok((self.waypoint_c, self.waypoint_a)),
            _ => Err(Error::Invalid(format!("no segment {segment}"))),
        }
    }
}

/// Exact plant state; controllers never touch this directly.
#[derive(Debug, Clone)]
pub struct TruthState {
    pub x: State,
    pub p: InertialParams,
    pub applied: Vec<Wrench>,
}

impl TruthState {
    pub fn new(x: State, p: InertialParams) -> Self {
        Self {
            x,
            p,
            applied: Vec::new(),
        }
    }
}

/// One control-period telemetry row.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TickRecord {
    pub t: f64,
    pub truth: State,
    pub estimated: State,
    /// Inverse-parameter estimate [1/m, 1/Ixx, 1/Iyy, 1/Izz].
    pub theta: Vector4<f64>,
    /// Marginal standard deviations of `theta`.
    pub theta_std: Vector4<f64>,
    /// Commanded wrench, body frame.
    pub u_cmd: Wrench,
    /// Applied wrench including the injected disturbance.
    pub u_applied: Wrench,
    /// Nominal (feedforward) force component, inertial frame.
    pub v_nominal: Vector3<f64>,
    /// Nominal tube-center state per axis (position, velocity).
    pub z_nominal: [nalgebra::Vector2<f64>; 3],
    /// Ancillary force component, inertial frame.
    pub u_ancillary: Vector3<f64>,
    /// Cumulative Fisher information diagonal.
    pub fim_diag: Vector4<f64>,
    /// Current excitation weights.
    pub gamma: Vector4<f64>,
    /// Tracking error is inside the tube cross-section on every axis.
    pub in_tube: bool,
    /// QP fell back to pure ancillary regulation this step.
    pub fallback: bool,
    /// 0 none, 1 replan, 2 localization jump, 3 both.
    pub event: u8,
}

/// Outcome of one segment.
#[derive(Debug, Clone)]
pub struct SegmentResult {
    pub segment: usize,
    pub flags: SegmentFlags,
    pub telemetry: Vec<TickRecord>,
    /// Estimator stream: every synchronized sample fed to the filter with
    /// the posterior it produced, enough to replay the estimation offline.
    pub samples: Vec<SampleRecord>,
    pub truth: TruthState,
    /// Belief the segment started from.
    pub belief_prior: InertialBelief,
    pub belief: InertialBelief,
    pub reached: bool,
    pub timed_out: bool,
    pub elapsed_sim_s: f64,
    pub planner_failure: Option<String>,
    pub tube_infeasible: Option<String>,
    pub tube_exits: usize,
    pub gate_accepted: usize,
    pub gate_rejected: usize,
    /// Cumulative Fisher information at segment end.
    pub fim_final: Vector4<f64>,
    /// Executed path passes the collision check post hoc.
    pub executed_free: bool,
    /// Max position tracking error against the active reference, m.
    pub max_tracking_error: f64,
}

/// One estimator update as it happened during the run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample: MeasurementSample,
    pub accepted: bool,
    /// Posterior after this update.
    pub theta: Vector4<f64>,
    pub p_diag: Vector4<f64>,
}

/// Outcome of the full three-segment run.
#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub segments: Vec<SegmentResult>,
    pub success: bool,
    pub total_sim_s: f64,
}

fn tube_bounds(world: &WorldModel, limits: &WrenchLimits) -> [AxisBounds; 3] {
    let (lo, hi) = (world.keep_in.min, world.keep_in.max);
    [0, 1, 2].map(|i| AxisBounds {
        pos_min: lo[i],
        pos_max: hi[i],
        vel_max: 0.5,
        u_max: limits.force[i],
    })
}

/// Offline reference for one leg: sample, shortcut, then append a goal ramp.
pub fn plan_offline(
    x0: &State,
    x_goal: &State,
    spec: &ScenarioSpec,
    p: &InertialParams,
    seed: u64,
) -> Result<Trajectory> {
    // plan against reduced force authority so the reference feedforward
    // fits inside the tightened input box during robust tracking
    let mut limits = spec.limits;
    limits.force *= 0.7;
    let mut traj = match spec.planner {
        PlannerChoice::LqrRrtStar => {
            // attitude-hold legs: keep the sampler planar-free so the
            // reference carries no yaw wiggle for the attitude loop to chase
            let cfg = RrtConfig {
                seed,
                limits,
                goal_tol: spec.goal_tol,
                yaw_range: 0.0,
                ..RrtConfig::default()
            };
            let (traj, _) = lqr_rrt_star(x0, x_goal, &spec.world, p, &cfg)?;
            let sc = ShortcutConfig {
                seed: seed ^ 0x5c,
                limits,
                ..ShortcutConfig::default()
            };
            shortcut(&traj, &spec.world, p, &sc)?
        }
        PlannerChoice::KinoRrt => {
            let mp = MotionPrimitiveSet::axis_aligned(&limits, 0.5, 2.0);
            // primitive endpoints rarely land inside the tight waypoint
            // ball; accept a looser one and let the goal ramp below close
            // the remaining fraction of a meter
            let mut goal_tol = spec.goal_tol;
            goal_tol.pos = (4.0 * goal_tol.pos).max(0.2);
            goal_tol.vel = (2.0 * goal_tol.vel).max(0.1);
            let cfg = KinoConfig {
                seed,
                goal_tol,
                yaw_range: 0.0,
                max_iterations: 20_000,
                ..KinoConfig::default()
            };
            let (traj, _) = kino_rrt(x0, x_goal, &spec.world, p, &mp, &cfg)?;
            traj
        }
    };
    // the planner stops inside the goal tolerance, not on the waypoint:
    // append a slow ramp onto the exact goal so regulation converges there
    let t_end = traj.last().map(|k| k.stamp).unwrap_or(0.0);
    let mut goal_knot = *x_goal;
    goal_knot.v = Vector3::zeros();
    goal_knot.w = Vector3::zeros();
    for dt in [25.0, 26.0] {
        traj.push(crate::trajectory::Knot {
            stamp: t_end + dt,
            state: goal_knot,
            wrench: Wrench::zero(t_end + dt),
        })?;
    }
    Ok(traj)
}

/// Excitation weights at segment start: graded priorities (mass and Ixx
/// pushed hardest, Izz least) scaled by the global gain, with the decay
/// floor set to a fraction of the starting uncertainty so the weights
/// shut off once the belief has contracted enough.
/// Measurement covariance the estimator assumes in this scenario, matched
/// to the configured sensor instead of the conservative library default;
/// a mismatched W skews the per-channel confidence the weights key on.
/// Measurement noise the estimator assumes, matched to the sensor model.
pub fn scenario_noise(sensor: &SensorModel) -> estimator::NoiseCov {
    let sa = sensor.accel_std.max(1e-4);
    let salpha = sensor.ang_accel_std.max(1e-4);
    let mut w = estimator::NoiseCov::zeros();
    for i in 0..3 {
        w[(i, i)] = sa * sa;
        w[(i + 3, i + 3)] = salpha * salpha;
    }
    w
}

fn info_base(spec: &ScenarioSpec, belief_at_start: &InertialBelief) -> InfoWeights {
    let grades = spec.excitation_grades * spec.excitation_gain;
    // theta-space stds: the decay gate compares against sqrt(P_ii)
    let sigma_n = Vector4::from_fn(|i, _| belief_at_start.p_cov[(i, i)].sqrt()) / 8.0;
    InfoWeights::new(grades, sigma_n)
}

fn gamma_weights(spec: &ScenarioSpec, base: &InfoWeights, belief: &InertialBelief) -> InfoWeights {
    match spec.gamma {
        GammaMode::Off => InfoWeights::off(),
        GammaMode::Fixed(v) => InfoWeights {
            gamma: Vector4::repeat(v),
            ..*base
        },
        GammaMode::Auto => covar_weight(belief, base),
    }
}

struct SegmentRig {
    flags: SegmentFlags,
    reference: Trajectory,
    tube: TubeSpec,
    tube_cfg: TubeCfg,
    att: AttitudeLqr,
    local_cfg: LocalCfg,
    info_base: InfoWeights,
    w_cov: NoiseCov,
    rng: ChaCha8Rng,
}

fn build_rig(
    spec: &ScenarioSpec,
    segment: usize,
    belief: &InertialBelief,
    reference: Trajectory,
) -> Result<SegmentRig> {
    let flags = spec.segments[segment];
    let model = belief.params();
    let tube_cfg = TubeCfg::default();
    let bounds = tube_bounds(&spec.world, &spec.limits);
    let robust = flags.robust_tracking && !spec.disable_tube;
    let tube = if robust {
        TubeSpec::build(model.mass, bounds, &spec.tube_w, &tube_cfg)?
    } else {
        TubeSpec::standard(model.mass, bounds, &tube_cfg)?
    };
    let att = AttitudeLqr::design(
        &Vector3::new(
            model.inertia[(0, 0)],
            model.inertia[(1, 1)],
            model.inertia[(2, 2)],
        ),
        CONTROL_DT,
        &spec.limits,
    )?;
    let mut local_cfg = LocalCfg {
        limits: spec.limits,
        ..LocalCfg::default()
    };
    local_cfg.limits.force *= 0.7;
    // keep excitation as low-rate torque wiggle: sustained spin couples the
    // axes through the Euler terms and the attitude hold then smears
    // information across channels the weights meant to separate
    for i in 0..3 {
        local_cfg.cost.q[(i + 9, i + 9)] = 400.0;
        local_cfg.cost.h_terminal[(i + 9, i + 9)] = 800.0;
        local_cfg.cost.r[(i + 3, i + 3)] = 50.0;
    }
    let rng = ChaCha8Rng::seed_from_u64(spec.seed ^ (0x9e3779b97f4a7c15u64.wrapping_mul(segment as u64 + 1)));
    Ok(SegmentRig {
        flags,
        reference,
        tube,
        tube_cfg,
        att,
        local_cfg,
        info_base: info_base(spec, belief),
        w_cov: scenario_noise(&spec.sensor),
        rng,
    })
}

fn noisy_state(truth: &State, sensor: &SensorModel, jump: &mut (Vector3<f64>, Vector3<f64>), rng: &mut ChaCha8Rng) -> (State, bool) {
    // persistent localization-jump offset with exponential recovery
    let mut jumped = false;
    if sensor.jump_prob > 0.0 && rng.gen::<f64>() < sensor.jump_prob {
        let dir = random_unit(rng);
        let mag = rng.gen_range(sensor.jump_pos.0..=sensor.jump_pos.1);
        jump.0 += dir * mag;
        let axis = random_unit(rng);
        let ang = rng.gen_range(sensor.jump_att.0..=sensor.jump_att.1);
        jump.1 += axis * ang;
        jumped = true;
    }
    let gauss = |rng: &mut ChaCha8Rng, std: f64| {
        if std > 0.0 {
            std * rand_distr::StandardNormal.sample_from(rng)
        } else {
            0.0
        }
    };
    let est = State {
        r: truth.r
            + jump.0
            + Vector3::from_fn(|_, _| gauss(rng, sensor.pos_std)),
        q: UnitQuaternion::from_scaled_axis(
            jump.1 + Vector3::from_fn(|_, _| gauss(rng, sensor.att_std)),
        ) * truth.q,
        v: truth.v + Vector3::from_fn(|_, _| gauss(rng, sensor.vel_std)),
        w: truth.w + Vector3::from_fn(|_, _| gauss(rng, sensor.ang_vel_std)),
    };
    jump.0 *= 0.9;
    jump.1 *= 0.9;
    (est, jumped)
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 {
            return v / n;
        }
    }
}

trait SampleExt {
    fn sample_from(&self, rng: &mut ChaCha8Rng) -> f64;
}

impl SampleExt for rand_distr::StandardNormal {
    fn sample_from(&self, rng: &mut ChaCha8Rng) -> f64 {
        rand_distr::Distribution::sample(self, rng)
    }
}

/// Run one segment of the scenario. `truth` and `belief` carry the plant
/// and estimator across segments; the payload swap for segment 1 must be
/// applied by the caller (see [`run_scenario`]).
pub fn run_segment(
    spec: &ScenarioSpec,
    segment: usize,
    truth: TruthState,
    belief: InertialBelief,
) -> Result<SegmentResult> {
    let flags = spec.segments[segment];
    let (_, goal) = spec.leg(segment)?;
    let mut truth = truth;
    let mut belief = belief;
    let belief_prior = belief;
    let model = belief.params();

    // offline reference for every segment; the online segment treats it
    // as the global guide that local plans are anchored to
    let reference = match plan_offline(&truth.x, &goal, spec, &model, spec.seed ^ (segment as u64)) {
        Ok(t) => t,
        Err(e @ Error::NoPath(_)) => {
            return Ok(SegmentResult {
                segment,
                flags,
                telemetry: Vec::new(),
                samples: Vec::new(),
                truth,
                belief_prior,
                belief,
                reached: false,
                timed_out: false,
                elapsed_sim_s: 0.0,
                planner_failure: Some(e.to_string()),
                tube_infeasible: None,
                tube_exits: 0,
                gate_accepted: 0,
                gate_rejected: 0,
                fim_final: Vector4::zeros(),
                executed_free: true,
                max_tracking_error: 0.0,
            });
        }
        Err(e) => return Err(e),
    };

    let mut rig = match build_rig(spec, segment, &belief, reference) {
        Ok(r) => r,
        Err(e @ Error::TubeInfeasible(_)) => {
            return Ok(SegmentResult {
                segment,
                flags,
                telemetry: Vec::new(),
                samples: Vec::new(),
                truth,
                belief_prior,
                belief,
                reached: false,
                timed_out: false,
                elapsed_sim_s: 0.0,
                planner_failure: None,
                tube_infeasible: Some(e.to_string()),
                tube_exits: 0,
                gate_accepted: 0,
                gate_rejected: 0,
                fim_final: Vector4::zeros(),
                executed_free: true,
                max_tracking_error: 0.0,
            });
        }
        Err(e) => return Err(e),
    };

    let mut gate = OutlierGate::default();
    let scale = ScalingModel::default();
    let mut jump = (Vector3::zeros(), Vector3::zeros());
    let mut fim = Vector4::zeros();
    let mut gamma_now = Vector4::zeros();
    let mut local: Option<LocalPlan> = None;
    let mut last_replan = f64::NEG_INFINITY;
    let mut telemetry = Vec::new();
    let mut samples = Vec::new();
    let mut executed = vec![truth.x.r];
    let mut tube_exits = 0usize;
    let mut max_err = 0.0f64;
    let mut reached = false;
    let mut timed_out = false;
    let mut t = 0.0f64;
    let substep = CONTROL_DT / TRUTH_SUBSTEPS as f64;
    let sensor_dt = CONTROL_DT / SENSOR_PER_CONTROL as f64;
    let skip_regulation = segment == 1 && !spec.regulate_at_c;

    loop {
        if spec.goal_tol.satisfied(&truth.x, &goal) {
            reached = true;
            break;
        }
        if skip_regulation && t >= rig.reference.duration() {
            reached = spec
                .goal_tol
                .satisfied(&truth.x, &goal);
            break;
        }
        if t >= spec.timeout_s {
            timed_out = true;
            break;
        }

        let (x_hat, jumped) = noisy_state(&truth.x, &spec.sensor, &mut jump, &mut rig.rng);

        // online local replanning with excitation weighting
        let mut replanned = false;
        if rig.flags.online_planning && t - last_replan >= REPLAN_PERIOD - 1e-9 {
            let weights = if rig.flags.model_improvement {
                gamma_weights(spec, &rig.info_base, &belief)
            } else {
                InfoWeights::off()
            };
            gamma_now = weights.gamma;
            match plan_local(
                &x_hat,
                &rig.reference,
                t,
                &belief,
                &weights,
                &spec.world,
                local.as_ref(),
                &rig.local_cfg,
            ) {
                Ok(plan) => {
                    local = Some(plan);
                    last_replan = t;
                    replanned = true;
                }
                Err(_) => {
                    // keep tracking the previous reference; try again next period
                    last_replan = t;
                }
            }
        }
        let active: &Trajectory = local.as_ref().map(|p| &p.traj).unwrap_or(&rig.reference);

        // control: translational MPC + attitude loop with feedforward
        let cmd = tube_mpc_step(&x_hat, active, t, &rig.tube, &rig.tube_cfg)?;
        let tau_fb = attitude_lqr_step(&x_hat, active, t, &rig.att)?;
        let tau_ff = active.wrench_at(t)?.torque;
        let f_body = x_hat.q.inverse() * cmd.u_total;
        let u_cmd = dynamics::saturate(
            &Wrench::new(f_body, tau_ff + tau_fb, t),
            &spec.limits,
        );

        // tube containment bookkeeping against the nominal
        let mut in_tube = true;
        for axis in 0..3 {
            let e = nalgebra::Vector2::new(truth.x.r[axis], truth.x.v[axis]) - cmd.z_bar[axis];
            if !rig.tube.axes[axis].contains(&e) {
                in_tube = false;
            }
        }
        if !in_tube && rig.flags.robust_tracking && !spec.disable_tube {
            tube_exits += 1;
        }
        let ref_state = active.sample(t)?;
        max_err = max_err.max((truth.x.r - ref_state.r).norm());

        // plant update with injected disturbance, truth integrator only
        // short-circuit keeps the draw sequence of corner-free runs intact
        let corner = spec.disturbance.corner_fraction > 0.0
            && rig.rng.gen::<f64>() < spec.disturbance.corner_fraction;
        let level = |rng: &mut ChaCha8Rng| -> f64 {
            if corner {
                if rng.gen::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            } else {
                rng.gen_range(-1.0..=1.0)
            }
        };
        let dist = Wrench::new(
            Vector3::from_fn(|_, _| level(&mut rig.rng) * spec.disturbance.force_max),
            Vector3::from_fn(|_, _| level(&mut rig.rng) * spec.disturbance.torque_max),
            t,
        );
        let u_applied = Wrench::new(u_cmd.force + dist.force, u_cmd.torque + dist.torque, t);
        let (v_before, w_before) = (truth.x.v, truth.x.w);
        let mut sensor_marks = vec![(truth.x, 0.0); 0];
        let mut x_next = truth.x;
        for s in 0..TRUTH_SUBSTEPS {
            x_next = dynamics::step_rk4(&x_next, &u_applied, &truth.p, substep)?;
            if (s + 1) % (TRUTH_SUBSTEPS / SENSOR_PER_CONTROL) == 0 {
                sensor_marks.push((x_next, (s + 1) as f64 * substep));
            }
        }
        truth.applied.push(u_applied);

        // estimator updates at the sensor rate from finite-difference
        // accelerations of the truth motion
        if rig.flags.model_improvement {
            // virtual accelerometer at the CM: with a CM offset the body
            // origin picks up rotational accelerations that would bias the
            // mass channel
            let v_cm = |x: &State| x.v + x.q * x.w.cross(&truth.p.c);
            let mut v_prev = v_cm(&State { v: v_before, w: w_before, ..truth.x });
            let mut w_prev = w_before;
            let mut q_mid_prev = truth.x.q;
            for (xm, dt_off) in &sensor_marks {
                let a_inertial = (v_cm(xm) - v_prev) / sensor_dt;
                let a_body = q_mid_prev.inverse() * a_inertial;
                let alpha = (xm.w - w_prev) / sensor_dt;
                let gauss = |rng: &mut ChaCha8Rng, std: f64| {
                    if std > 0.0 {
                        std * rand_distr::StandardNormal.sample_from(rng)
                    } else {
                        0.0
                    }
                };
                let sample = MeasurementSample {
                    stamp: t + dt_off,
                    a: Vector3::from_fn(|i, _| {
                        spec.sensor.accel_scale[i] * a_body[i]
                            + gauss(&mut rig.rng, spec.sensor.accel_std)
                    }),
                    alpha: alpha
                        + Vector3::from_fn(|_, _| gauss(&mut rig.rng, spec.sensor.ang_accel_std)),
                    u: u_cmd,
                };
                let accepted_before = gate.accepted;
                belief = estimator::rls_update(&belief, &sample, &rig.w_cov, &mut gate, &scale)?;
                let accepted = gate.accepted > accepted_before;
                if accepted {
                    let (info, _) = fisher_info(&[u_cmd], &rig.w_cov)?;
                    fim += info.f.diagonal();
                }
                samples.push(SampleRecord {
                    sample,
                    accepted,
                    theta: belief.theta,
                    p_diag: belief.p_cov.diagonal(),
                });
                v_prev = v_cm(xm);
                w_prev = xm.w;
                q_mid_prev = xm.q;
            }
        }
        truth.x = x_next;
        executed.push(truth.x.r);

        telemetry.push(TickRecord {
            t,
            truth: truth.x,
            estimated: x_hat,
            theta: belief.theta,
            theta_std: belief.param_std(),
            u_cmd,
            u_applied,
            v_nominal: cmd.v,
            z_nominal: cmd.z_bar,
            u_ancillary: cmd.u_anc,
            fim_diag: fim,
            gamma: gamma_now,
            in_tube,
            fallback: cmd.fallback,
            event: u8::from(replanned) | (u8::from(jumped) << 1),
        });
        t += CONTROL_DT;
    }

    // post-hoc path audit
    let executed_free = executed
        .iter()
        .all(|r| spec.world.position_free(r, CheckMode::PointInflated));

    Ok(SegmentResult {
        segment,
        flags,
        telemetry,
        samples,
        truth,
        belief_prior,
        belief,
        reached,
        timed_out,
        elapsed_sim_s: t,
        planner_failure: None,
        tube_infeasible: None,
        tube_exits,
        gate_accepted: gate.accepted,
        gate_rejected: gate.rejected,
        fim_final: fim,
        executed_free,
        max_tracking_error: max_err,
    })
}

/// Run the full A-B-C-A sequence: the payload swap perturbs the truth
/// model at B and re-inflates the belief covariance; the model learned
/// on B-C feeds the robust controller on C-A.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<ScenarioReport> {
    run_scenario_with(spec, |_| {})
}

/// [`run_scenario`] with a per-segment callback invoked as soon as each
/// segment finishes, so callers can persist telemetry incrementally.
pub fn run_scenario_with(
    spec: &ScenarioSpec,
    mut on_segment: impl FnMut(&SegmentResult),
) -> Result<ScenarioReport> {
    spec.validate()?;
    let mut truth = TruthState::new(spec.waypoint_a, spec.true_params_before_pickup);
    let mut belief = InertialBelief::prior_astrobee();
    let mut segments = Vec::with_capacity(3);
    let mut total = 0.0;
    for segment in 0..3 {
        if segment == 1 {
            // payload pickup at B: truth changes instantly, the belief
            // keeps its mean but forgets its confidence
            truth.p = spec.true_params_after_pickup;
            belief.inflate(spec.pickup_inflation);
        }
        let result = run_segment(spec, segment, truth, belief)?;
        truth = result.truth.clone();
        belief = result.belief;
        total += result.elapsed_sim_s;
        let ok = result.reached
            && !result.timed_out
            && result.planner_failure.is_none()
            && result.tube_infeasible.is_none();
        on_segment(&result);
        segments.push(result);
        if !ok {
            break;
        }
    }
    let success = segments.len() == 3 && segments.iter().all(|s| s.reached);
    Ok(ScenarioReport {
        segments,
        success,
        total_sim_s: total,
    })
}
