//! Receding-horizon local planning with an information reward.
//!
//! The local planner tracks a reference segment under the current belief
//! model while trading off an A-optimality term that rewards excitation
//! of the inertial parameters: the objective adds `Gamma' diag(F^-1)`
//! over the horizon-accumulated Fisher information. The weights Gamma
//! decay to zero as the belief covariance reaches its target, shutting
//! the excitation off once the model is learned.

use nalgebra::{Matrix4, SMatrix, Vector4};
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    self, ErrorState, InputVec, QuadraticCost, State, Wrench, WrenchLimits, NU, NX,
};
use crate::error::{Error, Result};
use crate::estimator::{self, InertialBelief, NoiseCov};
use crate::trajectory::{Knot, Trajectory};
use crate::world::{CheckMode, CheckResolution, WorldModel};

/// Fisher information over the inverse inertial parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherInfo {
    pub f: Matrix4<f64>,
}

impl FisherInfo {
    pub fn zero() -> Self {
        Self {
            f: Matrix4::zeros(),
        }
    }

    pub fn add(&self, other: &FisherInfo) -> FisherInfo {
        FisherInfo { f: self.f + other.f }
    }
}

/// Accumulated information of a wrench sequence: `F = sum H_k' W^-1 H_k`,
/// exact for the linear-in-theta measurement model. Returns the total and
/// the running cumulative values per step.
pub fn fisher_info(wrenches: &[Wrench], w_cov: &NoiseCov) -> Result<(FisherInfo, Vec<FisherInfo>)> {
    let w_inv = w_cov
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular measurement noise covariance".into()))?;
    let mut total = Matrix4::zeros();
    let mut cumulative = Vec::with_capacity(wrenches.len());
    for u in wrenches {
        let h = estimator::regressor(u);
        total += h.transpose() * w_inv * h;
        cumulative.push(FisherInfo { f: total });
    }
    Ok((FisherInfo { f: total }, cumulative))
}

/// Per-parameter information weights and their decay rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfoWeights {
    pub gamma: Vector4<f64>,
    pub gamma0: Vector4<f64>,
    /// Tolerance multiplier in the shut-off branch.
    pub alpha: f64,
    /// Decay constant.
    pub beta: f64,
    /// Desired std tolerance per parameter.
    pub sigma_n: Vector4<f64>,
}

impl InfoWeights {
    pub fn new(gamma0: Vector4<f64>, sigma_n: Vector4<f64>) -> Self {
        Self {
            gamma: gamma0,
            gamma0,
            alpha: 2.0,
            beta: 1.0,
            sigma_n,
        }
    }

    pub fn off() -> Self {
        Self::new(Vector4::zeros(), Vector4::repeat(1e-3))
    }
}

/// Covariance-driven weight decay: a parameter's weight shuts off once
/// its belief std reaches `alpha` times the tolerance, and otherwise
/// decays exponentially as the std approaches it.
pub fn covar_weight(belief: &InertialBelief, w: &InfoWeights) -> InfoWeights {
    let mut out = *w;
    for i in 0..4 {
        let sigma = belief.p_cov[(i, i)].sqrt();
        if sigma <= w.alpha * w.sigma_n[i] {
            out.gamma[i] = 0.0;
        } else {
            out.gamma[i] = w.gamma0[i] * (-w.beta * w.sigma_n[i] / sigma).exp();
        }
    }
    out
}

/// Output of one local replan.
#[derive(Debug, Clone)]
pub struct LocalPlan {
    pub traj: Trajectory,
    pub tracking_cost: f64,
    pub info_cost: f64,
    /// Objective of the warm-start iterate, for the no-worsening contract.
    pub initial_objective: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub fisher: FisherInfo,
}

#[derive(Debug, Clone)]
pub struct LocalCfg {
    pub n: usize,
    pub dt: f64,
    pub iterations: usize,
    pub cost: QuadraticCost,
    pub limits: WrenchLimits,
    pub w_cov: NoiseCov,
    /// Regularizer keeping `diag(F^-1)` defined at zero excitation.
    pub epsilon: f64,
    pub resolution: CheckResolution,
    pub mode: CheckMode,
}

impl Default for LocalCfg {
    fn default() -> Self {
        let mut q = SMatrix::<f64, NX, NX>::zeros();
        for i in 0..3 {
            q[(i, i)] = 10.0;
            q[(i + 3, i + 3)] = 5.0;
            q[(i + 6, i + 6)] = 5.0;
            q[(i + 9, i + 9)] = 2.0;
        }
        let r = SMatrix::<f64, NU, NU>::identity() * 5.0;
        Self {
            n: 40,
            dt: 0.3,
            iterations: 5,
            cost: QuadraticCost::new(q, r, q * 2.0),
            limits: WrenchLimits::astrobee_2000rpm(),
            w_cov: estimator::default_noise(),
            epsilon: 1e-6,
            resolution: CheckResolution::default(),
            mode: CheckMode::PointInflated,
        }
    }
}

struct RefPoint {
    state: State,
    wrench: Wrench,
}

fn sample_reference(reference: &Trajectory, t0: f64, cfg: &LocalCfg) -> Result<Vec<RefPoint>> {
    (0..=cfg.n)
        .map(|k| {
            let t = t0 + k as f64 * cfg.dt;
            Ok(RefPoint {
                state: reference.sample(t)?,
                wrench: reference.wrench_at(t)?,
            })
        })
        .collect()
}

fn rollout(
    x0: &State,
    inputs: &[InputVec],
    p: &crate::dynamics::InertialParams,
    cfg: &LocalCfg,
) -> Result<Vec<State>> {
    let mut states = Vec::with_capacity(inputs.len() + 1);
    let mut x = *x0;
    states.push(x);
    for (k, u) in inputs.iter().enumerate() {
        let wrench = Wrench::from_vec(u, k as f64 * cfg.dt);
        x = dynamics::step_rk4(&x, &wrench, p, cfg.dt)?;
        if !x.is_finite() {
            return Err(Error::Numerical("local plan rollout diverged".into()));
        }
        states.push(x);
    }
    Ok(states)
}

fn states_feasible(states: &[State], world: &WorldModel, cfg: &LocalCfg) -> bool {
    states
        .iter()
        .all(|x| world.position_free(&x.r, cfg.mode))
}

/// Full objective: tracking + information. Returns (total, tracking, info).
fn objective(
    states: &[State],
    inputs: &[InputVec],
    refs: &[RefPoint],
    gamma: &Vector4<f64>,
    f_prior: &Matrix4<f64>,
    cfg: &LocalCfg,
) -> Result<(f64, f64, f64)> {
    let mut track = 0.0;
    for k in 0..inputs.len() {
        let dx = states[k].error_from(&refs[k].state);
        let du = inputs[k] - refs[k].wrench.to_vec();
        track += cfg.cost.running(&dx, &du);
    }
    let dxn = states[inputs.len()].error_from(&refs[inputs.len()].state);
    track += cfg.cost.terminal(&dxn);

    let wrenches: Vec<Wrench> = inputs
        .iter()
        .enumerate()
        .map(|(k, u)| Wrench::from_vec(u, k as f64 * cfg.dt))
        .collect();
    let (fim, _) = fisher_info(&wrenches, &cfg.w_cov)?;
    let f_tot = fim.f + f_prior + Matrix4::identity() * cfg.epsilon;
    let f_inv = f_tot
        .try_inverse()
        .ok_or_else(|| Error::Numerical("information matrix not invertible".into()))?;
    let info = gamma.dot(&f_inv.diagonal());
    Ok((track + info, track, info))
}

/// Gradient of the information term with respect to each input.
fn info_gradients(
    inputs: &[InputVec],
    gamma: &Vector4<f64>,
    f_prior: &Matrix4<f64>,
    cfg: &LocalCfg,
) -> Result<Vec<InputVec>> {
    let w_inv = cfg
        .w_cov
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular measurement noise covariance".into()))?;
    let wrenches: Vec<Wrench> = inputs
        .iter()
        .enumerate()
        .map(|(k, u)| Wrench::from_vec(u, k as f64 * cfg.dt))
        .collect();
    let (fim, _) = fisher_info(&wrenches, &cfg.w_cov)?;
    let f_tot = fim.f + f_prior + Matrix4::identity() * cfg.epsilon;
    let f_inv = f_tot
        .try_inverse()
        .ok_or_else(|| Error::Numerical("information matrix not invertible".into()))?;
    // d/dF of Gamma' diag(F^-1) is -F^-1 diag(Gamma) F^-1
    let m = f_inv * Matrix4::from_diagonal(gamma) * f_inv;
    let mut grads = Vec::with_capacity(inputs.len());
    for u in &wrenches {
        let h = estimator::regressor(u);
        // dF/du_j = D_j' W^-1 H + H' W^-1 D_j with D_j a single-entry matrix
        let g_mat = 2.0 * w_inv * h * m;
        let mut g = InputVec::zeros();
        for j in 0..3 {
            g[j] = -g_mat[(j, 0)];
            g[j + 3] = -g_mat[(j + 3, j + 1)];
        }
        grads.push(g);
    }
    Ok(grads)
}

fn project_box(u: &InputVec, limits: &WrenchLimits) -> InputVec {
    let lim = limits.to_vec();
    InputVec::from_fn(|i, _| u[i].clamp(-lim[i], lim[i]))
}

/// One receding-horizon solve: iterative quadratic approximation with a
/// fixed iteration budget, warm-started, never returning an iterate worse
/// than its starting point.
pub fn plan_local(
    x_now: &State,
    reference: &Trajectory,
    t_now: f64,
    belief: &InertialBelief,
    weights: &InfoWeights,
    world: &WorldModel,
    warm: Option<&LocalPlan>,
    cfg: &LocalCfg,
) -> Result<LocalPlan> {
    if !world.position_free(&x_now.r, cfg.mode) {
        return Err(Error::Invalid("local plan start is in collision".into()));
    }
    let p = belief.params();
    let refs = sample_reference(reference, t_now, cfg)?;
    let f_prior = belief
        .p_cov
        .try_inverse()
        .ok_or_else(|| Error::Numerical("belief covariance not invertible".into()))?;
    let gamma = weights.gamma;

    // initial iterate: warm start shifted one step, else LQR tracking
    let mut inputs: Vec<InputVec> = match warm {
        Some(prev) if prev.traj.len() == cfg.n + 1 => {
            let mut shifted: Vec<InputVec> = prev
                .traj
                .knots()
                .iter()
                .take(cfg.n)
                .skip(1)
                .map(|k| k.wrench.to_vec())
                .collect();
            shifted.push(*shifted.last().unwrap());
            shifted
        }
        _ => {
            let ltv = dynamics::linearize_discretize(
                &refs[cfg.n].state,
                &Wrench::zero(0.0),
                &p,
                cfg.dt,
            )?;
            let ric = crate::global_planner::riccati_backward(&vec![ltv; cfg.n], &cfg.cost)?;
            let mut us = Vec::with_capacity(cfg.n);
            let mut x = *x_now;
            for k in 0..cfg.n {
                let dx = x.error_from(&refs[k].state);
                let u = project_box(
                    &(refs[k].wrench.to_vec() + ric.control_stationary(&dx)),
                    &cfg.limits,
                );
                us.push(u);
                x = dynamics::step_rk4(&x, &Wrench::from_vec(&u, 0.0), &p, cfg.dt)?;
            }
            us
        }
    };
    for u in inputs.iter_mut() {
        *u = project_box(u, &cfg.limits);
    }

    let mut states = rollout(x_now, &inputs, &p, cfg)?;
    let (mut obj, mut track, mut info) = objective(&states, &inputs, &refs, &gamma, &f_prior, cfg)?;

    // the information term is flat at zero excitation, so a gradient
    // method cannot leave u = 0 on an unexcited channel; offer a seeded
    // iterate with a small alternating wrench on the weighted channels
    // and keep it only if it scores better
    if gamma.amax() > 0.0 {
        let lim = cfg.limits.to_vec();
        // seed amplitude scales with the relative channel weight, so the
        // weight grading shows up directly in the realized excitation
        let rel = gamma / gamma.amax();
        let mut seeded = inputs.clone();
        for (k, u) in seeded.iter_mut().enumerate() {
            let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
            for j in 0..3 {
                u[j] += sign * 0.3 * rel[0] * lim[j];
            }
            for i in 1..4 {
                u[i + 2] += sign * 0.04 * rel[i] * lim[i + 2];
            }
            *u = project_box(u, &cfg.limits);
        }
        if let Ok(seed_states) = rollout(x_now, &seeded, &p, cfg) {
            if states_feasible(&seed_states, world, cfg) {
                let (so, st, si) = objective(&seed_states, &seeded, &refs, &gamma, &f_prior, cfg)?;
                if so < obj {
                    inputs = seeded;
                    states = seed_states;
                    obj = so;
                    track = st;
                    info = si;
                }
            }
        }
    }
    let initial_objective = obj;
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..cfg.iterations {
        iterations += 1;
        // quadratic approximation backward pass about the current iterate
        let mut ltv = Vec::with_capacity(cfg.n);
        for k in 0..cfg.n {
            ltv.push(dynamics::linearize_discretize(
                &states[k],
                &Wrench::from_vec(&inputs[k], 0.0),
                &p,
                cfg.dt,
            )?);
        }
        let info_grad = info_gradients(&inputs, &gamma, &f_prior, cfg)?;

        let mut vx: ErrorState =
            cfg.cost.h_terminal * states[cfg.n].error_from(&refs[cfg.n].state) + cfg.cost.h_lin;
        let mut vxx = cfg.cost.h_terminal;
        let mut k_ff = vec![InputVec::zeros(); cfg.n];
        let mut k_fb = vec![SMatrix::<f64, NU, NX>::zeros(); cfg.n];
        let mut failed = false;
        for k in (0..cfg.n).rev() {
            let dx = states[k].error_from(&refs[k].state);
            let du = inputs[k] - refs[k].wrench.to_vec();
            let lx = cfg.cost.q * dx + cfg.cost.q_lin;
            let lu = cfg.cost.r * du + cfg.cost.r_lin + info_grad[k];
            let (a, b) = (&ltv[k].a, &ltv[k].b);
            let qx = lx + a.transpose() * vx;
            let qu = lu + b.transpose() * vx;
            let qxx = cfg.cost.q + a.transpose() * vxx * a;
            let quu = cfg.cost.r + b.transpose() * vxx * b;
            let qux = b.transpose() * vxx * a;
            let Some(quu_inv) = quu.try_inverse() else {
                failed = true;
                break;
            };
            k_ff[k] = -(quu_inv * qu);
            k_fb[k] = -(quu_inv * qux);
            vx = qx + k_fb[k].transpose() * quu * k_ff[k]
                + k_fb[k].transpose() * qu
                + qux.transpose() * k_ff[k];
            vxx = qxx
                + k_fb[k].transpose() * quu * k_fb[k]
                + k_fb[k].transpose() * qux
                + qux.transpose() * k_fb[k];
            vxx = 0.5 * (vxx + vxx.transpose());
        }
        if failed {
            break;
        }

        // forward line search with box projection and feasibility gate
        let mut improved = false;
        for step in [1.0, 0.5, 0.25, 0.125, 0.0625] {
            let mut cand_inputs = Vec::with_capacity(cfg.n);
            let mut cand_states = Vec::with_capacity(cfg.n + 1);
            let mut x = *x_now;
            cand_states.push(x);
            let mut ok = true;
            for k in 0..cfg.n {
                let dx = x.error_from(&states[k]);
                let u = project_box(
                    &(inputs[k] + step * k_ff[k] + k_fb[k] * dx),
                    &cfg.limits,
                );
                match dynamics::step_rk4(&x, &Wrench::from_vec(&u, 0.0), &p, cfg.dt) {
                    Ok(next) if next.is_finite() => x = next,
                    _ => {
                        ok = false;
                        break;
                    }
                }
                cand_inputs.push(u);
                cand_states.push(x);
            }
            if !ok || !states_feasible(&cand_states, world, cfg) {
                continue;
            }
            let (cand_obj, cand_track, cand_info) =
                objective(&cand_states, &cand_inputs, &refs, &gamma, &f_prior, cfg)?;
            if cand_obj < obj - 1e-12 {
                inputs = cand_inputs;
                states = cand_states;
                obj = cand_obj;
                track = cand_track;
                info = cand_info;
                improved = true;
                break;
            }
        }
        if !improved {
            converged = true;
            break;
        }
    }

    let mut knots = Vec::with_capacity(cfg.n + 1);
    for k in 0..=cfg.n {
        let stamp = t_now + k as f64 * cfg.dt;
        let wrench = if k < cfg.n {
            Wrench::from_vec(&inputs[k], stamp)
        } else {
            Wrench::zero(stamp)
        };
        knots.push(Knot {
            stamp,
            state: states[k],
            wrench,
        });
    }
    let wrenches: Vec<Wrench> = knots[..cfg.n].iter().map(|k| k.wrench).collect();
    let (fisher, _) = fisher_info(&wrenches, &cfg.w_cov)?;
    Ok(LocalPlan {
        traj: Trajectory::new(knots)?,
        tracking_cost: track,
        info_cost: info,
        initial_objective,
        objective: obj,
        iterations,
        converged,
        fisher,
    })
}
