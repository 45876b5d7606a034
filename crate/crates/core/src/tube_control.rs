//! Robust tube MPC for the translational subsystem, plus an attitude LQR
//! loop.
//!
//! Translation decouples into three sampled double integrators, so the
//! disturbance set, tube cross-section, and constraint tightening are all
//! computed per axis with exact interval arithmetic. The tube
//! cross-section is a box in the eigenbasis of the ancillary closed loop
//! (a parallelogram in position/velocity coordinates): in that basis the
//! closed-loop map is diagonal, so the invariance condition
//! `A_cl Z (+) W (subset of) Z` reduces to a componentwise inequality
//! with no conservatism. An axis-aligned box admits no strictly
//! invariant cross-section for this system - the elementwise-abs closed
//! loop has spectral radius exactly 1 for every stabilizing gain - which
//! is why the eigenbasis box is used.
//!
//! The nominal controller is a small condensed QP per axis with the
//! initial nominal state free inside `x (+) (-Z)`, solved by ADMM.

use nalgebra::{Matrix2, RowVector2, SMatrix, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{State, WrenchLimits};
use crate::error::{Error, Result};
use crate::trajectory::Trajectory;

/// Per-axis box disturbance bound on the applied force, N.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceSet {
    pub w_max: Vector3<f64>,
}

impl DisturbanceSet {
    pub fn new(w_max: Vector3<f64>) -> Result<Self> {
        if w_max.min() < 0.0 {
            return Err(Error::Invalid("disturbance bounds must be nonnegative".into()));
        }
        Ok(Self { w_max })
    }

    /// Default equivalent-force disturbance level, N per axis.
    pub fn default_level() -> Self {
        Self {
            w_max: Vector3::repeat(0.02),
        }
    }
}

/// Sampled double integrator for one translational axis.
pub fn axis_dynamics(mass: f64, dt: f64) -> (Matrix2<f64>, Vector2<f64>) {
    (
        Matrix2::new(1.0, dt, 0.0, 1.0),
        Vector2::new(dt * dt / (2.0 * mass), dt / mass),
    )
}

/// Infinite-horizon discrete LQR gain for one axis by iterating the
/// Riccati map to a fixed point. Returns `(k, p)` with the ancillary law
/// `u = k e` and the converged cost-to-go `p`.
pub fn ancillary_gain(
    a: &Matrix2<f64>,
    b: &Vector2<f64>,
    q: &Matrix2<f64>,
    r: f64,
) -> Result<(RowVector2<f64>, Matrix2<f64>)> {
    if r <= 0.0 {
        return Err(Error::Invalid("input weight must be positive".into()));
    }
    let mut p = *q;
    for _ in 0..50_000 {
        let denom = r + (b.transpose() * p * b)[(0, 0)];
        let l = (b.transpose() * p * a) / denom;
        let next = q + a.transpose() * p * a - a.transpose() * p * b * l;
        let next = 0.5 * (next + next.transpose());
        if (next - p).abs().max() < 1e-12 * (1.0 + p.abs().max()) {
            let k = -l;
            let a_cl = a + b * k;
            let (tr, det) = (a_cl.trace(), a_cl.determinant());
            let rho2 = {
                let disc = tr * tr - 4.0 * det;
                if disc >= 0.0 {
                    let s = disc.sqrt();
                    ((tr + s) / 2.0).abs().max(((tr - s) / 2.0).abs())
                } else {
                    det.sqrt()
                }
            };
            if rho2 >= 1.0 {
                return Err(Error::Numerical("ancillary closed loop not stable".into()));
            }
            return Ok((k, next));
        }
        p = next;
    }
    Err(Error::Numerical("ancillary Riccati iteration did not converge".into()))
}

/// Real eigendecomposition of a 2x2 matrix; errors on complex or
/// defective spectra (re-tune the ancillary weights in that case).
fn real_eigenbasis(m: &Matrix2<f64>) -> Result<(Vector2<f64>, Matrix2<f64>)> {
    let (tr, det) = (m.trace(), m.determinant());
    let disc = tr * tr - 4.0 * det;
    if disc <= 1e-14 {
        return Err(Error::Numerical(
            "closed-loop poles must be real and distinct for the eigenbasis tube".into(),
        ));
    }
    let s = disc.sqrt();
    let l1 = (tr + s) / 2.0;
    let l2 = (tr - s) / 2.0;
    let vec_for = |l: f64| -> Vector2<f64> {
        let v1 = Vector2::new(m[(0, 1)], l - m[(0, 0)]);
        let v2 = Vector2::new(l - m[(1, 1)], m[(1, 0)]);
        let v = if v1.norm() >= v2.norm() { v1 } else { v2 };
        v / v.norm()
    };
    let t = Matrix2::from_columns(&[vec_for(l1), vec_for(l2)]);
    Ok((Vector2::new(l1, l2), t))
}

/// Tube cross-section for one axis: an invariant box in the closed-loop
/// eigenbasis, with its outer axis-aligned box for reporting.
#[derive(Debug, Clone, Copy)]
pub struct AxisTube {
    pub a: Matrix2<f64>,
    pub b: Vector2<f64>,
    /// Ancillary law `u = k (x - z_bar)`.
    pub k: RowVector2<f64>,
    /// Eigenbasis of `A + b k` (columns are eigenvectors).
    pub t: Matrix2<f64>,
    pub t_inv: Matrix2<f64>,
    /// Box half-widths in the eigenbasis.
    pub z_eig: Vector2<f64>,
    /// Outer axis-aligned half-widths (position, velocity).
    pub z_box: Vector2<f64>,
    /// Worst-case ancillary input magnitude over the cross-section.
    pub u_margin: f64,
}

impl AxisTube {
    /// Membership of an error vector in the cross-section, with slack for
    /// the QP solve tolerance.
    pub fn contains(&self, e: &Vector2<f64>) -> bool {
        let et = self.t_inv * e;
        // absolute term covers the QP primal-residual tolerance: the
        // nominal may ride the containment boundary with up to ~1e-6 of
        // solver slack in the eigen coordinates
        (0..2).all(|i| et[i].abs() <= self.z_eig[i] * (1.0 + 1e-6) + 2e-6)
    }
}

/// Compute the invariant tube cross-section for one axis under the
/// ancillary gain `k` and force disturbance bound `w_force`. Iterates the
/// reachable boxes in the eigenbasis and closes the geometric tail
/// exactly; the returned set satisfies the interval-arithmetic invariance
/// condition with equality.
pub fn rpi_box(
    a: &Matrix2<f64>,
    b: &Vector2<f64>,
    k: &RowVector2<f64>,
    w_force: f64,
    eps: f64,
) -> Result<AxisTube> {
    let a_cl = a + b * k;
    let (lambda, t) = real_eigenbasis(&a_cl)?;
    if lambda.abs().max() >= 1.0 {
        return Err(Error::Numerical("closed loop not contractive".into()));
    }
    let t_inv = t
        .try_inverse()
        .ok_or_else(|| Error::Numerical("defective eigenbasis".into()))?;
    let w_eig = (t_inv * b).abs() * w_force;
    // iterate the reachable boxes z <- |Lambda| z + w until growth < eps
    let mut z = Vector2::zeros();
    for _ in 0..100_000 {
        let next = Vector2::new(
            lambda[0].abs() * z[0] + w_eig[0],
            lambda[1].abs() * z[1] + w_eig[1],
        );
        let grown = (next - z).abs().max();
        z = next;
        if grown < eps {
            break;
        }
    }
    // close the geometric tail exactly: z_i = w_i / (1 - |lambda_i|)
    let z = Vector2::new(
        w_eig[0] / (1.0 - lambda[0].abs()),
        w_eig[1] / (1.0 - lambda[1].abs()),
    )
    .sup(&z);
    // interval-arithmetic invariance must hold
    for i in 0..2 {
        if lambda[i].abs() * z[i] + w_eig[i] > z[i] * (1.0 + 1e-12) + 1e-15 {
            return Err(Error::Numerical("tube invariance check failed".into()));
        }
    }
    let z_box = t.abs() * z;
    let u_margin = (k * t).abs() * z;
    Ok(AxisTube {
        a: *a,
        b: *b,
        k: *k,
        t,
        t_inv,
        z_eig: z,
        z_box,
        u_margin: u_margin[(0, 0)],
    })
}

/// Per-axis state and input boxes.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AxisBounds {
    pub pos_min: f64,
    pub pos_max: f64,
    pub vel_max: f64,
    pub u_max: f64,
}

/// Tightened bounds after giving up the tube margins.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TightenedBounds {
    pub pos_min: f64,
    pub pos_max: f64,
    pub vel_max: f64,
    pub u_max: f64,
}

/// Erode the state box by the tube cross-section and the input box by
/// the worst-case ancillary action.
pub fn tighten(bounds: &AxisBounds, tube: &AxisTube) -> Result<TightenedBounds> {
    let pos_min = bounds.pos_min + tube.z_box[0];
    let pos_max = bounds.pos_max - tube.z_box[0];
    let vel_max = bounds.vel_max - tube.z_box[1];
    let u_max = bounds.u_max - tube.u_margin;
    if pos_min >= pos_max || vel_max <= 0.0 || u_max <= 0.0 {
        return Err(Error::TubeInfeasible(format!(
            "tightening emptied the constraint set (pos [{pos_min:.3}, {pos_max:.3}], vel {vel_max:.3}, u {u_max:.3})"
        )));
    }
    Ok(TightenedBounds {
        pos_min,
        pos_max,
        vel_max,
        u_max,
    })
}

/// Complete per-axis tube controller data.
#[derive(Debug, Clone)]
pub struct TubeSpec {
    pub axes: [AxisTube; 3],
    pub bounds: [AxisBounds; 3],
    pub tightened: [TightenedBounds; 3],
    pub dt: f64,
    pub mass: f64,
    /// Terminal weight from the ancillary design, shared by the QP.
    pub p_term: Matrix2<f64>,
}

/// Design weights shared by the ancillary loop and the nominal QP.
#[derive(Debug, Clone)]
pub struct TubeCfg {
    pub n: usize,
    pub dt: f64,
    pub q: Matrix2<f64>,
    pub r: f64,
    pub admm_iterations: usize,
    pub admm_rho: f64,
    pub admm_tol: f64,
}

impl Default for TubeCfg {
    fn default() -> Self {
        Self {
            n: 5,
            dt: 0.2,
            // velocity-heavy weighting keeps the closed-loop poles real
            // and the worst-case ancillary input small, so the tightened
            // input box stays usable
            q: Matrix2::new(5.0, 0.0, 0.0, 320.0),
            r: 1.0,
            admm_iterations: 2000,
            admm_rho: 10.0,
            admm_tol: 1e-9,
        }
    }
}

impl TubeSpec {
    /// Build the robust controller: ancillary gains, tube cross-sections,
    /// and tightened bounds for every axis.
    pub fn build(
        mass: f64,
        bounds: [AxisBounds; 3],
        w: &DisturbanceSet,
        cfg: &TubeCfg,
    ) -> Result<Self> {
        let (a, b) = axis_dynamics(mass, cfg.dt);
        let (k, p_term) = ancillary_gain(&a, &b, &cfg.q, cfg.r)?;
        let mut axes = Vec::with_capacity(3);
        let mut tightened = Vec::with_capacity(3);
        for i in 0..3 {
            let tube = rpi_box(&a, &b, &k, w.w_max[i], 1e-12)?;
            tightened.push(tighten(&bounds[i], &tube)?);
            axes.push(tube);
        }
        Ok(Self {
            axes: [axes[0], axes[1], axes[2]],
            bounds,
            tightened: [tightened[0], tightened[1], tightened[2]],
            dt: cfg.dt,
            mass,
            p_term,
        })
    }

    /// Degenerate spec with zero tube and zero ancillary gain: the
    /// nominal QP pinned to the measured state, i.e. standard MPC.
    pub fn standard(mass: f64, bounds: [AxisBounds; 3], cfg: &TubeCfg) -> Result<Self> {
        let (a, b) = axis_dynamics(mass, cfg.dt);
        let (_, p_term) = ancillary_gain(&a, &b, &cfg.q, cfg.r)?;
        let tube = AxisTube {
            a,
            b,
            k: RowVector2::zeros(),
            t: Matrix2::identity(),
            t_inv: Matrix2::identity(),
            z_eig: Vector2::zeros(),
            z_box: Vector2::zeros(),
            u_margin: 0.0,
        };
        let tightened = bounds.map(|bd| TightenedBounds {
            pos_min: bd.pos_min,
            pos_max: bd.pos_max,
            vel_max: bd.vel_max,
            u_max: bd.u_max,
        });
        Ok(Self {
            axes: [tube, tube, tube],
            bounds,
            tightened,
            dt: cfg.dt,
            mass,
            p_term,
        })
    }
}

/// Output of one control step.
#[derive(Debug, Clone, Copy)]
pub struct ControlCommand {
    /// Nominal input per axis, N (inertial frame).
    pub v: Vector3<f64>,
    /// Ancillary correction per axis, N.
    pub u_anc: Vector3<f64>,
    /// Saturated total force, N.
    pub u_total: Vector3<f64>,
    /// Nominal initial state per axis (position, velocity).
    pub z_bar: [Vector2<f64>; 3],
    /// True when the QP fell back to pure ancillary regulation.
    pub fallback: bool,
}

const HORIZON: usize = 5;
// decision vector per axis: z0 (2) + v (HORIZON)
const NS: usize = 2 * (HORIZON + 1);
const ND: usize = 2 + HORIZON;
// constraint rows: states (2 per stage, HORIZON+1 stages) + inputs + containment
const NC: usize = 2 * (HORIZON + 1) + HORIZON + 2;

/// One receding-horizon step: solve the tightened nominal QP per axis
/// (initial nominal state free inside `x (+) (-Z)`) and superpose the
/// ancillary correction.
pub fn tube_mpc_step(
    x_now: &State,
    reference: &Trajectory,
    t_now: f64,
    spec: &TubeSpec,
    cfg: &TubeCfg,
) -> Result<ControlCommand> {
    if cfg.n != HORIZON {
        return Err(Error::Invalid(format!("horizon fixed at {HORIZON}")));
    }
    let n = cfg.n;
    // reference positions/velocities and feedforward force, inertial frame
    let mut refs = Vec::with_capacity(n + 1);
    let mut u_ref = Vec::with_capacity(n);
    for k in 0..=n {
        let t = t_now + k as f64 * cfg.dt;
        let s = reference.sample(t)?;
        refs.push(s);
        if k < n {
            let w = reference.wrench_at(t)?;
            u_ref.push(s.q * w.force);
        }
    }

    let mut v = Vector3::zeros();
    let mut u_anc = Vector3::zeros();
    let mut z_bar = [Vector2::zeros(); 3];
    let mut fallback = false;

    for axis in 0..3 {
        let tube = &spec.axes[axis];
        let tight = &spec.tightened[axis];
        let x_ax = Vector2::new(x_now.r[axis], x_now.v[axis]);
        let solved = solve_axis_qp(axis, &x_ax, &refs, &u_ref, tube, tight, spec, cfg)?;
        match solved {
            Some((z0, v0)) => {
                z_bar[axis] = z0;
                v[axis] = v0;
                u_anc[axis] = (tube.k * (x_ax - z0))[(0, 0)];
            }
            None => {
                // infeasible: pure ancillary regulation toward the reference
                fallback = true;
                let r0 = Vector2::new(refs[0].r[axis], refs[0].v[axis]);
                z_bar[axis] = r0;
                v[axis] = u_ref[0][axis];
                u_anc[axis] = (tube.k * (x_ax - r0))[(0, 0)];
            }
        }
    }
    let raw = v + u_anc;
    let u_total = Vector3::from_fn(|i, _| {
        raw[i].clamp(-spec.bounds[i].u_max, spec.bounds[i].u_max)
    });
    Ok(ControlCommand {
        v,
        u_anc,
        u_total,
        z_bar,
        fallback,
    })
}

#[allow(clippy::too_many_arguments)]
fn solve_axis_qp(
    axis: usize,
    x_ax: &Vector2<f64>,
    refs: &[State],
    u_ref: &[Vector3<f64>],
    tube: &AxisTube,
    tight: &TightenedBounds,
    spec: &TubeSpec,
    cfg: &TubeCfg,
) -> Result<Option<(Vector2<f64>, f64)>> {
    let n = HORIZON;
    let (a, b) = (tube.a, tube.b);

    // stacked prediction: states(d) = S d, d = [z0; v_0..v_{n-1}]
    let mut s_map = SMatrix::<f64, NS, ND>::zeros();
    let mut a_pow = Matrix2::identity();
    for k in 0..=n {
        s_map.fixed_view_mut::<2, 2>(2 * k, 0).copy_from(&a_pow);
        a_pow = a * a_pow;
    }
    for j in 0..n {
        let mut blk = b;
        for k in (j + 1)..=n {
            s_map.fixed_view_mut::<2, 1>(2 * k, 2 + j).copy_from(&blk);
            blk = a * blk;
        }
    }

    // cost (S d - xref)' Qbar (S d - xref) + (v - uref)' Rbar (v - uref)
    let mut x_ref = SMatrix::<f64, NS, 1>::zeros();
    for k in 0..=n {
        x_ref[2 * k] = refs[k].r[axis];
        x_ref[2 * k + 1] = refs[k].v[axis];
    }
    let mut q_bar = SMatrix::<f64, NS, NS>::zeros();
    for k in 0..=n {
        let w = if k == n { spec.p_term } else { cfg.q };
        q_bar.fixed_view_mut::<2, 2>(2 * k, 2 * k).copy_from(&w);
    }
    let mut h = s_map.transpose() * q_bar * s_map;
    let mut g = -(s_map.transpose() * (q_bar * x_ref));
    for j in 0..n {
        h[(2 + j, 2 + j)] += cfg.r;
        g[2 + j] -= cfg.r * u_ref[j][axis];
    }

    // constraint rows C d in [lo, hi]
    let mut c = SMatrix::<f64, NC, ND>::zeros();
    let mut lo = SMatrix::<f64, NC, 1>::zeros();
    let mut hi = SMatrix::<f64, NC, 1>::zeros();
    c.fixed_view_mut::<NS, ND>(0, 0).copy_from(&s_map);
    for k in 0..=n {
        lo[2 * k] = tight.pos_min;
        hi[2 * k] = tight.pos_max;
        lo[2 * k + 1] = -tight.vel_max;
        hi[2 * k + 1] = tight.vel_max;
    }
    let base = 2 * (HORIZON + 1);
    for j in 0..n {
        c[(base + j, 2 + j)] = 1.0;
        lo[base + j] = -tight.u_max;
        hi[base + j] = tight.u_max;
    }
    // containment: T^-1 z0 within T^-1 x_ax +/- z_eig
    let cont = base + n;
    let ex = tube.t_inv * x_ax;
    for i in 0..2 {
        c[(cont + i, 0)] = tube.t_inv[(i, 0)];
        c[(cont + i, 1)] = tube.t_inv[(i, 1)];
        lo[cont + i] = ex[i] - tube.z_eig[i];
        hi[cont + i] = ex[i] + tube.z_eig[i];
    }

    // ADMM on the box-constrained QP with per-row penalties: rows that
    // collapse to equalities (the standard-MPC pin on z0) get a stiff
    // penalty, and over-relaxation speeds up the contraction
    let alpha = 1.8;
    let mut rho = SMatrix::<f64, NC, 1>::repeat(cfg.admm_rho);
    for i in 0..NC {
        if hi[i] - lo[i] < 1e-12 {
            rho[i] = cfg.admm_rho * 1e3;
        }
    }
    let mut kkt = h;
    for i in 0..NC {
        let row = c.row(i);
        kkt += rho[i] * row.transpose() * row;
    }
    let kkt_chol = kkt
        .cholesky()
        .ok_or_else(|| Error::Numerical("tube QP Hessian not positive definite".into()))?;
    let mut d = SMatrix::<f64, ND, 1>::zeros();
    let mut y = SMatrix::<f64, NC, 1>::zeros();
    let mut dual = SMatrix::<f64, NC, 1>::zeros();
    let mut primal_res = f64::INFINITY;
    for _ in 0..cfg.admm_iterations {
        let rhs = -g + c.transpose() * rho.component_mul(&(y - dual));
        d = kkt_chol.solve(&rhs);
        let cd = c * d;
        let y_prev = y;
        for i in 0..NC {
            let relaxed = alpha * cd[i] + (1.0 - alpha) * y[i];
            y[i] = (relaxed + dual[i]).clamp(lo[i], hi[i]);
            dual[i] += relaxed - y[i];
        }
        primal_res = (cd - y).abs().max();
        let dual_res = (c.transpose() * rho.component_mul(&(y - y_prev))).abs().max();
        if primal_res < cfg.admm_tol && dual_res < cfg.admm_tol {
            break;
        }
    }
    if primal_res > 1e-6 {
        return Ok(None);
    }
    Ok(Some((Vector2::new(d[0], d[1]), d[2])))
}

/// Per-axis attitude LQR about the reference attitude.
#[derive(Debug, Clone)]
pub struct AttitudeLqr {
    /// Torque law per axis: `tau = k [dphi; dw]`.
    pub k: [RowVector2<f64>; 3],
    pub limits: WrenchLimits,
}

impl AttitudeLqr {
    /// Design from the diagonal inertia at the control period.
    pub fn design(inertia_diag: &Vector3<f64>, dt: f64, limits: &WrenchLimits) -> Result<Self> {
        let q = Matrix2::new(20.0, 0.0, 0.0, 5.0);
        let r = 50.0;
        let mut k = [RowVector2::zeros(); 3];
        for i in 0..3 {
            let a = Matrix2::new(1.0, dt, 0.0, 1.0);
            let b = Vector2::new(dt * dt / (2.0 * inertia_diag[i]), dt / inertia_diag[i]);
            let (ki, _) = ancillary_gain(&a, &b, &q, r)?;
            k[i] = ki;
        }
        Ok(Self {
            k,
            limits: *limits,
        })
    }

    /// Restoring torque for the small-angle attitude error, saturated.
    pub fn step(&self, x_now: &State, x_ref: &State) -> Vector3<f64> {
        let dq = x_ref.q.inverse() * x_now.q;
        let dphi = dq.scaled_axis();
        let dw = x_now.w - x_ref.w;
        let mut tau = Vector3::zeros();
        for i in 0..3 {
            tau[i] = (self.k[i] * Vector2::new(dphi[i], dw[i]))[(0, 0)];
            tau[i] = tau[i].clamp(-self.limits.torque[i], self.limits.torque[i]);
        }
        tau
    }
}

/// Torque command wrapper matching the control decomposition telemetry.
pub fn attitude_lqr_step(x_now: &State, reference: &Trajectory, t_now: f64, lqr: &AttitudeLqr) -> Result<Vector3<f64>> {
    let x_ref = reference.sample(t_now)?;
    Ok(lqr.step(x_now, &x_ref))
}
