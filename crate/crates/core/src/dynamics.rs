//! 6-DOF rigid-body free-flyer model.
//!
//! Conventions, fixed repo-wide:
//! - Quaternions are Hamilton, scalar-last in serialized form, rotating
//!   body frame to inertial frame.
//! - Position `r` and linear velocity `v` are inertial; angular velocity
//!   `w` and applied wrenches are body-frame.
//! - The full 13-component state is used for simulation; LTV matrices use
//!   a 12-dimensional error state `[dr, dphi, dv, dw]` with a small-angle
//!   (rotation vector) attitude error.

use nalgebra::{Matrix3, Quaternion, SMatrix, SVector, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::Trajectory;

/// Dimension of the error state used for linearization.
pub const NX: usize = 12;
/// Input dimension (force + torque).
pub const NU: usize = 6;

pub type ErrorState = SVector<f64, NX>;
pub type InputVec = SVector<f64, NU>;

/// Full rigid-body state: position, attitude, linear and angular velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    /// Position in the inertial frame, m.
    pub r: Vector3<f64>,
    /// Attitude quaternion, body to inertial.
    pub q: UnitQuaternion<f64>,
    /// Linear velocity in the inertial frame, m/s.
    pub v: Vector3<f64>,
    /// Angular velocity in the body frame, rad/s.
    pub w: Vector3<f64>,
}

impl State {
    pub fn new(r: Vector3<f64>, q: UnitQuaternion<f64>, v: Vector3<f64>, w: Vector3<f64>) -> Self {
        Self { r, q, v, w }
    }

    /// State at rest at a position with identity attitude.
    pub fn at_rest(r: Vector3<f64>) -> Self {
        Self {
            r,
            q: UnitQuaternion::identity(),
            v: Vector3::zeros(),
            w: Vector3::zeros(),
        }
    }

    pub fn identity() -> Self {
        Self::at_rest(Vector3::zeros())
    }

    pub fn is_finite(&self) -> bool {
        self.r.iter().all(|x| x.is_finite())
            && self.q.coords.iter().all(|x| x.is_finite())
            && self.v.iter().all(|x| x.is_finite())
            && self.w.iter().all(|x| x.is_finite())
    }

    /// Error state of `self` relative to `reference`: `[dr, dphi, dv, dw]`
    /// with `dphi` the body-frame rotation vector of `q_ref^-1 * q`.
    pub fn error_from(&self, reference: &State) -> ErrorState {
        let dq = reference.q.inverse() * self.q;
        let dphi = dq.scaled_axis();
        let mut e = ErrorState::zeros();
        e.fixed_rows_mut::<3>(0).copy_from(&(self.r - reference.r));
        e.fixed_rows_mut::<3>(3).copy_from(&dphi);
        e.fixed_rows_mut::<3>(6).copy_from(&(self.v - reference.v));
        e.fixed_rows_mut::<3>(9).copy_from(&(self.w - reference.w));
        e
    }

    /// Retraction: apply an error state to this state.
    pub fn retract(&self, delta: &ErrorState) -> State {
        let dphi: Vector3<f64> = delta.fixed_rows::<3>(3).into();
        State {
            r: self.r + Vector3::from(delta.fixed_rows::<3>(0)),
            q: self.q * UnitQuaternion::from_scaled_axis(dphi),
            v: self.v + Vector3::from(delta.fixed_rows::<3>(6)),
            w: self.w + Vector3::from(delta.fixed_rows::<3>(9)),
        }
    }

    fn to_raw(self) -> SVector<f64, 13> {
        let mut x = SVector::<f64, 13>::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&self.r);
        x.fixed_rows_mut::<4>(3).copy_from(&self.q.coords);
        x.fixed_rows_mut::<3>(7).copy_from(&self.v);
        x.fixed_rows_mut::<3>(10).copy_from(&self.w);
        x
    }

    fn from_raw(x: &SVector<f64, 13>) -> Self {
        let q = Quaternion::from(nalgebra::Vector4::from(x.fixed_rows::<4>(3)));
        State {
            r: x.fixed_rows::<3>(0).into(),
            q: UnitQuaternion::from_quaternion(q),
            v: x.fixed_rows::<3>(7).into(),
            w: x.fixed_rows::<3>(10).into(),
        }
    }
}

/// Time derivative of a [`State`]; the quaternion rate is not unit-norm.
#[derive(Debug, Clone, Copy)]
pub struct StateDerivative {
    pub rdot: Vector3<f64>,
    pub qdot: Quaternion<f64>,
    pub vdot: Vector3<f64>,
    pub wdot: Vector3<f64>,
}

impl StateDerivative {
    fn to_raw(self) -> SVector<f64, 13> {
        let mut x = SVector::<f64, 13>::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&self.rdot);
        x.fixed_rows_mut::<4>(3).copy_from(&self.qdot.coords);
        x.fixed_rows_mut::<3>(7).copy_from(&self.vdot);
        x.fixed_rows_mut::<3>(10).copy_from(&self.wdot);
        x
    }
}

/// Mass, inertia tensor, and CM offset of the rigid body.
///
/// `inertia` is the tensor about the center of mass. With a nonzero CM
/// offset `c` the dynamics use the tensor about the body origin,
/// `I_B = I_cm - m [c]x [c]x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InertialParams {
    /// Mass, kg.
    pub mass: f64,
    /// Inertia tensor about the CM, kg m^2.
    pub inertia: Matrix3<f64>,
    /// CM offset from the body-frame origin, m.
    pub c: Vector3<f64>,
}

impl InertialParams {
    pub fn new(mass: f64, inertia: Matrix3<f64>) -> Self {
        Self {
            mass,
            inertia,
            c: Vector3::zeros(),
        }
    }

    pub fn diagonal(mass: f64, ixx: f64, iyy: f64, izz: f64) -> Self {
        Self::new(mass, Matrix3::from_diagonal(&Vector3::new(ixx, iyy, izz)))
    }

    /// Payload-free Astrobee values.
    pub fn astrobee() -> Self {
        Self::diagonal(9.58, 0.153, 0.143, 0.162)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) {
            return Err(Error::Model(format!("mass must be positive, got {}", self.mass)));
        }
        let sym = (self.inertia - self.inertia.transpose()).norm();
        if sym > 1e-9 {
            return Err(Error::Model("inertia tensor not symmetric".into()));
        }
        let eig = self.inertia.symmetric_eigenvalues();
        if eig.min() <= 0.0 {
            return Err(Error::Model("inertia tensor not positive definite".into()));
        }
        // triangle inequalities on principal moments
        let mut p = [eig[0], eig[1], eig[2]];
        p.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if p[2] > p[0] + p[1] + 1e-12 {
            return Err(Error::Model(
                "principal moments violate the triangle inequality".into(),
            ));
        }
        Ok(())
    }

    /// Inertia about the body origin.
    fn inertia_about_origin(&self) -> Matrix3<f64> {
        let cx = skew(&self.c);
        self.inertia - self.mass * cx * cx
    }
}

/// Body-frame force and torque with a timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wrench {
    /// Force in the body frame, N.
    pub force: Vector3<f64>,
    /// Torque in the body frame, N m.
    pub torque: Vector3<f64>,
    /// Time, s.
    pub stamp: f64,
}

impl Wrench {
    pub fn new(force: Vector3<f64>, torque: Vector3<f64>, stamp: f64) -> Self {
        Self { force, torque, stamp }
    }

    pub fn zero(stamp: f64) -> Self {
        Self::new(Vector3::zeros(), Vector3::zeros(), stamp)
    }

    pub fn from_vec(u: &InputVec, stamp: f64) -> Self {
        Self::new(u.fixed_rows::<3>(0).into(), u.fixed_rows::<3>(3).into(), stamp)
    }

    pub fn to_vec(&self) -> InputVec {
        let mut u = InputVec::zeros();
        u.fixed_rows_mut::<3>(0).copy_from(&self.force);
        u.fixed_rows_mut::<3>(3).copy_from(&self.torque);
        u
    }
}

/// Per-axis force and torque box limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WrenchLimits {
    pub force: Vector3<f64>,
    pub torque: Vector3<f64>,
}

impl WrenchLimits {
    /// Thruster limits at the 2000 RPM impeller setting, torques about a
    /// tenth of the forces (0.1 m thruster moment arm).
    pub fn astrobee_2000rpm() -> Self {
        Self {
            force: Vector3::new(0.452, 0.216, 0.257),
            torque: Vector3::new(0.0452, 0.0216, 0.0257),
        }
    }

    pub fn to_vec(&self) -> InputVec {
        let mut u = InputVec::zeros();
        u.fixed_rows_mut::<3>(0).copy_from(&self.force);
        u.fixed_rows_mut::<3>(3).copy_from(&self.torque);
        u
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            force: self.force * c,
            torque: self.torque * c,
        }
    }
}

/// Discrete LTV error dynamics about an operating point:
/// `dx_{k+1} = A dx_k + B du_k + g`.
#[derive(Debug, Clone)]
pub struct LtvMatrices {
    pub a: SMatrix<f64, NX, NX>,
    pub b: SMatrix<f64, NX, NU>,
    /// Drift of the operating point over one step; zero at an equilibrium.
    pub g: ErrorState,
    pub x_bar: State,
    pub u_bar: Wrench,
    pub dt: f64,
}

/// Quadratic running and terminal cost weights.
#[derive(Debug, Clone)]
pub struct QuadraticCost {
    pub q: SMatrix<f64, NX, NX>,
    pub r: SMatrix<f64, NU, NU>,
    pub h_terminal: SMatrix<f64, NX, NX>,
    pub q_lin: ErrorState,
    pub r_lin: InputVec,
    /// Cross term, enters the running cost as `du' P dx`.
    pub p_cross: SMatrix<f64, NU, NX>,
    pub h_lin: ErrorState,
}

impl QuadraticCost {
    pub fn new(
        q: SMatrix<f64, NX, NX>,
        r: SMatrix<f64, NU, NU>,
        h_terminal: SMatrix<f64, NX, NX>,
    ) -> Self {
        Self {
            q,
            r,
            h_terminal,
            q_lin: ErrorState::zeros(),
            r_lin: InputVec::zeros(),
            p_cross: SMatrix::zeros(),
            h_lin: ErrorState::zeros(),
        }
    }

    pub fn diagonal(q: f64, r: f64, h: f64) -> Self {
        Self::new(
            SMatrix::identity() * q,
            SMatrix::identity() * r,
            SMatrix::identity() * h,
        )
    }

    /// Running cost at one knot.
    pub fn running(&self, dx: &ErrorState, du: &InputVec) -> f64 {
        0.5 * (dx.dot(&(self.q * dx)) + du.dot(&(self.r * du)))
            + du.dot(&(self.p_cross * dx))
            + self.q_lin.dot(dx)
            + self.r_lin.dot(du)
    }

    pub fn terminal(&self, dx: &ErrorState) -> f64 {
        0.5 * dx.dot(&(self.h_terminal * dx)) + self.h_lin.dot(dx)
    }
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Continuous Newton-Euler dynamics of the free-flyer.
///
/// With zero CM offset this reduces to `vdot = R(q) F / m` and Euler's
/// equations; with nonzero offset the coupled 6x6 system is solved.
pub fn derivative(x: &State, u: &Wrench, p: &InertialParams) -> Result<StateDerivative> {
    let (a_body, wdot) = body_accelerations(x, u, p)?;
    let vdot = x.q * a_body;
    // qdot = 1/2 q (x) [w, 0]
    let wq = Quaternion::from_imag(x.w);
    let qdot = x.q.into_inner() * wq * 0.5;
    Ok(StateDerivative {
        rdot: x.v,
        qdot,
        vdot,
        wdot,
    })
}

fn body_accelerations(x: &State, u: &Wrench, p: &InertialParams) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let i_b = p.inertia_about_origin();
    if p.c.norm() == 0.0 {
        let i_inv = i_b
            .try_inverse()
            .ok_or_else(|| Error::Model("singular inertia tensor".into()))?;
        let a = u.force / p.mass;
        let wdot = i_inv * (u.torque - x.w.cross(&(i_b * x.w)));
        Ok((a, wdot))
    } else {
        let cx = skew(&p.c);
        let wx = skew(&x.w);
        let mut m6 = SMatrix::<f64, 6, 6>::zeros();
        m6.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&(Matrix3::identity() * p.mass));
        m6.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-p.mass * cx));
        m6.fixed_view_mut::<3, 3>(3, 0).copy_from(&(p.mass * cx));
        m6.fixed_view_mut::<3, 3>(3, 3).copy_from(&i_b);
        let mut rhs = SVector::<f64, 6>::zeros();
        rhs.fixed_rows_mut::<3>(0)
            .copy_from(&(u.force - p.mass * wx * wx * p.c));
        rhs.fixed_rows_mut::<3>(3)
            .copy_from(&(u.torque - wx * i_b * x.w));
        let sol = m6
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Model("singular spatial inertia matrix".into()))?;
        Ok((sol.fixed_rows::<3>(0).into(), sol.fixed_rows::<3>(3).into()))
    }
}

/// Classical RK4 step with zero-order hold on the input; the quaternion is
/// renormalized afterwards.
pub fn step_rk4(x: &State, u: &Wrench, p: &InertialParams, dt: f64) -> Result<State> {
    if !(dt > 0.0) {
        return Err(Error::Invalid(format!("dt must be positive, got {dt}")));
    }
    let x0 = x.to_raw();
    let k1 = derivative(x, u, p)?.to_raw();
    let k2 = derivative(&State::from_raw(&(x0 + 0.5 * dt * k1)), u, p)?.to_raw();
    let k3 = derivative(&State::from_raw(&(x0 + 0.5 * dt * k2)), u, p)?.to_raw();
    let k4 = derivative(&State::from_raw(&(x0 + dt * k3)), u, p)?.to_raw();
    let raw = x0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    // from_raw renormalizes the quaternion, at the stages and at the end
    Ok(State::from_raw(&raw))
}

/// Discrete LTV matrices of the error dynamics by central differences of
/// [`step_rk4`] in the 12-dimensional error state.
pub fn linearize_discretize(
    x_bar: &State,
    u_bar: &Wrench,
    p: &InertialParams,
    dt: f64,
) -> Result<LtvMatrices> {
    let h = 1e-6;
    let nominal_next = step_rk4(x_bar, u_bar, p, dt)?;
    let mut a = SMatrix::<f64, NX, NX>::zeros();
    for j in 0..NX {
        let mut dp = ErrorState::zeros();
        dp[j] = h;
        let xp = step_rk4(&x_bar.retract(&dp), u_bar, p, dt)?;
        dp[j] = -h;
        let xm = step_rk4(&x_bar.retract(&dp), u_bar, p, dt)?;
        let col = (xp.error_from(&nominal_next) - xm.error_from(&nominal_next)) / (2.0 * h);
        a.set_column(j, &col);
    }
    let mut b = SMatrix::<f64, NX, NU>::zeros();
    let u0 = u_bar.to_vec();
    for j in 0..NU {
        let mut up = u0;
        up[j] += h;
        let xp = step_rk4(x_bar, &Wrench::from_vec(&up, u_bar.stamp), p, dt)?;
        let mut um = u0;
        um[j] -= h;
        let xm = step_rk4(x_bar, &Wrench::from_vec(&um, u_bar.stamp), p, dt)?;
        let col = (xp.error_from(&nominal_next) - xm.error_from(&nominal_next)) / (2.0 * h);
        b.set_column(j, &col);
    }
    let g = nominal_next.error_from(x_bar);
    Ok(LtvMatrices {
        a,
        b,
        g,
        x_bar: *x_bar,
        u_bar: *u_bar,
        dt,
    })
}

/// Total quadratic cost of a trajectory relative to a reference.
pub fn eval_cost(traj: &Trajectory, reference: &Trajectory, cost: &QuadraticCost) -> Result<f64> {
    if traj.len() != reference.len() {
        return Err(Error::Invalid(format!(
            "trajectory length mismatch: {} vs {}",
            traj.len(),
            reference.len()
        )));
    }
    for (a, b) in traj.knots().iter().zip(reference.knots()) {
        if (a.stamp - b.stamp).abs() > 1e-9 {
            return Err(Error::Invalid("trajectory stamp mismatch".into()));
        }
    }
    let n = traj.len();
    let mut total = 0.0;
    for k in 0..n {
        let dx = traj.knots()[k].state.error_from(&reference.knots()[k].state);
        if k + 1 == n {
            total += cost.terminal(&dx);
        } else {
            let du = traj.knots()[k].wrench.to_vec() - reference.knots()[k].wrench.to_vec();
            total += cost.running(&dx, &du);
        }
    }
    Ok(total)
}

/// Great-circle quaternion interpolation with constant angular velocity.
///
/// Takes the shortest path; exactly antipodal inputs are resolved by
/// rotating about the body x-axis.
pub fn slerp(q0: &UnitQuaternion<f64>, q1: &UnitQuaternion<f64>, t: f64) -> UnitQuaternion<f64> {
    let mut b = *q1;
    if q0.coords.dot(&b.coords) < 0.0 {
        b = UnitQuaternion::from_quaternion(-b.into_inner());
    }
    match q0.try_slerp(&b, t, 1e-12) {
        Some(q) => q,
        None => {
            // antipodal: pass through a 180 degree rotation about body x
            let axis = *q0 * UnitQuaternion::from_scaled_axis(Vector3::new(std::f64::consts::PI, 0.0, 0.0));
            if t <= 0.5 {
                slerp(q0, &axis, 2.0 * t)
            } else {
                slerp(&axis, &b, 2.0 * t - 1.0)
            }
        }
    }
}

/// Componentwise clamp of a wrench to its box limits. Ideal stand-in for
/// the hardware mixer.
pub fn saturate(u: &Wrench, limits: &WrenchLimits) -> Wrench {
    let clamp3 = |v: &Vector3<f64>, lim: &Vector3<f64>| {
        Vector3::new(
            v.x.clamp(-lim.x, lim.x),
            v.y.clamp(-lim.y, lim.y),
            v.z.clamp(-lim.z, lim.z),
        )
    };
    Wrench {
        force: clamp3(&u.force, &limits.force),
        torque: clamp3(&u.torque, &limits.torque),
        stamp: u.stamp,
    }
}
