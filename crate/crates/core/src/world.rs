//! Environment representation and collision checking: an axis-aligned
//! keep-in box plus ellipsoidal obstacles.
//!
//! Two checks are provided. The ellipsoid-on-point check inflates each
//! obstacle by the robot's bounding radius and tests the quadratic form;
//! it is conservative but cheap, and is what the offline planner uses.
//! The ellipsoid-on-ellipsoid check places the robot's bounding ellipsoid
//! at the query position and tests exact separation; the real-time planner
//! uses it to avoid the inflation conservatism.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::State;
use crate::error::{Error, Result};
use crate::trajectory::Trajectory;

/// An ellipsoid `{x : (x - c)' P (x - c) <= 1}` with SPD shape matrix `P`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    pub center: Vector3<f64>,
    pub shape: Matrix3<f64>,
}

impl Ellipsoid {
    /// Axis-aligned ellipsoid with semi-axes `a`, `b`, `c`.
    pub fn axis_aligned(center: Vector3<f64>, a: f64, b: f64, c: f64) -> Self {
        Self {
            center,
            shape: Matrix3::from_diagonal(&Vector3::new(1.0 / (a * a), 1.0 / (b * b), 1.0 / (c * c))),
        }
    }

    pub fn sphere(center: Vector3<f64>, radius: f64) -> Self {
        Self::axis_aligned(center, radius, radius, radius)
    }

    pub fn quad_form(&self, x: &Vector3<f64>) -> f64 {
        let d = x - self.center;
        d.dot(&(self.shape * d))
    }

    /// Strict interior test.
    pub fn contains_interior(&self, x: &Vector3<f64>) -> bool {
        self.quad_form(x) < 1.0
    }

    /// Semi-axis lengths (eigen decomposition of the shape matrix).
    pub fn semi_axes(&self) -> Vector3<f64> {
        let eig = self.shape.symmetric_eigenvalues();
        Vector3::new(1.0 / eig[0].sqrt(), 1.0 / eig[1].sqrt(), 1.0 / eig[2].sqrt())
    }

    /// The ellipsoid grown by `margin` along every semi-axis.
    pub fn inflated(&self, margin: f64) -> Self {
        if margin == 0.0 {
            return *self;
        }
        let eig = nalgebra::SymmetricEigen::new(self.shape);
        let mut vals = eig.eigenvalues;
        for v in vals.iter_mut() {
            let semi = 1.0 / v.sqrt() + margin;
            *v = 1.0 / (semi * semi);
        }
        let v = eig.eigenvectors;
        Self {
            center: self.center,
            shape: v * Matrix3::from_diagonal(&vals) * v.transpose(),
        }
    }

    /// Ellipsoid at a different center with the same shape.
    pub fn at(&self, center: Vector3<f64>) -> Self {
        Self { center, shape: self.shape }
    }
}

/// Axis-aligned keep-in box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeepIn {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl KeepIn {
    pub fn new(min: Vector3<f64>, max: Vector3<f64>) -> Result<Self> {
        if !(min.x < max.x && min.y < max.y && min.z < max.z) {
            return Err(Error::Invalid("degenerate keep-in box".into()));
        }
        Ok(Self { min, max })
    }

    /// Interior volume of the JEM test area, relative to its centroid.
    /// The published z extent is read symmetrically.
    pub fn jem() -> Self {
        Self {
            min: Vector3::new(-0.65, -3.2, -0.8),
            max: Vector3::new(0.65, 3.2, 0.8),
        }
    }

    pub fn contains(&self, r: &Vector3<f64>) -> bool {
        (0..3).all(|i| r[i] >= self.min[i] && r[i] <= self.max[i])
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }
}

/// Robot bounding geometry used by the collision checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RobotGeometry {
    Sphere { radius: f64 },
    Ellipsoid { shape: Matrix3<f64> },
}

impl RobotGeometry {
    /// Bounding-sphere radius, used for obstacle inflation in point checks.
    pub fn bounding_radius(&self) -> f64 {
        match self {
            RobotGeometry::Sphere { radius } => *radius,
            RobotGeometry::Ellipsoid { shape } => {
                let eig = shape.symmetric_eigenvalues();
                1.0 / eig.min().sqrt()
            }
        }
    }

    fn as_ellipsoid(&self, center: Vector3<f64>) -> Ellipsoid {
        match self {
            RobotGeometry::Sphere { radius } => Ellipsoid::sphere(center, *radius),
            RobotGeometry::Ellipsoid { shape } => Ellipsoid { center, shape: *shape },
        }
    }
}

impl Default for RobotGeometry {
    fn default() -> Self {
        // circumscribed 0.30 m cube minus margin
        RobotGeometry::Sphere { radius: 0.26 }
    }
}

/// Which collision primitive a query uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckMode {
    /// Obstacles inflated by the robot bounding radius, robot as a point.
    PointInflated,
    /// Robot bounding ellipsoid against each obstacle, exact separation.
    EllipsoidOnEllipsoid,
}

/// Sampling resolution for segment and trajectory checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckResolution {
    pub max_segment_length: f64,
    pub max_dt: f64,
}

impl Default for CheckResolution {
    fn default() -> Self {
        Self {
            max_segment_length: 0.05,
            max_dt: 0.1,
        }
    }
}

/// Immutable environment: keep-in volume, obstacles, robot geometry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldModel {
    pub keep_in: KeepIn,
    pub obstacles: Vec<Ellipsoid>,
    pub robot: RobotGeometry,
}

impl WorldModel {
    pub fn new(keep_in: KeepIn, obstacles: Vec<Ellipsoid>) -> Self {
        Self {
            keep_in,
            obstacles,
            robot: RobotGeometry::default(),
        }
    }

    /// Obstacle-free JEM volume.
    pub fn jem_empty() -> Self {
        Self::new(KeepIn::jem(), vec![])
    }

    /// Point check: inside the keep-in box and outside every obstacle
    /// inflated by the robot bounding radius. Boundary contact is free.
    pub fn point_free(&self, r: &Vector3<f64>) -> bool {
        if !self.keep_in.contains(r) {
            return false;
        }
        let margin = self.robot.bounding_radius();
        self.obstacles
            .iter()
            .all(|obs| obs.inflated(margin).quad_form(r) >= 1.0)
    }

    /// Ellipsoid check: robot bounding ellipsoid at `r` separated from
    /// every obstacle, and `r` inside the keep-in box.
    pub fn ellipsoid_free(&self, r: &Vector3<f64>) -> bool {
        if !self.keep_in.contains(r) {
            return false;
        }
        let robot = self.robot.as_ellipsoid(*r);
        self.obstacles
            .iter()
            .all(|obs| ellipsoids_separated(&robot, obs))
    }

    pub fn position_free(&self, r: &Vector3<f64>, mode: CheckMode) -> bool {
        match mode {
            CheckMode::PointInflated => self.point_free(r),
            CheckMode::EllipsoidOnEllipsoid => self.ellipsoid_free(r),
        }
    }

    /// Check the straight segment between two states by binary subdivision
    /// of the position path down to the requested resolution. Both
    /// endpoints are always included.
    pub fn segment_free(&self, x_a: &State, x_b: &State, res: &CheckResolution, mode: CheckMode) -> bool {
        let len = (x_b.r - x_a.r).norm();
        // subdivision keeps the sample set nested under refinement
        let mut segments = 1usize;
        while (len / segments as f64) > res.max_segment_length && segments < (1 << 20) {
            segments *= 2;
        }
        for i in 0..=segments {
            let s = i as f64 / segments as f64;
            let r = x_a.r.lerp(&x_b.r, s);
            if !self.position_free(&r, mode) {
                return false;
            }
        }
        true
    }

    /// Check every inter-knot segment of a trajectory.
    pub fn trajectory_free(&self, traj: &Trajectory, res: &CheckResolution, mode: CheckMode) -> Result<bool> {
        if traj.is_empty() {
            return Err(Error::Invalid("cannot collision-check an empty trajectory".into()));
        }
        if traj.len() == 1 {
            return Ok(self.position_free(&traj.knots()[0].state.r, mode));
        }
        for pair in traj.knots().windows(2) {
            if !self.segment_free(&pair[0].state, &pair[1].state, res, mode) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Exact separation test for two solid ellipsoids: true iff their
/// interiors are disjoint (tangency counts as separated).
///
/// Minimizes the quadratic form of `e2` over the solid `e1`. The
/// constrained minimizer lies on the KKT path
/// `x(l) = (P2 + l P1)^-1 (P2 c2 + l P1 c1)`, along which the `e1`
/// quadratic form decreases monotonically in `l`; a bisection finds the
/// point on the boundary of `e1`.
pub fn ellipsoids_separated(e1: &Ellipsoid, e2: &Ellipsoid) -> bool {
    if e1.contains_interior(&e2.center) || e2.contains_interior(&e1.center) {
        return false;
    }
    let p1 = e1.shape;
    let p2 = e2.shape;
    let x_of = |l: f64| -> Option<Vector3<f64>> {
        let m = p2 + l * p1;
        let rhs = p2 * e2.center + l * (p1 * e1.center);
        m.lu().solve(&rhs)
    };
    let phi = |l: f64| -> Option<f64> { x_of(l).map(|x| e1.quad_form(&x) - 1.0) };

    // phi(0) >= 0 since c2 is outside e1; find an upper bracket
    let mut lo = 0.0;
    let mut hi = 1.0;
    for _ in 0..200 {
        match phi(hi) {
            Some(v) if v < 0.0 => break,
            Some(_) => {
                lo = hi;
                hi *= 2.0;
            }
            None => return false,
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        match phi(mid) {
            Some(v) if v > 0.0 => lo = mid,
            Some(_) => hi = mid,
            None => return false,
        }
        if (hi - lo) <= 1e-13 * hi.max(1.0) {
            break;
        }
    }
    match x_of(0.5 * (lo + hi)) {
        Some(x) => e2.quad_form(&x) >= 1.0 - 1e-9,
        None => false,
    }
}
