//! Timestamped state/wrench sequences, the common currency of the
//! planners, controller, and estimator.

use serde::{Deserialize, Serialize};

use crate::dynamics::{self, InertialParams, State, Wrench};
use crate::error::{Error, Result};

/// One sample of a trajectory: the state at `stamp` and the wrench held
/// over the following interval.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Knot {
    pub stamp: f64,
    pub state: State,
    pub wrench: Wrench,
}

/// A sequence of knots with strictly increasing stamps.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Trajectory {
    knots: Vec<Knot>,
}

impl Trajectory {
    pub fn new(knots: Vec<Knot>) -> Result<Self> {
        for pair in knots.windows(2) {
            if pair[1].stamp <= pair[0].stamp {
                return Err(Error::Invalid("trajectory stamps must strictly increase".into()));
            }
        }
        Ok(Self { knots })
    }

    /// A stationary trajectory holding `state` with zero wrench.
    pub fn hold(state: &State, t0: f64, dt: f64, n: usize) -> Self {
        let knots = (0..n)
            .map(|k| {
                let stamp = t0 + k as f64 * dt;
                Knot {
                    stamp,
                    state: *state,
                    wrench: Wrench::zero(stamp),
                }
            })
            .collect();
        Self { knots }
    }

    pub fn push(&mut self, knot: Knot) -> Result<()> {
        if let Some(last) = self.knots.last() {
            if knot.stamp <= last.stamp {
                return Err(Error::Invalid("trajectory stamps must strictly increase".into()));
            }
        }
        self.knots.push(knot);
        Ok(())
    }

    pub fn knots(&self) -> &[Knot] {
        &self.knots
    }

    pub fn knots_mut(&mut self) -> &mut [Knot] {
        &mut self.knots
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    pub fn first(&self) -> Option<&Knot> {
        self.knots.first()
    }

    pub fn last(&self) -> Option<&Knot> {
        self.knots.last()
    }

    pub fn duration(&self) -> f64 {
        match (self.knots.first(), self.knots.last()) {
            (Some(a), Some(b)) => b.stamp - a.stamp,
            _ => 0.0,
        }
    }

    /// State at time `t`: linear interpolation of position/velocities and
    /// slerp of the attitude between bracketing knots; clamped at the ends.
    pub fn sample(&self, t: f64) -> Result<State> {
        let knots = &self.knots;
        if knots.is_empty() {
            return Err(Error::Invalid("cannot sample an empty trajectory".into()));
        }
        if t <= knots[0].stamp {
            return Ok(knots[0].state);
        }
        if t >= knots[knots.len() - 1].stamp {
            return Ok(knots[knots.len() - 1].state);
        }
        let i = knots.partition_point(|k| k.stamp <= t) - 1;
        let (a, b) = (&knots[i], &knots[i + 1]);
        let s = (t - a.stamp) / (b.stamp - a.stamp);
        Ok(State {
            r: a.state.r.lerp(&b.state.r, s),
            q: dynamics::slerp(&a.state.q, &b.state.q, s),
            v: a.state.v.lerp(&b.state.v, s),
            w: a.state.w.lerp(&b.state.w, s),
        })
    }

    /// Wrench in effect at time `t` (zero-order hold on the preceding knot).
    pub fn wrench_at(&self, t: f64) -> Result<Wrench> {
        let knots = &self.knots;
        if knots.is_empty() {
            return Err(Error::Invalid("cannot sample an empty trajectory".into()));
        }
        if t <= knots[0].stamp {
            return Ok(knots[0].wrench);
        }
        let i = knots.partition_point(|k| k.stamp <= t) - 1;
        Ok(knots[i].wrench)
    }

    /// Maximum per-knot defect when each interval is re-integrated with the
    /// knot's held wrench. Zero (to integration tolerance) for rollouts
    /// produced by the planners.
    pub fn reintegration_defect(&self, p: &InertialParams) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for pair in self.knots.windows(2) {
            let dt = pair[1].stamp - pair[0].stamp;
            let predicted = dynamics::step_rk4(&pair[0].state, &pair[0].wrench, p, dt)?;
            let defect = pair[1].state.error_from(&predicted).amax();
            worst = worst.max(defect);
        }
        Ok(worst)
    }

    /// Concatenate, re-stamping `tail` to continue after `self`.
    pub fn concat(&self, tail: &Trajectory) -> Result<Trajectory> {
        let mut knots = self.knots.clone();
        if let (Some(last), Some(head)) = (self.knots.last(), tail.first()) {
            let offset = last.stamp - head.stamp;
            for k in tail.knots().iter().skip(1) {
                let mut knot = *k;
                knot.stamp += offset;
                knot.wrench.stamp += offset;
                knots.push(knot);
            }
            // the joint knot keeps the tail's wrench for its outgoing interval
            let n = self.knots.len();
            knots[n - 1].wrench = Wrench {
                stamp: knots[n - 1].stamp,
                ..head.wrench
            };
        } else if self.knots.is_empty() {
            return Ok(tail.clone());
        }
        Trajectory::new(knots)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;

    #[test]
    fn rejects_non_increasing_stamps() {
        let k = |t: f64| Knot {
            stamp: t,
            state: State::identity(),
            wrench: Wrench::zero(t),
        };
        assert!(Trajectory::new(vec![k(0.0), k(0.0)]).is_err());
        assert!(Trajectory::new(vec![k(0.0), k(1.0), k(0.5)]).is_err());
        assert!(Trajectory::new(vec![k(0.0), k(1.0)]).is_ok());
    }

    #[test]
    fn sample_interpolates_linearly() {
        let mut a = State::identity();
        let mut b = State::identity();
        b.r = Vector3::new(1.0, 0.0, 0.0);
        a.v = Vector3::new(0.5, 0.0, 0.0);
        b.v = Vector3::new(1.5, 0.0, 0.0);
        let traj = Trajectory::new(vec![
            Knot { stamp: 0.0, state: a, wrench: Wrench::zero(0.0) },
            Knot { stamp: 2.0, state: b, wrench: Wrench::zero(2.0) },
        ])
        .unwrap();
        let mid = traj.sample(1.0).unwrap();
        assert_relative_eq!(mid.r.x, 0.5, epsilon = 1e-12);
        assert_relative_eq!(mid.v.x, 1.0, epsilon = 1e-12);
        // clamped outside
        assert_eq!(traj.sample(-1.0).unwrap().r, a.r);
        assert_eq!(traj.sample(3.0).unwrap().r, b.r);
    }

    #[test]
    fn rollout_has_zero_defect() {
        let p = InertialParams::astrobee();
        let u = Wrench::new(Vector3::new(0.1, 0.0, 0.02), Vector3::new(0.0, 0.005, 0.0), 0.0);
        let mut state = State::identity();
        let mut knots = vec![];
        for k in 0..10 {
            let stamp = k as f64 * 0.2;
            knots.push(Knot { stamp, state, wrench: Wrench { stamp, ..u } });
            state = dynamics::step_rk4(&state, &u, &p, 0.2).unwrap();
        }
        let traj = Trajectory::new(knots).unwrap();
        assert!(traj.reintegration_defect(&p).unwrap() < 1e-12);
    }

    #[test]
    fn concat_restamps_tail() {
        let a = Trajectory::hold(&State::identity(), 0.0, 0.5, 3);
        let b = Trajectory::hold(&State::identity(), 10.0, 0.5, 3);
        let c = a.concat(&b).unwrap();
        assert_eq!(c.len(), 5);
        assert_relative_eq!(c.last().unwrap().stamp, 2.0, epsilon = 1e-12);
    }
}
