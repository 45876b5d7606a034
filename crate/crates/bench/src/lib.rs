//! Shared fixtures for the criterion benchmarks.

use freeflyer_core::dynamics::InertialParams;
use freeflyer_core::trajectory::Knot;
use freeflyer_core::tube_control::{AxisBounds, DisturbanceSet, TubeCfg, TubeSpec};
use freeflyer_core::world::KeepIn;
use freeflyer_core::{State, Trajectory, Wrench};
use nalgebra::Vector3;

pub fn station_bounds() -> [AxisBounds; 3] {
    let keep_in = KeepIn::jem();
    [0, 1, 2].map(|i| AxisBounds {
        pos_min: keep_in.min[i],
        pos_max: keep_in.max[i],
        vel_max: 0.5,
        u_max: 0.4,
    })
}

/// Robust controller designed for the unloaded body, with a constant
/// hold reference and a start offset that keeps the QP constraints live.
pub fn controller_fixture() -> (TubeSpec, TubeCfg, Trajectory, State) {
    let cfg = TubeCfg::default();
    let spec = TubeSpec::build(
        InertialParams::astrobee().mass,
        station_bounds(),
        &DisturbanceSet::default_level(),
        &cfg,
    )
    .unwrap();
    let hold = State::at_rest(Vector3::new(0.0, 0.5, 0.0));
    let reference = Trajectory::new(vec![
        Knot { stamp: 0.0, state: hold, wrench: Wrench::zero(0.0) },
        Knot { stamp: 120.0, state: hold, wrench: Wrench::zero(120.0) },
    ])
    .unwrap();
    let mut x = hold;
    x.r += Vector3::new(0.03, -0.05, 0.02);
    x.v += Vector3::new(0.01, 0.01, -0.005);
    (spec, cfg, reference, x)
}
