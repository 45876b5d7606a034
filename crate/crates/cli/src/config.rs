//! Scenario configuration file (TOML). Every field is optional; anything
//! left out keeps the default scenario value. Unknown keys are rejected so
//! a typo fails loudly instead of silently running the default.

use freeflyer_core::scenario_sim::{GammaMode, PlannerChoice, ScenarioSpec, SensorModel};
use freeflyer_core::Error;
use nalgebra::{Matrix3, Vector3, Vector4};
use serde::Deserialize;
use std::path::Path;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    /// "lqr-rrt-star" or "kino-rrt".
    pub planner: Option<String>,
    /// "auto", "off" or "fixed:<weight>".
    pub gamma: Option<String>,
    pub tube_enabled: Option<bool>,
    pub regulate_at_final_waypoint: Option<bool>,
    pub timeout_s: Option<f64>,
    pub excitation_gain: Option<f64>,
    /// Per-parameter excitation priorities (mass, Ixx, Iyy, Izz).
    pub excitation_grades: Option<[f64; 4]>,
    pub pickup_covariance_inflation: Option<f64>,
    pub goal_tolerance: Option<GoalToleranceConfig>,
    pub world: Option<WorldConfig>,
    pub sensor: Option<SensorConfig>,
    pub disturbance: Option<DisturbanceConfig>,
    pub payload: Option<PayloadConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalToleranceConfig {
    pub pos_m: Option<f64>,
    pub vel_mps: Option<f64>,
    pub att_rad: Option<f64>,
    pub ang_vel_radps: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    /// Radius of the central spherical obstacle; large values block the
    /// corridor entirely.
    pub obstacle_radius_m: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    /// "exact" or "nominal" baseline before per-field overrides.
    pub preset: Option<String>,
    pub pos_std_m: Option<f64>,
    pub att_std_rad: Option<f64>,
    pub vel_std_mps: Option<f64>,
    pub ang_vel_std_radps: Option<f64>,
    pub accel_std_mps2: Option<f64>,
    pub ang_accel_std_radps2: Option<f64>,
    pub jump_prob: Option<f64>,
    pub jump_pos_m: Option<[f64; 2]>,
    pub jump_att_rad: Option<[f64; 2]>,
    pub accel_scale: Option<[f64; 3]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceConfig {
    pub force_max_n: Option<f64>,
    pub torque_max_nm: Option<f64>,
    /// Fraction of control periods drawing a corner of the disturbance box.
    pub corner_fraction: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayloadConfig {
    pub added_mass_kg: Option<f64>,
    /// Multiplies the diagonal inertia of the unloaded body.
    pub inertia_scale: Option<[f64; 3]>,
    pub cm_offset_m: Option<[f64; 3]>,
}

pub fn parse_planner(s: &str) -> Result<PlannerChoice, Error> {
    match s {
        "lqr-rrt-star" => Ok(PlannerChoice::LqrRrtStar),
        "kino-rrt" => Ok(PlannerChoice::KinoRrt),
        other => Err(Error::Invalid(format!(
            "unknown planner {other:?} (expected lqr-rrt-star or kino-rrt)"
        ))),
    }
}

pub fn parse_gamma(s: &str) -> Result<GammaMode, Error> {
    match s {
        "auto" => Ok(GammaMode::Auto),
        "off" => Ok(GammaMode::Off),
        other => {
            if let Some(v) = other.strip_prefix("fixed:") {
                let w: f64 = v
                    .parse()
                    .map_err(|_| Error::Invalid(format!("bad fixed weight {v:?}")))?;
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::Invalid(format!("fixed weight {w} out of range")));
                }
                Ok(GammaMode::Fixed(w))
            } else {
                Err(Error::Invalid(format!(
                    "unknown gamma mode {other:?} (expected auto, off or fixed:<w>)"
                )))
            }
        }
    }
}

pub fn planner_name(p: PlannerChoice) -> &'static str {
    match p {
        PlannerChoice::LqrRrtStar => "lqr-rrt-star",
        PlannerChoice::KinoRrt => "kino-rrt",
    }
}

pub fn gamma_name(g: GammaMode) -> String {
    match g {
        GammaMode::Auto => "auto".into(),
        GammaMode::Off => "off".into(),
        GammaMode::Fixed(w) => format!("fixed:{w}"),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
    }

    /// Default scenario with the configured overrides applied.
    pub fn build_spec(&self, seed: u64) -> Result<ScenarioSpec, Error> {
        let mut spec = ScenarioSpec::default_scenario(self.seed.unwrap_or(seed));
        if let Some(p) = &self.planner {
            spec.planner = parse_planner(p)?;
        }
        if let Some(g) = &self.gamma {
            spec.gamma = parse_gamma(g)?;
        }
        if let Some(t) = self.tube_enabled {
            spec.disable_tube = !t;
        }
        if let Some(r) = self.regulate_at_final_waypoint {
            spec.regulate_at_c = r;
        }
        if let Some(t) = self.timeout_s {
            if !(t > 0.0) {
                return Err(Error::Invalid("timeout_s must be positive".into()));
            }
            spec.timeout_s = t;
        }
        if let Some(g) = self.excitation_gain {
            spec.excitation_gain = g;
        }
        if let Some(g) = self.excitation_grades {
            spec.excitation_grades = Vector4::from_column_slice(&g);
        }
        if let Some(f) = self.pickup_covariance_inflation {
            if !(f >= 1.0) {
                return Err(Error::Invalid(
                    "pickup_covariance_inflation must be >= 1".into(),
                ));
            }
            spec.pickup_inflation = f;
        }
        if let Some(g) = &self.goal_tolerance {
            if let Some(v) = g.pos_m {
                spec.goal_tol.pos = v;
            }
            if let Some(v) = g.vel_mps {
                spec.goal_tol.vel = v;
            }
            if let Some(v) = g.att_rad {
                spec.goal_tol.att = v;
            }
            if let Some(v) = g.ang_vel_radps {
                spec.goal_tol.ang_vel = v;
            }
        }
        if let Some(w) = &self.world {
            if let Some(r) = w.obstacle_radius_m {
                if !(r > 0.0) {
                    return Err(Error::Invalid("obstacle_radius_m must be positive".into()));
                }
                let obstacle =
                    freeflyer_core::Ellipsoid::sphere(Vector3::new(0.0, 0.8, 0.0), r);
                spec.world = freeflyer_core::WorldModel::new(
                    freeflyer_core::world::KeepIn::jem(),
                    vec![obstacle],
                );
            }
        }
        if let Some(s) = &self.sensor {
            spec.sensor = s.build(spec.sensor)?;
        }
        if let Some(d) = &self.disturbance {
            let mut m = spec.disturbance;
            if let Some(v) = d.force_max_n {
                m.force_max = v;
            }
            if let Some(v) = d.torque_max_nm {
                m.torque_max = v;
            }
            if let Some(v) = d.corner_fraction {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Invalid("corner_fraction must be in [0, 1]".into()));
                }
                m.corner_fraction = v;
            }
            spec.disturbance = m;
        }
        if let Some(p) = &self.payload {
            let before = spec.true_params_before_pickup;
            let mut after = before;
            after.mass += p.added_mass_kg.unwrap_or(2.0);
            let scale = p.inertia_scale.unwrap_or([1.6, 1.5, 1.4]);
            after.inertia = Matrix3::from_diagonal(&Vector3::new(
                before.inertia[(0, 0)] * scale[0],
                before.inertia[(1, 1)] * scale[1],
                before.inertia[(2, 2)] * scale[2],
            ));
            let c = p.cm_offset_m.unwrap_or([0.005, 0.0, 0.0]);
            after.c = Vector3::from_column_slice(&c);
            after.validate()?;
            spec.true_params_after_pickup = after;
        }
        spec.validate()?;
        Ok(spec)
    }
}

impl SensorConfig {
    fn build(&self, current: SensorModel) -> Result<SensorModel, Error> {
        let mut m = match self.preset.as_deref() {
            None => current,
            Some("exact") => SensorModel::exact(),
            Some("nominal") => SensorModel::nominal(),
            Some(other) => {
                return Err(Error::Invalid(format!(
                    "unknown sensor preset {other:?} (expected exact or nominal)"
                )))
            }
        };
        if let Some(v) = self.pos_std_m {
            m.pos_std = v;
        }
        if let Some(v) = self.att_std_rad {
            m.att_std = v;
        }
        if let Some(v) = self.vel_std_mps {
            m.vel_std = v;
        }
        if let Some(v) = self.ang_vel_std_radps {
            m.ang_vel_std = v;
        }
        if let Some(v) = self.accel_std_mps2 {
            m.accel_std = v;
        }
        if let Some(v) = self.ang_accel_std_radps2 {
            m.ang_accel_std = v;
        }
        if let Some(v) = self.jump_prob {
            m.jump_prob = v;
        }
        if let Some([a, b]) = self.jump_pos_m {
            m.jump_pos = (a, b);
        }
        if let Some([a, b]) = self.jump_att_rad {
            m.jump_att = (a, b);
        }
        if let Some(s) = self.accel_scale {
            m.accel_scale = Vector3::from_column_slice(&s);
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_matches_default_scenario() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        let spec = cfg.build_spec(7).unwrap();
        let base = ScenarioSpec::default_scenario(7);
        assert_eq!(spec.seed, base.seed);
        assert_eq!(spec.planner, base.planner);
        assert_eq!(spec.gamma, base.gamma);
        assert_eq!(spec.timeout_s, base.timeout_s);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = toml::from_str::<RunConfig>("sede = 3").unwrap_err();
        assert!(err.to_string().contains("sede"), "{err}");
    }

    #[test]
    fn nested_unknown_key_is_rejected() {
        let text = "[sensor]\npos_std = 1e-3\n";
        assert!(toml::from_str::<RunConfig>(text).is_err());
    }

    #[test]
    fn overrides_apply() {
        let text = r#"
            seed = 99
            planner = "kino-rrt"
            gamma = "fixed:2.5"
            tube_enabled = false
            timeout_s = 120.0
            [sensor]
            preset = "exact"
            accel_std_mps2 = 5e-3
            [payload]
            added_mass_kg = 1.0
        "#;
        let cfg: RunConfig = toml::from_str(text).unwrap();
        let spec = cfg.build_spec(0).unwrap();
        assert_eq!(spec.seed, 99);
        assert_eq!(spec.planner, PlannerChoice::KinoRrt);
        assert_eq!(spec.gamma, GammaMode::Fixed(2.5));
        assert!(spec.disable_tube);
        assert_eq!(spec.timeout_s, 120.0);
        assert_eq!(spec.sensor.pos_std, 0.0);
        assert_eq!(spec.sensor.accel_std, 5e-3);
        let base = ScenarioSpec::default_scenario(0).true_params_before_pickup;
        assert!((spec.true_params_after_pickup.mass - base.mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_strings_round_trip() {
        for s in ["auto", "off", "fixed:3"] {
            let mode = parse_gamma(s).unwrap();
            assert_eq!(gamma_name(mode), s);
        }
        assert!(parse_gamma("fixed:").is_err());
        assert!(parse_gamma("maybe").is_err());
    }
}
