//! Run artifacts: telemetry.csv (one row per control tick), samples.csv
//! (one row per estimator update, enough to replay the filter offline)
//! and report.json (per-segment summary plus the beliefs bracketing it).
//!
//! Floats are written with 17 significant digits so a CSV round-trip is
//! bit-exact; docs/telemetry_schema.md describes both files column by
//! column.

use freeflyer_core::estimator::InertialBelief;
use freeflyer_core::scenario_sim::{SampleRecord, SegmentFlags, SegmentResult, SensorModel, TickRecord};
use freeflyer_core::Error;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

pub const TELEMETRY_FILE: &str = "telemetry.csv";
pub const SAMPLES_FILE: &str = "samples.csv";
pub const REPORT_FILE: &str = "report.json";

pub const TELEMETRY_HEADER: &[&str] = &[
    "segment", "t_s",
    "truth_r_x", "truth_r_y", "truth_r_z",
    "truth_q_w", "truth_q_x", "truth_q_y", "truth_q_z",
    "truth_v_x", "truth_v_y", "truth_v_z",
    "truth_w_x", "truth_w_y", "truth_w_z",
    "est_r_x", "est_r_y", "est_r_z",
    "est_q_w", "est_q_x", "est_q_y", "est_q_z",
    "est_v_x", "est_v_y", "est_v_z",
    "est_w_x", "est_w_y", "est_w_z",
    "theta_0", "theta_1", "theta_2", "theta_3",
    "theta_std_0", "theta_std_1", "theta_std_2", "theta_std_3",
    "u_cmd_f_x", "u_cmd_f_y", "u_cmd_f_z",
    "u_cmd_t_x", "u_cmd_t_y", "u_cmd_t_z",
    "u_app_f_x", "u_app_f_y", "u_app_f_z",
    "u_app_t_x", "u_app_t_y", "u_app_t_z",
    "v_nom_x", "v_nom_y", "v_nom_z",
    "z_nom_x_pos", "z_nom_x_vel",
    "z_nom_y_pos", "z_nom_y_vel",
    "z_nom_z_pos", "z_nom_z_vel",
    "u_anc_x", "u_anc_y", "u_anc_z",
    "fim_0", "fim_1", "fim_2", "fim_3",
    "gamma_0", "gamma_1", "gamma_2", "gamma_3",
    "in_tube", "fallback", "event",
];

pub const SAMPLES_HEADER: &[&str] = &[
    "segment", "stamp_s",
    "a_x", "a_y", "a_z",
    "alpha_x", "alpha_y", "alpha_z",
    "u_f_x", "u_f_y", "u_f_z",
    "u_t_x", "u_t_y", "u_t_z",
    "accepted",
    "theta_0", "theta_1", "theta_2", "theta_3",
    "p_0", "p_1", "p_2", "p_3",
];

pub const TRAJECTORY_HEADER: &[&str] = &[
    "stamp_s",
    "r_x", "r_y", "r_z",
    "q_w", "q_x", "q_y", "q_z",
    "v_x", "v_y", "v_z",
    "w_x", "w_y", "w_z",
    "u_f_x", "u_f_y", "u_f_z",
    "u_t_x", "u_t_y", "u_t_z",
];

pub fn knot_row(k: &freeflyer_core::trajectory::Knot) -> Vec<String> {
    let mut f = Vec::with_capacity(TRAJECTORY_HEADER.len());
    f.push(fmt_f(k.stamp));
    let s = &k.state;
    for i in 0..3 {
        f.push(fmt_f(s.r[i]));
    }
    f.push(fmt_f(s.q.w));
    f.push(fmt_f(s.q.i));
    f.push(fmt_f(s.q.j));
    f.push(fmt_f(s.q.k));
    for i in 0..3 {
        f.push(fmt_f(s.v[i]));
    }
    for i in 0..3 {
        f.push(fmt_f(s.w[i]));
    }
    for i in 0..3 {
        f.push(fmt_f(k.wrench.force[i]));
    }
    for i in 0..3 {
        f.push(fmt_f(k.wrench.torque[i]));
    }
    f
}

/// 17 significant digits: enough for f64 to survive a text round trip.
pub fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct CsvSink {
    w: BufWriter<File>,
}

impl CsvSink {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self, Error> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "{}", header.join(","))?;
        w.flush()?;
        Ok(Self { w })
    }

    pub fn row(&mut self, fields: &[String]) -> Result<(), Error> {
        writeln!(self.w, "{}", fields.join(","))?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), Error> {
        self.w.flush()?;
        Ok(())
    }
}

pub fn telemetry_row(segment: usize, r: &TickRecord) -> Vec<String> {
    let mut f = Vec::with_capacity(TELEMETRY_HEADER.len());
    f.push(segment.to_string());
    f.push(fmt_f(r.t));
    for s in [&r.truth, &r.estimated] {
        for i in 0..3 {
            f.push(fmt_f(s.r[i]));
        }
        f.push(fmt_f(s.q.w));
        f.push(fmt_f(s.q.i));
        f.push(fmt_f(s.q.j));
        f.push(fmt_f(s.q.k));
        for i in 0..3 {
            f.push(fmt_f(s.v[i]));
        }
        for i in 0..3 {
            f.push(fmt_f(s.w[i]));
        }
    }
    for i in 0..4 {
        f.push(fmt_f(r.theta[i]));
    }
    for i in 0..4 {
        f.push(fmt_f(r.theta_std[i]));
    }
    for u in [&r.u_cmd, &r.u_applied] {
        for i in 0..3 {
            f.push(fmt_f(u.force[i]));
        }
        for i in 0..3 {
            f.push(fmt_f(u.torque[i]));
        }
    }
    for i in 0..3 {
        f.push(fmt_f(r.v_nominal[i]));
    }
    for z in &r.z_nominal {
        f.push(fmt_f(z[0]));
        f.push(fmt_f(z[1]));
    }
    for i in 0..3 {
        f.push(fmt_f(r.u_ancillary[i]));
    }
    for i in 0..4 {
        f.push(fmt_f(r.fim_diag[i]));
    }
    for i in 0..4 {
        f.push(fmt_f(r.gamma[i]));
    }
    f.push((r.in_tube as u8).to_string());
    f.push((r.fallback as u8).to_string());
    f.push(r.event.to_string());
    f
}

pub fn sample_row(segment: usize, s: &SampleRecord) -> Vec<String> {
    let mut f = Vec::with_capacity(SAMPLES_HEADER.len());
    f.push(segment.to_string());
    f.push(fmt_f(s.sample.stamp));
    for i in 0..3 {
        f.push(fmt_f(s.sample.a[i]));
    }
    for i in 0..3 {
        f.push(fmt_f(s.sample.alpha[i]));
    }
    for i in 0..3 {
        f.push(fmt_f(s.sample.u.force[i]));
    }
    for i in 0..3 {
        f.push(fmt_f(s.sample.u.torque[i]));
    }
    f.push((s.accepted as u8).to_string());
    for i in 0..4 {
        f.push(fmt_f(s.theta[i]));
    }
    for i in 0..4 {
        f.push(fmt_f(s.p_diag[i]));
    }
    f
}

/// Streams the two CSV files while the scenario runs; rows land on disk
/// at segment granularity so a crash mid-run still leaves usable output.
pub struct RunWriter {
    telemetry: CsvSink,
    samples: CsvSink,
}

impl RunWriter {
    pub fn create(dir: &Path) -> Result<Self, Error> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            telemetry: CsvSink::create(&dir.join(TELEMETRY_FILE), TELEMETRY_HEADER)?,
            samples: CsvSink::create(&dir.join(SAMPLES_FILE), SAMPLES_HEADER)?,
        })
    }

    pub fn write_segment(&mut self, res: &SegmentResult) -> Result<(), Error> {
        for tick in &res.telemetry {
            self.telemetry.row(&telemetry_row(res.segment, tick))?;
        }
        for s in &res.samples {
            self.samples.row(&sample_row(res.segment, s))?;
        }
        self.telemetry.flush()?;
        self.samples.flush()
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub planner: String,
    pub gamma: String,
    pub tube_enabled: bool,
    pub success: bool,
    pub total_sim_s: f64,
    pub wall_s: f64,
    /// Sensor model the run used; the replay rebuilds the assumed
    /// measurement covariance from it.
    pub sensor: SensorModel,
    pub segments: Vec<SegmentReport>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SegmentReport {
    pub segment: usize,
    pub flags: SegmentFlags,
    pub reached: bool,
    pub timed_out: bool,
    pub elapsed_sim_s: f64,
    pub planner_failure: Option<String>,
    pub tube_infeasible: Option<String>,
    pub tube_exits: usize,
    pub gate_accepted: usize,
    pub gate_rejected: usize,
    pub executed_free: bool,
    pub max_tracking_error_m: f64,
    pub fim_final: [f64; 4],
    /// Belief the segment started from (full covariance, replay origin).
    pub belief_prior: InertialBelief,
    pub belief_final: InertialBelief,
    pub mass_estimate_kg: f64,
}

impl SegmentReport {
    pub fn from_result(res: &SegmentResult) -> Self {
        Self {
            segment: res.segment,
            flags: res.flags,
            reached: res.reached,
            timed_out: res.timed_out,
            elapsed_sim_s: res.elapsed_sim_s,
            planner_failure: res.planner_failure.clone(),
            tube_infeasible: res.tube_infeasible.clone(),
            tube_exits: res.tube_exits,
            gate_accepted: res.gate_accepted,
            gate_rejected: res.gate_rejected,
            executed_free: res.executed_free,
            max_tracking_error_m: res.max_tracking_error,
            fim_final: res.fim_final.into(),
            belief_prior: res.belief_prior,
            belief_final: res.belief,
            mass_estimate_kg: res.belief.params().mass,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| Error::Invalid(format!("json encode: {e}")))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<RunReport, Error> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for x in [0.0, -1.5, 1.0 / 3.0, 6.023e23, -2.2250738585072014e-308] {
            let s = fmt_f(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
    }

    #[test]
    fn header_lengths_match_rows() {
        // degenerate record is enough to count columns
        let tick = TickRecord {
            t: 0.0,
            truth: freeflyer_core::State::at_rest(nalgebra::Vector3::zeros()),
            estimated: freeflyer_core::State::at_rest(nalgebra::Vector3::zeros()),
            theta: nalgebra::Vector4::zeros(),
            theta_std: nalgebra::Vector4::zeros(),
            u_cmd: freeflyer_core::Wrench::zero(0.0),
            u_applied: freeflyer_core::Wrench::zero(0.0),
            v_nominal: nalgebra::Vector3::zeros(),
            z_nominal: [nalgebra::Vector2::zeros(); 3],
            u_ancillary: nalgebra::Vector3::zeros(),
            fim_diag: nalgebra::Vector4::zeros(),
            gamma: nalgebra::Vector4::zeros(),
            in_tube: true,
            fallback: false,
            event: 0,
        };
        assert_eq!(telemetry_row(0, &tick).len(), TELEMETRY_HEADER.len());
        let s = SampleRecord {
            sample: freeflyer_core::estimator::MeasurementSample {
                stamp: 0.0,
                a: nalgebra::Vector3::zeros(),
                alpha: nalgebra::Vector3::zeros(),
                u: freeflyer_core::Wrench::zero(0.0),
            },
            accepted: true,
            theta: nalgebra::Vector4::zeros(),
            p_diag: nalgebra::Vector4::zeros(),
        };
        assert_eq!(sample_row(1, &s).len(), SAMPLES_HEADER.len());
    }
}
