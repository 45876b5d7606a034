//! Offline estimator replay: re-runs the outlier gate and the recursive
//! least-squares update over a recorded samples.csv, starting from the
//! belief each segment actually started with, and checks the result
//! against the beliefs the live run reported. With the gate enabled the
//! replay is bit-identical; disabling it shows what the rejected samples
//! would have done to the estimate.

use crate::output::{read_report, RunReport, SAMPLES_FILE, SAMPLES_HEADER};
use freeflyer_core::estimator::{
    rls_update, InertialBelief, MeasurementSample, OutlierGate, ScalingModel,
};
use freeflyer_core::scenario_sim::scenario_noise;
use freeflyer_core::{Error, Wrench};
use nalgebra::{Vector3, Vector4};
use serde::Serialize;
use std::path::Path;

#[derive(Debug, Clone)]
struct Row {
    segment: usize,
    sample: MeasurementSample,
    accepted: bool,
    theta: Vector4<f64>,
}

#[derive(Debug, Serialize)]
pub struct ReplayReport {
    pub gate_enabled: bool,
    /// The samples file ended early or held a malformed row; everything
    /// up to that point is still replayed.
    pub truncated: bool,
    pub segments: Vec<SegmentReplay>,
}

#[derive(Debug, Serialize)]
pub struct SegmentReplay {
    pub segment: usize,
    pub samples: usize,
    pub accepted: usize,
    pub rejected: usize,
    /// Rows whose replayed posterior differs from the recorded one.
    pub divergent_rows: usize,
    /// Rows where the replayed gate decision differs from the recorded
    /// flag (every previously rejected row, when the gate is off).
    pub flag_mismatches: usize,
    pub final_theta: [f64; 4],
    pub recorded_theta: [f64; 4],
    /// Final belief matches the live run exactly (bit-for-bit).
    pub matches_recorded: bool,
}

fn parse_row(record: &csv::StringRecord) -> Result<Row, Error> {
    if record.len() != SAMPLES_HEADER.len() {
        return Err(Error::Invalid(format!(
            "row has {} fields, expected {}",
            record.len(),
            SAMPLES_HEADER.len()
        )));
    }
    let f = |i: usize| -> Result<f64, Error> {
        record[i]
            .parse()
            .map_err(|_| Error::Invalid(format!("bad float {:?} in column {}", &record[i], SAMPLES_HEADER[i])))
    };
    let segment: usize = record[0]
        .parse()
        .map_err(|_| Error::Invalid(format!("bad segment {:?}", &record[0])))?;
    let stamp = f(1)?;
    let a = Vector3::new(f(2)?, f(3)?, f(4)?);
    let alpha = Vector3::new(f(5)?, f(6)?, f(7)?);
    let mut u = Wrench::zero(stamp);
    u.force = Vector3::new(f(8)?, f(9)?, f(10)?);
    u.torque = Vector3::new(f(11)?, f(12)?, f(13)?);
    let accepted = match &record[14] {
        "0" => false,
        "1" => true,
        other => return Err(Error::Invalid(format!("bad accepted flag {other:?}"))),
    };
    let theta = Vector4::new(f(15)?, f(16)?, f(17)?, f(18)?);
    Ok(Row {
        segment,
        sample: MeasurementSample { stamp, a, alpha, u },
        accepted,
        theta,
    })
}

/// Reads rows until the file ends or a row fails to parse; a bad row
/// truncates the stream instead of aborting so a cut-off recording still
/// yields a partial report.
fn read_rows(path: &Path) -> Result<(Vec<Row>, bool), Error> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?;
    let header = reader
        .headers()
        .map_err(|e| Error::Invalid(format!("samples header: {e}")))?;
    for (i, expected) in SAMPLES_HEADER.iter().enumerate() {
        match header.get(i) {
            Some(got) if got == *expected => {}
            got => {
                return Err(Error::Invalid(format!(
                    "samples schema mismatch at column {i}: expected {expected:?}, found {:?}",
                    got.unwrap_or("<missing>")
                )))
            }
        }
    }
    if header.len() != SAMPLES_HEADER.len() {
        return Err(Error::Invalid(format!(
            "samples schema mismatch: {} columns, expected {}",
            header.len(),
            SAMPLES_HEADER.len()
        )));
    }
    let mut rows = Vec::new();
    let mut truncated = false;
    for record in reader.records() {
        let parsed = record
            .map_err(|e| Error::Invalid(format!("{e}")))
            .and_then(|r| parse_row(&r));
        match parsed {
            Ok(row) => rows.push(row),
            Err(e) => {
                eprintln!(
                    "warning: samples file truncated after {} rows ({e}); replaying the prefix",
                    rows.len()
                );
                truncated = true;
                break;
            }
        }
    }
    Ok((rows, truncated))
}

#[cfg(test)]
mod tests {
    use super::*;
    use freeflyer_core::scenario_sim::{run_scenario, ScenarioSpec};

    #[test]
    fn in_memory_replay_is_bit_identical() {
        let spec = ScenarioSpec::default_scenario(13);
        let report = run_scenario(&spec).unwrap();
        let seg = &report.segments[1];
        let w = scenario_noise(&spec.sensor);
        let mut belief = seg.belief_prior;
        let mut gate = OutlierGate::default();
        let scale = ScalingModel::default();
        for (k, rec) in seg.samples.iter().enumerate() {
            belief = rls_update(&belief, &rec.sample, &w, &mut gate, &scale).unwrap();
            assert_eq!(belief.theta, rec.theta, "diverged at sample {k}");
        }
        assert_eq!(belief.theta, seg.belief.theta);

        // same replay through the text encodings: CSV for the samples,
        // JSON for the prior and the sensor model
        let prior_json = serde_json::to_string(&seg.belief_prior).unwrap();
        let mut belief: InertialBelief = serde_json::from_str(&prior_json).unwrap();
        assert_eq!(belief, seg.belief_prior, "prior JSON round trip");
        let sensor_json = serde_json::to_string(&spec.sensor).unwrap();
        let sensor = serde_json::from_str(&sensor_json).unwrap();
        let w = scenario_noise(&sensor);
        assert_eq!(w, scenario_noise(&spec.sensor), "sensor JSON round trip");
        let mut gate = OutlierGate::default();
        for (k, rec) in seg.samples.iter().enumerate() {
            let fields = crate::output::sample_row(1, rec);
            let record = csv::StringRecord::from(fields);
            let row = parse_row(&record).unwrap();
            assert_eq!(row.sample.a, rec.sample.a, "a round trip at {k}");
            assert_eq!(row.sample.alpha, rec.sample.alpha, "alpha round trip at {k}");
            assert_eq!(row.sample.u.force, rec.sample.u.force, "force round trip at {k}");
            assert_eq!(row.sample.u.torque, rec.sample.u.torque, "torque round trip at {k}");
            belief = rls_update(&belief, &row.sample, &w, &mut gate, &scale).unwrap();
            assert_eq!(belief.theta, rec.theta, "text replay diverged at sample {k}");
        }
    }
}

pub fn replay_run(dir: &Path, gate_enabled: bool) -> Result<ReplayReport, Error> {
    let report: RunReport = read_report(&dir.join(crate::output::REPORT_FILE))?;
    let (rows, truncated) = read_rows(&dir.join(SAMPLES_FILE))?;
    let w_cov = scenario_noise(&report.sensor);
    let scale = ScalingModel::default();

    let mut segments = Vec::new();
    let mut i = 0;
    while i < rows.len() {
        let seg = rows[i].segment;
        let start = i;
        while i < rows.len() && rows[i].segment == seg {
            i += 1;
        }
        let recorded = report
            .segments
            .iter()
            .find(|s| s.segment == seg)
            .ok_or_else(|| Error::Invalid(format!("segment {seg} missing from report.json")))?;
        let mut belief: InertialBelief = recorded.belief_prior;
        let mut gate = OutlierGate::default();
        if !gate_enabled {
            gate.chi2_threshold = f64::INFINITY;
        }
        let mut divergent = 0usize;
        let mut flag_mismatches = 0usize;
        for row in &rows[start..i] {
            let accepted_before = gate.accepted;
            belief = rls_update(&belief, &row.sample, &w_cov, &mut gate, &scale)?;
            if (gate.accepted > accepted_before) != row.accepted {
                flag_mismatches += 1;
            }
            if belief.theta != row.theta {
                divergent += 1;
            }
        }
        // only an untruncated segment can be checked against the final
        // recorded belief; a prefix legitimately stops short of it
        let complete = !(truncated && i == rows.len());
        let matches = complete
            && belief.theta == recorded.belief_final.theta
            && belief.p_cov == recorded.belief_final.p_cov;
        segments.push(SegmentReplay {
            segment: seg,
            samples: i - start,
            accepted: gate.accepted,
            rejected: gate.rejected,
            divergent_rows: divergent,
            flag_mismatches,
            final_theta: belief.theta.into(),
            recorded_theta: recorded.belief_final.theta.into(),
            matches_recorded: matches,
        });
    }
    Ok(ReplayReport {
        gate_enabled,
        truncated,
        segments,
    })
}
