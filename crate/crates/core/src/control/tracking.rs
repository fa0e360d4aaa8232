use std::io::{BufWriter, Write};
use std::path::Path;

use super::flight::FlightLog;
use crate::error::{Error, Result};
use crate::math::angle_diff;
use crate::planner::DesiredTrajectory;

/// Channels reported: x, y, z and yaw.
pub const ERROR_CHANNELS: [&str; 4] = ["x", "y", "z", "psi"];

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub t: Vec<f64>,
    /// Absolute error per tick and channel.
    pub abs_error: Vec<[f64; 4]>,
    pub rms: [f64; 4],
    pub max: [f64; 4],
    /// RMS of the Euclidean position error.
    pub rms_position: f64,
    pub max_position: f64,
}

/// Compares the logged true states against the desired trajectory, tick by
/// tick (log rows are matched to desired samples by nearest tick).
pub fn tracking_error(log: &FlightLog, desired: &DesiredTrajectory) -> Result<ErrorReport> {
    if log.rows.len() != desired.states.len() {
        return Err(Error::LengthMismatch {
            what: "flight log rows vs desired states".into(),
            expected: desired.states.len(),
            got: log.rows.len(),
        });
    }
    let mut t = Vec::with_capacity(log.rows.len());
    let mut abs_error = Vec::with_capacity(log.rows.len());
    for row in &log.rows {
        let n = (row.t / desired.dt).round() as usize;
        let d = desired.states.get(n).ok_or_else(|| Error::LengthMismatch {
            what: "log time beyond desired horizon".into(),
            expected: desired.states.len(),
            got: n + 1,
        })?;
        let e = row.state.p - d.p;
        abs_error.push([e.x.abs(), e.y.abs(), e.z.abs(), angle_diff(row.state.yaw(), d.yaw()).abs()]);
        t.push(row.t);
    }
    let count = abs_error.len() as f64;
    let mut rms = [0.0; 4];
    let mut max = [0.0f64; 4];
    let mut sq_position = 0.0;
    let mut max_position = 0.0f64;
    for e in &abs_error {
        for c in 0..4 {
            rms[c] += e[c] * e[c];
            max[c] = max[c].max(e[c]);
        }
        let p2 = e[0] * e[0] + e[1] * e[1] + e[2] * e[2];
        sq_position += p2;
        max_position = max_position.max(p2.sqrt());
    }
    for r in &mut rms {
        *r = (*r / count).sqrt();
    }
    Ok(ErrorReport {
        t,
        abs_error,
        rms,
        max,
        rms_position: (sq_position / count).sqrt(),
        max_position,
    })
}

impl ErrorReport {
    pub fn to_kv(&self) -> Vec<(String, String)> {
        let mut kv = vec![
            ("rms_position".to_string(), self.rms_position.to_string()),
            ("max_position".to_string(), self.max_position.to_string()),
        ];
        for (c, name) in ERROR_CHANNELS.iter().enumerate() {
            kv.push((format!("rms_{name}"), self.rms[c].to_string()));
            kv.push((format!("max_{name}"), self.max[c].to_string()));
        }
        kv
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "t,err_x,err_y,err_z,err_psi")?;
        for (t, e) in self.t.iter().zip(&self.abs_error) {
            writeln!(w, "{t},{},{},{},{}", e[0], e[1], e[2], e[3])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::flight::LogRow;
    use crate::dynamics::{Accel, AugmentedInput, RotorInput, State};
    use nalgebra::Vector3;

    fn log_of(states: &[State], dt: f64) -> FlightLog {
        FlightLog {
            rows: states
                .iter()
                .enumerate()
                .map(|(n, s)| LogRow {
                    t: n as f64 * dt,
                    state: *s,
                    command: AugmentedInput::default(),
                    input: RotorInput::default(),
                    accel: Accel::default(),
                    command_clamped: false,
                    saturation: Default::default(),
                })
                .collect(),
            crash: None,
        }
    }

    #[test]
    fn identical_is_zero() {
        let states: Vec<State> = (0..10).map(|k| State::hover_at(Vector3::new(k as f64, 0.0, 0.0), 0.1 * k as f64)).collect();
        let desired = DesiredTrajectory::new(states.clone(), 0.01).unwrap();
        let r = tracking_error(&log_of(&states, 0.01), &desired).unwrap();
        assert_eq!(r.rms, [0.0; 4]);
        assert_eq!(r.max_position, 0.0);
    }

    #[test]
    fn constant_offset() {
        let desired = DesiredTrajectory::new(vec![State::default(); 20], 0.01).unwrap();
        let flown = vec![State::hover_at(Vector3::new(0.1, 0.0, 0.0), 0.0); 20];
        let r = tracking_error(&log_of(&flown, 0.01), &desired).unwrap();
        assert!((r.rms[0] - 0.1).abs() < 1e-15 && (r.max[0] - 0.1).abs() < 1e-15);
        assert!((r.rms_position - 0.1).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch() {
        let desired = DesiredTrajectory::new(vec![State::default(); 20], 0.01).unwrap();
        let log = log_of(&[State::default(); 5], 0.01);
        assert!(matches!(tracking_error(&log, &desired), Err(Error::LengthMismatch { .. })));
    }
}
