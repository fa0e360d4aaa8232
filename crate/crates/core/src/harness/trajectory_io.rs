//! Trajectory CSV: `t, x, y, z, vx, vy, vz, phi, theta, psi, wx, wy, wz`
//! with optional trailing `u1..u4` columns. Inputs are one shorter than
//! states, so their fields are empty on the final row.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::dynamics::{RotorInput, State, Vec4};
use crate::error::{Error, Result};
use crate::planner::DesiredTrajectory;

pub const STATE_COLUMNS: [&str; 13] = [
    "t", "x", "y", "z", "vx", "vy", "vz", "phi", "theta", "psi", "wx", "wy", "wz",
];
pub const INPUT_COLUMNS: [&str; 4] = ["u1", "u2", "u3", "u4"];

pub fn write_trajectory(path: &Path, states: &[State], inputs: Option<&[RotorInput]>, dt: f64) -> Result<()> {
    if let Some(u) = inputs {
        if u.len() + 1 != states.len() {
            return Err(Error::LengthMismatch {
                what: "trajectory inputs".into(),
                expected: states.len().saturating_sub(1),
                got: u.len(),
            });
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    let mut header = STATE_COLUMNS.join(",");
    if inputs.is_some() {
        header.push(',');
        header.push_str(&INPUT_COLUMNS.join(","));
    }
    writeln!(w, "{header}")?;
    for (k, s) in states.iter().enumerate() {
        let mut fields = vec![(k as f64 * dt).to_string()];
        fields.extend(s.to_vector().iter().map(|x| x.to_string()));
        if let Some(u) = inputs {
            match u.get(k) {
                Some(u) => fields.extend(u.to_vector().iter().map(|x| x.to_string())),
                None => fields.extend(std::iter::repeat_n(String::new(), 4)),
            }
        }
        writeln!(w, "{}", fields.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Parsed trajectory file; `inputs` is present when the file has input
/// columns.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFile {
    pub desired: DesiredTrajectory,
    pub inputs: Option<Vec<RotorInput>>,
}

pub fn read_trajectory(path: &Path) -> Result<TrajectoryFile> {
    let reader = BufReader::new(File::open(path).map_err(|e| Error::unreadable(path, e))?);
    let mut lines = reader.lines();
    let header = lines.next().ok_or_else(|| Error::parse(path, "empty file"))??;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let with_inputs = if cols == STATE_COLUMNS {
        false
    } else if cols.len() == 17 && cols[..13] == STATE_COLUMNS && cols[13..] == INPUT_COLUMNS {
        true
    } else {
        return Err(Error::parse(path, format!("unexpected header `{header}`")));
    };
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut inputs = Vec::new();
    let mut blank_inputs = 0;
    for (n, line) in lines.enumerate() {
        let line = line?;
        let lineno = n + 2;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(Error::parse(path, format!("line {lineno}: {} fields, expected {}", fields.len(), cols.len())));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::parse(path, format!("line {lineno}: bad number `{s}`")))
        };
        times.push(num(fields[0])?);
        let x: Vec<f64> = fields[1..13].iter().map(|s| num(s)).collect::<Result<_>>()?;
        states.push(State::from_slice(&x)?);
        if with_inputs {
            if fields[13..].iter().all(|s| s.is_empty()) {
                blank_inputs += 1;
            } else {
                if blank_inputs > 0 {
                    return Err(Error::parse(path, format!("line {lineno}: inputs after an empty input row")));
                }
                let u: Vec<f64> = fields[13..].iter().map(|s| num(s)).collect::<Result<_>>()?;
                inputs.push(RotorInput::from_vector(&Vec4::from_column_slice(&u)));
            }
        }
    }
    if states.len() < 2 {
        return Err(Error::parse(path, "need at least two rows"));
    }
    let dt = times[1] - times[0];
    if !(dt > 0.0) {
        return Err(Error::parse(path, "time column must increase"));
    }
    for (k, t) in times.iter().enumerate() {
        if (t - times[0] - k as f64 * dt).abs() > 1e-6 * dt.max(1.0) {
            return Err(Error::parse(path, format!("row {k}: time step is not uniform")));
        }
    }
    if with_inputs && inputs.len() + 1 != states.len() {
        return Err(Error::parse(
            path,
            format!("{} input rows for {} states, expected one fewer", inputs.len(), states.len()),
        ));
    }
    Ok(TrajectoryFile {
        desired: DesiredTrajectory::new(states, dt)?,
        inputs: with_inputs.then_some(inputs),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    #[test]
    fn round_trip_with_and_without_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let states: Vec<State> = (0..4)
            .map(|k| State::hover_at(Vector3::new(0.1 * k as f64, 1.0 / 3.0, -1.0), 0.3 * k as f64))
            .collect();
        let inputs: Vec<RotorInput> = (0..3).map(|k| RotorInput::new(0.3 + k as f64 * 1e-3, Vector3::new(1e-4, 0.0, -2e-4))).collect();
        let path = dir.path().join("a.csv");
        write_trajectory(&path, &states, Some(&inputs), 0.01).unwrap();
        let back = read_trajectory(&path).unwrap();
        assert_eq!(back.desired.states, states);
        assert_eq!(back.inputs.unwrap(), inputs);
        assert!((back.desired.dt - 0.01).abs() < 1e-15);
        write_trajectory(&path, &states, None, 0.01).unwrap();
        assert!(read_trajectory(&path).unwrap().inputs.is_none());
    }

    #[test]
    fn malformed_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let row = |t: f64| format!("{t},0,0,-1,0,0,0,0,0,0,0,0,0\n");
        let header = STATE_COLUMNS.join(",") + "\n";
        std::fs::write(&path, format!("{header}{}{}{}", row(0.0), row(0.01), row(0.03))).unwrap();
        assert!(matches!(read_trajectory(&path), Err(Error::Parse { .. })));
        std::fs::write(&path, format!("{header}{}0.01,0,0,-1,0,0,0,0,0,0,0,0\n", row(0.0))).unwrap();
        assert!(matches!(read_trajectory(&path), Err(Error::Parse { .. })));
        std::fs::write(&path, format!("t,x\n{}", row(0.0))).unwrap();
        assert!(matches!(read_trajectory(&path), Err(Error::Parse { .. })));
    }
}
