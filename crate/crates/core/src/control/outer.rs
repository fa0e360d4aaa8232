use nalgebra::{DMatrix, SMatrix};

use super::hover::near_hover_linearization;
use super::lqr::lqr_gain;
use super::pd::PdGains;
use crate::config::Section;
use crate::dynamics::{AugmentedInput, DynamicsModel, PhysicalParams, State, Vec12, Vec7};
use crate::error::{Error, Result};
use crate::math::wrap_angle;

/// Expresses the planar position and velocity errors in the yaw-aligned
/// frame: `[[cos psi, sin psi], [-sin psi, cos psi]]` on (x, y) and (vx, vy).
pub fn rotate_error(err: &Vec12, psi: f64) -> Vec12 {
    let (s, c) = psi.sin_cos();
    let mut out = *err;
    for base in [0, 3] {
        let (x, y) = (err[base], err[base + 1]);
        out[base] = c * x + s * y;
        out[base + 1] = -s * x + c * y;
    }
    out
}

/// Bounds applied to the augmented command after feedback.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommandLimits {
    /// Largest commanded roll/pitch [rad].
    pub max_tilt: f64,
    /// Largest commanded body rate [rad/s].
    pub max_rate: f64,
}

impl Default for CommandLimits {
    fn default() -> Self {
        CommandLimits {
            max_tilt: 0.6,
            max_rate: 8.0,
        }
    }
}

/// LQR cost weights (diagonal) and Riccati settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqrWeights {
    pub q: Vec12,
    pub r: Vec7,
    pub tol: f64,
    pub limits: CommandLimits,
}

impl Default for LqrWeights {
    fn default() -> Self {
        let mut q = Vec12::zeros();
        q.fixed_rows_mut::<3>(0).fill(100.0);
        q.fixed_rows_mut::<3>(3).fill(10.0);
        q[6] = 10.0;
        q[7] = 10.0;
        q[8] = 50.0;
        q.fixed_rows_mut::<3>(9).fill(1.0);
        let r = Vec7::from_column_slice(&[100.0, 10.0, 10.0, 10.0, 1.0, 1.0, 1.0]);
        LqrWeights {
            q,
            r,
            tol: 1e-9,
            limits: CommandLimits::default(),
        }
    }
}

impl LqrWeights {
    pub fn validate(&self) -> Result<()> {
        if self.q.iter().any(|&x| !(x >= 0.0)) || self.r.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::InvalidArgument("Q must be >= 0 and R > 0".into()));
        }
        if !(self.tol > 0.0 && self.limits.max_tilt > 0.0 && self.limits.max_rate > 0.0) {
            return Err(Error::InvalidArgument("tol and command limits must be positive".into()));
        }
        Ok(())
    }

    pub fn apply(&mut self, section: &Section) -> Result<()> {
        for e in &section.entries {
            match e.key.as_str() {
                "q_pos" => self.q.fixed_rows_mut::<3>(0).fill(e.f64()?),
                "q_vel" => self.q.fixed_rows_mut::<3>(3).fill(e.f64()?),
                "q_att" => {
                    let v = e.f64()?;
                    self.q[6] = v;
                    self.q[7] = v;
                }
                "q_yaw" => self.q[8] = e.f64()?,
                "q_rate" => self.q.fixed_rows_mut::<3>(9).fill(e.f64()?),
                "r_thrust" => self.r[0] = e.f64()?,
                "r_att" => self.r.fixed_rows_mut::<3>(1).fill(e.f64()?),
                "r_rate" => self.r.fixed_rows_mut::<3>(4).fill(e.f64()?),
                "tol" => self.tol = e.f64()?,
                "max_tilt_cmd" => self.limits.max_tilt = e.f64()?,
                "max_rate_cmd" => self.limits.max_rate = e.f64()?,
                _ => return Err(e.unknown(&section.name)),
            }
        }
        self.validate().map_err(|err| Error::config(section.line, err.to_string()))
    }

    pub fn to_kv(&self) -> Vec<(&'static str, String)> {
        vec![
            ("q_pos", self.q[0].to_string()),
            ("q_vel", self.q[3].to_string()),
            ("q_att", self.q[6].to_string()),
            ("q_yaw", self.q[8].to_string()),
            ("q_rate", self.q[9].to_string()),
            ("r_thrust", self.r[0].to_string()),
            ("r_att", self.r[1].to_string()),
            ("r_rate", self.r[4].to_string()),
            ("tol", self.tol.to_string()),
            ("max_tilt_cmd", self.limits.max_tilt.to_string()),
            ("max_rate_cmd", self.limits.max_rate.to_string()),
        ]
    }
}

/// Outer-loop design in augmented-input coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrDesign {
    pub a: SMatrix<f64, 12, 12>,
    pub b: SMatrix<f64, 12, 7>,
    pub weights: LqrWeights,
    pub k: SMatrix<f64, 7, 12>,
    pub p: DMatrix<f64>,
    pub riccati_iterations: usize,
    pub closed_loop_radius: f64,
    pub dt_outer: f64,
}

impl LqrDesign {
    /// Linearizes the PD-closed plant at hover and solves the Riccati equation.
    pub fn synthesize<M: DynamicsModel + ?Sized>(plant: &M, pd: &PdGains, weights: &LqrWeights) -> Result<Self> {
        weights.validate()?;
        let (a, b) = near_hover_linearization(plant, pd)?;
        let sol = lqr_gain(
            &DMatrix::from_column_slice(12, 12, a.as_slice()),
            &DMatrix::from_column_slice(12, 7, b.as_slice()),
            &DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(weights.q.as_slice())),
            &DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(weights.r.as_slice())),
            weights.tol,
        )?;
        if !(sol.closed_loop_radius < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "LQR closed loop is not contracting (spectral radius {})",
                sol.closed_loop_radius
            )));
        }
        Ok(LqrDesign {
            a,
            b,
            weights: *weights,
            k: SMatrix::from_column_slice(sol.k.as_slice()),
            p: sol.p,
            riccati_iterations: sol.iterations,
            closed_loop_radius: sol.closed_loop_radius,
            dt_outer: plant.dt(),
        })
    }
}

/// `u_hat = u_hat_ref + K * rotate_error(measured - reference, psi_measured)`,
/// clamped to the thrust and command limits. The flag reports clamping.
pub fn outer_feedback(
    reference: &State,
    reference_input: &AugmentedInput,
    measured: &State,
    design: &LqrDesign,
    params: &PhysicalParams,
) -> (AugmentedInput, bool) {
    let err = rotate_error(&measured.error_from(reference), measured.yaw());
    let raw = reference_input.to_vector() + design.k * err;
    let lim = design.weights.limits;
    let mut cmd = raw;
    cmd[0] = raw[0].clamp(0.0, params.u1_max);
    cmd[1] = raw[1].clamp(-lim.max_tilt, lim.max_tilt);
    cmd[2] = raw[2].clamp(-lim.max_tilt, lim.max_tilt);
    for i in 4..7 {
        cmd[i] = raw[i].clamp(-lim.max_rate, lim.max_rate);
    }
    let clamped = cmd != raw;
    cmd[3] = wrap_angle(raw[3]);
    (AugmentedInput::from_vector(&cmd), clamped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn rotation_examples() {
        let mut e = Vec12::zeros();
        e[0] = 1.0;
        assert_eq!(rotate_error(&e, 0.0), e);
        let r = rotate_error(&e, FRAC_PI_2);
        assert!(r[0].abs() < 1e-15 && (r[1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn rotation_round_trip_and_isometry() {
        let e = Vec12::from_fn(|i, _| (i as f64 * 1.3).sin());
        let r = rotate_error(&e, 0.7);
        assert!((rotate_error(&r, -0.7) - e).amax() < 1e-12);
        assert!(((r[0].hypot(r[1])) - e[0].hypot(e[1])).abs() < 1e-12);
        assert_eq!(r.fixed_rows::<6>(6), e.fixed_rows::<6>(6));
        assert_eq!(r[2], e[2]);
        assert_eq!(r[5], e[5]);
    }
}
