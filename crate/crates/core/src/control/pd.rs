use nalgebra::{Matrix3, Vector3};

use crate::config::Section;
use crate::dynamics::{euler_rate_matrix, AugmentedInput, PhysicalParams, RotorInput, State};
use crate::error::{Error, Result};
use crate::math::{angle_diff, wrap_angle};

/// Attitude PD gains. Moments are `kp * (zeta - zeta_des) + kd * (omega - omega_des)`,
/// so stabilizing gains are negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdGains {
    pub kp: Matrix3<f64>,
    pub kd: Matrix3<f64>,
    /// Inner loop period [s].
    pub dt_inner: f64,
}

impl Default for PdGains {
    fn default() -> Self {
        // About 25 rad/s (roll, pitch) and 15 rad/s (yaw) with damping 0.8
        // for the default inertia.
        PdGains {
            kp: Matrix3::from_diagonal(&Vector3::new(-0.01, -0.01, -6.5e-3)),
            kd: Matrix3::from_diagonal(&Vector3::new(-6.4e-4, -6.4e-4, -7.0e-4)),
            dt_inner: 0.004,
        }
    }
}

impl PdGains {
    pub fn validate(&self) -> Result<()> {
        if !self.kp.iter().chain(self.kd.iter()).all(|x| x.is_finite()) {
            return Err(Error::InvalidArgument("PD gains must be finite".into()));
        }
        if self.kd.try_inverse().is_none() {
            return Err(Error::InvalidArgument("Kd must be invertible".into()));
        }
        if !(self.dt_inner > 0.0) {
            return Err(Error::InvalidArgument("dt_inner must be positive".into()));
        }
        Ok(())
    }

    /// Keys `kp_roll`, `kp_pitch`, `kp_yaw`, `kd_roll`, `kd_pitch`,
    /// `kd_yaw` set diagonal entries; `dt_inner` sets the period.
    pub fn apply(&mut self, section: &Section) -> Result<()> {
        for e in &section.entries {
            match e.key.as_str() {
                "kp_roll" => self.kp[(0, 0)] = e.f64()?,
                "kp_pitch" => self.kp[(1, 1)] = e.f64()?,
                "kp_yaw" => self.kp[(2, 2)] = e.f64()?,
                "kd_roll" => self.kd[(0, 0)] = e.f64()?,
                "kd_pitch" => self.kd[(1, 1)] = e.f64()?,
                "kd_yaw" => self.kd[(2, 2)] = e.f64()?,
                "dt_inner" => self.dt_inner = e.f64()?,
                _ => return Err(e.unknown(&section.name)),
            }
        }
        self.validate().map_err(|err| Error::config(section.line, err.to_string()))
    }

    pub fn to_kv(&self) -> Vec<(&'static str, String)> {
        vec![
            ("kp_roll", self.kp[(0, 0)].to_string()),
            ("kp_pitch", self.kp[(1, 1)].to_string()),
            ("kp_yaw", self.kp[(2, 2)].to_string()),
            ("kd_roll", self.kd[(0, 0)].to_string()),
            ("kd_pitch", self.kd[(1, 1)].to_string()),
            ("kd_yaw", self.kd[(2, 2)].to_string()),
            ("dt_inner", self.dt_inner.to_string()),
        ]
    }

    /// Augmented command whose PD output at `state` is exactly `input`:
    /// attitude set-point at the state's attitude, rate set-point shifted so
    /// the derivative term produces the moment.
    pub fn augment(&self, state: &State, input: &RotorInput) -> AugmentedInput {
        let kd_inv = self.kd.try_inverse().unwrap_or_else(Matrix3::zeros);
        AugmentedInput {
            thrust: input.thrust,
            zeta_des: state.zeta,
            omega_des: state.omega - kd_inv * input.moment,
        }
    }
}

/// Whether the thrust and/or a moment hit their limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Saturation {
    pub thrust: bool,
    pub moment: bool,
}

/// Attitude PD law; thrust passes through. Returns the input before and
/// after clamping to the actuator limits.
pub fn inner_pd_unclamped(desired: &AugmentedInput, measured: &State, gains: &PdGains) -> RotorInput {
    let att_err = Vector3::from_fn(|i, _| angle_diff(measured.zeta[i], desired.zeta_des[i]));
    let rate_err = measured.omega - desired.omega_des;
    RotorInput::new(desired.thrust, gains.kp * att_err + gains.kd * rate_err)
}

pub fn clamp_input(u: &RotorInput, params: &PhysicalParams) -> (RotorInput, Saturation) {
    let thrust = u.thrust.clamp(0.0, params.u1_max);
    let moment = u.moment.map(|m| m.clamp(-params.torque_max, params.torque_max));
    let sat = Saturation {
        thrust: thrust != u.thrust,
        moment: moment != u.moment,
    };
    (RotorInput::new(thrust, moment), sat)
}

/// Attitude set-point carried forward `elapsed` seconds along the desired
/// body rates, so a held command keeps turning with the vehicle between
/// outer updates. Unchanged at `elapsed == 0` or near gimbal lock.
pub fn advance_setpoint(command: &AugmentedInput, elapsed: f64) -> AugmentedInput {
    if elapsed == 0.0 {
        return *command;
    }
    let Ok(rates) = euler_rate_matrix(&command.zeta_des) else {
        return *command;
    };
    let mut next = *command;
    next.zeta_des += rates * command.omega_des * elapsed;
    next.zeta_des.z = wrap_angle(next.zeta_des.z);
    next
}

pub fn inner_pd(desired: &AugmentedInput, measured: &State, gains: &PdGains, params: &PhysicalParams) -> (RotorInput, Saturation) {
    clamp_input(&inner_pd_unclamped(desired, measured, gains), params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn setpoint_follows_yaw_rate() {
        let c = AugmentedInput {
            thrust: 0.3,
            zeta_des: Vector3::new(0.0, 0.0, PI - 0.005),
            omega_des: Vector3::new(0.0, 0.0, 1.0),
        };
        assert_eq!(advance_setpoint(&c, 0.0), c);
        let a = advance_setpoint(&c, 0.01);
        assert!((a.zeta_des.z - (-PI + 0.005)).abs() < 1e-12);
        assert_eq!(a.omega_des, c.omega_des);
    }

    #[test]
    fn zero_error_zero_moment() {
        let s = State {
            zeta: Vector3::new(0.1, -0.2, 2.0),
            omega: Vector3::new(0.3, 0.1, -0.2),
            ..Default::default()
        };
        let d = AugmentedInput {
            thrust: 0.3,
            zeta_des: s.zeta,
            omega_des: s.omega,
        };
        let (u, sat) = inner_pd(&d, &s, &PdGains::default(), &PhysicalParams::default());
        assert_eq!(u.moment, Vector3::zeros());
        assert_eq!(u.thrust, 0.3);
        assert_eq!(sat, Saturation::default());
    }

    #[test]
    fn roll_error_times_gain() {
        let g = PdGains::default();
        let s = State {
            zeta: Vector3::new(0.1, 0.0, 0.0),
            ..Default::default()
        };
        let u = inner_pd_unclamped(&AugmentedInput::hover(0.3, 0.0), &s, &g);
        assert!((u.moment.x - 0.1 * g.kp[(0, 0)]).abs() < 1e-15);
    }

    #[test]
    fn yaw_error_is_wrapped() {
        let g = PdGains::default();
        let near_seam = State {
            zeta: Vector3::new(0.0, 0.0, PI - 0.02),
            ..Default::default()
        };
        let far = State {
            zeta: Vector3::new(0.0, 0.0, 0.98),
            ..Default::default()
        };
        let a = inner_pd_unclamped(&AugmentedInput::hover(0.3, -PI + 0.03), &near_seam, &g);
        let b = inner_pd_unclamped(&AugmentedInput::hover(0.3, 1.03), &far, &g);
        assert!((a.moment.z - b.moment.z).abs() < 1e-12);
        assert!((a.moment.z - (-0.05 * g.kp[(2, 2)])).abs() < 1e-12);
    }

    #[test]
    fn clamps_and_flags() {
        let p = PhysicalParams::default();
        let (u, sat) = clamp_input(&RotorInput::new(1.0, Vector3::new(1.0, 0.0, -1.0)), &p);
        assert_eq!(u.thrust, p.u1_max);
        assert_eq!(u.moment, Vector3::new(p.torque_max, 0.0, -p.torque_max));
        assert!(sat.thrust && sat.moment);
    }

    #[test]
    fn augment_inverts_pd() {
        let g = PdGains::default();
        let s = State {
            zeta: Vector3::new(0.1, -0.2, 3.0),
            omega: Vector3::new(0.3, 0.1, -0.2),
            ..Default::default()
        };
        let u = RotorInput::new(0.31, Vector3::new(1e-3, -2e-3, 5e-4));
        let back = inner_pd_unclamped(&g.augment(&s, &u), &s, &g);
        assert!((back.to_vector() - u.to_vector()).amax() < 1e-15);
    }
}
