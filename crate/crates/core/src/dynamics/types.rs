use std::f64::consts::FRAC_PI_2;

use nalgebra::{SVector, Vector3};

use crate::error::{Error, Result};
use crate::math::{angle_diff, wrap_angle};

pub type Vec12 = SVector<f64, 12>;
pub type Vec7 = SVector<f64, 7>;
pub type Vec4 = SVector<f64, 4>;

/// Largest roll/pitch magnitude the simulator tolerates.
pub const TILT_ENVELOPE: f64 = FRAC_PI_2 - 0.1;

/// Rigid-body state: NED position and velocity, yaw-pitch-roll Euler angles,
/// body-frame angular velocity.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct State {
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    /// (roll, pitch, yaw) in radians, wrapped to (-pi, pi].
    pub zeta: Vector3<f64>,
    pub omega: Vector3<f64>,
}

impl State {
    pub fn hover_at(p: Vector3<f64>, yaw: f64) -> Self {
        State {
            p,
            zeta: Vector3::new(0.0, 0.0, wrap_angle(yaw)),
            ..Default::default()
        }
    }

    pub fn to_vector(&self) -> Vec12 {
        let mut x = Vec12::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&self.p);
        x.fixed_rows_mut::<3>(3).copy_from(&self.v);
        x.fixed_rows_mut::<3>(6).copy_from(&self.zeta);
        x.fixed_rows_mut::<3>(9).copy_from(&self.omega);
        x
    }

    /// Builds a state from a 12-vector; angles are wrapped.
    pub fn from_vector(x: &Vec12) -> Self {
        State {
            p: x.fixed_rows::<3>(0).into(),
            v: x.fixed_rows::<3>(3).into(),
            zeta: x.fixed_rows::<3>(6).map(wrap_angle),
            omega: x.fixed_rows::<3>(9).into(),
        }
    }

    pub fn from_slice(x: &[f64]) -> Result<Self> {
        if x.len() != 12 {
            return Err(Error::DimensionMismatch {
                expected: 12,
                got: x.len(),
            });
        }
        Ok(Self::from_vector(&Vec12::from_column_slice(x)))
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|x| x.is_finite())
    }

    /// `self - reference` with angle components taken along the shortest arc.
    pub fn error_from(&self, reference: &State) -> Vec12 {
        let (a, b) = (self.to_vector(), reference.to_vector());
        let mut e = a - b;
        for i in 6..9 {
            e[i] = angle_diff(a[i], b[i]);
        }
        e
    }

    pub fn yaw(&self) -> f64 {
        self.zeta.z
    }

    /// Checks finiteness and the roll/pitch envelope.
    pub fn check_envelope(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::EnvelopeViolation("non-finite state".into()));
        }
        if self.zeta.x.abs() >= TILT_ENVELOPE || self.zeta.y.abs() >= TILT_ENVELOPE {
            return Err(Error::EnvelopeViolation(format!(
                "tilt out of envelope: roll {:.3} rad, pitch {:.3} rad",
                self.zeta.x, self.zeta.y
            )));
        }
        Ok(())
    }
}

/// Physical input: collective thrust along body -z and body moments.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RotorInput {
    pub thrust: f64,
    /// Roll, pitch and yaw moments (u2, u3, u4).
    pub moment: Vector3<f64>,
}

impl RotorInput {
    pub fn new(thrust: f64, moment: Vector3<f64>) -> Self {
        RotorInput { thrust, moment }
    }

    pub fn to_vector(&self) -> Vec4 {
        Vec4::new(self.thrust, self.moment.x, self.moment.y, self.moment.z)
    }

    pub fn from_vector(u: &Vec4) -> Self {
        RotorInput::new(u[0], Vector3::new(u[1], u[2], u[3]))
    }
}

/// Input of the PD-augmented plant: thrust plus attitude and rate set-points.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AugmentedInput {
    pub thrust: f64,
    pub zeta_des: Vector3<f64>,
    pub omega_des: Vector3<f64>,
}

impl AugmentedInput {
    /// Hover command holding a heading.
    pub fn hover(thrust: f64, yaw: f64) -> Self {
        AugmentedInput {
            thrust,
            zeta_des: Vector3::new(0.0, 0.0, wrap_angle(yaw)),
            omega_des: Vector3::zeros(),
        }
    }

    pub fn to_vector(&self) -> Vec7 {
        let mut x = Vec7::zeros();
        x[0] = self.thrust;
        x.fixed_rows_mut::<3>(1).copy_from(&self.zeta_des);
        x.fixed_rows_mut::<3>(4).copy_from(&self.omega_des);
        x
    }

    pub fn from_vector(x: &Vec7) -> Self {
        AugmentedInput {
            thrust: x[0],
            zeta_des: x.fixed_rows::<3>(1).map(wrap_angle),
            omega_des: x.fixed_rows::<3>(4).into(),
        }
    }
}

/// Translational and rotational accelerations (f_v, f_omega).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Accel {
    pub linear: Vector3<f64>,
    pub angular: Vector3<f64>,
}
