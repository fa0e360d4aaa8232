use nalgebra::Vector3;

use super::kinematics::rotation_b_to_i;
use super::{Accel, DynamicsModel, PhysicalParams, RotorInput, State};
use crate::error::Result;

/// Newton-Euler accelerations of a rigid body with diagonal inertia, thrust
/// along body -z and gravity along inertial +z (NED).
pub fn ground_truth_accel(s: &State, u: &RotorInput, params: &PhysicalParams) -> Accel {
    let thrust_body = Vector3::new(0.0, 0.0, -u.thrust);
    let linear = rotation_b_to_i(&s.zeta) * thrust_body / params.mass + Vector3::new(0.0, 0.0, params.g);
    let i = params.inertia;
    let iw = i.component_mul(&s.omega);
    let angular = (u.moment - s.omega.cross(&iw)).component_div(&i);
    Accel { linear, angular }
}

/// The physics plant as a [`DynamicsModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub params: PhysicalParams,
}

impl GroundTruth {
    pub fn new(params: PhysicalParams) -> Self {
        GroundTruth { params }
    }
}

impl DynamicsModel for GroundTruth {
    fn name(&self) -> &str {
        "ground_truth"
    }

    fn params(&self) -> &PhysicalParams {
        &self.params
    }

    fn accel(&self, s: &State, u: &RotorInput) -> Result<Accel> {
        Ok(ground_truth_accel(s, u, &self.params))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hover_balances_and_free_fall() {
        let p = PhysicalParams::default();
        let hover = RotorInput::new(p.hover_thrust(), Vector3::zeros());
        let a = ground_truth_accel(&State::default(), &hover, &p);
        assert!(a.linear.norm() < 1e-15 && a.angular.norm() == 0.0);
        let a = ground_truth_accel(&State::default(), &RotorInput::default(), &p);
        assert_eq!(a.linear, Vector3::new(0.0, 0.0, p.g));
    }

    #[test]
    fn pitched_hover_thrust_accelerates_backwards() {
        let p = PhysicalParams::default();
        let s = State {
            zeta: Vector3::new(0.0, 0.1, 0.0),
            ..Default::default()
        };
        let a = ground_truth_accel(&s, &RotorInput::new(p.hover_thrust(), Vector3::zeros()), &p);
        // R_B->I [0,0,-mg]/m = (-g sin 0.1, 0, -g cos 0.1)
        assert!((a.linear.x + p.g * 0.1f64.sin()).abs() < 1e-12);
        assert!(a.linear.y.abs() < 1e-15);
        assert!((a.linear.z - p.g * (1.0 - 0.1f64.cos())).abs() < 1e-12);
    }

    #[test]
    fn gyroscopic_term() {
        let p = PhysicalParams::default();
        let s = State {
            omega: Vector3::new(1.0, 2.0, 0.0),
            ..Default::default()
        };
        let a = ground_truth_accel(&s, &RotorInput::default(), &p);
        // -(w x Iw)_z / Izz = -(wx*Iyy*wy - wy*Ixx*wx)/Izz = 0 for Ixx = Iyy
        assert!(a.angular.z.abs() < 1e-12);
        assert!(a.angular.x.abs() < 1e-12 && a.angular.y.abs() < 1e-12);
    }
}
