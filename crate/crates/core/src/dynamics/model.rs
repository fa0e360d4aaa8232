use nalgebra::{SMatrix, Vector3};

use super::{Accel, PhysicalParams, RotorInput, State};
use crate::error::Result;

/// d(f_v, f_omega) / d(state) and d(f_v, f_omega) / d(input).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccelJacobian {
    pub wrt_state: SMatrix<f64, 6, 12>,
    pub wrt_input: SMatrix<f64, 6, 4>,
}

/// An acceleration model `(s, u) -> (f_v, f_omega)`.
///
/// Implementations are the physics plant and the learned networks; the
/// planner, controller synthesis and experiment harness only see this trait.
pub trait DynamicsModel: Send + Sync {
    fn name(&self) -> &str;

    /// Nominal vehicle constants (step size, input limits, hover thrust).
    fn params(&self) -> &PhysicalParams;

    fn accel(&self, s: &State, u: &RotorInput) -> Result<Accel>;

    /// Defaults to central differences of [`DynamicsModel::accel`].
    fn accel_jacobian(&self, s: &State, u: &RotorInput) -> Result<AccelJacobian> {
        finite_difference_jacobian(self, s, u, 1e-6)
    }

    fn dt(&self) -> f64 {
        self.params().dt
    }

    fn hover_input(&self) -> RotorInput {
        RotorInput::new(self.params().hover_thrust(), Vector3::zeros())
    }
}

fn stack(a: &Accel) -> SMatrix<f64, 6, 1> {
    SMatrix::<f64, 6, 1>::new(
        a.linear.x, a.linear.y, a.linear.z, a.angular.x, a.angular.y, a.angular.z,
    )
}

/// Central-difference accel Jacobian; perturbations are applied to the raw
/// (unwrapped) state vector.
pub fn finite_difference_jacobian<M: DynamicsModel + ?Sized>(
    model: &M,
    s: &State,
    u: &RotorInput,
    h: f64,
) -> Result<AccelJacobian> {
    let x = s.to_vector();
    let mut wrt_state = SMatrix::<f64, 6, 12>::zeros();
    for k in 0..12 {
        let mut xp = x;
        let mut xm = x;
        xp[k] += h;
        xm[k] -= h;
        let fp = stack(&model.accel(&raw_state(&xp), u)?);
        let fm = stack(&model.accel(&raw_state(&xm), u)?);
        wrt_state.set_column(k, &((fp - fm) / (2.0 * h)));
    }
    let uv = u.to_vector();
    let mut wrt_input = SMatrix::<f64, 6, 4>::zeros();
    for k in 0..4 {
        let scale = if k == 0 { 1.0 } else { 1e-3 };
        let hk = h * scale;
        let mut up = uv;
        let mut um = uv;
        up[k] += hk;
        um[k] -= hk;
        let fp = stack(&model.accel(s, &RotorInput::from_vector(&up))?);
        let fm = stack(&model.accel(s, &RotorInput::from_vector(&um))?);
        wrt_input.set_column(k, &((fp - fm) / (2.0 * hk)));
    }
    Ok(AccelJacobian {
        wrt_state,
        wrt_input,
    })
}

/// State built without angle wrapping, for differentiation near the seam.
pub(crate) fn raw_state(x: &super::Vec12) -> State {
    State {
        p: x.fixed_rows::<3>(0).into(),
        v: x.fixed_rows::<3>(3).into(),
        zeta: x.fixed_rows::<3>(6).into(),
        omega: x.fixed_rows::<3>(9).into(),
    }
}
