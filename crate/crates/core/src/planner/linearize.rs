use nalgebra::{Matrix3, SMatrix};

use crate::dynamics::{euler_rate_jacobian, euler_rate_matrix, euler_step, DynamicsModel, RotorInput, State};
use crate::error::Result;

/// First-order model of the forward-Euler map around `(s, u)`:
/// `step(s + ds, u + du) ~ next + a * ds + b * du`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linearization {
    pub a: SMatrix<f64, 12, 12>,
    pub b: SMatrix<f64, 12, 4>,
    /// `step(s, u)` (wrapped, envelope not enforced).
    pub next: State,
}

pub fn linearize_dynamics<M: DynamicsModel + ?Sized>(model: &M, s: &State, u: &RotorInput) -> Result<Linearization> {
    let dt = model.dt();
    let jac = model.accel_jacobian(s, u)?;
    let rate = euler_rate_matrix(&s.zeta)?;
    let rate_wrt_zeta = euler_rate_jacobian(&s.zeta, &s.omega)?;

    let mut cont = SMatrix::<f64, 12, 12>::zeros();
    cont.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
    cont.fixed_view_mut::<3, 12>(3, 0).copy_from(&jac.wrt_state.fixed_rows::<3>(0));
    cont.fixed_view_mut::<3, 3>(6, 6).copy_from(&rate_wrt_zeta);
    cont.fixed_view_mut::<3, 3>(6, 9).copy_from(&rate);
    cont.fixed_view_mut::<3, 12>(9, 0).copy_from(&jac.wrt_state.fixed_rows::<3>(3));

    let mut b = SMatrix::<f64, 12, 4>::zeros();
    b.fixed_view_mut::<3, 4>(3, 0).copy_from(&(jac.wrt_input.fixed_rows::<3>(0) * dt));
    b.fixed_view_mut::<3, 4>(9, 0).copy_from(&(jac.wrt_input.fixed_rows::<3>(3) * dt));

    Ok(Linearization {
        a: SMatrix::identity() + cont * dt,
        b,
        next: euler_step(model, s, u, dt)?,
    })
}
