//! State derivative and the two integrators: the forward-Euler map used by
//! planning and learning, and the RK4 "real plant".

use super::kinematics::euler_rate_matrix;
use super::model::raw_state;
use super::{DynamicsModel, GroundTruth, PhysicalParams, RotorInput, State, Vec12};
use crate::error::{Error, Result};

/// `(p_dot, v_dot, zeta_dot, omega_dot) = (v, f_v, R_hat * omega, f_omega)`.
pub fn state_derivative<M: DynamicsModel + ?Sized>(model: &M, s: &State, u: &RotorInput) -> Result<Vec12> {
    let a = model.accel(s, u)?;
    let zeta_dot = euler_rate_matrix(&s.zeta)? * s.omega;
    let mut d = Vec12::zeros();
    d.fixed_rows_mut::<3>(0).copy_from(&s.v);
    d.fixed_rows_mut::<3>(3).copy_from(&a.linear);
    d.fixed_rows_mut::<3>(6).copy_from(&zeta_dot);
    d.fixed_rows_mut::<3>(9).copy_from(&a.angular);
    Ok(d)
}

/// Forward-Euler step with angle wrapping but no envelope check.
pub fn euler_step<M: DynamicsModel + ?Sized>(model: &M, s: &State, u: &RotorInput, dt: f64) -> Result<State> {
    let d = state_derivative(model, s, u)?;
    Ok(State::from_vector(&(s.to_vector() + d * dt)))
}

/// `s + f(s, u) * dt`, wrapped, with the envelope enforced.
pub fn step<M: DynamicsModel + ?Sized>(model: &M, s: &State, u: &RotorInput, dt: f64) -> Result<State> {
    if dt <= 0.0 {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let next = euler_step(model, s, u, dt)?;
    next.check_envelope()?;
    Ok(next)
}

/// Classic RK4 over `dt` split into `substeps` equal intervals, input held.
pub fn integrate_rk4<M: DynamicsModel + ?Sized>(
    model: &M,
    s: &State,
    u: &RotorInput,
    dt: f64,
    substeps: usize,
) -> Result<State> {
    if substeps == 0 {
        return Err(Error::InvalidArgument("substeps must be >= 1".into()));
    }
    let h = dt / substeps as f64;
    let mut x = s.to_vector();
    let f = |x: &Vec12| state_derivative(model, &raw_state(x), u);
    for _ in 0..substeps {
        let k1 = f(&x)?;
        let k2 = f(&(x + k1 * (h / 2.0)))?;
        let k3 = f(&(x + k2 * (h / 2.0)))?;
        let k4 = f(&(x + k3 * h))?;
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    let next = State::from_vector(&x);
    next.check_envelope()?;
    Ok(next)
}

/// Ground-truth plant integration between control events.
pub fn simulate_fine(s: &State, u: &RotorInput, params: &PhysicalParams, dt: f64, substeps: usize) -> Result<State> {
    integrate_rk4(&GroundTruth::new(*params), s, u, dt, substeps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn hover() -> (GroundTruth, RotorInput) {
        let gt = GroundTruth::new(PhysicalParams::default());
        let u = gt.hover_input();
        (gt, u)
    }

    #[test]
    fn hover_is_a_fixed_point() {
        let (gt, u) = hover();
        let s = State::hover_at(Vector3::new(1.0, -2.0, -1.0), 0.3);
        assert_eq!(state_derivative(&gt, &s, &u).unwrap(), Vec12::zeros());
        let next = step(&gt, &s, &u, 0.01).unwrap();
        assert!((next.to_vector() - s.to_vector()).abs().max() < 1e-12);
        let fine = simulate_fine(&s, &u, &gt.params, 0.01, 4).unwrap();
        assert!((fine.to_vector() - s.to_vector()).abs().max() < 1e-12);
    }

    #[test]
    fn kinematic_identity() {
        let (gt, u) = hover();
        let s = State {
            v: Vector3::new(1.0, 0.0, 0.0),
            ..Default::default()
        };
        let d = state_derivative(&gt, &s, &u).unwrap();
        assert_eq!(d.fixed_rows::<3>(0).clone_owned(), Vector3::new(1.0, 0.0, 0.0));
        assert!(d.rows(3, 9).abs().max() < 1e-15);
        let next = step(&gt, &s, &u, 0.01).unwrap();
        assert!((next.p.x - 0.01).abs() < 1e-15);
    }

    #[test]
    fn free_fall_ballistics() {
        let p = PhysicalParams::default();
        let mut s = State::default();
        for _ in 0..100 {
            s = simulate_fine(&s, &RotorInput::default(), &p, 0.01, 4).unwrap();
        }
        assert!((s.p.z - 4.905).abs() < 1e-6);
        assert!((s.v.z - 9.81).abs() < 1e-9);
    }

    #[test]
    fn step_rejects_bad_dt_and_envelope() {
        let (gt, u) = hover();
        assert!(step(&gt, &State::default(), &u, 0.0).is_err());
        let s = State {
            zeta: Vector3::new(0.0, 1.4, 0.0),
            omega: Vector3::new(0.0, 10.0, 0.0),
            ..Default::default()
        };
        assert!(matches!(step(&gt, &s, &u, 0.01), Err(Error::EnvelopeViolation(_))));
    }

    #[test]
    fn zero_substeps_rejected() {
        let (gt, u) = hover();
        assert!(integrate_rk4(&gt, &State::default(), &u, 0.01, 0).is_err());
    }
}
