//! Rotation and Euler-rate maps.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::math::{rot_x, rot_y, rot_z};

/// Gimbal-lock guard on |cos(pitch)|.
pub const SINGULARITY_EPS: f64 = 1e-3;

/// Inertial-to-body rotation for yaw-pitch-roll Euler angles:
/// `R_x(roll) * R_y(pitch) * R_z(yaw)`.
pub fn rotation_i_to_b(zeta: &Vector3<f64>) -> Matrix3<f64> {
    rot_x(zeta.x) * rot_y(zeta.y) * rot_z(zeta.z)
}

/// Body-to-inertial rotation (transpose of [`rotation_i_to_b`]).
pub fn rotation_b_to_i(zeta: &Vector3<f64>) -> Matrix3<f64> {
    rotation_i_to_b(zeta).transpose()
}

fn guard(theta: f64) -> Result<f64> {
    let c = theta.cos();
    if c.abs() <= SINGULARITY_EPS {
        return Err(Error::SingularAttitude { cos_theta: c });
    }
    Ok(c)
}

/// Matrix mapping body rates to Euler-angle rates.
pub fn euler_rate_matrix(zeta: &Vector3<f64>) -> Result<Matrix3<f64>> {
    let ct = guard(zeta.y)?;
    let (sp, cp) = zeta.x.sin_cos();
    let tt = zeta.y.sin() / ct;
    Ok(Matrix3::new(
        1.0,
        sp * tt,
        cp * tt,
        0.0,
        cp,
        -sp,
        0.0,
        sp / ct,
        cp / ct,
    ))
}

/// Jacobian of `euler_rate_matrix(zeta) * omega` with respect to `zeta`.
pub fn euler_rate_jacobian(zeta: &Vector3<f64>, omega: &Vector3<f64>) -> Result<Matrix3<f64>> {
    let ct = guard(zeta.y)?;
    let (sp, cp) = zeta.x.sin_cos();
    let st = zeta.y.sin();
    let tt = st / ct;
    let (wy, wz) = (omega.y, omega.z);
    let a = sp * wy + cp * wz;
    let b = cp * wy - sp * wz;
    Ok(Matrix3::new(
        b * tt,
        a / (ct * ct),
        0.0,
        -sp * wy - cp * wz,
        0.0,
        0.0,
        b / ct,
        a * st / (ct * ct),
        0.0,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_6};

    #[test]
    fn identity_and_pure_yaw() {
        assert_eq!(rotation_i_to_b(&Vector3::zeros()), Matrix3::identity());
        let r = rotation_i_to_b(&Vector3::new(0.0, 0.0, FRAC_PI_2));
        let expected = Matrix3::new(0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((r - expected).abs().max() < 1e-15);
    }

    #[test]
    fn composed_rotation_matches_hand_expansion() {
        // Closed-form entries of Rx*Ry*Rz written out independently.
        let (phi, theta, psi) = (0.3f64, -0.2f64, 1.1f64);
        let (sf, cf) = phi.sin_cos();
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = psi.sin_cos();
        let expected = Matrix3::new(
            ct * cp,
            ct * sp,
            -st,
            sf * st * cp - cf * sp,
            sf * st * sp + cf * cp,
            sf * ct,
            cf * st * cp + sf * sp,
            cf * st * sp - sf * cp,
            cf * ct,
        );
        let r = rotation_i_to_b(&Vector3::new(phi, theta, psi));
        assert!((r - expected).abs().max() < 1e-15);
        assert!((r.transpose() * r - Matrix3::identity()).abs().max() < 1e-12);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn euler_rate_examples() {
        for psi in [-3.0, 0.0, 0.7, 3.1] {
            assert_eq!(euler_rate_matrix(&Vector3::new(0.0, 0.0, psi)).unwrap(), Matrix3::identity());
        }
        let m = euler_rate_matrix(&Vector3::new(FRAC_PI_6, FRAC_PI_6, 0.0)).unwrap();
        // sin(pi/6) = 1/2, cos(pi/6) = sqrt(3)/2, tan(pi/6) = 1/sqrt(3)
        let row = [1.0, 0.5 / 3f64.sqrt(), 0.5];
        for j in 0..3 {
            assert!((m[(0, j)] - row[j]).abs() < 1e-15);
        }
        assert!(matches!(
            euler_rate_matrix(&Vector3::new(0.0, FRAC_PI_2, 0.0)),
            Err(Error::SingularAttitude { .. })
        ));
    }

    #[test]
    fn rate_jacobian_matches_finite_differences() {
        let zeta = Vector3::new(0.4, -0.3, 2.0);
        let omega = Vector3::new(0.5, -1.2, 0.8);
        let j = euler_rate_jacobian(&zeta, &omega).unwrap();
        let h = 1e-6;
        for k in 0..3 {
            let mut zp = zeta;
            let mut zm = zeta;
            zp[k] += h;
            zm[k] -= h;
            let col = (euler_rate_matrix(&zp).unwrap() * omega - euler_rate_matrix(&zm).unwrap() * omega) / (2.0 * h);
            for i in 0..3 {
                assert!((col[i] - j[(i, k)]).abs() < 1e-8, "entry ({i},{k})");
            }
        }
    }
}
