use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::math::{max_abs, spectral_radius};

pub const RICCATI_MAX_ITERS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    /// Feedback applied as `u = u_ref + k * error`.
    pub k: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub iterations: usize,
    /// Spectral radius of `A + B K`.
    pub closed_loop_radius: f64,
}

/// Infinite-horizon discrete LQR by iterating the Riccati recursion from
/// `P = Q` until successive iterates differ by at most `tol * max(1, |P|)`
/// (entrywise max norm).
pub fn lqr_gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    tol: f64,
) -> Result<RiccatiSolution> {
    let n = a.nrows();
    let m = b.ncols();
    check_shape("A", a, n, n)?;
    check_shape("B", b, n, m)?;
    check_shape("Q", q, n, n)?;
    check_shape("R", r, m, m)?;

    let gain = |p: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let btp = b.transpose() * p;
        let lhs = r + &btp * b;
        let rhs = &btp * a;
        lhs.cholesky()
            .map(|c| -c.solve(&rhs))
            .ok_or_else(|| Error::InvalidArgument("R + B'PB is not positive definite".into()))
    };

    let mut p = q.clone();
    for it in 1..=RICCATI_MAX_ITERS {
        let k = gain(&p)?;
        let acl = a + b * &k;
        // Joseph-style update keeps P symmetric positive semi-definite.
        let next = q + k.transpose() * r * &k + acl.transpose() * &p * &acl;
        let next = (&next + next.transpose()) * 0.5;
        if !next.iter().all(|x| x.is_finite()) {
            return Err(Error::RiccatiDiverged(it));
        }
        let change = max_abs(&(&next - &p));
        p = next;
        if change <= tol * max_abs(&p).max(1.0) {
            let k = gain(&p)?;
            let closed_loop_radius = spectral_radius(&(a + b * &k));
            return Ok(RiccatiSolution {
                k,
                p,
                iterations: it,
                closed_loop_radius,
            });
        }
    }
    Err(Error::RiccatiDiverged(RICCATI_MAX_ITERS))
}

fn check_shape(what: &str, m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::InvalidArgument(format!(
            "{what} is {}x{}, expected {rows}x{cols}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}
