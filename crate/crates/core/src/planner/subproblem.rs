//! Convex subproblem around the current SCP iterate, solved with a
//! log-barrier Newton method whose steps come from a Riccati recursion over
//! the horizon.
//!
//! The defect slack `e_n` is treated as an extra input of the linearized
//! dynamics `x_{n+1} = A x_n + B u_n + e_n`, so the equality constraints are
//! kept exactly and the (possibly enormous) curvature of the penalty terms
//! only ever appears on diagonal blocks.

use nalgebra::{Cholesky, SMatrix, SVector};

use super::linearize::Linearization;
use super::{QpConfig, TrustRegion};
use crate::dynamics::{PhysicalParams, Vec12, Vec4};
use crate::error::{Error, Result};

/// Centering tolerance (half squared Newton decrement) before the last stage.
const INTERMEDIATE_TOL: f64 = 1e-3;

type Vec16 = SVector<f64, 16>;
type Mat16 = SMatrix<f64, 16, 16>;
type Mat12 = SMatrix<f64, 12, 12>;

/// Everything the subproblem needs about the current iterate.
pub struct SubproblemData<'a> {
    pub lin: &'a [Linearization],
    /// `wrap(s_n - s_d(n))`, length N + 1 (entry 0 is fixed).
    pub tracking: &'a [Vec12],
    /// `wrap(s_{n+1} - step(s_n, u_n))`, length N.
    pub defects: &'a [Vec12],
    /// Current inputs, used to intersect the trust box with input limits.
    pub inputs: &'a [Vec4],
    pub penalty: f64,
    pub squared_tracking: bool,
}

/// Step in state and input space; `ds[0]` is always zero.
#[derive(Debug, Clone)]
pub struct Step {
    pub ds: Vec<Vec12>,
    pub du: Vec<Vec4>,
    /// Linearized merit at the step.
    pub model_merit: f64,
}

/// Merit of the linearized model: tracking plus `penalty * sum |defect|_1`.
pub fn model_merit(data: &SubproblemData, ds: &[Vec12], du: &[Vec4]) -> f64 {
    let track: f64 = data
        .tracking
        .iter()
        .zip(ds)
        .map(|(t, d)| tracking_norm(&(t + d), data.squared_tracking))
        .sum();
    let defect: f64 = (0..data.lin.len())
        .map(|n| linear_defect(data, ds, du, n).lp_norm(1))
        .sum();
    track + data.penalty * defect
}

pub(crate) fn tracking_norm(r: &Vec12, squared: bool) -> f64 {
    if squared {
        r.norm_squared()
    } else {
        r.norm()
    }
}

fn linear_defect(data: &SubproblemData, ds: &[Vec12], du: &[Vec4], n: usize) -> Vec12 {
    let l = &data.lin[n];
    data.defects[n] + ds[n + 1] - l.a * ds[n] - l.b * du[n]
}

pub fn solve_subproblem(
    data: &SubproblemData,
    trust: &TrustRegion,
    params: &PhysicalParams,
    cfg: &QpConfig,
) -> Result<Step> {
    let horizon = data.lin.len();
    if data.tracking.len() != horizon + 1 || data.defects.len() != horizon || data.inputs.len() != horizon {
        return Err(Error::LengthMismatch {
            what: "subproblem arrays".into(),
            expected: horizon,
            got: data.defects.len().min(data.inputs.len()),
        });
    }
    let zero = Step {
        ds: vec![Vec12::zeros(); horizon + 1],
        du: vec![Vec4::zeros(); horizon],
        model_merit: 0.0,
    };
    if trust.state.min() <= 0.0 || trust.input.min() <= 0.0 {
        let model_merit = model_merit(data, &zero.ds, &zero.du);
        return Ok(Step { model_merit, ..zero });
    }

    let (ulo, uhi) = input_box(data.inputs, trust, params);
    let mut solver = Barrier {
        data,
        slo: -trust.state,
        shi: trust.state,
        ulo,
        uhi,
        x: zero.ds,
        u: zero.du,
        e: vec![Vec12::zeros(); horizon],
        weight: cfg.barrier_init,
    };
    loop {
        let last = solver.weight >= cfg.barrier_final;
        // Intermediate stages only need to stay near the central path.
        solver.center(cfg, if last { cfg.newton_tol } else { INTERMEDIATE_TOL })?;
        if last {
            break;
        }
        solver.weight = (solver.weight * cfg.barrier_mult).min(cfg.barrier_final);
    }
    let model_merit = model_merit(data, &solver.x, &solver.u);
    Ok(Step {
        ds: solver.x,
        du: solver.u,
        model_merit,
    })
}

/// Trust box intersected with the actuator limits, strictly containing zero.
fn input_box(inputs: &[Vec4], trust: &TrustRegion, params: &PhysicalParams) -> (Vec<Vec4>, Vec<Vec4>) {
    let lower = Vec4::new(0.0, -params.torque_max, -params.torque_max, -params.torque_max);
    let upper = Vec4::new(params.u1_max, params.torque_max, params.torque_max, params.torque_max);
    let mut lo = Vec::with_capacity(inputs.len());
    let mut hi = Vec::with_capacity(inputs.len());
    for u in inputs {
        let mut l = Vec4::zeros();
        let mut h = Vec4::zeros();
        for i in 0..4 {
            let slack = 1e-9 * trust.input[i];
            l[i] = (-trust.input[i]).max(lower[i] - u[i]).min(-slack);
            h[i] = trust.input[i].min(upper[i] - u[i]).max(slack);
        }
        lo.push(l);
        hi.push(h);
    }
    (lo, hi)
}

/// `min_t a t - log(t^2 - |r|^2)` and its derivatives in `r`.
fn cone(a: f64, r2: f64) -> (f64, f64, f64) {
    let s = (1.0 + a * a * r2).sqrt();
    let value = 1.0 + s - (2.0 * (1.0 + s) / (a * a)).ln();
    let slope = a * a / (1.0 + s);
    let bend = a * a / (s * (1.0 + s));
    (value, slope, bend)
}

fn box_terms(z: f64, lo: f64, hi: f64) -> Option<(f64, f64, f64)> {
    let (up, down) = (hi - z, z - lo);
    if up <= 0.0 || down <= 0.0 {
        return None;
    }
    Some((-up.ln() - down.ln(), 1.0 / up - 1.0 / down, 1.0 / (up * up) + 1.0 / (down * down)))
}

struct Barrier<'a> {
    data: &'a SubproblemData<'a>,
    slo: Vec12,
    shi: Vec12,
    ulo: Vec<Vec4>,
    uhi: Vec<Vec4>,
    x: Vec<Vec12>,
    u: Vec<Vec4>,
    e: Vec<Vec12>,
    weight: f64,
}

struct Direction {
    dx: Vec<Vec12>,
    du: Vec<Vec4>,
    de: Vec<Vec12>,
    decrement: f64,
}

impl Barrier<'_> {
    fn horizon(&self) -> usize {
        self.data.lin.len()
    }

    fn defect_weight(&self) -> f64 {
        self.weight * self.data.penalty
    }

    fn value(&self, x: &[Vec12], u: &[Vec4], e: &[Vec12]) -> Option<f64> {
        let a = self.weight;
        let ad = self.defect_weight();
        let mut f = 0.0;
        for n in 1..=self.horizon() {
            let r = self.data.tracking[n] + x[n];
            f += if self.data.squared_tracking {
                a * r.norm_squared()
            } else {
                cone(a, r.norm_squared()).0
            };
            for i in 0..12 {
                f += box_terms(x[n][i], self.slo[i], self.shi[i])?.0;
            }
        }
        for n in 0..self.horizon() {
            for i in 0..4 {
                f += box_terms(u[n][i], self.ulo[n][i], self.uhi[n][i])?.0;
            }
            let d = self.data.defects[n] + e[n];
            for i in 0..12 {
                f += cone(ad, d[i] * d[i]).0;
            }
        }
        Some(f)
    }

    /// Newton direction of the barrier function under the linear dynamics.
    fn direction(&self) -> Result<Direction> {
        let horizon = self.horizon();
        let a = self.weight;
        let ad = self.defect_weight();

        // Stage Hessians/gradients for x (n >= 1) and v = (u, e) (n < N).
        let mut qxx = vec![Mat12::zeros(); horizon + 1];
        let mut qx = vec![Vec12::zeros(); horizon + 1];
        for n in 1..=horizon {
            let r = self.data.tracking[n] + self.x[n];
            if self.data.squared_tracking {
                qxx[n] = Mat12::identity() * (2.0 * a);
                qx[n] = r * (2.0 * a);
            } else {
                let (_, slope, bend) = cone(a, r.norm_squared());
                qxx[n] = (Mat12::identity() - r * r.transpose() * bend) * slope;
                qx[n] = r * slope;
            }
            for i in 0..12 {
                let (_, g, h) = box_terms(self.x[n][i], self.slo[i], self.shi[i]).ok_or_else(|| self.fail(n, "state left its box"))?;
                qxx[n][(i, i)] += h;
                qx[n][i] += g;
            }
        }
        let mut rdiag = vec![Vec16::zeros(); horizon];
        let mut rgrad = vec![Vec16::zeros(); horizon];
        for n in 0..horizon {
            for i in 0..4 {
                let (_, g, h) = box_terms(self.u[n][i], self.ulo[n][i], self.uhi[n][i]).ok_or_else(|| self.fail(n, "input left its box"))?;
                rdiag[n][i] = h;
                rgrad[n][i] = g;
            }
            let d = self.data.defects[n] + self.e[n];
            for i in 0..12 {
                let (_, slope, bend) = cone(ad, d[i] * d[i]);
                rdiag[n][4 + i] = slope * (1.0 - bend * d[i] * d[i]);
                rgrad[n][4 + i] = slope * d[i];
            }
        }

        // Backward Riccati sweep.
        let mut gains = vec![(SMatrix::<f64, 16, 12>::zeros(), Vec16::zeros()); horizon];
        let mut p = qxx[horizon];
        let mut pv = qx[horizon];
        for n in (0..horizon).rev() {
            let l = &self.data.lin[n];
            let mut bt = SMatrix::<f64, 12, 16>::zeros();
            bt.fixed_view_mut::<12, 4>(0, 0).copy_from(&l.b);
            bt.fixed_view_mut::<12, 12>(0, 4).copy_from(&Mat12::identity());
            let pb = p * bt;
            let mut quu: Mat16 = bt.transpose() * pb;
            for i in 0..16 {
                quu[(i, i)] += rdiag[n][i];
            }
            let qux = pb.transpose() * l.a;
            let qu = rgrad[n] + bt.transpose() * pv;
            let chol = Cholesky::new(0.5 * (quu + quu.transpose())).ok_or_else(|| self.fail(n, "stage Hessian not positive definite"))?;
            let k = -chol.solve(&qux);
            let kff = -chol.solve(&qu);
            if n >= 1 {
                let next_p = qxx[n] + l.a.transpose() * p * l.a + qux.transpose() * k;
                pv = qx[n] + l.a.transpose() * pv + qux.transpose() * kff;
                p = 0.5 * (next_p + next_p.transpose());
            }
            gains[n] = (k, kff);
        }

        // Forward rollout of the step.
        let mut dx = vec![Vec12::zeros(); horizon + 1];
        let mut du = vec![Vec4::zeros(); horizon];
        let mut de = vec![Vec12::zeros(); horizon];
        let mut slope = 0.0;
        for n in 0..horizon {
            let (k, kff) = &gains[n];
            let v = k * dx[n] + kff;
            du[n] = v.fixed_rows::<4>(0).into();
            de[n] = v.fixed_rows::<12>(4).into();
            let l = &self.data.lin[n];
            dx[n + 1] = l.a * dx[n] + l.b * du[n] + de[n];
            slope += rgrad[n].dot(&v) + qx[n + 1].dot(&dx[n + 1]);
        }
        if !slope.is_finite() {
            return Err(self.fail(0, "non-finite Newton direction"));
        }
        Ok(Direction {
            dx,
            du,
            de,
            decrement: -slope,
        })
    }

    fn max_step(&self, dir: &Direction) -> f64 {
        let mut alpha: f64 = 1.0;
        let mut limit = |z: f64, dz: f64, lo: f64, hi: f64| {
            if dz > 0.0 {
                alpha = alpha.min(0.99 * (hi - z) / dz);
            } else if dz < 0.0 {
                alpha = alpha.min(0.99 * (lo - z) / dz);
            }
        };
        for n in 1..=self.horizon() {
            for i in 0..12 {
                limit(self.x[n][i], dir.dx[n][i], self.slo[i], self.shi[i]);
            }
        }
        for n in 0..self.horizon() {
            for i in 0..4 {
                limit(self.u[n][i], dir.du[n][i], self.ulo[n][i], self.uhi[n][i]);
            }
        }
        alpha
    }

    fn center(&mut self, cfg: &QpConfig, tol: f64) -> Result<()> {
        let mut current = self
            .value(&self.x, &self.u, &self.e)
            .ok_or_else(|| self.fail(0, "iterate outside its box"))?;
        for _ in 0..cfg.max_newton_iters {
            let dir = self.direction()?;
            if dir.decrement / 2.0 <= tol {
                return Ok(());
            }
            let mut alpha = self.max_step(&dir);
            let mut accepted = None;
            for _ in 0..60 {
                let x: Vec<Vec12> = self.x.iter().zip(&dir.dx).map(|(a, b)| a + b * alpha).collect();
                let u: Vec<Vec4> = self.u.iter().zip(&dir.du).map(|(a, b)| a + b * alpha).collect();
                let e: Vec<Vec12> = self.e.iter().zip(&dir.de).map(|(a, b)| a + b * alpha).collect();
                if let Some(f) = self.value(&x, &u, &e) {
                    if f <= current - 0.25 * alpha * dir.decrement {
                        accepted = Some((x, u, e, f));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            // A failed line search means rounding noise dominates the decrease.
            let Some((x, u, e, f)) = accepted else {
                return Ok(());
            };
            self.x = x;
            self.u = u;
            self.e = e;
            current = f;
        }
        Ok(())
    }

    fn fail(&self, stage: usize, what: &str) -> Error {
        Error::QpNumericalFailure(format!(
            "{what} at stage {stage} (barrier weight {:e}, penalty {:e})",
            self.weight, self.data.penalty
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::ScpConfig;

    // x-axis double integrator embedded in the 12-state layout.
    fn double_integrator(horizon: usize, dt: f64) -> Vec<Linearization> {
        let mut a = SMatrix::<f64, 12, 12>::identity();
        a[(0, 3)] = dt;
        let mut b = SMatrix::<f64, 12, 4>::zeros();
        b[(3, 0)] = dt;
        let next = crate::dynamics::State::default();
        vec![Linearization { a, b, next }; horizon]
    }

    fn trust() -> TrustRegion {
        ScpConfig::default().base_trust()
    }

    #[test]
    fn zero_trust_returns_iterate() {
        let lin = double_integrator(3, 0.1);
        let tracking = vec![Vec12::repeat(0.1); 4];
        let defects = vec![Vec12::repeat(0.05); 3];
        let inputs = vec![Vec4::new(0.3, 0.0, 0.0, 0.0); 3];
        let data = SubproblemData {
            lin: &lin,
            tracking: &tracking,
            defects: &defects,
            inputs: &inputs,
            penalty: 10.0,
            squared_tracking: false,
        };
        let step = solve_subproblem(&data, &trust().scaled(0.0), &PhysicalParams::default(), &QpConfig::default()).unwrap();
        assert!(step.ds.iter().all(|d| d.amax() == 0.0));
        assert!(step.du.iter().all(|d| d.amax() == 0.0));
        assert_eq!(step.model_merit, model_merit(&data, &step.ds, &step.du));
    }

    #[test]
    fn optimal_iterate_is_kept() {
        let lin = double_integrator(5, 0.1);
        let tracking = vec![Vec12::zeros(); 6];
        let defects = vec![Vec12::zeros(); 5];
        let inputs = vec![Vec4::new(0.3, 0.0, 0.0, 0.0); 5];
        let data = SubproblemData {
            lin: &lin,
            tracking: &tracking,
            defects: &defects,
            inputs: &inputs,
            penalty: 10.0,
            squared_tracking: false,
        };
        let step = solve_subproblem(&data, &trust(), &PhysicalParams::default(), &QpConfig::default()).unwrap();
        assert!(step.ds.iter().all(|d| d.amax() < 1e-9));
        assert!(step.du.iter().all(|d| d.amax() < 1e-9));
        assert!(step.model_merit < 1e-9);
    }

    #[test]
    fn large_penalty_reduces_defects() {
        let lin = double_integrator(3, 0.1);
        let mut tracking = vec![Vec12::zeros(); 4];
        tracking[2][0] = 0.05;
        let mut defects = vec![Vec12::zeros(); 3];
        defects[0][0] = 0.02;
        defects[1][3] = -0.03;
        defects[2][0] = 0.01;
        let inputs = vec![Vec4::new(0.3, 0.0, 0.0, 0.0); 3];
        let before: f64 = defects.iter().map(|d| d.lp_norm(1)).sum();
        for penalty in [1e2, 1e4] {
            let data = SubproblemData {
                lin: &lin,
                tracking: &tracking,
                defects: &defects,
                inputs: &inputs,
                penalty,
                squared_tracking: false,
            };
            let step = solve_subproblem(&data, &trust(), &PhysicalParams::default(), &QpConfig::default()).unwrap();
            let after: f64 = (0..3).map(|n| linear_defect(&data, &step.ds, &step.du, n).lp_norm(1)).sum();
            assert!(after < before, "penalty {penalty}: {after} vs {before}");
            assert!(after < 1e-5, "penalty {penalty}: {after}");
            assert!(step.model_merit < model_merit(&data, &vec![Vec12::zeros(); 4], &[Vec4::zeros(); 3]));
        }
    }

    #[test]
    fn cone_derivatives_match_differences() {
        for (a, x) in [(1.0f64, 0.3f64), (100.0, -0.02), (1e4, 1e-5)] {
            let h = 1e-6 * (1.0 / a).max(x.abs());
            let f = |y: f64| cone(a, y * y).0;
            let (_, slope, bend) = cone(a, x * x);
            let g = (f(x + h) - f(x - h)) / (2.0 * h);
            assert!((slope * x - g).abs() <= 1e-5 * g.abs().max(a), "{a} {x}");
            let gp = |y: f64| {
                let (_, s, _) = cone(a, y * y);
                s * y
            };
            let hess = (gp(x + h) - gp(x - h)) / (2.0 * h);
            let ours = slope * (1.0 - bend * x * x);
            assert!((ours - hess).abs() <= 1e-5 * hess.abs(), "{a} {x}: {ours} {hess}");
        }
    }
}
