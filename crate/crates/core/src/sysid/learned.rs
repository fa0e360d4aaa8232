use nalgebra::SMatrix;

use super::{feature_jacobian, featurize, NetKind, ReluNet};
use crate::dynamics::{Accel, AccelJacobian, DynamicsModel, PhysicalParams, RotorInput, State};
use crate::error::{Error, Result};

/// Accelerations predicted by a translational and a rotational network.
///
/// `params` supplies only the step size, input limits and hover thrust the
/// planner needs; the accelerations come entirely from the networks.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedModel {
    pub params: PhysicalParams,
    pub fv: ReluNet,
    pub fw: ReluNet,
}

impl LearnedModel {
    pub fn new(params: PhysicalParams, fv: ReluNet, fw: ReluNet) -> Result<Self> {
        if fv.kind != NetKind::Translational || fw.kind != NetKind::Rotational {
            return Err(Error::ModelContractViolation(format!(
                "expected (translational, rotational) nets, got ({}, {})",
                fv.kind, fw.kind
            )));
        }
        fv.validate()?;
        fw.validate()?;
        Ok(LearnedModel { params, fv, fw })
    }
}

impl DynamicsModel for LearnedModel {
    fn name(&self) -> &str {
        "learned"
    }

    fn params(&self) -> &PhysicalParams {
        &self.params
    }

    fn accel(&self, s: &State, u: &RotorInput) -> Result<Accel> {
        let lin = self.fv.forward(&featurize(s, u, NetKind::Translational));
        let ang = self.fw.forward(&featurize(s, u, NetKind::Rotational));
        match (lin, ang) {
            (Ok(l), Ok(a)) => Ok(Accel {
                linear: l.physical,
                angular: a.physical,
            }),
            (Err(e), _) | (_, Err(e)) => Err(Error::ModelContractViolation(e.to_string())),
        }
    }

    fn accel_jacobian(&self, s: &State, u: &RotorInput) -> Result<AccelJacobian> {
        let mut wrt_state = SMatrix::<f64, 6, 12>::zeros();
        let mut wrt_input = SMatrix::<f64, 6, 4>::zeros();
        for (row, net) in [(0, &self.fv), (3, &self.fw)] {
            let beta = featurize(s, u, net.kind);
            let jn = net.jacobian(&beta).map_err(|e| Error::ModelContractViolation(e.to_string()))?;
            let (js, ju) = feature_jacobian(s, net.kind);
            let ds = &jn * js;
            let du = &jn * ju;
            for i in 0..3 {
                for k in 0..12 {
                    wrt_state[(row + i, k)] = ds[(i, k)];
                }
                for k in 0..4 {
                    wrt_input[(row + i, k)] = du[(i, k)];
                }
            }
        }
        Ok(AccelJacobian {
            wrt_state,
            wrt_input,
        })
    }
}

/// A learned model whose nets output constant zero acceleration.
pub fn zero_model(params: PhysicalParams, hidden: usize) -> LearnedModel {
    LearnedModel {
        params,
        fv: ReluNet::zeros(NetKind::Translational, hidden),
        fw: ReluNet::zeros(NetKind::Rotational, hidden),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::finite_difference_jacobian;
    use rand::SeedableRng;
    use nalgebra::Vector3;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weight_nets_return_denormalised_bias() {
        let mut m = zero_model(PhysicalParams::default(), 3);
        m.fv.b_out = Vector3::new(1.0, -1.0, 0.5);
        m.fv.out_mean = Vector3::new(0.1, 0.2, 0.3);
        m.fv.out_std = Vector3::new(2.0, 3.0, 4.0);
        let a = m.accel(&State::default(), &m.hover_input()).unwrap();
        assert_eq!(a.linear, Vector3::new(2.1, -2.8, 2.3));
        assert_eq!(a.angular, Vector3::zeros());
    }

    #[test]
    fn swapped_nets_violate_contract() {
        let p = PhysicalParams::default();
        let fv = ReluNet::zeros(NetKind::Rotational, 2);
        let fw = ReluNet::zeros(NetKind::Rotational, 2);
        assert!(matches!(LearnedModel::new(p, fv, fw), Err(Error::ModelContractViolation(_))));
    }

    #[test]
    fn analytic_jacobian_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let fv = ReluNet::random(NetKind::Translational, 20, 0.4, &mut rng);
        let fw = ReluNet::random(NetKind::Rotational, 20, 0.4, &mut rng);
        let m = LearnedModel::new(PhysicalParams::default(), fv, fw).unwrap();
        let s = State {
            v: Vector3::new(0.3, -0.2, 0.1),
            zeta: Vector3::new(0.1, -0.05, 1.2),
            omega: Vector3::new(0.2, 0.1, -0.3),
            ..Default::default()
        };
        let u = RotorInput::new(0.3, Vector3::new(1e-3, -2e-3, 5e-4));
        let a = m.accel_jacobian(&s, &u).unwrap();
        let f = finite_difference_jacobian(&m, &s, &u, 1e-7).unwrap();
        assert!((a.wrt_state - f.wrt_state).abs().max() < 1e-6);
        assert!((a.wrt_input - f.wrt_input).abs().max() < 1e-4 * (1.0 + a.wrt_input.abs().max()));
    }
}
