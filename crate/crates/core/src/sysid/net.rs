use nalgebra::{DMatrix, DVector, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::NetKind;
use crate::error::{Error, Result};

/// Two-layer ReLU regressor `w^T max(0, W^T x + B) + b` on standardised
/// inputs, with outputs de-standardised by `out_mean + out_std * y`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluNet {
    pub kind: NetKind,
    pub in_mean: DVector<f64>,
    pub in_std: DVector<f64>,
    /// Hidden weights, `input_dim x hidden`.
    pub w_hidden: DMatrix<f64>,
    pub b_hidden: DVector<f64>,
    /// Output weights, `hidden x 3`.
    pub w_out: DMatrix<f64>,
    pub b_out: Vector3<f64>,
    pub out_mean: Vector3<f64>,
    pub out_std: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetOutput {
    pub normalized: Vector3<f64>,
    pub physical: Vector3<f64>,
}

impl ReluNet {
    /// Zero weights, identity normalisation.
    pub fn zeros(kind: NetKind, hidden: usize) -> Self {
        let d = kind.input_dim();
        ReluNet {
            kind,
            in_mean: DVector::zeros(d),
            in_std: DVector::from_element(d, 1.0),
            w_hidden: DMatrix::zeros(d, hidden),
            b_hidden: DVector::zeros(hidden),
            w_out: DMatrix::zeros(hidden, 3),
            b_out: Vector3::zeros(),
            out_mean: Vector3::zeros(),
            out_std: Vector3::repeat(1.0),
        }
    }

    /// All weights and biases drawn from N(0, init_std^2).
    pub fn random<R: Rng + ?Sized>(kind: NetKind, hidden: usize, init_std: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, init_std).expect("init_std must be positive and finite");
        let mut net = Self::zeros(kind, hidden);
        net.w_hidden.iter_mut().for_each(|x| *x = normal.sample(rng));
        net.b_hidden.iter_mut().for_each(|x| *x = normal.sample(rng));
        net.w_out.iter_mut().for_each(|x| *x = normal.sample(rng));
        net.b_out.iter_mut().for_each(|x| *x = normal.sample(rng));
        net
    }

    pub fn input_dim(&self) -> usize {
        self.w_hidden.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.w_hidden.ncols()
    }

    /// Checks dimensions, finiteness and strictly positive scales.
    pub fn validate(&self) -> Result<()> {
        let d = self.kind.input_dim();
        let n = self.hidden();
        let dims = [
            ("in_mean", self.in_mean.len(), d),
            ("in_std", self.in_std.len(), d),
            ("W", self.w_hidden.nrows(), d),
            ("B", self.b_hidden.len(), n),
            ("w", self.w_out.nrows(), n),
            ("w", self.w_out.ncols(), 3),
        ];
        for (field, got, expected) in dims {
            if got != expected {
                return Err(Error::ModelContractViolation(format!(
                    "{} net field {field}: dimension {got}, expected {expected}",
                    self.kind
                )));
            }
        }
        let finite = self
            .in_mean
            .iter()
            .chain(self.in_std.iter())
            .chain(self.w_hidden.iter())
            .chain(self.b_hidden.iter())
            .chain(self.w_out.iter())
            .chain(self.b_out.iter())
            .chain(self.out_mean.iter())
            .chain(self.out_std.iter())
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::ModelContractViolation(format!("{} net has non-finite entries", self.kind)));
        }
        if self.out_std.iter().chain(self.in_std.iter()).any(|&x| x <= 0.0) {
            return Err(Error::ModelContractViolation(format!(
                "{} net has a non-positive normalisation scale",
                self.kind
            )));
        }
        Ok(())
    }

    fn check_len(&self, beta: &[f64]) -> Result<()> {
        if beta.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: beta.len(),
            });
        }
        Ok(())
    }

    fn pre_activation(&self, beta: &[f64]) -> DVector<f64> {
        let x = DVector::from_iterator(
            beta.len(),
            beta.iter()
                .zip(self.in_mean.iter().zip(self.in_std.iter()))
                .map(|(b, (m, s))| (b - m) / s),
        );
        self.w_hidden.tr_mul(&x) + &self.b_hidden
    }

    pub fn forward(&self, beta: &[f64]) -> Result<NetOutput> {
        self.check_len(beta)?;
        let h = self.pre_activation(beta).map(|z| z.max(0.0));
        let y = self.w_out.tr_mul(&h);
        let normalized = Vector3::new(y[0], y[1], y[2]) + self.b_out;
        Ok(NetOutput {
            normalized,
            physical: self.out_mean + self.out_std.component_mul(&normalized),
        })
    }

    /// Exact Jacobian of the physical output w.r.t. the raw input; at a kink
    /// the unit is treated as inactive.
    pub fn jacobian(&self, beta: &[f64]) -> Result<DMatrix<f64>> {
        self.check_len(beta)?;
        let z = self.pre_activation(beta);
        let d = self.input_dim();
        let mut j = DMatrix::zeros(3, d);
        for (k, zk) in z.iter().enumerate() {
            if *zk > 0.0 {
                for o in 0..3 {
                    let wo = self.w_out[(k, o)];
                    if wo == 0.0 {
                        continue;
                    }
                    for i in 0..d {
                        j[(o, i)] += wo * self.w_hidden[(i, k)];
                    }
                }
            }
        }
        for o in 0..3 {
            for i in 0..d {
                j[(o, i)] *= self.out_std[o] / self.in_std[i];
            }
        }
        Ok(j)
    }

    /// Hidden pre-activations on raw inputs (kink diagnostics, tests).
    pub fn pre_activations(&self, beta: &[f64]) -> Result<DVector<f64>> {
        self.check_len(beta)?;
        Ok(self.pre_activation(beta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_return_bias() {
        let mut net = ReluNet::zeros(NetKind::Translational, 4);
        net.b_out = Vector3::new(1.0, 2.0, 3.0);
        let out = net.forward(&[0.3; 13]).unwrap();
        assert_eq!(out.normalized, Vector3::new(1.0, 2.0, 3.0));
        net.out_mean = Vector3::new(0.5, 0.0, -1.0);
        net.out_std = Vector3::new(2.0, 3.0, 4.0);
        let out = net.forward(&[0.3; 13]).unwrap();
        assert_eq!(out.physical, Vector3::new(2.5, 6.0, 11.0));
    }

    #[test]
    fn single_hinge() {
        let mut net = ReluNet::zeros(NetKind::Translational, 1);
        net.w_hidden[(0, 0)] = 1.0;
        net.b_hidden[0] = -1.0;
        net.w_out[(0, 0)] = 1.0;
        let mut beta = [0.0; 13];
        beta[0] = 0.5;
        assert_eq!(net.forward(&beta).unwrap().normalized, Vector3::zeros());
        beta[0] = 2.0;
        assert_eq!(net.forward(&beta).unwrap().normalized, Vector3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn dimension_mismatch() {
        let net = ReluNet::zeros(NetKind::Rotational, 3);
        assert!(matches!(net.forward(&[0.0; 13]), Err(Error::DimensionMismatch { expected: 15, got: 13 })));
        assert!(net.jacobian(&[0.0; 2]).is_err());
    }

    #[test]
    fn jacobian_in_saturated_regions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = ReluNet::random(NetKind::Translational, 6, 0.5, &mut rng);
        net.out_std = Vector3::new(2.0, 0.5, 3.0);
        net.b_hidden.fill(-100.0);
        assert_eq!(net.jacobian(&[0.1; 13]).unwrap(), DMatrix::zeros(3, 13));
        net.b_hidden.fill(100.0);
        let j = net.jacobian(&[0.1; 13]).unwrap();
        let affine = DMatrix::from_diagonal(&DVector::from_column_slice(net.out_std.as_slice()))
            * net.w_out.transpose()
            * net.w_hidden.transpose();
        assert!((j - affine).abs().max() < 1e-12);
    }

    #[test]
    fn validate_catches_bad_scale() {
        let mut net = ReluNet::zeros(NetKind::Translational, 2);
        assert!(net.validate().is_ok());
        net.out_std[1] = 0.0;
        assert!(net.validate().is_err());
    }
}
