use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::dynamics::{RotorInput, State};
use crate::error::{Error, Result};

/// Which acceleration block a network predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NetKind {
    /// f_v from (v, omega, sin zeta, cos zeta, u1).
    Translational,
    /// f_omega from (v, omega, sin zeta, cos zeta, u2, u3, u4).
    Rotational,
}

const SHARED: [&str; 12] = [
    "vx", "vy", "vz", "wx", "wy", "wz", "sin_phi", "sin_theta", "sin_psi", "cos_phi", "cos_theta", "cos_psi",
];

impl NetKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NetKind::Translational => "translational",
            NetKind::Rotational => "rotational",
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            NetKind::Translational => 13,
            NetKind::Rotational => 15,
        }
    }

    /// Ordered feature column names. Position never appears.
    pub fn layout(&self) -> Vec<&'static str> {
        let mut cols = SHARED.to_vec();
        match self {
            NetKind::Translational => cols.push("u1"),
            NetKind::Rotational => cols.extend(["u2", "u3", "u4"]),
        }
        cols
    }

    pub fn target_names(&self) -> [&'static str; 3] {
        match self {
            NetKind::Translational => ["ax", "ay", "az"],
            NetKind::Rotational => ["alpha_x", "alpha_y", "alpha_z"],
        }
    }
}

impl fmt::Display for NetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "translational" => Ok(NetKind::Translational),
            "rotational" => Ok(NetKind::Rotational),
            other => Err(Error::InvalidArgument(format!("unknown network kind `{other}`"))),
        }
    }
}

/// Network input vector for `(s, u)`.
pub fn featurize(s: &State, u: &RotorInput, kind: NetKind) -> Vec<f64> {
    let mut beta = Vec::with_capacity(kind.input_dim());
    beta.extend(s.v.iter());
    beta.extend(s.omega.iter());
    beta.extend(s.zeta.iter().map(|a| a.sin()));
    beta.extend(s.zeta.iter().map(|a| a.cos()));
    match kind {
        NetKind::Translational => beta.push(u.thrust),
        NetKind::Rotational => beta.extend(u.moment.iter()),
    }
    beta
}

/// d(features)/d(state) and d(features)/d(input).
pub fn feature_jacobian(s: &State, kind: NetKind) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = kind.input_dim();
    let mut js = DMatrix::zeros(d, 12);
    for i in 0..3 {
        js[(i, 3 + i)] = 1.0;
        js[(3 + i, 9 + i)] = 1.0;
        js[(6 + i, 6 + i)] = s.zeta[i].cos();
        js[(9 + i, 6 + i)] = -s.zeta[i].sin();
    }
    let mut ju = DMatrix::zeros(d, 4);
    match kind {
        NetKind::Translational => ju[(12, 0)] = 1.0,
        NetKind::Rotational => {
            for i in 0..3 {
                ju[(12 + i, 1 + i)] = 1.0;
            }
        }
    }
    (js, ju)
}
