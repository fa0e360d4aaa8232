use nalgebra::Vector3;

use crate::config::Section;
use crate::error::{Error, Result};

/// Vehicle and actuator constants. Defaults are Crazyflie-scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    pub mass: f64,
    pub inertia: Vector3<f64>,
    pub g: f64,
    pub u1_max: f64,
    pub torque_max: f64,
    /// Control / planning step.
    pub dt: f64,
    /// RK4 sub-intervals used by the ground-truth plant per integration call.
    pub substeps: usize,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        PhysicalParams {
            mass: 0.032,
            inertia: Vector3::new(1.6e-5, 1.6e-5, 2.9e-5),
            g: 9.81,
            u1_max: 0.6,
            torque_max: 5e-3,
            dt: 0.01,
            substeps: 4,
        }
    }
}

impl PhysicalParams {
    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.g
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.mass > 0.0
            && self.inertia.iter().all(|&i| i > 0.0)
            && self.dt > 0.0
            && self.u1_max > 0.0
            && self.torque_max > 0.0
            && self.substeps >= 1
            && self.g.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid physical parameters: {self:?}")))
        }
    }

    /// Overrides fields from `key = value` entries
    /// (mass, ixx, iyy, izz, g, u1_max, torque_max, dt, substeps).
    pub fn apply(&mut self, section: &Section) -> Result<()> {
        for e in &section.entries {
            match e.key.as_str() {
                "mass" => self.mass = e.f64()?,
                "ixx" => self.inertia.x = e.f64()?,
                "iyy" => self.inertia.y = e.f64()?,
                "izz" => self.inertia.z = e.f64()?,
                "g" => self.g = e.f64()?,
                "u1_max" => self.u1_max = e.f64()?,
                "torque_max" => self.torque_max = e.f64()?,
                "dt" => self.dt = e.f64()?,
                "substeps" => self.substeps = e.parse()?,
                _ => return Err(e.unknown(&section.name)),
            }
        }
        self.validate()
            .map_err(|err| Error::config(section.line, err.to_string()))
    }

    pub fn to_kv(&self) -> Vec<(&'static str, String)> {
        vec![
            ("mass", self.mass.to_string()),
            ("ixx", self.inertia.x.to_string()),
            ("iyy", self.inertia.y.to_string()),
            ("izz", self.inertia.z.to_string()),
            ("g", self.g.to_string()),
            ("u1_max", self.u1_max.to_string()),
            ("torque_max", self.torque_max.to_string()),
            ("dt", self.dt.to_string()),
            ("substeps", self.substeps.to_string()),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ConfigFile;

    #[test]
    fn flat_file_overrides_defaults() {
        let cfg = ConfigFile::parse("mass = 0.05\nizz = 4e-5\nsubsteps = 8\n").unwrap();
        let mut p = PhysicalParams::default();
        p.apply(cfg.section("").unwrap()).unwrap();
        assert_eq!(p.mass, 0.05);
        assert_eq!(p.inertia.z, 4e-5);
        assert_eq!(p.substeps, 8);
        assert_eq!(p.g, 9.81);
    }

    #[test]
    fn rejects_unknown_and_nonpositive() {
        let mut p = PhysicalParams::default();
        let cfg = ConfigFile::parse("masss = 1\n").unwrap();
        assert!(p.apply(cfg.section("").unwrap()).unwrap_err().to_string().contains("masss"));
        let cfg = ConfigFile::parse("mass = -1\n").unwrap();
        assert!(p.apply(cfg.section("").unwrap()).is_err());
    }
}
