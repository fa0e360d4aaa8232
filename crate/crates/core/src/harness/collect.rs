use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use super::maneuver::{generate_maneuver, maneuver_reference, ExcitationLevels, ManeuverSpec};
use crate::control::{fly, inner_pd, FlightLog, FlightOptions, LqrDesign, LqrWeights, NoiseConfig, PdGains};
use crate::dynamics::{AugmentedInput, DynamicsModel, GroundTruth, PhysicalParams, RotorInput, State};
use crate::error::{Error, Result};
use crate::sysid::{featurize, Dataset, NetKind, SplitFractions};

/// Everything needed to fly the ground-truth plant in closed loop.
#[derive(Debug, Clone)]
pub struct ControlSetup {
    pub params: PhysicalParams,
    pub pd: PdGains,
    pub design: LqrDesign,
    pub noise: NoiseConfig,
    pub excitation: ExcitationLevels,
}

impl ControlSetup {
    pub fn new(params: PhysicalParams, pd: PdGains, weights: &LqrWeights, noise: NoiseConfig) -> Result<Self> {
        params.validate()?;
        let design = LqrDesign::synthesize(&GroundTruth::new(params), &pd, weights)?;
        Ok(ControlSetup {
            params,
            pd,
            design,
            noise,
            excitation: ExcitationLevels::default(),
        })
    }
}

/// A training flight together with the maneuver that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ManeuverLog {
    pub spec: ManeuverSpec,
    pub seed: u64,
    pub log: FlightLog,
}

/// Noise seed of the `index`-th flight of a run.
pub fn flight_seed(master: u64, index: usize) -> u64 {
    master
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add((index as u64 + 1).wrapping_mul(0xbf58_476d_1ce4_e5b9))
}

/// Flies every maneuver against the ground-truth plant with feedback on
/// the desired trajectory. A crash ends that flight only; its partial log
/// is kept and carries the crash record.
pub fn collect(specs: &[ManeuverSpec], setup: &ControlSetup, seed: u64) -> Result<Vec<ManeuverLog>> {
    if specs.is_empty() {
        return Err(Error::InvalidArgument("no maneuvers".into()));
    }
    let plant = GroundTruth::new(setup.params);
    specs
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let desired = generate_maneuver(spec, setup.params.dt)?;
            let reference = maneuver_reference(spec, &desired, setup.params.hover_thrust(), &setup.excitation);
            let options = FlightOptions {
                noise: setup.noise,
                seed: flight_seed(seed, i),
                initial_state: None,
            };
            let log = fly(&plant, &reference, &setup.design, &setup.pd, &options)?;
            Ok(ManeuverLog {
                spec: *spec,
                seed: options.seed,
                log,
            })
        })
        .collect()
}

pub fn total_rows(logs: &[ManeuverLog]) -> usize {
    logs.iter().map(|l| l.log.rows.len()).sum()
}

pub const AUDIT_SPEED: f64 = 0.05;
pub const AUDIT_YAW_RATE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditViolation {
    pub maneuver: usize,
    pub t: f64,
    pub speed: f64,
    pub yaw_rate: f64,
}

/// Scan for samples that combine translation with yaw rotation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CoverageAudit {
    pub rows: usize,
    pub violations: usize,
    /// Violation with the largest `min(speed / AUDIT_SPEED, |yaw rate| / AUDIT_YAW_RATE)`.
    pub worst: Option<AuditViolation>,
    /// Largest such ratio over all rows; below 1 means the audit passes.
    pub worst_ratio: f64,
}

impl CoverageAudit {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    pub fn to_kv(&self) -> Vec<(&'static str, String)> {
        vec![
            ("audit_rows", self.rows.to_string()),
            ("audit_violations", self.violations.to_string()),
            ("audit_worst_ratio", self.worst_ratio.to_string()),
        ]
    }
}

pub fn coverage_audit(logs: &[ManeuverLog]) -> CoverageAudit {
    let mut audit = CoverageAudit::default();
    for (i, l) in logs.iter().enumerate() {
        for row in &l.log.rows {
            let speed = row.state.v.norm();
            let yaw_rate = row.state.omega.z.abs();
            let ratio = (speed / AUDIT_SPEED).min(yaw_rate / AUDIT_YAW_RATE);
            audit.rows += 1;
            if !(speed < AUDIT_SPEED || yaw_rate < AUDIT_YAW_RATE) {
                audit.violations += 1;
                if ratio > audit.worst_ratio || audit.worst.is_none() {
                    audit.worst = Some(AuditViolation {
                        maneuver: i,
                        t: row.t,
                        speed,
                        yaw_rate,
                    });
                }
            }
            audit.worst_ratio = audit.worst_ratio.max(ratio);
        }
    }
    audit
}

/// Where regression targets come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TargetSource {
    /// Accelerations recorded by the simulator under the input actually
    /// applied, which lags the logged command at ticks between inner updates.
    #[default]
    Logged,
    /// Ground-truth accelerations at the logged state under the derived
    /// input, so features and label describe the same instant.
    TrueDynamics,
    /// Forward differences of logged velocities and body rates; the last
    /// row of each log is dropped.
    FiniteDifference,
}

impl FromStr for TargetSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "true_dynamics" => Ok(TargetSource::TrueDynamics),
            "logged" => Ok(TargetSource::Logged),
            "finite_difference" => Ok(TargetSource::FiniteDifference),
            other => Err(Error::InvalidArgument(format!(
                "unknown target source `{other}` (logged | true_dynamics | finite_difference)"
            ))),
        }
    }
}

impl fmt::Display for TargetSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TargetSource::TrueDynamics => "true_dynamics",
            TargetSource::Logged => "logged",
            TargetSource::FiniteDifference => "finite_difference",
        })
    }
}

/// Rotor input the PD law produces from the logged command at the logged
/// state.
pub fn derived_input(state: &State, command: &AugmentedInput, pd: &PdGains, params: &PhysicalParams) -> RotorInput {
    inner_pd(command, state, pd, params).0
}

/// Translational and rotational datasets over all log rows with one
/// shared seeded split.
pub fn build_dataset(
    logs: &[ManeuverLog],
    pd: &PdGains,
    params: &PhysicalParams,
    fractions: &SplitFractions,
    seed: u64,
    targets: TargetSource,
) -> Result<(Dataset, Dataset)> {
    let mut fv_rows = Vec::new();
    let mut fw_rows = Vec::new();
    let mut lin = Vec::new();
    let mut ang = Vec::new();
    let plant = GroundTruth::new(*params);
    for l in logs {
        let rows = &l.log.rows;
        let usable = match targets {
            TargetSource::TrueDynamics | TargetSource::Logged => rows.len(),
            TargetSource::FiniteDifference => rows.len().saturating_sub(1),
        };
        for k in 0..usable {
            let row = &rows[k];
            let u = derived_input(&row.state, &row.command, pd, params);
            fv_rows.extend(featurize(&row.state, &u, NetKind::Translational));
            fw_rows.extend(featurize(&row.state, &u, NetKind::Rotational));
            let (a, w) = match targets {
                TargetSource::TrueDynamics => {
                    let a = plant.accel(&row.state, &u)?;
                    (a.linear, a.angular)
                }
                TargetSource::Logged => (row.accel.linear, row.accel.angular),
                TargetSource::FiniteDifference => {
                    let next = &rows[k + 1];
                    let h = next.t - row.t;
                    ((next.state.v - row.state.v) / h, (next.state.omega - row.state.omega) / h)
                }
            };
            lin.extend(a.iter());
            ang.extend(w.iter());
        }
    }
    let n = lin.len() / 3;
    if n == 0 {
        return Err(Error::DegenerateData("flight logs contain no usable rows".into()));
    }
    let split = fractions.assign(n, seed)?;
    let fv = Dataset::new(
        NetKind::Translational,
        DMatrix::from_row_slice(n, NetKind::Translational.input_dim(), &fv_rows),
        DMatrix::from_row_slice(n, 3, &lin),
        split.clone(),
    )?;
    let fw = Dataset::new(
        NetKind::Rotational,
        DMatrix::from_row_slice(n, NetKind::Rotational.input_dim(), &fw_rows),
        DMatrix::from_row_slice(n, 3, &ang),
        split,
    )?;
    Ok((fv, fw))
}
