//! Feasible reference computation: the trajectory closest to a desired one
//! that satisfies the discrete dynamics of a [`DynamicsModel`], found by
//! sequential convex programming with a trust region and an escalating
//! exact penalty on dynamics defects.
//!
//! [`DynamicsModel`]: crate::dynamics::DynamicsModel

mod linearize;
mod scp;
mod subproblem;

pub use linearize::{linearize_dynamics, Linearization};
pub use scp::{plan, rollout_defect, trajectory_defects};
pub use subproblem::{model_merit, solve_subproblem, Step, SubproblemData};

use crate::config::Section;
use crate::dynamics::{RotorInput, State, Vec12, Vec4};
use crate::error::{Error, Result};

/// Desired states `s_d(0..=N)` sampled every `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesiredTrajectory {
    pub states: Vec<State>,
    pub dt: f64,
}

impl DesiredTrajectory {
    pub fn new(states: Vec<State>, dt: f64) -> Result<Self> {
        let traj = DesiredTrajectory { states, dt };
        traj.validate()?;
        Ok(traj)
    }

    pub fn validate(&self) -> Result<()> {
        if self.states.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "desired trajectory needs at least 2 states, got {}",
                self.states.len()
            )));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if let Some(n) = self.states.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument(format!("desired state {n} is not finite")));
        }
        Ok(())
    }

    /// Number of steps `N`.
    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.states.len()).map(|n| n as f64 * self.dt).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub ref_states: Vec<State>,
    pub ref_inputs: Vec<RotorInput>,
    /// Tracking objective of `ref_states` against the desired trajectory.
    pub objective: f64,
    /// Worst defect `|s(n+1) - step(s(n), u(n))|_inf`.
    pub max_violation: f64,
    /// Subproblems solved across all penalty rounds.
    pub iterations: usize,
    pub converged: bool,
    pub penalty_rounds: usize,
    pub final_penalty: f64,
    /// True merit after every accepted step, with the penalty it was taken at.
    pub merit_trace: Vec<(f64, f64)>,
    /// `max_violation` at the end of each penalty round.
    pub round_violations: Vec<f64>,
}

impl PlanResult {
    pub fn to_kv(&self) -> Vec<(&'static str, String)> {
        vec![
            ("horizon", self.ref_inputs.len().to_string()),
            ("objective", self.objective.to_string()),
            ("max_violation", self.max_violation.to_string()),
            ("iterations", self.iterations.to_string()),
            ("converged", self.converged.to_string()),
            ("penalty_rounds", self.penalty_rounds.to_string()),
            ("final_penalty", self.final_penalty.to_string()),
        ]
    }
}

/// Per-component trust radii; the SCP loop scales them up and down.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustRegion {
    pub state: Vec12,
    pub input: Vec4,
}

impl TrustRegion {
    pub fn scaled(&self, k: f64) -> Self {
        TrustRegion {
            state: self.state * k,
            input: self.input * k,
        }
    }
}

/// Inner solver settings for the barrier method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpConfig {
    pub barrier_init: f64,
    pub barrier_mult: f64,
    /// Final barrier weight; tracking terms are resolved to about `1 / barrier_final`.
    pub barrier_final: f64,
    /// Stop centering when half the squared Newton decrement drops below this.
    pub newton_tol: f64,
    pub max_newton_iters: usize,
}

impl Default for QpConfig {
    fn default() -> Self {
        QpConfig {
            barrier_init: 1.0,
            barrier_mult: 10.0,
            barrier_final: 1e6,
            newton_tol: 1e-9,
            max_newton_iters: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScpConfig {
    pub feas_tol: f64,
    pub penalty_init: f64,
    pub penalty_mult: f64,
    pub max_penalty_rounds: usize,
    /// Base radii for position, velocity, attitude and body-rate components.
    pub trust_position: f64,
    pub trust_velocity: f64,
    pub trust_attitude: f64,
    pub trust_rate: f64,
    pub trust_thrust: f64,
    pub trust_torque: f64,
    pub trust_expand: f64,
    pub trust_shrink: f64,
    /// Bounds on the multiplier applied to the base radii.
    pub trust_max_scale: f64,
    pub trust_min_scale: f64,
    pub improvement_accept_ratio: f64,
    pub max_inner_iters: usize,
    /// Use `sum |s - s_d|^2` instead of `sum |s - s_d|`.
    pub squared_tracking: bool,
    pub qp: QpConfig,
}

impl Default for ScpConfig {
    fn default() -> Self {
        ScpConfig {
            feas_tol: 1e-4,
            penalty_init: 10.0,
            penalty_mult: 10.0,
            max_penalty_rounds: 5,
            trust_position: 0.2,
            trust_velocity: 0.5,
            trust_attitude: 0.2,
            trust_rate: 1.0,
            trust_thrust: 0.1,
            trust_torque: 2e-3,
            trust_expand: 1.5,
            trust_shrink: 0.5,
            trust_max_scale: 10.0,
            trust_min_scale: 1e-4,
            improvement_accept_ratio: 0.25,
            max_inner_iters: 50,
            squared_tracking: false,
            qp: QpConfig::default(),
        }
    }
}

impl ScpConfig {
    pub fn base_trust(&self) -> TrustRegion {
        let mut state = Vec12::zeros();
        for i in 0..3 {
            state[i] = self.trust_position;
            state[3 + i] = self.trust_velocity;
            state[6 + i] = self.trust_attitude;
            state[9 + i] = self.trust_rate;
        }
        TrustRegion {
            state,
            input: Vec4::new(self.trust_thrust, self.trust_torque, self.trust_torque, self.trust_torque),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("feas_tol", self.feas_tol),
            ("penalty_init", self.penalty_init),
            ("trust_position", self.trust_position),
            ("trust_velocity", self.trust_velocity),
            ("trust_attitude", self.trust_attitude),
            ("trust_rate", self.trust_rate),
            ("trust_thrust", self.trust_thrust),
            ("trust_torque", self.trust_torque),
            ("trust_min_scale", self.trust_min_scale),
            ("improvement_accept_ratio", self.improvement_accept_ratio),
            ("barrier_init", self.qp.barrier_init),
            ("newton_tol", self.qp.newton_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.penalty_mult >= 1.0) {
            return Err(Error::InvalidArgument("penalty_mult must be >= 1".into()));
        }
        if !(self.trust_shrink > 0.0 && self.trust_shrink < 1.0 && self.trust_expand > 1.0) {
            return Err(Error::InvalidArgument("need 0 < trust_shrink < 1 < trust_expand".into()));
        }
        if !(self.trust_max_scale >= 1.0) {
            return Err(Error::InvalidArgument("trust_max_scale must be >= 1".into()));
        }
        if !(self.qp.barrier_mult > 1.0 && self.qp.barrier_final >= self.qp.barrier_init) {
            return Err(Error::InvalidArgument("need barrier_mult > 1 and barrier_final >= barrier_init".into()));
        }
        if self.max_penalty_rounds == 0 || self.max_inner_iters == 0 || self.qp.max_newton_iters == 0 {
            return Err(Error::InvalidArgument("iteration limits must be >= 1".into()));
        }
        Ok(())
    }

    pub fn apply(&mut self, section: &Section) -> Result<()> {
        for e in &section.entries {
            match e.key.as_str() {
                "feas_tol" => self.feas_tol = e.f64()?,
                "penalty_init" => self.penalty_init = e.f64()?,
                "penalty_mult" => self.penalty_mult = e.f64()?,
                "max_penalty_rounds" => self.max_penalty_rounds = e.parse()?,
                "trust_position" => self.trust_position = e.f64()?,
                "trust_velocity" => self.trust_velocity = e.f64()?,
                "trust_attitude" => self.trust_attitude = e.f64()?,
                "trust_rate" => self.trust_rate = e.f64()?,
                "trust_thrust" => self.trust_thrust = e.f64()?,
                "trust_torque" => self.trust_torque = e.f64()?,
                "trust_expand" => self.trust_expand = e.f64()?,
                "trust_shrink" => self.trust_shrink = e.f64()?,
                "trust_max_scale" => self.trust_max_scale = e.f64()?,
                "trust_min_scale" => self.trust_min_scale = e.f64()?,
                "improvement_accept_ratio" => self.improvement_accept_ratio = e.f64()?,
                "max_inner_iters" => self.max_inner_iters = e.parse()?,
                "squared_tracking" => self.squared_tracking = e.bool()?,
                "barrier_init" => self.qp.barrier_init = e.f64()?,
                "barrier_mult" => self.qp.barrier_mult = e.f64()?,
                "barrier_final" => self.qp.barrier_final = e.f64()?,
                "newton_tol" => self.qp.newton_tol = e.f64()?,
                "max_newton_iters" => self.qp.max_newton_iters = e.parse()?,
                _ => return Err(e.unknown(&section.name)),
            }
        }
        self.validate().map_err(|err| Error::config(section.line, err.to_string()))
    }
}
