use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::hover::micros;
use super::outer::{outer_feedback, LqrDesign};
use super::pd::{advance_setpoint, clamp_input, inner_pd, PdGains, Saturation};
use crate::config::Section;
use crate::dynamics::{integrate_rk4, Accel, AugmentedInput, DynamicsModel, RotorInput, State};
use crate::error::{Error, Result};
use crate::planner::{DesiredTrajectory, PlanResult};

/// How the open-loop part of the outer command is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlightMode {
    /// Planned reference and inputs from the learned model.
    NnModel,
    /// Desired trajectory as reference, hover thrust as the open-loop command.
    ModelFree,
}

impl FlightMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            FlightMode::NnModel => "nn_model",
            FlightMode::ModelFree => "model_free",
        }
    }
}

impl fmt::Display for FlightMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FlightMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nn_model" => Ok(FlightMode::NnModel),
            "model_free" => Ok(FlightMode::ModelFree),
            other => Err(Error::InvalidArgument(format!("unknown flight mode `{other}` (nn_model, model_free)"))),
        }
    }
}

/// Reference states and open-loop augmented commands, one per outer tick
/// (both of length N + 1).
#[derive(Debug, Clone, PartialEq)]
pub struct FlightReference {
    pub states: Vec<State>,
    pub inputs: Vec<AugmentedInput>,
    pub dt: f64,
}

impl FlightReference {
    /// Planned trajectory; each rotor input is mapped to the augmented
    /// command that reproduces it through the PD law at the planned state.
    pub fn from_plan(plan: &PlanResult, pd: &PdGains, dt: f64) -> Self {
        Self::planned(&plan.ref_states, &plan.ref_inputs, pd, dt)
    }

    /// As [`FlightReference::from_plan`] for bare state and input sequences
    /// (one fewer input than states).
    pub fn planned(states: &[State], inputs: &[RotorInput], pd: &PdGains, dt: f64) -> Self {
        let mut commands: Vec<AugmentedInput> = inputs.iter().zip(states).map(|(u, s)| pd.augment(s, u)).collect();
        let last = states.last().copied().unwrap_or_default();
        let tail = commands.last().copied().unwrap_or_default();
        commands.push(AugmentedInput {
            zeta_des: last.zeta,
            ..tail
        });
        FlightReference {
            states: states.to_vec(),
            inputs: commands,
            dt,
        }
    }

    /// Desired trajectory with hover thrust and the desired attitude and
    /// body rates as set-points.
    pub fn model_free(desired: &DesiredTrajectory, hover_thrust: f64) -> Self {
        FlightReference {
            states: desired.states.clone(),
            inputs: desired
                .states
                .iter()
                .map(|s| AugmentedInput {
                    thrust: hover_thrust,
                    zeta_des: s.zeta,
                    omega_des: s.omega,
                })
                .collect(),
            dt: desired.dt,
        }
    }

    /// Hover at a fixed point for `steps` outer ticks.
    pub fn hover(state: State, hover_thrust: f64, steps: usize, dt: f64) -> Self {
        FlightReference {
            states: vec![state; steps + 1],
            inputs: vec![AugmentedInput::hover(hover_thrust, state.yaw()); steps + 1],
            dt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    pub sensor: bool,
    pub sigma_pos: f64,
    /// Attitude measurement noise [rad].
    pub sigma_att: f64,
    pub actuation: bool,
    pub sigma_thrust: f64,
    pub sigma_torque: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            sensor: false,
            sigma_pos: 1e-3,
            sigma_att: 0.2f64.to_radians(),
            actuation: false,
            sigma_thrust: 3e-3,
            sigma_torque: 1e-4,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        let sigmas = [self.sigma_pos, self.sigma_att, self.sigma_thrust, self.sigma_torque];
        if sigmas.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument("noise sigmas must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn apply(&mut self, section: &Section) -> Result<()> {
        for e in &section.entries {
            match e.key.as_str() {
                "sensor" => self.sensor = e.bool()?,
                "sigma_pos" => self.sigma_pos = e.f64()?,
                "sigma_att_deg" => self.sigma_att = e.f64()?.to_radians(),
                "actuation" => self.actuation = e.bool()?,
                "sigma_thrust" => self.sigma_thrust = e.f64()?,
                "sigma_torque" => self.sigma_torque = e.f64()?,
                _ => return Err(e.unknown(&section.name)),
            }
        }
        self.validate().map_err(|err| Error::config(section.line, err.to_string()))
    }

    pub fn to_kv(&self) -> Vec<(&'static str, String)> {
        vec![
            ("sensor", self.sensor.to_string()),
            ("sigma_pos", self.sigma_pos.to_string()),
            ("sigma_att_deg", self.sigma_att.to_degrees().to_string()),
            ("actuation", self.actuation.to_string()),
            ("sigma_thrust", self.sigma_thrust.to_string()),
            ("sigma_torque", self.sigma_torque.to_string()),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FlightOptions {
    pub noise: NoiseConfig,
    pub seed: u64,
    /// Start here instead of at the first reference state.
    pub initial_state: Option<State>,
}

/// One row per outer tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub t: f64,
    /// True plant state.
    pub state: State,
    /// Augmented command issued at this tick.
    pub command: AugmentedInput,
    /// Rotor input held at this instant (PD output after clamping, before
    /// actuation noise).
    pub input: RotorInput,
    /// Plant acceleration under the input actually applied.
    pub accel: Accel,
    pub command_clamped: bool,
    pub saturation: Saturation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Crash {
    pub t: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlightLog {
    pub rows: Vec<LogRow>,
    pub crash: Option<Crash>,
}

const LOG_HEADER: &str = "t,x,y,z,vx,vy,vz,phi,theta,psi,wx,wy,wz,\
u1_hat,phi_des,theta_des,psi_des,wx_des,wy_des,wz_des,\
u1,u2,u3,u4,ax,ay,az,alpha_x,alpha_y,alpha_z,\
command_clamped,thrust_saturated,moment_saturated";

const LOG_COLUMNS: usize = 33;

impl FlightLog {
    /// A log that records only states, e.g. a trajectory file read back as a
    /// flight. Commands, inputs and accelerations are zero.
    pub fn from_states(states: &[State], dt: f64) -> Self {
        let rows = states
            .iter()
            .enumerate()
            .map(|(k, s)| LogRow {
                t: k as f64 * dt,
                state: *s,
                command: AugmentedInput::default(),
                input: RotorInput::default(),
                accel: Accel::default(),
                command_clamped: false,
                saturation: Saturation::default(),
            })
            .collect();
        FlightLog { rows, crash: None }
    }

    pub fn states(&self) -> Vec<State> {
        self.rows.iter().map(|r| r.state).collect()
    }

    /// Writes the log; a crash is recorded as a leading `# crash` comment.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        if let Some(c) = &self.crash {
            writeln!(w, "# crash t={} {}", c.t, c.reason)?;
        }
        writeln!(w, "{LOG_HEADER}")?;
        for r in &self.rows {
            let mut cols: Vec<String> = vec![r.t.to_string()];
            cols.extend(r.state.to_vector().iter().map(f64::to_string));
            cols.extend(r.command.to_vector().iter().map(f64::to_string));
            cols.extend(r.input.to_vector().iter().map(f64::to_string));
            cols.extend(r.accel.linear.iter().chain(r.accel.angular.iter()).map(f64::to_string));
            for flag in [r.command_clamped, r.saturation.thrust, r.saturation.moment] {
                cols.push(u8::from(flag).to_string());
            }
            writeln!(w, "{}", cols.join(","))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = BufReader::new(std::fs::File::open(path).map_err(|e| Error::unreadable(path, e))?);
        let mut rows = Vec::new();
        let mut crash = None;
        let mut header_seen = false;
        for (i, line) in file.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if let Some(rest) = line.strip_prefix("# crash t=") {
                let (t, reason) = rest.split_once(' ').unwrap_or((rest, ""));
                let t = t.parse().map_err(|_| Error::parse(path, format!("line {}: bad crash time", i + 1)))?;
                crash = Some(Crash {
                    t,
                    reason: reason.to_string(),
                });
                continue;
            }
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !header_seen {
                if line != LOG_HEADER {
                    return Err(Error::parse(path, format!("line {}: unexpected header", i + 1)));
                }
                header_seen = true;
                continue;
            }
            let v: Vec<f64> = line
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::parse(path, format!("line {}: non-numeric field", i + 1)))?;
            if v.len() != LOG_COLUMNS {
                return Err(Error::parse(path, format!("line {}: expected {LOG_COLUMNS} fields, got {}", i + 1, v.len())));
            }
            rows.push(LogRow {
                t: v[0],
                state: State::from_slice(&v[1..13])?,
                command: AugmentedInput::from_vector(&crate::dynamics::Vec7::from_column_slice(&v[13..20])),
                input: RotorInput::from_vector(&crate::dynamics::Vec4::from_column_slice(&v[20..24])),
                accel: Accel {
                    linear: Vector3::from_column_slice(&v[24..27]),
                    angular: Vector3::from_column_slice(&v[27..30]),
                },
                command_clamped: v[30] != 0.0,
                saturation: Saturation {
                    thrust: v[31] != 0.0,
                    moment: v[32] != 0.0,
                },
            });
        }
        if !header_seen {
            return Err(Error::parse(path, "missing header"));
        }
        Ok(FlightLog { rows, crash })
    }
}

/// Seeded noise sources; sensor and actuation noise use separate streams so
/// toggling one leaves the other's samples unchanged.
struct NoiseSource {
    cfg: NoiseConfig,
    sensor: ChaCha8Rng,
    actuation: ChaCha8Rng,
}

impl NoiseSource {
    fn new(cfg: NoiseConfig, seed: u64) -> Self {
        let mut sensor = ChaCha8Rng::seed_from_u64(seed);
        sensor.set_stream(1);
        let mut actuation = ChaCha8Rng::seed_from_u64(seed);
        actuation.set_stream(2);
        NoiseSource { cfg, sensor, actuation }
    }

    fn sample(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
        if sigma == 0.0 {
            return 0.0;
        }
        Normal::new(0.0, sigma).map(|n| n.sample(rng)).unwrap_or(0.0)
    }

    fn measure(&mut self, s: &State) -> State {
        if !self.cfg.sensor {
            return *s;
        }
        let mut m = *s;
        for i in 0..3 {
            m.p[i] += Self::sample(&mut self.sensor, self.cfg.sigma_pos);
        }
        for i in 0..3 {
            m.zeta[i] = crate::math::wrap_angle(m.zeta[i] + Self::sample(&mut self.sensor, self.cfg.sigma_att));
        }
        m
    }

    fn actuate(&mut self, u: &RotorInput, params: &crate::dynamics::PhysicalParams) -> RotorInput {
        if !self.cfg.actuation {
            return *u;
        }
        let thrust = u.thrust + Self::sample(&mut self.actuation, self.cfg.sigma_thrust);
        let moment = u.moment.map(|m| m + Self::sample(&mut self.actuation, self.cfg.sigma_torque));
        clamp_input(&RotorInput::new(thrust, moment), params).0
    }
}

/// Multi-rate closed-loop flight: the outer LQR law runs every `dt`, the PD
/// law every `pd.dt_inner`, and the plant is integrated between events on
/// an integer-microsecond schedule. Leaving the flight envelope ends the
/// flight and is recorded as a crash.
pub fn fly<M: DynamicsModel + ?Sized>(
    plant: &M,
    reference: &FlightReference,
    design: &LqrDesign,
    pd: &PdGains,
    options: &FlightOptions,
) -> Result<FlightLog> {
    let steps = reference.states.len().saturating_sub(1);
    if steps == 0 || reference.inputs.len() != reference.states.len() {
        return Err(Error::LengthMismatch {
            what: "flight reference inputs".into(),
            expected: reference.states.len(),
            got: reference.inputs.len(),
        });
    }
    let params = plant.params();
    let outer_us = micros(reference.dt);
    let inner_us = micros(pd.dt_inner);
    if outer_us == 0 || inner_us == 0 {
        return Err(Error::InvalidArgument("loop periods must be at least 1 us".into()));
    }
    let end_us = steps as u64 * outer_us;
    let mut noise = NoiseSource::new(options.noise, options.seed);

    let mut state = options.initial_state.unwrap_or(reference.states[0]);
    let mut command = reference.inputs[0];
    let mut command_clamped = false;
    let mut input = plant.hover_input();
    let mut applied = input;
    let mut saturation = Saturation::default();
    let (mut next_outer, mut next_inner, mut tick) = (0u64, 0u64, 0usize);
    let mut issued = 0u64;
    let mut t = 0u64;
    let mut rows = Vec::with_capacity(steps + 1);
    let mut crash = None;

    loop {
        let measured = noise.measure(&state);
        let outer_now = t == next_outer;
        if outer_now {
            (command, command_clamped) =
                outer_feedback(&reference.states[tick], &reference.inputs[tick], &measured, design, params);
            issued = t;
            next_outer += outer_us;
        }
        if t == next_inner {
            let held = advance_setpoint(&command, (t - issued) as f64 * 1e-6);
            (input, saturation) = inner_pd(&held, &measured, pd, params);
            applied = noise.actuate(&input, params);
            next_inner += inner_us;
        }
        if outer_now {
            rows.push(LogRow {
                t: tick as f64 * reference.dt,
                state,
                command,
                input,
                accel: plant.accel(&state, &applied)?,
                command_clamped,
                saturation,
            });
            tick += 1;
        }
        if t >= end_us {
            break;
        }
        let next = next_outer.min(next_inner).min(end_us);
        match integrate_rk4(plant, &state, &applied, (next - t) as f64 * 1e-6, params.substeps) {
            Ok(s) => state = s,
            Err(e @ (Error::EnvelopeViolation(_) | Error::SingularAttitude { .. })) => {
                crash = Some(Crash {
                    t: next as f64 * 1e-6,
                    reason: e.to_string(),
                });
                break;
            }
            Err(e) => return Err(e),
        }
        t = next;
    }
    Ok(FlightLog { rows, crash })
}
