use super::linearize::{linearize_dynamics, Linearization};
use super::subproblem::{solve_subproblem, tracking_norm, Step, SubproblemData};
use super::{DesiredTrajectory, PlanResult, ScpConfig, TrustRegion};
use crate::dynamics::{euler_step, DynamicsModel, RotorInput, State, Vec12, Vec4};
use crate::error::{Error, Result};

/// Predicted improvements below this fraction of the merit count as a stall.
const STALL_REL: f64 = 1e-5;

/// Largest step component relative to its base trust radius.
fn step_scale(step: &Step, base: &TrustRegion) -> f64 {
    let s = step.ds.iter().map(|d| d.component_div(&base.state).amax()).fold(0.0, f64::max);
    let u = step.du.iter().map(|d| d.component_div(&base.input).amax()).fold(0.0, f64::max);
    s.max(u)
}

/// `wrap(s(n+1) - step(s(n), u(n)))` for every step.
pub fn trajectory_defects<M: DynamicsModel + ?Sized>(
    model: &M,
    states: &[State],
    inputs: &[RotorInput],
) -> Result<Vec<Vec12>> {
    if states.len() != inputs.len() + 1 {
        return Err(Error::LengthMismatch {
            what: "states vs inputs + 1".into(),
            expected: inputs.len() + 1,
            got: states.len(),
        });
    }
    inputs
        .iter()
        .enumerate()
        .map(|(n, u)| {
            let next = euler_step(model, &states[n], u, model.dt())?;
            Ok(states[n + 1].error_from(&next))
        })
        .collect()
}

/// Rolls `inputs` through the Euler map from `states[0]` and returns the
/// largest wrapped deviation from `states`.
pub fn rollout_defect<M: DynamicsModel + ?Sized>(model: &M, states: &[State], inputs: &[RotorInput]) -> Result<f64> {
    let mut s = states[0];
    let mut worst: f64 = 0.0;
    for (n, u) in inputs.iter().enumerate() {
        s = euler_step(model, &s, u, model.dt())?;
        worst = worst.max(s.error_from(&states[n + 1]).amax());
    }
    Ok(worst)
}

struct Iterate {
    states: Vec<State>,
    inputs: Vec<RotorInput>,
    tracking: Vec<Vec12>,
    defects: Vec<Vec12>,
}

impl Iterate {
    fn new<M: DynamicsModel + ?Sized>(
        model: &M,
        desired: &[State],
        states: Vec<State>,
        inputs: Vec<RotorInput>,
    ) -> Result<Self> {
        let defects = trajectory_defects(model, &states, &inputs)?;
        let tracking = states.iter().zip(desired).map(|(s, d)| s.error_from(d)).collect();
        Ok(Iterate {
            states,
            inputs,
            tracking,
            defects,
        })
    }

    fn objective(&self, squared: bool) -> f64 {
        self.tracking.iter().map(|r| tracking_norm(r, squared)).sum()
    }

    fn merit(&self, penalty: f64, squared: bool) -> f64 {
        self.objective(squared) + penalty * self.defects.iter().map(|d| d.lp_norm(1)).sum::<f64>()
    }

    fn max_violation(&self) -> f64 {
        self.defects.iter().map(|d| d.amax()).fold(0.0, f64::max)
    }

    fn linearize<M: DynamicsModel + ?Sized>(&self, model: &M) -> Result<Vec<Linearization>> {
        self.inputs
            .iter()
            .zip(&self.states)
            .map(|(u, s)| linearize_dynamics(model, s, u))
            .collect()
    }
}

pub fn plan<M: DynamicsModel + ?Sized>(model: &M, desired: &DesiredTrajectory, cfg: &ScpConfig) -> Result<PlanResult> {
    desired.validate()?;
    cfg.validate()?;
    if (model.dt() - desired.dt).abs() > 1e-12 * desired.dt {
        return Err(Error::InvalidArgument(format!(
            "desired dt {} differs from model dt {}",
            desired.dt,
            model.dt()
        )));
    }
    let squared = cfg.squared_tracking;
    let horizon = desired.horizon();
    let mut it = Iterate::new(
        model,
        &desired.states,
        desired.states.clone(),
        vec![model.hover_input(); horizon],
    )?;
    let mut lin = it.linearize(model)?;
    let base = cfg.base_trust();

    let mut scale: f64 = 1.0;
    let mut penalty = cfg.penalty_init;
    let mut iterations = 0;
    let mut converged = false;
    let mut merit_trace = Vec::new();
    let mut round_violations = Vec::new();
    let mut best: Option<(f64, Vec<State>, Vec<RotorInput>)> = None;

    for _ in 0..cfg.max_penalty_rounds {
        scale = scale.max(1.0);
        let mut stalled = false;
        let mut accepted = false;
        for _ in 0..cfg.max_inner_iters {
            if scale < cfg.trust_min_scale {
                stalled = true;
                break;
            }
            let merit = it.merit(penalty, squared);
            let inputs: Vec<Vec4> = it.inputs.iter().map(RotorInput::to_vector).collect();
            let data = SubproblemData {
                lin: &lin,
                tracking: &it.tracking,
                defects: &it.defects,
                inputs: &inputs,
                penalty,
                squared_tracking: squared,
            };
            let step = solve_subproblem(&data, &base.scaled(scale), model.params(), &cfg.qp)?;
            iterations += 1;
            let predicted = merit - step.model_merit;
            if predicted <= STALL_REL * (1.0 + merit) {
                stalled = true;
                break;
            }
            let states = it
                .states
                .iter()
                .zip(&step.ds)
                .map(|(s, d)| State::from_vector(&(s.to_vector() + d)))
                .collect();
            let inputs = inputs.iter().zip(&step.du).map(|(u, d)| RotorInput::from_vector(&(u + d))).collect();
            // A candidate that leaves the model's domain is treated as a rejection.
            let candidate = Iterate::new(model, &desired.states, states, inputs).ok();
            match candidate {
                Some(c) if merit - c.merit(penalty, squared) >= cfg.improvement_accept_ratio * predicted => {
                    it = c;
                    accepted = true;
                    lin = it.linearize(model)?;
                    scale = (scale * cfg.trust_expand).min(cfg.trust_max_scale);
                    merit_trace.push((penalty, it.merit(penalty, squared)));
                }
                // Shrink around the rejected step, not the radius it was allowed.
                _ => scale = cfg.trust_shrink * scale.min(step_scale(&step, &base)),
            }
        }
        let violation = it.max_violation();
        round_violations.push(violation);
        if violation <= cfg.feas_tol {
            let objective = it.objective(squared);
            if best.as_ref().is_none_or(|(b, _, _)| objective <= *b) {
                best = Some((objective, it.states.clone(), it.inputs.clone()));
            }
            if stalled {
                converged = true;
                break;
            }
        }
        // A heavier penalty did not move the iterate at all; later rounds won't either.
        if !accepted && round_violations.len() > 1 {
            break;
        }
        if round_violations.len() < cfg.max_penalty_rounds {
            penalty *= cfg.penalty_mult;
        }
    }

    let (states, inputs) = match (converged, best) {
        (false, Some((_, s, u))) => (s, u),
        _ => (it.states, it.inputs),
    };
    let final_it = Iterate::new(model, &desired.states, states, inputs)?;
    Ok(PlanResult {
        objective: final_it.objective(squared),
        max_violation: final_it.max_violation(),
        ref_states: final_it.states,
        ref_inputs: final_it.inputs,
        iterations,
        converged,
        penalty_rounds: round_violations.len(),
        final_penalty: penalty,
        merit_trace,
        round_violations,
    })
}
