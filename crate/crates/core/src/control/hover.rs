use nalgebra::{SMatrix, SVector};

use super::pd::{advance_setpoint, inner_pd, PdGains};
use crate::dynamics::{integrate_rk4, AugmentedInput, DynamicsModel, RotorInput, State, Vec12, Vec7};
use crate::error::Result;

/// Seconds to integer microseconds; all loop scheduling is done on this grid.
pub fn micros(seconds: f64) -> u64 {
    (seconds * 1e6).round() as u64
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 { a } else { gcd(b, a % b) }
}

/// Offsets of the first inner tick within an outer period, over one full
/// cycle of the two schedules (for 10 ms / 4 ms: 0 and 2 ms).
pub fn inner_phases(outer_us: u64, inner_us: u64) -> Vec<u64> {
    let cycle = inner_us / gcd(outer_us, inner_us);
    let mut phases: Vec<u64> = (0..cycle).map(|k| (inner_us - (k * outer_us) % inner_us) % inner_us).collect();
    phases.sort_unstable();
    phases.dedup();
    phases
}

/// One outer period with the augmented command held (attitude set-point
/// advanced along the desired rates): the PD law runs at
/// every inner tick (first one `phase_us` into the period) and `previous`
/// is applied until then.
pub fn hold_augmented<M: DynamicsModel + ?Sized>(
    plant: &M,
    s: &State,
    command: &AugmentedInput,
    previous: &RotorInput,
    pd: &PdGains,
    phase_us: u64,
) -> Result<State> {
    let params = plant.params();
    let outer_us = micros(plant.dt());
    let inner_us = micros(pd.dt_inner);
    let mut t = 0;
    let mut tick = phase_us;
    let mut state = *s;
    let mut u = *previous;
    while t < outer_us {
        if t == tick {
            u = inner_pd(&advance_setpoint(command, t as f64 * 1e-6), &state, pd, params).0;
            tick += inner_us;
        }
        let next = tick.min(outer_us);
        state = integrate_rk4(plant, &state, &u, (next - t) as f64 * 1e-6, params.substeps)?;
        t = next;
    }
    Ok(state)
}

/// Discrete model of the PD-closed plant over one outer period around hover,
/// in augmented-input coordinates, by central differences. The two (or
/// more) inner-tick phases are averaged.
pub fn near_hover_linearization<M: DynamicsModel + ?Sized>(
    plant: &M,
    pd: &PdGains,
) -> Result<(SMatrix<f64, 12, 12>, SMatrix<f64, 12, 7>)> {
    let hover = State::default();
    let hover_u = plant.hover_input();
    let command = AugmentedInput::hover(hover_u.thrust, 0.0);
    let phases = inner_phases(micros(plant.dt()), micros(pd.dt_inner));
    let h = 1e-6;

    let mut a = SMatrix::<f64, 12, 12>::zeros();
    let mut b = SMatrix::<f64, 12, 7>::zeros();
    for &phase in &phases {
        let run = |x: &Vec12, c: &Vec7| -> Result<Vec12> {
            let next = hold_augmented(plant, &State::from_vector(x), &AugmentedInput::from_vector(c), &hover_u, pd, phase)?;
            Ok(next.error_from(&hover))
        };
        let (x0, c0) = (hover.to_vector(), command.to_vector());
        for k in 0..12 {
            let d = SVector::<f64, 12>::from_fn(|i, _| if i == k { h } else { 0.0 });
            a.set_column(k, &(a.column(k) + (run(&(x0 + d), &c0)? - run(&(x0 - d), &c0)?) / (2.0 * h)));
        }
        for k in 0..7 {
            let d = SVector::<f64, 7>::from_fn(|i, _| if i == k { h } else { 0.0 });
            b.set_column(k, &(b.column(k) + (run(&x0, &(c0 + d))? - run(&x0, &(c0 - d))?) / (2.0 * h)));
        }
    }
    let n = phases.len() as f64;
    Ok((a / n, b / n))
}
