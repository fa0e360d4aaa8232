//! Multi-rate tracking controller: near-hover LQR in augmented-input
//! coordinates at the outer rate, attitude PD at the inner rate, and the
//! closed-loop flight simulator built on them.

mod flight;
mod hover;
mod lqr;
mod outer;
mod pd;
mod tracking;

pub use flight::{fly, Crash, FlightLog, FlightMode, FlightOptions, FlightReference, LogRow, NoiseConfig};
pub use hover::{hold_augmented, inner_phases, micros, near_hover_linearization};
pub use lqr::{lqr_gain, RiccatiSolution, RICCATI_MAX_ITERS};
pub use outer::{outer_feedback, rotate_error, CommandLimits, LqrDesign, LqrWeights};
pub use pd::{advance_setpoint, clamp_input, inner_pd, inner_pd_unclamped, PdGains, Saturation};
pub use tracking::{tracking_error, ErrorReport, ERROR_CHANNELS};
