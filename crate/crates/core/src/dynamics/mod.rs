//! State/input algebra, rotation maps, the ground-truth rigid-body plant and
//! fixed-step integration.

mod ground_truth;
mod integrate;
pub mod kinematics;
mod model;
mod params;
mod types;

pub use ground_truth::{ground_truth_accel, GroundTruth};
pub use integrate::{euler_step, integrate_rk4, simulate_fine, state_derivative, step};
pub use kinematics::{euler_rate_jacobian, euler_rate_matrix, rotation_b_to_i, rotation_i_to_b};
pub use model::{finite_difference_jacobian, AccelJacobian, DynamicsModel};
pub use params::PhysicalParams;
pub use types::{Accel, AugmentedInput, RotorInput, State, Vec12, Vec4, Vec7, TILT_ENVELOPE};
