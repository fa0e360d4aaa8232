//! Learned quadrotor dynamics for model-based control.
//!
//! Pipeline: simulate flights on a Newton-Euler plant, fit two shallow ReLU
//! networks to translational and rotational accelerations, plan a feasible
//! reference through the learned model with sequential convex programming
//! and track it with a 100 Hz LQR over a 250 Hz attitude PD loop.

pub mod config;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod math;
pub mod planner;
pub mod sysid;

pub use error::{Error, Result};
