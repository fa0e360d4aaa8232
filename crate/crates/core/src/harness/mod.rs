//! Training flights, dataset construction and the end-to-end
//! generalization experiment.

mod collect;
mod experiment;
mod maneuver;
pub mod plot;
mod registry;
mod trajectory_io;

pub use collect::{
    build_dataset, collect, coverage_audit, derived_input, flight_seed, total_rows, AuditViolation, ControlSetup,
    CoverageAudit, ManeuverLog, TargetSource, AUDIT_SPEED, AUDIT_YAW_RATE,
};
pub use experiment::{
    evaluate, planned_flight, run_generalization_experiment, save_models, train_models, write_mse_table, write_training_history,
    EvaluatedFlight, ExperimentConfig, ExperimentReport, CONFIG_SECTIONS,
};
pub use maneuver::{
    default_suite, generate_maneuver, maneuver_reference, suite_duration, Corpus, ExcitationLevels, ManeuverKind,
    ManeuverSpec, SinusoidYaw, ACCEL_LIMIT, MAX_FREQUENCY, START,
};
pub use registry::{GroundTruthFactory, LearnedFactory, ModelFactory, ModelRegistry, ROTATIONAL_FILE, TRANSLATIONAL_FILE};
pub use trajectory_io::{read_trajectory, write_trajectory, TrajectoryFile, INPUT_COLUMNS, STATE_COLUMNS};
