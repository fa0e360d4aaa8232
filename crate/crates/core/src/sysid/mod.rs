//! Two-layer ReLU regression networks for translational and rotational
//! accelerations: features, forward pass and Jacobian, datasets, Rprop
//! training and model files.

mod dataset;
mod features;
mod learned;
mod model_file;
mod net;
mod train;

pub use dataset::{Dataset, Split, SplitFractions};
pub use features::{feature_jacobian, featurize, NetKind};
pub use learned::{zero_model, LearnedModel};
pub use model_file::{load_model, parse_model, save_model, serialize_model};
pub use net::{NetOutput, ReluNet};
pub use train::{split_mse, train, EpochStats, TrainConfig, TrainReport};
