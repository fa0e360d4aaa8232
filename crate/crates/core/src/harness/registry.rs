//! Dynamics models selectable by name at runtime.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::dynamics::{DynamicsModel, GroundTruth, PhysicalParams};
use crate::error::{Error, Result};
use crate::sysid::{load_model, LearnedModel};

pub const TRANSLATIONAL_FILE: &str = "translational.model";
pub const ROTATIONAL_FILE: &str = "rotational.model";

/// Builds one kind of dynamics model.
pub trait ModelFactory {
    fn name(&self) -> &'static str;
    /// `model_dir` holds trained networks for models that need them.
    fn build(&self, params: &PhysicalParams, model_dir: Option<&Path>) -> Result<Box<dyn DynamicsModel>>;
}

pub struct GroundTruthFactory;

impl ModelFactory for GroundTruthFactory {
    fn name(&self) -> &'static str {
        "ground_truth"
    }

    fn build(&self, params: &PhysicalParams, _model_dir: Option<&Path>) -> Result<Box<dyn DynamicsModel>> {
        Ok(Box::new(GroundTruth::new(*params)))
    }
}

pub struct LearnedFactory;

impl LearnedFactory {
    pub fn paths(dir: &Path) -> (PathBuf, PathBuf) {
        (dir.join(TRANSLATIONAL_FILE), dir.join(ROTATIONAL_FILE))
    }
}

impl ModelFactory for LearnedFactory {
    fn name(&self) -> &'static str {
        "learned"
    }

    fn build(&self, params: &PhysicalParams, model_dir: Option<&Path>) -> Result<Box<dyn DynamicsModel>> {
        let dir = model_dir.ok_or_else(|| Error::InvalidArgument("the learned model needs a model directory".into()))?;
        let (fv, fw) = Self::paths(dir);
        Ok(Box::new(LearnedModel::new(*params, load_model(&fv)?, load_model(&fw)?)?))
    }
}

pub struct ModelRegistry {
    factories: BTreeMap<&'static str, Box<dyn ModelFactory>>,
}

impl Default for ModelRegistry {
    fn default() -> Self {
        let mut r = ModelRegistry::empty();
        r.register(Box::new(GroundTruthFactory));
        r.register(Box::new(LearnedFactory));
        r
    }
}

impl ModelRegistry {
    pub fn empty() -> Self {
        ModelRegistry {
            factories: BTreeMap::new(),
        }
    }

    /// Adds a factory, replacing any previous one with the same name.
    pub fn register(&mut self, factory: Box<dyn ModelFactory>) {
        self.factories.insert(factory.name(), factory);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.factories.keys().copied().collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn build(&self, name: &str, params: &PhysicalParams, model_dir: Option<&Path>) -> Result<Box<dyn DynamicsModel>> {
        let f = self.factories.get(name).ok_or_else(|| {
            Error::InvalidArgument(format!("unknown model `{name}` (known: {})", self.names().join(", ")))
        })?;
        f.build(params, model_dir)
    }
}
