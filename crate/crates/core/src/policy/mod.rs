//! Chunk samplers: the contract, a controlled-noise synthetic sampler and a
//! flow-matching policy.

mod dataset;
mod flow;
mod mlp;
mod model_io;
mod synthetic;

use serde::{Deserialize, Serialize};

use crate::action::{ActionSpaceSpec, CandidateSet};
use crate::error::Result;

pub use dataset::{generate_demos, read_demos, training_pairs, write_demos, Demo, DemoConfig};
pub use flow::{
    adam_train_step, flow_train_step, train, AdamState, FieldSign, FlowBatch, FlowConfig,
    FlowModel, FlowPolicy, Optimizer, TrainConfig, TIME_FEATURES,
};
pub use mlp::{Layer, Mlp};
pub use model_io::{load_model, read_model, save_model, write_model};
pub use synthetic::{state_from_observation, ExpertSampler, NoiseSchedule, SyntheticSampler};

/// Fixed-length feature vector describing the scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation(Vec<f64>);

impl Observation {
    pub fn new(features: Vec<f64>) -> Self {
        Self(features)
    }

    pub fn features(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Draws `N` candidate chunks for one observation.
///
/// Implementations must be deterministic in `(observation, n, seed)` and draw
/// the candidates independently of each other.
pub trait ChunkSampler: Send + Sync {
    fn spec(&self) -> ActionSpaceSpec;
    fn horizon(&self) -> usize;
    fn sample(&self, observation: &Observation, n: usize, seed: u64) -> Result<CandidateSet>;
}
