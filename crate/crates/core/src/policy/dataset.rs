//! Scripted demonstrations and the (observation, chunk) pairs cut from them.

use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Observation;
use crate::action::{ActionChunk, ActionSpaceSpec};
use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::sim::{expert_rollout, observe, Env, TaskConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoConfig {
    pub count: usize,
    /// Expert translation noise as a fraction of the per-step clip.
    pub action_noise: f64,
    pub seed: u64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            count: 50,
            action_noise: 0.0,
            seed: 0,
        }
    }
}

/// One expert trajectory; actions are rows `[dx, dy, dyaw, gripper]` in native units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demo {
    pub variant: String,
    pub seed: u64,
    pub success: bool,
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
}

pub fn generate_demos(task: &TaskConfig, variant: &str, config: &DemoConfig) -> Result<Vec<Demo>> {
    (0..config.count)
        .map(|i| {
            let seed = derive_seed(config.seed, i as u64);
            let mut env = Env::new(*task, seed)?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
            let (states, actions) = expert_rollout(&mut env, config.action_noise, &mut rng);
            let scale = task.scale();
            Ok(Demo {
                variant: variant.to_string(),
                seed,
                success: env.state.success,
                observations: states.iter().map(observe).collect(),
                actions: actions.iter().map(|a| scale.to_native(a)).collect(),
            })
        })
        .collect()
}

pub fn write_demos<W: Write>(out: &mut W, demos: &[Demo]) -> Result<()> {
    for d in demos {
        serde_json::to_writer(&mut *out, d)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_demos<R: BufRead>(input: R) -> Result<Vec<Demo>> {
    let mut demos = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        demos.push(serde_json::from_str(&line)?);
    }
    Ok(demos)
}

/// Every demo step paired with the next `horizon` actions; past the end the
/// chunk holds still with the final gripper command.
pub fn training_pairs(demos: &[Demo], horizon: usize) -> Result<Vec<(Observation, ActionChunk)>> {
    let spec = ActionSpaceSpec::planar();
    let mut pairs = Vec::new();
    for demo in demos {
        if demo.observations.len() != demo.actions.len() {
            return Err(Error::Shape(format!(
                "demo {} has {} observations and {} actions",
                demo.seed,
                demo.observations.len(),
                demo.actions.len()
            )));
        }
        let Some(last) = demo.actions.last() else {
            continue;
        };
        let pad = vec![0.0, 0.0, 0.0, last[3]];
        for (t, obs) in demo.observations.iter().enumerate() {
            let rows: Vec<Vec<f64>> = (t..t + horizon)
                .map(|i| demo.actions.get(i).cloned().unwrap_or_else(|| pad.clone()))
                .collect();
            pairs.push((
                Observation::new(obs.clone()),
                ActionChunk::from_rows(&rows, &spec)?,
            ));
        }
    }
    Ok(pairs)
}
