//! Closed-loop execution of chunked policies and the experiment harness.

mod config;
mod output;
mod suite;

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::action::{ActionChunk, MagnitudeParams};
use crate::entropy::EntropyConfig;
use crate::error::{Error, Result};
use crate::policy::{ChunkSampler, Observation};
use crate::seed::derive_seed;
use crate::selector::select_chunk_size;
use crate::sim::{observe, Env, Phase};

pub use config::{SamplerChoice, SuiteConfig, TaskVariant};
pub use output::{
    episodes_with_mode, export_heatmap, fmt_sig9, read_decisions_csv, write_decisions_csv,
    write_episodes_csv, HEATMAP_BUCKET,
};
pub use suite::{
    build_sampler, render_table, run_suite, run_suite_file, run_suite_in_memory, run_timing,
    ModeReport, SuiteOutcome, SuiteReport, TimingRow,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ExecutionMode {
    Adaptive { alpha: f64, n: usize },
    Fixed { h: usize },
    FullHorizon,
}

impl ExecutionMode {
    pub fn label(&self) -> String {
        match self {
            ExecutionMode::Adaptive { .. } => "adaptive".into(),
            ExecutionMode::Fixed { h } => format!("fixed-{h}"),
            ExecutionMode::FullHorizon => "full".into(),
        }
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        match *self {
            ExecutionMode::Adaptive { alpha, n } => {
                if n == 0 {
                    return Err(Error::Config("adaptive mode needs N >= 1".into()));
                }
                if !alpha.is_finite() || alpha < 0.0 {
                    return Err(Error::Config(format!(
                        "alpha must be finite and >= 0, got {alpha}"
                    )));
                }
            }
            ExecutionMode::Fixed { h } => {
                if h == 0 || h > horizon {
                    return Err(Error::Config(format!(
                        "fixed chunk size {h} not in 1..={horizon}"
                    )));
                }
            }
            ExecutionMode::FullHorizon => {}
        }
        Ok(())
    }
}

/// Which of the sampled candidates is executed in adaptive mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ExecutionCandidate {
    /// Candidate index 0.
    #[default]
    First,
    /// Per-timestep candidate mean with a majority-vote gripper.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub decision_index: usize,
    pub env_step: usize,
    pub h_star: usize,
    /// `None` outside adaptive mode.
    pub raw_argmax: Option<usize>,
    pub xi: Option<usize>,
    pub phase: Phase,
    pub curve: Vec<f64>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub seed: u64,
    pub mode: String,
    pub task: String,
    pub horizon: usize,
    pub success: bool,
    pub env_steps: usize,
    pub decisions: Vec<DecisionRecord>,
    /// Phase of the state each executed action was taken from.
    pub step_phases: Vec<Phase>,
    pub wall_ms_per_decision: f64,
    /// Set when the sampler failed and the episode was aborted.
    pub error: Option<String>,
}

impl EpisodeLog {
    /// Mean `h*` per phase, counting each decision once under the phase it was made in.
    pub fn decision_phase_means(&self) -> BTreeMap<Phase, f64> {
        let mut acc: BTreeMap<Phase, (f64, usize)> = BTreeMap::new();
        for d in &self.decisions {
            let e = acc.entry(d.phase).or_default();
            e.0 += d.h_star as f64;
            e.1 += 1;
        }
        acc.into_iter()
            .map(|(p, (s, n))| (p, s / n as f64))
            .collect()
    }

    /// `(phase, h*)` for every executed step: the phase of the state the step
    /// was taken from and the chunk size of the decision that produced it.
    pub fn step_chunk_sizes(&self) -> Vec<(Phase, usize)> {
        let mut out = Vec::with_capacity(self.step_phases.len());
        for (i, d) in self.decisions.iter().enumerate() {
            let end = self
                .decisions
                .get(i + 1)
                .map_or(self.step_phases.len(), |n| n.env_step);
            for p in self.step_phases.get(d.env_step..end).unwrap_or(&[]) {
                out.push((*p, d.h_star));
            }
        }
        out
    }

    /// Mean chunk size in effect per phase, weighted by executed steps.
    pub fn step_phase_means(&self) -> BTreeMap<Phase, f64> {
        let mut acc: BTreeMap<Phase, (f64, usize)> = BTreeMap::new();
        for (p, h) in self.step_chunk_sizes() {
            let e = acc.entry(p).or_default();
            e.0 += h as f64;
            e.1 += 1;
        }
        acc.into_iter()
            .map(|(p, (s, n))| (p, s / n as f64))
            .collect()
    }

    /// Log with the wall-clock fields zeroed.
    pub fn without_timing(&self) -> EpisodeLog {
        let mut log = self.clone();
        log.wall_ms_per_decision = 0.0;
        for d in &mut log.decisions {
            d.wall_ms = 0.0;
        }
        log
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpisodeOptions {
    pub entropy: EntropyConfig,
    pub candidate: ExecutionCandidate,
}

/// Runs one episode to termination. `seed` drives the sampler stream; the
/// environment carries its own.
pub fn run_episode(
    env: &mut Env,
    sampler: &dyn ChunkSampler,
    mode: ExecutionMode,
    seed: u64,
) -> EpisodeLog {
    run_episode_with(env, sampler, mode, seed, &EpisodeOptions::default())
}

pub fn run_episode_with(
    env: &mut Env,
    sampler: &dyn ChunkSampler,
    mode: ExecutionMode,
    seed: u64,
    options: &EpisodeOptions,
) -> EpisodeLog {
    let horizon = sampler.horizon();
    let mut log = EpisodeLog {
        episode: 0,
        seed,
        mode: mode.label(),
        task: String::new(),
        horizon,
        success: false,
        env_steps: 0,
        decisions: Vec::new(),
        step_phases: Vec::new(),
        wall_ms_per_decision: 0.0,
        error: None,
    };
    if let Err(e) = mode.validate(horizon) {
        log.error = Some(e.to_string());
        return log;
    }
    let scale = env.task.scale();
    let start_step = env.state.step_count;
    while !env.is_done() {
        let index = log.decisions.len();
        let obs = Observation::new(observe(&env.state));
        let phase = env.phase();
        let timer = Instant::now();
        let planned = plan(
            sampler,
            &obs,
            mode,
            derive_seed(seed, index as u64),
            env.state.gripper_closed,
            options,
        );
        let wall_ms = timer.elapsed().as_secs_f64() * 1e3;
        let (chunk, record) = match planned {
            Ok(p) => p,
            Err(e) => {
                log.error = Some(e.to_string());
                break;
            }
        };
        let h = record.h_star;
        log.decisions.push(DecisionRecord {
            decision_index: index,
            env_step: env.state.step_count - start_step,
            phase,
            wall_ms,
            ..record
        });
        for action in scale.chunk_to_actions(&chunk).iter().take(h) {
            log.step_phases.push(env.phase());
            env.step(action);
            if env.is_done() {
                break;
            }
        }
    }
    log.success = env.state.success;
    log.env_steps = env.state.step_count - start_step;
    if !log.decisions.is_empty() {
        log.wall_ms_per_decision =
            log.decisions.iter().map(|d| d.wall_ms).sum::<f64>() / log.decisions.len() as f64;
    }
    log
}

fn plan(
    sampler: &dyn ChunkSampler,
    obs: &Observation,
    mode: ExecutionMode,
    seed: u64,
    prior_closed: bool,
    options: &EpisodeOptions,
) -> Result<(ActionChunk, DecisionRecord)> {
    let blank = |h| DecisionRecord {
        decision_index: 0,
        env_step: 0,
        h_star: h,
        raw_argmax: None,
        xi: None,
        phase: Phase::Done,
        curve: Vec::new(),
        wall_ms: 0.0,
    };
    match mode {
        ExecutionMode::Fixed { h } => {
            let set = sampler.sample(obs, 1, seed)?;
            Ok((set.candidates()[0].clone(), blank(h)))
        }
        ExecutionMode::FullHorizon => {
            let set = sampler.sample(obs, 1, seed)?;
            Ok((set.candidates()[0].clone(), blank(sampler.horizon())))
        }
        ExecutionMode::Adaptive { alpha, n } => {
            let set = sampler.sample(obs, n, seed)?;
            let chunk = match options.candidate {
                ExecutionCandidate::First => set.candidates()[0].clone(),
                ExecutionCandidate::Mean => set.mean_chunk(),
            };
            let params = MagnitudeParams {
                alpha,
                prior_gripper_closed: prior_closed,
            };
            let decision = select_chunk_size(&set, &chunk, &params, &options.entropy)?;
            let record = DecisionRecord {
                raw_argmax: Some(decision.raw_argmax),
                xi: Some(decision.xi),
                curve: decision.curve.values.to_vec(),
                ..blank(decision.h_star)
            };
            Ok((chunk, record))
        }
    }
}
