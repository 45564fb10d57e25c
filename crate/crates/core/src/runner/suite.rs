use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{SamplerChoice, SuiteConfig, TaskVariant};
use super::output::{export_heatmap, write_decisions_csv, write_episodes_csv};
use super::{run_episode_with, EpisodeLog, EpisodeOptions, ExecutionMode};
use crate::action::MagnitudeParams;
use crate::entropy::EntropyConfig;
use crate::error::{Error, Result};
use crate::policy::{
    load_model, ChunkSampler, ExpertSampler, FlowPolicy, Observation, SyntheticSampler,
};
use crate::seed::derive_seed;
use crate::selector::select_chunk_size;
use crate::sim::{observe, reset, Env, TaskConfig, OBSERVATION_DIM};

const SAMPLER_STREAM: u64 = 0x5a3b_1e00_0000_0001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub task: String,
    pub mode: String,
    pub trials: usize,
    pub successes: usize,
    /// Percent.
    pub success_rate: f64,
    pub mean_chunk: f64,
    pub mean_decisions: f64,
    /// Keyed by the phase a decision was made in.
    pub per_phase_mean_h_star: BTreeMap<String, f64>,
    /// Keyed by the phase of each executed step, weighted by steps.
    pub per_phase_step_mean_h_star: BTreeMap<String, f64>,
    pub aborted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub n: usize,
    pub ms_per_decision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    /// One row per (task, mode).
    pub rows: Vec<ModeReport>,
    /// One row per mode, pooled over tasks.
    pub overall: Vec<ModeReport>,
    pub timing: Vec<TimingRow>,
    /// Cost at `N = 20` over cost at `N = 1`, when both were timed.
    pub timing_ratio_n20_n1: Option<f64>,
    pub episodes: usize,
    pub aborted: usize,
}

#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub report: SuiteReport,
    pub logs: Vec<EpisodeLog>,
}

pub fn build_sampler(
    choice: &SamplerChoice,
    task: &TaskConfig,
    horizon: usize,
    euler_steps: Option<usize>,
) -> Result<Box<dyn ChunkSampler>> {
    Ok(match choice {
        SamplerChoice::Expert => Box::new(ExpertSampler::new(*task, horizon)?),
        SamplerChoice::Synthetic(schedule) => {
            Box::new(SyntheticSampler::new(*task, horizon, *schedule)?)
        }
        SamplerChoice::Flow { model } => {
            let mut model = load_model(model)?;
            if model.horizon != horizon {
                return Err(Error::Config(format!(
                    "model horizon {} differs from configured H = {horizon}",
                    model.horizon
                )));
            }
            if model.observation_dim != OBSERVATION_DIM {
                return Err(Error::Config(format!(
                    "model expects {} observation features, simulator provides {OBSERVATION_DIM}",
                    model.observation_dim
                )));
            }
            if let Some(k) = euler_steps {
                model.euler_steps = k;
            }
            Box::new(FlowPolicy { model })
        }
    })
}

fn summarize(task: &str, mode: &str, logs: &[&EpisodeLog]) -> ModeReport {
    let trials = logs.len();
    let successes = logs.iter().filter(|l| l.success).count();
    let decisions: Vec<_> = logs.iter().flat_map(|l| &l.decisions).collect();
    let mean = |xs: &[f64]| {
        if xs.is_empty() {
            0.0
        } else {
            xs.iter().sum::<f64>() / xs.len() as f64
        }
    };
    let mut phases: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for d in &decisions {
        phases
            .entry(d.phase.name().to_string())
            .or_default()
            .push(d.h_star as f64);
    }
    let mut step_phases: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (p, h) in logs.iter().flat_map(|l| l.step_chunk_sizes()) {
        step_phases
            .entry(p.name().to_string())
            .or_default()
            .push(h as f64);
    }
    ModeReport {
        task: task.into(),
        mode: mode.into(),
        trials,
        successes,
        success_rate: if trials == 0 {
            0.0
        } else {
            100.0 * successes as f64 / trials as f64
        },
        mean_chunk: mean(
            &decisions
                .iter()
                .map(|d| d.h_star as f64)
                .collect::<Vec<_>>(),
        ),
        mean_decisions: mean(
            &logs
                .iter()
                .map(|l| l.decisions.len() as f64)
                .collect::<Vec<_>>(),
        ),
        per_phase_mean_h_star: phases.into_iter().map(|(k, v)| (k, mean(&v))).collect(),
        per_phase_step_mean_h_star: step_phases
            .into_iter()
            .map(|(k, v)| (k, mean(&v)))
            .collect(),
        aborted: logs.iter().filter(|l| l.error.is_some()).count(),
    }
}

/// Mean wall time of one sample-and-select call for each `N`.
#[allow(clippy::too_many_arguments)]
pub fn run_timing(
    sampler: &dyn ChunkSampler,
    task: &TaskConfig,
    ns: &[usize],
    decisions: usize,
    alpha: f64,
    entropy: &EntropyConfig,
    seed: u64,
) -> Result<Vec<TimingRow>> {
    let decisions = decisions.max(1);
    let observations: Vec<(Observation, bool)> = (0..decisions)
        .map(|i| {
            reset(task, derive_seed(seed, i as u64))
                .map(|s| (Observation::new(observe(&s)), s.gripper_closed))
        })
        .collect::<Result<_>>()?;
    let call = |obs: &Observation, closed: bool, n: usize, s: u64| -> Result<usize> {
        let set = sampler.sample(obs, n, s)?;
        let params = MagnitudeParams {
            alpha,
            prior_gripper_closed: closed,
        };
        Ok(select_chunk_size(&set, &set.candidates()[0], &params, entropy)?.h_star)
    };
    if let Some((obs, closed)) = observations.first() {
        call(obs, *closed, ns.iter().copied().max().unwrap_or(1), seed)?;
    }
    ns.iter()
        .map(|&n| {
            let timer = Instant::now();
            for (i, (obs, closed)) in observations.iter().enumerate() {
                std::hint::black_box(call(
                    obs,
                    *closed,
                    n,
                    derive_seed(seed ^ n as u64, i as u64),
                )?);
            }
            Ok(TimingRow {
                n,
                ms_per_decision: timer.elapsed().as_secs_f64() * 1e3 / decisions as f64,
            })
        })
        .collect()
}

/// Runs every (task, mode, trial) episode and aggregates, without touching the filesystem
/// beyond loading a model.
pub fn run_suite_in_memory(config: &SuiteConfig) -> Result<SuiteOutcome> {
    config.validate()?;
    let samplers: Vec<Box<dyn ChunkSampler>> = config
        .tasks
        .iter()
        .map(|t| build_sampler(&config.sampler, &t.task, config.horizon, config.euler_steps))
        .collect::<Result<_>>()?;
    for s in &samplers {
        if s.horizon() != config.horizon {
            return Err(Error::Config("sampler horizon differs from H".into()));
        }
    }

    let mut jobs: Vec<(usize, &TaskVariant, ExecutionMode, u64)> = Vec::new();
    for (ti, variant) in config.tasks.iter().enumerate() {
        let task_seed = derive_seed(config.seed, ti as u64);
        for mode in &config.modes {
            for trial in 0..config.seeds {
                jobs.push((ti, variant, *mode, derive_seed(task_seed, trial as u64)));
            }
        }
    }
    let options = EpisodeOptions {
        entropy: config.entropy,
        candidate: config.candidate,
    };
    let logs: Vec<EpisodeLog> = jobs
        .par_iter()
        .enumerate()
        .map(|(episode, (ti, variant, mode, env_seed))| {
            let sampler = samplers[*ti].as_ref();
            let sampler_seed = derive_seed(config.seed ^ SAMPLER_STREAM, episode as u64);
            let mut log = match Env::new(variant.task, *env_seed) {
                Ok(mut env) => run_episode_with(&mut env, sampler, *mode, sampler_seed, &options),
                Err(e) => EpisodeLog {
                    episode,
                    seed: *env_seed,
                    mode: mode.label(),
                    task: String::new(),
                    horizon: config.horizon,
                    success: false,
                    env_steps: 0,
                    decisions: Vec::new(),
                    step_phases: Vec::new(),
                    wall_ms_per_decision: 0.0,
                    error: Some(e.to_string()),
                },
            };
            log.episode = episode;
            log.seed = *env_seed;
            log.task = variant.name.clone();
            log
        })
        .collect();

    let mut rows = Vec::new();
    for variant in &config.tasks {
        for mode in &config.modes {
            let label = mode.label();
            let subset: Vec<&EpisodeLog> = logs
                .iter()
                .filter(|l| l.task == variant.name && l.mode == label)
                .collect();
            rows.push(summarize(&variant.name, &label, &subset));
        }
    }
    let overall = config
        .modes
        .iter()
        .map(|mode| {
            let label = mode.label();
            let subset: Vec<&EpisodeLog> = logs.iter().filter(|l| l.mode == label).collect();
            summarize("all", &label, &subset)
        })
        .collect();

    let timing = if config.timing_n.is_empty() {
        Vec::new()
    } else {
        let alpha = config
            .modes
            .iter()
            .find_map(|m| match m {
                ExecutionMode::Adaptive { alpha, .. } => Some(*alpha),
                _ => None,
            })
            .unwrap_or(3.0);
        run_timing(
            samplers[0].as_ref(),
            &config.tasks[0].task,
            &config.timing_n,
            config.timing_decisions,
            alpha,
            &config.entropy,
            config.seed,
        )?
    };
    let at = |n: usize| timing.iter().find(|r| r.n == n).map(|r| r.ms_per_decision);
    let timing_ratio_n20_n1 = match (at(20), at(1)) {
        (Some(a), Some(b)) if b > 0.0 => Some(a / b),
        _ => None,
    };
    let aborted = logs.iter().filter(|l| l.error.is_some()).count();
    Ok(SuiteOutcome {
        report: SuiteReport {
            rows,
            overall,
            timing,
            timing_ratio_n20_n1,
            episodes: logs.len(),
            aborted,
        },
        logs,
    })
}

fn write_file(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<fs::File>) -> Result<()>,
) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    body(&mut out)?;
    out.flush()?;
    Ok(())
}

/// Runs the suite and, when `output` is set, writes `decisions.csv`,
/// `episodes.csv`, `heatmap.csv` and `summary.json` there.
pub fn run_suite(config: &SuiteConfig) -> Result<SuiteOutcome> {
    let outcome = run_suite_in_memory(config)?;
    if let Some(dir) = &config.output {
        fs::create_dir_all(dir)?;
        write_file(&dir.join("decisions.csv"), |w| {
            write_decisions_csv(w, &outcome.logs)
        })?;
        write_file(&dir.join("episodes.csv"), |w| {
            write_episodes_csv(w, &outcome.logs)
        })?;
        let adaptive: Vec<EpisodeLog> = outcome
            .logs
            .iter()
            .filter(|l| l.mode == "adaptive")
            .cloned()
            .collect();
        let heat = if adaptive.is_empty() {
            &outcome.logs
        } else {
            &adaptive
        };
        write_file(&dir.join("heatmap.csv"), |w| {
            export_heatmap(w, heat, config.horizon, config.heatmap_bucket)
        })?;
        write_file(&dir.join("summary.json"), |w| {
            serde_json::to_writer_pretty(&mut *w, &outcome.report)?;
            writeln!(w)?;
            Ok(())
        })?;
    }
    Ok(outcome)
}

pub fn run_suite_file(path: &Path) -> Result<SuiteOutcome> {
    let text = fs::read_to_string(path)?;
    run_suite(&SuiteConfig::parse(&text)?)
}

pub fn render_table(report: &SuiteReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<12} {:<10} {:>7} {:>9} {:>10} {:>10}",
        "task", "mode", "trials", "success%", "mean h*", "decisions"
    );
    for r in report.rows.iter().chain(&report.overall) {
        let _ = writeln!(
            s,
            "{:<12} {:<10} {:>7} {:>9.1} {:>10.2} {:>10.1}",
            r.task, r.mode, r.trials, r.success_rate, r.mean_chunk, r.mean_decisions
        );
    }
    if !report.timing.is_empty() {
        let _ = writeln!(s, "\n{:>4} {:>14}", "N", "ms/decision");
        for t in &report.timing {
            let _ = writeln!(s, "{:>4} {:>14.3}", t.n, t.ms_per_decision);
        }
    }
    if report.aborted > 0 {
        let _ = writeln!(
            s,
            "\n{} of {} episodes aborted",
            report.aborted, report.episodes
        );
    }
    s
}
