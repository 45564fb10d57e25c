//! Flat `key = value` experiment files.
//!
//! ```text
//! # comment
//! mode = adaptive, fixed
//! h = 2, 4, 8, 12, 16
//! N = 20
//! tasks = clean, perturbed
//! perturbed.actuation_noise = 0.004
//! sampler = flow
//! model = model.bin
//! output = results
//! ```

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ExecutionCandidate, ExecutionMode};
use crate::entropy::EntropyConfig;
use crate::error::{Error, Result};
use crate::policy::NoiseSchedule;
use crate::sim::TaskConfig;

const GLOBAL_KEYS: &[&str] = &[
    "mode",
    "h",
    "N",
    "alpha",
    "K",
    "H",
    "seeds",
    "seed",
    "tasks",
    "sampler",
    "model",
    "output",
    "timing_n",
    "timing_decisions",
    "candidate",
    "ridge",
    "heatmap_bucket",
    "sigma_approach",
    "sigma_grasp",
    "sigma_transport",
    "sigma_place",
    "flip_grasp",
    "flip_place",
];

const TASK_KEYS: &[&str] = &[
    "object_range",
    "goal_range",
    "max_steps",
    "grasp_radius",
    "place_radius",
    "actuation_noise",
    "min_separation",
    "action_clip",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SamplerChoice {
    Flow {
        model: PathBuf,
    },
    Synthetic(NoiseSchedule),
    /// The scripted expert without noise.
    Expert,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskVariant {
    pub name: String,
    pub task: TaskConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub modes: Vec<ExecutionMode>,
    pub horizon: usize,
    /// Overrides the flow model's Euler step count.
    pub euler_steps: Option<usize>,
    /// Trials per (task, mode).
    pub seeds: usize,
    pub seed: u64,
    pub tasks: Vec<TaskVariant>,
    pub sampler: SamplerChoice,
    pub output: Option<PathBuf>,
    pub timing_n: Vec<usize>,
    pub timing_decisions: usize,
    pub candidate: ExecutionCandidate,
    pub entropy: EntropyConfig,
    pub heatmap_bucket: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            modes: vec![ExecutionMode::Adaptive { alpha: 3.0, n: 20 }],
            horizon: 16,
            euler_steps: None,
            seeds: 20,
            seed: 0,
            tasks: vec![TaskVariant {
                name: "default".into(),
                task: TaskConfig::default(),
            }],
            sampler: SamplerChoice::Expert,
            output: None,
            timing_n: Vec::new(),
            timing_decisions: 50,
            candidate: ExecutionCandidate::First,
            entropy: EntropyConfig::default(),
            heatmap_bucket: super::HEATMAP_BUCKET,
        }
    }
}

fn parse_one<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_one(key, s))
        .collect()
}

fn parse_range(key: &str, value: &str) -> Result<[[f64; 2]; 2]> {
    let v: Vec<f64> = value
        .split([' ', ',', '\t'])
        .filter(|s| !s.is_empty())
        .map(|s| parse_one(key, s))
        .collect::<Result<_>>()?;
    match v.as_slice() {
        [a, b, c, d] => Ok([[*a, *b], [*c, *d]]),
        _ => Err(Error::Config(format!(
            "`{key}` needs four numbers: x_lo x_hi y_lo y_hi"
        ))),
    }
}

fn apply_task_key(task: &mut TaskConfig, key: &str, value: &str) -> Result<()> {
    match key {
        "object_range" => task.object_range = parse_range(key, value)?,
        "goal_range" => task.goal_range = parse_range(key, value)?,
        "max_steps" => task.max_steps = parse_one(key, value)?,
        "grasp_radius" => task.grasp_radius = parse_one(key, value)?,
        "place_radius" => task.place_radius = parse_one(key, value)?,
        "actuation_noise" => task.actuation_noise = parse_one(key, value)?,
        "min_separation" => task.min_separation = parse_one(key, value)?,
        "action_clip" => task.action_clip = parse_one(key, value)?,
        _ => return Err(Error::Config(format!("unknown task key `{key}`"))),
    }
    Ok(())
}

impl SuiteConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim().to_string();
            if entries
                .insert(key.clone(), value.trim().to_string())
                .is_some()
            {
                return Err(Error::Config(format!(
                    "line {}: duplicate key `{key}`",
                    lineno + 1
                )));
            }
        }
        for key in entries.keys() {
            let known = match key.split_once('.') {
                Some((_, k)) => TASK_KEYS.contains(&k),
                None => GLOBAL_KEYS.contains(&key.as_str()) || TASK_KEYS.contains(&key.as_str()),
            };
            if !known {
                return Err(Error::Config(format!("unknown key `{key}`")));
            }
        }
        let get = |k: &str| entries.get(k).map(String::as_str);
        let mut cfg = SuiteConfig::default();

        if let Some(v) = get("H") {
            cfg.horizon = parse_one("H", v)?;
        }
        let alpha: f64 = get("alpha")
            .map(|v| parse_one("alpha", v))
            .transpose()?
            .unwrap_or(3.0);
        let n: usize = get("N")
            .map(|v| parse_one("N", v))
            .transpose()?
            .unwrap_or(20);
        let hs: Vec<usize> = get("h")
            .map(|v| parse_list("h", v))
            .transpose()?
            .unwrap_or_default();
        if let Some(v) = get("mode") {
            let mut modes = Vec::new();
            for m in parse_list::<String>("mode", v)? {
                match m.as_str() {
                    "adaptive" => modes.push(ExecutionMode::Adaptive { alpha, n }),
                    "fixed" => {
                        if hs.is_empty() {
                            return Err(Error::Config("mode `fixed` needs `h = ...`".into()));
                        }
                        modes.extend(hs.iter().map(|&h| ExecutionMode::Fixed { h }));
                    }
                    "full" => modes.push(ExecutionMode::FullHorizon),
                    other => return Err(Error::Config(format!("unknown mode `{other}`"))),
                }
            }
            cfg.modes = modes;
        } else {
            cfg.modes = vec![ExecutionMode::Adaptive { alpha, n }];
        }
        if cfg.modes.is_empty() {
            return Err(Error::Config("no execution modes".into()));
        }
        if let Some(v) = get("K") {
            cfg.euler_steps = Some(parse_one("K", v)?);
        }
        if let Some(v) = get("seeds") {
            cfg.seeds = parse_one("seeds", v)?;
        }
        if let Some(v) = get("seed") {
            cfg.seed = parse_one("seed", v)?;
        }
        if let Some(v) = get("timing_n") {
            cfg.timing_n = parse_list("timing_n", v)?;
        }
        if let Some(v) = get("timing_decisions") {
            cfg.timing_decisions = parse_one("timing_decisions", v)?;
        }
        if let Some(v) = get("output") {
            cfg.output = Some(PathBuf::from(v));
        }
        if let Some(v) = get("ridge") {
            cfg.entropy = EntropyConfig::new(parse_one("ridge", v)?)?;
        }
        if let Some(v) = get("heatmap_bucket") {
            cfg.heatmap_bucket = parse_one("heatmap_bucket", v)?;
        }
        if let Some(v) = get("candidate") {
            cfg.candidate = match v {
                "first" => ExecutionCandidate::First,
                "mean" => ExecutionCandidate::Mean,
                other => return Err(Error::Config(format!("unknown candidate `{other}`"))),
            };
        }

        let mut base = TaskConfig::default();
        for key in TASK_KEYS {
            if let Some(v) = get(key) {
                apply_task_key(&mut base, key, v)?;
            }
        }
        let names: Vec<String> = match get("tasks") {
            Some(v) => parse_list("tasks", v)?,
            None => vec!["default".into()],
        };
        for key in entries.keys() {
            if let Some((name, _)) = key.split_once('.') {
                if !names.iter().any(|n| n == name) {
                    return Err(Error::Config(format!(
                        "`{key}` refers to unlisted task `{name}`"
                    )));
                }
            }
        }
        cfg.tasks = names
            .into_iter()
            .map(|name| {
                let mut task = base;
                for key in TASK_KEYS {
                    if let Some(v) = get(&format!("{name}.{key}")) {
                        apply_task_key(&mut task, key, v)?;
                    }
                }
                Ok(TaskVariant { name, task })
            })
            .collect::<Result<_>>()?;

        cfg.sampler = match get("sampler").unwrap_or("expert") {
            "expert" => SamplerChoice::Expert,
            "flow" => SamplerChoice::Flow {
                model: PathBuf::from(get("model").ok_or_else(|| {
                    Error::Config("sampler `flow` needs `model = <path>`".into())
                })?),
            },
            "synthetic" => {
                let mut s = NoiseSchedule::contact_heavy();
                let fields: [(&str, &mut f64); 6] = [
                    ("sigma_approach", &mut s.sigma_approach),
                    ("sigma_grasp", &mut s.sigma_grasp),
                    ("sigma_transport", &mut s.sigma_transport),
                    ("sigma_place", &mut s.sigma_place),
                    ("flip_grasp", &mut s.flip_grasp),
                    ("flip_place", &mut s.flip_place),
                ];
                for (key, slot) in fields {
                    if let Some(v) = get(key) {
                        *slot = parse_one(key, v)?;
                    }
                }
                SamplerChoice::Synthetic(s)
            }
            other => return Err(Error::Config(format!("unknown sampler `{other}`"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(Error::Config("task list is empty".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("H must be >= 1".into()));
        }
        if self.seeds == 0 {
            return Err(Error::Config("seeds must be >= 1".into()));
        }
        if self.heatmap_bucket == 0 {
            return Err(Error::Config("heatmap_bucket must be >= 1".into()));
        }
        if self.euler_steps == Some(0) {
            return Err(Error::Config("K must be >= 1".into()));
        }
        if self.timing_n.contains(&0) {
            return Err(Error::Config("timing_n entries must be >= 1".into()));
        }
        for m in &self.modes {
            m.validate(self.horizon)?;
        }
        for t in &self.tasks {
            t.task.validate()?;
        }
        if let SamplerChoice::Synthetic(s) = &self.sampler {
            s.validate()?;
        }
        Ok(())
    }
}
