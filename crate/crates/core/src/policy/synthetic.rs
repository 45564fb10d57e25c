use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ChunkSampler, Observation};
use crate::action::{ActionChunk, ActionSpaceSpec, CandidateSet};
use crate::error::{Error, Result};
use crate::sim::{
    expert_action_chunk, phase_of, step, EnvState, Phase, Pose2, TaskConfig, OBSERVATION_DIM,
};

/// Per-phase noise of the synthetic sampler, in native action units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub sigma_approach: f64,
    pub sigma_grasp: f64,
    pub sigma_transport: f64,
    pub sigma_place: f64,
    /// Probability that a candidate's gripper command is inverted at a grasp-phase step.
    pub flip_grasp: f64,
    pub flip_place: f64,
}

impl NoiseSchedule {
    pub fn uniform(sigma: f64) -> Self {
        Self {
            sigma_approach: sigma,
            sigma_grasp: sigma,
            sigma_transport: sigma,
            sigma_place: sigma,
            flip_grasp: 0.0,
            flip_place: 0.0,
        }
    }

    /// Quiet in free space, ten times noisier around contact.
    pub fn contact_heavy() -> Self {
        Self {
            sigma_approach: 0.02,
            sigma_grasp: 0.2,
            sigma_transport: 0.02,
            sigma_place: 0.2,
            flip_grasp: 0.1,
            flip_place: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for s in [
            self.sigma_approach,
            self.sigma_grasp,
            self.sigma_transport,
            self.sigma_place,
        ] {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::Config(format!(
                    "noise std must be positive, got {s}"
                )));
            }
        }
        for p in [self.flip_grasp, self.flip_place] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("flip probability {p} not in [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn sigma(&self, phase: Phase) -> f64 {
        match phase {
            Phase::Approach | Phase::Done => self.sigma_approach,
            Phase::Grasp => self.sigma_grasp,
            Phase::Transport => self.sigma_transport,
            Phase::Place => self.sigma_place,
        }
    }

    pub fn flip(&self, phase: Phase) -> f64 {
        match phase {
            Phase::Grasp => self.flip_grasp,
            Phase::Place => self.flip_place,
            _ => 0.0,
        }
    }
}

/// Scripted-expert chunk plus phase-dependent Gaussian noise.
///
/// The phase of each future timestep is read off the noise-free rollout of
/// the nominal chunk, so the entropy ground truth is known analytically.
#[derive(Debug, Clone)]
pub struct SyntheticSampler {
    pub task: TaskConfig,
    pub horizon: usize,
    pub schedule: NoiseSchedule,
}

impl SyntheticSampler {
    pub fn new(task: TaskConfig, horizon: usize, schedule: NoiseSchedule) -> Result<Self> {
        task.validate()?;
        schedule.validate()?;
        if horizon == 0 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        Ok(Self {
            task,
            horizon,
            schedule,
        })
    }

    /// Nominal chunk and the phase of the state each of its actions is taken from.
    pub fn nominal(&self, state: &EnvState) -> (ActionChunk, Vec<Phase>) {
        let chunk = expert_action_chunk(state, self.horizon, &self.task);
        let scale = self.task.scale();
        let mut s = *state;
        let phases = scale
            .chunk_to_actions(&chunk)
            .iter()
            .map(|a| {
                let p = phase_of(&s, &self.task);
                s = step(&s, a, &self.task).state;
                p
            })
            .collect();
        (chunk, phases)
    }
}

/// The scripted expert as a sampler: every candidate is the nominal chunk.
#[derive(Debug, Clone)]
pub struct ExpertSampler {
    pub task: TaskConfig,
    pub horizon: usize,
}

impl ExpertSampler {
    pub fn new(task: TaskConfig, horizon: usize) -> Result<Self> {
        task.validate()?;
        if horizon == 0 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        Ok(Self { task, horizon })
    }
}

impl ChunkSampler for ExpertSampler {
    fn spec(&self) -> ActionSpaceSpec {
        ActionSpaceSpec::planar()
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn sample(&self, observation: &Observation, n: usize, _seed: u64) -> Result<CandidateSet> {
        if n == 0 {
            return Err(Error::Argument("N must be at least 1".into()));
        }
        let state = state_from_observation(observation)?;
        let chunk = expert_action_chunk(&state, self.horizon, &self.task);
        CandidateSet::new(ActionSpaceSpec::planar(), vec![chunk; n])
    }
}

/// Rebuilds the simulator state encoded by [`crate::sim::observe`].
pub fn state_from_observation(obs: &Observation) -> Result<EnvState> {
    let f = obs.features();
    if f.len() != OBSERVATION_DIM {
        return Err(Error::Shape(format!(
            "observation has {} features, expected {OBSERVATION_DIM}",
            f.len()
        )));
    }
    Ok(EnvState {
        gripper: Pose2 {
            x: f[0],
            y: f[1],
            yaw: f[3].atan2(f[2]),
        },
        gripper_closed: f[4] >= 0.5,
        held: f[5] >= 0.5,
        object: [f[6], f[7]],
        goal: [f[8], f[9]],
        step_count: 0,
        success: false,
    })
}

impl ChunkSampler for SyntheticSampler {
    fn spec(&self) -> ActionSpaceSpec {
        ActionSpaceSpec::planar()
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn sample(&self, observation: &Observation, n: usize, seed: u64) -> Result<CandidateSet> {
        if n == 0 {
            return Err(Error::Argument("N must be at least 1".into()));
        }
        let state = state_from_observation(observation)?;
        let (nominal, phases) = self.nominal(&state);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = nominal.continuous().ncols();
        let candidates = (0..n)
            .map(|_| {
                let mut continuous: Array2<f64> = nominal.continuous().to_owned();
                let mut gripper = nominal.gripper().to_owned();
                for (i, phase) in phases.iter().enumerate() {
                    let sigma = self.schedule.sigma(*phase);
                    for j in 0..d {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        continuous[[i, j]] += sigma * z;
                    }
                    if rng.random::<f64>() < self.schedule.flip(*phase) {
                        gripper[i] = 1.0 - gripper[i];
                    }
                }
                ActionChunk::new(continuous, gripper)
            })
            .collect::<Result<Vec<_>>>()?;
        CandidateSet::new(ActionSpaceSpec::planar(), candidates)
    }
}
