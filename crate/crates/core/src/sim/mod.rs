//! Planar pick-and-place on a unit table.
//!
//! The gripper moves in SE(2) with a binary jaw. Closing the jaw within
//! `grasp_radius` of the (point) object picks it up; opening while holding
//! drops it at the gripper position, and a drop within `place_radius` of the
//! goal ends the episode successfully.

mod expert;
mod trace;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::action::{ActionChunk, ActionSpaceSpec};
use crate::error::{Error, Result};

pub use expert::{expert_action, expert_action_chunk, expert_rollout};
pub use trace::{write_trace, TraceRecord};

const RESET_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub gripper: Pose2,
    pub gripper_closed: bool,
    pub object: [f64; 2],
    pub goal: [f64; 2],
    pub held: bool,
    pub step_count: usize,
    pub success: bool,
}

impl EnvState {
    pub fn gripper_xy(&self) -> [f64; 2] {
        [self.gripper.x, self.gripper.y]
    }

    pub fn gripper_to_object(&self) -> f64 {
        dist(self.gripper_xy(), self.object)
    }

    pub fn gripper_to_goal(&self) -> f64 {
        dist(self.gripper_xy(), self.goal)
    }

    pub fn is_done(&self, task: &TaskConfig) -> bool {
        self.success || self.step_count >= task.max_steps
    }
}

/// One physical action: translation in meters, yaw in radians, gripper command in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarAction {
    pub dx: f64,
    pub dy: f64,
    pub dyaw: f64,
    pub gripper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    Approach,
    Grasp,
    Transport,
    Place,
    Done,
}

impl Phase {
    pub const ALL: [Phase; 5] = [
        Phase::Approach,
        Phase::Grasp,
        Phase::Transport,
        Phase::Place,
        Phase::Done,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Phase::Approach => "approach",
            Phase::Grasp => "grasp",
            Phase::Transport => "transport",
            Phase::Place => "place",
            Phase::Done => "done",
        }
    }
}

impl std::str::FromStr for Phase {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Phase::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| crate::error::Error::Parse(format!("unknown phase {s:?}")))
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub grasp_radius: f64,
    pub place_radius: f64,
    pub max_steps: usize,
    /// Maximum translation per step (meters, Euclidean norm).
    pub action_clip: f64,
    /// Maximum yaw change per step (radians).
    pub yaw_clip: f64,
    /// `[[x_lo, x_hi], [y_lo, y_hi]]`.
    pub object_range: [[f64; 2]; 2],
    pub goal_range: [[f64; 2]; 2],
    pub min_separation: f64,
    pub home: Pose2,
    /// Std of the per-step random displacement of the gripper (meters); 0 disables it.
    pub actuation_noise: f64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            grasp_radius: 0.03,
            place_radius: 0.05,
            max_steps: 600,
            action_clip: 0.02,
            yaw_clip: 0.25,
            object_range: [[0.1, 0.9], [0.3, 0.9]],
            goal_range: [[0.1, 0.9], [0.3, 0.9]],
            min_separation: 0.35,
            home: Pose2 {
                x: 0.5,
                y: 0.1,
                yaw: 0.0,
            },
            actuation_noise: 0.0,
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("grasp_radius", self.grasp_radius),
            ("place_radius", self.place_radius),
            ("action_clip", self.action_clip),
            ("yaw_clip", self.yaw_clip),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be at least 1".into()));
        }
        if !(self.actuation_noise >= 0.0) {
            return Err(Error::Config("actuation_noise must be >= 0".into()));
        }
        for range in self.object_range.iter().chain(self.goal_range.iter()) {
            if !(0.0 <= range[0] && range[0] <= range[1] && range[1] <= 1.0) {
                return Err(Error::Config(format!("range {range:?} not inside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Conversion between physical actions and the policy's native units.
    pub fn scale(&self) -> ActionScale {
        ActionScale {
            translation: self.action_clip,
            rotation: 1.0,
        }
    }
}

/// Native action units: translation in multiples of the per-step clip, rotation in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionScale {
    pub translation: f64,
    pub rotation: f64,
}

impl ActionScale {
    pub fn to_native(&self, a: &PlanarAction) -> Vec<f64> {
        vec![
            a.dx / self.translation,
            a.dy / self.translation,
            a.dyaw / self.rotation,
            a.gripper,
        ]
    }

    pub fn from_native(&self, row: &[f64]) -> PlanarAction {
        PlanarAction {
            dx: row[0] * self.translation,
            dy: row[1] * self.translation,
            dyaw: row[2] * self.rotation,
            gripper: row[3].clamp(0.0, 1.0),
        }
    }

    pub fn chunk_to_actions(&self, chunk: &ActionChunk) -> Vec<PlanarAction> {
        chunk.rows().iter().map(|r| self.from_native(r)).collect()
    }

    pub fn actions_to_chunk(&self, actions: &[PlanarAction]) -> ActionChunk {
        let rows: Vec<Vec<f64>> = actions.iter().map(|a| self.to_native(a)).collect();
        ActionChunk::from_rows(&rows, &ActionSpaceSpec::planar())
            .expect("planar rows are well formed")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    pub done: bool,
    pub success: bool,
}

pub fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

pub fn wrap_angle(a: f64) -> f64 {
    let mut a = (a + PI).rem_euclid(2.0 * PI) - PI;
    if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

fn sample_in(range: [f64; 2], rng: &mut impl Rng) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.random_range(range[0]..range[1])
    }
}

pub fn reset(task: &TaskConfig, seed: u64) -> Result<EnvState> {
    task.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..RESET_ATTEMPTS {
        let object = [
            sample_in(task.object_range[0], &mut rng),
            sample_in(task.object_range[1], &mut rng),
        ];
        let goal = [
            sample_in(task.goal_range[0], &mut rng),
            sample_in(task.goal_range[1], &mut rng),
        ];
        if dist(object, goal) >= task.min_separation {
            return Ok(EnvState {
                gripper: task.home,
                gripper_closed: false,
                object,
                goal,
                held: false,
                step_count: 0,
                success: false,
            });
        }
    }
    Err(Error::Config(format!(
        "could not place object and goal {} apart in {RESET_ATTEMPTS} draws",
        task.min_separation
    )))
}

pub fn step(state: &EnvState, action: &PlanarAction, task: &TaskConfig) -> StepOutcome {
    step_disturbed(state, action, [0.0, 0.0], task)
}

/// `step` with an extra displacement applied to the gripper after the commanded motion.
pub fn step_disturbed(
    state: &EnvState,
    action: &PlanarAction,
    disturbance: [f64; 2],
    task: &TaskConfig,
) -> StepOutcome {
    if state.is_done(task) {
        return StepOutcome {
            state: *state,
            done: true,
            success: state.success,
        };
    }
    let mut next = *state;
    let (mut dx, mut dy) = (finite_or_zero(action.dx), finite_or_zero(action.dy));
    let norm = (dx * dx + dy * dy).sqrt();
    if norm > task.action_clip {
        dx *= task.action_clip / norm;
        dy *= task.action_clip / norm;
    }
    let dyaw = finite_or_zero(action.dyaw).clamp(-task.yaw_clip, task.yaw_clip);
    next.gripper.x = (state.gripper.x + dx + finite_or_zero(disturbance[0])).clamp(0.0, 1.0);
    next.gripper.y = (state.gripper.y + dy + finite_or_zero(disturbance[1])).clamp(0.0, 1.0);
    next.gripper.yaw = wrap_angle(state.gripper.yaw + dyaw);
    if next.held {
        next.object = next.gripper_xy();
    }

    let close = finite_or_zero(action.gripper) >= 0.5;
    if close && !state.gripper_closed {
        if !next.held && next.gripper_to_object() <= task.grasp_radius {
            next.held = true;
            next.object = next.gripper_xy();
        }
    } else if !close && state.gripper_closed && next.held {
        next.held = false;
        next.object = next.gripper_xy();
        if dist(next.object, next.goal) <= task.place_radius {
            next.success = true;
        }
    }
    next.gripper_closed = close;
    next.step_count += 1;
    StepOutcome {
        done: next.is_done(task),
        success: next.success,
        state: next,
    }
}

fn finite_or_zero(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        0.0
    }
}

pub fn phase_of(state: &EnvState, task: &TaskConfig) -> Phase {
    if state.is_done(task) {
        Phase::Done
    } else if state.held {
        if state.gripper_to_goal() <= 2.0 * task.place_radius {
            Phase::Place
        } else {
            Phase::Transport
        }
    } else if state.gripper_to_object() <= 2.0 * task.grasp_radius {
        Phase::Grasp
    } else {
        Phase::Approach
    }
}

/// Fixed-length observation features: gripper pose, jaw state, object and
/// goal positions, gripper-relative object and goal offsets, and the
/// distance and bearing to the current subgoal (object, or goal when held).
pub fn observe(state: &EnvState) -> Vec<f64> {
    let g = state.gripper_xy();
    let target = if state.held { state.goal } else { state.object };
    let (ex, ey) = (target[0] - g[0], target[1] - g[1]);
    let distance = (ex * ex + ey * ey).sqrt();
    let (ux, uy) = if distance > 1e-9 {
        (ex / distance, ey / distance)
    } else {
        (0.0, 0.0)
    };
    vec![
        g[0],
        g[1],
        state.gripper.yaw.cos(),
        state.gripper.yaw.sin(),
        if state.gripper_closed { 1.0 } else { 0.0 },
        if state.held { 1.0 } else { 0.0 },
        state.object[0],
        state.object[1],
        state.goal[0],
        state.goal[1],
        4.0 * (state.object[0] - g[0]),
        4.0 * (state.object[1] - g[1]),
        4.0 * (state.goal[0] - g[0]),
        4.0 * (state.goal[1] - g[1]),
        4.0 * distance,
        ux,
        uy,
    ]
}

pub const OBSERVATION_DIM: usize = 17;

/// A task instance with its own actuation-noise stream.
#[derive(Debug, Clone)]
pub struct Env {
    pub task: TaskConfig,
    pub state: EnvState,
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
}

impl Env {
    pub fn new(task: TaskConfig, seed: u64) -> Result<Self> {
        let state = reset(&task, seed)?;
        let noise = if task.actuation_noise > 0.0 {
            Some(Normal::new(0.0, task.actuation_noise).map_err(|e| Error::Config(e.to_string()))?)
        } else {
            None
        };
        Ok(Self {
            task,
            state,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_a0c7_1a70),
            noise,
        })
    }

    pub fn step(&mut self, action: &PlanarAction) -> StepOutcome {
        let disturbance = match &self.noise {
            Some(n) => [n.sample(&mut self.rng), n.sample(&mut self.rng)],
            None => [0.0, 0.0],
        };
        let out = step_disturbed(&self.state, action, disturbance, &self.task);
        self.state = out.state;
        out
    }

    pub fn phase(&self) -> Phase {
        phase_of(&self.state, &self.task)
    }

    pub fn is_done(&self) -> bool {
        self.state.is_done(&self.task)
    }
}
