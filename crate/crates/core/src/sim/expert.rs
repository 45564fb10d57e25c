//! Scripted proportional expert.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{step, wrap_angle, Env, EnvState, PlanarAction, TaskConfig};
use crate::action::ActionChunk;

const TRANSLATION_GAIN: f64 = 0.5;
const YAW_GAIN: f64 = 0.5;
/// Beyond this distance the expert turns the jaw to face its target.
const HEADING_DISTANCE: f64 = 0.05;

/// Single feedback action toward the current subgoal.
pub fn expert_action(state: &EnvState, task: &TaskConfig) -> PlanarAction {
    let g = state.gripper_xy();
    let (target, tolerance) = if state.held {
        (state.goal, 0.5 * task.place_radius)
    } else {
        (state.object, 0.5 * task.grasp_radius)
    };
    let (ex, ey) = (target[0] - g[0], target[1] - g[1]);
    let distance = (ex * ex + ey * ey).sqrt();

    let dyaw = if distance > HEADING_DISTANCE {
        let heading = ey.atan2(ex);
        (YAW_GAIN * wrap_angle(heading - state.gripper.yaw)).clamp(-task.yaw_clip, task.yaw_clip)
    } else {
        0.0
    };

    let arrived = distance <= tolerance;
    let (dx, dy) = if arrived {
        (0.0, 0.0)
    } else {
        let (mut dx, mut dy) = (TRANSLATION_GAIN * ex, TRANSLATION_GAIN * ey);
        let n = (dx * dx + dy * dy).sqrt();
        if n > task.action_clip {
            dx *= task.action_clip / n;
            dy *= task.action_clip / n;
        }
        (dx, dy)
    };

    let gripper = if state.held {
        // keep holding until over the goal, then release
        if arrived {
            0.0
        } else {
            1.0
        }
    } else if state.gripper_closed {
        // empty closed jaw: reopen before trying again
        0.0
    } else if arrived {
        1.0
    } else {
        0.0
    };

    PlanarAction {
        dx,
        dy,
        dyaw,
        gripper,
    }
}

/// Open-loop rollout of the expert for `horizon` steps from `state`, in native units.
///
/// Steps after the episode ends are padded with zero motion and an open jaw.
pub fn expert_action_chunk(state: &EnvState, horizon: usize, task: &TaskConfig) -> ActionChunk {
    let mut s = *state;
    let mut actions = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        if s.is_done(task) {
            actions.push(PlanarAction {
                dx: 0.0,
                dy: 0.0,
                dyaw: 0.0,
                gripper: 0.0,
            });
            continue;
        }
        let a = expert_action(&s, task);
        s = step(&s, &a, task).state;
        actions.push(a);
    }
    task.scale().actions_to_chunk(&actions)
}

/// Closed-loop expert episode. `action_noise` is the std of Gaussian noise
/// added to each commanded translation, as a fraction of `action_clip`.
///
/// Returns the visited states and the actions taken from them.
pub fn expert_rollout(
    env: &mut Env,
    action_noise: f64,
    rng: &mut impl Rng,
) -> (Vec<EnvState>, Vec<PlanarAction>) {
    let noise = Normal::new(0.0, action_noise.max(0.0) * env.task.action_clip).expect("finite std");
    let mut states = Vec::new();
    let mut actions = Vec::new();
    while !env.is_done() {
        let mut a = expert_action(&env.state, &env.task);
        if action_noise > 0.0 {
            a.dx += noise.sample(rng);
            a.dy += noise.sample(rng);
            let n = (a.dx * a.dx + a.dy * a.dy).sqrt();
            if n > env.task.action_clip {
                a.dx *= env.task.action_clip / n;
                a.dy *= env.task.action_clip / n;
            }
        }
        states.push(env.state);
        actions.push(a);
        env.step(&a);
    }
    (states, actions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::reset;

    #[test]
    fn chunk_respects_clip() {
        let task = TaskConfig::default();
        let s = reset(&task, 11).unwrap();
        let chunk = expert_action_chunk(&s, 16, &task);
        for row in chunk.rows() {
            assert!((row[0] * row[0] + row[1] * row[1]).sqrt() <= 1.0 + 1e-12);
            assert!(row[2].abs() <= task.yaw_clip + 1e-12);
        }
    }

    #[test]
    fn opens_at_goal() {
        let task = TaskConfig::default();
        let mut s = reset(&task, 2).unwrap();
        s.held = true;
        s.gripper_closed = true;
        s.gripper.x = s.goal[0];
        s.gripper.y = s.goal[1];
        s.object = s.goal;
        let chunk = expert_action_chunk(&s, 4, &task);
        assert!(chunk.gripper().iter().take(2).any(|&g| g < 0.5));
    }
}
