mod common;

use aac_core::sim::{
    dist, expert_action, expert_action_chunk, expert_rollout, phase_of, reset, step, write_trace,
    Env, EnvState, Phase, PlanarAction, TaskConfig, TraceRecord,
};
use common::*;
use proptest::prelude::*;
use rand::Rng;

fn inside(v: f64, r: [f64; 2]) -> bool {
    r[0] <= v && v <= r[1]
}

#[test]
fn resets_respect_ranges_and_separation() {
    let task = TaskConfig::default();
    for seed in 0..10_000 {
        let s = reset(&task, seed).unwrap();
        assert!(
            inside(s.object[0], task.object_range[0]) && inside(s.object[1], task.object_range[1])
        );
        assert!(inside(s.goal[0], task.goal_range[0]) && inside(s.goal[1], task.goal_range[1]));
        assert!(dist(s.object, s.goal) >= task.min_separation);
        assert_eq!(s.gripper, task.home);
        assert!(!s.gripper_closed && !s.held && !s.success);
        assert_eq!(phase_of(&s, &task), Phase::Approach);
    }
}

#[test]
fn point_range_is_exact() {
    let task = TaskConfig {
        object_range: [[0.3, 0.3], [0.7, 0.7]],
        ..TaskConfig::default()
    };
    assert_eq!(reset(&task, 9).unwrap().object, [0.3, 0.7]);
}

#[test]
fn impossible_separation_is_an_error() {
    let task = TaskConfig {
        object_range: [[0.5, 0.5], [0.5, 0.5]],
        goal_range: [[0.5, 0.5], [0.5, 0.5]],
        ..TaskConfig::default()
    };
    assert!(reset(&task, 0).is_err());
}

#[test]
fn expert_solves_every_seed() {
    let task = TaskConfig::default();
    for seed in 0..100 {
        let mut env = Env::new(task, seed).unwrap();
        while !env.is_done() {
            let chunk = expert_action_chunk(&env.state, 1, &task);
            let a = task.scale().chunk_to_actions(&chunk)[0];
            env.step(&a);
        }
        assert!(env.state.success, "seed {seed}");
        assert!(env.state.step_count < task.max_steps);
    }
}

#[test]
fn expert_opens_at_goal() {
    let task = TaskConfig::default();
    let mut s = reset(&task, 4).unwrap();
    s.held = true;
    s.gripper_closed = true;
    s.gripper.x = s.goal[0];
    s.gripper.y = s.goal[1];
    s.object = s.goal;
    assert_eq!(phase_of(&s, &task), Phase::Place);
    let chunk = expert_action_chunk(&s, 8, &task);
    assert!(chunk.gripper()[0] < 0.5 || chunk.gripper()[1] < 0.5);
}

#[test]
fn phase_examples() {
    let task = TaskConfig::default();
    let mut s = reset(&task, 1).unwrap();
    s.gripper.x = s.object[0] + task.grasp_radius;
    s.gripper.y = s.object[1];
    assert_eq!(phase_of(&s, &task), Phase::Grasp);
    s.step_count = task.max_steps;
    assert_eq!(phase_of(&s, &task), Phase::Done);
}

#[test]
fn trace_is_json_lines() {
    let task = TaskConfig::default();
    let mut env = Env::new(task, 3).unwrap();
    let (states, actions) = expert_rollout(&mut env, 0.0, &mut rng(0));
    let records: Vec<TraceRecord> = states
        .iter()
        .zip(&actions)
        .enumerate()
        .map(|(i, (s, a))| {
            let out = step(s, a, &task);
            TraceRecord {
                step: i,
                state: *s,
                action: *a,
                phase: phase_of(s, &task),
                done: out.done,
                success: out.success,
            }
        })
        .collect();
    let mut buf = Vec::new();
    write_trace(&mut buf, &records).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let parsed: Vec<TraceRecord> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(parsed, records);
    assert!(parsed.last().unwrap().success);
}

fn random_action(r: &mut impl Rng) -> PlanarAction {
    PlanarAction {
        dx: r.random_range(-0.05..0.05),
        dy: r.random_range(-0.05..0.05),
        dyaw: r.random_range(-0.5..0.5),
        gripper: if r.random::<f64>() < 0.3 { 1.0 } else { 0.0 },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn fuzzed_rollouts_obey_audit(seed in any::<u64>(), expert_bias in 0.0f64..1.0) {
        let task = TaskConfig::default();
        let mut r = rng(seed);
        let mut s = reset(&task, seed).unwrap();
        while !s.is_done(&task) {
            let a = if r.random::<f64>() < expert_bias { expert_action(&s, &task) } else { random_action(&mut r) };
            let out = step(&s, &a, &task);
            prop_assert_eq!(out, step(&s, &a, &task));
            let n = out.state;
            if n.held && !s.held {
                prop_assert!(!s.gripper_closed && n.gripper_closed);
                prop_assert!(dist(n.gripper_xy(), s.object) <= task.grasp_radius);
            }
            prop_assert!((0.0..=1.0).contains(&n.gripper.x) && (0.0..=1.0).contains(&n.gripper.y));
            prop_assert!((0.0..=1.0).contains(&n.object[0]) && (0.0..=1.0).contains(&n.object[1]));
            let moved = dist(n.gripper_xy(), s.gripper_xy());
            prop_assert!(moved <= task.action_clip + 1e-12);
            if n.success {
                prop_assert!(dist(n.object, n.goal) <= task.place_radius);
            }
            s = n;
        }
    }

    #[test]
    fn expert_chunks_stay_within_clip(seed in any::<u64>(), h in 1usize..=32) {
        let task = TaskConfig::default();
        let mut env = Env::new(task, seed).unwrap();
        let mut r = rng(seed);
        let (states, _) = expert_rollout(&mut env, 0.2, &mut r);
        let s: &EnvState = &states[r.random_range(0..states.len())];
        let chunk = expert_action_chunk(s, h, &task);
        prop_assert_eq!(chunk.horizon(), h);
        for row in chunk.rows() {
            prop_assert!((row[0] * row[0] + row[1] * row[1]).sqrt() <= 1.0 + 1e-12);
            prop_assert!(row[2].abs() <= task.yaw_clip + 1e-12);
        }
    }
}
