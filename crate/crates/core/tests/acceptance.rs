//! End-to-end acceptance checks, one PASS/FAIL line per criterion.

mod common;

use std::fs;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use aac_core::action::{
    gripper_magnitude, min_magnitude_bound, rotation_magnitude, total_magnitude,
    translation_magnitude,
};
use aac_core::entropy::{average_entropy_curve, discrete_entropy, gaussian_differential_entropy};
use aac_core::policy::{
    generate_demos, save_model, train, DemoConfig, FlowConfig, FlowModel, NoiseSchedule,
    Observation, SyntheticSampler, TrainConfig,
};
use aac_core::runner::{run_episode, run_suite, ExecutionMode, SuiteConfig, SuiteReport};
use aac_core::selector::{combine, max_difference_point};
use aac_core::sim::{Env, Phase, TaskConfig, OBSERVATION_DIM};
use aac_core::{ActionChunk, ActionSpaceSpec, EntropyConfig, EntropyProfile, MagnitudeParams};
use common::*;
use ndarray::Array2;
use rand::Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn raw_argmax(e: &[f64]) -> usize {
    max_difference_point(&average_entropy_curve(&EntropyProfile::from_totals(
        e.to_vec(),
    )))
}

fn random_curve(r: &mut impl Rng) -> Vec<f64> {
    let len = r.random_range(1..=24);
    (0..len).map(|_| r.random_range(-10.0..10.0)).collect()
}

fn entropy_oracle() -> Outcome {
    let start = Instant::now();
    let cfg = EntropyConfig::default();
    let mut r = rng(1);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let k = r.random_range(1..=3);
        let scale = 10f64.powf(r.random_range(-1.0..1.0));
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..k).map(|_| scale * normal(&mut r)).collect())
            .collect();
        let samples = Array2::from_shape_fn((20, k), |(i, j)| rows[i][j]);
        let got = gaussian_differential_entropy(samples.view(), &cfg).map_err(|e| e.to_string())?;
        worst = worst.max((got - gaussian_entropy_oracle(&rows, cfg.ridge)).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst < 1e-9 && secs < 10.0,
        format!("max |delta| = {worst:.2e} nats over 10^4 sets in {secs:.2} s"),
    )
}

fn discrete_exactness() -> Outcome {
    let mut worst = 0.0f64;
    for n in 1..=64usize {
        for c in 0..=n {
            let h = discrete_entropy(c, n).map_err(|e| e.to_string())?;
            worst = worst.max((h - discrete_entropy_oracle(c, n)).abs());
            if h != discrete_entropy(n - c, n).unwrap() || h > std::f64::consts::LN_2 {
                return Err(format!("symmetry or bound broken at c = {c}, N = {n}"));
            }
        }
        if n % 2 == 0 && discrete_entropy(n / 2, n).unwrap() != std::f64::consts::LN_2 {
            return Err(format!("maximum is not exactly ln 2 at N = {n}"));
        }
    }
    check(
        worst < 1e-12,
        format!("max |delta| = {worst:.2e}, symmetry and ln 2 maximum exact"),
    )
}

fn selector_hand_case() -> Outcome {
    let raw = raw_argmax(&[1.0, 1.0, 5.0, 5.0]);
    let h = combine(raw, 1, 4);
    if raw != 2 || h != 2 {
        return Err(format!("hand case gave raw {raw}, h* {h}"));
    }
    let mut r = rng(3);
    let mismatches = (0..1000)
        .filter(|_| {
            let e = random_curve(&mut r);
            raw_argmax(&e) != argmax_oracle(&prefix_means_oracle(&e))
        })
        .count();
    check(
        mismatches == 0,
        format!("raw 2, h* 2; {mismatches}/1000 scan mismatches"),
    )
}

fn selector_invariances() -> Outcome {
    let mut r = rng(4);
    let mut broken = 0;
    for _ in 0..1000 {
        let e = random_curve(&mut r);
        let c = r.random_range(-50.0..50.0);
        let s = 10f64.powf(r.random_range(-2.0..2.0));
        let base = raw_argmax(&e);
        let shifted: Vec<f64> = e.iter().map(|x| x + c).collect();
        let scaled: Vec<f64> = e.iter().map(|x| x * s).collect();
        if raw_argmax(&shifted) != base || raw_argmax(&scaled) != base {
            broken += 1;
        }
    }
    check(
        broken == 0,
        format!("{broken}/1000 curves changed under offset or scaling"),
    )
}

fn spatial(rows: &[[f64; 7]]) -> ActionChunk {
    let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
    ActionChunk::from_rows(&rows, &ActionSpaceSpec::spatial()).unwrap()
}

fn magnitude_suite() -> Outcome {
    let s = ActionSpaceSpec::spatial();
    let p = ActionSpaceSpec::planar();
    let params = MagnitudeParams::new(3.0, false).unwrap();
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;

    let t = spatial(&[
        [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    ]);
    let back = spatial(&[
        [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    ]);
    let rot = spatial(&[
        [0.0, 0.0, 0.0, 0.0, 0.0, 0.3, 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.0, 0.3, 0.0],
    ]);
    let grip_rows: Vec<Vec<f64>> = vec![vec![0.0; 4], vec![0.0; 4], vec![0.0, 0.0, 0.0, 1.0]];
    let grip = ActionChunk::from_rows(&grip_rows, &p).unwrap();
    let mixed = spatial(&[
        [1.0, 0.0, 0.0, 0.0, 0.0, 0.3, 0.0],
        [0.0, 1.0, 0.0, 0.0, 0.0, 0.3, 1.0],
    ]);
    let steps: Vec<[f64; 7]> = [0.5, 0.7, 2.2, 0.6]
        .iter()
        .map(|&x| [x, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
        .collect();
    let examples = [
        close(translation_magnitude(&t, &s, 2).unwrap(), 2f64.sqrt()),
        translation_magnitude(&back, &s, 2).unwrap() == 0.0,
        close(rotation_magnitude(&rot, &s, 2).unwrap(), 0.6),
        gripper_magnitude(&grip, &p, 3, &params).unwrap() == 1.0,
        gripper_magnitude(&grip, &p, 2, &params).unwrap() == 0.0,
        close(
            total_magnitude(&mixed, &s, 2, &params).unwrap(),
            2f64.sqrt() + 1.6,
        ),
        min_magnitude_bound(&spatial(&steps), &s, &params) == 3,
        min_magnitude_bound(&ActionChunk::zeros(16, &s, 0.0), &s, &params) == 16,
    ];
    if let Some(i) = examples.iter().position(|ok| !ok) {
        return Err(format!("worked example {i} failed"));
    }

    let mut r = rng(5);
    let mut worst = 0.0f64;
    let mut xi_mismatch = 0;
    let mut clamped = 0;
    for _ in 0..1000 {
        let scale = r.random_range(0.05..1.5);
        let c = random_chunk(&mut r, &s, 8, scale);
        let l = r.random_range(1..=8);
        worst = worst.max(
            (rotation_magnitude(&c, &s, l).unwrap() - rotation_magnitude_oracle(&c, &s, l)).abs(),
        );
        let alpha = r.random_range(0.0..30.0);
        let prior = r.random::<bool>();
        let xi = min_magnitude_bound(&c, &s, &MagnitudeParams::new(alpha, prior).unwrap());
        let want = xi_oracle(&c, &s, alpha, prior);
        xi_mismatch += usize::from(xi != want);
        let exceeds = (1..=8).any(|l| {
            translation_magnitude_oracle(&c, &s, l)
                + rotation_magnitude_oracle(&c, &s, l)
                + gripper_magnitude_oracle(&c, &s, l, prior)
                > alpha
        });
        clamped += usize::from(!exceeds);
    }
    check(
        worst < 1e-9 && xi_mismatch == 0 && clamped > 0,
        format!("examples ok; rotation max |delta| {worst:.2e}; xi mismatches {xi_mismatch}/1000 ({clamped} clamp cases)"),
    )
}

struct Trained {
    model_path: PathBuf,
}

fn flow_gradient_and_training(dir: &Path) -> (Outcome, Option<Trained>) {
    let start = Instant::now();
    let small = FlowConfig {
        hidden: vec![6, 6],
        ..FlowConfig::default()
    };
    let spec = ActionSpaceSpec::planar();
    let mut m = FlowModel::new(spec, 2, 3, &small, 1).unwrap();
    let mut r = rng(2);
    let pairs: Vec<(Observation, ActionChunk)> = (0..5)
        .map(|_| {
            let obs = Observation::new((0..3).map(|_| normal(&mut r)).collect());
            (obs, random_chunk(&mut r, &spec, 2, 0.5))
        })
        .collect();
    let batch = m.make_batch(&pairs, 3).unwrap();
    let analytic = m.loss_and_gradient(&batch).1.flat_parameters();
    let params = m.net.flat_parameters();
    let h = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        let mut p = params.clone();
        p[i] += h;
        m.net.set_flat_parameters(&p);
        let up = m.loss(&batch);
        p[i] = params[i] - h;
        m.net.set_flat_parameters(&p);
        let down = m.loss(&batch);
        let numeric = (up - down) / (2.0 * h);
        worst = worst
            .max((numeric - analytic[i]).abs() / numeric.abs().max(analytic[i].abs()).max(1e-6));
    }

    let task = TaskConfig::default();
    let demos = generate_demos(&task, "clean", &DemoConfig::default()).unwrap();
    let horizon = 16;
    let pairs = aac_core::policy::training_pairs(&demos, horizon).unwrap();
    let mut model =
        FlowModel::new(spec, horizon, OBSERVATION_DIM, &FlowConfig::default(), 1).unwrap();
    let held: Vec<_> = pairs.iter().step_by(3).cloned().collect();
    let eval = model.make_batch(&held, 77).unwrap();
    let before = model.loss(&eval);
    let losses = match train(&mut model, &pairs, &TrainConfig::default()) {
        Ok(l) => l,
        Err(e) => return (Err(format!("training failed: {e}")), None),
    };
    let after = model.loss(&eval);
    let ratio = before / after;
    let tail = losses[losses.len() - 100..].iter().sum::<f64>() / 100.0;
    let secs = start.elapsed().as_secs_f64();
    let model_path = dir.join("flow.bin");
    save_model(&model_path, &model).unwrap();
    let outcome = check(
        worst < 1e-4 && ratio >= 10.0 && secs < 120.0,
        format!(
            "gradient max rel err {worst:.2e} over {} params; loss {before:.4} -> {after:.4} ({ratio:.1}x, step-0 {:.4} / last-100 {tail:.4} = {:.1}x) in {secs:.1} s",
            params.len(),
            losses[0],
            losses[0] / tail
        ),
    );
    (outcome, Some(Trained { model_path }))
}

fn phase_behavior() -> Outcome {
    let start = Instant::now();
    let task = TaskConfig::default();
    let sampler = SyntheticSampler::new(task, 16, NoiseSchedule::contact_heavy()).unwrap();
    let mut wins = 0;
    let mut decision_wins = 0;
    for ep in 0..100u64 {
        let mut env = Env::new(task, ep).unwrap();
        let log = run_episode(
            &mut env,
            &sampler,
            ExecutionMode::Adaptive { alpha: 3.0, n: 20 },
            ep + 1000,
        );
        let steps = log.step_phase_means();
        if let (Some(g), Some(t)) = (steps.get(&Phase::Grasp), steps.get(&Phase::Transport)) {
            wins += usize::from(t > g);
        }
        let decisions = log.decision_phase_means();
        if let (Some(g), Some(t)) = (
            decisions.get(&Phase::Grasp),
            decisions.get(&Phase::Transport),
        ) {
            decision_wins += usize::from(t > g);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        wins >= 95 && secs < 60.0,
        format!(
            "transport h* > grasp h* in {wins}/100 episodes (per executed step; per decision {decision_wins}/100) in {secs:.1} s"
        ),
    )
}

fn flow_suite(model: &Path, out: &Path, seeds: usize, timing: bool) -> SuiteConfig {
    let mut text = format!(
        "mode = adaptive, fixed\nh = 2, 4, 8, 12, 16\nN = 20\nalpha = 3\nseeds = {seeds}\nseed = 11\n\
         tasks = clean, perturbed\nperturbed.actuation_noise = 0.02\nsampler = flow\nmodel = {}\noutput = {}\n",
        model.display(),
        out.display()
    );
    if timing {
        text.push_str("timing_n = 1, 5, 10, 20, 30, 40\ntiming_decisions = 50\n");
    }
    SuiteConfig::parse(&text).unwrap()
}

fn end_to_end(report: &SuiteReport, secs: f64) -> Outcome {
    let rate = |label: &str| {
        report
            .overall
            .iter()
            .find(|r| r.mode == label)
            .map(|r| (r.success_rate, r.trials))
    };
    let (adaptive, trials) = rate("adaptive").ok_or("no adaptive row")?;
    let fixed: Vec<(String, f64)> = [2, 4, 8, 12, 16]
        .iter()
        .map(|h| {
            let label = format!("fixed-{h}");
            (label.clone(), rate(&label).map(|r| r.0).unwrap_or(f64::NAN))
        })
        .collect();
    let mean = fixed.iter().map(|f| f.1).sum::<f64>() / fixed.len() as f64;
    let best = fixed.iter().map(|f| f.1).fold(f64::NEG_INFINITY, f64::max);
    let worst = fixed.iter().map(|f| f.1).fold(f64::INFINITY, f64::min);
    let table: Vec<String> = fixed.iter().map(|(l, v)| format!("{l} {v:.1}")).collect();
    check(
        trials >= 200 && adaptive >= mean && adaptive >= best - 3.0 && adaptive - worst >= 5.0 && secs < 900.0,
        format!(
            "adaptive {adaptive:.1}% over {trials} trials; {}; fixed mean {mean:.1}, best {best:.1}, worst {worst:.1}; {secs:.0} s",
            table.join(", ")
        ),
    )
}

fn timing_scaling(summary: &Path) -> Outcome {
    let text = fs::read_to_string(summary).map_err(|e| e.to_string())?;
    let report: SuiteReport = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let ratio = report
        .timing_ratio_n20_n1
        .ok_or("summary.json has no N=20/N=1 ratio")?;
    let rows: Vec<String> = report
        .timing
        .iter()
        .map(|t| format!("N={} {:.2} ms", t.n, t.ms_per_decision))
        .collect();
    check(
        ratio <= 5.0,
        format!("N=20 / N=1 = {ratio:.2}; {}", rows.join(", ")),
    )
}

fn strip_column(csv: &str, name: &str) -> String {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let skip = header.iter().position(|h| *h == name);
    let keep = |line: &str| -> String {
        line.split(',')
            .enumerate()
            .filter(|(i, _)| Some(*i) != skip)
            .map(|(_, f)| f)
            .collect::<Vec<_>>()
            .join(",")
    };
    std::iter::once(keep(&header.join(",")))
        .chain(lines.map(keep))
        .collect::<Vec<_>>()
        .join("\n")
}

fn replay(model: &Path, dir: &Path) -> Outcome {
    let mut files = Vec::new();
    for run in ["a", "b"] {
        let out = dir.join(format!("replay-{run}"));
        run_suite(&flow_suite(model, &out, 10, false)).map_err(|e| e.to_string())?;
        let decisions = fs::read(out.join("decisions.csv")).map_err(|e| e.to_string())?;
        let episodes = fs::read_to_string(out.join("episodes.csv")).map_err(|e| e.to_string())?;
        files.push((decisions, strip_column(&episodes, "ms_per_decision_mean")));
    }
    check(
        files[0] == files[1],
        format!(
            "decisions.csv ({} bytes) and episodes.csv identical across two runs",
            files[0].0.len()
        ),
    )
}

fn run(label: usize, f: impl FnOnce() -> Outcome) -> bool {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    report(label, outcome)
}

/// Writes past the test harness's output capture so the lines always show.
fn emit(line: &str) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
}

fn report(label: usize, outcome: Outcome) -> bool {
    match outcome {
        Ok(detail) => {
            emit(&format!("criterion {label:>2}: PASS  {detail}"));
            true
        }
        Err(detail) => {
            emit(&format!("criterion {label:>2}: FAIL  {detail}"));
            false
        }
    }
}

#[test]
fn acceptance() {
    let dir = tempfile::tempdir().unwrap();
    let mut results = vec![
        run(1, entropy_oracle),
        run(2, discrete_exactness),
        run(3, selector_hand_case),
        run(4, selector_invariances),
        run(5, magnitude_suite),
    ];
    let (outcome, trained) = flow_gradient_and_training(dir.path());
    results.push(report(6, outcome));
    results.push(run(7, phase_behavior));

    match trained {
        Some(t) => {
            let out = dir.path().join("suite");
            let start = Instant::now();
            let suite = run_suite(&flow_suite(&t.model_path, &out, 100, true));
            let secs = start.elapsed().as_secs_f64();
            match suite {
                Ok(s) => {
                    results.push(report(8, end_to_end(&s.report, secs)));
                    results.push(run(9, || timing_scaling(&out.join("summary.json"))));
                }
                Err(e) => {
                    results.push(report(8, Err(format!("suite failed: {e}"))));
                    results.push(report(9, Err("no summary.json".into())));
                }
            }
            results.push(run(10, || replay(&t.model_path, dir.path())));
        }
        None => {
            for c in 8..=10 {
                results.push(report(c, Err("no trained model".into())));
            }
        }
    }
    let failed: Vec<usize> = results
        .iter()
        .enumerate()
        .filter(|(_, ok)| !**ok)
        .map(|(i, _)| i + 1)
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
