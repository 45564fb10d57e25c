use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aac_core::action::{min_magnitude_bound, rotation_magnitude, translation_magnitude};
use aac_core::entropy::{average_entropy_curve, discrete_entropy, gaussian_differential_entropy};
use aac_core::policy::{
    generate_demos, read_demos, save_model, train, training_pairs, write_demos, DemoConfig,
    FlowConfig, FlowModel, Observation, Optimizer, TrainConfig,
};
use aac_core::runner::{
    episodes_with_mode, export_heatmap, read_decisions_csv, render_table, run_suite, SuiteConfig,
    HEATMAP_BUCKET,
};
use aac_core::selector::{combine, max_difference_point};
use aac_core::sim::{TaskConfig, OBSERVATION_DIM};
use aac_core::{ActionChunk, ActionSpaceSpec, EntropyConfig, EntropyProfile, MagnitudeParams};
use clap::{Parser, Subcommand};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(
    name = "aac",
    version,
    about = "Entropy-driven adaptive action chunking experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate scripted-expert demonstrations as JSON lines.
    Demos {
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Expert translation noise as a fraction of the per-step clip.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Per-step actuation noise of the simulator (meters).
        #[arg(long, default_value_t = 0.0)]
        actuation_noise: f64,
        #[arg(long, default_value = "clean")]
        variant: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a flow-matching chunk policy.
    Train {
        /// Demo file; 50 fresh clean demos when omitted.
        #[arg(long)]
        demos: Option<PathBuf>,
        #[arg(long, default_value_t = 16)]
        horizon: usize,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        #[arg(long, default_value_t = 256)]
        batch: usize,
        #[arg(long, default_value_t = 0.02)]
        lr: f64,
        #[arg(long, value_delimiter = ',', default_values_t = vec![384, 384])]
        hidden: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        euler: usize,
        /// Plain gradient descent instead of Adam.
        #[arg(long)]
        sgd: bool,
        #[arg(long)]
        no_decay: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        init_seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment suite described by a config file.
    Run {
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Rebuild a chunk-size heatmap from decisions.csv.
    Heatmap {
        decisions: PathBuf,
        /// episodes.csv used to keep only one mode.
        #[arg(long)]
        episodes: Option<PathBuf>,
        #[arg(long, default_value = "adaptive")]
        mode: String,
        #[arg(long, default_value_t = 16)]
        horizon: usize,
        #[arg(long, default_value_t = HEATMAP_BUCKET)]
        bucket: usize,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check core routines against small independent reference computations.
    Selftest,
}

type Check = fn(&mut ChaCha8Rng) -> Result<String, String>;

type CliResult = Result<ExitCode, Box<dyn std::error::Error>>;

fn create(path: &Path) -> io::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn demos(
    count: usize,
    seed: u64,
    noise: f64,
    actuation_noise: f64,
    variant: &str,
    out: &Path,
) -> CliResult {
    let task = TaskConfig {
        actuation_noise,
        ..TaskConfig::default()
    };
    task.validate()?;
    let demos = generate_demos(
        &task,
        variant,
        &DemoConfig {
            count,
            action_noise: noise,
            seed,
        },
    )?;
    let mut w = create(out)?;
    write_demos(&mut w, &demos)?;
    w.flush()?;
    let ok = demos.iter().filter(|d| d.success).count();
    println!(
        "wrote {} demos ({ok} successful) to {}",
        demos.len(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn train_cmd(
    demos_path: Option<&Path>,
    horizon: usize,
    steps: usize,
    batch: usize,
    lr: f64,
    hidden: Vec<usize>,
    euler: usize,
    sgd: bool,
    no_decay: bool,
    seed: u64,
    init_seed: u64,
    out: &Path,
) -> CliResult {
    let demos = match demos_path {
        Some(p) => read_demos(BufReader::new(File::open(p)?))?,
        None => generate_demos(&TaskConfig::default(), "clean", &DemoConfig::default())?,
    };
    let pairs = training_pairs(&demos, horizon)?;
    let flow = FlowConfig {
        hidden,
        euler_steps: euler,
        ..FlowConfig::default()
    };
    let mut model = FlowModel::new(
        ActionSpaceSpec::planar(),
        horizon,
        OBSERVATION_DIM,
        &flow,
        init_seed,
    )?;
    let cfg = TrainConfig {
        steps,
        batch_size: batch,
        learning_rate: lr,
        optimizer: if sgd { Optimizer::Sgd } else { Optimizer::Adam },
        cosine_decay: !no_decay,
        seed,
    };
    println!(
        "training on {} pairs from {} demos",
        pairs.len(),
        demos.len()
    );
    let losses = train(&mut model, &pairs, &cfg)?;
    let stride = (steps / 10).max(1);
    for (i, chunk) in losses.chunks(stride).enumerate() {
        let mean = chunk.iter().sum::<f64>() / chunk.len() as f64;
        println!(
            "steps {:>6}..{:<6} loss {mean:.5}",
            i * stride,
            i * stride + chunk.len()
        );
    }
    save_model(out, &model)?;
    println!("saved model to {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn run_cmd(config: &Path, output: Option<PathBuf>) -> CliResult {
    let mut cfg = SuiteConfig::parse(&std::fs::read_to_string(config)?)?;
    if output.is_some() {
        cfg.output = output;
    }
    let outcome = run_suite(&cfg)?;
    print!("{}", render_table(&outcome.report));
    if let Some(r) = outcome.report.timing_ratio_n20_n1 {
        println!("N=20 / N=1 cost ratio {r:.2}");
    }
    if let Some(dir) = &cfg.output {
        println!("outputs in {}", dir.display());
    }
    if outcome.report.aborted > 0 {
        eprintln!(
            "{} of {} episodes aborted",
            outcome.report.aborted, outcome.report.episodes
        );
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn heatmap_cmd(
    decisions: &Path,
    episodes: Option<&Path>,
    mode: &str,
    horizon: usize,
    bucket: usize,
    out: Option<&Path>,
) -> CliResult {
    let keep: Option<BTreeSet<usize>> = match episodes {
        Some(p) => Some(episodes_with_mode(BufReader::new(File::open(p)?), mode)?),
        None => None,
    };
    let logs = read_decisions_csv(BufReader::new(File::open(decisions)?), keep.as_ref())?;
    match out {
        Some(p) => {
            let mut w = create(p)?;
            export_heatmap(&mut w, &logs, horizon, bucket)?;
            w.flush()?;
        }
        None => export_heatmap(&mut io::stdout().lock(), &logs, horizon, bucket)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn det(m: &[Vec<f64>]) -> f64 {
    match m.len() {
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        _ => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
    }
}

fn entropy_reference(rows: &[Vec<f64>], ridge: f64) -> f64 {
    let (n, k) = (rows.len() as f64, rows[0].len());
    let mean: Vec<f64> = (0..k)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    let cov: Vec<Vec<f64>> = (0..k)
        .map(|a| {
            (0..k)
                .map(|b| {
                    let s: f64 = rows
                        .iter()
                        .map(|r| (r[a] - mean[a]) * (r[b] - mean[b]))
                        .sum();
                    s / (n - 1.0) + if a == b { ridge } else { 0.0 }
                })
                .collect()
        })
        .collect();
    0.5 * (k as f64 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln() + det(&cov).ln())
}

fn check_entropy(r: &mut ChaCha8Rng) -> Result<String, String> {
    let cfg = EntropyConfig::default();
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let k = r.random_range(1..=3);
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..k).map(|_| r.random_range(-2.0..2.0)).collect())
            .collect();
        let a = Array2::from_shape_fn((20, k), |(i, j)| rows[i][j]);
        let got = gaussian_differential_entropy(a.view(), &cfg).map_err(|e| e.to_string())?;
        worst = worst.max((got - entropy_reference(&rows, cfg.ridge)).abs());
    }
    for n in 1..=64usize {
        for c in 0..=n {
            let p = c as f64 / n as f64;
            let want = [p, 1.0 - p]
                .iter()
                .filter(|x| **x > 0.0)
                .map(|x| -x * x.ln())
                .sum::<f64>();
            worst = worst.max((discrete_entropy(c, n).map_err(|e| e.to_string())? - want).abs());
        }
    }
    if worst < 1e-9 {
        Ok(format!("max deviation {worst:.1e}"))
    } else {
        Err(format!("max deviation {worst:.1e}"))
    }
}

fn check_selector(r: &mut ChaCha8Rng) -> Result<String, String> {
    let raw = |e: &[f64]| {
        max_difference_point(&average_entropy_curve(&EntropyProfile::from_totals(
            e.to_vec(),
        )))
    };
    if raw(&[1.0, 1.0, 5.0, 5.0]) != 2 || combine(2, 1, 4) != 2 {
        return Err("worked example".into());
    }
    for _ in 0..1000 {
        let e: Vec<f64> = (0..r.random_range(2..20))
            .map(|_| r.random_range(-5.0..5.0))
            .collect();
        let means: Vec<f64> = (1..=e.len())
            .map(|h| e[..h].iter().sum::<f64>() / h as f64)
            .collect();
        let mut best = 1;
        for h in 1..e.len() {
            if means[h] - means[h - 1] > means[best] - means[best - 1] {
                best = h;
            }
        }
        if raw(&e) != best {
            return Err(format!("scan disagrees on {e:?}"));
        }
    }
    Ok("hand case and 1000 scans agree".into())
}

fn check_magnitudes(r: &mut ChaCha8Rng) -> Result<String, String> {
    let spec = ActionSpaceSpec::planar();
    for _ in 0..500 {
        let rows: Vec<Vec<f64>> = (0..8)
            .map(|_| {
                vec![
                    r.random_range(-1.0..1.0),
                    r.random_range(-1.0..1.0),
                    r.random_range(-0.4..0.4),
                    0.0,
                ]
            })
            .collect();
        let chunk = ActionChunk::from_rows(&rows, &spec).map_err(|e| e.to_string())?;
        let mut sum = [0.0; 3];
        for (l, row) in rows.iter().enumerate() {
            for (s, v) in sum.iter_mut().zip(row) {
                *s += v;
            }
            let t = translation_magnitude(&chunk, &spec, l + 1).map_err(|e| e.to_string())?;
            let yaw = rotation_magnitude(&chunk, &spec, l + 1).map_err(|e| e.to_string())?;
            let wrapped = (sum[2] + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI)
                - std::f64::consts::PI;
            if (t - sum[0].hypot(sum[1])).abs() > 1e-12 || (yaw - wrapped.abs()).abs() > 1e-9 {
                return Err(format!("prefix {} disagrees", l + 1));
            }
        }
    }
    let zeros = ActionChunk::zeros(16, &spec, 0.0);
    if min_magnitude_bound(&zeros, &spec, &MagnitudeParams::new(3.0, false).unwrap()) != 16 {
        return Err("clamp branch".into());
    }
    Ok("planar prefixes and clamp agree".into())
}

fn check_gradient(_: &mut ChaCha8Rng) -> Result<String, String> {
    let cfg = FlowConfig {
        hidden: vec![5, 5],
        ..FlowConfig::default()
    };
    let spec = ActionSpaceSpec::planar();
    let mut model = FlowModel::new(spec, 2, 3, &cfg, 4).map_err(|e| e.to_string())?;
    let pairs = vec![
        (
            Observation::new(vec![0.1, -0.3, 0.7]),
            ActionChunk::from_rows(
                &[vec![0.2, -0.1, 0.05, 1.0], vec![0.1, 0.4, -0.2, 0.0]],
                &spec,
            )
            .unwrap(),
        ),
        (
            Observation::new(vec![-0.5, 0.2, 0.0]),
            ActionChunk::from_rows(
                &[vec![-0.3, 0.3, 0.1, 0.0], vec![0.0, 0.2, 0.0, 1.0]],
                &spec,
            )
            .unwrap(),
        ),
    ];
    let batch = model.make_batch(&pairs, 5).map_err(|e| e.to_string())?;
    let analytic = model.loss_and_gradient(&batch).1.flat_parameters();
    let params = model.net.flat_parameters();
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        let mut p = params.clone();
        p[i] += 1e-5;
        model.net.set_flat_parameters(&p);
        let up = model.loss(&batch);
        p[i] = params[i] - 1e-5;
        model.net.set_flat_parameters(&p);
        let numeric = (up - model.loss(&batch)) / 2e-5;
        worst = worst
            .max((numeric - analytic[i]).abs() / numeric.abs().max(analytic[i].abs()).max(1e-6));
    }
    if worst < 1e-4 {
        Ok(format!("max relative error {worst:.1e}"))
    } else {
        Err(format!("max relative error {worst:.1e}"))
    }
}

fn selftest() -> CliResult {
    let mut r = ChaCha8Rng::seed_from_u64(2024);
    let checks: [(&str, Check); 4] = [
        ("entropy", check_entropy),
        ("selector", check_selector),
        ("magnitudes", check_magnitudes),
        ("gradient", check_gradient),
    ];
    let mut failed = 0;
    for (name, f) in checks {
        match f(&mut r) {
            Ok(msg) => println!("{name:<12} PASS  {msg}"),
            Err(msg) => {
                failed += 1;
                println!("{name:<12} FAIL  {msg}");
            }
        }
    }
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Demos {
            count,
            seed,
            noise,
            actuation_noise,
            variant,
            out,
        } => demos(count, seed, noise, actuation_noise, &variant, &out),
        Command::Train {
            demos,
            horizon,
            steps,
            batch,
            lr,
            hidden,
            euler,
            sgd,
            no_decay,
            seed,
            init_seed,
            out,
        } => train_cmd(
            demos.as_deref(),
            horizon,
            steps,
            batch,
            lr,
            hidden,
            euler,
            sgd,
            no_decay,
            seed,
            init_seed,
            &out,
        ),
        Command::Run { config, output } => run_cmd(&config, output),
        Command::Heatmap {
            decisions,
            episodes,
            mode,
            horizon,
            bucket,
            out,
        } => heatmap_cmd(
            &decisions,
            episodes.as_deref(),
            &mode,
            horizon,
            bucket,
            out.as_deref(),
        ),
        Command::Selftest => selftest(),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(2)
    })
}
