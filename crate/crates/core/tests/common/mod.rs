//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use aac_core::{ActionChunk, ActionSpaceSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Determinant by Laplace expansion along the first row.
pub fn cofactor_det(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    match n {
        0 => 1.0,
        1 => m[0][0],
        _ => (0..n)
            .map(|j| {
                let minor: Vec<Vec<f64>> = m[1..]
                    .iter()
                    .map(|row| {
                        row.iter()
                            .enumerate()
                            .filter(|(c, _)| *c != j)
                            .map(|(_, v)| *v)
                            .collect()
                    })
                    .collect();
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * m[0][j] * cofactor_det(&minor)
            })
            .sum(),
    }
}

/// Gaussian differential entropy from an explicitly formed covariance.
pub fn gaussian_entropy_oracle(samples: &[Vec<f64>], ridge: f64) -> f64 {
    let n = samples.len();
    let k = samples[0].len();
    let mean: Vec<f64> = (0..k)
        .map(|j| samples.iter().map(|s| s[j]).sum::<f64>() / n as f64)
        .collect();
    let mut cov = vec![vec![0.0; k]; k];
    for a in 0..k {
        for b in 0..k {
            let s: f64 = samples
                .iter()
                .map(|x| (x[a] - mean[a]) * (x[b] - mean[b]))
                .sum();
            cov[a][b] = s / (n - 1) as f64;
        }
        cov[a][a] += ridge;
    }
    0.5 * (k as f64 * (2.0 * PI * std::f64::consts::E).ln() + cofactor_det(&cov).ln())
}

pub fn discrete_entropy_oracle(c: usize, n: usize) -> f64 {
    let p = c as f64 / n as f64;
    let mut h = 0.0;
    if c > 0 {
        h -= p * p.ln();
    }
    if c < n {
        h -= (1.0 - p) * (1.0 - p).ln();
    }
    h
}

pub fn prefix_means_oracle(e: &[f64]) -> Vec<f64> {
    (1..=e.len())
        .map(|h| e[..h].iter().sum::<f64>() / h as f64)
        .collect()
}

/// Smallest `h` in `1..H` attaining the maximum of `v[h] - v[h-1]` (1-based curve).
pub fn argmax_oracle(curve: &[f64]) -> usize {
    if curve.len() < 2 {
        return 1;
    }
    let diffs: Vec<f64> = (1..curve.len()).map(|h| curve[h] - curve[h - 1]).collect();
    let best = diffs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    diffs.iter().position(|d| *d == best).unwrap() + 1
}

pub type Mat3 = [[f64; 3]; 3];

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

/// Rodrigues formula for a rotation vector.
pub fn rotation_matrix(v: [f64; 3]) -> Mat3 {
    let theta = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if theta == 0.0 {
        return [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    }
    let [x, y, z] = [v[0] / theta, v[1] / theta, v[2] / theta];
    let (s, c) = theta.sin_cos();
    let t = 1.0 - c;
    [
        [c + x * x * t, x * y * t - z * s, x * z * t + y * s],
        [y * x * t + z * s, c + y * y * t, y * z * t - x * s],
        [z * x * t - y * s, z * y * t + x * s, c + z * z * t],
    ]
}

/// Rotation angle in `[0, pi]` from the skew and trace parts of `r`.
pub fn matrix_angle(r: &Mat3) -> f64 {
    let sx = r[2][1] - r[1][2];
    let sy = r[0][2] - r[2][0];
    let sz = r[1][0] - r[0][1];
    let trace = r[0][0] + r[1][1] + r[2][2];
    (sx * sx + sy * sy + sz * sz).sqrt().atan2(trace - 1.0)
}

fn rotation_vector(row: &[f64], spec: &ActionSpaceSpec) -> [f64; 3] {
    let t = spec.translation_dims;
    match spec.rotation_dims {
        0 => [0.0; 3],
        1 => [0.0, 0.0, row[t]],
        _ => [row[t], row[t + 1], row[t + 2]],
    }
}

pub fn rotation_magnitude_oracle(chunk: &ActionChunk, spec: &ActionSpaceSpec, l: usize) -> f64 {
    let mut r: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for i in 0..l {
        let row: Vec<f64> = chunk.continuous().row(i).to_vec();
        r = mat_mul(&r, &rotation_matrix(rotation_vector(&row, spec)));
    }
    matrix_angle(&r)
}

pub fn translation_magnitude_oracle(chunk: &ActionChunk, spec: &ActionSpaceSpec, l: usize) -> f64 {
    let mut sum = vec![0.0; spec.translation_dims];
    for i in 0..l {
        for (j, s) in sum.iter_mut().enumerate() {
            *s += chunk.continuous()[[i, j]];
        }
    }
    sum.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn gripper_magnitude_oracle(
    chunk: &ActionChunk,
    spec: &ActionSpaceSpec,
    l: usize,
    prior_closed: bool,
) -> f64 {
    if !spec.has_gripper {
        return 0.0;
    }
    let mut states = vec![prior_closed];
    states.extend((0..l).map(|i| chunk.gripper()[i] >= spec.gripper_threshold));
    if states.windows(2).any(|w| w[0] != w[1]) {
        1.0
    } else {
        0.0
    }
}

pub fn xi_oracle(
    chunk: &ActionChunk,
    spec: &ActionSpaceSpec,
    alpha: f64,
    prior_closed: bool,
) -> usize {
    let h = chunk.horizon();
    for l in 1..=h {
        let m = translation_magnitude_oracle(chunk, spec, l)
            + rotation_magnitude_oracle(chunk, spec, l)
            + gripper_magnitude_oracle(chunk, spec, l, prior_closed);
        if m > alpha {
            return l;
        }
    }
    h
}

pub fn random_chunk(
    rng: &mut impl Rng,
    spec: &ActionSpaceSpec,
    horizon: usize,
    scale: f64,
) -> ActionChunk {
    let rows: Vec<Vec<f64>> = (0..horizon)
        .map(|_| {
            let mut row: Vec<f64> = (0..spec.continuous_dims())
                .map(|_| scale * normal(rng))
                .collect();
            if spec.has_gripper {
                row.push(if rng.random::<bool>() { 1.0 } else { 0.0 });
            }
            row
        })
        .collect();
    ActionChunk::from_rows(&rows, spec).unwrap()
}
