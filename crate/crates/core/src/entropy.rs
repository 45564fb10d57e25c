//! Per-timestep action entropy estimated from a candidate set, and the
//! running average-entropy curve built from it. All values are in nats.

use std::f64::consts::{LN_2, PI};

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::action::CandidateSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyConfig {
    /// Added to every covariance diagonal entry before the log-determinant.
    pub ridge: f64,
}

impl Default for EntropyConfig {
    fn default() -> Self {
        Self { ridge: 1e-9 }
    }
}

impl EntropyConfig {
    pub fn new(ridge: f64) -> Result<Self> {
        if !(ridge > 0.0) || !ridge.is_finite() {
            return Err(Error::Argument(format!(
                "ridge must be positive, got {ridge}"
            )));
        }
        Ok(Self { ridge })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyProfile {
    pub e_translation: Vec<f64>,
    pub e_rotation: Vec<f64>,
    pub e_gripper: Vec<f64>,
    pub e_total: Vec<f64>,
}

impl EntropyProfile {
    pub fn zeros(horizon: usize) -> Self {
        Self {
            e_translation: vec![0.0; horizon],
            e_rotation: vec![0.0; horizon],
            e_gripper: vec![0.0; horizon],
            e_total: vec![0.0; horizon],
        }
    }

    /// Profile whose total entropy is `e_total` (component split unknown).
    pub fn from_totals(e_total: Vec<f64>) -> Self {
        let horizon = e_total.len();
        Self {
            e_translation: e_total.clone(),
            e_rotation: vec![0.0; horizon],
            e_gripper: vec![0.0; horizon],
            e_total,
        }
    }

    pub fn horizon(&self) -> usize {
        self.e_total.len()
    }
}

/// `values[h - 1]` is the mean total entropy over the first `h` timesteps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageEntropyCurve {
    pub values: Vec<f64>,
}

impl AverageEntropyCurve {
    pub fn horizon(&self) -> usize {
        self.values.len()
    }

    /// `E_bar_h` for `h` in `1..=H`.
    pub fn at(&self, h: usize) -> f64 {
        self.values[h - 1]
    }
}

/// Binary Shannon entropy of `p = close_count / total`, with `0 ln 0 = 0`.
pub fn discrete_entropy(close_count: usize, total: usize) -> Result<f64> {
    if total == 0 {
        return Err(Error::Argument(
            "discrete entropy needs at least one sample".into(),
        ));
    }
    if close_count > total {
        return Err(Error::Argument(format!(
            "close count {close_count} exceeds sample count {total}"
        )));
    }
    let n = total as f64;
    let p = close_count as f64 / n;
    let q = (total - close_count) as f64 / n;
    Ok(plogp(p) + plogp(q))
}

fn plogp(p: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        -p * p.ln()
    }
}

/// `0.5 ln[(2 pi e)^k det(S + ridge I)]` where `S` is the unbiased sample
/// covariance of the `N × k` matrix `samples`.
pub fn gaussian_differential_entropy(
    samples: ArrayView2<'_, f64>,
    config: &EntropyConfig,
) -> Result<f64> {
    let (n, k) = samples.dim();
    if n < 2 {
        return Err(Error::Argument(format!("need at least 2 samples, got {n}")));
    }
    if k == 0 {
        return Err(Error::Argument("samples have zero columns".into()));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("non-finite sample".into()));
    }
    let mut cov = sample_covariance(samples);
    for i in 0..k {
        cov[[i, i]] += config.ridge;
    }
    let logdet = cholesky_logdet(&mut cov)
        .ok_or_else(|| Error::Argument("covariance is not positive definite".into()))?;
    Ok(0.5 * (k as f64 * (2.0 * PI).ln() + k as f64 + logdet))
}

fn sample_covariance(samples: ArrayView2<'_, f64>) -> Array2<f64> {
    let n = samples.nrows();
    let mean = samples.mean_axis(Axis(0)).expect("n >= 2");
    let centered = &samples - &mean;
    centered.t().dot(&centered) / (n as f64 - 1.0)
}

/// Log-determinant of a symmetric positive-definite matrix via in-place
/// Cholesky factorization; `None` if a pivot is not positive.
fn cholesky_logdet(a: &mut Array2<f64>) -> Option<f64> {
    let k = a.nrows();
    let mut logdet = 0.0;
    for j in 0..k {
        let mut d = a[[j, j]];
        for p in 0..j {
            d -= a[[j, p]] * a[[j, p]];
        }
        if !(d > 0.0) {
            return None;
        }
        let l_jj = d.sqrt();
        a[[j, j]] = l_jj;
        logdet += 2.0 * l_jj.ln();
        for i in (j + 1)..k {
            let mut v = a[[i, j]];
            for p in 0..j {
                v -= a[[i, p]] * a[[j, p]];
            }
            a[[i, j]] = v / l_jj;
        }
    }
    Some(logdet)
}

/// Translation, rotation and gripper entropy at every timestep of the set.
///
/// A single candidate carries no spread information, so `N = 1` yields an
/// all-zero profile.
pub fn per_timestep_entropy(
    candidates: &CandidateSet,
    config: &EntropyConfig,
) -> Result<EntropyProfile> {
    let horizon = candidates.horizon();
    let n = candidates.len();
    if n < 2 {
        return Ok(EntropyProfile::zeros(horizon));
    }
    let spec = candidates.spec();
    let t_dims = spec.translation_dims;
    let d = spec.continuous_dims();
    let mut profile = EntropyProfile::zeros(horizon);
    for i in 0..horizon {
        if t_dims > 0 {
            let block = canonical_rows(candidates.block_at(i, 0..t_dims));
            profile.e_translation[i] = gaussian_differential_entropy(block.view(), config)?;
        }
        if d > t_dims {
            let block = canonical_rows(candidates.block_at(i, t_dims..d));
            profile.e_rotation[i] = gaussian_differential_entropy(block.view(), config)?;
        }
        if spec.has_gripper {
            profile.e_gripper[i] = discrete_entropy(candidates.closed_count(i), n)?;
            debug_assert!(profile.e_gripper[i] <= LN_2 + 1e-15);
        }
        profile.e_total[i] =
            profile.e_translation[i] + profile.e_rotation[i] + profile.e_gripper[i];
    }
    Ok(profile)
}

/// Rows in lexicographic order, so the estimate does not depend on candidate order.
fn canonical_rows(block: Array2<f64>) -> Array2<f64> {
    let mut rows: Vec<_> = block.rows().into_iter().collect();
    rows.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut out = Array2::zeros(block.raw_dim());
    for (mut dst, src) in out.rows_mut().into_iter().zip(rows) {
        dst.assign(&src);
    }
    out
}

/// Prefix means of `e_total`.
pub fn average_entropy_curve(profile: &EntropyProfile) -> AverageEntropyCurve {
    let mut sum = 0.0;
    let values = profile
        .e_total
        .iter()
        .enumerate()
        .map(|(i, e)| {
            sum += e;
            sum / (i + 1) as f64
        })
        .collect();
    AverageEntropyCurve { values }
}

/// Closed-form entropy of an isotropic Gaussian with standard deviation `sigma` in `k` dims.
pub fn isotropic_gaussian_entropy(k: usize, sigma: f64) -> f64 {
    0.5 * k as f64 * (2.0 * PI * std::f64::consts::E * sigma * sigma).ln()
}
