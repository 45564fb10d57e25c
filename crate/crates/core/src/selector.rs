//! Chunk-size selection: execute up to the point where the running average
//! entropy would rise the most, but never fewer actions than `xi`.

use serde::{Deserialize, Serialize};

use crate::action::{min_magnitude_bound, ActionChunk, CandidateSet, MagnitudeParams};
use crate::entropy::{
    average_entropy_curve, per_timestep_entropy, AverageEntropyCurve, EntropyConfig, EntropyProfile,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkDecision {
    pub h_star: usize,
    /// Unconstrained maximizer of `E_bar_{h+1} - E_bar_h`.
    pub raw_argmax: usize,
    pub xi: usize,
    pub curve: AverageEntropyCurve,
    pub profile: EntropyProfile,
}

impl ChunkDecision {
    pub fn horizon(&self) -> usize {
        self.curve.horizon()
    }
}

/// `argmax_{h in 1..H-1} (E_bar_{h+1} - E_bar_h)`, smallest `h` on ties; 1 when `H = 1`.
///
/// Differences within round-off of the running best count as ties, so a
/// constant entropy profile always yields 1.
pub fn max_difference_point(curve: &AverageEntropyCurve) -> usize {
    let v = &curve.values;
    let scale = v.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let tie_tolerance = 64.0 * f64::EPSILON * scale;
    let mut best_h = 1;
    let mut best = f64::NEG_INFINITY;
    for h in 1..v.len() {
        let diff = v[h] - v[h - 1];
        if diff > best + tie_tolerance {
            best = diff;
            best_h = h;
        }
    }
    best_h
}

/// `min(max(raw_argmax, xi), H)`.
pub fn combine(raw_argmax: usize, xi: usize, horizon: usize) -> usize {
    raw_argmax.max(xi).min(horizon).max(1)
}

pub fn select_chunk_size(
    candidates: &CandidateSet,
    execution_chunk: &ActionChunk,
    params: &MagnitudeParams,
    config: &EntropyConfig,
) -> Result<ChunkDecision> {
    let horizon = candidates.horizon();
    if execution_chunk.horizon() != horizon {
        return Err(Error::Shape(format!(
            "execution chunk horizon {} differs from candidate horizon {horizon}",
            execution_chunk.horizon()
        )));
    }
    execution_chunk.check_conforms(candidates.spec())?;

    let profile = per_timestep_entropy(candidates, config)?;
    let curve = average_entropy_curve(&profile);
    let raw_argmax = max_difference_point(&curve);
    let xi = min_magnitude_bound(execution_chunk, candidates.spec(), params);
    Ok(ChunkDecision {
        h_star: combine(raw_argmax, xi, horizon),
        raw_argmax,
        xi,
        curve,
        profile,
    })
}
