//! Action-space description, chunk containers and the minimum-magnitude bound.

mod magnitude;
mod quaternion;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use magnitude::{
    gripper_magnitude, min_magnitude_bound, rotation_magnitude, total_magnitude,
    translation_magnitude,
};
pub use quaternion::{compose_rotations, rotation_angle, Quaternion};

/// Layout of one action: translation columns, then rotation columns, then an
/// optional gripper channel stored separately.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionSpaceSpec {
    pub translation_dims: usize,
    /// 0, 1 (yaw about z) or 3 (axis-angle offsets).
    pub rotation_dims: usize,
    pub has_gripper: bool,
    pub gripper_threshold: f64,
}

impl ActionSpaceSpec {
    pub fn new(translation_dims: usize, rotation_dims: usize, has_gripper: bool) -> Result<Self> {
        let spec = Self {
            translation_dims,
            rotation_dims,
            has_gripper,
            gripper_threshold: 0.5,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `(dx, dy, dyaw)` plus gripper.
    pub fn planar() -> Self {
        Self {
            translation_dims: 2,
            rotation_dims: 1,
            has_gripper: true,
            gripper_threshold: 0.5,
        }
    }

    /// `(dx, dy, dz, rx, ry, rz)` plus gripper.
    pub fn spatial() -> Self {
        Self {
            translation_dims: 3,
            rotation_dims: 3,
            has_gripper: true,
            gripper_threshold: 0.5,
        }
    }

    pub fn with_gripper_threshold(mut self, threshold: f64) -> Result<Self> {
        self.gripper_threshold = threshold;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.translation_dims + self.rotation_dims == 0 {
            return Err(Error::Argument(
                "action space has no continuous dimension".into(),
            ));
        }
        if !matches!(self.rotation_dims, 0 | 1 | 3) {
            return Err(Error::Argument(format!(
                "rotation_dims must be 0, 1 or 3, got {}",
                self.rotation_dims
            )));
        }
        if !(self.gripper_threshold > 0.0 && self.gripper_threshold < 1.0) {
            return Err(Error::Argument(format!(
                "gripper_threshold {} not in (0, 1)",
                self.gripper_threshold
            )));
        }
        Ok(())
    }

    /// Continuous dimension `d`.
    pub fn continuous_dims(&self) -> usize {
        self.translation_dims + self.rotation_dims
    }

    /// Width of one flattened action row: `d + 1`.
    pub fn row_width(&self) -> usize {
        self.continuous_dims() + 1
    }

    pub fn is_closed(&self, gripper: f64) -> bool {
        gripper >= self.gripper_threshold
    }
}

/// `H` future actions predicted from one observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionChunk {
    continuous: Array2<f64>,
    gripper: Array1<f64>,
}

impl ActionChunk {
    pub fn new(continuous: Array2<f64>, gripper: Array1<f64>) -> Result<Self> {
        let horizon = continuous.nrows();
        if horizon == 0 {
            return Err(Error::Argument("chunk horizon must be at least 1".into()));
        }
        if gripper.len() != horizon {
            return Err(Error::Shape(format!(
                "gripper channel has {} entries for horizon {horizon}",
                gripper.len()
            )));
        }
        if continuous.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("non-finite continuous action".into()));
        }
        if gripper.iter().any(|g| !(0.0..=1.0).contains(g)) {
            return Err(Error::Argument("gripper entries must lie in [0, 1]".into()));
        }
        Ok(Self {
            continuous,
            gripper,
        })
    }

    /// Builds a chunk from rows of `[continuous..., gripper]`.
    pub fn from_rows(rows: &[Vec<f64>], spec: &ActionSpaceSpec) -> Result<Self> {
        let d = spec.continuous_dims();
        let mut continuous = Array2::zeros((rows.len(), d));
        let mut gripper = Array1::zeros(rows.len());
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d + 1 {
                return Err(Error::Shape(format!(
                    "action row {i} has {} entries, expected {}",
                    row.len(),
                    d + 1
                )));
            }
            for j in 0..d {
                continuous[[i, j]] = row[j];
            }
            gripper[i] = row[d];
        }
        Self::new(continuous, gripper)
    }

    /// Zero motion with a constant gripper value.
    pub fn zeros(horizon: usize, spec: &ActionSpaceSpec, gripper: f64) -> Self {
        Self {
            continuous: Array2::zeros((horizon.max(1), spec.continuous_dims())),
            gripper: Array1::from_elem(horizon.max(1), gripper.clamp(0.0, 1.0)),
        }
    }

    pub fn horizon(&self) -> usize {
        self.continuous.nrows()
    }

    pub fn continuous(&self) -> ArrayView2<'_, f64> {
        self.continuous.view()
    }

    pub fn gripper(&self) -> ArrayView1<'_, f64> {
        self.gripper.view()
    }

    /// First `l` translation offsets, `l × translation_dims`.
    pub fn translation(&self, spec: &ActionSpaceSpec, l: usize) -> ArrayView2<'_, f64> {
        self.continuous.slice(s![..l, ..spec.translation_dims])
    }

    /// First `l` rotation offsets, `l × rotation_dims`.
    pub fn rotation(&self, spec: &ActionSpaceSpec, l: usize) -> ArrayView2<'_, f64> {
        self.continuous
            .slice(s![..l, spec.translation_dims..spec.continuous_dims()])
    }

    /// Row `i` as `[continuous..., gripper]`.
    pub fn row(&self, i: usize) -> Vec<f64> {
        let mut row: Vec<f64> = self.continuous.row(i).to_vec();
        row.push(self.gripper[i]);
        row
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.horizon()).map(|i| self.row(i)).collect()
    }

    pub(crate) fn check_conforms(&self, spec: &ActionSpaceSpec) -> Result<()> {
        if self.continuous.ncols() != spec.continuous_dims() {
            return Err(Error::Shape(format!(
                "chunk has {} continuous columns, action space needs {}",
                self.continuous.ncols(),
                spec.continuous_dims()
            )));
        }
        Ok(())
    }

    pub(crate) fn check_prefix(&self, l: usize) -> Result<()> {
        if l == 0 || l > self.horizon() {
            return Err(Error::Range {
                l,
                horizon: self.horizon(),
            });
        }
        Ok(())
    }
}

/// `N` same-shaped chunks sampled in parallel at one observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    spec: ActionSpaceSpec,
    candidates: Vec<ActionChunk>,
}

impl CandidateSet {
    pub fn new(spec: ActionSpaceSpec, candidates: Vec<ActionChunk>) -> Result<Self> {
        spec.validate()?;
        let first = candidates
            .first()
            .ok_or_else(|| Error::Argument("candidate set is empty".into()))?;
        let horizon = first.horizon();
        for (i, chunk) in candidates.iter().enumerate() {
            chunk.check_conforms(&spec)?;
            if chunk.horizon() != horizon {
                return Err(Error::Shape(format!(
                    "candidate {i} has horizon {}, expected {horizon}",
                    chunk.horizon()
                )));
            }
        }
        Ok(Self { spec, candidates })
    }

    pub fn spec(&self) -> &ActionSpaceSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.candidates[0].horizon()
    }

    pub fn candidates(&self) -> &[ActionChunk] {
        &self.candidates
    }

    pub fn get(&self, index: usize) -> Option<&ActionChunk> {
        self.candidates.get(index)
    }

    pub fn into_candidates(self) -> Vec<ActionChunk> {
        self.candidates
    }

    /// Columns `cols` of timestep `step` across all candidates, `N × cols.len()`.
    pub fn block_at(&self, step: usize, cols: std::ops::Range<usize>) -> Array2<f64> {
        let width = cols.len();
        let mut out = Array2::zeros((self.len(), width));
        for (n, chunk) in self.candidates.iter().enumerate() {
            for (j, c) in cols.clone().enumerate() {
                out[[n, j]] = chunk.continuous[[step, c]];
            }
        }
        out
    }

    /// Number of candidates whose gripper is closed at `step`.
    pub fn closed_count(&self, step: usize) -> usize {
        self.candidates
            .iter()
            .filter(|c| self.spec.is_closed(c.gripper[step]))
            .count()
    }

    /// Per-timestep mean of the continuous block with a majority-vote gripper.
    pub fn mean_chunk(&self) -> ActionChunk {
        let n = self.len();
        let horizon = self.horizon();
        let mut continuous = Array2::zeros((horizon, self.spec.continuous_dims()));
        for chunk in &self.candidates {
            continuous += &chunk.continuous;
        }
        continuous /= n as f64;
        let gripper = (0..horizon)
            .map(|i| {
                if 2 * self.closed_count(i) > n {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        ActionChunk {
            continuous,
            gripper,
        }
    }
}

/// Inputs to the minimum-magnitude bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagnitudeParams {
    /// Minimum movement energy, in the policy's native action units.
    pub alpha: f64,
    /// Gripper state just before the chunk starts.
    pub prior_gripper_closed: bool,
}

impl Default for MagnitudeParams {
    fn default() -> Self {
        Self {
            alpha: 3.0,
            prior_gripper_closed: false,
        }
    }
}

impl MagnitudeParams {
    pub fn new(alpha: f64, prior_gripper_closed: bool) -> Result<Self> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::Argument(format!(
                "alpha must be finite and >= 0, got {alpha}"
            )));
        }
        Ok(Self {
            alpha,
            prior_gripper_closed,
        })
    }
}
