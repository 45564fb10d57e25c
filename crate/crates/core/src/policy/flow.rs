//! Flow-matching chunk policy.
//!
//! Training regresses `V(obs, A_tau, tau)` onto `eps - A` where
//! `A_tau = tau * A + (1 - tau) * eps`. Because that field points from data
//! toward noise, sampling integrates `A <- A - V / K` from `tau = 0` (pure
//! noise) by default; [`FieldSign::Add`] follows the literal `A <- A + V / K`
//! update instead.

use ndarray::{s, Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use super::{ChunkSampler, Observation};
use crate::action::{ActionChunk, ActionSpaceSpec, CandidateSet};
use crate::error::{Error, Result};

/// Extra inputs encoding the flow time.
pub const TIME_FEATURES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldSign {
    /// `A <- A - V / K`: integrates toward the data for an `eps - A` target.
    Negate,
    /// `A <- A + V / K`.
    Add,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub hidden: Vec<usize>,
    pub euler_steps: usize,
    pub sign: FieldSign,
    /// Assumed per-coordinate variance of expert chunks, used by the skip
    /// term; 0 gives a plain network.
    pub data_variance: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            hidden: vec![384, 384],
            euler_steps: 10,
            sign: FieldSign::Negate,
            data_variance: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowModel {
    pub spec: ActionSpaceSpec,
    pub horizon: usize,
    pub observation_dim: usize,
    pub euler_steps: usize,
    pub sign: FieldSign,
    pub data_variance: f64,
    pub net: Mlp,
}

/// Network inputs and regression targets for one training batch.
#[derive(Debug, Clone)]
pub struct FlowBatch {
    pub inputs: Array2<f64>,
    /// Skip term `c_skip(tau) * A_tau`, added to the network output.
    pub skip: Array2<f64>,
    pub targets: Array2<f64>,
}

/// Coefficient of the linear least-squares estimate of `eps - A` from
/// `A_tau` when `A` has per-coordinate variance `data_variance`.
///
/// The velocity field is `c_skip(tau) * A_tau + net(...)`, so the network
/// only has to learn the residual; at `tau = 0` the skip term is `A_tau` itself.
///
/// A `data_variance` of zero disables the skip term.
pub fn skip_coefficient(tau: f64, data_variance: f64) -> f64 {
    if data_variance == 0.0 {
        return 0.0;
    }
    let noise = 1.0 - tau;
    (noise - tau * data_variance) / (tau * tau * data_variance + noise * noise)
}

fn time_features(tau: f64) -> [f64; TIME_FEATURES] {
    let angle = std::f64::consts::PI * tau;
    [tau, angle.sin(), angle.cos()]
}

impl FlowModel {
    pub fn new(
        spec: ActionSpaceSpec,
        horizon: usize,
        observation_dim: usize,
        config: &FlowConfig,
        seed: u64,
    ) -> Result<Self> {
        spec.validate()?;
        if horizon == 0 || config.euler_steps == 0 {
            return Err(Error::Argument(
                "horizon and euler_steps must be >= 1".into(),
            ));
        }
        if !(config.data_variance >= 0.0) || !config.data_variance.is_finite() {
            return Err(Error::Argument(
                "data_variance must be finite and >= 0".into(),
            ));
        }
        let chunk_dim = horizon * spec.row_width();
        let mut dims = vec![observation_dim + chunk_dim + TIME_FEATURES];
        dims.extend(&config.hidden);
        dims.push(chunk_dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            spec,
            horizon,
            observation_dim,
            euler_steps: config.euler_steps,
            sign: config.sign,
            data_variance: config.data_variance,
            net: Mlp::new(&dims, &mut rng),
        })
    }

    /// Flattened chunk length `H * (d + 1)`.
    pub fn chunk_dim(&self) -> usize {
        self.horizon * self.spec.row_width()
    }

    pub fn input_dim(&self) -> usize {
        self.observation_dim + self.chunk_dim() + TIME_FEATURES
    }

    fn check_observation(&self, obs: &Observation) -> Result<()> {
        if obs.len() != self.observation_dim {
            return Err(Error::Shape(format!(
                "observation has {} features, model expects {}",
                obs.len(),
                self.observation_dim
            )));
        }
        Ok(())
    }

    fn flatten(&self, chunk: &ActionChunk) -> Result<Vec<f64>> {
        if chunk.horizon() != self.horizon {
            return Err(Error::Shape(format!(
                "expert chunk horizon {} differs from model horizon {}",
                chunk.horizon(),
                self.horizon
            )));
        }
        chunk.check_conforms(&self.spec)?;
        Ok(chunk.rows().into_iter().flatten().collect())
    }

    fn write_input(
        &self,
        row: &mut ndarray::ArrayViewMut1<'_, f64>,
        obs: &Observation,
        x: &[f64],
        tau: f64,
    ) {
        let (o, c) = (self.observation_dim, self.chunk_dim());
        for (dst, src) in row.slice_mut(s![..o]).iter_mut().zip(obs.features()) {
            *dst = *src;
        }
        for (dst, src) in row.slice_mut(s![o..o + c]).iter_mut().zip(x) {
            *dst = *src;
        }
        for (dst, src) in row
            .slice_mut(s![o + c..])
            .iter_mut()
            .zip(time_features(tau))
        {
            *dst = src;
        }
    }

    /// Draws `tau ~ U[0, 1]` and `eps ~ N(0, I)` per example and assembles
    /// the noisy inputs with their `eps - A` targets.
    pub fn make_batch(
        &self,
        examples: &[(Observation, ActionChunk)],
        seed: u64,
    ) -> Result<FlowBatch> {
        if examples.is_empty() {
            return Err(Error::Argument("training batch is empty".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = self.chunk_dim();
        let mut inputs = Array2::zeros((examples.len(), self.input_dim()));
        let mut targets = Array2::zeros((examples.len(), c));
        let mut skip = Array2::zeros((examples.len(), c));
        for (b, (obs, chunk)) in examples.iter().enumerate() {
            self.check_observation(obs)?;
            let a = self.flatten(chunk)?;
            let tau: f64 = rng.random();
            let eps: Vec<f64> = (0..c).map(|_| StandardNormal.sample(&mut rng)).collect();
            let noisy: Vec<f64> = a
                .iter()
                .zip(&eps)
                .map(|(a, e)| tau * a + (1.0 - tau) * e)
                .collect();
            self.write_input(&mut inputs.row_mut(b), obs, &noisy, tau);
            let c_skip = skip_coefficient(tau, self.data_variance);
            for j in 0..c {
                targets[[b, j]] = eps[j] - a[j];
                skip[[b, j]] = c_skip * noisy[j];
            }
        }
        Ok(FlowBatch {
            inputs,
            skip,
            targets,
        })
    }

    /// Mean squared error over all batch entries.
    pub fn loss(&self, batch: &FlowBatch) -> f64 {
        let out = self.net.forward(batch.inputs.view()) + &batch.skip;
        (&out - &batch.targets)
            .mapv(|v| v * v)
            .mean()
            .unwrap_or(0.0)
    }

    pub fn loss_and_gradient(&self, batch: &FlowBatch) -> (f64, Mlp) {
        let (out, cache) = self.net.forward_cached(batch.inputs.view());
        let residual = out + &batch.skip - &batch.targets;
        let loss = residual.mapv(|v| v * v).mean().unwrap_or(0.0);
        let grad_out = residual * (2.0 / batch.targets.len() as f64);
        (loss, self.net.backward(&cache, grad_out))
    }

    /// Evaluates the velocity field for a batch of noisy chunks at a shared `tau`.
    pub fn velocity(&self, obs: &Observation, noisy: &Array2<f64>, tau: f64) -> Array2<f64> {
        let mut inputs = Array2::zeros((noisy.nrows(), self.input_dim()));
        for (mut row, x) in inputs.rows_mut().into_iter().zip(noisy.rows()) {
            self.write_input(&mut row, obs, x.as_slice().expect("standard layout"), tau);
        }
        let mut v = self.net.forward(inputs.view());
        v.scaled_add(skip_coefficient(tau, self.data_variance), noisy);
        v
    }

    /// Integrates `K` Euler steps from `N` independent standard-normal draws.
    pub fn sample_chunks(&self, obs: &Observation, n: usize, seed: u64) -> Result<CandidateSet> {
        self.check_observation(obs)?;
        if n == 0 {
            return Err(Error::Argument("N must be at least 1".into()));
        }
        if !self.net.is_finite() {
            return Err(Error::Sampler("model has non-finite parameters".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = self.chunk_dim();
        let mut x = Array2::from_shape_simple_fn((n, c), || StandardNormal.sample(&mut rng));
        let dt = 1.0 / self.euler_steps as f64;
        for k in 0..self.euler_steps {
            let v = self.velocity(obs, &x, k as f64 * dt);
            match self.sign {
                FieldSign::Negate => x.scaled_add(-dt, &v),
                FieldSign::Add => x.scaled_add(dt, &v),
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Sampler("non-finite sample".into()));
        }
        self.unflatten(&x)
    }

    fn unflatten(&self, x: &Array2<f64>) -> Result<CandidateSet> {
        let w = self.spec.row_width();
        let d = self.spec.continuous_dims();
        let chunks = x
            .rows()
            .into_iter()
            .map(|row| {
                let mut continuous = Array2::zeros((self.horizon, d));
                let mut gripper = Array1::zeros(self.horizon);
                for i in 0..self.horizon {
                    for j in 0..d {
                        continuous[[i, j]] = row[i * w + j];
                    }
                    gripper[i] = row[i * w + d].clamp(0.0, 1.0);
                }
                ActionChunk::new(continuous, gripper)
            })
            .collect::<Result<Vec<_>>>()?;
        CandidateSet::new(self.spec, chunks)
    }
}

/// One gradient-descent step on a freshly noised batch; returns the pre-step loss.
pub fn flow_train_step(
    model: &mut FlowModel,
    examples: &[(Observation, ActionChunk)],
    seed: u64,
    learning_rate: f64,
) -> Result<f64> {
    let batch = model.make_batch(examples, seed)?;
    let (loss, grad) = model.loss_and_gradient(&batch);
    if !loss.is_finite() {
        return Err(Error::Training {
            step: 0,
            detail: format!(
                "loss = {loss}, parameter norm^2 = {}",
                model.net.squared_norm()
            ),
        });
    }
    model.net.descend(&grad, learning_rate);
    if !model.net.is_finite() {
        return Err(Error::Training {
            step: 0,
            detail: format!("non-finite parameters after update (pre-step loss {loss})"),
        });
    }
    Ok(loss)
}

/// First and second moment estimates for Adam.
#[derive(Debug, Clone)]
pub struct AdamState {
    first: Vec<f64>,
    second: Vec<f64>,
    steps: i32,
}

impl AdamState {
    pub fn new(net: &Mlp) -> Self {
        let n = net.parameter_count();
        Self {
            first: vec![0.0; n],
            second: vec![0.0; n],
            steps: 0,
        }
    }
}

/// Like [`flow_train_step`] but the update is an Adam step.
pub fn adam_train_step(
    model: &mut FlowModel,
    state: &mut AdamState,
    examples: &[(Observation, ActionChunk)],
    seed: u64,
    learning_rate: f64,
) -> Result<f64> {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;
    let batch = model.make_batch(examples, seed)?;
    let (loss, grad) = model.loss_and_gradient(&batch);
    if !loss.is_finite() {
        return Err(Error::Training {
            step: 0,
            detail: format!(
                "loss = {loss}, parameter norm^2 = {}",
                model.net.squared_norm()
            ),
        });
    }
    state.steps += 1;
    let c1 = 1.0 - BETA1.powi(state.steps);
    let c2 = 1.0 - BETA2.powi(state.steps);
    let mut params = model.net.flat_parameters();
    for (i, g) in grad.flat_parameters().into_iter().enumerate() {
        state.first[i] = BETA1 * state.first[i] + (1.0 - BETA1) * g;
        state.second[i] = BETA2 * state.second[i] + (1.0 - BETA2) * g * g;
        params[i] -= learning_rate * (state.first[i] / c1) / ((state.second[i] / c2).sqrt() + EPS);
    }
    model.net.set_flat_parameters(&params);
    if !model.net.is_finite() {
        return Err(Error::Training {
            step: 0,
            detail: format!("non-finite parameters after update (pre-step loss {loss})"),
        });
    }
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Optimizer {
    /// Fixed-step gradient descent.
    Sgd,
    /// Adam with the usual `beta1 = 0.9, beta2 = 0.999`.
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    /// Anneal the rate to zero along a half cosine.
    pub cosine_decay: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 256,
            learning_rate: 0.02,
            optimizer: Optimizer::Adam,
            cosine_decay: true,
            seed: 0,
        }
    }
}

/// Minibatch training over `examples`; returns the per-step losses.
pub fn train(
    model: &mut FlowModel,
    examples: &[(Observation, ActionChunk)],
    config: &TrainConfig,
) -> Result<Vec<f64>> {
    if examples.is_empty() {
        return Err(Error::Argument("no training examples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut losses = Vec::with_capacity(config.steps);
    let mut batch = Vec::with_capacity(config.batch_size);
    let mut adam = AdamState::new(&model.net);
    for step in 0..config.steps {
        batch.clear();
        for _ in 0..config.batch_size.max(1) {
            batch.push(examples[rng.random_range(0..examples.len())].clone());
        }
        let seed = rng.random();
        let rate = if config.cosine_decay {
            let progress = step as f64 / config.steps as f64;
            config.learning_rate * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
        } else {
            config.learning_rate
        };
        let loss = match config.optimizer {
            Optimizer::Sgd => flow_train_step(model, &batch, seed, rate),
            Optimizer::Adam => adam_train_step(model, &mut adam, &batch, seed, rate),
        }
        .map_err(|e| match e {
            Error::Training { detail, .. } => Error::Training { step, detail },
            other => other,
        })?;
        losses.push(loss);
    }
    Ok(losses)
}

/// A trained model used as a [`ChunkSampler`].
#[derive(Debug, Clone)]
pub struct FlowPolicy {
    pub model: FlowModel,
}

impl ChunkSampler for FlowPolicy {
    fn spec(&self) -> ActionSpaceSpec {
        self.model.spec
    }

    fn horizon(&self) -> usize {
        self.model.horizon
    }

    fn sample(&self, obs: &Observation, n: usize, seed: u64) -> Result<CandidateSet> {
        self.model.sample_chunks(obs, n, seed)
    }
}
