//! Sampling-based node-space optimizers.
//!
//! [`wbfo_step`] implements the unified weighted basis function update
//! (WBFO when `gamma = 0`, AVWBFO when `gamma > 0`); [`mppi_step`] is the
//! whole-trajectory importance-weighted baseline. Both return the updated
//! nodes together with a [`ScoreEstimate`].

mod mppi;
mod score;
mod wbfo;
mod weights;

pub use mppi::mppi_step;
pub use score::{score_export, ScoreEstimate};
pub use wbfo::wbfo_step;
pub use weights::{
    accumulate_rewards, node_weights, normalize_weights, softmax_update, softmax_weights, NodeWeightMatrix,
    DEGENERATE_STD,
};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::noise::{gaussian_noise, NoiseSchedule};
use crate::spline::{BasisPair, DenseTrajectory, NodeTrajectory};

/// Step rewards, `N` samples × `T` timesteps; higher is better.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardMatrix(DMatrix<f64>);

impl RewardMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::Shape(format!("reward matrix must be non-empty, got {:?}", data.shape())));
        }
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            let (i, t) = (idx % data.nrows(), idx / data.nrows());
            return Err(Error::Evaluation {
                sample: i,
                source: Box::new(Error::Domain(format!("non-finite reward at step {t}"))),
            });
        }
        Ok(Self(data))
    }

    pub fn from_row_slice(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_row_slice(rows, cols, values))
    }

    pub fn samples(&self) -> usize {
        self.0.nrows()
    }

    pub fn steps(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.0.row(i).iter().copied().collect()
    }

    pub fn row_total(&self, i: usize) -> f64 {
        self.0.row(i).iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Wbfo,
    Avwbfo,
    Mppi,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Wbfo => "wbfo",
            Algorithm::Avwbfo => "avwbfo",
            Algorithm::Mppi => "mppi",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "wbfo" => Ok(Algorithm::Wbfo),
            "avwbfo" => Ok(Algorithm::Avwbfo),
            "mppi" => Ok(Algorithm::Mppi),
            other => Err(Error::Config(format!("unknown algorithm `{other}` (expected wbfo, avwbfo or mppi)"))),
        }
    }
}

/// Where MPPI perturbs and averages: control nodes or raw dense samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MppiSpace {
    Nodes,
    Dense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    pub n_samples: usize,
    /// Reward discount; zero for WBFO, positive for AVWBFO.
    pub gamma: f64,
    /// MPPI temperature.
    pub lambda: f64,
    /// Denoising iterations per optimization call.
    pub iterations: usize,
    /// Cost discount rate used when MPPI turns rewards into a cost.
    pub alpha: f64,
    pub mppi_space: MppiSpace,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Wbfo,
            n_samples: 32,
            gamma: 0.0,
            lambda: 1.0,
            iterations: 10,
            alpha: 0.0,
            mppi_space: MppiSpace::Nodes,
        }
    }
}

impl OptimizerConfig {
    /// Config for `algorithm` with its conventional discount: `γ = 0` for
    /// WBFO, `γ = 1` for AVWBFO.
    pub fn for_algorithm(algorithm: Algorithm) -> Self {
        let gamma = if algorithm == Algorithm::Avwbfo { 1.0 } else { 0.0 };
        Self { algorithm, gamma, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::Config("opt.n_samples must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("opt.gamma must lie in [0, 1], got {}", self.gamma)));
        }
        match self.algorithm {
            Algorithm::Wbfo if self.gamma != 0.0 => {
                return Err(Error::Config(format!("wbfo requires opt.gamma = 0, got {}", self.gamma)))
            }
            Algorithm::Avwbfo if self.gamma == 0.0 => {
                return Err(Error::Config("avwbfo requires opt.gamma > 0".into()))
            }
            _ => {}
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("opt.lambda must be > 0, got {}", self.lambda)));
        }
        if self.alpha < 0.0 {
            return Err(Error::Config(format!("opt.alpha must be >= 0, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Maps a batch of dense candidates to their step rewards.
pub trait Evaluator {
    /// Seconds per dense step of the trajectories this evaluator accepts.
    fn dt(&self) -> f64;

    fn evaluate(&mut self, candidates: &[DenseTrajectory]) -> Result<RewardMatrix>;
}

/// Evaluator backed by a closure.
pub struct FnEvaluator<F> {
    dt: f64,
    f: F,
}

impl<F> FnEvaluator<F>
where
    F: FnMut(&[DenseTrajectory]) -> Result<RewardMatrix>,
{
    pub fn new(dt: f64, f: F) -> Self {
        Self { dt, f }
    }
}

impl<F> Evaluator for FnEvaluator<F>
where
    F: FnMut(&[DenseTrajectory]) -> Result<RewardMatrix>,
{
    fn dt(&self) -> f64 {
        self.dt
    }

    fn evaluate(&mut self, candidates: &[DenseTrajectory]) -> Result<RewardMatrix> {
        (self.f)(candidates)
    }
}

/// Position in the noise stream: denoising iteration (drives decay) and an
/// independent stream id (e.g. the replanning step).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NoiseCursor {
    pub iteration: usize,
    pub stream: u64,
}

impl NoiseCursor {
    pub fn new(iteration: usize, stream: u64) -> Self {
        Self { iteration, stream }
    }
}

/// Summary of one optimizer step's sample batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    /// Total reward of sample 0, the unperturbed prior.
    pub prior_return: f64,
    pub best_return: f64,
    pub mean_return: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub nodes: NodeTrajectory,
    pub score: ScoreEstimate,
    pub stats: StepStats,
}

/// Dispatches to [`wbfo_step`] or [`mppi_step`] by `config.algorithm`.
pub fn optimizer_step<E: Evaluator + ?Sized>(
    prior: &NodeTrajectory,
    basis: &BasisPair,
    schedule: &NoiseSchedule,
    cursor: NoiseCursor,
    evaluator: &mut E,
    config: &OptimizerConfig,
) -> Result<StepOutput> {
    match config.algorithm {
        Algorithm::Wbfo | Algorithm::Avwbfo => wbfo_step(prior, basis, schedule, cursor, evaluator, config),
        Algorithm::Mppi => mppi_step(prior, basis, schedule, cursor, evaluator, config),
    }
}

/// `N` node sets: the prior itself followed by `N − 1` perturbed copies.
pub(crate) fn sample_nodes(
    prior: &NodeTrajectory,
    schedule: &NoiseSchedule,
    cursor: NoiseCursor,
    n: usize,
) -> Vec<DMatrix<f64>> {
    let (dims, nodes) = (prior.dims(), prior.nodes());
    let noise = gaussian_noise(schedule, cursor.iteration, cursor.stream, n.saturating_sub(1), dims, nodes);
    let mut out = Vec::with_capacity(n);
    out.push(prior.matrix().clone());
    for i in 0..n.saturating_sub(1) {
        out.push(prior.matrix() + noise.sample(i));
    }
    out
}

/// Calls the evaluator and checks the returned shape.
pub(crate) fn evaluate_checked<E: Evaluator + ?Sized>(
    evaluator: &mut E,
    candidates: &[DenseTrajectory],
) -> Result<RewardMatrix> {
    let rewards = evaluator.evaluate(candidates)?;
    let steps = candidates[0].steps();
    if rewards.samples() != candidates.len() || rewards.steps() != steps {
        return Err(Error::Shape(format!(
            "evaluator returned {}×{} rewards for {}×{} candidates",
            rewards.samples(),
            rewards.steps(),
            candidates.len(),
            steps
        )));
    }
    Ok(rewards)
}

pub(crate) fn batch_stats(rewards: &RewardMatrix) -> StepStats {
    let totals: Vec<f64> = (0..rewards.samples()).map(|i| rewards.row_total(i)).collect();
    StepStats {
        prior_return: totals[0],
        best_return: totals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean_return: totals.iter().sum::<f64>() / totals.len() as f64,
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    /// Evaluator scoring each dense step by `reward(u_t)` independently.
    pub fn pointwise(dt: f64, reward: impl Fn(&[f64]) -> f64) -> impl Evaluator {
        FnEvaluator::new(dt, move |cands: &[DenseTrajectory]| {
            let (n, t) = (cands.len(), cands[0].steps());
            RewardMatrix::new(DMatrix::from_fn(n, t, |i, s| reward(&cands[i].control(s))))
        })
    }
}
