use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::noise::NoiseSchedule;
use crate::spline::NodeTrajectory;

/// One-step update `updated − prior` together with the per-node noise scale
/// that produced it. `delta / σ²` approximates the score of the smoothed
/// trajectory distribution at the prior.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreEstimate {
    pub delta: DMatrix<f64>,
    pub sigma_used: Vec<f64>,
}

impl ScoreEstimate {
    /// `delta / σ²` per node and dimension; zero where `σ = 0`.
    pub fn implied_score(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.delta.nrows(), self.delta.ncols(), |d, k| {
            let s2 = self.sigma_used[k] * self.sigma_used[k];
            if s2 == 0.0 {
                0.0
            } else {
                self.delta[(d, k)] / s2
            }
        })
    }
}

pub fn score_export(
    prior: &NodeTrajectory,
    updated: &NodeTrajectory,
    schedule: &NoiseSchedule,
    iteration: usize,
) -> Result<ScoreEstimate> {
    if prior.matrix().shape() != updated.matrix().shape() {
        return Err(Error::Shape(format!(
            "prior {:?} and updated {:?} node shapes differ",
            prior.matrix().shape(),
            updated.matrix().shape()
        )));
    }
    Ok(ScoreEstimate {
        delta: updated.matrix() - prior.matrix(),
        sigma_used: schedule.sigma_at(iteration, prior.nodes()),
    })
}
