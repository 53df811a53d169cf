use nalgebra::DMatrix;

use super::weights::{convex_combination, softmax};
use super::{
    batch_stats, evaluate_checked, sample_nodes, score_export, Evaluator, MppiSpace, NoiseCursor, OptimizerConfig,
    RewardMatrix, StepOutput,
};
use crate::env::total_cost;
use crate::error::{Error, Result};
use crate::noise::{gaussian_noise, NoiseSchedule};
use crate::spline::{dense_to_nodes, BasisPair, DenseTrajectory, NodeTrajectory};

/// Per-sample weights `exp(−(J_i − min J)/λ)`, normalized, with
/// `J_i = total_cost(rewards_i, α, dt)`.
pub(crate) fn mppi_weights(rewards: &RewardMatrix, lambda: f64, alpha: f64, dt: f64) -> Vec<f64> {
    let costs: Vec<f64> = (0..rewards.samples()).map(|i| total_cost(&rewards.row(i), alpha, dt, 0.0)).collect();
    softmax(costs.iter().map(|j| -j / lambda))
}

fn weighted_average(weights: &[f64], samples: &[DMatrix<f64>]) -> DMatrix<f64> {
    let (rows, cols) = samples[0].shape();
    DMatrix::from_fn(rows, cols, |r, c| convex_combination(weights, samples.iter().map(|s| s[(r, c)])))
}

/// One MPPI iteration: a single importance weight per sample from its
/// whole-trajectory cost, then the weighted average of the samples.
///
/// With [`MppiSpace::Nodes`] the perturbation and average happen on control
/// nodes (same dimensionality as WBFO). With [`MppiSpace::Dense`] each dense
/// step is perturbed independently and the averaged dense trajectory is
/// refit onto the nodes.
pub fn mppi_step<E: Evaluator + ?Sized>(
    prior: &NodeTrajectory,
    basis: &BasisPair,
    schedule: &NoiseSchedule,
    cursor: NoiseCursor,
    evaluator: &mut E,
    config: &OptimizerConfig,
) -> Result<StepOutput> {
    config.validate()?;
    if prior.nodes() != basis.nodes() {
        return Err(Error::Shape(format!("prior has {} nodes, basis {}", prior.nodes(), basis.nodes())));
    }
    let dt = evaluator.dt();
    let (nodes, rewards) = match config.mppi_space {
        MppiSpace::Nodes => {
            let samples = sample_nodes(prior, schedule, cursor, config.n_samples);
            let candidates = samples
                .iter()
                .map(|p| DenseTrajectory::new(p * basis.phi(), dt))
                .collect::<Result<Vec<_>>>()?;
            let rewards = evaluate_checked(evaluator, &candidates)?;
            let w = mppi_weights(&rewards, config.lambda, config.alpha, dt);
            (NodeTrajectory::new(weighted_average(&w, &samples))?, rewards)
        }
        MppiSpace::Dense => {
            let base = prior.matrix() * basis.phi();
            let (dims, steps) = base.shape();
            let n = config.n_samples;
            let noise = gaussian_noise(schedule, cursor.iteration, cursor.stream, n - 1, dims, steps);
            let mut samples = Vec::with_capacity(n);
            samples.push(base.clone());
            for i in 0..n - 1 {
                samples.push(&base + noise.sample(i));
            }
            let candidates = samples
                .iter()
                .map(|u| DenseTrajectory::new(u.clone(), dt))
                .collect::<Result<Vec<_>>>()?;
            let rewards = evaluate_checked(evaluator, &candidates)?;
            let w = mppi_weights(&rewards, config.lambda, config.alpha, dt);
            let dense = DenseTrajectory::new(weighted_average(&w, &samples), dt)?;
            (dense_to_nodes(&dense, basis)?, rewards)
        }
    };
    let score = score_export(prior, &nodes, schedule, cursor.iteration)?;
    Ok(StepOutput { nodes, score, stats: batch_stats(&rewards) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::test_support::pointwise;
    use crate::optimizer::{Algorithm, FnEvaluator};
    use crate::spline::build_basis;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn mppi(lambda: f64, n: usize) -> OptimizerConfig {
        OptimizerConfig { algorithm: Algorithm::Mppi, lambda, n_samples: n, ..Default::default() }
    }

    #[test]
    fn closed_form_two_sample_weights() {
        let lambda = 0.7;
        // dt = 1, α = 0: J = −Σ reward.
        let r = RewardMatrix::from_row_slice(2, 1, &[0.0, -lambda * 3f64.ln()]).unwrap();
        let w = mppi_weights(&r, lambda, 0.0, 1.0);
        assert_abs_diff_eq!(w[0], 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(w[1], 0.25, epsilon = 1e-12);
    }

    #[test]
    fn uniform_costs_give_sample_mean() {
        let basis = build_basis(4, 12).unwrap();
        let prior = NodeTrajectory::zeros(2, 4).unwrap();
        let sched = NoiseSchedule { seed: 4, ..Default::default() };
        let mut flat = pointwise(0.1, |_| -1.0);
        let out = mppi_step(&prior, &basis, &sched, NoiseCursor::default(), &mut flat, &mppi(1.0, 9)).unwrap();
        let samples = sample_nodes(&prior, &sched, NoiseCursor::default(), 9);
        let mean = samples.iter().fold(DMatrix::zeros(2, 4), |a, s| a + s) / 9.0;
        assert!((out.nodes.matrix() - mean).abs().max() <= 1e-12);
    }

    #[test]
    fn tiny_lambda_selects_argmin() {
        let basis = build_basis(4, 12).unwrap();
        let prior = NodeTrajectory::zeros(1, 4).unwrap();
        let sched = NoiseSchedule { seed: 8, ..Default::default() };
        let mut eval = pointwise(0.1, |u| -(u[0] - 2.0).powi(2));
        let out = mppi_step(&prior, &basis, &sched, NoiseCursor::default(), &mut eval, &mppi(1e-9, 16)).unwrap();
        let samples = sample_nodes(&prior, &sched, NoiseCursor::default(), 16);
        let best = samples
            .iter()
            .max_by(|a, b| {
                let ret = |s: &DMatrix<f64>| -(s * basis.phi()).iter().map(|v| (v - 2.0).powi(2)).sum::<f64>();
                ret(a).total_cmp(&ret(b))
            })
            .unwrap();
        assert!((out.nodes.matrix() - best).abs().max() <= 1e-6);
    }

    #[test]
    fn dense_space_variant_improves_bowl() {
        let basis = build_basis(6, 30).unwrap();
        let mut nodes = NodeTrajectory::zeros(1, 6).unwrap();
        let sched = NoiseSchedule { sigma0: 2.0, seed: 1, ..Default::default() };
        let cfg = OptimizerConfig { mppi_space: MppiSpace::Dense, ..mppi(1.0, 32) };
        let mut eval = pointwise(0.1, |u| -(u[0] - 3.0).powi(2));
        let start = -(3.0f64.powi(2)) * 30.0;
        let mut last = start;
        for i in 0..8 {
            let out = mppi_step(&nodes, &basis, &sched, NoiseCursor::new(i, 0), &mut eval, &cfg).unwrap();
            nodes = out.nodes;
            last = out.stats.best_return;
        }
        assert!(last > start * 0.7, "best return {last}");
    }

    proptest! {
        #[test]
        fn constant_cost_shift_is_invariant(shift in -50.0f64..50.0, seed in any::<u64>()) {
            let basis = build_basis(5, 20).unwrap();
            let prior = NodeTrajectory::zeros(1, 5).unwrap();
            let sched = NoiseSchedule { seed, ..Default::default() };
            let cfg = mppi(0.5, 12);
            let run = |offset: f64| {
                let mut eval = FnEvaluator::new(1.0, move |c: &[DenseTrajectory]| {
                    let t = c[0].steps();
                    RewardMatrix::new(DMatrix::from_fn(c.len(), t, |i, s| {
                        let v = c[i].matrix()[(0, s)];
                        -(v - 1.0).powi(2) + if s == 0 { offset } else { 0.0 }
                    }))
                });
                mppi_step(&prior, &basis, &sched, NoiseCursor::default(), &mut eval, &cfg).unwrap().nodes
            };
            let (a, b) = (run(0.0), run(shift));
            prop_assert!((a.matrix() - b.matrix()).abs().max() <= 1e-9);
        }
    }
}
