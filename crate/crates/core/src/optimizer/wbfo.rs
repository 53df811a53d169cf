use super::{
    accumulate_rewards, batch_stats, evaluate_checked, node_weights, normalize_weights, sample_nodes, score_export,
    softmax_update, Evaluator, NoiseCursor, OptimizerConfig, StepOutput,
};
use crate::error::{Error, Result};
use crate::noise::NoiseSchedule;
use crate::spline::{BasisPair, DenseTrajectory, NodeTrajectory};

/// One unified WBFO iteration.
///
/// Samples `N` node sets around `prior` (sample 0 is the prior itself),
/// evaluates their dense trajectories, discounts the step rewards by
/// `config.gamma`, maps them onto nodes through the basis, standardizes
/// each node over samples and replaces every node with its softmax-weighted
/// average over samples.
pub fn wbfo_step<E: Evaluator + ?Sized>(
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
    let samples = sample_nodes(prior, schedule, cursor, config.n_samples);
    let dt = evaluator.dt();
    let candidates = samples
        .iter()
        .map(|p| DenseTrajectory::new(p * basis.phi(), dt))
        .collect::<Result<Vec<_>>>()?;
    let rewards = evaluate_checked(evaluator, &candidates)?;
    let accumulated = accumulate_rewards(&rewards, config.gamma)?;
    let weights = normalize_weights(&node_weights(&accumulated, basis)?);
    let nodes = softmax_update(&weights, &samples)?;
    let score = score_export(prior, &nodes, schedule, cursor.iteration)?;
    Ok(StepOutput { nodes, score, stats: batch_stats(&rewards) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseSource;
    use crate::optimizer::test_support::pointwise;
    use crate::optimizer::{Algorithm, FnEvaluator, RewardMatrix};
    use crate::spline::{build_basis, nodes_to_dense};

    fn schedule(sigma0: f64, seed: u64) -> NoiseSchedule {
        NoiseSchedule { sigma0, decay: 0.6, seed, source: NoiseSource::LatinHypercube, ..Default::default() }
    }

    #[test]
    fn zero_noise_returns_prior_exactly() {
        let basis = build_basis(5, 20).unwrap();
        let prior = NodeTrajectory::new(nalgebra::DMatrix::from_fn(2, 5, |d, k| (d * 5 + k) as f64 * 0.37)).unwrap();
        let sched = NoiseSchedule { ramp_near: 0.0, ramp_far: 0.0, ..Default::default() };
        let mut eval = pointwise(0.1, |u| -u.iter().map(|v| v * v).sum::<f64>());
        let out = wbfo_step(&prior, &basis, &sched, NoiseCursor::default(), &mut eval, &OptimizerConfig::default())
            .unwrap();
        assert_eq!(out.nodes, prior);
        assert!(out.score.delta.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn symmetric_bowl_keeps_origin() {
        let basis = build_basis(4, 16).unwrap();
        let prior = NodeTrajectory::zeros(1, 4).unwrap();
        let n = 64;
        let sigma = 1.0;
        let cfg = OptimizerConfig { n_samples: n, ..Default::default() };
        let mut eval = pointwise(0.1, |u| -u[0] * u[0]);
        let out = wbfo_step(&prior, &basis, &schedule(sigma, 3), NoiseCursor::default(), &mut eval, &cfg).unwrap();
        let bound = 3.0 * sigma / (n as f64).sqrt();
        for v in out.nodes.matrix().iter() {
            assert!(v.abs() <= bound, "{v} exceeds {bound}");
        }
    }

    fn bowl_worst_error(source: NoiseSource, seed: u64) -> f64 {
        let basis = build_basis(8, 32).unwrap();
        let mut nodes = NodeTrajectory::zeros(1, 8).unwrap();
        let sched = NoiseSchedule { source, ..schedule(3.0, seed) };
        let cfg = OptimizerConfig { n_samples: 32, ..Default::default() };
        let mut eval = pointwise(0.1, |u| -(u[0] - 5.0).powi(2));
        for i in 0..10 {
            nodes = wbfo_step(&nodes, &basis, &sched, NoiseCursor::new(i, 0), &mut eval, &cfg).unwrap().nodes;
        }
        let dense = nodes_to_dense(&nodes, &basis, 0.1).unwrap();
        dense.matrix().iter().map(|v| (v - 5.0).abs()).fold(0.0, f64::max)
    }

    // Convergence within 0.5 is seed dependent; LHS gets there for most seeds.
    #[test]
    fn quadratic_bowl_converges() {
        let lhs: Vec<f64> = (0..40).map(|s| bowl_worst_error(NoiseSource::LatinHypercube, s)).collect();
        let pass = lhs.iter().filter(|w| **w <= 0.5).count();
        assert!(pass >= 30, "{pass}/40 seeds within 0.5");
        assert!(lhs.iter().all(|w| *w < 1.5));
        let mc: f64 = (0..40).map(|s| bowl_worst_error(NoiseSource::MonteCarlo, s)).sum::<f64>() / 40.0;
        let lhs_mean = lhs.iter().sum::<f64>() / 40.0;
        assert!(lhs_mean < mc, "lhs {lhs_mean} vs mc {mc}");
    }

    #[test]
    fn avwbfo_runs_and_is_deterministic() {
        let basis = build_basis(6, 24).unwrap();
        let prior = NodeTrajectory::zeros(1, 6).unwrap();
        let cfg = OptimizerConfig { n_samples: 16, ..OptimizerConfig::for_algorithm(Algorithm::Avwbfo) };
        let run = || {
            let mut eval = pointwise(0.1, |u| -(u[0] - 1.0).abs());
            wbfo_step(&prior, &basis, &schedule(1.0, 5), NoiseCursor::new(0, 9), &mut eval, &cfg).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn evaluator_errors_propagate() {
        let basis = build_basis(4, 8).unwrap();
        let prior = NodeTrajectory::zeros(1, 4).unwrap();
        let mut failing = FnEvaluator::new(0.1, |_: &[DenseTrajectory]| -> Result<RewardMatrix> {
            Err(Error::Evaluation { sample: 3, source: Box::new(Error::Domain("boom".into())) })
        });
        let err = wbfo_step(&prior, &basis, &schedule(1.0, 0), NoiseCursor::default(), &mut failing, &OptimizerConfig::default())
            .unwrap_err();
        assert!(matches!(err, Error::Evaluation { sample: 3, .. }));

        let mut short = FnEvaluator::new(0.1, |c: &[DenseTrajectory]| RewardMatrix::new(nalgebra::DMatrix::zeros(c.len(), 3)));
        let err = wbfo_step(&prior, &basis, &schedule(1.0, 0), NoiseCursor::default(), &mut short, &OptimizerConfig::default())
            .unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }
}
