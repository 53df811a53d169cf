//! Reward accumulation, basis-mapped node weights and the per-node softmax
//! update shared by WBFO and AVWBFO.

use nalgebra::DMatrix;

use super::RewardMatrix;
use crate::error::{Error, Result};
use crate::spline::{BasisPair, NodeTrajectory};

/// Standard deviations below this are treated as a tie.
pub const DEGENERATE_STD: f64 = 1e-12;

/// Per-sample, per-node weights (`N × K`).
#[derive(Debug, Clone, PartialEq)]
pub struct NodeWeightMatrix(DMatrix<f64>);

impl NodeWeightMatrix {
    pub fn new(data: DMatrix<f64>) -> Self {
        Self(data)
    }

    pub fn samples(&self) -> usize {
        self.0.nrows()
    }

    pub fn nodes(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Discounted suffix sums `R_acc(i, t) = Σ_{s ≥ t} r(i, s) · γ^{s−t}`.
/// `γ = 0` returns the step rewards unchanged.
pub fn accumulate_rewards(rewards: &RewardMatrix, gamma: f64) -> Result<RewardMatrix> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Config(format!("discount gamma must lie in [0, 1], got {gamma}")));
    }
    if gamma == 0.0 {
        return Ok(rewards.clone());
    }
    let r = rewards.matrix();
    let (n, t) = r.shape();
    let mut acc = DMatrix::<f64>::zeros(n, t);
    for i in 0..n {
        let mut running = 0.0;
        for s in (0..t).rev() {
            running = r[(i, s)] + gamma * running;
            acc[(i, s)] = running;
        }
    }
    RewardMatrix::new(acc)
}

/// `W = R_acc · phiᵀ`.
pub fn node_weights(accumulated: &RewardMatrix, basis: &BasisPair) -> Result<NodeWeightMatrix> {
    if accumulated.steps() != basis.steps() {
        return Err(Error::Shape(format!(
            "reward matrix has {} steps, basis expects {}",
            accumulated.steps(),
            basis.steps()
        )));
    }
    Ok(NodeWeightMatrix(accumulated.matrix() * basis.phi().transpose()))
}

/// Standardizes each node column over samples (population std). Columns
/// with std below [`DEGENERATE_STD`] become all zeros, as does everything
/// when there is a single sample.
pub fn normalize_weights(weights: &NodeWeightMatrix) -> NodeWeightMatrix {
    let w = weights.matrix();
    let (n, k) = w.shape();
    let mut out = DMatrix::<f64>::zeros(n, k);
    if n < 2 {
        return NodeWeightMatrix(out);
    }
    for j in 0..k {
        let col = w.column(j);
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        if std < DEGENERATE_STD {
            continue;
        }
        for i in 0..n {
            out[(i, j)] = (w[(i, j)] - mean) / std;
        }
    }
    NodeWeightMatrix(out)
}

/// Max-shifted softmax of `scores`.
pub(crate) fn softmax(scores: impl Iterator<Item = f64> + Clone) -> Vec<f64> {
    let max = scores.clone().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.map(|s| (s - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Convex combination `Σ_i w_i · x_i`, evaluated relative to the minimum so
/// that equal inputs are reproduced exactly, and kept inside `[min, max]`.
pub(crate) fn convex_combination(weights: &[f64], values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (lo, hi) = values.clone().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let offset: f64 = weights.iter().zip(values).map(|(w, v)| w * (v - lo)).sum();
    (lo + offset).clamp(lo, hi)
}

/// Softmax over samples at each node, then the weighted average of the
/// sampled node values: `P⁺(·, k) = Σ_i w(i, k) · P_i(·, k)`.
pub fn softmax_weights(normalized: &NodeWeightMatrix) -> NodeWeightMatrix {
    let w = normalized.matrix();
    let (n, k) = w.shape();
    let mut out = DMatrix::<f64>::zeros(n, k);
    for j in 0..k {
        let col = softmax(w.column(j).iter().copied());
        for (i, v) in col.into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    NodeWeightMatrix(out)
}

pub fn softmax_update(normalized: &NodeWeightMatrix, samples: &[DMatrix<f64>]) -> Result<NodeTrajectory> {
    let (n, k) = normalized.matrix().shape();
    if samples.len() != n {
        return Err(Error::Shape(format!("{} node samples for {n} weight rows", samples.len())));
    }
    let dims = samples[0].nrows();
    if let Some(i) = samples.iter().position(|s| s.nrows() != dims || s.ncols() != k) {
        return Err(Error::Shape(format!("node sample {i} is not {dims}×{k}")));
    }
    let weights = softmax_weights(normalized);
    let mut out = DMatrix::<f64>::zeros(dims, k);
    for j in 0..k {
        let wj: Vec<f64> = weights.matrix().column(j).iter().copied().collect();
        for d in 0..dims {
            out[(d, j)] = convex_combination(&wj, samples.iter().map(|s| s[(d, j)]));
        }
    }
    NodeTrajectory::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::build_basis;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn rm(rows: usize, cols: usize, v: &[f64]) -> RewardMatrix {
        RewardMatrix::from_row_slice(rows, cols, v).unwrap()
    }

    /// O(T²) double loop.
    pub(crate) fn brute_accumulate(r: &DMatrix<f64>, gamma: f64) -> DMatrix<f64> {
        let (n, t) = r.shape();
        DMatrix::from_fn(n, t, |i, start| {
            if gamma == 0.0 {
                return r[(i, start)];
            }
            (start..t).map(|s| r[(i, s)] * gamma.powi((s - start) as i32)).sum()
        })
    }

    #[test]
    fn accumulate_examples() {
        let r = rm(1, 3, &[1.0, 2.0, 3.0]);
        assert_eq!(accumulate_rewards(&r, 0.0).unwrap(), r);
        assert_eq!(accumulate_rewards(&r, 1.0).unwrap().row(0), vec![6.0, 5.0, 3.0]);
        let half = accumulate_rewards(&rm(1, 3, &[1.0, 1.0, 1.0]), 0.5).unwrap();
        let oracle = brute_accumulate(&DMatrix::from_element(1, 3, 1.0), 0.5);
        assert_eq!(oracle.row(0).iter().copied().collect::<Vec<_>>(), vec![1.75, 1.5, 1.0]);
        assert_eq!(half.row(0), vec![1.75, 1.5, 1.0]);
    }

    #[test]
    fn accumulate_rejects_bad_gamma() {
        let r = rm(1, 2, &[1.0, 2.0]);
        assert!(matches!(accumulate_rewards(&r, -0.1), Err(Error::Config(_))));
        assert!(matches!(accumulate_rewards(&r, 1.5), Err(Error::Config(_))));
    }

    #[test]
    fn node_weights_identity_basis() {
        let b = build_basis(4, 4).unwrap();
        let r = rm(2, 4, &[1.0, 2.0, 3.0, 4.0, -1.0, 0.5, 0.0, 2.0]);
        let w = node_weights(&r, &b).unwrap();
        assert_abs_diff_eq!(w.matrix().clone(), r.matrix().clone(), epsilon = 1e-15);
    }

    #[test]
    fn node_weights_uniform_reward_is_row_sum() {
        let b = build_basis(5, 23).unwrap();
        let r = RewardMatrix::new(DMatrix::from_element(3, 23, -2.0)).unwrap();
        let w = node_weights(&r, &b).unwrap();
        for k in 0..5 {
            let row_sum: f64 = b.phi().row(k).iter().sum();
            for i in 0..3 {
                assert_abs_diff_eq!(w.matrix()[(i, k)], -2.0 * row_sum, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn node_weights_unit_reward_picks_phi_column() {
        let b = build_basis(6, 31).unwrap();
        let mut r = DMatrix::zeros(1, 31);
        r[(0, 13)] = 2.5;
        let w = node_weights(&RewardMatrix::new(r).unwrap(), &b).unwrap();
        for k in 0..6 {
            assert_abs_diff_eq!(w.matrix()[(0, k)], 2.5 * b.phi()[(k, 13)], epsilon = 1e-15);
        }
    }

    #[test]
    fn node_weights_shape_mismatch() {
        let b = build_basis(4, 10).unwrap();
        assert!(matches!(node_weights(&rm(1, 9, &[0.0; 9]), &b), Err(Error::Shape(_))));
    }

    #[test]
    fn normalize_examples() {
        let w = NodeWeightMatrix::new(DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 3.0, 4.0]));
        let n = normalize_weights(&w);
        assert_eq!(n.matrix()[(0, 0)], 0.0);
        assert_eq!(n.matrix()[(1, 0)], 0.0);
        assert_abs_diff_eq!(n.matrix()[(0, 1)], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(n.matrix()[(1, 1)], 1.0, epsilon = 1e-15);
        let single = NodeWeightMatrix::new(DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]));
        assert!(normalize_weights(&single).matrix().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn softmax_update_examples() {
        let samples: Vec<DMatrix<f64>> =
            (0..3).map(|i| DMatrix::from_fn(1, 4, |_, k| (i * 4 + k) as f64)).collect();
        let uniform = NodeWeightMatrix::new(DMatrix::zeros(3, 4));
        let mean = softmax_update(&uniform, &samples).unwrap();
        for k in 0..4 {
            assert_abs_diff_eq!(mean.matrix()[(0, k)], (k + 4) as f64, epsilon = 1e-12);
        }
        let one = softmax_update(&NodeWeightMatrix::new(DMatrix::from_element(1, 4, 3.0)), &samples[..1]).unwrap();
        assert_eq!(one.matrix(), &samples[0]);
    }

    #[test]
    fn time_constant_rewards_rank_like_totals() {
        let b = build_basis(4, 12).unwrap();
        let per_step = [0.3, -1.2, 2.0, 0.9, -0.4];
        let r = RewardMatrix::new(DMatrix::from_fn(5, 12, |i, _| per_step[i])).unwrap();
        let w = softmax_weights(&normalize_weights(&node_weights(&r, &b).unwrap()));
        let mut by_total: Vec<usize> = (0..5).collect();
        by_total.sort_by(|&a, &c| per_step[a].total_cmp(&per_step[c]));
        for k in 0..4 {
            let mut by_weight: Vec<usize> = (0..5).collect();
            by_weight.sort_by(|&a, &c| w.matrix()[(a, k)].total_cmp(&w.matrix()[(c, k)]));
            assert_eq!(by_weight, by_total);
        }
    }

    #[test]
    fn softmax_is_overflow_safe() {
        let w = softmax([1000.0, 1001.0, -1000.0].into_iter());
        assert!(w.iter().all(|v| v.is_finite()));
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn accumulate_matches_brute_force(
            n in 1usize..8, t in 1usize..40,
            gamma in prop::sample::select(vec![0.0, 0.5, 0.9, 1.0]),
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let r = DMatrix::from_fn(n, t, |_, _| rng.random_range(-10.0..10.0));
            let fast = accumulate_rewards(&RewardMatrix::new(r.clone()).unwrap(), gamma).unwrap();
            let slow = brute_accumulate(&r, gamma);
            prop_assert!((fast.matrix() - slow).abs().max() <= 1e-10);
        }

        #[test]
        fn normalization_shift_invariant(c in -100.0f64..100.0, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let w = DMatrix::from_fn(6, 4, |_, _| rng.random_range(-5.0..5.0));
            let a = normalize_weights(&NodeWeightMatrix::new(w.clone()));
            let b = normalize_weights(&NodeWeightMatrix::new(w.add_scalar(c)));
            prop_assert!((a.matrix() - b.matrix()).abs().max() < 1e-9);
        }

        #[test]
        fn update_stays_in_hull(seed in any::<u64>(), n in 1usize..12) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let samples: Vec<DMatrix<f64>> = (0..n).map(|_| DMatrix::from_fn(2, 5, |_, _| rng.random_range(-3.0..3.0))).collect();
            let w = NodeWeightMatrix::new(DMatrix::from_fn(n, 5, |_, _| rng.random_range(-4.0..4.0)));
            let p = softmax_update(&w, &samples).unwrap();
            for d in 0..2 {
                for k in 0..5 {
                    let lo = samples.iter().map(|s| s[(d, k)]).fold(f64::INFINITY, f64::min);
                    let hi = samples.iter().map(|s| s[(d, k)]).fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(p.matrix()[(d, k)] >= lo && p.matrix()[(d, k)] <= hi);
                }
            }
        }
    }
}
