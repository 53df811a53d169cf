//! Fixtures shared by the benchmarks.

use nalgebra::DMatrix;
use wbfo_core::{DenseTrajectory, Nav2d, Nav2dConfig, NodeTrajectory, RewardMatrix};

pub fn nav2d(seed: u64) -> Nav2d {
    Nav2d::reset(&Nav2dConfig::default(), seed).expect("default nav2d config is valid")
}

/// Deterministic, non-trivial node values.
pub fn wavy_nodes(dims: usize, nodes: usize) -> NodeTrajectory {
    NodeTrajectory::new(DMatrix::from_fn(dims, nodes, |d, k| (0.7 * k as f64 + d as f64).sin())).expect("finite nodes")
}

/// `n` distinct dense control sequences with values in `[-2, 2]`.
pub fn candidates(n: usize, dims: usize, steps: usize, dt: f64) -> Vec<DenseTrajectory> {
    (0..n)
        .map(|i| {
            let m = DMatrix::from_fn(dims, steps, |d, k| 2.0 * ((i * 31 + d * 7 + k) as f64 * 0.37).sin());
            DenseTrajectory::new(m, dt).expect("finite controls")
        })
        .collect()
}

/// Negative squared distance of each dense control from `target`.
pub fn bowl_rewards(candidates: &[DenseTrajectory], target: f64) -> RewardMatrix {
    let steps = candidates[0].steps();
    let m = DMatrix::from_fn(candidates.len(), steps, |i, k| {
        let u = candidates[i].matrix().column(k);
        -u.iter().map(|v| (v - target).powi(2)).sum::<f64>()
    });
    RewardMatrix::new(m).expect("finite rewards")
}
