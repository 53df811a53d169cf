//! Spline-basis sampling trajectory optimization.
//!
//! Control trajectories live on `K` Catmull-Rom nodes and are expanded to
//! `T` dense steps through a cached basis ([`spline`]). Optimizers sample
//! perturbed nodes ([`noise`]), score them with batched environment
//! rollouts ([`env`]) and blend the samples per node (WBFO/AVWBFO) or per
//! trajectory (MPPI) in [`optimizer`]. [`planner`] runs them in a receding
//! horizon loop and [`experiment`] holds the benchmark protocols.

pub mod env;
pub mod error;
pub mod experiment;
pub mod noise;
pub mod optimizer;
pub mod planner;
pub mod spline;

pub use env::{
    env_reset, total_cost, AnyEnv, BatchedEnvs, EnvConfig, EnvState, Environment, Nav2d, Nav2dConfig, Pendulum,
    PendulumConfig, RolloutBatch, StageCostTerms, StepOutcome,
};
pub use error::{Error, Result};
pub use noise::{NoiseSchedule, NoiseSource};
pub use optimizer::{
    mppi_step, optimizer_step, wbfo_step, Algorithm, Evaluator, NoiseCursor, OptimizerConfig, RewardMatrix,
    ScoreEstimate, StepOutput,
};
pub use planner::{plan_episode, EpisodeResult, PlannerConfig, Policy};
pub use spline::{build_basis, dense_to_nodes, nodes_to_dense, BasisPair, DenseTrajectory, NodeTrajectory};
