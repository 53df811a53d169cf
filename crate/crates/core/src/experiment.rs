//! Trial protocols and benchmark presets.
//!
//! A [`TrialSpec`] fully determines one trial: the protocol, every config
//! block and the seed. [`run_trial`] is a pure function of it.

use crate::env::{env_reset, total_cost, Barrier, EnvConfig, Environment, Nav2dConfig, PendulumConfig, PendulumStart};
use crate::env::{replay, BatchedEnvs, StepRecord};
use crate::error::{Error, Result};
use crate::noise::NoiseSchedule;
use crate::optimizer::{optimizer_step, Algorithm, NoiseCursor, OptimizerConfig, StepStats};
use crate::planner::{builtin_policy, plan_episode, run_policy_episode, PlannerConfig, RolloutEvaluator, ScoreRecord};
use crate::spline::{nodes_to_dense, BasisPair, NodeTrajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    /// Open-loop optimization of one horizon from the initial state for
    /// `opt.iterations` iterations, then a final rollout.
    TrajOpt,
    /// Receding-horizon episode.
    Planner,
    /// The warm-start policy alone in closed loop.
    Policy,
}

impl Protocol {
    pub fn name(&self) -> &'static str {
        match self {
            Protocol::TrajOpt => "trajopt",
            Protocol::Planner => "planner",
            Protocol::Policy => "policy",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "trajopt" => Ok(Protocol::TrajOpt),
            "planner" => Ok(Protocol::Planner),
            "policy" => Ok(Protocol::Policy),
            other => Err(Error::Config(format!("unknown protocol `{other}` (expected trajopt, planner or policy)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSpec {
    pub protocol: Protocol,
    pub env: EnvConfig,
    pub optimizer: OptimizerConfig,
    pub noise: NoiseSchedule,
    /// Horizon and node count are shared with the trajopt protocol.
    pub planner: PlannerConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    /// `J` of the executed (planner, policy) or final (trajopt) trajectory;
    /// lower is better.
    pub final_cost: f64,
    pub success: bool,
    pub steps: usize,
    pub mean_reward: f64,
    pub final_task_error: f64,
    pub replay: Vec<StepRecord>,
    pub scores: Vec<ScoreRecord>,
    /// Per-iteration batch statistics (trajopt only).
    pub history: Vec<StepStats>,
    pub fault: Option<String>,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn run_trial(spec: &TrialSpec) -> Result<TrialOutcome> {
    match spec.protocol {
        Protocol::TrajOpt => run_trajopt(spec),
        Protocol::Planner => {
            let ep = plan_episode(&spec.env, &spec.planner, &spec.optimizer, &spec.noise, spec.seed)?;
            let replay = ep.replay();
            let rewards: Vec<f64> = replay.iter().map(|r| r.reward).collect();
            Ok(TrialOutcome {
                final_cost: total_cost(&rewards, spec.optimizer.alpha, spec.env.dt(), ep.terminal_cost),
                success: ep.success,
                steps: ep.steps,
                mean_reward: mean(&rewards),
                final_task_error: ep.final_task_error,
                replay,
                scores: ep.scores,
                history: Vec::new(),
                fault: ep.fault,
            })
        }
        Protocol::Policy => {
            let env = env_reset(&spec.env, spec.seed)?;
            let name = spec.planner.warm_start.as_deref().unwrap_or("zero");
            let policy = builtin_policy(name, env.control_dim())?;
            let ep = run_policy_episode(env, policy.as_ref(), spec.planner.max_steps, spec.planner.success_radius)?;
            let replay = ep.replay();
            let rewards: Vec<f64> = replay.iter().map(|r| r.reward).collect();
            Ok(TrialOutcome {
                final_cost: total_cost(&rewards, spec.optimizer.alpha, spec.env.dt(), ep.terminal_cost),
                success: ep.success,
                steps: ep.steps,
                mean_reward: mean(&rewards),
                final_task_error: ep.final_task_error,
                replay,
                scores: Vec::new(),
                history: Vec::new(),
                fault: ep.fault,
            })
        }
    }
}

fn run_trajopt(spec: &TrialSpec) -> Result<TrialOutcome> {
    spec.optimizer.validate()?;
    spec.planner.validate()?;
    let schedule = NoiseSchedule { seed: spec.noise.seed.wrapping_add(spec.seed), ..spec.noise.clone() };
    schedule.validate()?;
    let env = env_reset(&spec.env, spec.seed)?;
    let dt = env.dt();
    let basis = BasisPair::cached(spec.planner.nodes, spec.planner.horizon)?;
    let mut nodes = NodeTrajectory::zeros(env.control_dim(), basis.nodes())?;
    let mut envs = BatchedEnvs::new(vec![env], spec.optimizer.n_samples);
    let mut history = Vec::with_capacity(spec.optimizer.iterations);
    let mut scores = Vec::new();
    {
        let mut evaluator = RolloutEvaluator::new(&mut envs, 0);
        for it in 0..spec.optimizer.iterations {
            let out = optimizer_step(&nodes, &basis, &schedule, NoiseCursor::new(it, 0), &mut evaluator, &spec.optimizer)?;
            if spec.planner.record_scores {
                scores.push(ScoreRecord {
                    step: 0,
                    iteration: it,
                    prior: nodes.matrix().clone(),
                    delta: out.score.delta.clone(),
                    sigma: out.score.sigma_used.clone(),
                });
            }
            history.push(out.stats);
            nodes = out.nodes;
        }
    }
    let main = envs.main(0);
    let dense = nodes_to_dense(&nodes, &basis, dt)?;
    let (records, fault, terminal, task_error) = match replay(main, &dense) {
        Ok(records) => {
            let mut end = main.clone();
            for r in &records {
                end.step(&r.u)?;
            }
            (records, None, end.terminal_cost(), end.task_error())
        }
        Err(e) => (Vec::new(), Some(e.to_string()), 0.0, main.task_error()),
    };
    let rewards: Vec<f64> = records.iter().map(|r| r.reward).collect();
    let final_cost = if fault.is_some() { f64::INFINITY } else { total_cost(&rewards, spec.optimizer.alpha, dt, terminal) };
    Ok(TrialOutcome {
        final_cost,
        success: fault.is_none() && task_error <= spec.planner.success_radius,
        steps: records.len(),
        mean_reward: mean(&rewards),
        final_task_error: task_error,
        replay: records,
        scores,
        history,
        fault,
    })
}

/// Named benchmark setups. Each returns a spec with seed 0 for the given
/// algorithm and sample count; callers set the seed per trial.
pub mod presets {
    use super::*;

    /// MPPI temperature used by all presets.
    pub const MPPI_LAMBDA: f64 = 1.0;

    pub fn optimizer(algorithm: Algorithm, n_samples: usize) -> OptimizerConfig {
        OptimizerConfig { n_samples, lambda: MPPI_LAMBDA, ..OptimizerConfig::for_algorithm(algorithm) }
    }

    fn default_schedule() -> NoiseSchedule {
        NoiseSchedule { sigma0: 3.0, decay: 0.6, ..NoiseSchedule::default() }
    }

    /// Open-loop 2D navigation: 25 obstacles, 16 nodes → 64 dense steps,
    /// 10 iterations.
    pub fn nav2d_trajopt(algorithm: Algorithm, n_samples: usize) -> TrialSpec {
        TrialSpec {
            protocol: Protocol::TrajOpt,
            env: EnvConfig::Nav2d(Nav2dConfig::default()),
            optimizer: optimizer(algorithm, n_samples),
            noise: default_schedule(),
            planner: PlannerConfig { horizon: 64, nodes: 16, ..PlannerConfig::default() },
            seed: 0,
        }
    }

    /// Open-loop cart-pole stabilization from a tilted start: 32 nodes →
    /// 128 dense steps, 10 iterations.
    pub fn pendulum_trajopt(algorithm: Algorithm, n_samples: usize) -> TrialSpec {
        TrialSpec {
            protocol: Protocol::TrajOpt,
            env: EnvConfig::Pendulum(PendulumConfig {
                start: PendulumStart::NearUpright { max_angle: 0.3 },
                ..PendulumConfig::default()
            }),
            optimizer: optimizer(algorithm, n_samples),
            noise: default_schedule(),
            planner: PlannerConfig { horizon: 128, nodes: 32, success_radius: 0.05, ..PlannerConfig::default() },
            seed: 0,
        }
    }

    /// Reach a goal on the far side of a wall through an off-axis gap,
    /// within 150 steps.
    pub fn wall_gap(algorithm: Algorithm, n_samples: usize) -> TrialSpec {
        TrialSpec {
            protocol: Protocol::Planner,
            env: EnvConfig::Nav2d(Nav2dConfig {
                n_obstacles: 0,
                start: [2.0, 4.0],
                goal: [8.0, 4.0],
                start_jitter: 0.5,
                goal_jitter: 0.5,
                barrier: Barrier::Wall { position: 5.0, gap_center: 5.5, gap_width: 0.8 },
                ..Nav2dConfig::default()
            }),
            optimizer: optimizer(algorithm, n_samples),
            noise: default_schedule(),
            planner: PlannerConfig { max_steps: 150, ..PlannerConfig::default() },
            seed: 0,
        }
    }

    /// Escape a square box around the start through a side gap and reach an
    /// external goal within 300 steps.
    pub fn box_barrier(algorithm: Algorithm, n_samples: usize, warm_start: bool) -> TrialSpec {
        TrialSpec {
            protocol: Protocol::Planner,
            env: EnvConfig::Nav2d(Nav2dConfig {
                n_obstacles: 0,
                start: [5.0, 5.0],
                goal: [9.0, 5.0],
                goal_jitter: 0.5,
                barrier: Barrier::Box { half_size: 1.0, gap_width: 0.6 },
                ..Nav2dConfig::default()
            }),
            optimizer: optimizer(algorithm, n_samples),
            noise: default_schedule(),
            planner: PlannerConfig {
                max_steps: 300,
                warm_start: warm_start.then(|| "proportional".to_string()),
                ..PlannerConfig::default()
            },
            seed: 0,
        }
    }

    /// [`box_barrier`] driven by the proportional policy alone.
    pub fn box_barrier_policy() -> TrialSpec {
        TrialSpec { protocol: Protocol::Policy, ..box_barrier(Algorithm::Wbfo, 1, true) }
    }
}
