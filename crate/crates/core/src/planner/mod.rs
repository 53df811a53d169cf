//! Rolling receding-horizon planning.
//!
//! Each control step runs `n_denoise` optimizer iterations on the current
//! node trajectory, executes the first dense control on the main lane, then
//! shifts the dense horizon left by one and appends the warm-start policy's
//! action at the predicted tail state.

mod policy;

pub use policy::{builtin_policy, EnergySwingUp, Policy, ProportionalNav, ZeroPolicy};

use log::warn;
use nalgebra::DMatrix;

use crate::env::{env_reset, AnyEnv, BatchedEnvs, EnvConfig, Environment, StepRecord};
use crate::error::{Error, Result};
use crate::noise::NoiseSchedule;
use crate::optimizer::{optimizer_step, Evaluator, NoiseCursor, OptimizerConfig, RewardMatrix, StepStats};
use crate::spline::{dense_to_nodes, nodes_to_dense, BasisPair, DenseTrajectory, NodeTrajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig {
    /// Dense horizon `T`.
    pub horizon: usize,
    /// Spline nodes `K`.
    pub nodes: usize,
    /// Optimizer iterations per control step.
    pub n_denoise: usize,
    pub max_steps: usize,
    /// Episode succeeds once `task_error() <= success_radius`.
    pub success_radius: f64,
    /// Warm-start policy name (`zero`, `proportional`, `swingup`), or `None`
    /// for a zero initial trajectory and zero tail actions.
    pub warm_start: Option<String>,
    /// Dense controls executed between replans.
    pub execute_steps: usize,
    pub record_scores: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            horizon: 32,
            nodes: 8,
            n_denoise: 3,
            max_steps: 200,
            success_radius: 0.3,
            warm_start: None,
            execute_steps: 1,
            record_scores: false,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nodes < crate::spline::MIN_NODES {
            return Err(Error::Config(format!("planner.nodes must be >= {}, got {}", crate::spline::MIN_NODES, self.nodes)));
        }
        if self.horizon < self.nodes {
            return Err(Error::Config(format!(
                "planner.horizon ({}) must be >= planner.nodes ({})",
                self.horizon, self.nodes
            )));
        }
        if self.n_denoise == 0 {
            return Err(Error::Config("planner.n_denoise must be >= 1".into()));
        }
        if self.execute_steps == 0 || self.execute_steps > self.horizon {
            return Err(Error::Config(format!(
                "planner.execute_steps must lie in [1, horizon], got {}",
                self.execute_steps
            )));
        }
        if self.success_radius.is_nan() || self.success_radius < 0.0 {
            return Err(Error::Config(format!("planner.success_radius must be >= 0, got {}", self.success_radius)));
        }
        Ok(())
    }
}

/// Optimizer statistics of one denoising iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseRecord {
    pub iteration: usize,
    pub stats: StepStats,
    /// Frobenius norm of the node update.
    pub delta_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepTelemetry {
    pub record: StepRecord,
    pub task_error: f64,
    pub denoise: Vec<DenoiseRecord>,
}

/// Prior, update and noise scale of one optimizer call.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub step: usize,
    pub iteration: usize,
    pub prior: DMatrix<f64>,
    pub delta: DMatrix<f64>,
    pub sigma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub success: bool,
    /// Executed steps until success, or all executed steps otherwise.
    pub steps: usize,
    pub accumulated_reward: f64,
    pub final_task_error: f64,
    /// `l_f` of the final main state.
    pub terminal_cost: f64,
    /// Set when the episode stopped on a main-lane simulation fault.
    pub fault: Option<String>,
    pub telemetry: Vec<StepTelemetry>,
    pub scores: Vec<ScoreRecord>,
    /// Evaluated rollout lanes that faulted.
    pub rollout_faults: usize,
}

impl EpisodeResult {
    pub fn replay(&self) -> Vec<StepRecord> {
        self.telemetry.iter().map(|t| t.record.clone()).collect()
    }
}

/// Scores candidates by rolling them out from main lane `m`.
pub struct RolloutEvaluator<'a, E> {
    pub envs: &'a mut BatchedEnvs<E>,
    pub main: usize,
    pub faults: usize,
}

impl<'a, E: Environment> RolloutEvaluator<'a, E> {
    pub fn new(envs: &'a mut BatchedEnvs<E>, main: usize) -> Self {
        Self { envs, main, faults: 0 }
    }
}

impl<E: Environment> Evaluator for RolloutEvaluator<'_, E> {
    fn dt(&self) -> f64 {
        self.envs.main(self.main).dt()
    }

    fn evaluate(&mut self, candidates: &[DenseTrajectory]) -> Result<RewardMatrix> {
        let batch = self.envs.rollout(self.main, candidates)?;
        self.faults += batch.faults.iter().filter(|f| **f).count();
        Ok(batch.rewards)
    }
}

fn checked_action(policy: &dyn Policy, obs: &[f64], dims: usize) -> Result<Vec<f64>> {
    let u = policy.act(obs)?;
    if u.len() != dims {
        return Err(Error::Shape(format!("policy `{}` returned {} controls, expected {dims}", policy.name(), u.len())));
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("policy `{}` returned a non-finite control", policy.name())));
    }
    Ok(u)
}

/// Rolls `policy` forward `T` steps on a copy of `main` and fits nodes to the
/// resulting controls. Without a policy, or if it fails, the zero trajectory
/// is returned.
pub fn warm_start_init<E: Environment>(
    policy: Option<&dyn Policy>,
    main: &E,
    basis: &BasisPair,
) -> Result<NodeTrajectory> {
    let dims = main.control_dim();
    let Some(policy) = policy else {
        return NodeTrajectory::zeros(dims, basis.nodes());
    };
    let mut lane = main.clone();
    let mut data = DMatrix::zeros(dims, basis.steps());
    for k in 0..basis.steps() {
        let u = match checked_action(policy, &lane.observation(), dims).and_then(|u| lane.step(&u).map(|_| u)) {
            Ok(u) => u,
            Err(e) => {
                warn!("warm start fell back to zeros: {e}");
                return NodeTrajectory::zeros(dims, basis.nodes());
            }
        };
        data.column_mut(k).copy_from_slice(&u);
    }
    dense_to_nodes(&DenseTrajectory::new(data, main.dt())?, basis)
}

/// Drops the first dense control, appends `tail` and refits the nodes.
pub fn shift_and_append(nodes: &NodeTrajectory, basis: &BasisPair, tail: &[f64], dt: f64) -> Result<NodeTrajectory> {
    let dense = nodes_to_dense(nodes, basis, dt)?;
    if tail.len() != dense.dims() {
        return Err(Error::Shape(format!("tail action has {} dims, expected {}", tail.len(), dense.dims())));
    }
    let t = dense.steps();
    let mut data = DMatrix::zeros(dense.dims(), t);
    data.columns_mut(0, t - 1).copy_from(&dense.matrix().columns(1, t - 1));
    data.column_mut(t - 1).copy_from_slice(tail);
    dense_to_nodes(&DenseTrajectory::new(data, dt)?, basis)
}

/// Action appended after a shift: the policy's output at the state reached
/// by running the shifted controls from `main`. Falls back to `fallback`
/// when there is no policy or it fails.
fn tail_action<E: Environment>(
    envs: &mut BatchedEnvs<E>,
    policy: Option<&dyn Policy>,
    shifted: &DenseTrajectory,
    fallback: Vec<f64>,
) -> Vec<f64> {
    let Some(policy) = policy else {
        return vec![0.0; fallback.len()];
    };
    let dims = fallback.len();
    let predicted = envs.predict(0, shifted).and_then(|state| {
        let mut probe = envs.main(0).clone();
        probe.set_state(state);
        checked_action(policy, &probe.observation(), dims)
    });
    match predicted {
        Ok(u) => u,
        Err(e) => {
            warn!("tail action fell back to the previous control: {e}");
            fallback
        }
    }
}

/// Runs one receding-horizon episode from `env`'s current state.
pub fn run_episode<E: Environment>(
    env: E,
    planner: &PlannerConfig,
    optimizer: &OptimizerConfig,
    schedule: &NoiseSchedule,
    policy: Option<&dyn Policy>,
) -> Result<EpisodeResult> {
    planner.validate()?;
    optimizer.validate()?;
    schedule.validate()?;
    let basis = BasisPair::cached(planner.nodes, planner.horizon)?;
    let dt = env.dt();
    let dims = env.control_dim();
    if let Some(p) = policy {
        if p.control_dim() != dims {
            return Err(Error::Config(format!(
                "policy `{}` has {} controls, environment has {dims}",
                p.name(),
                p.control_dim()
            )));
        }
    }
    let mut nodes = warm_start_init(policy, &env, &basis)?;
    let mut envs = BatchedEnvs::new(vec![env], optimizer.n_samples.max(1));

    let mut result = EpisodeResult {
        success: false,
        steps: 0,
        accumulated_reward: 0.0,
        final_task_error: envs.main(0).task_error(),
        terminal_cost: 0.0,
        fault: None,
        telemetry: Vec::new(),
        scores: Vec::new(),
        rollout_faults: 0,
    };

    let mut executed = 0usize;
    let mut replan = 0u64;
    'episode: while executed < planner.max_steps {
        if envs.main(0).task_error() <= planner.success_radius {
            result.success = true;
            break;
        }
        let mut denoise = Vec::with_capacity(planner.n_denoise);
        {
            let mut evaluator = RolloutEvaluator::new(&mut envs, 0);
            for it in 0..planner.n_denoise {
                let cursor = NoiseCursor::new(it, replan);
                let out = optimizer_step(&nodes, &basis, schedule, cursor, &mut evaluator, optimizer)?;
                if planner.record_scores {
                    result.scores.push(ScoreRecord {
                        step: executed,
                        iteration: it,
                        prior: nodes.matrix().clone(),
                        delta: out.score.delta.clone(),
                        sigma: out.score.sigma_used.clone(),
                    });
                }
                denoise.push(DenoiseRecord { iteration: it, stats: out.stats, delta_norm: out.score.delta.norm() });
                nodes = out.nodes;
            }
            result.rollout_faults += evaluator.faults;
        }
        replan += 1;

        for j in 0..planner.execute_steps {
            if executed >= planner.max_steps {
                break;
            }
            let dense = nodes_to_dense(&nodes, &basis, dt)?;
            let u = dense.control(0);
            let main = envs.main_mut(0);
            let (k, x) = (main.state().k, main.state().x.clone());
            let outcome = match main.step(&u) {
                Ok(o) => o,
                Err(e) => {
                    result.fault = Some(e.to_string());
                    break 'episode;
                }
            };
            executed += 1;
            result.accumulated_reward += outcome.reward;
            result.telemetry.push(StepTelemetry {
                record: StepRecord { k, x, u: u.clone(), reward: outcome.reward, terms: outcome.terms },
                task_error: main.task_error(),
                denoise: if j == 0 { std::mem::take(&mut denoise) } else { Vec::new() },
            });

            let t = dense.steps();
            let prefix = DenseTrajectory::new(dense.matrix().columns(1, t - 1).into_owned(), dt)?;
            let last = dense.control(t - 1);
            let tail = tail_action(&mut envs, policy, &prefix, last);
            nodes = shift_and_append(&nodes, &basis, &tail, dt)?;

            if envs.main(0).task_error() <= planner.success_radius {
                result.success = true;
                break 'episode;
            }
        }
    }
    result.steps = executed;
    result.final_task_error = envs.main(0).task_error();
    result.terminal_cost = envs.main(0).terminal_cost();
    Ok(result)
}

/// Builds the environment and warm-start policy from configuration and runs
/// one episode. The seed drives the environment reset and, offset by
/// `schedule.seed`, the noise.
pub fn plan_episode(
    env_config: &EnvConfig,
    planner: &PlannerConfig,
    optimizer: &OptimizerConfig,
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<EpisodeResult> {
    let env = env_reset(env_config, seed)?;
    let policy = match &planner.warm_start {
        Some(name) => Some(builtin_policy(name, env.control_dim())?),
        None => None,
    };
    let schedule = NoiseSchedule { seed: schedule.seed.wrapping_add(seed), ..schedule.clone() };
    run_episode::<AnyEnv>(env, planner, optimizer, &schedule, policy.as_deref())
}

/// Runs `policy` alone in closed loop.
pub fn run_policy_episode<E: Environment>(
    mut env: E,
    policy: &dyn Policy,
    max_steps: usize,
    success_radius: f64,
) -> Result<EpisodeResult> {
    let dims = env.control_dim();
    let mut result = EpisodeResult {
        success: false,
        steps: 0,
        accumulated_reward: 0.0,
        final_task_error: env.task_error(),
        terminal_cost: 0.0,
        fault: None,
        telemetry: Vec::new(),
        scores: Vec::new(),
        rollout_faults: 0,
    };
    while result.steps < max_steps {
        if env.task_error() <= success_radius {
            result.success = true;
            break;
        }
        let (k, x) = (env.state().k, env.state().x.clone());
        let step = checked_action(policy, &env.observation(), dims).and_then(|u| env.step(&u).map(|o| (u, o)));
        let (u, outcome) = match step {
            Ok(v) => v,
            Err(e) => {
                result.fault = Some(e.to_string());
                break;
            }
        };
        result.steps += 1;
        result.accumulated_reward += outcome.reward;
        result.telemetry.push(StepTelemetry {
            record: StepRecord { k, x, u, reward: outcome.reward, terms: outcome.terms },
            task_error: env.task_error(),
            denoise: Vec::new(),
        });
    }
    if !result.success && env.task_error() <= success_radius {
        result.success = true;
    }
    result.final_task_error = env.task_error();
    result.terminal_cost = env.terminal_cost();
    Ok(result)
}
