//! Environments, snapshot/restore and the batched rollout engine.

mod nav2d;
mod pendulum;
mod rollout;

pub use nav2d::{Barrier, Circle, Nav2d, Nav2dConfig, Segment};
pub use pendulum::{Pendulum, PendulumConfig, PendulumStart};
pub use rollout::{replay, BatchedEnvs, LaneLayout, RolloutBatch, StepRecord, FAULT_PENALTY};

use crate::error::{Error, Result};

/// Raw simulator state: state vector, time index and RNG cursor.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub x: Vec<f64>,
    pub k: u64,
    pub rng_cursor: u64,
}

const SNAPSHOT_MAGIC: &[u8; 4] = b"WBST";
const SNAPSHOT_VERSION: u8 = 1;

/// Opaque, checksummed serialization of an [`EnvState`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot(Vec<u8>);

impl Snapshot {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Snapshot(bytes)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ *b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn snapshot(state: &EnvState) -> Snapshot {
    let mut buf = Vec::with_capacity(4 + 1 + 4 + 8 * state.x.len() + 24);
    buf.extend_from_slice(SNAPSHOT_MAGIC);
    buf.push(SNAPSHOT_VERSION);
    buf.extend_from_slice(&(state.x.len() as u32).to_le_bytes());
    for v in &state.x {
        buf.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    buf.extend_from_slice(&state.k.to_le_bytes());
    buf.extend_from_slice(&state.rng_cursor.to_le_bytes());
    let sum = fnv1a(&buf);
    buf.extend_from_slice(&sum.to_le_bytes());
    Snapshot(buf)
}

pub fn restore(blob: &Snapshot) -> Result<EnvState> {
    let b = &blob.0;
    let bad = |why: &str| Error::Integrity(why.to_string());
    if b.len() < 4 + 1 + 4 + 24 {
        return Err(bad("blob too short"));
    }
    let (body, tail) = b.split_at(b.len() - 8);
    let want = u64::from_le_bytes(tail.try_into().unwrap());
    if fnv1a(body) != want {
        return Err(bad("checksum mismatch"));
    }
    if &body[..4] != SNAPSHOT_MAGIC {
        return Err(bad("bad magic"));
    }
    if body[4] != SNAPSHOT_VERSION {
        return Err(bad("unsupported version"));
    }
    let n = u32::from_le_bytes(body[5..9].try_into().unwrap()) as usize;
    if body.len() != 9 + 8 * n + 16 {
        return Err(bad("length does not match header"));
    }
    let word = |i: usize| u64::from_le_bytes(body[i..i + 8].try_into().unwrap());
    let x = (0..n).map(|i| f64::from_bits(word(9 + 8 * i))).collect();
    let k = word(9 + 8 * n);
    let rng_cursor = word(17 + 8 * n);
    Ok(EnvState { x, k, rng_cursor })
}

/// Stage-cost decomposition; each term is non-negative and the step reward
/// is the negated sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageCostTerms {
    pub task: f64,
    pub obstacle: f64,
    pub control: f64,
}

impl StageCostTerms {
    pub fn total(&self) -> f64 {
        self.task + self.obstacle + self.control
    }

    pub fn reward(&self) -> f64 {
        -self.total()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub terms: StageCostTerms,
    /// The requested control exceeded its bounds and was clamped.
    pub clamped: bool,
}

/// Simulator contract shared by the main lane and every rollout lane.
///
/// Implementations hold immutable world data behind a cheap clone and a
/// mutable [`EnvState`].
pub trait Environment: Clone + Send + Sync {
    fn control_dim(&self) -> usize;

    fn dt(&self) -> f64;

    fn state(&self) -> &EnvState;

    fn set_state(&mut self, state: EnvState);

    /// Advance one step with control `u`.
    fn step(&mut self, u: &[f64]) -> Result<StepOutcome>;

    /// Observation fed to warm-start policies.
    fn observation(&self) -> Vec<f64>;

    /// Distance from task completion (metres to goal, or radians from upright).
    fn task_error(&self) -> f64;

    /// Terminal cost `l_f` of the current state.
    fn terminal_cost(&self) -> f64 {
        0.0
    }

    fn snapshot(&self) -> Snapshot {
        snapshot(self.state())
    }

    fn restore(&mut self, blob: &Snapshot) -> Result<()> {
        let state = restore(blob)?;
        if state.x.len() != self.state().x.len() {
            return Err(Error::Integrity(format!(
                "snapshot state has {} entries, environment expects {}",
                state.x.len(),
                self.state().x.len()
            )));
        }
        self.set_state(state);
        Ok(())
    }
}

/// Discounted finite-horizon cost
/// `J = e^{−α·T·Δt}·l_f + Σ_k e^{−α·Δt·k}·l_k·Δt` with `l_k = −reward_k`.
pub fn total_cost(rewards: &[f64], alpha: f64, dt: f64, terminal: f64) -> f64 {
    let stage: f64 = rewards
        .iter()
        .enumerate()
        .map(|(k, r)| (-alpha * dt * k as f64).exp() * (-r) * dt)
        .sum();
    let horizon = rewards.len() as f64;
    let term = if terminal == 0.0 { 0.0 } else { (-alpha * horizon * dt).exp() * terminal };
    stage + term
}

/// Either built-in environment, for config-driven experiments.
#[derive(Debug, Clone)]
pub enum AnyEnv {
    Nav2d(Nav2d),
    Pendulum(Pendulum),
}

impl AnyEnv {
    pub fn kind(&self) -> &'static str {
        match self {
            AnyEnv::Nav2d(_) => "nav2d",
            AnyEnv::Pendulum(_) => "pendulum",
        }
    }
}

macro_rules! delegate {
    ($self:ident, $e:ident => $body:expr) => {
        match $self {
            AnyEnv::Nav2d($e) => $body,
            AnyEnv::Pendulum($e) => $body,
        }
    };
}

impl Environment for AnyEnv {
    fn control_dim(&self) -> usize {
        delegate!(self, e => e.control_dim())
    }
    fn dt(&self) -> f64 {
        delegate!(self, e => e.dt())
    }
    fn state(&self) -> &EnvState {
        delegate!(self, e => e.state())
    }
    fn set_state(&mut self, state: EnvState) {
        delegate!(self, e => e.set_state(state))
    }
    fn step(&mut self, u: &[f64]) -> Result<StepOutcome> {
        delegate!(self, e => e.step(u))
    }
    fn observation(&self) -> Vec<f64> {
        delegate!(self, e => e.observation())
    }
    fn task_error(&self) -> f64 {
        delegate!(self, e => e.task_error())
    }
    fn terminal_cost(&self) -> f64 {
        delegate!(self, e => e.terminal_cost())
    }
}

/// Environment selection as read from an experiment config.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvConfig {
    Nav2d(Nav2dConfig),
    Pendulum(PendulumConfig),
}

impl EnvConfig {
    pub fn control_dim(&self) -> usize {
        match self {
            EnvConfig::Nav2d(_) => 2,
            EnvConfig::Pendulum(_) => 1,
        }
    }

    pub fn dt(&self) -> f64 {
        match self {
            EnvConfig::Nav2d(c) => c.dt,
            EnvConfig::Pendulum(c) => c.dt,
        }
    }
}

/// Deterministic initial environment for `(config, seed)`.
pub fn env_reset(config: &EnvConfig, seed: u64) -> Result<AnyEnv> {
    Ok(match config {
        EnvConfig::Nav2d(c) => AnyEnv::Nav2d(Nav2d::reset(c, seed)?),
        EnvConfig::Pendulum(c) => AnyEnv::Pendulum(Pendulum::reset(c, seed)?),
    })
}
