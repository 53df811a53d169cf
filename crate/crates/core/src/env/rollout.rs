//! Main/rollout lane hierarchy and batched open-loop evaluation.
//!
//! `N_m` main lanes are interleaved with their private rollout pools in one
//! flat array of `N_m · (1 + N_r)` environments: main lane `m` lives at index
//! `m · (1 + N_r)` and owns the `N_r` slots that follow it.

use rayon::prelude::*;

use super::{EnvState, Environment, StageCostTerms};
use crate::error::{Error, Result};
use crate::optimizer::RewardMatrix;
use crate::spline::DenseTrajectory;

/// Reward assigned to every remaining step of a lane whose simulation faulted.
pub const FAULT_PENALTY: f64 = -1.0e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LaneLayout {
    pub n_main: usize,
    pub n_rollout: usize,
}

impl LaneLayout {
    pub fn total(&self) -> usize {
        self.n_main * (1 + self.n_rollout)
    }

    pub fn main_index(&self, m: usize) -> usize {
        m * (1 + self.n_rollout)
    }

    pub fn rollout_range(&self, m: usize) -> std::ops::Range<usize> {
        let start = self.main_index(m) + 1;
        start..start + self.n_rollout
    }

    /// Main lane that owns flat index `i`.
    pub fn owner(&self, i: usize) -> usize {
        i / (1 + self.n_rollout)
    }
}

/// Step rewards of a batch of candidates plus per-lane diagnostics.
#[derive(Debug, Clone)]
pub struct RolloutBatch {
    pub rewards: RewardMatrix,
    pub faults: Vec<bool>,
    pub clamped: Vec<bool>,
    pub final_states: Vec<EnvState>,
}

fn check_candidates<E: Environment>(main: &E, candidates: &[DenseTrajectory]) -> Result<usize> {
    let first = candidates
        .first()
        .ok_or_else(|| Error::Shape("batch rollout needs at least one candidate".into()))?;
    let (dims, steps) = (first.dims(), first.steps());
    if dims != main.control_dim() {
        return Err(Error::Shape(format!(
            "candidate has {dims} control dims, environment expects {}",
            main.control_dim()
        )));
    }
    if let Some(i) = candidates.iter().position(|c| c.dims() != dims || c.steps() != steps) {
        return Err(Error::Shape(format!("candidate {i} shape differs from candidate 0")));
    }
    Ok(steps)
}

fn run_lane<E: Environment>(lane: &mut E, candidate: &DenseTrajectory, row: &mut [f64]) -> (bool, bool) {
    let mut clamped = false;
    for (k, slot) in row.iter_mut().enumerate() {
        let u: Vec<f64> = candidate.matrix().column(k).iter().copied().collect();
        match lane.step(&u) {
            Ok(out) => {
                *slot = out.reward;
                clamped |= out.clamped;
            }
            Err(_) => {
                for r in row[k..].iter_mut() {
                    *r = FAULT_PENALTY;
                }
                return (true, clamped);
            }
        }
    }
    (false, clamped)
}

/// Resets each lane to the main state, runs one candidate per lane open-loop
/// and returns the `N × T` step rewards in candidate order. `main` is only
/// read.
pub fn batch_rollout<E: Environment>(main: &E, lanes: &mut [E], candidates: &[DenseTrajectory]) -> Result<RolloutBatch> {
    let steps = check_candidates(main, candidates)?;
    if candidates.len() > lanes.len() {
        return Err(Error::Config(format!(
            "{} candidates exceed the rollout pool of {} lanes",
            candidates.len(),
            lanes.len()
        )));
    }
    let cache = main.snapshot();
    let n = candidates.len();
    let mut rows = vec![0.0; n * steps];
    let results: Vec<(bool, bool, EnvState)> = lanes[..n]
        .par_iter_mut()
        .zip(candidates.par_iter())
        .zip(rows.par_chunks_mut(steps.max(1)))
        .map(|((lane, cand), row)| -> Result<_> {
            lane.restore(&cache)?;
            let (fault, clamped) = run_lane(lane, cand, row);
            Ok((fault, clamped, lane.state().clone()))
        })
        .collect::<Result<_>>()?;

    let mut faults = Vec::with_capacity(n);
    let mut clamped = Vec::with_capacity(n);
    let mut final_states = Vec::with_capacity(n);
    for (f, c, s) in results {
        faults.push(f);
        clamped.push(c);
        final_states.push(s);
    }
    let rewards = RewardMatrix::from_row_slice(n, steps, &rows)?;
    Ok(RolloutBatch { rewards, faults, clamped, final_states })
}

/// Flat array of main lanes and their rollout pools.
#[derive(Debug, Clone)]
pub struct BatchedEnvs<E> {
    layout: LaneLayout,
    envs: Vec<E>,
}

impl<E: Environment> BatchedEnvs<E> {
    /// Builds the lane array; every rollout slot starts as a copy of its main.
    pub fn new(mains: Vec<E>, n_rollout: usize) -> Self {
        let layout = LaneLayout { n_main: mains.len(), n_rollout };
        let mut envs = Vec::with_capacity(layout.total());
        for main in mains {
            let pool: Vec<E> = (0..n_rollout).map(|_| main.clone()).collect();
            envs.push(main);
            envs.extend(pool);
        }
        Self { layout, envs }
    }

    pub fn layout(&self) -> LaneLayout {
        self.layout
    }

    pub fn main(&self, m: usize) -> &E {
        &self.envs[self.layout.main_index(m)]
    }

    pub fn main_mut(&mut self, m: usize) -> &mut E {
        let i = self.layout.main_index(m);
        &mut self.envs[i]
    }

    /// Evaluates `candidates` from main lane `m`'s current state. The main
    /// lane is frozen for the duration and restored from its cached snapshot
    /// afterwards.
    pub fn rollout(&mut self, m: usize, candidates: &[DenseTrajectory]) -> Result<RolloutBatch> {
        let idx = self.layout.main_index(m);
        let range = self.layout.rollout_range(m);
        let (head, tail) = self.envs.split_at_mut(range.start);
        let main = &mut head[idx];
        let cache = main.snapshot();
        let out = batch_rollout(&*main, &mut tail[..self.layout.n_rollout], candidates);
        main.restore(&cache)?;
        out
    }

    /// Runs one rollout lane of main `m` from the main state through the
    /// given controls, returning the resulting state.
    pub fn predict(&mut self, m: usize, controls: &DenseTrajectory) -> Result<EnvState> {
        let batch = self.rollout(m, std::slice::from_ref(controls))?;
        if batch.faults[0] {
            return Err(Error::SimulationFault { step: 0, reason: "prediction lane faulted".into() });
        }
        Ok(batch.final_states.into_iter().next().expect("one lane"))
    }
}

/// One executed transition, as written to trial replay files.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: u64,
    /// State before the step.
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub reward: f64,
    pub terms: StageCostTerms,
}

/// Executes `controls` open-loop on a copy of `env`, recording every step.
pub fn replay<E: Environment>(env: &E, controls: &DenseTrajectory) -> Result<Vec<StepRecord>> {
    let mut lane = env.clone();
    let mut out = Vec::with_capacity(controls.steps());
    for k in 0..controls.steps() {
        let u = controls.control(k);
        let x = lane.state().x.clone();
        let step = lane.state().k;
        let res = lane.step(&u)?;
        out.push(StepRecord { k: step, x, u, reward: res.reward, terms: res.terms });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Nav2d, Nav2dConfig, Pendulum, PendulumConfig, PendulumStart};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};

    fn random_controls(rng: &mut impl Rng, dims: usize, steps: usize, scale: f64, dt: f64) -> DenseTrajectory {
        DenseTrajectory::new(DMatrix::from_fn(dims, steps, |_, _| rng.random_range(-scale..scale)), dt).unwrap()
    }

    #[test]
    fn layout_interleaves_mains() {
        let l = LaneLayout { n_main: 3, n_rollout: 4 };
        assert_eq!(l.total(), 15);
        assert_eq!((0..3).map(|m| l.main_index(m)).collect::<Vec<_>>(), vec![0, 5, 10]);
        assert_eq!(l.rollout_range(1), 6..10);
        assert_eq!(l.owner(9), 1);
        assert_eq!(l.owner(10), 2);
    }

    #[test]
    fn batched_envs_place_mains_at_interval_indices() {
        let cfg = Nav2dConfig { n_obstacles: 0, ..Default::default() };
        let mains: Vec<Nav2d> = (0..3)
            .map(|i| {
                let mut e = Nav2d::reset(&cfg, 0).unwrap();
                e.set_state(EnvState { x: vec![i as f64, 0.0], k: 0, rng_cursor: 0 });
                e
            })
            .collect();
        let envs = BatchedEnvs::new(mains, 2);
        for m in 0..3 {
            assert_eq!(envs.main(m).state().x[0], m as f64);
        }
        assert_eq!(envs.envs.len(), 9);
        assert_eq!(envs.envs[4].state().x[0], 1.0);
    }

    #[test]
    fn identical_candidates_give_identical_rows() {
        let env = Nav2d::reset(&Nav2dConfig::default(), 4).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let c = random_controls(&mut rng, 2, 30, 3.0, 0.1);
        let mut lanes = vec![env.clone(); 4];
        let batch = batch_rollout(&env, &mut lanes, &[c.clone(), c]).unwrap();
        assert_eq!(batch.rewards.row(0), batch.rewards.row(1));
    }

    #[test]
    fn replay_oracle_matches_rollout() {
        let cfg = PendulumConfig { start: PendulumStart::NearUpright { max_angle: 0.2 }, ..Default::default() };
        let env = Pendulum::reset(&cfg, 9).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let c = random_controls(&mut rng, 1, 50, 8.0, 0.02);
        let rec = replay(&env, &c).unwrap();
        let mut lanes = vec![env.clone()];
        let batch = batch_rollout(&env, &mut lanes, std::slice::from_ref(&c)).unwrap();
        let rewards: Vec<f64> = rec.iter().map(|r| r.reward).collect();
        assert_eq!(batch.rewards.row(0), rewards);
    }

    #[test]
    fn pool_overflow_and_shape_errors() {
        let env = Nav2d::reset(&Nav2dConfig::default(), 0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let c = random_controls(&mut rng, 2, 10, 1.0, 0.1);
        let mut lanes = vec![env.clone(); 1];
        assert!(matches!(batch_rollout(&env, &mut lanes, &[c.clone(), c.clone()]), Err(Error::Config(_))));
        let wrong = random_controls(&mut rng, 1, 10, 1.0, 0.1);
        assert!(matches!(batch_rollout(&env, &mut lanes, &[wrong]), Err(Error::Shape(_))));
        let short = random_controls(&mut rng, 2, 9, 1.0, 0.1);
        let mut lanes = vec![env.clone(); 2];
        assert!(matches!(batch_rollout(&env, &mut lanes, &[c, short]), Err(Error::Shape(_))));
    }

    /// Integrator that faults whenever the control exceeds 100.
    #[derive(Debug, Clone)]
    struct Fragile {
        state: EnvState,
    }

    impl Environment for Fragile {
        fn control_dim(&self) -> usize {
            1
        }
        fn dt(&self) -> f64 {
            1.0
        }
        fn state(&self) -> &EnvState {
            &self.state
        }
        fn set_state(&mut self, state: EnvState) {
            self.state = state;
        }
        fn step(&mut self, u: &[f64]) -> Result<crate::env::StepOutcome> {
            if u[0] > 100.0 {
                return Err(Error::SimulationFault { step: self.state.k as usize, reason: "blew up".into() });
            }
            self.state.x[0] += u[0];
            self.state.k += 1;
            let terms = StageCostTerms { task: self.state.x[0].abs(), ..Default::default() };
            Ok(crate::env::StepOutcome { reward: terms.reward(), terms, clamped: false })
        }
        fn observation(&self) -> Vec<f64> {
            self.state.x.clone()
        }
        fn task_error(&self) -> f64 {
            self.state.x[0].abs()
        }
    }

    #[test]
    fn faulted_lane_is_penalized_and_flagged() {
        let env = Fragile { state: EnvState { x: vec![0.0], k: 0, rng_cursor: 0 } };
        let good = DenseTrajectory::new(DMatrix::from_row_slice(1, 5, &[1.0; 5]), 1.0).unwrap();
        let bad = DenseTrajectory::new(DMatrix::from_row_slice(1, 5, &[1.0, 1.0, 500.0, 1.0, 1.0]), 1.0).unwrap();
        let mut lanes = vec![env.clone(); 2];
        let batch = batch_rollout(&env, &mut lanes, &[good, bad]).unwrap();
        assert_eq!(batch.faults, vec![false, true]);
        assert_eq!(batch.rewards.row(1), vec![-1.0, -2.0, FAULT_PENALTY, FAULT_PENALTY, FAULT_PENALTY]);
        assert_eq!(batch.rewards.row(0), vec![-1.0, -2.0, -3.0, -4.0, -5.0]);
    }

    #[test]
    fn main_untouched_by_batched_rollout() {
        let cfg = Nav2dConfig::default();
        let mut envs = BatchedEnvs::new(vec![Nav2d::reset(&cfg, 1).unwrap(), Nav2d::reset(&cfg, 2).unwrap()], 3);
        envs.main_mut(0).step(&[1.0, 2.0]).unwrap();
        let before = envs.main(0).snapshot();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let cands: Vec<_> = (0..3).map(|_| random_controls(&mut rng, 2, 20, 4.0, 0.1)).collect();
        envs.rollout(0, &cands).unwrap();
        assert_eq!(envs.main(0).snapshot(), before);
    }
}
