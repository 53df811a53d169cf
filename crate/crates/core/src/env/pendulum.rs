//! Cart-pole with a uniform pole, integrated by fixed-step RK4.
//!
//! State `(x, θ, ẋ, θ̇)` with `θ = 0` upright and `θ = π` hanging down.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EnvState, Environment, StageCostTerms, StepOutcome};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PendulumStart {
    /// Pole hanging straight down at rest.
    Down,
    /// Pole at rest with an angle drawn uniformly from `±max_angle` (radians).
    NearUpright { max_angle: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PendulumConfig {
    pub cart_mass: f64,
    pub pole_mass: f64,
    pub half_length: f64,
    pub gravity: f64,
    pub force_limit: f64,
    pub dt: f64,
    pub start: PendulumStart,
    pub w_angle: f64,
    pub w_cart: f64,
    pub w_ctl: f64,
}

impl Default for PendulumConfig {
    fn default() -> Self {
        Self {
            cart_mass: 1.0,
            pole_mass: 0.1,
            half_length: 0.5,
            gravity: 9.81,
            force_limit: 10.0,
            dt: 0.02,
            start: PendulumStart::Down,
            w_angle: 1.0,
            w_cart: 0.1,
            w_ctl: 1e-3,
        }
    }
}

impl PendulumConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("env.cart_mass", self.cart_mass),
            ("env.pole_mass", self.pole_mass),
            ("env.half_length", self.half_length),
            ("env.force_limit", self.force_limit),
            ("env.dt", self.dt),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{key} must be positive, got {v}")));
            }
        }
        if [self.gravity, self.w_angle, self.w_cart, self.w_ctl].iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::Config("pendulum gravity and weights must be >= 0".into()));
        }
        Ok(())
    }
}

/// Wraps an angle to `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

#[derive(Debug, Clone)]
pub struct Pendulum {
    params: Arc<PendulumConfig>,
    state: EnvState,
}

impl Pendulum {
    pub fn reset(config: &PendulumConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = match config.start {
            PendulumStart::Down => PI,
            PendulumStart::NearUpright { max_angle } => {
                if max_angle == 0.0 {
                    0.0
                } else {
                    rng.random_range(-max_angle..=max_angle)
                }
            }
        };
        let state = EnvState { x: vec![0.0, theta, 0.0, 0.0], k: 0, rng_cursor: rng.get_word_pos() as u64 };
        Ok(Self { params: Arc::new(config.clone()), state })
    }

    pub fn params(&self) -> &PendulumConfig {
        &self.params
    }

    /// Time derivative of `(x, θ, ẋ, θ̇)` under horizontal force `force`.
    pub fn derivative(&self, s: [f64; 4], force: f64) -> [f64; 4] {
        let p = &*self.params;
        let total = p.cart_mass + p.pole_mass;
        let (sin, cos) = s[1].sin_cos();
        let pml = p.pole_mass * p.half_length;
        let temp = (force + pml * s[3] * s[3] * sin) / total;
        let theta_acc =
            (p.gravity * sin - cos * temp) / (p.half_length * (4.0 / 3.0 - p.pole_mass * cos * cos / total));
        let x_acc = temp - pml * theta_acc * cos / total;
        [s[2], s[3], x_acc, theta_acc]
    }

    pub fn rk4(&self, s: [f64; 4], force: f64, dt: f64) -> [f64; 4] {
        let add = |a: [f64; 4], b: [f64; 4], h: f64| [a[0] + h * b[0], a[1] + h * b[1], a[2] + h * b[2], a[3] + h * b[3]];
        let k1 = self.derivative(s, force);
        let k2 = self.derivative(add(s, k1, dt / 2.0), force);
        let k3 = self.derivative(add(s, k2, dt / 2.0), force);
        let k4 = self.derivative(add(s, k3, dt), force);
        let mut out = s;
        for i in 0..4 {
            out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out
    }

    /// Mechanical energy, potential measured from the pivot height.
    pub fn energy(&self) -> f64 {
        let p = &*self.params;
        let [_, th, xd, thd] = self.raw();
        let (sin, cos) = th.sin_cos();
        let l = p.half_length;
        let vcx = xd + l * cos * thd;
        let vcy = -l * sin * thd;
        let inertia = p.pole_mass * l * l / 3.0;
        0.5 * p.cart_mass * xd * xd
            + 0.5 * p.pole_mass * (vcx * vcx + vcy * vcy)
            + 0.5 * inertia * thd * thd
            + p.pole_mass * p.gravity * l * cos
    }

    fn raw(&self) -> [f64; 4] {
        [self.state.x[0], self.state.x[1], self.state.x[2], self.state.x[3]]
    }

    pub fn stage_terms(&self, s: [f64; 4], force: f64) -> StageCostTerms {
        let p = &*self.params;
        let th = wrap_angle(s[1]);
        StageCostTerms {
            task: p.w_angle * th * th + p.w_cart * s[0] * s[0],
            obstacle: 0.0,
            control: p.w_ctl * force * force,
        }
    }
}

impl Environment for Pendulum {
    fn control_dim(&self) -> usize {
        1
    }

    fn dt(&self) -> f64 {
        self.params.dt
    }

    fn state(&self) -> &EnvState {
        &self.state
    }

    fn set_state(&mut self, state: EnvState) {
        self.state = state;
    }

    fn step(&mut self, u: &[f64]) -> Result<StepOutcome> {
        let limit = self.params.force_limit;
        let clamped = u[0].abs() > limit;
        let force = u[0].clamp(-limit, limit);
        let next = self.rk4(self.raw(), force, self.params.dt);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::SimulationFault { step: self.state.k as usize, reason: "non-finite cart-pole state".into() });
        }
        self.state.x.copy_from_slice(&next);
        self.state.k += 1;
        let terms = self.stage_terms(next, force);
        Ok(StepOutcome { reward: terms.reward(), terms, clamped })
    }

    fn observation(&self) -> Vec<f64> {
        let [x, th, xd, thd] = self.raw();
        vec![x, wrap_angle(th), xd, thd]
    }

    fn task_error(&self) -> f64 {
        wrap_angle(self.state.x[1]).abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn default_start_is_hanging() {
        let env = Pendulum::reset(&PendulumConfig::default(), 3).unwrap();
        assert_eq!(env.state().x, vec![0.0, PI, 0.0, 0.0]);
        assert_eq!(Pendulum::reset(&PendulumConfig::default(), 3).unwrap().state(), env.state());
    }

    #[test]
    fn near_upright_start_is_seeded() {
        let cfg = PendulumConfig { start: PendulumStart::NearUpright { max_angle: 0.3 }, ..Default::default() };
        let a = Pendulum::reset(&cfg, 1).unwrap();
        let b = Pendulum::reset(&cfg, 1).unwrap();
        assert_eq!(a.state(), b.state());
        assert!(a.state().x[1].abs() <= 0.3);
    }

    #[test]
    fn upright_is_a_fixed_point() {
        let cfg = PendulumConfig { start: PendulumStart::NearUpright { max_angle: 0.0 }, ..Default::default() };
        let mut env = Pendulum::reset(&cfg, 0).unwrap();
        env.step(&[0.0]).unwrap();
        for v in &env.state().x {
            assert!(v.abs() <= 1e-12);
        }
    }

    #[test]
    fn energy_conserved_without_force() {
        let mut env = Pendulum::reset(&PendulumConfig::default(), 0).unwrap();
        env.set_state(EnvState { x: vec![0.0, 2.0, 0.3, -1.0], k: 0, rng_cursor: 0 });
        let e0 = env.energy();
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            env.step(&[0.0]).unwrap();
            worst = worst.max((env.energy() - e0).abs() / e0.abs());
        }
        assert!(worst <= 1e-3, "relative drift {worst}");
    }

    #[test]
    fn force_is_clamped() {
        let mut env = Pendulum::reset(&PendulumConfig::default(), 0).unwrap();
        let out = env.step(&[50.0]).unwrap();
        assert!(out.clamped);
        assert_abs_diff_eq!(out.terms.control, 1e-3 * 100.0, epsilon = 1e-12);
    }

    #[test]
    fn wrap_angle_range() {
        assert_abs_diff_eq!(wrap_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(-0.5), -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_angle(2.0 * PI + 0.25), 0.25, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn reward_decomposes(th in -4.0f64..4.0, f in -15.0f64..15.0, xd in -2.0f64..2.0) {
            let mut env = Pendulum::reset(&PendulumConfig::default(), 0).unwrap();
            env.set_state(EnvState { x: vec![0.2, th, xd, 0.5], k: 0, rng_cursor: 0 });
            let out = env.step(&[f]).unwrap();
            prop_assert!((out.reward + out.terms.total()).abs() <= 1e-12);
        }
    }
}
