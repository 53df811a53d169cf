//! Warm-start policies: observation → control.

use crate::error::{Error, Result};

/// Deterministic feedback policy used to seed and extend planned trajectories.
pub trait Policy: Send + Sync {
    fn name(&self) -> &str;

    fn control_dim(&self) -> usize;

    fn act(&self, observation: &[f64]) -> Result<Vec<f64>>;
}

/// Always returns zeros.
#[derive(Debug, Clone)]
pub struct ZeroPolicy {
    pub dims: usize,
}

impl Policy for ZeroPolicy {
    fn name(&self) -> &str {
        "zero"
    }

    fn control_dim(&self) -> usize {
        self.dims
    }

    fn act(&self, _observation: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![0.0; self.dims])
    }
}

/// Nav2D: velocity proportional to the goal offset, capped at `max_speed`.
/// Expects the observation `[px, py, gx − px, gy − py]`.
#[derive(Debug, Clone)]
pub struct ProportionalNav {
    pub gain: f64,
    pub max_speed: f64,
}

impl Default for ProportionalNav {
    fn default() -> Self {
        Self { gain: 1.5, max_speed: 2.0 }
    }
}

impl Policy for ProportionalNav {
    fn name(&self) -> &str {
        "proportional"
    }

    fn control_dim(&self) -> usize {
        2
    }

    fn act(&self, obs: &[f64]) -> Result<Vec<f64>> {
        if obs.len() < 4 {
            return Err(Error::Shape(format!("proportional policy needs 4 observations, got {}", obs.len())));
        }
        let (vx, vy) = (self.gain * obs[2], self.gain * obs[3]);
        let speed = (vx * vx + vy * vy).sqrt();
        let scale = if speed > self.max_speed { self.max_speed / speed } else { 1.0 };
        Ok(vec![vx * scale, vy * scale])
    }
}

/// Cart-pole: energy-pumping swing-up far from upright, linear balance
/// feedback near it. Expects `[x, θ (wrapped), ẋ, θ̇]`.
#[derive(Debug, Clone)]
pub struct EnergySwingUp {
    pub pole_mass: f64,
    pub half_length: f64,
    pub gravity: f64,
    pub force_limit: f64,
    pub energy_gain: f64,
    /// Balance gains on `(x, θ, ẋ, θ̇)`.
    pub balance_gains: [f64; 4],
    /// |θ| below which balance feedback takes over.
    pub capture_angle: f64,
}

impl Default for EnergySwingUp {
    fn default() -> Self {
        Self {
            pole_mass: 0.1,
            half_length: 0.5,
            gravity: 9.81,
            force_limit: 10.0,
            energy_gain: 40.0,
            balance_gains: [1.0, 30.0, 2.0, 5.0],
            capture_angle: 0.4,
        }
    }
}

impl EnergySwingUp {
    /// Pole energy about the pivot, zero when balanced at rest.
    pub fn pole_energy(&self, theta: f64, theta_dot: f64) -> f64 {
        let (m, l) = (self.pole_mass, self.half_length);
        (2.0 / 3.0) * m * l * l * theta_dot * theta_dot + m * self.gravity * l * (theta.cos() - 1.0)
    }
}

impl Policy for EnergySwingUp {
    fn name(&self) -> &str {
        "swingup"
    }

    fn control_dim(&self) -> usize {
        1
    }

    fn act(&self, obs: &[f64]) -> Result<Vec<f64>> {
        if obs.len() < 4 {
            return Err(Error::Shape(format!("swing-up policy needs 4 observations, got {}", obs.len())));
        }
        let [x, th, xd, thd] = [obs[0], obs[1], obs[2], obs[3]];
        let force = if th.abs() < self.capture_angle {
            let g = self.balance_gains;
            g[0] * x + g[1] * th + g[2] * xd + g[3] * thd
        } else {
            // Pushing against θ̇·cosθ adds energy to the pole.
            let deficit = -self.pole_energy(th, thd);
            -self.energy_gain * deficit * (thd * th.cos()).signum()
        };
        Ok(vec![force.clamp(-self.force_limit, self.force_limit)])
    }
}

/// Built-in policy by name: `zero`, `proportional`, `swingup`.
pub fn builtin_policy(name: &str, dims: usize) -> Result<Box<dyn Policy>> {
    match name {
        "zero" | "none" => Ok(Box::new(ZeroPolicy { dims })),
        "proportional" => Ok(Box::new(ProportionalNav::default())),
        "swingup" => Ok(Box::new(EnergySwingUp::default())),
        other => Err(Error::Config(format!("unknown policy `{other}` (expected zero, proportional or swingup)"))),
    }
}
