//! Perturbation noise for sampling candidate node sets.
//!
//! Noise is a pure function of `(schedule, iteration, stream, shape)`.
//! `iteration` indexes the denoising pass (and drives the exponential
//! decay); `stream` separates independent calls that share an iteration
//! index, e.g. successive replanning steps of a receding-horizon loop.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Open01, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseSource {
    MonteCarlo,
    LatinHypercube,
}

impl std::str::FromStr for NoiseSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mc" | "montecarlo" | "monte_carlo" => Ok(NoiseSource::MonteCarlo),
            "lhs" | "latinhypercube" | "latin_hypercube" => Ok(NoiseSource::LatinHypercube),
            other => Err(Error::Config(format!("unknown noise source `{other}` (expected mc or lhs)"))),
        }
    }
}

impl std::fmt::Display for NoiseSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NoiseSource::MonteCarlo => "mc",
            NoiseSource::LatinHypercube => "lhs",
        })
    }
}

/// Exponentially decaying, horizon-ramped noise schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub sigma0: f64,
    pub decay: f64,
    pub ramp_near: f64,
    pub ramp_far: f64,
    pub source: NoiseSource,
    pub seed: u64,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self {
            sigma0: 3.0,
            decay: 0.6,
            ramp_near: 1.0,
            ramp_far: 1.0,
            source: NoiseSource::LatinHypercube,
            seed: 0,
        }
    }
}

impl NoiseSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return Err(Error::Config(format!("noise.sigma0 must be > 0, got {}", self.sigma0)));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::Config(format!("noise.decay must lie in (0, 1], got {}", self.decay)));
        }
        if !(self.ramp_near >= 0.0 && self.ramp_far >= self.ramp_near && self.ramp_far.is_finite()) {
            return Err(Error::Config(format!(
                "noise ramp must satisfy 0 <= ramp_near <= ramp_far, got ({}, {})",
                self.ramp_near, self.ramp_far
            )));
        }
        Ok(())
    }

    /// Per-node standard deviation at a denoising iteration:
    /// `sigma0 · decayⁱ · ramp(k)` with `ramp` linear from `ramp_near` at the
    /// first node to `ramp_far` at the last.
    pub fn sigma_at(&self, iteration: usize, nodes: usize) -> Vec<f64> {
        let level = self.sigma0 * self.decay.powi(iteration as i32);
        (0..nodes)
            .map(|k| {
                let frac = if nodes > 1 { k as f64 / (nodes - 1) as f64 } else { 0.0 };
                level * (self.ramp_near + (self.ramp_far - self.ramp_near) * frac)
            })
            .collect()
    }
}

/// Sampled perturbations, `N` samples × `D` dims × `K` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTensor {
    samples: usize,
    dims: usize,
    nodes: usize,
    data: Vec<f64>,
}

impl NoiseTensor {
    pub fn zeros(samples: usize, dims: usize, nodes: usize) -> Self {
        Self { samples, dims, nodes, data: vec![0.0; samples * dims * nodes] }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.samples, self.dims, self.nodes)
    }

    #[inline]
    pub fn get(&self, n: usize, d: usize, k: usize) -> f64 {
        self.data[(n * self.dims + d) * self.nodes + k]
    }

    #[inline]
    fn get_mut(&mut self, n: usize, d: usize, k: usize) -> &mut f64 {
        &mut self.data[(n * self.dims + d) * self.nodes + k]
    }

    /// Perturbation of one sample as a `D × K` matrix.
    pub fn sample(&self, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.dims, self.nodes, |d, k| self.get(n, d, k))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic generator for one `(seed, stream, iteration)` cell.
pub(crate) fn cell_rng(seed: u64, stream: u64, iteration: u64) -> ChaCha8Rng {
    let key = splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ iteration.wrapping_mul(0xA24B_AED4_963E_E407));
    ChaCha8Rng::seed_from_u64(key)
}

fn lhs_with_rng<R: Rng + ?Sized>(samples: usize, dims: usize, rng: &mut R) -> DMatrix<f64> {
    let mut out = DMatrix::<f64>::zeros(samples, dims);
    let mut strata: Vec<usize> = (0..samples).collect();
    for m in 0..dims {
        strata.shuffle(rng);
        for (n, &j) in strata.iter().enumerate() {
            let offset: f64 = rng.sample(Open01);
            out[(n, m)] = (j as f64 + offset) / samples as f64;
        }
    }
    out
}

/// Latin hypercube design on the unit cube: `samples × dims`, every column
/// holding exactly one point in each stratum `[j/N, (j+1)/N)`.
pub fn lhs_unit(samples: usize, dims: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    lhs_with_rng(samples, dims, &mut rng)
}

/// Zero-mean Gaussian perturbations scaled by `schedule.sigma_at(iteration)`.
pub fn gaussian_noise(
    schedule: &NoiseSchedule,
    iteration: usize,
    stream: u64,
    samples: usize,
    dims: usize,
    nodes: usize,
) -> NoiseTensor {
    let sigma = schedule.sigma_at(iteration, nodes);
    let mut out = NoiseTensor::zeros(samples, dims, nodes);
    if samples == 0 || sigma.iter().all(|s| *s == 0.0) {
        return out;
    }
    let mut rng = cell_rng(schedule.seed, stream, iteration as u64);
    match schedule.source {
        NoiseSource::MonteCarlo => {
            for n in 0..samples {
                for d in 0..dims {
                    for (k, s) in sigma.iter().enumerate() {
                        let z: f64 = rng.sample(StandardNormal);
                        *out.get_mut(n, d, k) = s * z;
                    }
                }
            }
        }
        NoiseSource::LatinHypercube => {
            let unit = lhs_with_rng(samples, dims * nodes, &mut rng);
            let normal = Normal::standard();
            for n in 0..samples {
                for d in 0..dims {
                    for (k, s) in sigma.iter().enumerate() {
                        let z = normal.inverse_cdf(unit[(n, d * nodes + k)]);
                        *out.get_mut(n, d, k) = s * z;
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn flat(sigma0: f64, decay: f64) -> NoiseSchedule {
        NoiseSchedule { sigma0, decay, ramp_near: 1.0, ramp_far: 1.0, ..NoiseSchedule::default() }
    }

    #[test]
    fn sigma_decay_examples() {
        let s = flat(3.0, 0.6);
        assert!(s.sigma_at(0, 16).iter().all(|v| *v == 3.0));
        for v in s.sigma_at(2, 16) {
            assert_abs_diff_eq!(v, 1.08, epsilon = 1e-12);
        }
    }

    #[test]
    fn sigma_ramp_example() {
        let s = NoiseSchedule { sigma0: 1.0, decay: 1.0, ramp_near: 0.5, ramp_far: 1.5, ..Default::default() };
        let v = s.sigma_at(0, 3);
        assert_abs_diff_eq!(v[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(v[1], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v[2], 1.5, epsilon = 1e-15);
    }

    #[test]
    fn validate_rejects_bad_schedules() {
        assert!(flat(0.0, 0.5).validate().is_err());
        assert!(flat(1.0, 0.0).validate().is_err());
        assert!(flat(1.0, 1.2).validate().is_err());
        let inverted = NoiseSchedule { ramp_near: 2.0, ramp_far: 1.0, ..Default::default() };
        assert!(inverted.validate().is_err());
        assert!(NoiseSchedule::default().validate().is_ok());
    }

    #[test]
    fn lhs_single_point() {
        let u = lhs_unit(1, 5, 3);
        assert!(u.iter().all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn lhs_four_strata() {
        let u = lhs_unit(4, 3, 9);
        for m in 0..3 {
            let mut col: Vec<f64> = u.column(m).iter().copied().collect();
            col.sort_by(f64::total_cmp);
            for (j, v) in col.iter().enumerate() {
                assert!(*v >= j as f64 / 4.0 && *v < (j + 1) as f64 / 4.0);
            }
        }
    }

    #[test]
    fn lhs_histogram_exactly_uniform() {
        let u = lhs_unit(16, 8, 1234);
        for m in 0..8 {
            let mut hist = [0usize; 16];
            for n in 0..16 {
                hist[(u[(n, m)] * 16.0).floor() as usize] += 1;
            }
            assert_eq!(hist, [1; 16]);
        }
    }

    #[test]
    fn zero_sigma_gives_zero_tensor() {
        let s = NoiseSchedule { ramp_near: 0.0, ramp_far: 0.0, ..Default::default() };
        let t = gaussian_noise(&s, 0, 0, 8, 2, 5);
        assert!(t.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn lhs_gaussian_moments() {
        let s = NoiseSchedule { sigma0: 1.0, decay: 1.0, seed: 42, ..Default::default() };
        let t = gaussian_noise(&s, 0, 0, 1000, 1, 1);
        let v = t.as_slice();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
        assert!(mean.abs() <= 0.1, "mean {mean}");
        assert!((0.9..=1.1).contains(&std), "std {std}");
    }

    #[test]
    fn noise_is_deterministic_and_stream_separated() {
        for source in [NoiseSource::MonteCarlo, NoiseSource::LatinHypercube] {
            let s = NoiseSchedule { source, seed: 7, ..Default::default() };
            let a = gaussian_noise(&s, 1, 3, 10, 2, 6);
            let b = gaussian_noise(&s, 1, 3, 10, 2, 6);
            assert_eq!(a, b);
            assert_ne!(a, gaussian_noise(&s, 1, 4, 10, 2, 6));
            assert_ne!(a, gaussian_noise(&s, 2, 3, 10, 2, 6));
        }
    }

    #[test]
    fn lhs_reduces_variance_of_monotone_mean() {
        // Estimate E[f(U)] for monotone f with N = 32, over 200 seeds.
        let f = |u: f64| u.powi(3) + u;
        let estimates = |lhs: bool| -> Vec<f64> {
            (0..200u64)
                .map(|seed| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let pts: Vec<f64> = if lhs {
                        lhs_with_rng(32, 1, &mut rng).iter().copied().collect()
                    } else {
                        (0..32).map(|_| rand::Rng::random::<f64>(&mut rng)).collect()
                    };
                    pts.iter().map(|u| f(*u)).sum::<f64>() / 32.0
                })
                .collect()
        };
        let var = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
        };
        let (vl, vm) = (var(&estimates(true)), var(&estimates(false)));
        assert!(vl <= vm, "lhs variance {vl} > mc variance {vm}");
    }

    #[test]
    fn source_parsing() {
        assert_eq!("lhs".parse::<NoiseSource>().unwrap(), NoiseSource::LatinHypercube);
        assert_eq!("MC".parse::<NoiseSource>().unwrap(), NoiseSource::MonteCarlo);
        assert!("sobol".parse::<NoiseSource>().is_err());
    }

    proptest! {
        #[test]
        fn lhs_ranks_are_a_permutation(n in 1usize..40, m in 1usize..6, seed in any::<u64>()) {
            let u = lhs_unit(n, m, seed);
            for col in 0..m {
                let mut strata: Vec<usize> = (0..n).map(|i| (u[(i, col)] * n as f64).floor() as usize).collect();
                strata.sort_unstable();
                prop_assert_eq!(strata, (0..n).collect::<Vec<_>>());
            }
        }

        #[test]
        fn ramp_and_decay_monotone(
            sigma0 in 0.1f64..5.0, decay in 0.05f64..0.99,
            near in 0.01f64..2.0, span in 0.0f64..2.0, k in 2usize..20, i in 0usize..10,
        ) {
            let s = NoiseSchedule { sigma0, decay, ramp_near: near, ramp_far: near + span, ..Default::default() };
            let now = s.sigma_at(i, k);
            let next = s.sigma_at(i + 1, k);
            for w in now.windows(2) {
                prop_assert!(w[1] >= w[0]);
            }
            for (a, b) in now.iter().zip(&next) {
                prop_assert!(b < a);
            }
        }
    }
}
