//! Gumbel noise, the Gumbel-Sigmoid relaxation and temperature annealing.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndcore::{sigmoid, GradTape, Tensor, Var};
use crate::rng::{self, Rng, Stream};

/// Uniform draws are clamped to `[UNIFORM_EPS, 1 − UNIFORM_EPS]` before the
/// double logarithm, so noise is always finite.
pub const UNIFORM_EPS: f64 = 1e-12;

/// Seeded source of Gumbel noise for one training run.
#[derive(Clone, Debug)]
pub struct RngState {
    seed: u64,
    rng: Rng,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: rng::stream(seed, Stream::Noise),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub(crate) fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}

/// `−log(−log(u))` with `u` clamped away from 0 and 1.
pub fn gumbel_from_uniform(u: f64) -> f64 {
    let u = u.clamp(UNIFORM_EPS, 1.0 - UNIFORM_EPS);
    -(-u.ln()).ln()
}

/// `n` i.i.d. standard Gumbel draws.
pub fn sample_gumbel_noise(n: usize, rng: &mut RngState) -> Vec<f64> {
    (0..n).map(|_| gumbel_from_uniform(rng.uniform())).collect()
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::Contract(format!(
            "temperature must be positive and finite, got {tau}"
        )))
    }
}

/// `σ((w + g)/τ)` element-wise.
///
/// The output lies in (0, 1) mathematically; in `f64` it rounds to exactly
/// 1.0 once `(w + g)/τ` exceeds roughly 36.7.
pub fn gumbel_sigmoid(logits: &[f64], tau: f64, noise: &[f64]) -> Result<Vec<f64>> {
    check_tau(tau)?;
    if logits.len() != noise.len() {
        return Err(Error::Shape {
            op: "gumbel_sigmoid",
            lhs: vec![logits.len()],
            rhs: vec![noise.len()],
        });
    }
    let inv = 1.0 / tau;
    Ok(logits
        .iter()
        .zip(noise)
        .map(|(w, g)| sigmoid((w + g) * inv))
        .collect())
}

/// Traced Gumbel-Sigmoid: gradients flow into `logits`, noise is constant.
/// Produces the same bits as [`gumbel_sigmoid`].
pub fn gumbel_sigmoid_traced(tape: &mut GradTape, logits: Var, tau: f64, noise: &[f64]) -> Result<Var> {
    check_tau(tau)?;
    let shape = tape.value(logits).shape().to_vec();
    let g = tape.constant(Tensor::new(shape, noise.to_vec())?);
    let shifted = tape.add(logits, g);
    let scaled = tape.scale(shifted, 1.0 / tau);
    Ok(tape.sigmoid(scaled))
}

/// Noise-free threshold `σ(w) > 0.5`, i.e. `w > 0`. A logit of exactly zero
/// is not selected.
pub fn hard_mask(logits: &[f64]) -> Vec<u8> {
    logits.iter().map(|&w| u8::from(w > 0.0)).collect()
}

/// Exponential temperature decay `τ ← τ·α`, applied once per epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    tau0: f64,
    alpha: f64,
    epoch: usize,
    tau: f64,
}

impl AnnealSchedule {
    pub fn new(tau0: f64, alpha: f64) -> Result<Self> {
        if !(tau0 > 0.0 && tau0.is_finite()) {
            return Err(Error::Config(format!("tau0 must be positive, got {tau0}")));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Config(format!("decay must lie in (0, 1), got {alpha}")));
        }
        Ok(Self {
            tau0,
            alpha,
            epoch: 0,
            tau: tau0,
        })
    }

    pub fn tau0(&self) -> f64 {
        self.tau0
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn temperature(&self) -> f64 {
        self.tau
    }

    /// Multiply the temperature by `alpha` and advance the epoch counter.
    pub fn step(&mut self) -> f64 {
        self.tau *= self.alpha;
        self.epoch += 1;
        self.tau
    }
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self::new(2.0, 0.997).expect("valid defaults")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_fixed_point_at_inverse_e() {
        let u = (-1.0f64).exp();
        assert!(gumbel_from_uniform(u).abs() < 1e-15);
    }

    #[test]
    fn noise_at_clamp_floor() {
        // −log(−log(1e-12)) = −log(12·ln 10)
        let expected = -(12.0 * std::f64::consts::LN_10).ln();
        let got = gumbel_from_uniform(0.0);
        assert!((got - expected).abs() < 1e-12);
        assert!((got + 3.3189).abs() < 1e-4);
        assert!(gumbel_from_uniform(1.0).is_finite());
    }

    #[test]
    fn gs_centre_is_half_for_any_tau() {
        for tau in [1e-3, 0.5, 2.0, 100.0] {
            assert_eq!(gumbel_sigmoid(&[0.0], tau, &[0.0]).unwrap()[0], 0.5);
        }
    }

    #[test]
    fn gs_saturates_at_low_temperature() {
        let m = gumbel_sigmoid(&[1.0], 0.01, &[0.0]).unwrap()[0];
        assert!(m >= 1.0 - 1e-9);
    }

    #[test]
    fn gs_direct_value() {
        let m = gumbel_sigmoid(&[0.5], 2.0, &[-0.2]).unwrap()[0];
        let expected = 1.0 / (1.0 + (-0.15f64).exp());
        assert!((m - expected).abs() < 1e-15);
        assert!((m - 0.5374).abs() < 1e-4);
    }

    #[test]
    fn gs_rejects_nonpositive_tau() {
        assert!(gumbel_sigmoid(&[0.0], 0.0, &[0.0]).is_err());
        assert!(gumbel_sigmoid(&[0.0], -1.0, &[0.0]).is_err());
        assert!(gumbel_sigmoid(&[0.0, 1.0], 1.0, &[0.0]).is_err());
    }

    #[test]
    fn traced_matches_untraced_bits() {
        let w = vec![0.3, -1.2, 2.5, 0.0];
        let g = vec![-0.7, 0.1, 0.4, 1.9];
        let pure = gumbel_sigmoid(&w, 0.37, &g).unwrap();
        let mut tape = GradTape::new();
        let wv = tape.param(Tensor::row(w));
        let m = gumbel_sigmoid_traced(&mut tape, wv, 0.37, &g).unwrap();
        assert_eq!(tape.value(m).data(), pure.as_slice());
    }

    #[test]
    fn hard_mask_cases() {
        assert_eq!(hard_mask(&[2.0, -1.0, 0.3]), vec![1, 0, 1]);
        assert_eq!(hard_mask(&[-0.1, -3.0]), vec![0, 0]);
        assert_eq!(hard_mask(&[0.0]), vec![0]);
    }

    #[test]
    fn anneal_one_step() {
        let mut s = AnnealSchedule::default();
        assert!((s.step() - 1.994).abs() < 1e-15);
        assert_eq!(s.epoch(), 1);
    }

    #[test]
    fn anneal_long_runs() {
        let mut s = AnnealSchedule::default();
        for _ in 0..100 {
            s.step();
        }
        assert!((s.temperature() - 2.0 * 0.997f64.powi(100)).abs() < 1e-12);
        assert!((s.temperature() - 1.4810).abs() < 1e-4);
        for _ in 100..231 {
            s.step();
        }
        assert!((s.temperature() - 0.9992).abs() < 1e-4);
    }

    #[test]
    fn anneal_rejects_bad_parameters() {
        assert!(AnnealSchedule::new(0.0, 0.5).is_err());
        assert!(AnnealSchedule::new(1.0, 1.0).is_err());
        assert!(AnnealSchedule::new(1.0, 0.0).is_err());
    }

    #[test]
    fn same_seed_same_noise() {
        let a = sample_gumbel_noise(16, &mut RngState::new(3));
        let b = sample_gumbel_noise(16, &mut RngState::new(3));
        let c = sample_gumbel_noise(16, &mut RngState::new(4));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
