//! Force sensing with a slowly wandering baseline offset and white noise.
//!
//! The bias starts at a random level in `[-A, A]` and moves toward randomly
//! drawn targets in the same interval at no more than `bias_drift_rate`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{require, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorModel {
    /// N
    pub bias_amplitude: f64,
    /// N/s
    pub bias_drift_rate: f64,
    /// N
    pub white_noise_std: f64,
    pub seed: u64,
}

impl SensorModel {
    pub const fn ideal() -> Self {
        Self {
            bias_amplitude: 0.0,
            bias_drift_rate: 0.0,
            white_noise_std: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("bias_amplitude", self.bias_amplitude),
            ("bias_drift_rate", self.bias_drift_rate),
            ("white_noise_std", self.white_noise_std),
        ] {
            require(v >= 0.0 && v.is_finite(), name, "must be non-negative")?;
        }
        Ok(())
    }

    pub fn is_ideal(&self) -> bool {
        self.bias_amplitude == 0.0 && self.white_noise_std == 0.0
    }
}

impl Default for SensorModel {
    /// Kept under the 0.2 N contact threshold with a wide margin.
    fn default() -> Self {
        Self {
            bias_amplitude: 0.1,
            bias_drift_rate: 0.05,
            white_noise_std: 0.02,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SensorState {
    model: SensorModel,
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
    bias: f64,
    target: f64,
    last_t: Option<f64>,
}

impl SensorState {
    pub fn new(model: SensorModel) -> Result<Self> {
        model.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
        let a = model.bias_amplitude;
        let (bias, target) = if a > 0.0 {
            (rng.random_range(-a..=a), rng.random_range(-a..=a))
        } else {
            (0.0, 0.0)
        };
        let noise = (model.white_noise_std > 0.0)
            .then(|| Normal::new(0.0, model.white_noise_std).expect("std checked non-negative"));
        Ok(Self {
            model,
            rng,
            noise,
            bias,
            target,
            last_t: None,
        })
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn read(&mut self, f_true: f64, t: f64) -> f64 {
        if self.model.is_ideal() {
            return f_true;
        }
        let elapsed = self.last_t.map_or(0.0, |last| (t - last).max(0.0));
        self.last_t = Some(t);

        let a = self.model.bias_amplitude;
        if a > 0.0 {
            let max_move = self.model.bias_drift_rate * elapsed;
            let gap = self.target - self.bias;
            if gap.abs() <= max_move {
                self.bias = self.target;
                self.target = self.rng.random_range(-a..=a);
            } else {
                self.bias += max_move.copysign(gap);
            }
        }
        let noise = self.noise.map_or(0.0, |n| n.sample(&mut self.rng));
        f_true + self.bias + noise
    }
}

/// Functional form of [`SensorState::read`].
pub fn sensor_read(f_true: f64, state: &mut SensorState, t: f64) -> f64 {
    state.read(f_true, t)
}
