use crate::error::{require, Result};

/// Unilateral linear spring: pushes back only under compression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvironmentModel {
    /// N/m
    pub k_e: f64,
    /// Rest position of the surface along the contact axis (m).
    pub x_e_true: f64,
}

impl EnvironmentModel {
    pub fn new(k_e: f64, x_e_true: f64) -> Result<Self> {
        let env = Self { k_e, x_e_true };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<()> {
        require(
            self.k_e > 0.0 && self.k_e.is_finite(),
            "k_e",
            "must be positive",
        )?;
        require(self.x_e_true.is_finite(), "x_e_true", "must be finite")
    }
}

/// `k_e·(x − x_e)` while penetrating, zero otherwise.
pub fn environment_force(x: f64, env: &EnvironmentModel) -> f64 {
    if x > env.x_e_true {
        env.k_e * (x - env.x_e_true)
    } else {
        0.0
    }
}
