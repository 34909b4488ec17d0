use crate::error::{require, Result};

/// First-order lag between the commanded and the actual position.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RobotModel {
    /// Time constant in seconds; 0 means perfect tracking.
    pub tracking_tau: f64,
}

impl RobotModel {
    pub fn validate(&self) -> Result<()> {
        require(
            self.tracking_tau >= 0.0 && self.tracking_tau.is_finite(),
            "tracking_tau",
            "must be non-negative",
        )
    }
}

/// Moves `x` toward `x_c` over one period using the exact lag response.
pub fn robot_step(x: f64, x_c: f64, model: &RobotModel, dt: f64) -> f64 {
    if model.tracking_tau == 0.0 {
        return x_c;
    }
    x + (x_c - x) * (1.0 - (-dt / model.tracking_tau).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lag_cases() {
        assert_eq!(robot_step(0.3, 0.7, &RobotModel::default(), 1e-3), 0.7);
        let lag = RobotModel { tracking_tau: 1e-3 };
        let one = robot_step(0.0, 1.0, &lag, 1e-3);
        assert!((one - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!((one - 0.6321).abs() < 1e-4);
        assert_eq!(robot_step(0.4, 0.4, &lag, 1e-3), 0.4);
        assert!(RobotModel { tracking_tau: -1.0 }.validate().is_err());
    }
}
