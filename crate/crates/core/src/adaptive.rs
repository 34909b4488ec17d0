//! Online compliance adaptation.
//!
//! The position reference is `x_r = κ·F_r + x_e`, and κ is driven by the
//! third-order law
//!
//! ```text
//! m·κ⃛ + b·κ̈ + k·κ̇ = σ₁·γ₁·q + σ₁*·γ₁*·q̇,    q = p₁·e + p₂·ė
//! ```
//!
//! whose left-hand side reuses the impedance filter coefficients. With the
//! force measured positive under compression, σ₁ = +1 is the orientation for
//! which κ converges to the compliance 1/k_e (the linearised force-error
//! loop has characteristic polynomial
//! `mλ³ + (b + σ₁*γ₁*p₂k_eF_r)λ² + (k + k_e + k_eF_r(γ₁p₂ + σ₁*γ₁*p₁))λ + σ₁γ₁p₁k_eF_r`,
//! whose constant term must be positive). σ₁ = −1 is kept selectable for
//! frames where the force sign is reversed.

use crate::error::{require, Error, Result};
use crate::impedance::ChannelParams;

/// Compliance below which the environment is reported as effectively rigid.
pub const COMPLIANCE_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sign {
    #[default]
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

impl std::str::FromStr for Sign {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "+" | "+1" | "plus" | "1" => Ok(Sign::Plus),
            "-" | "-1" | "minus" => Ok(Sign::Minus),
            other => Err(format!("expected `+` or `-`, got `{other}`")),
        }
    }
}

impl std::fmt::Display for Sign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptationParams {
    pub gamma1: f64,
    pub gamma1_star: f64,
    /// Weight on the force error in q.
    pub p1: f64,
    /// Weight on the force-error rate in q.
    pub p2: f64,
    /// Time constant of the low-pass differentiators for ė and q̇ (s).
    pub deriv_filter_tau: f64,
    pub gamma1_sign: Sign,
    pub gamma1_star_sign: Sign,
}

impl Default for AdaptationParams {
    fn default() -> Self {
        Self {
            gamma1: 8.0,
            gamma1_star: 0.05,
            p1: 1.0,
            p2: 0.05,
            deriv_filter_tau: 0.01,
            gamma1_sign: Sign::Plus,
            gamma1_star_sign: Sign::Plus,
        }
    }
}

impl AdaptationParams {
    pub fn validate(&self) -> Result<()> {
        require(
            self.gamma1 > 0.0 && self.gamma1.is_finite(),
            "gamma1",
            "must be positive",
        )?;
        require(
            self.gamma1_star >= 0.0 && self.gamma1_star.is_finite(),
            "gamma1_star",
            "must be non-negative",
        )?;
        require(
            self.p1 > 0.0 && self.p1.is_finite(),
            "p1",
            "must be positive",
        )?;
        require(
            self.p2 > 0.0 && self.p2.is_finite(),
            "p2",
            "must be positive",
        )?;
        require(
            self.deriv_filter_tau >= 0.0 && self.deriv_filter_tau.is_finite(),
            "deriv_filter_tau",
            "must be non-negative",
        )
    }
}

/// First-order low-pass differentiator. The first sample only primes it
/// (rate 0); `tau = 0` gives the raw backward difference.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Differentiator {
    pub prev: Option<f64>,
    pub rate: f64,
}

impl Differentiator {
    /// A primed differentiator sitting at `value` with zero rate.
    pub fn settled(value: f64) -> Self {
        Self {
            prev: Some(value),
            rate: 0.0,
        }
    }

    pub fn step(&mut self, x: f64, dt: f64, tau: f64) -> f64 {
        match self.prev {
            None => self.rate = 0.0,
            Some(prev) => {
                let raw = (x - prev) / dt;
                let alpha = tau / (tau + dt);
                self.rate = alpha * self.rate + (1.0 - alpha) * raw;
            }
        }
        self.prev = Some(x);
        self.rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AdaptationState {
    pub kappa: f64,
    pub kappa_dot: f64,
    pub kappa_ddot: f64,
    pub error_rate: Differentiator,
    pub q_rate: Differentiator,
}

impl AdaptationState {
    /// κ = 0: the environment is assumed infinitely stiff until force is felt.
    pub fn rigid() -> Self {
        Self::default()
    }

    fn is_finite(&self) -> bool {
        self.kappa.is_finite()
            && self.kappa_dot.is_finite()
            && self.kappa_ddot.is_finite()
            && self.error_rate.rate.is_finite()
            && self.q_rate.rate.is_finite()
    }
}

/// One step of the adaptation law for force error `e`.
pub fn adaptation_step(
    state: &AdaptationState,
    e: f64,
    params: &AdaptationParams,
    imp: &ChannelParams,
    dt: f64,
) -> Result<AdaptationState> {
    require(dt > 0.0 && dt.is_finite(), "dt", "must be positive")?;
    imp.validate()?;
    let mut next = *state;
    let tau = params.deriv_filter_tau;
    let e_dot = next.error_rate.step(e, dt, tau);
    let q = params.p1 * e + params.p2 * e_dot;
    let q_dot = next.q_rate.step(q, dt, tau);

    let drive = params.gamma1_sign.value() * params.gamma1 * q
        + params.gamma1_star_sign.value() * params.gamma1_star * q_dot;
    let jerk = (drive - imp.k * next.kappa_dot - imp.b * next.kappa_ddot) / imp.m;
    next.kappa_ddot += jerk * dt;
    next.kappa_dot += next.kappa_ddot * dt;
    next.kappa += next.kappa_dot * dt;
    if next.kappa < 0.0 {
        next.kappa = 0.0;
        next.kappa_dot = next.kappa_dot.max(0.0);
    }

    if next.is_finite() {
        Ok(next)
    } else {
        Err(Error::AdaptationDiverged)
    }
}

/// `κ·F_r + x_e`.
pub fn position_reference(kappa: f64, f_r: f64, x_e: f64) -> f64 {
    kappa * f_r + x_e
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplianceEstimate {
    /// m/N
    pub compliance: f64,
    /// N/m; `None` when the compliance is at or below [`COMPLIANCE_FLOOR`].
    pub stiffness: Option<f64>,
}

impl ComplianceEstimate {
    pub fn from_compliance(compliance: f64) -> Self {
        Self {
            compliance,
            stiffness: (compliance > COMPLIANCE_FLOOR).then(|| 1.0 / compliance),
        }
    }

    pub fn is_rigid(&self) -> bool {
        self.stiffness.is_none()
    }
}

pub fn compliance_estimate(state: &AdaptationState) -> ComplianceEstimate {
    ComplianceEstimate::from_compliance(state.kappa)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn imp() -> ChannelParams {
        ChannelParams::default()
    }

    #[test]
    fn rest_state_is_an_equilibrium() {
        let s = AdaptationState {
            kappa: 0.002,
            error_rate: Differentiator::settled(0.0),
            q_rate: Differentiator::settled(0.0),
            ..Default::default()
        };
        let next = adaptation_step(&s, 0.0, &AdaptationParams::default(), &imp(), 1e-3).unwrap();
        assert_eq!(next, s);

        // an unprimed state only primes its differentiators
        let fresh = adaptation_step(
            &AdaptationState::rigid(),
            0.0,
            &AdaptationParams::default(),
            &imp(),
            1e-3,
        )
        .unwrap();
        assert_eq!(fresh.kappa, 0.0);
        assert_eq!(fresh.kappa_dot, 0.0);
        assert_eq!(fresh.kappa_ddot, 0.0);
    }

    #[test]
    fn kappa_settles_once_error_vanishes() {
        let p = AdaptationParams::default();
        let mut s = AdaptationState::rigid();
        for _ in 0..200 {
            s = adaptation_step(&s, 2.0, &p, &imp(), 1e-3).unwrap();
        }
        assert!(s.kappa > 0.0);
        for _ in 0..60_000 {
            s = adaptation_step(&s, 0.0, &p, &imp(), 1e-3).unwrap();
        }
        let held = s.kappa;
        for _ in 0..1000 {
            s = adaptation_step(&s, 0.0, &p, &imp(), 1e-3).unwrap();
        }
        assert!((s.kappa - held).abs() < 1e-12);
        assert!(s.kappa_dot.abs() < 1e-9);
    }

    #[test]
    fn positive_error_raises_compliance() {
        let p = AdaptationParams::default();
        let mut s = AdaptationState::rigid();
        for _ in 0..100 {
            s = adaptation_step(&s, 1.0, &p, &imp(), 1e-3).unwrap();
        }
        assert!(s.kappa > 0.0 && s.kappa_dot > 0.0);
    }

    #[test]
    fn kappa_never_goes_negative() {
        let p = AdaptationParams::default();
        let mut s = AdaptationState::rigid();
        for _ in 0..1000 {
            s = adaptation_step(&s, -5.0, &p, &imp(), 1e-3).unwrap();
            assert!(s.kappa >= 0.0);
        }
        assert_eq!(s.kappa, 0.0);
    }

    #[test]
    fn differentiator_matches_ramp_slope() {
        let mut d = Differentiator::default();
        let mut rate = 0.0;
        for i in 0..2000 {
            rate = d.step(3.0 * i as f64 * 1e-3, 1e-3, 0.01);
        }
        assert!((rate - 3.0).abs() < 1e-9);
        let mut raw = Differentiator::default();
        raw.step(1.0, 0.5, 0.0);
        assert_eq!(raw.step(2.0, 0.5, 0.0), 2.0);
    }

    #[test]
    fn divergence_is_reported() {
        let s = AdaptationState {
            kappa_ddot: f64::MAX,
            ..Default::default()
        };
        let r = adaptation_step(&s, f64::MAX, &AdaptationParams::default(), &imp(), 1e-3);
        assert_eq!(r, Err(Error::AdaptationDiverged));
    }

    #[test]
    fn param_validation() {
        let bad = AdaptationParams {
            gamma1: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = AdaptationParams {
            deriv_filter_tau: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(AdaptationParams::default().validate().is_ok());
    }

    #[test]
    fn position_reference_cases() {
        assert_eq!(position_reference(0.0, 5.0, 0.8), 0.8);
        assert!((position_reference(0.002, 5.0, 0.8) - 0.810).abs() < 1e-15);
        let k_e = 1000.0;
        let via_kappa = position_reference(1.0 / k_e, 5.0, 0.1);
        let direct = crate::impedance::steady_state_reference(5.0, k_e, 0.1).unwrap();
        assert!((via_kappa - direct).abs() < 1e-15);
    }

    #[test]
    fn compliance_estimate_cases() {
        let rigid = compliance_estimate(&AdaptationState::rigid());
        assert_eq!(rigid.compliance, 0.0);
        assert!(rigid.is_rigid());
        let s = AdaptationState {
            kappa: 0.0005,
            ..Default::default()
        };
        let est = compliance_estimate(&s);
        assert!((est.stiffness.unwrap() - 2000.0).abs() < 1e-9);
    }

    #[test]
    fn sign_parsing() {
        assert_eq!("+".parse::<Sign>().unwrap(), Sign::Plus);
        assert_eq!("minus".parse::<Sign>().unwrap(), Sign::Minus);
        assert!("x".parse::<Sign>().is_err());
    }
}
