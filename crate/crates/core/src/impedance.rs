//! Position-based impedance (admittance) filter.
//!
//! Each Cartesian axis is an independent scalar channel obeying
//! `m(ẍc − ẍr) + b(ẋc − ẋr) + k(xc − xr) = e`, integrated with semi-implicit
//! Euler (velocity first, then position with the new velocity).

use crate::error::{require, Error, Result};

/// Upper bound on the control period accepted by [`impedance_step`].
pub const MAX_DT: f64 = 0.01;

/// Target impedance of one axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    pub m: f64,
    pub b: f64,
    pub k: f64,
}

impl ChannelParams {
    pub const fn new(m: f64, b: f64, k: f64) -> Self {
        Self { m, b, k }
    }

    pub fn validate(&self) -> Result<()> {
        require(self.m > 0.0 && self.m.is_finite(), "m", "must be positive")?;
        require(self.b > 0.0 && self.b.is_finite(), "b", "must be positive")?;
        require(self.k > 0.0 && self.k.is_finite(), "k", "must be positive")
    }

    pub fn damping_ratio(&self) -> f64 {
        self.b / (2.0 * (self.m * self.k).sqrt())
    }
}

impl Default for ChannelParams {
    /// Heavily damped in free space, still well damped against a rigid
    /// (10⁶ N/m) contact at a 1 ms control period.
    fn default() -> Self {
        Self::new(1.0, 1000.0, 1000.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpedanceParams {
    pub axes: [ChannelParams; 3],
}

impl ImpedanceParams {
    pub fn uniform(p: ChannelParams) -> Self {
        Self { axes: [p; 3] }
    }
}

impl Default for ImpedanceParams {
    fn default() -> Self {
        Self::uniform(ChannelParams::default())
    }
}

/// Position, velocity and acceleration of one axis.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChannelState {
    pub pos: f64,
    pub vel: f64,
    pub acc: f64,
}

impl ChannelState {
    pub const fn at(pos: f64) -> Self {
        Self {
            pos,
            vel: 0.0,
            acc: 0.0,
        }
    }

    fn is_finite(&self) -> bool {
        self.pos.is_finite() && self.vel.is_finite() && self.acc.is_finite()
    }
}

/// Commanded pose `X_c` and its derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ImpedanceState {
    pub axes: [ChannelState; 3],
}

/// Reference pose `X_r` and its derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ReferenceSignal {
    pub axes: [ChannelState; 3],
}

/// Force tracking error `f_r − f`.
pub fn force_error(f_r: f64, f: f64) -> f64 {
    f_r - f
}

fn check_dt(dt: f64) -> Result<()> {
    require(dt > 0.0 && dt <= MAX_DT, "dt", "must lie in (0, 0.01] s")
}

/// One semi-implicit Euler step of a single channel.
pub fn channel_step(
    state: &ChannelState,
    reference: &ChannelState,
    e: f64,
    p: &ChannelParams,
    dt: f64,
) -> Result<ChannelState> {
    check_dt(dt)?;
    p.validate()?;
    let acc = reference.acc
        + (e - p.b * (state.vel - reference.vel) - p.k * (state.pos - reference.pos)) / p.m;
    let vel = state.vel + acc * dt;
    let pos = state.pos + vel * dt;
    let next = ChannelState { pos, vel, acc };
    if next.is_finite() {
        Ok(next)
    } else {
        Err(Error::FilterDiverged)
    }
}

/// Advances all three decoupled channels by one step.
pub fn impedance_step(
    state: &ImpedanceState,
    reference: &ReferenceSignal,
    e: [f64; 3],
    params: &ImpedanceParams,
    dt: f64,
) -> Result<ImpedanceState> {
    let mut next = ImpedanceState::default();
    for (i, axis) in next.axes.iter_mut().enumerate() {
        *axis = channel_step(
            &state.axes[i],
            &reference.axes[i],
            e[i],
            &params.axes[i],
            dt,
        )?;
    }
    Ok(next)
}

/// Reference that zeroes the steady-state force error when the environment
/// stiffness and rest position are known exactly: `f_r / k_e + x_e`.
pub fn steady_state_reference(f_r: f64, k_e: f64, x_e: f64) -> Result<f64> {
    require(k_e > 0.0 && k_e.is_finite(), "k_e", "must be positive")?;
    Ok(f_r / k_e + x_e)
}
