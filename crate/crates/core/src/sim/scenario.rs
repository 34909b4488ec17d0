//! Single-axis closed-loop contact scenarios.
//!
//! Positions are measured along the probing direction, increasing into the
//! soil. A run has two phases. During the approach the reference ramps from
//! `approach_distance` before the detected surface toward it while the
//! impedance filter sees no force error. The force phase starts at the first
//! measured force above `contact_threshold`, or `contact_dwell` seconds after
//! the ramp ends if nothing is felt, and from then on the filter is driven by
//! `F_r − F`. Compliance adaptation stays off until contact has been felt in
//! the force phase.

use std::fmt::{self, Write as _};
use std::io::Write;

use rayon::prelude::*;

use crate::adaptive::{
    adaptation_step, compliance_estimate, position_reference, AdaptationParams, AdaptationState,
    ComplianceEstimate,
};
use crate::config::{parse_entries, parse_value, Entry};
use crate::error::{require, Error, Result};
use crate::impedance::{
    channel_step, force_error, steady_state_reference, ChannelParams, ChannelState, MAX_DT,
};
use crate::sim::environment::{environment_force, EnvironmentModel};
use crate::sim::robot::{robot_step, RobotModel};
use crate::sim::sensor::{SensorModel, SensorState};

pub const TRACE_HEADER: &str = "t,x_r,x_c,x,f_true,f_meas,e,kappa,stiffness_est";

/// A run is declared diverged once the commanded position strays this far
/// (m) from the detected surface.
pub const DIVERGENCE_LIMIT: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioKind {
    Moist,
    Dry,
    Rigid,
    Custom,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] = [Self::Moist, Self::Dry, Self::Rigid, Self::Custom];

    /// Environment stiffness preset in N/m.
    pub fn default_stiffness(self) -> f64 {
        match self {
            Self::Moist => 500.0,
            Self::Dry => 5000.0,
            Self::Rigid => 1e6,
            Self::Custom => 2000.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Moist => "moist",
            Self::Dry => "dry",
            Self::Rigid => "rigid",
            Self::Custom => "custom",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s.trim())
            .ok_or_else(|| format!("expected one of moist, dry, rigid, custom; got `{s}`"))
    }
}

/// How the position reference is produced in the force phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReferenceMode {
    /// `κ·F_r + x_e` with κ adapted online.
    #[default]
    Adaptive,
    /// Fixed `F_r/k_e + x_e` using the configured stiffness.
    Known,
}

impl std::str::FromStr for ReferenceMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "adaptive" => Ok(Self::Adaptive),
            "known" => Ok(Self::Known),
            other => Err(format!("expected `adaptive` or `known`, got `{other}`")),
        }
    }
}

impl fmt::Display for ReferenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Adaptive => "adaptive",
            Self::Known => "known",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    /// N/m
    pub k_e: f64,
    /// N
    pub f_r: f64,
    pub x_e_true: f64,
    pub x_e_detected: f64,
    pub duration: f64,
    pub dt: f64,
    pub impedance: ChannelParams,
    pub adaptation: AdaptationParams,
    pub sensor: SensorModel,
    pub robot: RobotModel,
    pub reference_mode: ReferenceMode,
    pub approach_distance: f64,
    /// m/s
    pub approach_speed: f64,
    /// N
    pub contact_threshold: f64,
    pub contact_dwell: f64,
    /// Length of the tail (s) over which steady-state figures are taken.
    pub settle_window: f64,
}

impl ScenarioConfig {
    pub fn preset(kind: ScenarioKind) -> Self {
        Self {
            kind,
            k_e: kind.default_stiffness(),
            f_r: 5.0,
            x_e_true: 0.0,
            x_e_detected: 0.0,
            duration: 20.0,
            dt: 1e-3,
            impedance: ChannelParams::default(),
            adaptation: AdaptationParams::default(),
            sensor: SensorModel::default(),
            robot: RobotModel::default(),
            reference_mode: ReferenceMode::Adaptive,
            approach_distance: 0.05,
            approach_speed: 0.02,
            contact_threshold: 0.2,
            contact_dwell: 0.5,
            settle_window: 2.0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.sensor.seed = seed;
        self
    }

    pub fn seed(&self) -> u64 {
        self.sensor.seed
    }

    pub fn samples(&self) -> usize {
        (self.duration / self.dt + 1e-9).floor() as usize + 1
    }

    pub fn environment(&self) -> Result<EnvironmentModel> {
        EnvironmentModel::new(self.k_e, self.x_e_true)
    }

    pub fn validate(&self) -> Result<()> {
        let finite_pos = |v: f64| v > 0.0 && v.is_finite();
        require(finite_pos(self.duration), "duration", "must be positive")?;
        require(
            self.dt > 0.0 && self.dt <= MAX_DT,
            "dt",
            "must lie in (0, 0.01] s",
        )?;
        require(finite_pos(self.f_r), "f_r", "must be positive")?;
        require(self.x_e_true.is_finite(), "x_e_true", "must be finite")?;
        require(
            self.x_e_detected.is_finite(),
            "x_e_detected",
            "must be finite",
        )?;
        require(
            self.approach_distance >= 0.0 && self.approach_distance.is_finite(),
            "approach_distance",
            "must be non-negative",
        )?;
        require(
            finite_pos(self.approach_speed),
            "approach_speed",
            "must be positive",
        )?;
        require(
            finite_pos(self.contact_threshold),
            "contact_threshold",
            "must be positive",
        )?;
        require(
            self.contact_dwell >= 0.0 && self.contact_dwell.is_finite(),
            "contact_dwell",
            "must be non-negative",
        )?;
        require(
            finite_pos(self.settle_window),
            "settle_window",
            "must be positive",
        )?;
        self.environment()?;
        self.impedance.validate()?;
        self.adaptation.validate()?;
        self.sensor.validate()?;
        self.robot.validate()
    }

    /// Parses a config file. A `scenario` line selects the preset the other
    /// keys are applied on top of, wherever it appears.
    pub fn from_config_text(text: &str) -> Result<Self> {
        Self::from_entries(&parse_entries(text)?)
    }

    pub fn from_entries(entries: &[Entry]) -> Result<Self> {
        let kind = match entries.iter().rev().find(|e| e.key == "scenario") {
            Some(e) => parse_value::<ScenarioKind>(&e.key, &e.value)?,
            None => ScenarioKind::Moist,
        };
        let mut cfg = Self::preset(kind);
        let mut offset = None;
        for e in entries.iter().filter(|e| e.key != "scenario") {
            if e.key == "x_e_offset" {
                offset = Some(parse_value::<f64>(&e.key, &e.value)?);
            } else {
                cfg.set(&e.key, &e.value)?;
            }
        }
        if let Some(off) = offset {
            if entries.iter().any(|e| e.key == "x_e_detected") {
                return Err(Error::InvalidValue {
                    key: "x_e_offset".into(),
                    message: "cannot be combined with `x_e_detected`".into(),
                });
            }
            cfg.x_e_detected = cfg.x_e_true + off;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one parameter by its config key. `scenario` resets to that
    /// preset's stiffness only.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let f = || parse_value::<f64>(key, value);
        match key {
            "scenario" => {
                self.kind = parse_value(key, value)?;
                self.k_e = self.kind.default_stiffness();
            }
            "k_e" => self.k_e = f()?,
            "f_r" => self.f_r = f()?,
            "x_e_true" => self.x_e_true = f()?,
            "x_e_detected" => self.x_e_detected = f()?,
            "duration" => self.duration = f()?,
            "dt" => self.dt = f()?,
            "m" => self.impedance.m = f()?,
            "b" => self.impedance.b = f()?,
            "k" => self.impedance.k = f()?,
            "gamma1" => self.adaptation.gamma1 = f()?,
            "gamma1_star" => self.adaptation.gamma1_star = f()?,
            "p1" => self.adaptation.p1 = f()?,
            "p2" => self.adaptation.p2 = f()?,
            "deriv_filter_tau" => self.adaptation.deriv_filter_tau = f()?,
            "gamma1_sign" => self.adaptation.gamma1_sign = parse_value(key, value)?,
            "gamma1_star_sign" => self.adaptation.gamma1_star_sign = parse_value(key, value)?,
            "bias_amplitude" => self.sensor.bias_amplitude = f()?,
            "bias_drift_rate" => self.sensor.bias_drift_rate = f()?,
            "white_noise_std" => self.sensor.white_noise_std = f()?,
            "seed" => self.sensor.seed = parse_value(key, value)?,
            "tracking_tau" => self.robot.tracking_tau = f()?,
            "reference_mode" => self.reference_mode = parse_value(key, value)?,
            "approach_distance" => self.approach_distance = f()?,
            "approach_speed" => self.approach_speed = f()?,
            "contact_threshold" => self.contact_threshold = f()?,
            "contact_dwell" => self.contact_dwell = f()?,
            "settle_window" => self.settle_window = f()?,
            other => return Err(Error::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Every parameter as a config file that parses back to `self`.
    pub fn to_config_text(&self) -> String {
        let a = &self.adaptation;
        let s = &self.sensor;
        let mut out = String::new();
        let mut kv = |k: &str, v: &dyn fmt::Display| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("scenario", &self.kind);
        kv("k_e", &self.k_e);
        kv("f_r", &self.f_r);
        kv("x_e_true", &self.x_e_true);
        kv("x_e_detected", &self.x_e_detected);
        kv("duration", &self.duration);
        kv("dt", &self.dt);
        kv("m", &self.impedance.m);
        kv("b", &self.impedance.b);
        kv("k", &self.impedance.k);
        kv("gamma1", &a.gamma1);
        kv("gamma1_star", &a.gamma1_star);
        kv("p1", &a.p1);
        kv("p2", &a.p2);
        kv("deriv_filter_tau", &a.deriv_filter_tau);
        kv("gamma1_sign", &a.gamma1_sign);
        kv("gamma1_star_sign", &a.gamma1_star_sign);
        kv("bias_amplitude", &s.bias_amplitude);
        kv("bias_drift_rate", &s.bias_drift_rate);
        kv("white_noise_std", &s.white_noise_std);
        kv("seed", &s.seed);
        kv("tracking_tau", &self.robot.tracking_tau);
        kv("reference_mode", &self.reference_mode);
        kv("approach_distance", &self.approach_distance);
        kv("approach_speed", &self.approach_speed);
        kv("contact_threshold", &self.contact_threshold);
        kv("contact_dwell", &self.contact_dwell);
        kv("settle_window", &self.settle_window);
        out
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::preset(ScenarioKind::Moist)
    }
}

/// Scalar figures of merit for one run. Times are measured from the start
/// of the force phase.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSummary {
    pub samples: usize,
    pub failure: Option<String>,
    /// Absolute time at which the force phase began.
    pub force_phase_start: Option<f64>,
    /// Absolute time of the first felt contact.
    pub contact_time: Option<f64>,
    /// Mean κ over the settle window.
    pub kappa_inf: f64,
    /// `1/κ∞`, `None` when effectively rigid.
    pub stiffness_est: Option<f64>,
    /// Largest |e| over the settle window.
    pub steady_state_error: f64,
    /// Time after which |e| stays within 2% of F_r.
    pub settling_time: Option<f64>,
    /// First time |e| drops below 10% of F_r after contact.
    pub time_to_10pct: Option<f64>,
    /// Largest measured force.
    pub peak_force: f64,
    /// Largest true contact force.
    pub peak_true_force: f64,
    /// Mean measured force over the approach phase.
    pub free_space_force_mean: Option<f64>,
}

impl TraceSummary {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }

    /// `key=value` block, one entry per line.
    pub fn to_text(&self) -> String {
        fn opt(v: Option<f64>) -> String {
            v.map_or_else(|| "none".to_string(), |v| v.to_string())
        }
        let mut out = String::new();
        let _ = writeln!(out, "samples={}", self.samples);
        let _ = writeln!(out, "failed={}", self.failed());
        if let Some(reason) = &self.failure {
            let _ = writeln!(out, "failure={reason}");
        }
        let _ = writeln!(out, "force_phase_start={}", opt(self.force_phase_start));
        let _ = writeln!(out, "contact_time={}", opt(self.contact_time));
        let _ = writeln!(out, "kappa_inf={}", self.kappa_inf);
        let _ = writeln!(
            out,
            "stiffness_est={}",
            self.stiffness_est.map_or("inf".into(), |v| v.to_string())
        );
        let _ = writeln!(out, "steady_state_error={}", self.steady_state_error);
        let _ = writeln!(out, "settling_time={}", opt(self.settling_time));
        let _ = writeln!(out, "time_to_10pct={}", opt(self.time_to_10pct));
        let _ = writeln!(out, "peak_force={}", self.peak_force);
        let _ = writeln!(out, "peak_true_force={}", self.peak_true_force);
        let _ = writeln!(
            out,
            "free_space_force_mean={}",
            opt(self.free_space_force_mean)
        );
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub config: ScenarioConfig,
    pub t: Vec<f64>,
    pub x_r: Vec<f64>,
    pub x_c: Vec<f64>,
    pub x: Vec<f64>,
    pub f_true: Vec<f64>,
    pub f_meas: Vec<f64>,
    pub e: Vec<f64>,
    pub kappa: Vec<f64>,
    /// `None` where the compliance estimate is effectively rigid.
    pub stiffness_est: Vec<Option<f64>>,
    /// Index of the first force-phase sample.
    pub force_phase_index: Option<usize>,
    /// Index of the first sample with felt contact.
    pub contact_index: Option<usize>,
    pub summary: TraceSummary,
}

impl SimTrace {
    fn with_capacity(config: ScenarioConfig, n: usize) -> Self {
        Self {
            config,
            t: Vec::with_capacity(n),
            x_r: Vec::with_capacity(n),
            x_c: Vec::with_capacity(n),
            x: Vec::with_capacity(n),
            f_true: Vec::with_capacity(n),
            f_meas: Vec::with_capacity(n),
            e: Vec::with_capacity(n),
            kappa: Vec::with_capacity(n),
            stiffness_est: Vec::with_capacity(n),
            force_phase_index: None,
            contact_index: None,
            summary: TraceSummary {
                samples: 0,
                failure: None,
                force_phase_start: None,
                contact_time: None,
                kappa_inf: 0.0,
                stiffness_est: None,
                steady_state_error: 0.0,
                settling_time: None,
                time_to_10pct: None,
                peak_force: 0.0,
                peak_true_force: 0.0,
                free_space_force_mean: None,
            },
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn failed(&self) -> bool {
        self.summary.failed()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{TRACE_HEADER}")?;
        for i in 0..self.len() {
            let stiffness =
                self.stiffness_est[i].map_or_else(|| "inf".to_string(), |v| v.to_string());
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                self.t[i],
                self.x_r[i],
                self.x_c[i],
                self.x[i],
                self.f_true[i],
                self.f_meas[i],
                self.e[i],
                self.kappa[i],
                stiffness
            )?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv is ASCII")
    }

    fn summarize(&mut self, failure: Option<String>) {
        let cfg = &self.config;
        let n = self.len();
        let window = ((cfg.settle_window / cfg.dt).round() as usize).clamp(1, n.max(1));
        let tail = n.saturating_sub(window);
        let start_t = self.force_phase_index.map(|i| self.t[i]);

        let s = &mut self.summary;
        s.samples = n;
        s.failure = failure;
        s.force_phase_start = start_t;
        s.contact_time = self.contact_index.map(|i| self.t[i]);
        s.peak_force = self.f_meas.iter().copied().fold(0.0, f64::max);
        s.peak_true_force = self.f_true.iter().copied().fold(0.0, f64::max);
        if n == 0 {
            return;
        }
        s.kappa_inf = self.kappa[tail..].iter().sum::<f64>() / (n - tail) as f64;
        s.stiffness_est = ComplianceEstimate::from_compliance(s.kappa_inf).stiffness;
        s.steady_state_error = self.e[tail..].iter().fold(0.0, |m, e| f64::max(m, e.abs()));

        let approach_end = self.force_phase_index.unwrap_or(n);
        s.free_space_force_mean = (approach_end > 0)
            .then(|| self.f_meas[..approach_end].iter().sum::<f64>() / approach_end as f64);

        if let Some(start) = self.force_phase_index {
            let band = 0.02 * cfg.f_r;
            s.settling_time = match self.e[start..].iter().rposition(|e| e.abs() > band) {
                None => Some(0.0),
                Some(j) if start + j + 1 < n => Some(self.t[start + j + 1] - self.t[start]),
                Some(_) => None,
            };
            let from = self.contact_index.unwrap_or(n);
            s.time_to_10pct = (from..n)
                .find(|&i| self.e[i].abs() < 0.1 * cfg.f_r)
                .map(|i| self.t[i] - self.t[start]);
        }
    }
}

/// Runs one scenario. Configuration errors are returned; numerical
/// divergence ends the trace early and is reported in the summary.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<SimTrace> {
    cfg.validate()?;
    let env = cfg.environment()?;
    let mut sensor = SensorState::new(cfg.sensor)?;
    let n = cfg.samples();
    let dt = cfg.dt;
    let x_d = cfg.x_e_detected;
    let x0 = x_d - cfg.approach_distance;
    let ramp_end = cfg.approach_distance / cfg.approach_speed;
    let known_ref = steady_state_reference(cfg.f_r, cfg.k_e, x_d)?;

    let mut trace = SimTrace::with_capacity(cfg.clone(), n);
    let mut cmd = ChannelState::at(x0);
    let mut x = x0;
    let mut adapt = AdaptationState::rigid();
    let mut force_phase = false;
    let mut contact = false;
    let mut failure = None;

    for i in 0..n {
        let t = i as f64 * dt;
        let f_true = environment_force(x, &env);
        let f_meas = sensor.read(f_true, t);
        let felt = f_meas.abs() > cfg.contact_threshold;

        if !force_phase && (felt || t >= ramp_end + cfg.contact_dwell) {
            force_phase = true;
            trace.force_phase_index = Some(i);
        }
        let e = if force_phase {
            force_error(cfg.f_r, f_meas)
        } else {
            0.0
        };
        if force_phase && !contact && felt {
            contact = true;
            trace.contact_index = Some(i);
        }

        if contact && cfg.reference_mode == ReferenceMode::Adaptive {
            match adaptation_step(&adapt, e, &cfg.adaptation, &cfg.impedance, dt) {
                Ok(next) => adapt = next,
                Err(err) => {
                    failure = Some(err.to_string());
                    break;
                }
            }
        }

        let reference = if !force_phase {
            let ramp = x0 + cfg.approach_speed * t;
            if ramp < x_d {
                ChannelState {
                    pos: ramp,
                    vel: cfg.approach_speed,
                    acc: 0.0,
                }
            } else {
                ChannelState::at(x_d)
            }
        } else {
            match cfg.reference_mode {
                ReferenceMode::Adaptive => ChannelState {
                    pos: position_reference(adapt.kappa, cfg.f_r, x_d),
                    vel: adapt.kappa_dot * cfg.f_r,
                    acc: adapt.kappa_ddot * cfg.f_r,
                },
                ReferenceMode::Known => ChannelState::at(known_ref),
            }
        };

        let estimate = compliance_estimate(&adapt);
        trace.t.push(t);
        trace.x_r.push(reference.pos);
        trace.x_c.push(cmd.pos);
        trace.x.push(x);
        trace.f_true.push(f_true);
        trace.f_meas.push(f_meas);
        trace.e.push(e);
        trace.kappa.push(adapt.kappa);
        trace.stiffness_est.push(estimate.stiffness);

        if i + 1 == n {
            break;
        }
        match channel_step(&cmd, &reference, e, &cfg.impedance, dt) {
            Ok(next) if (next.pos - x_d).abs() <= DIVERGENCE_LIMIT => cmd = next,
            Ok(_) => {
                failure = Some("position diverged".to_string());
                break;
            }
            Err(err) => {
                failure = Some(err.to_string());
                break;
            }
        }
        x = robot_step(x, cmd.pos, &cfg.robot, dt);
    }

    trace.summarize(failure);
    Ok(trace)
}

/// Runs `cfg` once per seed, in parallel. Output order follows `seeds`.
pub fn run_batch(cfg: &ScenarioConfig, seeds: &[u64]) -> Result<Vec<SimTrace>> {
    cfg.validate()?;
    seeds
        .par_iter()
        .map(|&seed| run_scenario(&cfg.clone().with_seed(seed)))
        .collect()
}
