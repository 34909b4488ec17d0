//! Dispersion statistics over repeated scenario runs.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::sim::scenario::{ScenarioKind, SimTrace};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (zero for a single value).
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Stat {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = if min == max {
            min
        } else {
            values.iter().sum::<f64>() / n
        };
        let var = if min != max {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Some(Self {
            count: values.len(),
            mean,
            std: var.sqrt(),
            min,
            max,
        })
    }

    /// `std / |mean|`; infinite when the mean is zero and the spread is not.
    pub fn relative_std(&self) -> f64 {
        if self.std == 0.0 {
            0.0
        } else {
            self.std / self.mean.abs()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunStatistics {
    pub scenario: ScenarioKind,
    pub runs: usize,
    pub failures: usize,
    pub kappa_inf: Stat,
    /// Over runs whose estimate is not flagged rigid.
    pub stiffness_est: Option<Stat>,
    pub steady_state_error: Stat,
    pub settling_time: Option<Stat>,
    pub time_to_10pct: Option<Stat>,
    pub peak_force: Stat,
}

impl RunStatistics {
    /// `key=value` lines, keys prefixed with the scenario name.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let name = self.scenario.as_str();
        let _ = writeln!(out, "{name}.runs={}", self.runs);
        let _ = writeln!(out, "{name}.failures={}", self.failures);
        let mut put = |key: &str, s: Option<&Stat>| match s {
            Some(s) => {
                let _ = writeln!(out, "{name}.{key}.mean={}", s.mean);
                let _ = writeln!(out, "{name}.{key}.std={}", s.std);
                let _ = writeln!(out, "{name}.{key}.min={}", s.min);
                let _ = writeln!(out, "{name}.{key}.max={}", s.max);
            }
            None => {
                let _ = writeln!(out, "{name}.{key}=none");
            }
        };
        put("kappa_inf", Some(&self.kappa_inf));
        put("stiffness_est", self.stiffness_est.as_ref());
        put("steady_state_error", Some(&self.steady_state_error));
        put("settling_time", self.settling_time.as_ref());
        put("time_to_10pct", self.time_to_10pct.as_ref());
        put("peak_force", Some(&self.peak_force));
        out
    }
}

/// Groups traces by scenario (in order of first appearance) and summarises
/// each group.
pub fn summarize_runs(traces: &[SimTrace]) -> Result<Vec<RunStatistics>> {
    if traces.is_empty() {
        return Err(Error::Empty("no traces to summarise"));
    }
    let mut kinds: Vec<ScenarioKind> = Vec::new();
    for t in traces {
        if !kinds.contains(&t.config.kind) {
            kinds.push(t.config.kind);
        }
    }
    Ok(kinds
        .into_iter()
        .map(|kind| {
            let group: Vec<&SimTrace> = traces.iter().filter(|t| t.config.kind == kind).collect();
            let pick = |f: &dyn Fn(&SimTrace) -> Option<f64>| -> Vec<f64> {
                group.iter().filter_map(|t| f(t)).collect()
            };
            RunStatistics {
                scenario: kind,
                runs: group.len(),
                failures: group.iter().filter(|t| t.failed()).count(),
                kappa_inf: Stat::from_values(&pick(&|t| Some(t.summary.kappa_inf)))
                    .expect("group is non-empty"),
                stiffness_est: Stat::from_values(&pick(&|t| t.summary.stiffness_est)),
                steady_state_error: Stat::from_values(&pick(&|t| {
                    Some(t.summary.steady_state_error)
                }))
                .expect("group is non-empty"),
                settling_time: Stat::from_values(&pick(&|t| t.summary.settling_time)),
                time_to_10pct: Stat::from_values(&pick(&|t| t.summary.time_to_10pct)),
                peak_force: Stat::from_values(&pick(&|t| Some(t.summary.peak_force)))
                    .expect("group is non-empty"),
            }
        })
        .collect())
}
