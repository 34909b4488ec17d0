use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};

use soilprobe::config::{parse_entries, Entry};
use soilprobe::ground::{detect_ground, DetectionConfig};
use soilprobe::pipeline::run_pipeline;
use soilprobe::pointcloud::PointCloud;
use soilprobe::sim::{
    generate_pot_scene, run_batch, run_scenario, summarize_runs, PotSceneParams, ScenarioConfig,
    ScenarioKind,
};
use soilprobe::Error;

#[derive(Debug, Parser)]
#[command(
    name = "soilprobe",
    version,
    about = "Soil surface detection and adaptive force probing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the soil plane in a point cloud (read from --input or generated).
    Detect(Opts),
    /// Run one contact scenario and write its trace as CSV.
    Simulate(Opts),
    /// Generate a scene, detect the soil and probe it.
    Pipeline(Opts),
    /// Repeat a scenario over consecutive seeds and report dispersion.
    Bench(Opts),
}

/// Each flag can also be given in the config file under the same name
/// (`scene-out` as `scene_out`). Flags win.
#[derive(Debug, Default, clap::Args)]
struct Opts {
    /// Point cloud file, one `x y z` per line, in the robot base frame.
    #[arg(long)]
    input: Option<PathBuf>,
    /// `key = value` parameter file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Primary output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long, value_parser = clap::value_parser!(ScenarioKind))]
    scenario: Option<ScenarioKind>,
    /// Where to write the run summary.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Also write the generated cloud (base frame) here.
    #[arg(long)]
    scene_out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

type Outcome<T = ()> = std::result::Result<T, Failure>;

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn runtime(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

/// Flags merged over the config file.
#[derive(Debug, Default)]
struct Settings {
    input: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    repeats: Option<usize>,
    scenario: Option<ScenarioKind>,
    summary: Option<PathBuf>,
    scene_out: Option<PathBuf>,
    /// Config entries that are not CLI keys.
    params: Vec<Entry>,
}

impl Settings {
    fn load(opts: Opts) -> Outcome<Self> {
        let mut s = Settings::default();
        if let Some(path) = &opts.config {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))
                .map_err(usage)?;
            let entries = parse_entries(&text)
                .with_context(|| format!("in config {}", path.display()))
                .map_err(usage)?;
            for e in entries {
                let bad = |msg: String| {
                    usage(anyhow!(
                        "{}: line {}: key `{}`: {msg}",
                        path.display(),
                        e.line,
                        e.key
                    ))
                };
                match e.key.as_str() {
                    "input" => s.input = Some(PathBuf::from(&e.value)),
                    "out" => s.out = Some(PathBuf::from(&e.value)),
                    "summary" => s.summary = Some(PathBuf::from(&e.value)),
                    "scene_out" => s.scene_out = Some(PathBuf::from(&e.value)),
                    "seed" => s.seed = Some(e.value.parse().map_err(|err| bad(format!("{err}")))?),
                    "repeats" => {
                        s.repeats = Some(e.value.parse().map_err(|err| bad(format!("{err}")))?)
                    }
                    "scenario" => s.scenario = Some(e.value.parse().map_err(bad)?),
                    _ => s.params.push(e),
                }
            }
        }
        s.input = opts.input.or(s.input);
        s.out = opts.out.or(s.out);
        s.seed = opts.seed.or(s.seed);
        s.repeats = opts.repeats.or(s.repeats);
        s.scenario = opts.scenario.or(s.scenario);
        s.summary = opts.summary.or(s.summary);
        s.scene_out = opts.scene_out.or(s.scene_out);
        Ok(s)
    }

    fn reject(&self, command: &str, unused: &[&str]) -> Outcome {
        for key in unused {
            let set = match *key {
                "input" => self.input.is_some(),
                "repeats" => self.repeats.is_some(),
                "scenario" => self.scenario.is_some(),
                "summary" => self.summary.is_some(),
                "scene_out" => self.scene_out.is_some(),
                _ => false,
            };
            if set {
                return Err(usage(anyhow!("`{key}` is not used by `{command}`")));
            }
        }
        Ok(())
    }

    /// Scenario configuration from the remaining entries, with `scenario`
    /// and `seed` taken from the merged settings.
    fn scenario_config(&self, entries: &[Entry]) -> Outcome<ScenarioConfig> {
        let mut all = entries.to_vec();
        if let Some(kind) = self.scenario {
            all.push(Entry {
                line: 0,
                key: "scenario".into(),
                value: kind.to_string(),
            });
        }
        if let Some(seed) = self.seed {
            all.push(Entry {
                line: 0,
                key: "seed".into(),
                value: seed.to_string(),
            });
        }
        ScenarioConfig::from_entries(&all).map_err(|e| config_error(&all, e))
    }
}

fn config_error(entries: &[Entry], e: Error) -> Failure {
    let line = match &e {
        Error::UnknownKey(k) | Error::InvalidValue { key: k, .. } => entries
            .iter()
            .find(|en| &en.key == k && en.line > 0)
            .map(|en| en.line),
        _ => None,
    };
    match line {
        Some(l) => usage(anyhow!("config line {l}: {e}")),
        None => usage(anyhow!("config: {e}")),
    }
}

/// Routes entries to the detection and scene parameters; returns the rest.
fn split_detection(
    entries: &[Entry],
    det: &mut DetectionConfig,
    scene: &mut PotSceneParams,
) -> Outcome<Vec<Entry>> {
    let mut rest = Vec::new();
    for e in entries {
        match det.set(&e.key, &e.value) {
            Err(Error::UnknownKey(_)) => match scene.set(&e.key, &e.value) {
                Err(Error::UnknownKey(_)) => rest.push(e.clone()),
                other => other.map_err(|err| config_error(entries, err))?,
            },
            other => other.map_err(|err| config_error(entries, err))?,
        }
    }
    det.validate().map_err(|e| config_error(entries, e))?;
    scene.validate().map_err(|e| config_error(entries, e))?;
    Ok(rest)
}

fn emit(path: Option<&Path>, text: &str) -> Outcome {
    match path {
        Some(p) => fs::write(p, text)
            .with_context(|| format!("writing {}", p.display()))
            .map_err(runtime),
        None => io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .context("writing to standard output")
            .map_err(runtime),
    }
}

fn detect(s: Settings) -> Outcome {
    s.reject("detect", &["repeats", "scenario", "summary"])?;
    let mut det = DetectionConfig::default();
    let mut scene_params = PotSceneParams::default();
    let rest = split_detection(&s.params, &mut det, &mut scene_params)?;
    if let Some(e) = rest.first() {
        return Err(config_error(&rest, Error::UnknownKey(e.key.clone())));
    }
    let seed = s.seed.unwrap_or(0);

    let cloud = match &s.input {
        Some(path) => {
            if s.scene_out.is_some() {
                return Err(usage(anyhow!(
                    "`scene_out` needs a generated scene, not `input`"
                )));
            }
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(runtime)?;
            PointCloud::from_text(&text)
                .with_context(|| format!("parsing {}", path.display()))
                .map_err(runtime)?
        }
        None => {
            let scene = generate_pot_scene(&scene_params, seed).map_err(runtime)?;
            let world = scene.world_cloud();
            if let Some(p) = &s.scene_out {
                emit(Some(p), &world.to_text())?;
            }
            world
        }
    };
    let found = detect_ground(&cloud, &det, seed)
        .context("soil detection")
        .map_err(runtime)?;
    eprintln!(
        "detect: {} points, {} in workspace, {} plane inliers",
        cloud.len(),
        found.filtered,
        found.estimate.plane.inliers.len()
    );
    emit(s.out.as_deref(), &found.estimate.to_record())
}

fn simulate(s: Settings) -> Outcome {
    s.reject("simulate", &["input", "repeats", "scene_out"])?;
    let cfg = s.scenario_config(&s.params)?;
    let trace = run_scenario(&cfg).map_err(runtime)?;
    eprintln!(
        "simulate: {} k_e={} samples={}",
        cfg.kind,
        cfg.k_e,
        trace.len()
    );
    emit(s.out.as_deref(), &trace.to_csv())?;
    let summary = trace.summary.to_text();
    match (&s.summary, &s.out) {
        (Some(p), _) => emit(Some(p), &summary)?,
        (None, Some(_)) => emit(None, &summary)?,
        (None, None) => {}
    }
    if let Some(reason) = &trace.summary.failure {
        return Err(runtime(anyhow!("simulation failed: {reason}")));
    }
    Ok(())
}

fn pipeline(s: Settings) -> Outcome {
    s.reject("pipeline", &["input", "repeats"])?;
    let mut det = DetectionConfig::default();
    let mut scene_params = PotSceneParams::default();
    let rest = split_detection(&s.params, &mut det, &mut scene_params)?;
    let cfg = s.scenario_config(&rest)?;
    let seed = s.seed.unwrap_or(0);
    let run = run_pipeline(&scene_params, &det, &cfg, seed).map_err(runtime)?;
    if let Some(p) = &s.scene_out {
        emit(Some(p), &run.scene.world_cloud().to_text())?;
    }
    eprintln!(
        "pipeline: surface depth detected {:.4} m, actual {:.4} m",
        run.x_e_detected, run.x_e_true
    );
    let mut summary = run.detection.estimate.to_record();
    let _ = writeln!(summary, "x_e_detected={}", run.x_e_detected);
    let _ = writeln!(summary, "x_e_true={}", run.x_e_true);
    summary.push_str(&run.trace.summary.to_text());

    match &s.out {
        Some(p) => {
            emit(Some(p), &run.trace.to_csv())?;
            emit(s.summary.as_deref(), &summary)?;
        }
        None => emit(s.summary.as_deref(), &summary)?,
    }
    if let Some(reason) = &run.trace.summary.failure {
        return Err(runtime(anyhow!("simulation failed: {reason}")));
    }
    Ok(())
}

fn bench(s: Settings) -> Outcome {
    s.reject("bench", &["input", "summary", "scene_out"])?;
    let repeats = s.repeats.unwrap_or(5);
    if repeats == 0 {
        return Err(usage(anyhow!("`repeats` must be at least 1")));
    }
    let first = s.seed.unwrap_or(1);
    let seeds: Vec<u64> = (0..repeats as u64)
        .map(|i| {
            first
                .checked_add(i)
                .ok_or_else(|| usage(anyhow!("seed range overflows")))
        })
        .collect::<Outcome<_>>()?;
    let cfg = s.scenario_config(&s.params)?;
    let traces = run_batch(&cfg, &seeds).map_err(runtime)?;
    let stats = summarize_runs(&traces).map_err(runtime)?;

    let mut out = String::new();
    for t in &traces {
        let _ = writeln!(
            out,
            "run.{}.kappa_inf={} steady_state_error={} peak_force={} failed={}",
            t.config.seed(),
            t.summary.kappa_inf,
            t.summary.steady_state_error,
            t.summary.peak_force,
            t.failed()
        );
    }
    for st in &stats {
        out.push_str(&st.to_text());
        let _ = writeln!(
            out,
            "{}.kappa_inf.relative_std={}",
            st.scenario,
            st.kappa_inf.relative_std()
        );
    }
    eprintln!("bench: {} x {} runs", cfg.kind, repeats);
    emit(s.out.as_deref(), &out)?;
    let failed = traces.iter().filter(|t| t.failed()).count();
    if failed > 0 {
        return Err(runtime(anyhow!("{failed} of {repeats} runs failed")));
    }
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Detect(o) => detect(Settings::load(o)?),
        Command::Simulate(o) => simulate(Settings::load(o)?),
        Command::Pipeline(o) => pipeline(Settings::load(o)?),
        Command::Bench(o) => bench(Settings::load(o)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let code = f.code();
            let (Failure::Usage(e) | Failure::Runtime(e)) = f;
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
