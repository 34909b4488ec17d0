//! Closed-loop contact simulation and synthetic scene generation.

pub mod environment;
pub mod robot;
pub mod scenario;
pub mod scene;
pub mod sensor;
pub mod stats;

pub use environment::{environment_force, EnvironmentModel};
pub use robot::{robot_step, RobotModel};
pub use scenario::{
    run_batch, run_scenario, ReferenceMode, ScenarioConfig, ScenarioKind, SimTrace, TraceSummary,
    TRACE_HEADER,
};
pub use scene::{generate_pot_scene, PotScene, PotSceneParams};
pub use sensor::{sensor_read, SensorModel, SensorState};
pub use stats::{summarize_runs, RunStatistics, Stat};
