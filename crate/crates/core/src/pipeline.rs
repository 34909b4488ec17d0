//! Scene → soil detection → force-controlled probing.
//!
//! The probe descends along −z of the base frame, so contact positions are
//! depths `x = −z`.

use crate::error::{require, Result};
use crate::ground::{detect_ground, Detection, DetectionConfig, GroundEstimate};
use crate::pointcloud::Point3;
use crate::sim::{
    generate_pot_scene, run_scenario, PotScene, PotSceneParams, ScenarioConfig, SimTrace,
};

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub scene: PotScene,
    pub detection: Detection,
    /// Depth of the detected plane under the approach point.
    pub x_e_detected: f64,
    /// Depth of the actual soil under the approach point.
    pub x_e_true: f64,
    pub trace: SimTrace,
}

/// Height of the estimated plane above `(x, y)`.
pub fn plane_height(estimate: &GroundEstimate, x: f64, y: f64) -> Result<f64> {
    let n = &estimate.plane.normal;
    require(n.z.abs() > 1e-6, "plane", "is vertical")?;
    Ok(-(n.x * x + n.y * y + estimate.plane.d) / n.z)
}

/// Contact depth for probing at `p` on the estimated plane.
pub fn detected_depth(estimate: &GroundEstimate, p: &Point3) -> Result<f64> {
    Ok(-plane_height(estimate, p.x, p.y)?)
}

/// Generates the scene for `seed`, detects the soil in it and probes at the
/// approach point. `scenario`'s surface positions are overwritten.
pub fn run_pipeline(
    scene: &PotSceneParams,
    detection: &DetectionConfig,
    scenario: &ScenarioConfig,
    seed: u64,
) -> Result<PipelineRun> {
    let scene = generate_pot_scene(scene, seed)?;
    let detection = detect_ground(&scene.world_cloud(), detection, seed)?;
    let a = detection.estimate.approach;
    let x_e_detected = detected_depth(&detection.estimate, &a)?;
    let x_e_true = -scene.surface_height(a.x, a.y);
    let cfg = ScenarioConfig {
        x_e_detected,
        x_e_true,
        ..scenario.clone()
    };
    let trace = run_scenario(&cfg)?;
    Ok(PipelineRun {
        scene,
        detection,
        x_e_detected,
        x_e_true,
        trace,
    })
}
