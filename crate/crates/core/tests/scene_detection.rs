use soilprobe::ground::{detect_ground, DetectionConfig};
use soilprobe::pipeline::run_pipeline;
use soilprobe::sim::{generate_pot_scene, PotSceneParams, ScenarioConfig, ScenarioKind};

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (
        m,
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt(),
    )
}

#[test]
fn clean_scene_recovers_height() {
    for seed in 0..3 {
        let scene = generate_pot_scene(&PotSceneParams::clean(), seed).unwrap();
        let det = detect_ground(&scene.world_cloud(), &DetectionConfig::default(), seed).unwrap();
        assert!((det.estimate.g_c.z - scene.truth.g_c.z).abs() <= 1e-4);
        assert!(det.estimate.plane.tilt_from(&nalgebra::Vector3::z()) < 0.02);
    }
}

#[test]
fn cluttered_scenes_within_tolerance() {
    let params = PotSceneParams::default();
    let (mut dx, mut dy, mut dz) = (vec![], vec![], vec![]);
    for seed in 0..10 {
        let scene = generate_pot_scene(&params, seed).unwrap();
        let det = detect_ground(&scene.world_cloud(), &DetectionConfig::default(), seed).unwrap();
        let (g, t) = (det.estimate.g_c, scene.truth.g_c);
        dx.push(g.x - t.x);
        dy.push(g.y - t.y);
        dz.push((g.z - t.z).abs());
    }
    let (z_mean, z_std) = mean_std(&dz);
    assert!(z_mean <= 0.002 && z_std <= 0.001, "{z_mean} {z_std}");
    assert!(mean_std(&dx).1 <= 0.007);
    assert!(mean_std(&dy).1 <= 0.007);
}

#[test]
fn camera_frame_round_trip() {
    let scene = generate_pot_scene(&PotSceneParams::default(), 2).unwrap();
    let back = scene
        .world_cloud()
        .transformed(&scene.base_from_camera().inverse(), "camera");
    for (a, b) in back
        .iter()
        .zip(scene.cloud.iter())
        .filter(|(a, _)| a.is_valid())
    {
        assert!(a.distance(b) < 1e-12);
    }
}

#[test]
fn detected_surface_feeds_force_control() {
    let scenario = ScenarioConfig::preset(ScenarioKind::Moist);
    for seed in [0, 5] {
        let run = run_pipeline(
            &PotSceneParams::default(),
            &DetectionConfig::default(),
            &scenario,
            seed,
        )
        .unwrap();
        let s = &run.trace.summary;
        assert!(!run.trace.failed());
        assert!((run.x_e_detected - run.x_e_true).abs() < 0.01);
        assert!(
            s.steady_state_error <= 0.02 * scenario.f_r,
            "{}",
            s.steady_state_error
        );
    }
}
