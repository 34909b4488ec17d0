use proptest::prelude::*;
use soilprobe::sim::{
    run_batch, run_scenario, summarize_runs, ReferenceMode, ScenarioConfig, ScenarioKind,
    SensorModel,
};

fn noise_free(kind: ScenarioKind) -> ScenarioConfig {
    ScenarioConfig {
        sensor: SensorModel::ideal(),
        ..ScenarioConfig::preset(kind)
    }
}

fn custom(k_e: f64) -> ScenarioConfig {
    ScenarioConfig {
        k_e,
        ..noise_free(ScenarioKind::Custom)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn converges_for_any_soil_stiffness(k_e in 200.0f64..100_000.0) {
        let tr = run_scenario(&custom(k_e)).unwrap();
        let s = &tr.summary;
        prop_assert!(!tr.failed());
        let settle = s.settling_time.expect("settles");
        let start = tr.force_phase_index.unwrap();
        let after = tr.t[start] + settle;
        for (t, e) in tr.t.iter().zip(&tr.e) {
            if *t >= after {
                prop_assert!(e.abs() <= 0.02 * 5.0);
            }
        }
        prop_assert!((s.kappa_inf * k_e - 1.0).abs() <= 0.05, "kappa*k_e = {}", s.kappa_inf * k_e);
    }

    #[test]
    fn kappa_limit_is_independent_of_force_level(c in 0.2f64..4.0) {
        let base = custom(3000.0);
        let scaled = ScenarioConfig { f_r: base.f_r * c, ..base.clone() };
        let a = run_scenario(&base).unwrap().summary.kappa_inf;
        let b = run_scenario(&scaled).unwrap().summary.kappa_inf;
        prop_assert!((a - b).abs() <= 0.01 * a, "{a} vs {b}");
    }
}

#[test]
fn mid_stiffness_compliance() {
    let tr = run_scenario(&custom(2000.0)).unwrap();
    let kappa = tr.summary.kappa_inf;
    assert!((0.95 / 2000.0..=1.05 / 2000.0).contains(&kappa), "{kappa}");
}

#[test]
fn stiffer_contact_adapts_faster() {
    let soft = run_scenario(&custom(500.0))
        .unwrap()
        .summary
        .time_to_10pct
        .unwrap();
    let hard = run_scenario(&custom(50_000.0))
        .unwrap()
        .summary
        .time_to_10pct
        .unwrap();
    assert!(hard < soft, "{hard} vs {soft}");
}

#[test]
fn first_force_step_targets_detected_surface() {
    for kind in [ScenarioKind::Moist, ScenarioKind::Dry, ScenarioKind::Rigid] {
        let cfg = ScenarioConfig {
            x_e_true: -0.11,
            x_e_detected: -0.11,
            ..ScenarioConfig::preset(kind)
        };
        let tr = run_scenario(&cfg).unwrap();
        let i = tr.force_phase_index.unwrap();
        assert_eq!(tr.x_r[i], cfg.x_e_detected);
        assert!(tr.x_r[..i].iter().all(|&r| r <= cfg.x_e_detected));
    }
}

#[test]
fn spring_is_the_only_force_source() {
    for kind in [ScenarioKind::Moist, ScenarioKind::Dry, ScenarioKind::Rigid] {
        let cfg = noise_free(kind);
        let tr = run_scenario(&cfg).unwrap();
        let max_pen = tr.x.iter().map(|x| x - cfg.x_e_true).fold(0.0, f64::max);
        let bound = cfg.k_e * max_pen;
        assert!(tr
            .f_meas
            .iter()
            .all(|&f| f >= 0.0 && f <= bound * (1.0 + 1e-12)));
    }
}

#[test]
fn baseline_offset_shows_before_contact() {
    let cfg = ScenarioConfig::preset(ScenarioKind::Moist).with_seed(8);
    let tr = run_scenario(&cfg).unwrap();
    let end = tr.force_phase_index.unwrap();
    assert!(tr.f_true[..end].iter().all(|&f| f == 0.0));
    let mean = tr.summary.free_space_force_mean.unwrap();
    assert!(mean.abs() > 1e-3, "{mean}");
}

#[test]
fn identical_config_gives_identical_trace() {
    let cfg = ScenarioConfig::preset(ScenarioKind::Dry).with_seed(31);
    let a = run_scenario(&cfg).unwrap();
    let b = run_scenario(&cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_csv(), b.to_csv());
}

#[test]
fn known_stiffness_reference_zeroes_error() {
    for kind in [ScenarioKind::Moist, ScenarioKind::Dry, ScenarioKind::Rigid] {
        let cfg = ScenarioConfig {
            reference_mode: ReferenceMode::Known,
            ..noise_free(kind)
        };
        let tr = run_scenario(&cfg).unwrap();
        assert!(
            tr.summary.steady_state_error <= 1e-6,
            "{kind}: {}",
            tr.summary.steady_state_error
        );
    }
}

#[test]
fn rigid_contact_stays_gentle() {
    let tr = run_scenario(&noise_free(ScenarioKind::Rigid)).unwrap();
    assert!(tr.summary.kappa_inf <= 2e-6);
    assert!(tr.summary.peak_force <= 1.5 * 5.0);
}

#[test]
fn repeated_runs_statistics() {
    let cfg = ScenarioConfig::preset(ScenarioKind::Moist);
    let same = run_batch(&cfg, &[4; 5]).unwrap();
    let st = &summarize_runs(&same).unwrap()[0];
    assert_eq!(st.runs, 5);
    assert_eq!(st.kappa_inf.std, 0.0);
    assert_eq!(st.peak_force.std, 0.0);
    assert_eq!(st.steady_state_error.std, 0.0);

    let varied = run_batch(&cfg, &[1, 2, 3, 4, 5]).unwrap();
    let st = &summarize_runs(&varied).unwrap()[0];
    assert!(st.kappa_inf.relative_std() <= 0.10);
}

#[test]
fn dry_estimate_stiffer_than_moist() {
    let seeds = [1, 2, 3, 4, 5];
    let mut traces = run_batch(&ScenarioConfig::preset(ScenarioKind::Moist), &seeds).unwrap();
    traces.extend(run_batch(&ScenarioConfig::preset(ScenarioKind::Dry), &seeds).unwrap());
    let st = summarize_runs(&traces).unwrap();
    assert_eq!(st[0].scenario, ScenarioKind::Moist);
    let moist = st[0].stiffness_est.unwrap().mean;
    let dry = st[1].stiffness_est.unwrap().mean;
    assert!(dry > moist);
}
