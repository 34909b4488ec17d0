//! Step response of the impedance filter against the analytic solution of
//! m·x'' + b·x' + k·x = F with x(0) = x'(0) = 0.

use soilprobe::impedance::{channel_step, ChannelParams, ChannelState};

fn analytic(p: &ChannelParams, f: f64, t: f64) -> f64 {
    let (m, b, k) = (p.m, p.b, p.k);
    let wn = (k / m).sqrt();
    let zeta = b / (2.0 * (k * m).sqrt());
    let x_ss = f / k;
    if (zeta - 1.0).abs() < 1e-12 {
        x_ss * (1.0 - (1.0 + wn * t) * (-wn * t).exp())
    } else if zeta < 1.0 {
        let wd = wn * (1.0 - zeta * zeta).sqrt();
        let decay = (-zeta * wn * t).exp();
        x_ss * (1.0 - decay * ((wd * t).cos() + zeta * wn / wd * (wd * t).sin()))
    } else {
        let root = (zeta * zeta - 1.0).sqrt();
        let s1 = -wn * (zeta - root);
        let s2 = -wn * (zeta + root);
        x_ss * (1.0 + (s2 * (s1 * t).exp() - s1 * (s2 * t).exp()) / (s1 - s2))
    }
}

fn simulate(p: &ChannelParams, f: f64, dt: f64, times: &[f64]) -> Vec<f64> {
    let reference = ChannelState::default();
    let mut s = ChannelState::default();
    let mut out = Vec::new();
    let mut step = 0usize;
    for &t in times {
        let target = (t / dt).round() as usize;
        while step < target {
            s = channel_step(&s, &reference, f, p, dt).unwrap();
            step += 1;
        }
        out.push(s.pos);
    }
    out
}

const TIMES: [f64; 3] = [0.05, 0.1, 0.5];

#[test]
fn step_response_matches_closed_form() {
    let sets = [
        ("under", ChannelParams::new(1.0, 10.0, 400.0)),
        ("critical", ChannelParams::new(1.0, 40.0, 400.0)),
        ("over", ChannelParams::new(1.0, 100.0, 400.0)),
    ];
    for (name, p) in sets {
        let sim = simulate(&p, 4.0, 1e-3, &TIMES);
        for (t, x) in TIMES.iter().zip(sim) {
            let want = analytic(&p, 4.0, *t);
            assert!((x - want).abs() <= 1e-4, "{name} t={t}: {x} vs {want}");
        }
    }
}

#[test]
fn oracle_sanity() {
    let p = ChannelParams::new(1.0, 40.0, 400.0);
    assert_eq!(analytic(&p, 4.0, 0.0), 0.0);
    assert!((analytic(&p, 4.0, 10.0) - 0.01).abs() < 1e-12);
    // continuity across the critical boundary
    let near = ChannelParams::new(1.0, 40.0 * (1.0 + 1e-7), 400.0);
    assert!((analytic(&p, 4.0, 0.1) - analytic(&near, 4.0, 0.1)).abs() < 1e-8);
}
