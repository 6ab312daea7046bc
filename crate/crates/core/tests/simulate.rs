mod common;

use common::*;
use lattice_ldp::mcstats::estimate_moments;
use lattice_ldp::simulate::{simulate_coupled, simulate_path, Scheme, SimConfig};
use lattice_ldp::skeleton::{solve_limit_with, Integrator};
use lattice_ldp::{Error, StateVector};

fn constant(p: &lattice_ldp::ModelParams, x: f64) -> StateVector {
    StateVector::from_fn(p.shape(), |_| x)
}

#[test]
fn ornstein_uhlenbeck_moments() {
    // One site with zero padding: du = −3u dt + √ε dW. From u0 = 2 the mean is
    // 2e^{−3t} and the variance ε(1 − e^{−6t})/6.
    let p = linear_onesite(1.0);
    let cfg = SimConfig::new(1e-3, 1.0, Scheme::EulerMaruyama).with_paths(20_000).with_seed(3).with_stride(250);
    let s = estimate_moments(&p, &constant(&p, 2.0), &cfg, &[]).unwrap();
    for (i, t) in s.times.iter().enumerate() {
        let mean = 2.0 * (-3.0 * t).exp();
        let var = (1.0 - (-6.0 * t).exp()) / 6.0;
        let m = s.site_mean[i].values()[0];
        let se = (var / 20_000.0).sqrt().max(1e-12);
        assert!((m - mean).abs() <= 4.0 * se, "t = {t}: mean {m} vs {mean}");
        if *t > 0.0 {
            let v = s.site_var[i].values()[0];
            assert!((v - var).abs() <= 4.0 * var * (2.0 / 20_000f64).sqrt(), "t = {t}: var {v} vs {var}");
        }
    }
}

#[test]
fn euler_maruyama_is_weakly_first_order() {
    // Stationary E u² of the discretized system is ε / (6 − 9 dt); the gap to ε/6 halves with dt.
    let p = linear_onesite(1.0);
    let u0 = constant(&p, 0.0);
    let mut gaps = Vec::new();
    for dt in [0.1, 0.05, 0.025] {
        let cfg = SimConfig::new(dt, 8.0, Scheme::EulerMaruyama).with_paths(200_000).with_seed(9).with_stride(10_000);
        let s = estimate_moments(&p, &u0, &cfg, &[]).unwrap();
        let (m, se) = (*s.mean_norm_sq.last().unwrap(), *s.se_norm_sq.last().unwrap());
        let n = (8.0 / dt).round() as i32;
        let r = 1.0 - 3.0 * dt;
        let discrete = dt * (1.0 - r.powi(2 * n)) / (1.0 - r * r);
        assert!((m - discrete).abs() <= 4.0 * se, "dt = {dt}: {m} vs {discrete} ± {se}");
        gaps.push(m - (1.0 - (-48.0f64).exp()) / 6.0);
    }
    let order = (gaps[0] / gaps[2]).log2() / 2.0;
    assert!((0.7..1.3).contains(&order), "gaps {gaps:?}, order {order}");
}

#[test]
fn chain_mean_follows_matrix_exponential() {
    let p = linear_chain(0.5);
    let u0 = power_decay(p.shape(), 1.5, 1.0);
    let cfg = SimConfig::new(1e-3, 2.0, Scheme::EulerMaruyama).with_paths(4000).with_seed(5).with_stride(500);
    let s = estimate_moments(&p, &u0, &cfg, &[]).unwrap();
    for (i, t) in s.times.iter().enumerate().skip(1) {
        let exact = linear_solution(&p, &u0, &p.g, *t);
        for k in 0..p.shape().site_count() {
            let se = (s.site_var[i].values()[k] / 4000.0).sqrt();
            let d = (s.site_mean[i].values()[k] - exact.values()[k]).abs();
            assert!(d <= 4.0 * se + 1e-3 * exact.values()[k].abs(), "t = {t}, site {k}: {d} vs se {se}");
        }
    }
}

#[test]
fn paths_are_reproducible_and_distinct() {
    let p = cubic_onesite(0.3);
    let cfg = SimConfig::new(0.01, 1.0, Scheme::TamedEuler).with_seed(17);
    let u0 = constant(&p, 0.5);
    let a = simulate_path(&p, &u0, &cfg, None, 4).unwrap();
    let b = simulate_path(&p, &u0, &cfg, None, 4).unwrap();
    let c = simulate_path(&p, &u0, &cfg, None, 5).unwrap();
    let d = simulate_path(&p, &u0, &cfg.clone().with_seed(18), None, 4).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.final_state(), c.final_state());
    assert_ne!(a.final_state(), d.final_state());
}

#[test]
fn zero_noise_matches_explicit_skeleton() {
    let p = model(1, 3, 1.0, lattice_ldp::model::NonlinearitySpec::Cubic, lattice_ldp::model::DiffusionKind::NormalizedDiagonal, |s| power_decay(s, 1.0, 2.0), |s| power_decay(s, 1.0, 1.0), 0.0);
    let u0 = power_decay(p.shape(), 2.0, 1.0);
    for scheme in [Scheme::EulerMaruyama, Scheme::TamedEuler] {
        let cfg = SimConfig::new(0.01, 2.0, scheme).with_stride(50);
        let path = simulate_path(&p, &u0, &cfg, None, 0).unwrap();
        let det = solve_limit_with(&p, &u0, 2.0, 0.01, Integrator::Explicit(scheme), 50).unwrap();
        assert_eq!(path.times, det.times);
        assert_eq!(path.states, det.states);
    }
}

#[test]
fn coupled_paths_share_noise() {
    // Additive noise and linear drift: the difference is deterministic.
    let p = linear_chain(0.5);
    let ua = StateVector::zeros(p.shape());
    let ub = power_decay(p.shape(), 1.0, 1.0);
    let cfg = SimConfig::new(0.01, 1.0, Scheme::EulerMaruyama).with_stride(100);
    let pair = simulate_coupled(&p, &ua, &ub, &cfg, 3).unwrap();
    let zero = p.with_epsilon(0.0);
    let d = solve_limit_with(&zero, &ub.sub(&ua), 1.0, 0.01, Integrator::Explicit(Scheme::EulerMaruyama), 100).unwrap();
    let g_free = lattice_ldp::ModelParams { g: StateVector::zeros(p.shape()), ..zero };
    let d_free = solve_limit_with(&g_free, &ub.sub(&ua), 1.0, 0.01, Integrator::Explicit(Scheme::EulerMaruyama), 100).unwrap();
    let expected = d_free.final_state().norm_sq();
    assert!((pair.diff_sq.last().unwrap() - expected).abs() < 1e-12);
    assert_eq!(d.times.len(), pair.diff_sq.len());
}

#[test]
fn step_size_is_validated() {
    let p = linear_chain(0.5);
    let u0 = StateVector::zeros(p.shape());
    let too_big = SimConfig::new(0.2, 1.0, Scheme::EulerMaruyama);
    assert!(matches!(simulate_path(&p, &u0, &too_big, None, 0), Err(Error::InvalidConfig(_))));
    let ragged = SimConfig::new(0.03, 1.0, Scheme::EulerMaruyama);
    assert!(simulate_path(&p, &u0, &ragged, None, 0).is_err());
}

#[test]
fn taming_survives_a_large_start() {
    let p = cubic_onesite(0.0);
    let u0 = constant(&p, 10.0);
    let cfg = SimConfig::new(0.1, 5.0, Scheme::TamedEuler);
    let tamed = simulate_path(&p, &u0, &cfg, None, 0).unwrap();
    assert!(tamed.final_state().values()[0].abs() < 1.0);
    let plain = SimConfig { scheme: Scheme::EulerMaruyama, ..cfg };
    assert!(matches!(simulate_path(&p, &u0, &plain, None, 0), Err(Error::NonFinite { .. })));
}
