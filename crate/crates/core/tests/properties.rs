#![allow(clippy::needless_range_loop)]

use std::f64::consts::PI;
use std::path::Path;

use proptest::prelude::*;

use fiberlab::config::ExperimentConfig;
use fiberlab::estimates::{least_squares_slope, EstimateReport};
use fiberlab::flow;
use fiberlab::geom;
use fiberlab::manifold::{build_family, geodesic_ball, DiscreteManifold, FamilySpec};
use fiberlab::operators::{self, laplacian_matrix};
use fiberlab::splitting::{self, JacobianStats, RegularMask};

fn warped_setup() -> (DiscreteManifold, JacobianStats, RegularMask) {
    let m = build_family(&FamilySpec::warped(0.2, 0.3, 48, 16)).unwrap();
    let center = m.grid().unwrap().flat([36, 0, 0]);
    let ball = geodesic_ball(&m, center, 0.4).unwrap();
    let phi = splitting::base_coordinate_map(&m, &ball).unwrap();
    let stats = splitting::jacobian_stats(&m, &phi);
    let mask = splitting::classify_regular(&m, &stats, splitting::default_threshold(&stats)).unwrap();
    (m, stats, mask)
}

fn fourier_field(m: &DiscreteManifold, coeffs: &[f64]) -> Vec<f64> {
    (0..m.len())
        .map(|n| {
            let p = m.position(n);
            coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let (a, b) = ((i % 3) as f64, (i / 3) as f64);
                    c * (2.0 * PI * (a * p[0] + b * p[1]) + i as f64).sin()
                })
                .sum()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn laplacian_is_symmetric_and_nonnegative(
        a in prop::collection::vec(-1.0f64..1.0, 9),
        b in prop::collection::vec(-1.0f64..1.0, 9),
        delta in -0.5f64..0.5,
    ) {
        let m = build_family(&FamilySpec::warped(0.3, delta, 24, 16)).unwrap();
        let lap = laplacian_matrix(&m).unwrap();
        let (u, v) = (fourier_field(&m, &a), fourier_field(&m, &b));
        let su = fiberlab::linalg::matvec(lap.stiffness(), &u);
        let sv = fiberlab::linalg::matvec(lap.stiffness(), &v);
        let uv: f64 = v.iter().zip(&su).map(|(x, y)| x * y).sum();
        let vu: f64 = u.iter().zip(&sv).map(|(x, y)| x * y).sum();
        let uu: f64 = u.iter().zip(&su).map(|(x, y)| x * y).sum();
        prop_assert!((uv - vu).abs() <= 1e-10 * (1.0 + uv.abs()));
        prop_assert!(uu >= -1e-12);
    }

    #[test]
    fn tangential_projection_splits_the_gradient(coeffs in prop::collection::vec(-1.0f64..1.0, 9)) {
        let (m, stats, mask) = warped_setup();
        let u = fourier_field(&m, &coeffs);
        let grad = operators::gradient(&m, &u);
        let field = flow::tangential_projection(&m, &u, &stats, &mask);
        for n in 0..m.len() {
            let (Some(t), Some(p)) = (field.tangential(n), field.normal(n)) else {
                prop_assert!(!mask.is_regular(n));
                continue;
            };
            let g2 = m.inner(n, &grad[n], &grad[n]);
            let split = m.inner(n, t, t) + m.inner(n, p, p);
            prop_assert!((g2 - split).abs() <= 1e-9 * (1.0 + g2));
            for a in 0..stats.k() {
                let scale = m.norm(n, &stats.gradients[a][n]) * (1.0 + m.norm(n, &grad[n]));
                prop_assert!(m.inner(n, t, &stats.gradients[a][n]).abs() <= 1e-10 * scale);
            }
            let again = stats.normal_part(&m, n, t);
            prop_assert!(m.norm(n, &again) <= 1e-10 * (1.0 + m.norm(n, t)));
        }
    }

    #[test]
    fn config_roundtrips_through_toml(
        eps in 0.01f64..1.0,
        delta in -0.9f64..0.9,
        radius in 0.01f64..0.2,
        count in 1usize..12,
        seed in 0..=i64::MAX as u64,
        levels in 1usize..20,
        lambda in prop::option::of(0.0f64..10.0),
    ) {
        let mut cfg = ExperimentConfig::warped_default();
        cfg.family = FamilySpec::warped(eps, delta, 64, 16);
        cfg.ball.radius = radius;
        cfg.spectral.count = count;
        cfg.seed = seed;
        cfg.estimates.fiber_levels = levels;
        cfg.estimates.lambda_ric = lambda;
        let text = cfg.to_toml().unwrap();
        let back = ExperimentConfig::parse(&text, Path::new("p.toml")).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
    }

    #[test]
    fn report_margin_matches_pass(lhs in 0.0f64..10.0, rhs in 0.001f64..10.0) {
        let r = EstimateReport::new("probe", lhs, rhs);
        prop_assert_eq!(r.pass, lhs <= rhs);
        if lhs > 0.0 {
            prop_assert!((r.margin - rhs / lhs).abs() <= 1e-12 * r.margin);
        }
    }

    #[test]
    fn slope_recovers_power_laws(c in 0.1f64..10.0, p in -3.0f64..3.0) {
        let pts: Vec<(f64, f64)> = [0.05f64, 0.1, 0.2, 0.4].iter().map(|&x| (x.ln(), (c * x.powf(p)).ln())).collect();
        let s = least_squares_slope(&pts).unwrap();
        prop_assert!((s - p).abs() <= 1e-9);
    }
}

#[test]
fn jacobian_stats_invariants_hold() {
    let (m, stats, mask) = warped_setup();
    for n in 0..m.len() {
        if !stats.valid[n] {
            continue;
        }
        assert!(stats.lambda[n] <= stats.big_lambda[n] * (1.0 + 1e-14));
        assert!(stats.det[n] >= 0.0);
        assert!((stats.jk[n] * stats.jk[n] - stats.det[n]).abs() <= 1e-12 * (1.0 + stats.det[n]));
        if mask.is_regular(n) {
            assert!(stats.lambda[n] > mask.threshold);
        }
    }
}

#[test]
fn g_is_the_derivative_of_the_jacobian_density() {
    let m = build_family(&FamilySpec::warped(0.2, 0.3, 128, 16)).unwrap();
    let center = m.grid().unwrap().flat([96, 0, 0]);
    let ball = geodesic_ball(&m, center, 0.4).unwrap();
    let phi = splitting::base_coordinate_map(&m, &ball).unwrap();
    let stats = splitting::jacobian_stats(&m, &phi);
    let mask = splitting::classify_regular(&m, &stats, splitting::default_threshold(&stats)).unwrap();
    let inner = ball.with_radius(&m, 0.3);
    let djk = operators::gradient(&m, &stats.jk);
    let x = [0.3, 0.7, 0.0];
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for n in 0..m.len() {
        if !inner.contains(n) || !mask.is_regular(n) {
            continue;
        }
        let g = splitting::quantity_g(&stats, &mask, n, &x).unwrap();
        let fd = m.inner(n, &djk[n], &x);
        worst = worst.max((g - fd).abs());
        scale = scale.max(g.abs());
    }
    assert!(scale > 0.0);
    assert!(worst <= 1e-2 * scale, "worst {worst} scale {scale}");
}

#[test]
fn f_and_g_vanish_for_an_exact_splitting() {
    let m = build_family(&FamilySpec::flat(0.1, 32, 16)).unwrap();
    let center = m.grid().unwrap().flat([16, 0, 0]);
    let phi = splitting::global_coordinates(&m, center).unwrap();
    let stats = splitting::jacobian_stats(&m, &phi);
    let mask = splitting::classify_regular(&m, &stats, 1e-6).unwrap();
    let u = fourier_field(&m, &[0.3, -0.2, 0.5, 1.0, 0.1, -0.7]);
    let grad = operators::gradient(&m, &u);
    for n in (0..m.len()).filter(|&n| mask.is_regular(n)) {
        let x = geom::scale(&grad[n], 0.5);
        assert!(splitting::quantity_f(&m, &stats, &mask, n, &grad[n], &x).unwrap().abs() < 1e-9);
        assert!(splitting::quantity_g(&stats, &mask, n, &x).unwrap().abs() < 1e-9);
    }
}

#[test]
fn singular_nodes_are_rejected_by_f_and_g() {
    let m = build_family(&FamilySpec::flat(1.0, 32, 32)).unwrap();
    let center = m.grid().unwrap().flat([16, 16, 0]);
    let ball = geodesic_ball(&m, center, 0.45).unwrap();
    let phi = splitting::morse_test_map(&m, &m.position(center), 0.25, ball.mask().to_vec(), center).unwrap();
    let stats = splitting::jacobian_stats(&m, &phi);
    let mask = splitting::classify_regular(&m, &stats, splitting::default_threshold(&stats)).unwrap();
    let n = (0..m.len()).find(|&n| stats.valid[n] && !mask.is_regular(n)).unwrap();
    assert!(matches!(
        splitting::quantity_g(&stats, &mask, n, &[1.0, 0.0, 0.0]),
        Err(fiberlab::Error::SingularPoint { .. })
    ));
    let all = splitting::classify_regular(&m, &stats, f64::MAX).unwrap();
    assert_eq!(all.singular_fraction, 1.0);
}
