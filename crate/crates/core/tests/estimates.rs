use std::f64::consts::PI;

use brownlab::gn_variational::IntersectionMode;
use brownlab::kernel_estimates::{
    c_space, c_time, check_dirichlet_case, dirichlet_integral, moment_growth_in_t, radial_kernel,
    riesz_moment_origin, scaling_exponent, scaling_identity_check, verify_kernel_bounds,
    verify_riesz_moment, verify_time_increment_bound, MomentConfig, MomentFunctional, RieszSweep,
    ScalingConfig, Sweep,
};
use proptest::prelude::*;

/// Golden-section maximizer on `[a, b]` for a unimodal `f`.
fn argmax(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let (x1, x2) = (b - g * (b - a), a + g * (b - a));
        if f(x1) < f(x2) {
            a = x1;
        } else {
            b = x2;
        }
    }
    0.5 * (a + b)
}

/// Composite Simpson rule with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(a) + f(b) + inner) * h / 3.0
}

#[test]
fn space_constant_is_the_scalar_maximum() {
    for d in 1..=3 {
        let dh = d as f64 / 2.0;
        // p_t(x)|x|^d = pi^{-d/2} v^{d/2} e^{-v} with v = |x|^2 / 2t
        let g = |v: f64| PI.powf(-dh) * v.powf(dh) * (-v).exp();
        let v = argmax(g, 1e-6, 20.0);
        assert!((v - dh).abs() < 1e-6, "d={d}: argmax {v}");
        assert!((g(v) / c_space(d) - 1.0).abs() < 1e-12);
        assert!((c_time(d) - (2.0 * PI).powf(-dh)).abs() < 1e-16);
    }
}

#[test]
fn kernel_sweep_is_tight_where_expected() {
    let sweep = Sweep { nt: 60, nr: 400, ..Sweep::default() };
    for d in 1..=3 {
        let r = verify_kernel_bounds(d, &sweep).unwrap();
        let (time, space) = (&r[0], &r[1]);
        assert!(time.pass && space.pass);
        assert_eq!(time.samples, 60 * 400);
        // smallest radius is 1e-3, so the time bound is nearly attained
        assert!(time.worst_ratio / c_time(d) > 0.999);
        assert!(space.worst_ratio / c_space(d) > 0.99);
        let (t, x, _) = space.worst_at;
        let v = x * x / (2.0 * t);
        assert!((v / (d as f64 / 2.0)).ln().abs() < 0.2, "d={d}: v={v}");
    }
    assert_eq!(verify_kernel_bounds(2, &sweep).unwrap(), verify_kernel_bounds(2, &sweep).unwrap());
}

#[test]
fn increment_bounds_hold_and_match_the_mean_value_oracle() {
    let sweep = Sweep { nt: 40, nr: 40, ..Sweep::default() };
    for d in 1..=3 {
        let r = verify_time_increment_bound(d, &sweep, &[1e-4, 1e-2, 1.0, 100.0]).unwrap();
        assert!(r.iter().all(|x| x.pass && x.empirical_constant <= x.declared_constant * (1.0 + 1e-9)));
    }
    for (t, e) in [(0.01, 0.001), (0.5, 0.3), (3.0, 10.0)] {
        let lhs = radial_kernel(1, t, 0.0) - radial_kernel(1, t + e, 0.0);
        let exact = (t.powf(-0.5) - (t + e).powf(-0.5)) / (2.0 * PI).sqrt();
        assert!((lhs / exact - 1.0).abs() < 1e-12);
        assert!(lhs <= 0.5 * e * t.powf(-1.5) / (2.0 * PI).sqrt());
    }
}

#[test]
fn riesz_moment_monte_carlo_and_slopes_in_the_plane() {
    let r = verify_riesz_moment(2, 1.0, &RieszSweep::default(), 100_000, 5).unwrap();
    assert!((r.origin_exact - (PI / 2.0).sqrt()).abs() < 1e-13);
    let (m, se) = r.origin_mc;
    assert!(((m - r.origin_exact) / se).abs() < 4.0, "{m} +- {se}");
    assert!((r.t_slope + 0.5).abs() < 0.05, "t slope {}", r.t_slope);
    assert!((r.r_slope + 1.0).abs() < 0.05, "r slope {}", r.r_slope);
    assert_eq!(r, verify_riesz_moment(2, 1.0, &RieszSweep::default(), 100_000, 5).unwrap());
    assert!(verify_riesz_moment(2, 2.0, &RieszSweep::default(), 100, 5).is_err());
    assert!(riesz_moment_origin(1, 1.0, 1.0).is_err());
}

#[test]
fn dirichlet_half_half_is_pi_by_simplex_sampling() {
    let c = check_dirichlet_case(&[0.5, 0.5], 1.0, 200_000, 4, 0).unwrap();
    assert!((c.exact - PI).abs() < 1e-12);
    assert!(c.z.abs() < 3.0, "z {}", c.z);
    assert_eq!(c, check_dirichlet_case(&[0.5, 0.5], 1.0, 200_000, 4, 0).unwrap());
    assert!(dirichlet_integral(&[], 1.0).is_err());
    assert!(dirichlet_integral(&[1.0, -0.5], 1.0).is_err());
}

#[test]
fn unit_scale_gives_unit_expected_ratio() {
    let cfg = ScalingConfig {
        mode: IntersectionMode::SelfIntersection,
        d: 1,
        order: 2,
        c: 1.0,
        t: 1.0,
        steps: 100,
        eps: 0.05,
        h: 0.05,
        replicas: 400,
        seed: 2,
    };
    let r = scaling_identity_check(&cfg).unwrap();
    assert_eq!(r.expected, 1.0);
    assert_eq!(r.second_expected, 1.0);
    // the two horizons draw from disjoint streams, so only statistical agreement
    assert!(((r.ratio - 1.0) / r.ratio_se).abs() < 3.0);
    assert!(r.pass);
    assert_eq!(scaling_exponent(IntersectionMode::Mutual, 3, 2), 0.5);
    assert_eq!(scaling_exponent(IntersectionMode::Mutual, 1, 3), 2.0);
    assert_eq!(scaling_exponent(IntersectionMode::SelfIntersection, 2, 3), 2.0);
}

#[test]
fn log_moment_grows_at_most_linearly_in_the_horizon() {
    let base = MomentConfig {
        steps: 1000,
        h: 0.02,
        ..MomentConfig::standard(MomentFunctional::LocalTimeNorm, 80, 9)
    };
    let ts = [0.5, 1.0, 2.0, 4.0];
    let g = moment_growth_in_t(&base, 0.05, 1, &ts).unwrap();
    assert!(g.log_moments.iter().all(|v| v.is_finite()));
    // chord slopes over successive doublings do not increase
    let chord: Vec<f64> = (1..ts.len()).map(|i| (g.log_moments[i] - g.log_moments[i - 1]) / (ts[i] - ts[i - 1])).collect();
    for w in chord.windows(2) {
        assert!(w[1] <= w[0] + 0.1, "{chord:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn dirichlet_two_fold_matches_quadrature(a in 1.0f64..4.0, b in 1.0f64..4.0, t in 0.1f64..3.0) {
        // inner increment integrated out: int_0^t u^{a-1} (t-u)^b / b du, then u = t sin^2
        let q = simpson(
            |th: f64| 2.0 * t.powf(a + b) * th.sin().powf(2.0 * a - 1.0) * th.cos().powf(2.0 * b + 1.0) / b,
            0.0,
            PI / 2.0,
            20_000,
        );
        let exact = dirichlet_integral(&[a, b], t).unwrap();
        prop_assert!((q / exact - 1.0).abs() < 1e-8);
    }

    #[test]
    fn dirichlet_is_homogeneous_in_the_horizon(
        alphas in prop::collection::vec(0.1f64..3.0, 1..5), t in 0.1f64..3.0, c in 0.1f64..10.0,
    ) {
        let s: f64 = alphas.iter().sum();
        let lhs = dirichlet_integral(&alphas, c * t).unwrap();
        let rhs = c.powf(s) * dirichlet_integral(&alphas, t).unwrap();
        prop_assert!((lhs / rhs - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_bounds_hold_pointwise(d in 1usize..=4, t in 1e-4f64..1e4, r in 1e-4f64..1e4) {
        let p = radial_kernel(d, t, r);
        prop_assert!(p <= c_time(d) * t.powf(-(d as f64) / 2.0) * (1.0 + 1e-12));
        prop_assert!(p <= c_space(d) * r.powi(-(d as i32)) * (1.0 + 1e-12));
    }
}
