use std::f64::consts::PI;

use brownlab::grid::{convolve_heat, GridField, GridSpec};
use brownlab::local_time::{
    grid_for_paths, heat_kernel, lq_norm, mutual_intersection, mutual_total, occupation_density,
    pair_intersection_direct, smoothed_local_time,
};
use brownlab::path_sim::{
    refine_bridge, rescale_path, sample_path, substream, BrownianPath, PathConfig,
};
use proptest::prelude::*;

fn path(d: usize, t: f64, dt: f64, seed: u64, stream: u64) -> BrownianPath {
    sample_path(&PathConfig::new(d, t, dt, seed, 1).unwrap(), stream).unwrap()
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

#[test]
fn same_seed_and_stream_give_the_same_path() {
    let a = path(2, 1.0, 0.01, 5, 3);
    let b = path(2, 1.0, 0.01, 5, 3);
    assert_eq!(a, b);
    assert_ne!(a, path(2, 1.0, 0.01, 5, 4));
    assert_ne!(a, path(2, 1.0, 0.01, 6, 3));
    assert_eq!(a.point(0), &[0.0, 0.0]);
    assert_eq!(a.len(), 101);
}

#[test]
fn second_moment_of_the_endpoint_in_the_plane() {
    let xs: Vec<f64> = (0..4000)
        .map(|i| path(2, 2.0, 0.05, 21, i).endpoint().iter().map(|v| v * v).sum())
        .collect();
    let (m, sd) = mean_sd(&xs);
    let z = (m - 4.0) / (sd / (xs.len() as f64).sqrt());
    assert!(z.abs() < 4.0, "mean {m}, z {z}");
}

#[test]
fn bridge_midpoint_has_the_bridge_variance() {
    let base = BrownianPath::linear(&[1.0], 1.0, 0.5).unwrap();
    let mut rng = substream(8, 0);
    let mids: Vec<f64> = (0..20_000)
        .map(|_| {
            let r = refine_bridge(&base, 0, 1, &mut rng).unwrap();
            assert_eq!(r.times(), &[0.0, 0.25, 0.5, 1.0]);
            assert_eq!(r.point(2), base.point(1));
            r.point(1)[0]
        })
        .collect();
    let (m, sd) = mean_sd(&mids);
    // bridge from 0 to 0.5 over [0, 0.5]: mean 0.25, variance 0.125
    assert!((m - 0.25).abs() < 4.0 * (0.125f64 / 20_000.0).sqrt(), "{m}");
    assert!((sd * sd / 0.125 - 1.0).abs() < 0.05, "{}", sd * sd);
}

#[test]
fn expected_local_time_at_the_origin_matches_the_heat_integral() {
    let (t, eps) = (1.0, 0.05);
    let spec = GridSpec::centered(1, 0.05, 8.0).unwrap();
    let at0 = spec.flat_index(&[160]);
    assert!(spec.coord(0, 160).abs() < 1e-12);
    let xs: Vec<f64> = (0..2000)
        .map(|i| smoothed_local_time(&path(1, t, 0.01, 2, i), eps, &spec).unwrap().values[at0])
        .collect();
    let (m, sd) = mean_sd(&xs);
    // int_0^t (2 pi (s + eps))^{-1/2} ds
    let exact = 2.0 * ((t + eps).sqrt() - eps.sqrt()) / (2.0 * PI).sqrt();
    let z = (m - exact) / (sd / (xs.len() as f64).sqrt());
    assert!(z.abs() < 4.0, "mean {m}, exact {exact}, z {z}");
}

#[test]
fn constant_path_norm_in_one_dimension() {
    for (t, eps) in [(1.0, 0.1), (2.5, 0.02)] {
        let p = BrownianPath::constant(1, t, 0.1).unwrap();
        let spec = grid_for_paths(&[&p], eps, eps.sqrt() / 8.0).unwrap();
        let f = smoothed_local_time(&p, eps, &spec).unwrap();
        let exact = t * (4.0 * PI * eps).powf(-0.25);
        assert!((lq_norm(&f, 2.0) / exact - 1.0).abs() < 1e-8, "t={t} eps={eps}");
    }
}

#[test]
fn smoothing_the_occupation_density_approximates_the_smoothed_local_time() {
    let eps = 0.05;
    for stream in 0..4 {
        let p = path(1, 1.0, 1e-4, 13, stream);
        let spec = grid_for_paths(&[&p], eps, 0.01).unwrap();
        let occ = occupation_density(&p, &spec).unwrap();
        let a = convolve_heat(&occ, eps).unwrap();
        let b = smoothed_local_time(&p, eps, &spec).unwrap();
        let d = a.l1_distance(&b).unwrap();
        assert!(d < 1e-2, "stream {stream}: {d}");
    }
}

#[test]
fn grid_and_direct_pair_intersections_agree() {
    for d in 1..=2 {
        for stream in 0..3 {
            let eps = 0.04;
            let a = path(d, 1.0, 0.02, 31, 2 * stream);
            let b = path(d, 1.0, 0.02, 31, 2 * stream + 1);
            let spec = grid_for_paths(&[&a, &b], eps, eps.sqrt() / 4.0).unwrap();
            let la = smoothed_local_time(&a, eps, &spec).unwrap();
            let lb = smoothed_local_time(&b, eps, &spec).unwrap();
            let grid = mutual_total(&[&la, &lb]).unwrap();
            let direct = pair_intersection_direct(&a, &b, eps).unwrap();
            assert!((grid / direct - 1.0).abs() < 1e-2, "d={d}: {grid} vs {direct}");
        }
    }
}

#[test]
fn dyadic_differences_shrink_in_one_dimension() {
    let epss = [0.1, 0.05, 0.025, 0.0125];
    let mut diffs = vec![0.0; epss.len() - 1];
    let n = 40;
    for r in 0..n {
        let a = path(1, 1.0, 0.002, 44, 2 * r);
        let b = path(1, 1.0, 0.002, 44, 2 * r + 1);
        let vals: Vec<f64> = epss.iter().map(|&e| pair_intersection_direct(&a, &b, e).unwrap()).collect();
        for k in 0..diffs.len() {
            diffs[k] += (vals[k] - vals[k + 1]).powi(2) / n as f64;
        }
    }
    for k in 1..diffs.len() {
        assert!(diffs[k] < diffs[k - 1], "{diffs:?}");
    }
}

#[test]
fn brownian_rescaling_of_paths_and_fields() {
    for d in 1..=3 {
        let (c, eps, h) = (2.25f64, 0.09, 0.075);
        let p = path(d, 0.5, 0.01, 3, d as u64);
        let q = rescale_path(&p, c).unwrap();
        assert!((q.horizon() - c * p.horizon()).abs() < 1e-12);
        for (x, y) in p.endpoint().iter().zip(q.endpoint()) {
            assert!((y - c.sqrt() * x).abs() < 1e-12);
        }
        let spec = grid_for_paths(&[&p], eps, h).unwrap();
        let scaled = GridSpec::new(
            h * c.sqrt(),
            spec.lower.iter().map(|v| v * c.sqrt()).collect(),
            spec.extents.clone(),
        )
        .unwrap();
        let f = smoothed_local_time(&p, eps, &spec).unwrap();
        let g = smoothed_local_time(&q, c * eps, &scaled).unwrap();
        let k = c.powf(1.0 - d as f64 / 2.0);
        let peak = f.values.iter().cloned().fold(0.0, f64::max);
        // roundoff may move a node across the truncation radius, worth exp(-18) of a sample
        for (a, b) in f.values.iter().zip(&g.values) {
            assert!((b - k * a).abs() < 1e-6 * k * peak, "d={d}: {b} vs {}", k * a);
        }
    }
}

#[test]
fn rejects_bad_parameters() {
    assert!(PathConfig::new(0, 1.0, 0.1, 0, 1).is_err());
    assert!(PathConfig::new(1, -1.0, 0.1, 0, 1).is_err());
    assert!(PathConfig::new(1, 1.0, 0.0, 0, 1).is_err());
    assert!(heat_kernel(0.0, &[1.0]).is_err());
    let p = BrownianPath::constant(1, 1.0, 0.1).unwrap();
    assert!(rescale_path(&p, 0.0).is_err());
    assert!(refine_bridge(&p, 10, 1, &mut substream(0, 0)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn heat_kernel_scales_like_brownian_motion(
        t in 0.01f64..5.0, c in 0.1f64..10.0, x in prop::collection::vec(-3.0f64..3.0, 1..4),
    ) {
        let d = x.len() as f64;
        let xs: Vec<f64> = x.iter().map(|v| v * c.sqrt()).collect();
        let lhs = heat_kernel(c * t, &xs).unwrap();
        let rhs = c.powf(-d / 2.0) * heat_kernel(t, &x).unwrap();
        prop_assert!((lhs / rhs - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mass_equals_the_horizon(
        d in 1usize..=3, steps in 5usize..75, eps in 0.02f64..0.2, seed in 0u64..1000,
    ) {
        let t = steps as f64 * 0.02;
        let p = path(d, t, 0.02, seed, 0);
        let spec = grid_for_paths(&[&p], eps, eps.sqrt() / 3.0).unwrap();
        let f = smoothed_local_time(&p, eps, &spec).unwrap();
        prop_assert!((f.mass() / t - 1.0).abs() < 1e-10);
        prop_assert!(f.values.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn lattice_shifts_commute_with_local_time(
        d in 1usize..=2, k in prop::collection::vec(-20i64..20, 2), seed in 0u64..1000,
    ) {
        let (eps, h) = (0.05, 0.05);
        let p = path(d, 1.0, 0.02, seed, 1);
        let shift: Vec<f64> = k[..d].iter().map(|&j| j as f64 * h).collect();
        let q = p.translated(&shift);
        let sp = grid_for_paths(&[&p], eps, h).unwrap();
        let sq = GridSpec::new(h, sp.lower.iter().zip(&shift).map(|(a, b)| a + b).collect(), sp.extents.clone()).unwrap();
        let f = smoothed_local_time(&p, eps, &sp).unwrap();
        let g = smoothed_local_time(&q, eps, &sq).unwrap();
        let peak = f.values.iter().cloned().fold(0.0, f64::max);
        for (a, b) in f.values.iter().zip(&g.values) {
            prop_assert!((a - b).abs() < 1e-12 * peak.max(1.0));
        }
    }

    #[test]
    fn heat_smoothing_contracts_lq_norms(
        vals in prop::collection::vec(0.0f64..5.0, 30..60), eps in 0.001f64..0.5, q in 1.0f64..6.0,
    ) {
        // zero padding keeps the stencil inside the grid
        let mut v = vec![0.0; 40];
        v.extend(vals);
        v.extend(vec![0.0; 40]);
        let spec = GridSpec::new(0.05, vec![0.0], vec![v.len()]).unwrap();
        let f = GridField::new(spec, v).unwrap();
        let g = convolve_heat(&f, eps.min(0.08)).unwrap();
        prop_assert!(lq_norm(&g, q) <= lq_norm(&f, q) * (1.0 + 1e-12));
    }

    #[test]
    fn mutual_intersection_is_linear_in_the_test_function(
        a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0u64..1000,
    ) {
        let eps = 0.05;
        let (p, r) = (path(2, 0.5, 0.02, seed, 0), path(2, 0.5, 0.02, seed, 1));
        let spec = grid_for_paths(&[&p, &r], eps, 0.06).unwrap();
        let (lp, lr) = (smoothed_local_time(&p, eps, &spec).unwrap(), smoothed_local_time(&r, eps, &spec).unwrap());
        let f: Vec<f64> = (0..spec.len()).map(|i| spec.node(i)[0].sin()).collect();
        let g: Vec<f64> = (0..spec.len()).map(|i| (-spec.node(i)[1].powi(2)).exp()).collect();
        let mix: Vec<f64> = f.iter().zip(&g).map(|(x, y)| a * x + b * y).collect();
        let lhs = mutual_intersection(&[&lp, &lr], &mix).unwrap();
        let rhs = a * mutual_intersection(&[&lp, &lr], &f).unwrap() + b * mutual_intersection(&[&lp, &lr], &g).unwrap();
        let scale = mutual_intersection(&[&lp, &lr], &vec![1.0; spec.len()]).unwrap() * (a.abs() + b.abs());
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale.max(1e-300));
    }
}
