use std::f64::consts::PI;
use std::sync::OnceLock;

use brownlab::gn_variational::{rate_functional, solve_gn_optimizer, standard_grid, unit_norm_minimizer, GNSolution};
use brownlab::grid::{GridField, GridSpec};
use brownlab::measures::{MeasureCollection, MeasureTuple};
use brownlab::mv_topology::{
    lambda_brute_force, lambda_functional, make_profile_sequence, mv_distance, project_marginals,
    random_collection, smoothed_functionals, smoothing_error_bound_check, test_corpus,
    total_disintegration_score, MetricTruncation, TestFunctionFamily,
};
use brownlab::path_sim::substream;
use proptest::prelude::*;
use statrs::function::erf::erf;

fn family() -> TestFunctionFamily {
    TestFunctionFamily::default()
}

fn dist(a: &MeasureCollection, b: &MeasureCollection) -> f64 {
    mv_distance(a, b, &family(), &MetricTruncation::default()).unwrap().value
}

fn gaussian(spec: &GridSpec, center: f64, var: f64, mass: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..spec.len())
        .map(|i| (-spec.node(i).iter().map(|x| (x - center).powi(2)).sum::<f64>() / (2.0 * var)).exp())
        .collect();
    let total = raw.iter().sum::<f64>() * spec.cell_volume();
    raw.into_iter().map(|v| mass * v / total).collect()
}

fn minimizer() -> &'static GNSolution {
    static PSI: OnceLock<GNSolution> = OnceLock::new();
    PSI.get_or_init(|| {
        let (grid, tol) = standard_grid(1).unwrap();
        unit_norm_minimizer(&solve_gn_optimizer(1, 2.0, &grid, tol).unwrap()).unwrap()
    })
}

#[test]
fn two_atoms_match_the_gaussian_tail() {
    let f = family().member(2, 1, 1).unwrap();
    let w = f.width;
    let h = w / 4.0;
    for (steps, bound) in [(12usize, None), (80, Some(1e-8))] {
        // atoms at nodes 0 and `steps`, distance steps * h
        let spec = GridSpec::new(h, vec![0.0], vec![steps + 1]).unwrap();
        let vol = spec.cell_volume();
        let mut a = vec![0.0; spec.len()];
        let mut b = vec![0.0; spec.len()];
        a[0] = 0.6 / vol;
        b[steps] = 0.3 / vol;
        let xi = MeasureCollection::singleton(MeasureTuple::new(spec, vec![a, b]).unwrap()).unwrap();
        let v = lambda_functional(&f, &[1, 1], &xi).unwrap();
        let dd = steps as f64 * h;
        let exact = 0.18 * (-dd * dd / (2.0 * w * w)).exp();
        match bound {
            None => assert!((v - exact).abs() < 1e-15, "{v} vs {exact}"),
            Some(b) => assert!(v < b && exact < b),
        }
    }
}

#[test]
fn splitting_a_tuple_approaches_the_split_collection() {
    let w = family().base_width;
    let h = 0.25;
    let mut last = f64::INFINITY;
    for units in [5.0, 10.0, 20.0, 40.0] {
        let dd = units * w;
        let spec = GridSpec::covering(h, &[-3.0], &[dd + 3.0]).unwrap();
        let a = gaussian(&spec, 0.0, 0.25, 0.5);
        let b = gaussian(&spec, dd, 0.25, 0.5);
        let joined: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let one = MeasureCollection::singleton(MeasureTuple::new(spec.clone(), vec![joined]).unwrap()).unwrap();
        let two = MeasureCollection::new(
            1,
            1,
            vec![MeasureTuple::new(spec.clone(), vec![a]).unwrap(), MeasureTuple::new(spec, vec![b]).unwrap()],
            true,
        )
        .unwrap();
        let d = dist(&one, &two);
        assert!(d > 0.0 && d < last, "D = {dd}: {d} after {last}");
        last = d;
    }
}

#[test]
fn full_mass_singleton_is_its_own_profile_sequence() {
    let spec = GridSpec::centered(1, 0.25, 2.5).unwrap();
    let xi = MeasureCollection::singleton(
        MeasureTuple::new(spec.clone(), vec![gaussian(&spec, 0.0, 0.5, 1.0), gaussian(&spec, 0.3, 0.3, 1.0)]).unwrap(),
    )
    .unwrap();
    for n in [1, 3, 8] {
        let mu = MeasureCollection::singleton(make_profile_sequence(&xi, n, 2.0).unwrap()).unwrap();
        assert!(dist(&mu, &xi) < 1e-10, "n={n}");
    }
}

#[test]
fn profile_sequences_converge_and_carry_unit_mass() {
    let corpus = test_corpus().unwrap();
    let two = &corpus.iter().find(|(n, _)| n == "two-bumps").unwrap().1;
    let half = &corpus.iter().find(|(n, _)| n == "half-deficit").unwrap().1;
    let mut last = f64::INFINITY;
    for n in [1, 2, 4, 8] {
        let mu = make_profile_sequence(two, n, 2.0).unwrap();
        let d = dist(&MeasureCollection::singleton(mu).unwrap(), two);
        assert!(d < last, "n={n}: {d} after {last}");
        last = d;
        let m = make_profile_sequence(half, n, 2.0).unwrap();
        assert!((m.mass(0) - 1.0).abs() < 1e-6);
    }
    assert!(last < 1e-2);
}

#[test]
fn wide_gaussians_disintegrate() {
    let r = 1.0;
    let spec = GridSpec::centered(1, 0.05, 80.0).unwrap();
    let mut last = 1.0;
    for n in [1.0, 4.0, 16.0, 64.0] {
        let f = GridField::new(spec.clone(), gaussian(&spec, 0.0, n, 1.0)).unwrap();
        let s = total_disintegration_score(&f, r).unwrap();
        let exact = erf(r / (2.0 * n).sqrt());
        assert!((s / exact - 1.0).abs() < 0.05, "n={n}: {s} vs {exact}");
        assert!(s < last);
        last = s;
    }
}

#[test]
fn uniform_box_score_is_the_volume_ratio() {
    let (r, l) = (1.0f64, 20.0f64);
    for d in 1..=2 {
        let spec = GridSpec::new(0.05, vec![0.0; d], vec![400; d]).unwrap();
        let f = GridField::new(spec.clone(), vec![l.powi(-(d as i32)); spec.len()]).unwrap();
        let s = total_disintegration_score(&f, r).unwrap();
        let ball = if d == 1 { 2.0 * r } else { PI * r * r };
        assert!((s / (ball / l.powi(d as i32)) - 1.0).abs() < 0.05, "d={d}: {s}");
    }
    let spec = GridSpec::centered(1, 0.1, 2.0).unwrap();
    assert!(total_disintegration_score(&GridField::zeros(spec), 0.0).is_err());
}

#[test]
fn marginals_of_the_coalescing_example() {
    let corpus = test_corpus().unwrap();
    let xi = &corpus.iter().find(|(n, _)| n == "coalescing-triple").unwrap().1;
    let m = project_marginals(xi).unwrap();
    assert_eq!(m.len(), 3);
    assert_eq!(m[1].len(), 2);
    for (j, mj) in m.iter().enumerate() {
        assert_eq!(mj.p, 1);
        let direct: f64 = xi.tuples.iter().map(|t| t.mass(j)).sum();
        assert_eq!(mj.total_masses()[0], direct);
    }
    let parts: f64 = m.iter().map(rate_functional).sum();
    assert!((rate_functional(xi) - parts).abs() < 1e-10);

    let spec = GridSpec::centered(1, 0.25, 1.0).unwrap();
    let single = MeasureCollection::singleton(MeasureTuple::atoms(spec, 2, &[1.0, 1.0, 1.0]).unwrap()).unwrap();
    let m = project_marginals(&single).unwrap();
    assert!(m.iter().all(|c| c.len() == 1 && (c.total_masses()[0] - 1.0).abs() < 1e-12));
}

#[test]
fn smoothed_functionals_of_an_atom_pair_in_the_plane() {
    let eps = 0.1;
    let spec = GridSpec::centered(2, 0.02, 0.1).unwrap();
    let t = MeasureTuple::atoms(spec.clone(), spec.len() / 2, &[1.0, 1.0]).unwrap();
    let (lambda, _) = smoothed_functionals(&MeasureCollection::singleton(t).unwrap(), eps, 2.0).unwrap();
    assert!((lambda * 4.0 * PI * eps - 1.0).abs() < 1e-6, "{lambda}");
}

#[test]
fn smoothed_functionals_follow_the_profile_sequence() {
    let (eps, spread) = (0.1, 2.0);
    let corpus = test_corpus().unwrap();
    for name in ["pair-pieces", "pair-deficit"] {
        let xi = &corpus.iter().find(|(n, _)| n == name).unwrap().1;
        let (target, _) = smoothed_functionals(xi, eps, 2.0).unwrap();
        let deficit: f64 = xi.total_masses().iter().map(|m| 1.0 - m).product();
        let mut last = f64::INFINITY;
        for n in [1, 2, 4, 8, 16] {
            let mu = MeasureCollection::singleton(make_profile_sequence(xi, n, spread).unwrap()).unwrap();
            let gap = (smoothed_functionals(&mu, eps, 2.0).unwrap().0 - target).abs();
            assert!(gap < last, "{name} n={n}: {gap}");
            last = gap;
            if n >= 8 {
                // what remains is the overlap of the two filler Gaussians, variance spread n each
                let overlap = deficit / (4.0 * PI * (spread * n as f64 + eps)).sqrt();
                assert!((gap / overlap - 1.0).abs() < 0.05, "{name} n={n}: {gap} vs {overlap}");
            }
        }
    }
}

#[test]
fn smoothing_error_scales_consistently() {
    let psi = minimizer();
    let eps = [0.1, 0.05, 0.025];
    let ratios: Vec<Vec<f64>> = [0.5f64, 1.0, 2.0]
        .iter()
        .map(|&b| {
            // same L2 norm, horizontal factor b
            let s = psi.rescaled(b.powf(0.5), b).unwrap();
            let r = smoothing_error_bound_check(&s, &eps, 2.0).unwrap();
            assert!(r.decreasing, "b={b}");
            r.lhs.iter().zip(&r.rhs).map(|(l, r)| l / r).collect()
        })
        .collect();
    let all: Vec<f64> = ratios.concat();
    let (lo, hi) = all.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    assert!(lo > 0.0 && hi / lo < 20.0, "{ratios:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lambda_matches_the_nested_sum_and_ignores_shifts(
        seed in 0u64..10_000, rank in 1usize..=20, shift in prop::collection::vec(-7i64..8, 2),
    ) {
        let mut rng = substream(seed, 0);
        let p = 1 + (seed % 2) as usize;
        let d = 1 + ((seed / 2) % 2) as usize;
        let xi = random_collection(&mut rng, p, d).unwrap();
        let k: Vec<usize> = if p == 1 { vec![2] } else { vec![1, 1] };
        let f = family().member(2, d, rank).unwrap();
        let fast = lambda_functional(&f, &k, &xi).unwrap();
        let slow = lambda_brute_force(&f, &k, &xi).unwrap();
        prop_assert!((fast - slow).abs() <= 1e-12 * slow.abs().max(1e-300) + 1e-15);
        let offsets: Vec<Vec<i64>> = xi.tuples.iter().map(|_| shift[..d].to_vec()).collect();
        let moved = lambda_functional(&f, &k, &xi.shifted(&offsets)).unwrap();
        prop_assert!((fast - moved).abs() <= 1e-12 * fast.abs().max(1e-300));
    }

    #[test]
    fn smoothed_norm_does_not_grow_with_eps(seed in 0u64..10_000, eps in 0.01f64..0.3) {
        let mut rng = substream(seed, 1);
        let xi = random_collection(&mut rng, 2, 1).unwrap();
        let (_, a) = smoothed_functionals(&xi, eps, 2.0).unwrap();
        let (_, b) = smoothed_functionals(&xi, 2.0 * eps, 2.0).unwrap();
        prop_assert!(b <= a * (1.0 + 1e-12));
    }

    #[test]
    fn distance_is_symmetric_and_zero_on_shifts(seed in 0u64..10_000) {
        let mut rng = substream(seed, 2);
        let a = random_collection(&mut rng, 2, 1).unwrap();
        let b = random_collection(&mut rng, 2, 1).unwrap();
        prop_assert_eq!(dist(&a, &b), dist(&b, &a));
        prop_assert_eq!(dist(&a, &a), 0.0);
        let offsets: Vec<Vec<i64>> = a.tuples.iter().enumerate().map(|(i, _)| vec![3 * i as i64 - 4]).collect();
        prop_assert!(dist(&a, &a.shifted(&offsets)) < 1e-12);
    }
}
