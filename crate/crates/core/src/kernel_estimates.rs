//! Heat-kernel inequalities, the Dirichlet integral, distributional scaling of the
//! intersection functionals and empirical smoothing-error moments.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::grid::{convolve_heat, GridField, GridSpec};
use crate::gn_variational::IntersectionMode;
use crate::local_time::{
    grid_for_paths, mutual_total, occupation_density, pair_intersection_direct, power_sum,
    power_sum_slice, smoothed_local_time, KERNEL_RADIUS,
};
use crate::path_sim::{sample_path_with, substream, BrownianPath};
use crate::stats::{golden_max, linear_fit, mean_se};

/// Radial heat kernel `(2 pi t)^{-d/2} exp(-r^2 / 2t)`.
pub fn radial_kernel(d: usize, t: f64, r: f64) -> f64 {
    (2.0 * PI * t).powf(-(d as f64) / 2.0) * (-r * r / (2.0 * t)).exp()
}

/// `sup_x p_t(x) t^{d/2}`.
pub fn c_time(d: usize) -> f64 {
    (2.0 * PI).powf(-(d as f64) / 2.0)
}

/// `sup p_t(x) |x|^d = pi^{-d/2} sup_v v^{d/2} e^{-v}`, attained at `v = |x|^2 / 2t = d/2`.
pub fn c_space(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    PI.powf(-h) * h.powf(h) * (-h).exp()
}

/// `sup |d/ds p_s(x)| s^{d/2+1}`: `|v - d/2| e^{-v}` peaks at `v = 0`.
pub fn c_increment_time(d: usize) -> f64 {
    d as f64 / 2.0 * c_time(d)
}

/// `sup |d/ds p_s(x)| |x|^{d+2} = (2 pi)^{-d/2} 2^{d/2+1} sup_v v^{d/2+1} e^{-v} |v - d/2|`,
/// the supremum found numerically on both sides of `v = d/2`.
pub fn c_increment_space(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    let g = |v: f64| v.powf(h + 1.0) * (-v).exp() * (v - h).abs();
    let (_, left) = golden_max(g, 0.0, h, 1e-12);
    let (_, right) = golden_max(g, h, h + 60.0, 1e-12);
    c_time(d) * 2f64.powf(h + 1.0) * left.max(right)
}

/// Log-spaced `(t, |x|)` sweep; `x` runs along the first axis since `p_t` is radial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub t_range: (f64, f64),
    pub r_range: (f64, f64),
    pub nt: usize,
    pub nr: usize,
}

impl Default for Sweep {
    fn default() -> Self {
        Self { t_range: (1e-3, 1e3), r_range: (1e-3, 1e3), nt: 100, nr: 100 }
    }
}

fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

impl Sweep {
    fn validate(&self) -> Result<()> {
        let ok = |r: (f64, f64)| r.0 > 0.0 && r.1 >= r.0 && r.1.is_finite();
        if !ok(self.t_range) || !ok(self.r_range) || self.nt == 0 || self.nr == 0 {
            return Err(Error::Config("sweep ranges must be positive and nonempty".into()));
        }
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        log_space(self.t_range.0, self.t_range.1, self.nt)
    }

    pub fn radii(&self) -> Vec<f64> {
        log_space(self.r_range.0, self.r_range.1, self.nr)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub name: String,
    pub d: usize,
    pub t_range: (f64, f64),
    pub r_range: (f64, f64),
    pub eps_range: Option<(f64, f64)>,
    pub samples: usize,
    /// `max lhs / g` with `g` the bound without its constant.
    pub worst_ratio: f64,
    /// `(t, |x|, eps)` where the worst ratio occurs.
    pub worst_at: (f64, f64, f64),
    pub declared_constant: f64,
    pub empirical_constant: f64,
    pub pass: bool,
}

struct Worst {
    ratio: f64,
    at: (f64, f64, f64),
    samples: usize,
}

impl Worst {
    fn new() -> Self {
        Self { ratio: 0.0, at: (f64::NAN, f64::NAN, f64::NAN), samples: 0 }
    }

    fn see(&mut self, lhs: f64, g: f64, at: (f64, f64, f64)) {
        self.samples += 1;
        if g > 0.0 && lhs / g > self.ratio {
            self.ratio = lhs / g;
            self.at = at;
        }
    }

    fn report(self, name: &str, d: usize, sweep: &Sweep, eps: Option<(f64, f64)>, c: f64) -> EstimateReport {
        EstimateReport {
            name: name.into(),
            d,
            t_range: sweep.t_range,
            r_range: sweep.r_range,
            eps_range: eps,
            samples: self.samples,
            worst_ratio: self.ratio,
            worst_at: self.at,
            declared_constant: c,
            empirical_constant: self.ratio,
            pass: self.ratio <= c * (1.0 + 1e-9),
        }
    }
}

/// `p_t(x) <= C_1 t^{-d/2}` and `p_t(x) <= C_2 |x|^{-d}` over the sweep.
pub fn verify_kernel_bounds(d: usize, sweep: &Sweep) -> Result<Vec<EstimateReport>> {
    check_dim(d)?;
    sweep.validate()?;
    let dh = d as f64 / 2.0;
    let (mut wt, mut wx) = (Worst::new(), Worst::new());
    for &t in &sweep.times() {
        for &r in &sweep.radii() {
            let p = radial_kernel(d, t, r);
            wt.see(p, t.powf(-dh), (t, r, 0.0));
            wx.see(p, r.powf(-(d as f64)), (t, r, 0.0));
        }
    }
    Ok(vec![
        wt.report("kernel-time", d, sweep, None, c_time(d)),
        wx.report("kernel-space", d, sweep, None, c_space(d)),
    ])
}

/// `|p_t(x) - p_{t+eps}(x)| <= C eps t^{-d/2-1}` and `<= C eps |x|^{-d-2}`.
pub fn verify_time_increment_bound(d: usize, sweep: &Sweep, eps: &[f64]) -> Result<Vec<EstimateReport>> {
    check_dim(d)?;
    sweep.validate()?;
    if eps.is_empty() || eps.iter().any(|&e| !(e >= 0.0)) {
        return Err(Error::Config("eps values must be nonnegative".into()));
    }
    let dh = d as f64 / 2.0;
    let (mut wt, mut wx) = (Worst::new(), Worst::new());
    for &t in &sweep.times() {
        for &r in &sweep.radii() {
            let p0 = radial_kernel(d, t, r);
            for &e in eps {
                let diff = (p0 - radial_kernel(d, t + e, r)).abs();
                wt.see(diff, e * t.powf(-dh - 1.0), (t, r, e));
                wx.see(diff, e * r.powf(-(d as f64) - 2.0), (t, r, e));
            }
        }
    }
    let er = (
        eps.iter().cloned().fold(f64::INFINITY, f64::min),
        eps.iter().cloned().fold(0.0, f64::max),
    );
    Ok(vec![
        wt.report("increment-time", d, sweep, Some(er), c_increment_time(d)),
        wx.report("increment-space", d, sweep, Some(er), c_increment_space(d)),
    ])
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::Config("dimension must be at least 1".into()));
    }
    Ok(())
}

/// `E|W_t|^{-k} = t^{-k/2} 2^{-k/2} Gamma((d-k)/2) / Gamma(d/2)`.
pub fn riesz_moment_origin(d: usize, k: f64, t: f64) -> Result<f64> {
    check_riesz(d, k)?;
    let df = d as f64;
    Ok((-0.5 * k * (2.0 * t).ln() + ln_gamma((df - k) / 2.0) - ln_gamma(df / 2.0)).exp())
}

fn check_riesz(d: usize, k: f64) -> Result<()> {
    check_dim(d)?;
    if !(k > 0.0) || k >= d as f64 {
        return Err(Error::Domain(format!("E|W_t - x|^(-k) diverges unless 0 < k < d; got k={k}, d={d}")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RieszSweep {
    /// `t` values at fixed `|x| = r_fixed`.
    pub t_range: (f64, f64),
    pub r_fixed: f64,
    /// `|x|` values at fixed `t = t_fixed`.
    pub r_range: (f64, f64),
    pub t_fixed: f64,
    pub points: usize,
}

impl Default for RieszSweep {
    fn default() -> Self {
        Self { t_range: (1e2, 1e4), r_fixed: 1.0, r_range: (10.0, 1e3), t_fixed: 1.0, points: 12 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RieszReport {
    pub d: usize,
    pub k: f64,
    pub replicas: usize,
    pub seed: u64,
    pub t_values: Vec<f64>,
    pub t_estimates: Vec<(f64, f64)>,
    pub r_values: Vec<f64>,
    pub r_estimates: Vec<(f64, f64)>,
    pub t_slope: f64,
    pub t_slope_se: f64,
    pub r_slope: f64,
    pub r_slope_se: f64,
    /// `max estimate / min(t^{-k/2}, |x|^{-k})` over both legs of the sweep.
    pub worst_ratio: f64,
    pub worst_ratio_se: f64,
    pub origin_exact: f64,
    pub origin_mc: (f64, f64),
}

/// Monte Carlo `E|W_t - x|^{-k}` along a `t` leg and an `|x|` leg with common random
/// numbers, so the fitted log-log slopes are free of between-point noise.
pub fn verify_riesz_moment(d: usize, k: f64, sweep: &RieszSweep, replicas: usize, seed: u64) -> Result<RieszReport> {
    check_riesz(d, k)?;
    if replicas < 2 || sweep.points < 2 {
        return Err(Error::Config("need at least two replicas and two sweep points".into()));
    }
    let mut rng = substream(seed, 0x52_1e55);
    let z: Vec<f64> = (0..replicas * d).map(|_| rng.sample(StandardNormal)).collect();
    let estimate = |t: f64, r: f64| -> (f64, f64) {
        let st = t.sqrt();
        let vals: Vec<f64> = z
            .chunks(d)
            .map(|zi| {
                let mut s = (st * zi[0] - r).powi(2);
                for v in &zi[1..] {
                    s += (st * v).powi(2);
                }
                s.powf(-k / 2.0)
            })
            .collect();
        mean_se(&vals)
    };
    let t_values = log_space(sweep.t_range.0, sweep.t_range.1, sweep.points);
    let r_values = log_space(sweep.r_range.0, sweep.r_range.1, sweep.points);
    let t_estimates: Vec<(f64, f64)> = t_values.iter().map(|&t| estimate(t, sweep.r_fixed)).collect();
    let r_estimates: Vec<(f64, f64)> = r_values.iter().map(|&r| estimate(sweep.t_fixed, r)).collect();
    let fit = |xs: &[f64], est: &[(f64, f64)]| {
        let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
        let ly: Vec<f64> = est.iter().map(|v| v.0.ln()).collect();
        let (_, b, se) = linear_fit(&lx, &ly);
        (b, se)
    };
    let (t_slope, t_slope_se) = fit(&t_values, &t_estimates);
    let (r_slope, r_slope_se) = fit(&r_values, &r_estimates);
    let mut worst = (0.0, 0.0);
    let legs = t_values
        .iter()
        .map(|&t| (t, sweep.r_fixed))
        .zip(&t_estimates)
        .chain(r_values.iter().map(|&r| (sweep.t_fixed, r)).zip(&r_estimates));
    for ((t, r), &(m, se)) in legs {
        let g = t.powf(-k / 2.0).min(r.powf(-k));
        if m / g > worst.0 {
            worst = (m / g, se / g);
        }
    }
    Ok(RieszReport {
        d,
        k,
        replicas,
        seed,
        t_values,
        t_estimates,
        r_values,
        r_estimates,
        t_slope,
        t_slope_se,
        r_slope,
        r_slope_se,
        worst_ratio: worst.0,
        worst_ratio_se: worst.1,
        origin_exact: riesz_moment_origin(d, k, 1.0)?,
        origin_mc: estimate(1.0, 0.0),
    })
}

/// `int_{0 < s_1 < .. < s_m < t} prod (s_i - s_{i-1})^{alpha_i - 1} ds
///  = prod Gamma(alpha_i) / Gamma(sum alpha + 1) t^{sum alpha}`.
pub fn dirichlet_integral(alphas: &[f64], t: f64) -> Result<f64> {
    if alphas.is_empty() {
        return Err(Error::Domain("at least one exponent is required".into()));
    }
    if alphas.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
        return Err(Error::Domain(format!("exponents must be positive, got {alphas:?}")));
    }
    if !(t > 0.0) {
        return Err(Error::Domain(format!("horizon must be positive, got {t}")));
    }
    let s: f64 = alphas.iter().sum();
    let lg: f64 = alphas.iter().map(|&a| ln_gamma(a)).sum();
    Ok((lg - ln_gamma(s + 1.0) + s * t.ln()).exp())
}

/// Monte Carlo over the gap simplex `{u > 0, sum u <= t}`, sampled uniformly from
/// normalized exponentials; returns `(mean, se)`. Finite variance needs `alpha_i > 1/2`.
pub fn dirichlet_mc<R: Rng + ?Sized>(alphas: &[f64], t: f64, samples: usize, rng: &mut R) -> (f64, f64) {
    let m = alphas.len();
    let vol = (m as f64 * t.ln() - ln_gamma(m as f64 + 1.0)).exp();
    let mut e = vec![0.0; m + 1];
    let vals: Vec<f64> = (0..samples)
        .map(|_| {
            e.iter_mut().for_each(|v| *v = rng.sample::<f64, _>(Exp1));
            let total: f64 = e.iter().sum();
            let mut log = 0.0;
            for (i, a) in alphas.iter().enumerate() {
                log += (a - 1.0) * (t * e[i] / total).ln();
            }
            vol * log.exp()
        })
        .collect();
    mean_se(&vals)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirichletCheck {
    pub alphas: Vec<f64>,
    pub t: f64,
    pub exact: f64,
    pub mc: f64,
    pub se: f64,
    /// `(mc - exact) / se`.
    pub z: f64,
}

/// `cases` random instances with `m <= 4`, `alpha_i` in `[0.6, 3]`, `t` in `[0.5, 2]`.
pub fn verify_dirichlet(cases: usize, samples: usize, seed: u64) -> Result<Vec<DirichletCheck>> {
    (0..cases)
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            let m = rng.random_range(1..=4);
            let alphas: Vec<f64> = (0..m).map(|_| rng.random_range(0.6..3.0)).collect();
            let t = rng.random_range(0.5..2.0);
            check_dirichlet_case(&alphas, t, samples, seed, i as u64)
        })
        .collect()
}

/// One instance, Monte Carlo on stream `stream` of a seed derived from `seed`.
pub fn check_dirichlet_case(alphas: &[f64], t: f64, samples: usize, seed: u64, stream: u64) -> Result<DirichletCheck> {
    let exact = dirichlet_integral(alphas, t)?;
    let mut rng = substream(seed ^ 0xd1c7_0000_0000, stream);
    let (mc, se) = dirichlet_mc(alphas, t, samples, &mut rng);
    Ok(DirichletCheck { alphas: alphas.to_vec(), t, exact, mc, se, z: (mc - exact) / se })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingConfig {
    pub mode: IntersectionMode,
    pub d: usize,
    /// `q` in self mode, `p` in mutual mode.
    pub order: usize,
    pub c: f64,
    pub t: f64,
    pub steps: usize,
    pub eps: f64,
    /// Grid spacing at horizon `t`; scaled by `sqrt(c)` at horizon `ct`.
    pub h: f64,
    pub replicas: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub config: ScalingConfig,
    pub exponent: f64,
    pub base: (f64, f64),
    pub scaled: (f64, f64),
    pub ratio: f64,
    pub ratio_se: f64,
    pub expected: f64,
    pub second_ratio: f64,
    pub second_ratio_se: f64,
    pub second_expected: f64,
    pub pass: bool,
}

/// Scaling exponent: `(q+1)/2` for self intersection, `(2p - d(p-1))/2` for mutual.
pub fn scaling_exponent(mode: IntersectionMode, d: usize, order: usize) -> f64 {
    let o = order as f64;
    match mode {
        IntersectionMode::SelfIntersection => (o + 1.0) / 2.0,
        IntersectionMode::Mutual => (2.0 * o - d as f64 * (o - 1.0)) / 2.0,
    }
}

fn intersection_sample(cfg: &ScalingConfig, t: f64, eps: f64, h: f64, seed: u64, stream: u64) -> Result<f64> {
    let mut rng = substream(seed, stream);
    match cfg.mode {
        IntersectionMode::SelfIntersection => {
            let path = sample_path_with(&mut rng, cfg.d, t, cfg.steps);
            let spec = grid_for_paths(&[&path], eps, h)?;
            Ok(power_sum(&smoothed_local_time(&path, eps, &spec)?, cfg.order as f64))
        }
        IntersectionMode::Mutual => {
            let paths: Vec<BrownianPath> =
                (0..cfg.order).map(|_| sample_path_with(&mut rng, cfg.d, t, cfg.steps)).collect();
            if cfg.order == 2 {
                return pair_intersection_direct(&paths[0], &paths[1], eps);
            }
            let refs: Vec<&BrownianPath> = paths.iter().collect();
            let spec = grid_for_paths(&refs, eps, h)?;
            let fields = paths
                .iter()
                .map(|p| smoothed_local_time(p, eps, &spec))
                .collect::<Result<Vec<GridField>>>()?;
            mutual_total(&fields.iter().collect::<Vec<_>>())
        }
    }
}

fn ratio_of_means(num: (f64, f64), den: (f64, f64)) -> (f64, f64) {
    let r = num.0 / den.0;
    (r, r.abs() * ((num.1 / num.0).powi(2) + (den.1 / den.0).powi(2)).sqrt())
}

/// Compares moments at horizon `ct` (with `eps -> c eps`, `h -> sqrt(c) h`, same step
/// count) against `c^a` and `c^{2a}` times the moments at horizon `t`. The two horizons
/// use disjoint streams, so the standard errors combine in quadrature.
pub fn scaling_identity_check(cfg: &ScalingConfig) -> Result<ScalingReport> {
    if !(cfg.c > 0.0) || !(cfg.t > 0.0) || !(cfg.eps > 0.0) || !(cfg.h > 0.0) || cfg.steps == 0 {
        return Err(Error::Config("scaling check needs positive c, t, eps, h and steps".into()));
    }
    if cfg.replicas < 2 {
        return Err(Error::Config("scaling check needs at least two replicas".into()));
    }
    match cfg.mode {
        IntersectionMode::SelfIntersection if cfg.order < 2 => {
            return Err(Error::Config("self intersection needs q >= 2".into()))
        }
        IntersectionMode::Mutual if cfg.order < 2 || cfg.d * (cfg.order - 1) >= 2 * cfg.order => {
            return Err(Error::Config(format!(
                "mutual intersection needs p >= 2 and d(p-1) < 2p, got d={} p={}",
                cfg.d, cfg.order
            )))
        }
        _ => {}
    }
    let a = scaling_exponent(cfg.mode, cfg.d, cfg.order);
    let draw = |t: f64, eps: f64, h: f64, parity: u64| -> Result<Vec<f64>> {
        (0..cfg.replicas as u64)
            .into_par_iter()
            .map(|i| intersection_sample(cfg, t, eps, h, cfg.seed, 2 * i + parity))
            .collect()
    };
    let base = draw(cfg.t, cfg.eps, cfg.h, 0)?;
    let scaled = draw(cfg.c * cfg.t, cfg.c * cfg.eps, cfg.c.sqrt() * cfg.h, 1)?;
    let sq = |v: &[f64]| v.iter().map(|x| x * x).collect::<Vec<_>>();
    let (mb, ms) = (mean_se(&base), mean_se(&scaled));
    let (ratio, ratio_se) = ratio_of_means(ms, mb);
    let (second_ratio, second_ratio_se) = ratio_of_means(mean_se(&sq(&scaled)), mean_se(&sq(&base)));
    let expected = cfg.c.powf(a);
    Ok(ScalingReport {
        config: cfg.clone(),
        exponent: a,
        base: mb,
        scaled: ms,
        ratio,
        ratio_se,
        expected,
        second_ratio,
        second_ratio_se,
        second_expected: expected * expected,
        pass: (ratio - expected).abs() <= 3.0 * ratio_se,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentFunctional {
    /// `||l_t - l_{t,eps}||_q` of one path.
    LocalTimeNorm,
    /// `|l_t^{(2)}(R) - l_{t,eps}^{(2)}(R)|` for two independent paths.
    PairMass,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentConfig {
    pub functional: MomentFunctional,
    pub q: f64,
    pub t: f64,
    pub steps: usize,
    pub h: f64,
    pub eps: Vec<f64>,
    pub moments: Vec<u32>,
    pub replicas: usize,
    pub seed: u64,
}

impl MomentConfig {
    /// One-dimensional defaults: `dt = 1e-4`, `h = 0.01`, four halvings of `eps` from 0.1.
    pub fn standard(functional: MomentFunctional, replicas: usize, seed: u64) -> Self {
        Self {
            functional,
            q: 2.0,
            t: 1.0,
            steps: 10_000,
            h: 0.01,
            eps: vec![0.1, 0.05, 0.025, 0.0125],
            moments: vec![1, 2],
            replicas,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub eps: f64,
    pub m: u32,
    pub mean: f64,
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentFit {
    pub m: u32,
    pub slope: f64,
    pub slope_se: f64,
    /// Strictly smaller at every smaller `eps`.
    pub decreasing: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub config: MomentConfig,
    pub rows: Vec<MomentRow>,
    pub fits: Vec<MomentFit>,
}

impl MomentReport {
    pub fn fit(&self, m: u32) -> Option<&MomentFit> {
        self.fits.iter().find(|f| f.m == m)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("eps,m,mean,se\n");
        for r in &self.rows {
            s.push_str(&format!("{:e},{},{:e},{:e}\n", r.eps, r.m, r.mean, r.se));
        }
        s
    }
}

/// Unsmoothed occupation density on a grid wide enough that convolution with the widest
/// kernel loses no mass.
fn padded_occupation(path: &BrownianPath, h: f64, eps_max: f64) -> Result<GridField> {
    let (lo, hi) = path.bounds();
    let m = KERNEL_RADIUS * eps_max.sqrt() + 2.0 * h;
    let spec = GridSpec::covering(h, &[lo[0] - m], &[hi[0] + m])?;
    occupation_density(path, &spec)
}

/// The smoothing error for every `eps` on one replica. Mollified fields are the grid
/// convolutions of the occupation density, so both terms share one discretization.
fn smoothing_errors(cfg: &MomentConfig, stream: u64) -> Result<Vec<f64>> {
    let eps_max = cfg.eps.iter().cloned().fold(0.0, f64::max);
    let mut rng = substream(cfg.seed, stream);
    match cfg.functional {
        MomentFunctional::LocalTimeNorm => {
            let path = sample_path_with(&mut rng, 1, cfg.t, cfg.steps);
            let l = padded_occupation(&path, cfg.h, eps_max)?;
            let vol = l.spec.cell_volume();
            cfg.eps
                .iter()
                .map(|&e| {
                    let s = convolve_heat(&l, e)?;
                    let diff: Vec<f64> = s.values.iter().zip(&l.values).map(|(a, b)| (a - b).abs()).collect();
                    Ok((power_sum_slice(&diff, cfg.q) * vol).powf(1.0 / cfg.q))
                })
                .collect()
        }
        MomentFunctional::PairMass => {
            let a = sample_path_with(&mut rng, 1, cfg.t, cfg.steps);
            let b = sample_path_with(&mut rng, 1, cfg.t, cfg.steps);
            let (la, lb) = (a.bounds(), b.bounds());
            let m = KERNEL_RADIUS * (2.0 * eps_max).sqrt() + 2.0 * cfg.h;
            let spec = GridSpec::covering(cfg.h, &[la.0[0].min(lb.0[0]) - m], &[la.1[0].max(lb.1[0]) + m])?;
            let fa = occupation_density(&a, &spec)?;
            let fb = occupation_density(&b, &spec)?;
            let raw = mutual_total(&[&fa, &fb])?;
            // <l^1 * p_eps, l^2 * p_eps> = <l^1, l^2 * p_{2 eps}>
            cfg.eps
                .iter()
                .map(|&e| Ok((raw - mutual_total(&[&fa, &convolve_heat(&fb, 2.0 * e)?])?).abs()))
                .collect()
        }
    }
}

/// Empirical `E X_eps^m` along the `eps` ladder with log-log slope fits. All `eps` share
/// each replica's path, which makes the monotonicity comparison paired.
pub fn smoothing_moment_study(cfg: &MomentConfig) -> Result<MomentReport> {
    if cfg.eps.len() < 2 || cfg.eps.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::Config("need at least two positive eps values".into()));
    }
    if cfg.moments.is_empty() || cfg.moments.iter().any(|&m| m == 0 || m > 4) {
        return Err(Error::Config("moments must lie in 1..=4".into()));
    }
    if cfg.replicas < 2 || cfg.steps == 0 || !(cfg.t > 0.0) || !(cfg.h > 0.0) || !(cfg.q >= 1.0) {
        return Err(Error::Config("moment study needs replicas >= 2, steps, t, h > 0, q >= 1".into()));
    }
    let samples: Vec<Vec<f64>> = (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|i| smoothing_errors(cfg, i))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    let mut order: Vec<usize> = (0..cfg.eps.len()).collect();
    order.sort_by(|&a, &b| cfg.eps[a].total_cmp(&cfg.eps[b]));
    for &m in &cfg.moments {
        let means: Vec<(f64, f64)> = (0..cfg.eps.len())
            .map(|j| {
                let v: Vec<f64> = samples.iter().map(|s| s[j].powi(m as i32)).collect();
                mean_se(&v)
            })
            .collect();
        for (j, &(mean, se)) in means.iter().enumerate() {
            rows.push(MomentRow { eps: cfg.eps[j], m, mean, se });
        }
        let lx: Vec<f64> = cfg.eps.iter().map(|e| e.ln()).collect();
        let ly: Vec<f64> = means.iter().map(|v| v.0.ln()).collect();
        let (_, slope, slope_se) = linear_fit(&lx, &ly);
        let decreasing = order.windows(2).all(|w| means[w[0]].0 < means[w[1]].0);
        fits.push(MomentFit { m, slope, slope_se, decreasing });
    }
    Ok(MomentReport { config: cfg.clone(), rows, fits })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub eps: f64,
    pub m: u32,
    pub t_values: Vec<f64>,
    pub log_moments: Vec<f64>,
    /// Fitted `d log E X^m / dt`, reported without an assertion.
    pub slope: f64,
    pub slope_se: f64,
}

/// Log-moment against the horizon at fixed `eps` and `dt`; the bound in the literature
/// only controls this growth up to an unspecified constant, so nothing is asserted.
pub fn moment_growth_in_t(base: &MomentConfig, eps: f64, m: u32, t_values: &[f64]) -> Result<GrowthReport> {
    let dt = base.t / base.steps as f64;
    let mut log_moments = Vec::with_capacity(t_values.len());
    for &t in t_values {
        let cfg = MomentConfig {
            t,
            steps: (t / dt).round().max(1.0) as usize,
            eps: vec![eps, eps / 2.0],
            moments: vec![m],
            ..base.clone()
        };
        let r = smoothing_moment_study(&cfg)?;
        log_moments.push(r.rows[0].mean.ln());
    }
    let (_, slope, slope_se) = linear_fit(t_values, &log_moments);
    Ok(GrowthReport { eps, m, t_values: t_values.to_vec(), log_moments, slope, slope_se })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_bound_is_tight_at_origin() {
        for d in 1..=3 {
            let t = 0.37;
            let v = radial_kernel(d, t, 0.0) * t.powf(d as f64 / 2.0);
            assert!((v - c_time(d)).abs() < 1e-15);
        }
    }

    #[test]
    fn space_bound_peaks_where_derived() {
        // p_t(x)|x|^d at |x|^2 = d t equals C_2
        for d in 1..=3 {
            let t = 2.0;
            let r = (d as f64 * t).sqrt();
            let v = radial_kernel(d, t, r) * r.powi(d as i32);
            assert!((v / c_space(d) - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn increment_at_origin_obeys_mean_value_bound() {
        let (t, e) = (0.8, 0.05);
        let lhs = radial_kernel(1, t, 0.0) - radial_kernel(1, t + e, 0.0);
        let exact = c_time(1) * (t.powf(-0.5) - (t + e).powf(-0.5));
        assert!((lhs - exact).abs() < 1e-15);
        assert!(lhs <= 0.5 * c_time(1) * e * t.powf(-1.5));
    }

    #[test]
    fn zero_increment_passes() {
        let s = Sweep { nt: 5, nr: 5, ..Sweep::default() };
        let r = verify_time_increment_bound(1, &s, &[0.0]).unwrap();
        assert!(r.iter().all(|x| x.pass && x.worst_ratio == 0.0));
    }

    #[test]
    fn riesz_origin_closed_form() {
        let t = 1.7;
        let v = riesz_moment_origin(2, 1.0, t).unwrap();
        assert!((v - (PI / (2.0 * t)).sqrt()).abs() < 1e-13);
        assert!(riesz_moment_origin(2, 2.0, t).is_err());
    }

    #[test]
    fn dirichlet_trivial_cases() {
        assert!((dirichlet_integral(&[1.0], 2.5).unwrap() - 2.5).abs() < 1e-13);
        assert!((dirichlet_integral(&[1.0, 1.0, 1.0], 2.0).unwrap() - 8.0 / 6.0).abs() < 1e-13);
        assert!((dirichlet_integral(&[0.5, 0.5], 1.0).unwrap() - PI).abs() < 1e-13);
        assert!(dirichlet_integral(&[1.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn scaling_exponents() {
        assert_eq!(scaling_exponent(IntersectionMode::SelfIntersection, 1, 2), 1.5);
        assert_eq!(scaling_exponent(IntersectionMode::Mutual, 2, 2), 1.0);
    }
}
