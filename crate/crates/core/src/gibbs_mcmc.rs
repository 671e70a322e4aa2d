//! Path-space Metropolis sampling of Gibbs-tilted Brownian motion.
//!
//! A move redraws one time block from the prior conditioned on its endpoints (a free
//! continuation when the block reaches the horizon). The move leaves Wiener measure
//! invariant, so the acceptance ratio is the energy difference alone. Mollified local
//! times live on a grid that grows when a proposal leaves it; every proposal updates
//! only the nodes its block can reach.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gn_variational::{constrained_grad_sq, rescale_to, GNSolution, IntersectionMode};
use crate::grid::{GridField, GridSpec};
use crate::local_time::{deposit, power_sum_slice, KERNEL_RADIUS};
use crate::path_sim::{regenerate_block, sample_path_with, substream, BrownianPath, PathConfig};
use crate::stats::{effective_sample_size, log_sum_exp, mean, variance};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GibbsConfig {
    /// Dimension, horizon, step, seed and number of paths (`p`; 1 in self mode).
    pub base: PathConfig,
    pub mode: IntersectionMode,
    /// `q` in self mode, `p` in mutual mode.
    pub order: usize,
    pub gamma: f64,
    pub eps: f64,
    /// Spacing of the deposition grid.
    pub h: f64,
    pub burn_in: usize,
    pub samples: usize,
    /// Proposal block length in time units.
    pub block: f64,
    /// With `false` the energy is identically zero and every proposal is accepted.
    pub tilt: bool,
    /// Half width of the grid the recentered densities are averaged on.
    pub window: f64,
    /// Effective sample sizes below this mark the result as low quality.
    pub ess_floor: f64,
}

impl GibbsConfig {
    pub fn self_intersection(d: usize, q: usize, gamma: f64, t: f64, dt: f64, eps: f64, seed: u64) -> Result<Self> {
        let c = Self {
            base: PathConfig::new(d, t, dt, seed, 1)?,
            mode: IntersectionMode::SelfIntersection,
            order: q,
            gamma,
            eps,
            h: eps.sqrt() / 4.0,
            burn_in: 200,
            samples: 2000,
            block: 0.5,
            tilt: true,
            window: 8.0,
            ess_floor: 50.0,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        let o = self.order as f64;
        let d = self.base.d as f64;
        match self.mode {
            IntersectionMode::SelfIntersection => {
                if self.order < 2 || self.base.p != 1 {
                    return Err(Error::Config("self mode needs q >= 2 and a single path".into()));
                }
            }
            IntersectionMode::Mutual => {
                if self.order < 2 || self.base.p != self.order {
                    return Err(Error::Config("mutual mode needs p >= 2 paths, one per component".into()));
                }
                self.base.validate_mutual()?;
            }
        }
        // the self-intersection range carries no dimension factor
        let dim = match self.mode {
            IntersectionMode::SelfIntersection => 1.0,
            IntersectionMode::Mutual => d,
        };
        if !(self.gamma > 0.0) || self.gamma * dim * (o - 1.0) >= 2.0 * o {
            return Err(Error::Config(format!(
                "gamma must lie in (0, {}) for order {o}; got {}",
                2.0 * o / (dim * (o - 1.0)),
                self.gamma
            )));
        }
        if !(self.eps > 0.0) || !(self.h > 0.0) || !(self.window > 0.0) {
            return Err(Error::Config("eps, h and window must be positive".into()));
        }
        if !(self.block > 0.0) || self.samples == 0 {
            return Err(Error::Config("block length and sample count must be positive".into()));
        }
        Ok(())
    }

    fn block_steps(&self) -> usize {
        ((self.block / self.base.dt).round() as usize).clamp(1, self.base.steps())
    }

    fn multiplicity(&self) -> f64 {
        match self.mode {
            IntersectionMode::SelfIntersection => 1.0,
            IntersectionMode::Mutual => self.order as f64,
        }
    }

    /// `m t^{1-gamma} F^{gamma/k}` for the functional value `F`.
    pub fn energy(&self, functional: f64) -> f64 {
        if !self.tilt {
            return 0.0;
        }
        let t = self.base.t;
        self.multiplicity() * t.powf(1.0 - self.gamma) * functional.max(0.0).powf(self.gamma / self.order as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub sweep: usize,
    pub energy: f64,
    pub acceptance: f64,
    /// `beta_eps` in self mode, `alpha_eps` in mutual mode.
    pub functional: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChainStatus {
    Ok,
    LowEss,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainResult {
    /// One record per sweep, burn-in included.
    pub records: Vec<SweepRecord>,
    pub burn_in: usize,
    /// Post burn-in acceptance rate.
    pub acceptance_rate: f64,
    /// Mean of the recentered `l_{t,eps}`; integrates to `t`.
    pub mean_density: GridField,
    pub horizon: f64,
    /// Geyer estimate on the post burn-in energy trace (functional trace when untilted).
    pub ess: f64,
    pub functional_mean: f64,
    /// Standard error using the effective sample size.
    pub functional_se: f64,
    pub samples: usize,
    pub status: ChainStatus,
}

impl ChainResult {
    pub fn energy_trace(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.energy).collect()
    }

    pub fn functional_trace(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.functional).collect()
    }

    /// Mean recentered occupation measure `l_{t,eps} / t`, a probability density.
    pub fn normalized_density(&self) -> GridField {
        self.mean_density.scaled(1.0 / self.horizon)
    }

    /// ESS-weighted average of two chains run with the same configuration.
    pub fn merge(&self, other: &ChainResult) -> Result<ChainResult> {
        crate::grid::same_grid(&self.mean_density.spec, &other.mean_density.spec)?;
        let (wa, wb) = (self.ess.max(1e-12), other.ess.max(1e-12));
        let w = wa + wb;
        let mix = |a: f64, b: f64| (wa * a + wb * b) / w;
        let values = self
            .mean_density
            .values
            .iter()
            .zip(&other.mean_density.values)
            .map(|(a, b)| mix(*a, *b))
            .collect();
        let (na, nb) = (self.samples as f64, other.samples as f64);
        let mut records = self.records.clone();
        records.extend(other.records.iter().cloned());
        let se = ((wa * self.functional_se).powi(2) + (wb * other.functional_se).powi(2)).sqrt() / w;
        let ess = self.ess + other.ess;
        Ok(ChainResult {
            records,
            burn_in: self.burn_in,
            acceptance_rate: (na * self.acceptance_rate + nb * other.acceptance_rate) / (na + nb),
            mean_density: GridField { spec: self.mean_density.spec.clone(), values },
            horizon: self.horizon,
            ess,
            functional_mean: mix(self.functional_mean, other.functional_mean),
            functional_se: se,
            samples: self.samples + other.samples,
            status: if self.status == ChainStatus::Ok && other.status == ChainStatus::Ok {
                ChainStatus::Ok
            } else {
                ChainStatus::LowEss
            },
        })
    }
}

/// `l_{t,eps}` of `path` on `spec`; nodes beyond the kernel reach of the path stay zero.
fn field_of(path: &BrownianPath, weights: &[f64], eps: f64, spec: &GridSpec) -> Vec<f64> {
    let mut out = vec![0.0; spec.len()];
    deposit(path, weights, eps, spec, &mut out, 0, path.len());
    out
}

/// Density recentered at its center of mass and resampled onto `target`.
pub fn recentered(field: &GridField, target: &GridSpec) -> GridField {
    let com = field.center_of_mass();
    let shift: Vec<f64> = com.iter().map(|c| -c).collect();
    field.shifted_onto(&shift, target)
}

/// Sequential Metropolis chain; the state is one path per component.
pub struct GibbsChain {
    cfg: GibbsConfig,
    rng: ChaCha8Rng,
    spec: GridSpec,
    paths: Vec<BrownianPath>,
    props: Vec<BrownianPath>,
    fields: Vec<Vec<f64>>,
    weights: Vec<f64>,
    delta: Vec<f64>,
    functional: f64,
    sweeps: usize,
}

impl GibbsChain {
    /// Chain started from an independent prior draw on stream `stream`.
    pub fn new(cfg: &GibbsConfig, stream: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = substream(cfg.base.seed, stream);
        let paths: Vec<BrownianPath> = (0..cfg.base.p)
            .map(|_| sample_path_with(&mut rng, cfg.base.d, cfg.base.t, cfg.base.steps()))
            .collect();
        Self::from_paths(cfg, paths, rng)
    }

    /// Chain started from given paths (uniform steps `cfg.base.dt`).
    pub fn from_paths(cfg: &GibbsConfig, paths: Vec<BrownianPath>, rng: ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        if paths.len() != cfg.base.p || paths.iter().any(|p| p.len() != cfg.base.steps() + 1) {
            return Err(Error::Shape("initial paths do not match the configuration".into()));
        }
        let weights = paths[0].trapezoid_weights();
        let spec = GridSpec::new(cfg.h, vec![0.0; cfg.base.d], vec![1; cfg.base.d])?;
        let mut chain = Self {
            cfg: cfg.clone(),
            rng,
            spec,
            props: paths.clone(),
            paths,
            fields: Vec::new(),
            weights,
            delta: Vec::new(),
            functional: 0.0,
            sweeps: 0,
        };
        chain.regrid(None);
        Ok(chain)
    }

    fn margin(&self) -> f64 {
        KERNEL_RADIUS * self.cfg.eps.sqrt() + 2.0 * self.cfg.h
    }

    fn covers(&self, lo: &[f64], hi: &[f64]) -> bool {
        let m = self.margin();
        (0..self.spec.d).all(|k| lo[k] - m >= self.spec.lower[k] && hi[k] + m <= self.spec.upper(k))
    }

    /// Rebuild the grid around all current paths (and `extra`, a proposal's bounds) with
    /// generous slack, then recompute every field from scratch.
    fn regrid(&mut self, extra: Option<(&[f64], &[f64])>) {
        let d = self.cfg.base.d;
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        let mut widen = |a: &[f64], b: &[f64]| {
            for k in 0..d {
                lo[k] = lo[k].min(a[k]);
                hi[k] = hi[k].max(b[k]);
            }
        };
        for p in &self.paths {
            let (a, b) = p.bounds();
            widen(&a, &b);
        }
        if let Some((a, b)) = extra {
            widen(a, b);
        }
        let slack = self.margin() + 0.5 * self.cfg.base.t.sqrt();
        let lo: Vec<f64> = lo.iter().map(|v| v - slack).collect();
        let hi: Vec<f64> = hi.iter().map(|v| v + slack).collect();
        self.spec = GridSpec::covering(self.cfg.h, &lo, &hi).expect("finite path bounds");
        self.fields = self
            .paths
            .iter()
            .map(|p| field_of(p, &self.weights, self.cfg.eps, &self.spec))
            .collect();
        self.delta = vec![0.0; self.spec.len()];
        self.functional = self.functional_of_fields();
    }

    fn functional_of_fields(&self) -> f64 {
        let vol = self.spec.cell_volume();
        match self.cfg.mode {
            IntersectionMode::SelfIntersection => power_sum_slice(&self.fields[0], self.cfg.order as f64) * vol,
            IntersectionMode::Mutual => {
                (0..self.spec.len()).map(|i| self.fields.iter().map(|f| f[i]).product::<f64>()).sum::<f64>() * vol
            }
        }
    }

    pub fn config(&self) -> &GibbsConfig {
        &self.cfg
    }

    pub fn paths(&self) -> &[BrownianPath] {
        &self.paths
    }

    /// Current `beta_eps` or `alpha_eps`.
    pub fn functional(&self) -> f64 {
        self.functional
    }

    pub fn energy(&self) -> f64 {
        self.cfg.energy(self.functional)
    }

    /// Current mollified local times on the chain's grid.
    pub fn fields(&self) -> Vec<GridField> {
        self.fields
            .iter()
            .map(|v| GridField { spec: self.spec.clone(), values: v.clone() })
            .collect()
    }

    /// Flat index span containing every node within kernel reach of `[lo, hi]`.
    fn span(&self, lo: &[f64], hi: &[f64]) -> (usize, usize) {
        let r = KERNEL_RADIUS * self.cfg.eps.sqrt() + self.cfg.h;
        let s = &self.spec;
        let mut a = Vec::with_capacity(s.d);
        let mut b = Vec::with_capacity(s.d);
        for k in 0..s.d {
            let i0 = ((lo[k] - r - s.lower[k]) / s.h).floor().max(0.0) as usize;
            let i1 = (((hi[k] + r - s.lower[k]) / s.h).ceil() as usize).min(s.extents[k] - 1);
            a.push(i0.min(s.extents[k] - 1));
            b.push(i1);
        }
        // rows between the corners are contiguous in flat order
        (s.flat_index(&a), s.flat_index(&b) + 1)
    }

    /// One Metropolis proposal on component `j`; returns whether it was accepted.
    fn propose(&mut self, j: usize) -> bool {
        let d = self.cfg.base.d;
        let steps = self.cfg.base.steps();
        let n = self.cfg.block_steps();
        let start = self.rng.random_range(0..steps);
        let (len, pinned) = if start + n >= steps { (steps - start, false) } else { (n, true) };
        let dt = self.cfg.base.dt;
        regenerate_block(self.props[j].positions_mut(), d, dt, start, len, pinned, &mut self.rng);
        let (first, last) = (start + 1, start + len);
        let block_bounds = |p: &BrownianPath| {
            let mut lo = vec![f64::INFINITY; d];
            let mut hi = vec![f64::NEG_INFINITY; d];
            for i in first..=last {
                for (k, &x) in p.point(i).iter().enumerate() {
                    lo[k] = lo[k].min(x);
                    hi[k] = hi[k].max(x);
                }
            }
            (lo, hi)
        };
        let (plo, phi) = block_bounds(&self.props[j]);
        if !self.covers(&plo, &phi) {
            self.regrid(Some((&plo, &phi)));
        }
        let (olo, ohi) = block_bounds(&self.paths[j]);
        let lo: Vec<f64> = plo.iter().zip(&olo).map(|(a, b)| a.min(*b)).collect();
        let hi: Vec<f64> = phi.iter().zip(&ohi).map(|(a, b)| a.max(*b)).collect();
        let (s0, s1) = self.span(&lo, &hi);
        self.delta[s0..s1].iter_mut().for_each(|v| *v = 0.0);
        let neg: Vec<f64> = self.weights.iter().map(|w| -w).collect();
        let eps = self.cfg.eps;
        deposit(&self.props[j], &self.weights, eps, &self.spec, &mut self.delta, first, last + 1);
        deposit(&self.paths[j], &neg, eps, &self.spec, &mut self.delta, first, last + 1);
        let vol = self.spec.cell_volume();
        let change = match self.cfg.mode {
            IntersectionMode::SelfIntersection => {
                let q = self.cfg.order as f64;
                let f = &self.fields[0][s0..s1];
                let dl = &self.delta[s0..s1];
                let new: Vec<f64> = f.iter().zip(dl).map(|(a, b)| (a + b).max(0.0)).collect();
                (power_sum_slice(&new, q) - power_sum_slice(f, q)) * vol
            }
            IntersectionMode::Mutual => {
                let mut acc = 0.0;
                for i in s0..s1 {
                    let mut others = self.delta[i];
                    for (k, f) in self.fields.iter().enumerate() {
                        if k != j {
                            others *= f[i];
                        }
                    }
                    acc += others;
                }
                acc * vol
            }
        };
        let proposed = (self.functional + change).max(0.0);
        let log_ratio = self.cfg.energy(proposed) - self.cfg.energy(self.functional);
        let accept = log_ratio >= 0.0 || self.rng.random::<f64>() < log_ratio.exp();
        let range = first * d..(last + 1) * d;
        if accept {
            for i in s0..s1 {
                self.fields[j][i] = (self.fields[j][i] + self.delta[i]).max(0.0);
            }
            self.functional = proposed;
            let src = self.props[j].positions()[range.clone()].to_vec();
            self.paths[j].positions_mut()[range].copy_from_slice(&src);
        } else {
            let src = self.paths[j].positions()[range.clone()].to_vec();
            self.props[j].positions_mut()[range].copy_from_slice(&src);
        }
        accept
    }

    /// Enough proposals per component to cover the horizon once, round-robin over
    /// components; the functional is recomputed exactly at the end of each sweep.
    pub fn sweep(&mut self) -> SweepRecord {
        let per = self.cfg.base.steps().div_ceil(self.cfg.block_steps());
        let mut accepted = 0usize;
        for _ in 0..per {
            for j in 0..self.paths.len() {
                accepted += self.propose(j) as usize;
            }
        }
        self.functional = self.functional_of_fields();
        self.sweeps += 1;
        SweepRecord {
            sweep: self.sweeps,
            energy: self.energy(),
            acceptance: accepted as f64 / (per * self.paths.len()) as f64,
            functional: self.functional,
        }
    }
}

/// Output grid of the recentered mean density.
pub fn window_grid(cfg: &GibbsConfig) -> Result<GridSpec> {
    GridSpec::centered(cfg.base.d, cfg.h, cfg.window)
}

/// Runs one chain on stream `stream` and also hands every post burn-in sample to `visit`
/// as `(record, recentered density averaged over components)`.
pub fn run_chain_with(
    cfg: &GibbsConfig,
    stream: u64,
    mut visit: impl FnMut(&SweepRecord, &GridField),
) -> Result<ChainResult> {
    let mut chain = GibbsChain::new(cfg, stream)?;
    let target = window_grid(cfg)?;
    let mut records = Vec::with_capacity(cfg.burn_in + cfg.samples);
    for _ in 0..cfg.burn_in {
        records.push(chain.sweep());
    }
    let mut sum = vec![0.0; target.len()];
    let mut accepted = 0.0;
    for _ in 0..cfg.samples {
        let rec = chain.sweep();
        let fields = chain.fields();
        let mut avg = vec![0.0; target.len()];
        for f in &fields {
            let r = recentered(f, &target);
            avg.iter_mut().zip(&r.values).for_each(|(a, b)| *a += b / fields.len() as f64);
        }
        let avg = GridField { spec: target.clone(), values: avg };
        visit(&rec, &avg);
        sum.iter_mut().zip(&avg.values).for_each(|(a, b)| *a += b);
        accepted += rec.acceptance;
        records.push(rec);
    }
    let n = cfg.samples as f64;
    let post = &records[cfg.burn_in..];
    let functional: Vec<f64> = post.iter().map(|r| r.functional).collect();
    let energy: Vec<f64> = post.iter().map(|r| r.energy).collect();
    let ess = if cfg.tilt && variance(&energy) > 0.0 {
        effective_sample_size(&energy)
    } else {
        effective_sample_size(&functional)
    };
    let fess = effective_sample_size(&functional).max(1.0);
    Ok(ChainResult {
        burn_in: cfg.burn_in,
        acceptance_rate: accepted / n,
        mean_density: GridField { spec: target, values: sum.into_iter().map(|v| v / n).collect() },
        horizon: cfg.base.t,
        ess,
        functional_mean: mean(&functional),
        functional_se: (variance(&functional) / fess).sqrt(),
        samples: cfg.samples,
        status: if ess < cfg.ess_floor { ChainStatus::LowEss } else { ChainStatus::Ok },
        records,
    })
}

pub fn run_gibbs_chain(cfg: &GibbsConfig) -> Result<ChainResult> {
    run_chain_with(cfg, 0, |_, _| {})
}

/// Independent chains on streams `0..chains`, merged in stream order.
pub fn run_gibbs_chains(cfg: &GibbsConfig, chains: usize) -> Result<ChainResult> {
    if chains == 0 {
        return Err(Error::Config("at least one chain is required".into()));
    }
    let results: Vec<ChainResult> = (0..chains as u64)
        .into_par_iter()
        .map(|s| run_chain_with(cfg, s, |_, _| {}))
        .collect::<Result<_>>()?;
    let mut it = results.into_iter();
    let first = it.next().expect("nonempty");
    it.try_fold(first, |acc, r| acc.merge(&r))
}

/// Importance weights `exp(-energy)` restricted to `functional >= threshold`.
pub struct ConditionalAccumulator {
    threshold: f64,
    log_weights: Vec<f64>,
    densities: Vec<Vec<f64>>,
    observed: Vec<f64>,
    spec: GridSpec,
}

impl ConditionalAccumulator {
    pub fn new(spec: GridSpec, threshold: f64) -> Self {
        Self { threshold, log_weights: Vec::new(), densities: Vec::new(), observed: Vec::new(), spec }
    }

    /// Offers one sample; returns whether it meets the constraint.
    pub fn offer(&mut self, functional: f64, energy: f64, density: &GridField) -> bool {
        self.observed.push(functional);
        if functional < self.threshold {
            return false;
        }
        self.log_weights.push(-energy);
        self.densities.push(density.values.clone());
        true
    }

    pub fn accepted(&self) -> usize {
        self.log_weights.len()
    }

    pub fn offered(&self) -> usize {
        self.observed.len()
    }

    /// Self-normalized weighted mean density and the Kish effective sample size.
    pub fn estimate(&self) -> Result<(GridField, f64)> {
        if self.log_weights.is_empty() {
            return Err(Error::NoConstrainedSamples { observed: self.observed.clone() });
        }
        let lse = log_sum_exp(&self.log_weights);
        let w: Vec<f64> = self.log_weights.iter().map(|l| (l - lse).exp()).collect();
        let mut values = vec![0.0; self.spec.len()];
        for (wi, d) in w.iter().zip(&self.densities) {
            values.iter_mut().zip(d).for_each(|(a, b)| *a += wi * b);
        }
        let kish = 1.0 / w.iter().map(|x| x * x).sum::<f64>();
        Ok((GridField { spec: self.spec.clone(), values }, kish))
    }
}

/// Limit profile of the conditioned occupation measure at `level`: the unit-norm
/// minimizer rescaled so that `||psi||_{2q}^{2q} = level`, i.e. density
/// `lambda^d psi^2(lambda x)` with `lambda = level^{1/(d(q-1))}`.
pub fn conditional_profile(base: &GNSolution, level: f64) -> Result<GNSolution> {
    if !(level > 0.0) {
        return Err(Error::Config(format!("level must be positive, got {level}")));
    }
    let lambda = level.powf(1.0 / (base.d as f64 * (base.q - 1.0)));
    let g = constrained_grad_sq(base.d, base.q, base.ratio);
    rescale_to(base, 1.0, lambda * lambda * g)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalResult {
    /// The tilted chain with `mean_density` replaced by the reweighted constrained mean.
    pub chain: ChainResult,
    pub level: f64,
    /// `level * t^k`, the constraint on `beta_eps` (or `alpha_eps`).
    pub threshold: f64,
    pub constrained_fraction: f64,
    pub weight_ess: f64,
}

/// Reweighted constrained mean of the tilted chain: samples with functional at least
/// `level * t^k` get weight `exp(-energy)`, undoing the tilt.
pub fn conditional_estimate(cfg: &GibbsConfig, level: f64) -> Result<ConditionalResult> {
    if !(level > 0.0) {
        return Err(Error::Config(format!("level must be positive, got {level}")));
    }
    let threshold = level * cfg.base.t.powi(cfg.order as i32);
    let mut acc = ConditionalAccumulator::new(window_grid(cfg)?, threshold);
    let mut chain = run_chain_with(cfg, 0, |rec, dens| {
        acc.offer(rec.functional, rec.energy, dens);
    })?;
    let (density, weight_ess) = acc.estimate()?;
    chain.mean_density = density;
    Ok(ConditionalResult {
        constrained_fraction: acc.accepted() as f64 / acc.offered() as f64,
        chain,
        level,
        threshold,
        weight_ess,
    })
}
