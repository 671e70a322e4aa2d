//! Maximization of the Gagliardo-Nirenberg ratio on a lattice.
//!
//! The discrete ratio depends only on node values, not on `h`, and a single-node
//! spike beats the continuum constant. Dilation invariance is therefore broken on
//! the lattice and the scale must be pinned: iterates live on
//! `{||psi||_2 = 1, ||grad psi||_2^2 = g0}`, where maximizing the ratio is the same as
//! maximizing `||psi||_{2q}`. Steps follow the preconditioned Riemannian gradient and
//! are mapped back to the constraint set by a normal-direction retraction.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::constants::check_admissible;
use super::lattice::{
    dirichlet_energy, dot, gn_exponent, mass2, neg_laplacian, odd_power, power2q, ratio_from,
    Preconditioner,
};
use crate::error::{Error, Result};
use crate::grid::{GridField, GridSpec};
use crate::path_sim::substream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnOptions {
    /// Stop once the relative ratio change and the relative step both drop below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Pinned `||grad psi||_2^2` at unit mass; sets the profile width in lattice units.
    pub grad_sq: f64,
    /// `None` starts from a centered Gaussian, `Some(seed)` from a randomized bump.
    pub init_seed: Option<u64>,
}

impl Default for GnOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 20_000, grad_sq: 1.0, init_seed: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GNSolution {
    pub d: usize,
    pub q: f64,
    /// Node values of `psi`, all nonnegative.
    pub profile: GridField,
    pub l2_norm: f64,
    pub grad_l2_norm: f64,
    pub l2q_norm: f64,
    /// Gagliardo-Nirenberg ratio of the profile; the numerical `kappa_{d,q}`.
    pub ratio: f64,
    pub iterations: usize,
    /// Relative Riemannian gradient norm at exit.
    pub residual: f64,
    pub trace: Vec<f64>,
}

impl GNSolution {
    pub(crate) fn from_values(
        d: usize,
        q: f64,
        spec: GridSpec,
        values: Vec<f64>,
        iterations: usize,
        residual: f64,
        trace: Vec<f64>,
    ) -> Result<Self> {
        let m = mass2(&spec, &values);
        let g = dirichlet_energy(&spec, &values);
        let p = power2q(&spec, &values, q);
        Ok(Self {
            d,
            q,
            profile: GridField::new(spec, values)?,
            l2_norm: m.sqrt(),
            grad_l2_norm: g.sqrt(),
            l2q_norm: p.powf(1.0 / (2.0 * q)),
            ratio: ratio_from(m, g, p, d, q),
            iterations,
            residual,
            trace,
        })
    }

    /// `(||psi||_2, ||grad psi||_2, ||psi||_{2q})` recomputed from the profile.
    pub fn recompute_norms(&self) -> (f64, f64, f64) {
        let s = &self.profile.spec;
        let v = &self.profile.values;
        (
            mass2(s, v).sqrt(),
            dirichlet_energy(s, v).sqrt(),
            power2q(s, v, self.q).powf(1.0 / (2.0 * self.q)),
        )
    }

    /// `psi^2` as a density.
    pub fn density(&self) -> GridField {
        GridField {
            spec: self.profile.spec.clone(),
            values: self.profile.values.iter().map(|v| v * v).collect(),
        }
    }

    /// Center of mass of `psi^2`.
    pub fn center(&self) -> Vec<f64> {
        self.density().center_of_mass()
    }

    /// `a psi(b x)`: vertical factor `a`, horizontal factor `b`, realized exactly by
    /// scaling the values and dividing the lattice spacing by `b`.
    pub fn rescaled(&self, a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::Domain("scaling factors must be positive".into()));
        }
        let s = &self.profile.spec;
        let spec = GridSpec::new(
            s.h / b,
            s.lower.iter().map(|x| x / b).collect(),
            s.extents.clone(),
        )?;
        let values = self.profile.values.iter().map(|v| a * v).collect();
        Self::from_values(self.d, self.q, spec, values, self.iterations, self.residual, self.trace.clone())
    }

    /// `psi` translated so `psi^2` has its center of mass at the origin, resampled
    /// (multilinearly) on the original grid.
    pub fn recentered(&self) -> GridField {
        let c = self.center();
        let shift: Vec<f64> = c.iter().map(|x| -x).collect();
        self.profile.shifted_onto(&shift, &self.profile.spec)
    }

    /// L2 distance between two profiles on the same grid after both are recentered.
    pub fn recentered_distance(&self, other: &GNSolution) -> Result<f64> {
        let a = self.recentered();
        let b = other.recentered();
        crate::grid::same_grid(&a.spec, &b.spec)?;
        let s: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).powi(2)).sum();
        Ok((s * a.spec.cell_volume()).sqrt())
    }
}

pub fn solve_gn_optimizer(d: usize, q: f64, grid: &GridSpec, tol: f64) -> Result<GNSolution> {
    solve_gn_with(d, q, grid, &GnOptions { tol, ..GnOptions::default() })
}

pub fn solve_gn_with(d: usize, q: f64, grid: &GridSpec, opts: &GnOptions) -> Result<GNSolution> {
    check_admissible(d, q)?;
    if grid.d != d {
        return Err(Error::Shape(format!("grid has dimension {}, problem {}", grid.d, d)));
    }
    if !(opts.grad_sq > 0.0) || !(opts.tol > 0.0) {
        return Err(Error::Config("grad_sq and tol must be positive".into()));
    }
    let n = grid.len();
    let g0 = opts.grad_sq;
    let vol = grid.cell_volume();
    let mut psi = initial_profile(grid, g0, opts.init_seed);
    if !pin_scale(grid, &mut psi, g0) {
        return Err(Error::Feasibility(
            "initial profile cannot be brought to the pinned gradient norm".into(),
        ));
    }
    let pc = Preconditioner::new(grid, 0.2 / g0);
    let mut lp = vec![0.0; n];
    let mut odd = vec![0.0; n];
    let (mut bg, mut bp, mut blp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut dir = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut p = power2q(grid, &psi, q);
    let mut ratio = ratio_from(1.0, g0, p, d, q);
    let mut trace = vec![ratio];
    let mut tau = f64::NAN;
    let mut residual = f64::INFINITY;
    let mut calm = 0;
    for it in 1..=opts.max_iter {
        neg_laplacian(grid, &psi, &mut lp);
        odd_power(&psi, q, &mut odd);
        pc.apply(&odd, &mut bg);
        pc.apply(&psi, &mut bp);
        pc.apply(&lp, &mut blp);
        let a11 = dot(&psi, &bp);
        let a12 = dot(&psi, &blp);
        let a22 = dot(&lp, &blp);
        let r1 = dot(&psi, &bg);
        let r2 = dot(&lp, &bg);
        let det = a11 * a22 - a12 * a12;
        let (c1, c2) = ((r1 * a22 - r2 * a12) / det, (a11 * r2 - a12 * r1) / det);
        for i in 0..n {
            dir[i] = bg[i] - c1 * bp[i] - c2 * blp[i];
        }
        let gd = dot(&odd, &dir);
        let gbg = dot(&odd, &bg);
        residual = (gd.max(0.0) / gbg).sqrt();
        // d/dtau log P along dir
        let slope = 2.0 * q * vol * gd / p;
        if tau.is_nan() {
            tau = 0.05 * (dot(&psi, &psi) / dot(&dir, &dir).max(1e-300)).sqrt();
        } else {
            tau *= 2.0;
        }
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..n {
                trial[i] = psi[i] + tau * dir[i];
            }
            if pin_scale(grid, &mut trial, g0) {
                let pt = power2q(grid, &trial, q);
                if pt.ln() >= p.ln() + 1e-4 * tau * slope {
                    accepted = true;
                    break;
                }
            }
            tau *= 0.5;
        }
        if !accepted {
            // no ascent possible at machine precision
            break;
        }
        let step2: f64 = psi.iter().zip(&trial).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() * vol;
        std::mem::swap(&mut psi, &mut trial);
        p = power2q(grid, &psi, q);
        let new_ratio = ratio_from(1.0, g0, p, d, q);
        let rel = (new_ratio - ratio).abs() / ratio;
        ratio = new_ratio;
        trace.push(ratio);
        if rel < opts.tol && step2.sqrt() < opts.tol.sqrt() * 1e-2 {
            calm += 1;
        } else {
            calm = 0;
        }
        if calm >= 3 {
            return finish(d, q, grid, psi, it, residual, trace);
        }
    }
    let last = trace.last().copied();
    let tail = trace.len().saturating_sub(50);
    if residual < opts.tol.sqrt() {
        // stalled at round-off after reaching a stationary point
        let it = trace.len() - 1;
        return finish(d, q, grid, psi, it, residual, trace);
    }
    Err(Error::NonConvergence { iterations: opts.max_iter, last, trace: trace[tail..].to_vec() })
}

fn finish(
    d: usize,
    q: f64,
    grid: &GridSpec,
    mut psi: Vec<f64>,
    it: usize,
    residual: f64,
    trace: Vec<f64>,
) -> Result<GNSolution> {
    psi.iter_mut().for_each(|v| *v = v.abs());
    GNSolution::from_values(d, q, grid.clone(), psi, it, residual, trace)
}

fn initial_profile(grid: &GridSpec, g0: f64, seed: Option<u64>) -> Vec<f64> {
    let d = grid.d;
    // a Gaussian exp(-|x|^2 / 2w^2) has ||grad||^2 / ||.||^2 = d / (2 w^2)
    let w = (d as f64 / (2.0 * g0)).sqrt();
    let mut widths = vec![w; d];
    let mut center = vec![0.0; d];
    let mut waves: Vec<(Vec<f64>, f64, f64)> = Vec::new();
    if let Some(s) = seed {
        let mut rng = substream(s, 0x6e5f_1a17);
        for k in 0..d {
            widths[k] = w * rng.random_range(-0.3f64..0.3).exp();
            center[k] = rng.random_range(-0.2..0.2) * w;
        }
        for _ in 0..4 {
            let kv: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0) / w).collect();
            waves.push((kv, rng.random_range(0.0..std::f64::consts::TAU), rng.random_range(0.0..0.05)));
        }
    }
    (0..grid.len())
        .map(|i| {
            let x = grid.node(i);
            let mut e = 0.0;
            for k in 0..d {
                e += ((x[k] - center[k]) / widths[k]).powi(2);
            }
            let mut m = 1.0;
            for (kv, ph, amp) in &waves {
                let arg: f64 = kv.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + ph;
                m += amp * arg.cos();
            }
            m * (-0.5 * e).exp()
        })
        .collect()
}

/// Map `phi` to `u (phi + r L phi)` with unit mass and `||grad||^2 = g0`, taking the
/// root `r` closest to zero. Returns false if no real root exists.
pub(crate) fn pin_scale(grid: &GridSpec, phi: &mut [f64], g0: f64) -> bool {
    let n = phi.len();
    let vol = grid.cell_volume();
    let mut l1 = vec![0.0; n];
    let mut l2 = vec![0.0; n];
    neg_laplacian(grid, phi, &mut l1);
    neg_laplacian(grid, &l1, &mut l2);
    let m0 = dot(phi, phi) * vol;
    let m1 = dot(phi, &l1) * vol;
    let m2 = dot(&l1, &l1) * vol;
    let m3 = dot(&l1, &l2) * vol;
    let a = m3 - g0 * m2;
    let b = m2 - g0 * m1;
    let c = m1 - g0 * m0;
    let r = if c == 0.0 {
        0.0
    } else {
        let disc = b * b - a * c;
        if disc < 0.0 {
            return false;
        }
        let den = b + b.signum() * disc.sqrt();
        if den == 0.0 {
            return false;
        }
        -c / den
    };
    let m = m0 + 2.0 * r * m1 + r * r * m2;
    if !(m > 0.0) {
        return false;
    }
    let u = 1.0 / m.sqrt();
    for i in 0..n {
        phi[i] = u * (phi[i] + r * l1[i]);
    }
    true
}

/// `||grad psi||_2^2` at which a unit-mass extremal also has `||psi||_{2q} = 1`.
pub fn constrained_grad_sq(d: usize, q: f64, kappa: f64) -> f64 {
    kappa.powf(-2.0 / gn_exponent(d, q))
}

/// Two solves: the second pins the scale where the first predicts `||psi||_{2q} = 1`,
/// the normalization of the constrained minimization problem.
pub fn solve_gn_at_unit_norms(d: usize, q: f64, grid: &GridSpec, opts: &GnOptions) -> Result<GNSolution> {
    let first = solve_gn_with(d, q, grid, &GnOptions { tol: opts.tol.max(1e-7), ..opts.clone() })?;
    let g0 = constrained_grad_sq(d, q, first.ratio);
    solve_gn_with(d, q, grid, &GnOptions { grad_sq: g0, ..opts.clone() })
}
