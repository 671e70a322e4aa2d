//! Occupation densities, mollified local times and the intersection functionals
//! built from them.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{same_grid, GridField, GridSpec};
use crate::path_sim::BrownianPath;

pub use crate::grid::convolve_heat;

/// Truncation radius of kernel deposition, in units of `sqrt(eps)`.
pub const KERNEL_RADIUS: f64 = 6.0;

/// Gaussian density with covariance `t I_d`, `d = x.len()`.
pub fn heat_kernel(t: f64, x: &[f64]) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("heat kernel time must be positive, got {t}")));
    }
    Ok(heat_kernel_unchecked(t, x))
}

#[inline]
pub(crate) fn heat_kernel_unchecked(t: f64, x: &[f64]) -> f64 {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    (2.0 * PI * t).powf(-(x.len() as f64) / 2.0) * (-r2 / (2.0 * t)).exp()
}

/// True when the grid resolves `p_eps` with at least four nodes per standard deviation.
pub fn resolves_kernel(spec: &GridSpec, eps: f64) -> bool {
    spec.h <= eps.sqrt() / 4.0 + 1e-15
}

/// Lattice-aligned grid spacing `h` covering every path plus the deposition margin.
pub fn grid_for_paths(paths: &[&BrownianPath], eps: f64, h: f64) -> Result<GridSpec> {
    let d = paths[0].dim();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for p in paths {
        let (a, b) = p.bounds();
        for k in 0..d {
            lo[k] = lo[k].min(a[k]);
            hi[k] = hi[k].max(b[k]);
        }
    }
    let m = KERNEL_RADIUS * eps.sqrt() + h;
    lo.iter_mut().for_each(|v| *v -= m);
    hi.iter_mut().for_each(|v| *v += m);
    GridSpec::covering(h, &lo, &hi)
}

fn check_margin(path: &BrownianPath, margin: f64, spec: &GridSpec) -> Result<()> {
    if path.dim() != spec.d {
        return Err(Error::Shape(format!(
            "path in dimension {} but grid in dimension {}",
            path.dim(),
            spec.d
        )));
    }
    let (mut lo, mut hi) = path.bounds();
    lo.iter_mut().for_each(|v| *v -= margin);
    hi.iter_mut().for_each(|v| *v += margin);
    spec.contains_box(&lo, &hi)
}

/// Per-axis deposition weights of a unit mass at `x`: node range and values with
/// `sum(w) * h == 1`.
fn axis_weights(x: f64, lower: f64, n: usize, h: f64, eps: f64, out: &mut Vec<f64>) -> usize {
    let r = KERNEL_RADIUS * eps.sqrt();
    let i0 = (((x - r - lower) / h).ceil().max(0.0)) as usize;
    let i1 = ((((x + r - lower) / h).floor()) as i64).min(n as i64 - 1);
    out.clear();
    if (i1 as i64) < i0 as i64 {
        // kernel narrower than the grid spacing: snap to the nearest node
        let i = (((x - lower) / h).round().max(0.0) as usize).min(n - 1);
        out.push(1.0 / h);
        return i;
    }
    let mut s = 0.0;
    for i in i0..=i1 as usize {
        let u = lower + i as f64 * h - x;
        let w = (-u * u / (2.0 * eps)).exp();
        out.push(w);
        s += w;
    }
    let norm = 1.0 / (s * h);
    out.iter_mut().for_each(|w| *w *= norm);
    i0
}

/// `l_{t,eps}(x) = int_0^t p_eps(W_s - x) ds`, trapezoid in time, kernel truncated at
/// `6 sqrt(eps)` and renormalized so every time sample deposits exactly its weight.
pub fn smoothed_local_time(path: &BrownianPath, eps: f64, spec: &GridSpec) -> Result<GridField> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("mollification scale must be positive, got {eps}")));
    }
    check_margin(path, KERNEL_RADIUS * eps.sqrt(), spec)?;
    let mut out = vec![0.0; spec.len()];
    let weights = path.trapezoid_weights();
    deposit(path, &weights, eps, spec, &mut out, 0, path.len());
    GridField::new(spec.clone(), out)
}

/// Add `sum_{i in [from, to)} w_i p_eps(W_i - x)` into `out`.
pub(crate) fn deposit(
    path: &BrownianPath,
    weights: &[f64],
    eps: f64,
    spec: &GridSpec,
    out: &mut [f64],
    from: usize,
    to: usize,
) {
    let d = spec.d;
    let strides = spec.strides();
    let mut axw: Vec<Vec<f64>> = vec![Vec::new(); d];
    let mut start = vec![0usize; d];
    for i in from..to {
        let w = weights[i];
        if w == 0.0 {
            continue;
        }
        let x = path.point(i);
        for k in 0..d {
            start[k] = axis_weights(x[k], spec.lower[k], spec.extents[k], spec.h, eps, &mut axw[k]);
        }
        match d {
            1 => {
                for (j, a) in axw[0].iter().enumerate() {
                    out[start[0] + j] += w * a;
                }
            }
            2 => {
                for (j0, a) in axw[0].iter().enumerate() {
                    let row = (start[0] + j0) * strides[0] + start[1];
                    let wa = w * a;
                    for (j1, b) in axw[1].iter().enumerate() {
                        out[row + j1] += wa * b;
                    }
                }
            }
            _ => deposit_general(&axw, &start, &strides, w, out),
        }
    }
}

fn deposit_general(axw: &[Vec<f64>], start: &[usize], strides: &[usize], w: f64, out: &mut [f64]) {
    let d = axw.len();
    let mut idx = vec![0usize; d];
    loop {
        let mut v = w;
        let mut flat = 0;
        for k in 0..d {
            v *= axw[k][idx[k]];
            flat += (start[k] + idx[k]) * strides[k];
        }
        out[flat] += v;
        let mut k = d;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < axw[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Exact occupation time per cell of the piecewise-linear interpolant, divided by `h`.
/// Cells are centered on nodes. One-dimensional only.
pub fn occupation_density(path: &BrownianPath, spec: &GridSpec) -> Result<GridField> {
    if path.dim() != 1 || spec.d != 1 {
        return Err(Error::UnsupportedDimension { op: "occupation density", dim: path.dim() });
    }
    // boundary cells reach half a spacing past the outer nodes
    check_margin(path, -0.5 * spec.h, spec)?;
    let h = spec.h;
    let n = spec.extents[0];
    let lo = spec.lower[0] - 0.5 * h;
    let cell = |x: f64| (((x - lo) / h).floor().max(0.0) as usize).min(n - 1);
    let mut time = vec![0.0; n];
    let ts = path.times();
    for i in 0..path.len() - 1 {
        let tau = ts[i + 1] - ts[i];
        let (a, b) = (path.point(i)[0], path.point(i + 1)[0]);
        let (x0, x1) = if a <= b { (a, b) } else { (b, a) };
        let (c0, c1) = (cell(x0), cell(x1));
        if c0 == c1 {
            time[c0] += tau;
            continue;
        }
        let len = x1 - x0;
        for (c, slot) in time.iter_mut().enumerate().take(c1 + 1).skip(c0) {
            let e0 = (lo + c as f64 * h).max(x0);
            let e1 = (lo + (c + 1) as f64 * h).min(x1);
            if e1 > e0 {
                *slot += tau * (e1 - e0) / len;
            }
        }
    }
    GridField::new(spec.clone(), time.into_iter().map(|v| v / h).collect())
}

/// `(sum v^q h^d)^{1/q}`.
pub fn lq_norm(field: &GridField, q: f64) -> f64 {
    power_sum(field, q).powf(1.0 / q)
}

/// `sum v^q h^d`, the discrete `||.||_q^q`.
pub fn power_sum(field: &GridField, q: f64) -> f64 {
    power_sum_slice(&field.values, q) * field.spec.cell_volume()
}

pub(crate) fn power_sum_slice(v: &[f64], q: f64) -> f64 {
    if q == 2.0 {
        v.iter().map(|x| x * x).sum()
    } else if q == q.round() && q <= 8.0 {
        let k = q as i32;
        v.iter().map(|x| x.powi(k)).sum()
    } else {
        v.iter().map(|x| x.powf(q)).sum()
    }
}

/// `sum_x f(x) prod_j l^j(x) h^d` over a common grid.
pub fn mutual_intersection(fields: &[&GridField], f: &[f64]) -> Result<f64> {
    let first = fields
        .first()
        .ok_or_else(|| Error::Shape("at least one field is required".into()))?;
    for g in &fields[1..] {
        same_grid(&first.spec, &g.spec)?;
    }
    if f.len() != first.spec.len() {
        return Err(Error::Shape(format!(
            "test function has {} values, grid has {} nodes",
            f.len(),
            first.spec.len()
        )));
    }
    let mut acc = 0.0;
    for (i, &fx) in f.iter().enumerate() {
        if fx == 0.0 {
            continue;
        }
        let mut v = fx;
        for g in fields {
            v *= g.values[i];
        }
        acc += v;
    }
    Ok(acc * first.spec.cell_volume())
}

/// `alpha_eps = <1, prod_j l^j>`.
pub fn mutual_total(fields: &[&GridField]) -> Result<f64> {
    let n = fields.first().map(|f| f.spec.len()).unwrap_or(0);
    mutual_intersection(fields, &vec![1.0; n])
}

/// `int int p_{2 eps}(W_s - V_r) ds dr`, trapezoid in both times, straight from the paths.
pub fn pair_intersection_direct(a: &BrownianPath, b: &BrownianPath, eps: f64) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Shape("paths differ in dimension".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("mollification scale must be positive, got {eps}")));
    }
    let d = a.dim();
    let wa = a.trapezoid_weights();
    let wb = b.trapezoid_weights();
    let s2 = 4.0 * eps;
    let norm = (2.0 * PI * 2.0 * eps).powf(-(d as f64) / 2.0);
    let mut acc = 0.0;
    for i in 0..a.len() {
        let x = a.point(i);
        let mut row = 0.0;
        for j in 0..b.len() {
            let y = b.point(j);
            let mut r2 = 0.0;
            for k in 0..d {
                let u = x[k] - y[k];
                r2 += u * u;
            }
            row += wb[j] * (-r2 / s2).exp();
        }
        acc += wa[i] * row;
    }
    Ok(acc * norm)
}
