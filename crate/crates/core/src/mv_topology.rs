//! A computable model of the shift-quotient space of measure collections: test
//! functionals, the metric they induce, marginal projection, profile sequences and
//! the smoothed functionals that are continuous on the compactified space.
//!
//! Test functions are star products of Gaussian bumps of differences,
//! `f(x_1, .., x_K) = prod_{a >= 2} g_w(x_a - x_1 - c_a)`, which are diagonally
//! shift invariant, vanish when any point separates from `x_1`, and have sup norm 1.
//! Each `Lambda` then factors into correlations of single components with a bump,
//! one per leg, so no nested sum over `K` grid nodes is needed.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gn_variational::{rate_functional, GNSolution};
use crate::grid::{convolve_heat, GridField, GridSpec};
use crate::measures::{MeasureCollection, MeasureTuple};
use crate::path_sim::substream;
use crate::stats::linear_fit;

/// Largest `|k|` for which `Lambda_k` is evaluated.
pub const MAX_ORDER: usize = 4;
/// Bumps are set to zero beyond this many widths; `exp(-72)` is below round-off.
const BUMP_CUTOFF: f64 = 12.0;

/// Enumerated family `f_{K, r}`: rank `r` picks a width `base_width * 2^l` and a leg
/// offset pattern `centers[o] * width`, with `r - 1 = l + width_levels * o`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunctionFamily {
    pub base_width: f64,
    pub width_levels: usize,
    pub centers: Vec<f64>,
}

impl Default for TestFunctionFamily {
    fn default() -> Self {
        Self { base_width: 0.5, width_levels: 4, centers: vec![0.0, 1.0, -1.0, 2.0, -2.0] }
    }
}

/// One member: a common width and an offset vector per leg `a = 2..=K`.
#[derive(Clone, Debug, PartialEq)]
pub struct TestFunction {
    pub width: f64,
    pub legs: Vec<Vec<f64>>,
}

impl TestFunctionFamily {
    pub fn ranks(&self) -> usize {
        self.width_levels * self.centers.len()
    }

    /// Member of arity `order` in dimension `d`; leg offsets do not depend on `order`,
    /// which lets [`lambda_table`] share correlations across multi-indices.
    pub fn member(&self, order: usize, d: usize, r: usize) -> Result<TestFunction> {
        if r == 0 || r > self.ranks() {
            return Err(Error::IndexOutOfRange { index: r, len: self.ranks() });
        }
        if order < 2 {
            return Err(Error::Domain("test functions need arity >= 2".into()));
        }
        let l = (r - 1) % self.width_levels;
        let o = (r - 1) / self.width_levels;
        let width = self.base_width * 2f64.powi(l as i32);
        let legs = (1..order)
            .map(|a| {
                let mut c = vec![0.0; d];
                let sign = if a % 2 == 0 { 1.0 } else { -1.0 };
                c[(a - 1) % d] = sign * self.centers[o] * width;
                c
            })
            .collect();
        Ok(TestFunction { width, legs })
    }
}

impl TestFunction {
    pub fn arity(&self) -> usize {
        self.legs.len() + 1
    }

    pub fn sup_norm(&self) -> f64 {
        1.0
    }

    fn bump(&self, z: f64) -> f64 {
        if z.abs() > BUMP_CUTOFF * self.width {
            0.0
        } else {
            (-z * z / (2.0 * self.width * self.width)).exp()
        }
    }

    /// Pointwise value at `xs[0..K]`.
    pub fn eval(&self, xs: &[&[f64]]) -> f64 {
        let x1 = xs[0];
        let mut v = 1.0;
        for (a, c) in self.legs.iter().enumerate() {
            for k in 0..x1.len() {
                v *= self.bump(xs[a + 1][k] - x1[k] - c[k]);
            }
        }
        v
    }

    /// `F(x) = sum_y m(y) g(y - x - c)` on the grid, separably per axis.
    fn correlate(&self, spec: &GridSpec, masses: &[f64], c: &[f64]) -> Vec<f64> {
        let strides = spec.strides();
        let mut cur = masses.to_vec();
        for axis in 0..spec.d {
            let n = spec.extents[axis] as i64;
            let st = strides[axis];
            let reach = ((BUMP_CUTOFF * self.width + c[axis].abs()) / spec.h).ceil() as i64;
            let reach = reach.min(n - 1);
            let table: Vec<f64> =
                (-reach..=reach).map(|o| self.bump(o as f64 * spec.h - c[axis])).collect();
            let mut next = vec![0.0; cur.len()];
            for (flat, out) in next.iter_mut().enumerate() {
                let i = ((flat / st) as i64) % n;
                let base = flat as i64 - i * st as i64;
                let lo = (i - reach).max(0);
                let hi = (i + reach).min(n - 1);
                let mut acc = 0.0;
                for j in lo..=hi {
                    acc += table[(j - i + reach) as usize] * cur[(base + j * st as i64) as usize];
                }
                *out = acc;
            }
            cur = next;
        }
        cur
    }
}

/// All `k = (k_1, .., k_p)` with `k_j >= 0` and `|k| = order`, in lexicographic order.
pub fn multi_indices(p: usize, order: usize) -> Vec<Vec<usize>> {
    fn rec(p: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() + 1 == p {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for v in (0..=left).rev() {
            cur.push(v);
            rec(p, left - v, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if p > 0 {
        rec(p, order, &mut Vec::new(), &mut out);
    }
    out
}

fn check_order(k: &[usize], p: usize) -> Result<usize> {
    if k.len() != p {
        return Err(Error::Shape(format!("multi-index has {} entries, collection p = {p}", k.len())));
    }
    let order: usize = k.iter().sum();
    if order < 2 {
        return Err(Error::Domain("|k| must be at least 2: arity-one test functions vanish".into()));
    }
    if order > MAX_ORDER {
        return Err(Error::Feasibility(format!("|k| = {order} exceeds the evaluable maximum {MAX_ORDER}")));
    }
    Ok(order)
}

/// Component index of every variable: `k_1` copies of 0, then `k_2` of 1, and so on.
fn variable_components(k: &[usize]) -> Vec<usize> {
    k.iter().enumerate().flat_map(|(j, &n)| std::iter::repeat_n(j, n)).collect()
}

fn node_masses(t: &MeasureTuple, j: usize) -> Vec<f64> {
    let vol = t.spec.cell_volume();
    t.components[j].iter().map(|v| v * vol).collect()
}

/// `Lambda_k(f, xi) = sum_i int f d(alpha_i^{j_1}) .. d(alpha_i^{j_K})`.
pub fn lambda_functional(f: &TestFunction, k: &[usize], xi: &MeasureCollection) -> Result<f64> {
    let order = check_order(k, xi.p)?;
    if f.arity() != order {
        return Err(Error::Shape(format!("test function of arity {} used with |k| = {order}", f.arity())));
    }
    let vars = variable_components(k);
    let mut total = 0.0;
    for t in &xi.tuples {
        let m0 = node_masses(t, vars[0]);
        let mut prod = m0;
        for (a, &j) in vars.iter().enumerate().skip(1) {
            let fa = f.correlate(&t.spec, &node_masses(t, j), &f.legs[a - 1]);
            prod.iter_mut().zip(&fa).for_each(|(p, v)| *p *= v);
        }
        total += prod.iter().sum::<f64>();
    }
    Ok(total)
}

/// Reference evaluation of `Lambda_k` by the nested sum over grid nodes; cost grows like
/// `N^{|k|}`, so only for small grids.
pub fn lambda_brute_force(f: &TestFunction, k: &[usize], xi: &MeasureCollection) -> Result<f64> {
    let order = check_order(k, xi.p)?;
    let vars = variable_components(k);
    let mut total = 0.0;
    for t in &xi.tuples {
        let n = t.spec.len();
        let masses: Vec<Vec<f64>> = (0..t.p()).map(|j| node_masses(t, j)).collect();
        let nodes: Vec<Vec<f64>> = (0..n).map(|i| t.spec.node(i)).collect();
        let mut idx = vec![0usize; order];
        'outer: loop {
            let w: f64 = idx.iter().zip(&vars).map(|(&i, &j)| masses[j][i]).product();
            if w != 0.0 {
                let xs: Vec<&[f64]> = idx.iter().map(|&i| nodes[i].as_slice()).collect();
                total += w * f.eval(&xs);
            }
            for slot in idx.iter_mut().rev() {
                *slot += 1;
                if *slot < n {
                    continue 'outer;
                }
                *slot = 0;
            }
            break;
        }
    }
    Ok(total)
}

/// Truncation of the metric's double series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricTruncation {
    pub max_order: usize,
    pub max_rank: usize,
}

impl Default for MetricTruncation {
    fn default() -> Self {
        Self { max_order: MAX_ORDER, max_rank: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricTerm {
    pub k: Vec<usize>,
    pub r: usize,
    pub weight: f64,
    pub term: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub value: f64,
    /// Upper bound on the sum of all dropped terms.
    pub tail_bound: f64,
    pub terms: Vec<MetricTerm>,
}

impl MetricReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,r,weight,term")?;
        for t in &self.terms {
            let k: Vec<String> = t.k.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{},{},{:e},{:e}", k.join(":"), t.r, t.weight, t.term)?;
        }
        Ok(())
    }
}

/// `Lambda_k(f_{|k|, r}, xi)` for every `2 <= |k| <= max_order` and `r <= max_rank`,
/// laid out as `[k index][r - 1]` with `k` in [`multi_indices`] order per order.
pub fn lambda_table(
    xi: &MeasureCollection,
    family: &TestFunctionFamily,
    trunc: &MetricTruncation,
) -> Result<Vec<(Vec<usize>, Vec<f64>)>> {
    if trunc.max_order > MAX_ORDER {
        return Err(Error::Feasibility(format!(
            "metric truncation at |k| = {} exceeds the evaluable maximum {MAX_ORDER}",
            trunc.max_order
        )));
    }
    if trunc.max_rank > family.ranks() {
        return Err(Error::Config(format!(
            "the test family has {} ranks, truncation asks for {}",
            family.ranks(),
            trunc.max_rank
        )));
    }
    let ks: Vec<Vec<usize>> = (2..=trunc.max_order).flat_map(|o| multi_indices(xi.p, o)).collect();
    let mut table: Vec<(Vec<usize>, Vec<f64>)> =
        ks.iter().map(|k| (k.clone(), vec![0.0; trunc.max_rank])).collect();
    for t in &xi.tuples {
        let masses: Vec<Vec<f64>> = (0..xi.p).map(|j| node_masses(t, j)).collect();
        let nonzero: Vec<bool> = masses.iter().map(|m| m.iter().any(|&v| v != 0.0)).collect();
        for r in 1..=trunc.max_rank {
            let f = family.member(trunc.max_order.max(2), xi.d, r)?;
            // corr[j][a - 1]: component j correlated against leg a
            let mut corr: Vec<Vec<Option<Vec<f64>>>> = vec![vec![None; f.legs.len()]; xi.p];
            for (k, row) in ks.iter().zip(table.iter_mut()) {
                let vars = variable_components(k);
                if vars.iter().any(|&j| !nonzero[j]) {
                    continue;
                }
                let mut prod = masses[vars[0]].clone();
                for (a, &j) in vars.iter().enumerate().skip(1) {
                    let fa = corr[j][a - 1]
                        .get_or_insert_with(|| f.correlate(&t.spec, &masses[j], &f.legs[a - 1]));
                    prod.iter_mut().zip(fa.iter()).for_each(|(p, v)| *p *= v);
                }
                row.1[r - 1] += prod.iter().sum::<f64>();
            }
        }
    }
    Ok(table)
}

fn term_weight(p: usize, order: usize, r: usize, sup: f64) -> f64 {
    (2.0 * p as f64).powi(-(order as i32)) * 0.5f64.powi(r as i32) / (order as f64 * (1.0 + sup))
}

/// `(c, lambda)` with `sum_i prod_j m_{ij}^{k_j} <= c lambda^{|k|}` for every `k`.
fn mass_growth(xi: &MeasureCollection) -> (f64, f64) {
    let totals = xi.total_masses();
    if xi.sub_probability {
        return (1.0, totals.iter().cloned().fold(1.0, f64::max));
    }
    let top = xi.tuples.iter().flat_map(|t| t.masses()).fold(1.0, f64::max);
    (xi.len() as f64, top)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Truncated metric with a certified bound on the discarded terms.
pub fn mv_distance(
    xi: &MeasureCollection,
    zeta: &MeasureCollection,
    family: &TestFunctionFamily,
    trunc: &MetricTruncation,
) -> Result<MetricReport> {
    if xi.p != zeta.p || xi.d != zeta.d {
        return Err(Error::Shape("collections differ in p or d".into()));
    }
    let p = xi.p;
    let a = lambda_table(xi, family, trunc)?;
    let b = lambda_table(zeta, family, trunc)?;
    let mut terms = Vec::new();
    let mut value = 0.0;
    for ((k, la), (_, lb)) in a.iter().zip(&b) {
        let order: usize = k.iter().sum();
        for r in 1..=trunc.max_rank {
            let w = term_weight(p, order, r, 1.0);
            let term = w * (la[r - 1] - lb[r - 1]).abs();
            value += term;
            terms.push(MetricTerm { k: k.clone(), r, weight: w, term });
        }
    }
    // every dropped term is at most weight * sup f * (B(xi) + B(zeta))
    let (cx, lx) = mass_growth(xi);
    let (cz, lz) = mass_growth(zeta);
    let lambda = lx.max(lz);
    let bound = |order: usize| cx * lx.powi(order as i32) + cz * lz.powi(order as i32);
    let count = |order: usize| binomial(order + p - 1, p - 1);
    let dropped = |order: usize| count(order) * term_weight(p, order, 0, 1.0) * bound(order);
    let mut tail = 0.0;
    for order in 2..=trunc.max_order {
        tail += dropped(order) * 0.5f64.powi(trunc.max_rank as i32);
    }
    // successive terms shrink by at most (K + p) / (K + 1) * lambda / 2p, decreasing in K
    let mut order = trunc.max_order + 1;
    loop {
        let t = dropped(order);
        let ratio = (order + p) as f64 / (order + 1) as f64 * lambda / (2.0 * p as f64);
        if ratio < 1.0 && (t <= 1e-17 * tail || order >= 10_000) {
            tail += t / (1.0 - ratio);
            break;
        }
        if order >= 10_000 {
            tail = f64::INFINITY;
            break;
        }
        tail += t;
        order += 1;
    }
    Ok(MetricReport { value, tail_bound: tail, terms })
}

/// Profile sequence `mu_n^j = sum_i alpha_i^j * delta_{x_i^n} + beta_n^j` on a grid built to
/// hold it: tuple `i` sits at `x_i^n = (i + 1) n S e_1`, `S` one tuple diameter, and
/// `beta_n^j` is a centred Gaussian of variance `spread * n` carrying the mass deficit.
pub fn make_profile_sequence(xi: &MeasureCollection, n: usize, spread: f64) -> Result<MeasureTuple> {
    let layout = profile_layout(xi, n, spread)?;
    let sigma = (spread * n as f64).sqrt();
    let h = layout.h;
    let mut lo = vec![-6.0 * sigma; xi.d];
    let mut hi = vec![6.0 * sigma; xi.d];
    for (t, x) in xi.tuples.iter().zip(&layout.positions) {
        for k in 0..xi.d {
            lo[k] = lo[k].min(x[k] - h);
            hi[k] = hi[k].max(x[k] + t.spec.extents[k] as f64 * h);
        }
    }
    let spec = GridSpec::covering(h, &lo, &hi)?;
    make_profile_sequence_on(xi, n, spread, &spec)
}

struct Layout {
    h: f64,
    positions: Vec<Vec<f64>>,
}

fn profile_layout(xi: &MeasureCollection, n: usize, spread: f64) -> Result<Layout> {
    if n == 0 || !(spread > 0.0) {
        return Err(Error::Config("profile sequences need n >= 1 and spread > 0".into()));
    }
    let h = xi.tuples.first().map(|t| t.spec.h).unwrap_or(1.0);
    if xi.tuples.iter().any(|t| (t.spec.h - h).abs() > 1e-12 * h) {
        return Err(Error::Shape("profile sequences need a common grid spacing".into()));
    }
    let diameter = xi
        .tuples
        .iter()
        .flat_map(|t| t.spec.extents.iter().map(|&e| e as f64 * h))
        .fold(0.0, f64::max)
        + h;
    let positions = (0..xi.len())
        .map(|i| {
            let mut x = vec![0.0; xi.d];
            x[0] = ((i + 1) * n) as f64 * diameter;
            x
        })
        .collect();
    Ok(Layout { h, positions })
}

/// As [`make_profile_sequence`] on a caller-chosen lattice-aligned grid.
pub fn make_profile_sequence_on(
    xi: &MeasureCollection,
    n: usize,
    spread: f64,
    spec: &GridSpec,
) -> Result<MeasureTuple> {
    let layout = profile_layout(xi, n, spread)?;
    if xi.len() > 0 && (spec.h - layout.h).abs() > 1e-12 * layout.h {
        return Err(Error::Shape("target grid spacing differs from the collection's".into()));
    }
    let totals = xi.total_masses();
    if totals.iter().any(|&m| m > 1.0 + 1e-9) {
        return Err(Error::Domain("profile sequences need sub-probability components".into()));
    }
    let h = spec.h;
    let mut comps = vec![vec![0.0; spec.len()]; xi.p];
    for (t, x) in xi.tuples.iter().zip(&layout.positions) {
        // land the tuple's first node on the lattice point nearest x
        let mut lower = Vec::with_capacity(xi.d);
        for k in 0..xi.d {
            lower.push((x[k] / h).round() * h);
        }
        let placed = GridSpec::new(h, lower, t.spec.extents.clone())?;
        for (j, c) in t.components.iter().enumerate() {
            let f = GridField { spec: placed.clone(), values: c.clone() }.embed(spec)?;
            comps[j].iter_mut().zip(&f.values).for_each(|(a, b)| *a += b);
        }
    }
    let sigma2 = spread * n as f64;
    let bump: Vec<f64> = (0..spec.len())
        .map(|i| (-spec.node(i).iter().map(|v| v * v).sum::<f64>() / (2.0 * sigma2)).exp())
        .collect();
    let bump_mass: f64 = bump.iter().sum::<f64>() * spec.cell_volume();
    for (j, c) in comps.iter_mut().enumerate() {
        let deficit = (1.0 - totals[j]).max(0.0);
        if deficit > 0.0 {
            c.iter_mut().zip(&bump).for_each(|(a, b)| *a += deficit * b / bump_mass);
        }
    }
    MeasureTuple::new(spec.clone(), comps)
}

/// `sup_x mass(B(x, R))` over grid centres.
pub fn total_disintegration_score(measure: &GridField, radius: f64) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(Error::Domain("ball radius must be positive".into()));
    }
    let spec = &measure.spec;
    let vol = spec.cell_volume();
    let m = (radius / spec.h).floor() as i64;
    if spec.d == 1 {
        let mut prefix = vec![0.0; measure.values.len() + 1];
        for (i, v) in measure.values.iter().enumerate() {
            prefix[i + 1] = prefix[i] + v * vol;
        }
        let n = measure.values.len() as i64;
        return Ok((0..n)
            .map(|i| prefix[(i + m + 1).min(n) as usize] - prefix[(i - m).max(0) as usize])
            .fold(0.0, f64::max));
    }
    let mut offsets: Vec<Vec<i64>> = vec![vec![]];
    for _ in 0..spec.d {
        offsets = offsets
            .into_iter()
            .flat_map(|o| (-m..=m).map(move |v| [o.clone(), vec![v]].concat()))
            .collect();
    }
    offsets.retain(|o| o.iter().map(|v| (v * v) as f64).sum::<f64>() * spec.h * spec.h <= radius * radius);
    let mut best = 0.0f64;
    for c in 0..spec.len() {
        let idx = spec.multi_index(c);
        let mut acc = 0.0;
        'off: for o in &offsets {
            let mut t = Vec::with_capacity(spec.d);
            for k in 0..spec.d {
                let j = idx[k] as i64 + o[k];
                if j < 0 || j >= spec.extents[k] as i64 {
                    continue 'off;
                }
                t.push(j as usize);
            }
            acc += measure.values[spec.flat_index(&t)];
        }
        best = best.max(acc * vol);
    }
    Ok(best)
}

/// The `p` marginal collections `{alpha_i^j}_i`, zero measures deleted.
pub fn project_marginals(xi: &MeasureCollection) -> Result<Vec<MeasureCollection>> {
    (0..xi.p)
        .map(|j| {
            let tuples = xi
                .tuples
                .iter()
                .filter(|t| t.components[j].iter().any(|&v| v != 0.0))
                .map(|t| MeasureTuple::new(t.spec.clone(), vec![t.components[j].clone()]))
                .collect::<Result<Vec<_>>>()?;
            MeasureCollection::new(1, xi.d, tuples, xi.sub_probability)
        })
        .collect()
}

fn padded(t: &MeasureTuple, eps: f64) -> Result<MeasureTuple> {
    let m = (6.0 * eps.sqrt() / t.spec.h).ceil() as usize + 1;
    let lower = t.spec.lower.iter().map(|v| v - m as f64 * t.spec.h).collect();
    let extents = t.spec.extents.iter().map(|e| e + 2 * m).collect();
    let spec = GridSpec::new(t.spec.h, lower, extents)?;
    let comps = (0..t.p())
        .map(|j| Ok(t.field(j).embed(&spec)?.values))
        .collect::<Result<Vec<_>>>()?;
    MeasureTuple::new(spec, comps)
}

/// `(Lambda(p_eps^{(p)}, xi), ||xi * p_eps||_q)`: the first is `sum_i int prod_j
/// (alpha_i^j * p_eps)`, the second `(sum_{i,j} ||alpha_i^j * p_eps||_q^q)^{1/q}`.
pub fn smoothed_functionals(xi: &MeasureCollection, eps: f64, q: f64) -> Result<(f64, f64)> {
    if !(q >= 1.0) {
        return Err(Error::Domain(format!("norm exponent must be >= 1, got {q}")));
    }
    let mut lambda = 0.0;
    let mut norm_q = 0.0;
    for t in &xi.tuples {
        let t = padded(t, eps)?;
        let smoothed: Vec<GridField> =
            (0..t.p()).map(|j| convolve_heat(&t.field(j), eps)).collect::<Result<_>>()?;
        let vol = t.spec.cell_volume();
        lambda += (0..t.spec.len())
            .map(|i| smoothed.iter().map(|f| f.values[i]).product::<f64>())
            .sum::<f64>()
            * vol;
        for f in &smoothed {
            norm_q += crate::local_time::power_sum_slice(&f.values, q) * vol;
        }
    }
    Ok((lambda, norm_q.powf(1.0 / q)))
}

/// Interpolation exponent with `q = theta + (1 - theta) r`, `r = 2q` for `d <= 2`, `r = 3`
/// for `d = 3`.
pub fn interpolation_theta(d: usize, q: f64) -> Result<f64> {
    crate::gn_variational::check_admissible(d, q)?;
    let r = if d <= 2 { 2.0 * q } else { 3.0 };
    if !(r > q) {
        return Err(Error::Domain(format!("no Sobolev exponent above q = {q} in d = {d}")));
    }
    Ok((r - q) / (r - 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingReport {
    pub eps: Vec<f64>,
    /// `||psi^2 * p_eps - psi^2||_q`.
    pub lhs: Vec<f64>,
    /// `eps^{theta/2} ||grad psi||^{2-theta} ||psi||^theta`.
    pub rhs: Vec<f64>,
    pub theta: f64,
    pub slope: f64,
    pub slope_se: f64,
    pub decreasing: bool,
}

/// Smoothing error of `psi^2` along an `eps` ladder with the fitted log-log slope.
pub fn smoothing_error_bound_check(psi: &GNSolution, eps: &[f64], q: f64) -> Result<SmoothingReport> {
    if eps.len() < 2 || eps.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::Config("need at least two positive eps values".into()));
    }
    let theta = interpolation_theta(psi.d, q)?;
    let rho = psi.density();
    let vol = rho.spec.cell_volume();
    let mut lhs = Vec::with_capacity(eps.len());
    let mut rhs = Vec::with_capacity(eps.len());
    for &e in eps {
        let s = convolve_heat(&rho, e)?;
        let diff: Vec<f64> = s.values.iter().zip(&rho.values).map(|(a, b)| (a - b).abs()).collect();
        lhs.push((crate::local_time::power_sum_slice(&diff, q) * vol).powf(1.0 / q));
        rhs.push(e.powf(theta / 2.0) * psi.grad_l2_norm.powf(2.0 - theta) * psi.l2_norm.powf(theta));
    }
    let xs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = lhs.iter().map(|v| v.ln()).collect();
    let (_, slope, slope_se) = linear_fit(&xs, &ys);
    let mut order: Vec<usize> = (0..eps.len()).collect();
    order.sort_by(|&a, &b| eps[a].total_cmp(&eps[b]));
    let decreasing = order.windows(2).all(|w| lhs[w[0]] < lhs[w[1]]);
    Ok(SmoothingReport { eps: eps.to_vec(), lhs, rhs, theta, slope, slope_se, decreasing })
}

fn bump_density(spec: &GridSpec, center: &[f64], var: f64, mass: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..spec.len())
        .map(|i| {
            let x = spec.node(i);
            (-x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / (2.0 * var)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum::<f64>() * spec.cell_volume();
    raw.into_iter().map(|v| mass * v / total).collect()
}

fn bump_tuple(d: usize, h: f64, half: f64, parts: &[(f64, f64, f64)]) -> Result<MeasureTuple> {
    let spec = GridSpec::centered(d, h, half)?;
    let comps = parts
        .iter()
        .map(|&(c, var, m)| bump_density(&spec, &vec![c; d], var, m))
        .collect();
    MeasureTuple::new(spec, comps)
}

/// Fixed corpus of sub-probability collections for convergence batteries; none is a
/// single full-mass tuple, whose profile sequence is constant. Entries are
/// `(name, collection)`; components are discretized Gaussians with exact grid masses.
pub fn test_corpus() -> Result<Vec<(String, MeasureCollection)>> {
    let h = 0.25;
    let g = |parts: &[(f64, f64, f64)]| bump_tuple(1, h, 2.5, parts);
    let mut out = Vec::new();
    let mut push = |name: &str, p: usize, d: usize, tuples: Vec<MeasureTuple>| -> Result<()> {
        out.push((name.to_string(), MeasureCollection::new(p, d, tuples, true)?));
        Ok(())
    };
    push("single-heavy", 1, 1, vec![g(&[(0.0, 0.5, 0.9)])?])?;
    push("two-bumps", 1, 1, vec![g(&[(0.0, 0.4, 0.5)])?, g(&[(0.3, 0.8, 0.3)])?])?;
    push("half-deficit", 1, 1, vec![g(&[(0.0, 0.6, 0.5)])?])?;
    push(
        "pair-pieces",
        2,
        1,
        vec![g(&[(0.0, 0.5, 0.5), (0.5, 0.3, 0.4)])?, g(&[(0.2, 0.8, 0.3), (0.0, 0.5, 0.5)])?],
    )?;
    push(
        "pair-split",
        2,
        1,
        vec![g(&[(0.0, 0.5, 0.6), (0.0, 0.5, 0.0)])?, g(&[(0.0, 0.5, 0.0), (0.2, 0.7, 0.7)])?],
    )?;
    // three components; pieces 1 and 2 share drifts across components, the rest are alone
    push(
        "coalescing-triple",
        3,
        1,
        vec![
            g(&[(0.0, 0.5, 0.3), (0.2, 0.4, 0.4), (0.0, 0.5, 0.0)])?,
            g(&[(0.0, 0.3, 0.3), (0.0, 0.6, 0.4), (-0.2, 0.5, 0.3)])?,
            g(&[(0.1, 0.5, 0.2), (0.0, 0.5, 0.0), (0.0, 0.5, 0.0)])?,
            g(&[(0.0, 0.5, 0.0), (0.0, 0.5, 0.0), (0.0, 0.4, 0.3)])?,
            g(&[(0.0, 0.5, 0.0), (0.0, 0.5, 0.0), (0.3, 0.7, 0.3)])?,
        ],
    )?;
    push("three-pieces", 1, 1, vec![g(&[(0.0, 0.3, 0.2)])?, g(&[(0.0, 0.5, 0.3)])?, g(&[(0.0, 0.9, 0.3)])?])?;
    push("pair-deficit", 2, 1, vec![g(&[(0.0, 0.4, 0.7), (0.3, 0.6, 0.4)])?])?;
    push("plane-single", 1, 2, vec![bump_tuple(2, 0.5, 2.5, &[(0.0, 0.6, 0.6)])?])?;
    push("plane-pair", 2, 2, vec![bump_tuple(2, 0.5, 2.5, &[(0.0, 0.6, 0.8), (0.5, 0.5, 0.5)])?])?;
    Ok(out)
}

/// Random sub-probability collection: one to three tuples on small lattices at random
/// offsets, sparse nonnegative masses, per-component totals drawn below one.
pub fn random_collection<R: Rng + ?Sized>(rng: &mut R, p: usize, d: usize) -> Result<MeasureCollection> {
    let h = 0.5;
    let n = if d == 1 { 8 } else { 4 };
    let count = rng.random_range(1..=3);
    let budget: Vec<f64> = (0..p).map(|_| rng.random_range(0.3..1.0)).collect();
    let mut tuples = Vec::with_capacity(count);
    let mut raw: Vec<Vec<Vec<f64>>> = Vec::with_capacity(count);
    let mut specs = Vec::with_capacity(count);
    for _ in 0..count {
        let lower = (0..d).map(|_| rng.random_range(-4i32..4) as f64 * h).collect();
        specs.push(GridSpec::new(h, lower, vec![n; d])?);
        let len = n.pow(d as u32);
        raw.push(
            (0..p)
                .map(|_| {
                    (0..len)
                        .map(|_| if rng.random::<f64>() < 0.4 { rng.random::<f64>() } else { 0.0 })
                        .collect()
                })
                .collect(),
        );
    }
    for j in 0..p {
        let total: f64 = raw.iter().map(|t| t[j].iter().sum::<f64>()).sum();
        if total > 0.0 {
            raw.iter_mut().for_each(|t| t[j].iter_mut().for_each(|v| *v *= budget[j] / total));
        }
    }
    for (spec, comps) in specs.into_iter().zip(raw) {
        let t = MeasureTuple::new(spec, comps)?;
        if !t.is_zero() {
            tuples.push(t);
        }
    }
    MeasureCollection::new(p, d, tuples, true)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    pub triples: usize,
    /// `max |D(a,b) - D(b,a)|`.
    pub symmetry: f64,
    /// `max (D(a,c) - D(a,b) - D(b,c))`, positive only on violation.
    pub triangle: f64,
    /// `max D(a, shifted a)`.
    pub identity: f64,
    /// `min D(a,b)` over the distinct pairs drawn.
    pub separation: f64,
}

impl AxiomReport {
    pub fn pass(&self, tol: f64) -> bool {
        self.symmetry <= tol && self.triangle <= tol && self.identity <= tol && self.separation > 0.0
    }
}

/// Metric axioms on `triples` random triples with arity and dimension drawn from
/// `{1, 2} x {1, 2}`; the identity check moves every tuple by its own lattice shift.
pub fn metric_axiom_check(triples: usize, seed: u64) -> Result<AxiomReport> {
    let family = TestFunctionFamily::default();
    let trunc = MetricTruncation::default();
    let mut rep = AxiomReport { triples, symmetry: 0.0, triangle: f64::NEG_INFINITY, identity: 0.0, separation: f64::INFINITY };
    for i in 0..triples {
        let mut rng = substream(seed, i as u64);
        let p = rng.random_range(1..=2);
        let d = rng.random_range(1..=2);
        let a = random_collection(&mut rng, p, d)?;
        let b = random_collection(&mut rng, p, d)?;
        let c = random_collection(&mut rng, p, d)?;
        let dist = |x: &MeasureCollection, y: &MeasureCollection| mv_distance(x, y, &family, &trunc).map(|r| r.value);
        let (ab, ba, bc, ac) = (dist(&a, &b)?, dist(&b, &a)?, dist(&b, &c)?, dist(&a, &c)?);
        let offsets: Vec<Vec<i64>> = a.tuples.iter().map(|_| (0..d).map(|_| rng.random_range(-9..10)).collect()).collect();
        let moved = a.shifted(&offsets);
        rep.symmetry = rep.symmetry.max((ab - ba).abs());
        rep.triangle = rep.triangle.max(ac - ab - bc);
        rep.identity = rep.identity.max(dist(&a, &moved)?);
        rep.separation = rep.separation.min(ab).min(bc).min(ac);
    }
    Ok(rep)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryRow {
    pub name: String,
    pub separations: Vec<usize>,
    pub distances: Vec<f64>,
    pub tail_bounds: Vec<f64>,
    pub decreasing: bool,
}

/// `D(profile_n(xi), xi)` for each separation `n`.
pub fn profile_battery(
    corpus: &[(String, MeasureCollection)],
    separations: &[usize],
    spread: f64,
) -> Result<Vec<BatteryRow>> {
    let family = TestFunctionFamily::default();
    let trunc = MetricTruncation::default();
    corpus
        .iter()
        .map(|(name, xi)| {
            let mut distances = Vec::with_capacity(separations.len());
            let mut tail_bounds = Vec::with_capacity(separations.len());
            for &n in separations {
                let mu = MeasureCollection::singleton(make_profile_sequence(xi, n, spread)?)?;
                let r = mv_distance(&mu, xi, &family, &trunc)?;
                distances.push(r.value);
                tail_bounds.push(r.tail_bound);
            }
            let decreasing = distances.windows(2).all(|w| w[1] < w[0]);
            Ok(BatteryRow { name: name.clone(), separations: separations.to_vec(), distances, tail_bounds, decreasing })
        })
        .collect()
}

/// `max |I(xi) - sum_j I(pi^j xi)|` over the collections.
pub fn marginal_additivity_error(collections: &[&MeasureCollection]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for xi in collections {
        let whole = rate_functional(xi);
        let parts: f64 = project_marginals(xi)?.iter().map(rate_functional).sum();
        worst = worst.max((whole - parts).abs());
    }
    Ok(worst)
}
