//! Discrete functionals on a Neumann lattice.
//!
//! `L` is the graph Laplacian with edges between lattice neighbours only, so
//! `<psi, L psi> h^d` equals the forward-difference Dirichlet energy. Central
//! differences would leave the checkerboard mode invisible to the solver.

use crate::grid::GridSpec;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Calls `f(block_base, stride, extent)` for every line family along `axis`: lines
/// start at `block_base + j` for `j < stride` and step by `stride`.
fn for_each_block(spec: &GridSpec, axis: usize, mut f: impl FnMut(usize, usize, usize)) {
    let st = spec.strides()[axis];
    let n = spec.extents[axis];
    let blocks = spec.len() / (st * n);
    for b in 0..blocks {
        f(b * st * n, st, n);
    }
}

/// `out = L psi` with `L = -Delta_h` (positive semidefinite).
pub(crate) fn neg_laplacian(spec: &GridSpec, psi: &[f64], out: &mut [f64]) {
    let ih2 = 1.0 / (spec.h * spec.h);
    out.iter_mut().for_each(|v| *v = 0.0);
    for axis in 0..spec.d {
        for_each_block(spec, axis, |base, st, n| {
            for i in 0..n.saturating_sub(1) {
                let r0 = base + i * st;
                let (lo, hi) = out.split_at_mut(r0 + st);
                let a = &psi[r0..r0 + st];
                let b = &psi[r0 + st..r0 + 2 * st];
                let oa = &mut lo[r0..r0 + st];
                let ob = &mut hi[..st];
                for j in 0..st {
                    let diff = (a[j] - b[j]) * ih2;
                    oa[j] += diff;
                    ob[j] -= diff;
                }
            }
        });
    }
}

/// `h^{d-2} sum_edges (psi_a - psi_b)^2`.
pub(crate) fn dirichlet_energy(spec: &GridSpec, psi: &[f64]) -> f64 {
    let mut acc = 0.0;
    for axis in 0..spec.d {
        for_each_block(spec, axis, |base, st, n| {
            for i in 0..n.saturating_sub(1) {
                let r0 = base + i * st;
                let a = &psi[r0..r0 + st];
                let b = &psi[r0 + st..r0 + 2 * st];
                acc += a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
            }
        });
    }
    acc * spec.h.powi(spec.d as i32 - 2)
}

pub(crate) fn mass2(spec: &GridSpec, psi: &[f64]) -> f64 {
    dot(psi, psi) * spec.cell_volume()
}

/// `sum |psi|^{2q} h^d`.
pub(crate) fn power2q(spec: &GridSpec, psi: &[f64], q: f64) -> f64 {
    let s: f64 = if q == 2.0 {
        psi.iter().map(|v| (v * v) * (v * v)).sum()
    } else if q == 3.0 {
        psi.iter().map(|v| (v * v).powi(3)).sum()
    } else {
        psi.iter().map(|v| v.abs().powf(2.0 * q)).sum()
    };
    s * spec.cell_volume()
}

/// `|psi|^{2q-2} psi`.
pub(crate) fn odd_power(psi: &[f64], q: f64, out: &mut [f64]) {
    for (o, &v) in out.iter_mut().zip(psi) {
        *o = if q == 2.0 {
            v * v * v
        } else if q == 3.0 {
            let s = v * v;
            s * s * v
        } else {
            v.abs().powf(2.0 * q - 2.0) * v
        };
    }
}

/// Gagliardo-Nirenberg exponent `a = d(q-1)/(2q)`.
pub fn gn_exponent(d: usize, q: f64) -> f64 {
    d as f64 * (q - 1.0) / (2.0 * q)
}

/// `||psi||_{2q} / (||grad psi||^a ||psi||^{1-a})` from the three discrete integrals.
pub(crate) fn ratio_from(m: f64, g: f64, p: f64, d: usize, q: f64) -> f64 {
    let a = gn_exponent(d, q);
    (p.ln() / (2.0 * q) - 0.5 * a * g.ln() - 0.5 * (1.0 - a) * m.ln()).exp()
}

/// Approximate inverse of `I + sigma L`: one tridiagonal solve per axis, applied in
/// sequence. The axis factors commute, so the product is symmetric positive definite.
pub(crate) struct Preconditioner {
    spec: GridSpec,
    sigma: f64,
}

impl Preconditioner {
    pub fn new(spec: &GridSpec, sigma: f64) -> Self {
        Self { spec: spec.clone(), sigma }
    }

    pub fn apply(&self, rhs: &[f64], out: &mut [f64]) {
        out.copy_from_slice(rhs);
        let c = self.sigma / (self.spec.h * self.spec.h);
        for axis in 0..self.spec.d {
            let n = self.spec.extents[axis];
            if n == 1 {
                continue;
            }
            // every line along an axis has the same matrix, so the elimination
            // coefficients are shared and lines are swept side by side
            let off = -c;
            let mut inv_m = vec![0.0; n];
            let mut cp = vec![0.0; n];
            for i in 0..n {
                let diag = 1.0 + c * if i == 0 || i == n - 1 { 1.0 } else { 2.0 };
                let m = if i == 0 { diag } else { diag - off * cp[i - 1] };
                inv_m[i] = 1.0 / m;
                cp[i] = off / m;
            }
            for_each_block(&self.spec, axis, |base, st, n| {
                let line = &mut out[base..base + st * n];
                for j in 0..st {
                    line[j] *= inv_m[0];
                }
                for i in 1..n {
                    let (prev, cur) = line.split_at_mut(i * st);
                    let prev = &prev[(i - 1) * st..];
                    let cur = &mut cur[..st];
                    for j in 0..st {
                        cur[j] = (cur[j] - off * prev[j]) * inv_m[i];
                    }
                }
                for i in (0..n - 1).rev() {
                    let (cur, next) = line.split_at_mut((i + 1) * st);
                    let cur = &mut cur[i * st..];
                    let next = &next[..st];
                    for j in 0..st {
                        cur[j] -= cp[i] * next[j];
                    }
                }
            });
        }
    }
}
