//! Regular lattices and nonnegative fields living on them.
//!
//! Storage is row-major with the last axis fastest. Node `i` on axis `k` sits at
//! `lower[k] + i * h`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"BLGF";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub d: usize,
    pub h: f64,
    pub lower: Vec<f64>,
    pub extents: Vec<usize>,
}

impl GridSpec {
    pub fn new(h: f64, lower: Vec<f64>, extents: Vec<usize>) -> Result<Self> {
        let d = lower.len();
        if d == 0 || extents.len() != d {
            return Err(Error::Shape(format!(
                "corner has {} axes, extents has {}",
                d,
                extents.len()
            )));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Config(format!("grid spacing must be positive, got {h}")));
        }
        if extents.iter().any(|&n| n == 0) {
            return Err(Error::Config("grid extents must be at least 1".into()));
        }
        Ok(Self { d, h, lower, extents })
    }

    /// Grid with nodes on the lattice `h Z^d`, symmetric about the origin, covering
    /// `[-half_width, half_width]` on every axis.
    pub fn centered(d: usize, h: f64, half_width: f64) -> Result<Self> {
        let m = (half_width / h).ceil() as i64;
        let lower = vec![-(m as f64) * h; d];
        Self::new(h, lower, vec![(2 * m + 1) as usize; d])
    }

    /// Smallest lattice-aligned grid (nodes on `h Z^d`) whose span contains `[lo, hi]`.
    pub fn covering(h: f64, lo: &[f64], hi: &[f64]) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Shape("bounds differ in dimension".into()));
        }
        let mut lower = Vec::with_capacity(lo.len());
        let mut extents = Vec::with_capacity(lo.len());
        for (&a, &b) in lo.iter().zip(hi) {
            let i0 = (a / h).floor() as i64;
            let i1 = (b / h).ceil() as i64;
            lower.push(i0 as f64 * h);
            extents.push((i1 - i0 + 1).max(1) as usize);
        }
        Self::new(h, lower, extents)
    }

    pub fn len(&self) -> usize {
        self.extents.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.d as i32)
    }

    pub fn upper(&self, axis: usize) -> f64 {
        self.lower[axis] + (self.extents[axis] - 1) as f64 * self.h
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.lower[axis] + i as f64 * self.h
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.d];
        for k in (0..self.d.saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.extents[k + 1];
        }
        s
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.d];
        for k in (0..self.d).rev() {
            idx[k] = flat % self.extents[k];
            flat /= self.extents[k];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.extents)
            .fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .enumerate()
            .map(|(k, &i)| self.coord(k, i))
            .collect()
    }

    /// Lattice offset of this grid's corner, when both grids share `h Z^d + c`.
    pub fn aligned_with(&self, other: &GridSpec) -> bool {
        self.d == other.d
            && (self.h - other.h).abs() <= 1e-12 * self.h
            && self.lower.iter().zip(&other.lower).all(|(a, b)| {
                let r = (a - b) / self.h;
                (r - r.round()).abs() < 1e-9
            })
    }

    pub fn contains_box(&self, lo: &[f64], hi: &[f64]) -> Result<()> {
        for k in 0..self.d {
            let (g0, g1) = (self.lower[k], self.upper(k));
            if lo[k] < g0 - 1e-12 || hi[k] > g1 + 1e-12 {
                return Err(Error::Coverage {
                    axis: k,
                    need_lo: lo[k],
                    need_hi: hi[k],
                    grid_lo: g0,
                    grid_hi: g1,
                });
            }
        }
        Ok(())
    }
}

/// Nonnegative density on a [`GridSpec`]; mass is `sum(values) * h^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::Shape(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                spec.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain(format!("field values must be finite and >= 0, found {v}")));
        }
        Ok(Self { spec, values })
    }

    pub fn zeros(spec: GridSpec) -> Self {
        let n = spec.len();
        Self { spec, values: vec![0.0; n] }
    }

    pub fn from_fn(spec: GridSpec, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..spec.len()).map(|i| f(&spec.node(i))).collect();
        Self::new(spec, values)
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.spec.cell_volume()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            spec: self.spec.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    /// Center of mass of the density.
    pub fn center_of_mass(&self) -> Vec<f64> {
        let s = &self.spec;
        let total: f64 = self.values.iter().sum();
        let mut c = vec![0.0; s.d];
        if total <= 0.0 {
            return c;
        }
        for (i, &v) in self.values.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            for (k, idx) in s.multi_index(i).into_iter().enumerate() {
                c[k] += v * s.coord(k, idx);
            }
        }
        c.iter_mut().for_each(|x| *x /= total);
        c
    }

    /// Multilinear interpolation, zero outside the grid.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let s = &self.spec;
        let mut base = vec![0usize; s.d];
        let mut frac = vec![0.0; s.d];
        for k in 0..s.d {
            let u = (x[k] - s.lower[k]) / s.h;
            if u < 0.0 || u > (s.extents[k] - 1) as f64 {
                return 0.0;
            }
            let i = (u.floor() as usize).min(s.extents[k].saturating_sub(2));
            base[k] = i;
            frac[k] = u - i as f64;
        }
        let strides = s.strides();
        let mut acc = 0.0;
        for corner in 0..(1usize << s.d) {
            let mut w = 1.0;
            let mut flat = 0;
            let mut ok = true;
            for k in 0..s.d {
                let up = (corner >> k) & 1 == 1;
                let i = base[k] + up as usize;
                if i >= s.extents[k] {
                    ok = !up || frac[k] == 0.0;
                    if !ok {
                        break;
                    }
                    continue;
                }
                w *= if up { frac[k] } else { 1.0 - frac[k] };
                flat += i * strides[k];
            }
            if ok && w != 0.0 {
                acc += w * self.values[flat];
            }
        }
        acc
    }

    /// Resample `self` translated by `shift` onto `target`.
    pub fn shifted_onto(&self, shift: &[f64], target: &GridSpec) -> GridField {
        let values = (0..target.len())
            .map(|i| {
                let x: Vec<f64> = target.node(i).iter().zip(shift).map(|(a, b)| a - b).collect();
                self.interpolate(&x)
            })
            .collect();
        GridField { spec: target.clone(), values }
    }

    /// Re-register on `target` (lattice aligned); nodes outside `self` read as zero.
    pub fn embed(&self, target: &GridSpec) -> Result<GridField> {
        if !self.spec.aligned_with(target) {
            return Err(Error::Shape("grids are not lattice aligned".into()));
        }
        let s = &self.spec;
        let offs: Vec<i64> = (0..s.d)
            .map(|k| ((s.lower[k] - target.lower[k]) / s.h).round() as i64)
            .collect();
        let mut out = GridField::zeros(target.clone());
        for (i, &v) in self.values.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let idx = s.multi_index(i);
            let mut t = Vec::with_capacity(s.d);
            for k in 0..s.d {
                let j = idx[k] as i64 + offs[k];
                if j < 0 || j >= target.extents[k] as i64 {
                    return Err(Error::Coverage {
                        axis: k,
                        need_lo: s.lower[k],
                        need_hi: s.upper(k),
                        grid_lo: target.lower[k],
                        grid_hi: target.upper(k),
                    });
                }
                t.push(j as usize);
            }
            let f = target.flat_index(&t);
            out.values[f] = v;
        }
        Ok(out)
    }

    pub fn l1_distance(&self, other: &GridField) -> Result<f64> {
        same_grid(&self.spec, &other.spec)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * self.spec.cell_volume())
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let s = &self.spec;
        w.write_all(MAGIC)?;
        w.write_all(&(s.d as u32).to_le_bytes())?;
        w.write_all(&s.h.to_le_bytes())?;
        for x in &s.lower {
            w.write_all(&x.to_le_bytes())?;
        }
        for &n in &s.extents {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad field header".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let d = u32::from_le_bytes(b4) as usize;
        if d == 0 || d > 8 {
            return Err(Error::Format(format!("implausible dimension {d}")));
        }
        r.read_exact(&mut b8)?;
        let h = f64::from_le_bytes(b8);
        let mut lower = Vec::with_capacity(d);
        for _ in 0..d {
            r.read_exact(&mut b8)?;
            lower.push(f64::from_le_bytes(b8));
        }
        let mut extents = Vec::with_capacity(d);
        for _ in 0..d {
            r.read_exact(&mut b8)?;
            extents.push(u64::from_le_bytes(b8) as usize);
        }
        let spec = GridSpec::new(h, lower, extents).map_err(|e| Error::Format(e.to_string()))?;
        let mut values = Vec::with_capacity(spec.len());
        for _ in 0..spec.len() {
            r.read_exact(&mut b8)?;
            values.push(f64::from_le_bytes(b8));
        }
        GridField::new(spec, values).map_err(|e| Error::Format(e.to_string()))
    }

    /// Two-column CSV (`x,value`); one-dimensional fields only.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        if self.spec.d != 1 {
            return Err(Error::UnsupportedDimension { op: "csv export", dim: self.spec.d });
        }
        writeln!(w, "x,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{}", self.spec.coord(0, i), v)?;
        }
        Ok(())
    }
}

pub(crate) fn same_grid(a: &GridSpec, b: &GridSpec) -> Result<()> {
    if a != b {
        return Err(Error::Shape("fields live on different grids".into()));
    }
    Ok(())
}

/// Discrete Gaussian weights `p_eps(k h) h`, `|k| <= radius`, renormalized to sum to one.
pub(crate) fn gaussian_stencil(eps: f64, h: f64) -> Vec<f64> {
    let r = ((6.0 * eps.sqrt()) / h).ceil() as i64;
    let mut w: Vec<f64> = (-r..=r)
        .map(|k| {
            let x = k as f64 * h;
            (-x * x / (2.0 * eps)).exp()
        })
        .collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable convolution along every axis with a symmetric 1-d stencil.
/// Zero padding; mass flowing past the boundary is lost.
pub(crate) fn convolve_separable(spec: &GridSpec, values: &[f64], stencil: &[f64]) -> Vec<f64> {
    let r = (stencil.len() / 2) as i64;
    let strides = spec.strides();
    let mut cur = values.to_vec();
    let mut next = vec![0.0; cur.len()];
    for axis in 0..spec.d {
        let n = spec.extents[axis] as i64;
        let st = strides[axis];
        next.iter_mut().for_each(|v| *v = 0.0);
        for flat in 0..cur.len() {
            let v = cur[flat];
            if v == 0.0 {
                continue;
            }
            let i = ((flat / st) % n as usize) as i64;
            let lo = (i - r).max(0);
            let hi = (i + r).min(n - 1);
            let base = flat as i64 - i * st as i64;
            for j in lo..=hi {
                next[(base + j * st as i64) as usize] += v * stencil[(j - i + r) as usize];
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur
}

/// Convolution with the heat kernel `p_eps` on the grid (discrete stencil, unit mass).
pub fn convolve_heat(field: &GridField, eps: f64) -> Result<GridField> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("mollification scale must be positive, got {eps}")));
    }
    let st = gaussian_stencil(eps, field.spec.h);
    Ok(GridField {
        spec: field.spec.clone(),
        values: convolve_separable(&field.spec, &field.values, &st),
    })
}
