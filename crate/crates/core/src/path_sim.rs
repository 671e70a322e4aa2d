//! Discretized Brownian paths.
//!
//! Randomness comes from ChaCha8 substreams: the seed keys the cipher, the stream
//! index selects the nonce and the block counter plays the role of the step, so a
//! replica is reproducible regardless of which thread draws it.

use std::io::Write;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub d: usize,
    pub t: f64,
    pub dt: f64,
    pub seed: u64,
    pub p: usize,
}

impl PathConfig {
    pub fn new(d: usize, t: f64, dt: f64, seed: u64, p: usize) -> Result<Self> {
        let c = Self { d, t, dt, seed, p };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Config("dimension must be at least 1".into()));
        }
        if !(self.t > 0.0 && self.t.is_finite()) {
            return Err(Error::Config(format!("horizon must be positive, got {}", self.t)));
        }
        if !(self.dt > 0.0) || self.dt > self.t * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "step must satisfy 0 < dt <= t, got dt={} t={}",
                self.dt, self.t
            )));
        }
        let n = self.t / self.dt;
        if (n - n.round()).abs() > 1e-6 * n.max(1.0) {
            return Err(Error::Config(format!("t/dt = {n} is not an integer")));
        }
        if self.p == 0 {
            return Err(Error::Config("path count must be at least 1".into()));
        }
        Ok(())
    }

    /// Mutual intersections of `p` paths are nondegenerate only when `d(p-1) < 2p`.
    pub fn validate_mutual(&self) -> Result<()> {
        self.validate()?;
        if self.d * (self.p - 1) >= 2 * self.p {
            return Err(Error::Config(format!(
                "mutual intersection needs d(p-1) < 2p, got d={} p={}",
                self.d, self.p
            )));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t / self.dt).round() as usize
    }
}

/// Substream `stream` of the generator keyed by `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrownianPath {
    d: usize,
    times: Vec<f64>,
    /// Flattened `times.len() x d`.
    positions: Vec<f64>,
}

impl BrownianPath {
    pub fn from_parts(d: usize, times: Vec<f64>, positions: Vec<f64>) -> Result<Self> {
        if d == 0 || positions.len() != times.len() * d {
            return Err(Error::Shape(format!(
                "{} times but {} coordinates in dimension {}",
                times.len(),
                positions.len(),
                d
            )));
        }
        if times.first() != Some(&0.0) {
            return Err(Error::Domain("paths start at time 0".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("times must be strictly increasing".into()));
        }
        if positions[..d].iter().any(|&x| x != 0.0) {
            return Err(Error::Domain("paths start at the origin".into()));
        }
        Ok(Self { d, times, positions })
    }

    /// Uniformly sampled deterministic path `s -> f(s)`; `f(0)` must be the origin.
    pub fn from_fn(d: usize, t: f64, dt: f64, f: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        let n = (t / dt).round() as usize;
        let times: Vec<f64> = (0..=n).map(|i| i as f64 * dt).collect();
        let mut positions = Vec::with_capacity((n + 1) * d);
        for &s in &times {
            let x = f(s);
            if x.len() != d {
                return Err(Error::Shape("path function returned wrong dimension".into()));
            }
            positions.extend(x);
        }
        Self::from_parts(d, times, positions)
    }

    pub fn constant(d: usize, t: f64, dt: f64) -> Result<Self> {
        Self::from_fn(d, t, dt, |_| vec![0.0; d])
    }

    pub fn linear(velocity: &[f64], t: f64, dt: f64) -> Result<Self> {
        let v = velocity.to_vec();
        Self::from_fn(v.len(), t, dt, move |s| v.iter().map(|c| c * s).collect())
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.positions[i * self.d..(i + 1) * self.d]
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn endpoint(&self) -> &[f64] {
        self.point(self.len() - 1)
    }

    /// Coordinate-wise `(min, max)` of the sampled positions.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.d];
        let mut hi = vec![f64::NEG_INFINITY; self.d];
        for x in self.positions.chunks_exact(self.d) {
            for k in 0..self.d {
                lo[k] = lo[k].min(x[k]);
                hi[k] = hi[k].max(x[k]);
            }
        }
        (lo, hi)
    }

    /// Trapezoid weights of the sample times; they sum to the horizon.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let n = self.len();
        let mut w = vec![0.0; n];
        for i in 0..n.saturating_sub(1) {
            let dt = self.times[i + 1] - self.times[i];
            w[i] += 0.5 * dt;
            w[i + 1] += 0.5 * dt;
        }
        w
    }

    /// Every position shifted by `x`. The result no longer starts at the origin, so it
    /// bypasses validation; it is meant for equivariance checks only.
    pub fn translated(&self, x: &[f64]) -> Self {
        let mut positions = self.positions.clone();
        for p in positions.chunks_exact_mut(self.d) {
            p.iter_mut().zip(x).for_each(|(a, b)| *a += b);
        }
        Self { d: self.d, times: self.times.clone(), positions }
    }

    pub(crate) fn positions_mut(&mut self) -> &mut [f64] {
        &mut self.positions
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (1..=self.d).map(|k| format!("x{k}")).collect();
        writeln!(w, "time,{}", header.join(","))?;
        for i in 0..self.len() {
            let row: Vec<String> = self.point(i).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{},{}", self.times[i], row.join(","))?;
        }
        Ok(())
    }
}

pub fn sample_path(config: &PathConfig, stream: u64) -> Result<BrownianPath> {
    config.validate()?;
    let mut rng = substream(config.seed, stream);
    Ok(sample_path_with(&mut rng, config.d, config.t, config.steps()))
}

pub fn sample_path_with<R: Rng + ?Sized>(rng: &mut R, d: usize, t: f64, steps: usize) -> BrownianPath {
    let dt = t / steps as f64;
    let sd = dt.sqrt();
    let times: Vec<f64> = (0..=steps).map(|i| i as f64 * dt).collect();
    let mut positions = vec![0.0; (steps + 1) * d];
    for i in 1..=steps {
        for k in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            positions[i * d + k] = positions[(i - 1) * d + k] + sd * z;
        }
    }
    BrownianPath { d, times, positions }
}

/// Insert `k` equally spaced points inside `[times[i], times[i+1]]`, drawn sequentially
/// from the Brownian bridge between the interval's endpoints.
pub fn refine_bridge<R: Rng + ?Sized>(
    path: &BrownianPath,
    interval_index: usize,
    k: usize,
    rng: &mut R,
) -> Result<BrownianPath> {
    if interval_index + 1 >= path.len() {
        return Err(Error::IndexOutOfRange { index: interval_index, len: path.len() - 1 });
    }
    if k == 0 {
        return Ok(path.clone());
    }
    let d = path.d;
    let (a, b) = (path.times[interval_index], path.times[interval_index + 1]);
    let xb = path.point(interval_index + 1).to_vec();
    let mut times = path.times[..=interval_index].to_vec();
    let mut positions = path.positions[..(interval_index + 1) * d].to_vec();
    let mut s_prev = a;
    let mut x_prev = path.point(interval_index).to_vec();
    for j in 1..=k {
        let s = a + (b - a) * j as f64 / (k + 1) as f64;
        let lam = (s - s_prev) / (b - s_prev);
        let sd = ((s - s_prev) * (b - s) / (b - s_prev)).sqrt();
        for c in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            x_prev[c] += lam * (xb[c] - x_prev[c]) + sd * z;
        }
        times.push(s);
        positions.extend_from_slice(&x_prev);
        s_prev = s;
    }
    times.extend_from_slice(&path.times[interval_index + 1..]);
    positions.extend_from_slice(&path.positions[(interval_index + 1) * d..]);
    Ok(BrownianPath { d, times, positions })
}

/// `s -> sqrt(c) W(s / c)` on horizon `c t`.
pub fn rescale_path(path: &BrownianPath, c: f64) -> Result<BrownianPath> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Domain(format!("scale factor must be positive, got {c}")));
    }
    let sc = c.sqrt();
    Ok(BrownianPath {
        d: path.d,
        times: path.times.iter().map(|s| s * c).collect(),
        positions: path.positions.iter().map(|x| x * sc).collect(),
    })
}

/// Overwrite samples `start+1 ..= start+n` of a uniformly spaced path.
///
/// If `start + n` is an interior index the block is redrawn from the bridge pinned at
/// both ends; otherwise it is a free Brownian continuation. Either way the Wiener
/// measure of the whole path is left invariant.
pub(crate) fn regenerate_block<R: Rng + ?Sized>(
    positions: &mut [f64],
    d: usize,
    dt: f64,
    start: usize,
    n: usize,
    pinned: bool,
    rng: &mut R,
) {
    let sd = dt.sqrt();
    let end = start + n;
    let mut walk = vec![0.0; n * d];
    let mut acc = vec![0.0; d];
    for i in 0..n {
        for k in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            acc[k] += sd * z;
            walk[i * d + k] = acc[k];
        }
    }
    for i in 0..n {
        let frac = (i + 1) as f64 / n as f64;
        for k in 0..d {
            let x0 = positions[start * d + k];
            let mut v = x0 + walk[i * d + k];
            if pinned {
                let target = positions[end * d + k] - x0;
                v -= frac * (walk[(n - 1) * d + k] - target);
            }
            if i + 1 < n || !pinned {
                positions[(start + i + 1) * d + k] = v;
            }
        }
    }
}
