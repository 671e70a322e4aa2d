//! Rate functionals on finite measure collections.

use serde::{Deserialize, Serialize};

use crate::grid::GridSpec;
use crate::measures::MeasureCollection;

/// Discrete Dirichlet energy above which a density is declared outside `H^1`.
pub const INFINITE_ENERGY: f64 = 1e6;
/// Fraction of mass on the outermost lattice layer that flags a truncated density.
pub const BOUNDARY_MASS_FLAG: f64 = 1e-8;
/// Slack on the norm constraints, absorbing lattice round-off at the boundary.
pub const CONSTRAINT_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntersectionMode {
    #[serde(rename = "self")]
    SelfIntersection,
    Mutual,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateValue {
    pub value: f64,
    /// Some density carries more than [`BOUNDARY_MASS_FLAG`] of its mass on the grid edge.
    pub boundary_flagged: bool,
}

/// `h^d sum |grad_c sqrt(rho)|^2` with central differences and mirrored ghost nodes.
pub fn sqrt_density_energy(spec: &GridSpec, density: &[f64]) -> f64 {
    let u: Vec<f64> = density.iter().map(|v| v.sqrt()).collect();
    let strides = spec.strides();
    let inv = 1.0 / (2.0 * spec.h);
    let mut acc = 0.0;
    for axis in 0..spec.d {
        let n = spec.extents[axis];
        if n < 3 {
            continue;
        }
        let st = strides[axis];
        for (flat, _) in u.iter().enumerate() {
            let i = (flat / st) % n;
            if i == 0 || i + 1 == n {
                continue;
            }
            let g = (u[flat + st] - u[flat - st]) * inv;
            acc += g * g;
        }
    }
    acc * spec.cell_volume()
}

fn boundary_fraction(spec: &GridSpec, density: &[f64]) -> f64 {
    let total: f64 = density.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let edge: f64 = density
        .iter()
        .enumerate()
        .filter(|(i, _)| {
            spec.multi_index(*i)
                .iter()
                .zip(&spec.extents)
                .any(|(&k, &n)| k == 0 || k + 1 == n)
        })
        .map(|(_, v)| v)
        .sum();
    edge / total
}

/// `I(xi) = 1/2 sum_{i,j} ||grad sqrt(rho_i^j)||_2^2`, with the boundary-mass flag.
pub fn rate_functional_checked(xi: &MeasureCollection) -> RateValue {
    let mut value = 0.0;
    let mut flagged = false;
    for t in &xi.tuples {
        for c in &t.components {
            let e = sqrt_density_energy(&t.spec, c);
            if e > INFINITE_ENERGY {
                value = f64::INFINITY;
            }
            value += 0.5 * e;
            flagged |= boundary_fraction(&t.spec, c) > BOUNDARY_MASS_FLAG;
        }
    }
    RateValue { value, boundary_flagged: flagged }
}

pub fn rate_functional(xi: &MeasureCollection) -> f64 {
    rate_functional_checked(xi).value
}

/// Self mode: `sum_{i,j} ||psi_i^j||_{2q}^{2q}`. Mutual mode: `sum_i ||prod_j psi_i^j||_2^2`.
pub fn constraint_functional(xi: &MeasureCollection, q: f64, mode: IntersectionMode) -> f64 {
    let mut s = 0.0;
    for t in &xi.tuples {
        let vol = t.spec.cell_volume();
        match mode {
            IntersectionMode::SelfIntersection => {
                for c in &t.components {
                    s += crate::local_time::power_sum_slice(c, q) * vol;
                }
            }
            IntersectionMode::Mutual => {
                let n = t.spec.len();
                s += (0..n)
                    .map(|i| t.components.iter().map(|c| c[i]).product::<f64>())
                    .sum::<f64>()
                    * vol;
            }
        }
    }
    s
}

fn multiplicity(xi: &MeasureCollection, mode: IntersectionMode) -> f64 {
    match mode {
        IntersectionMode::SelfIntersection => 1.0,
        IntersectionMode::Mutual => xi.p as f64,
    }
}

/// `I(xi) - m Theta` on the constraint set `{S(xi) >= 1}`, `+inf` elsewhere; `m = 1` in
/// self mode and `p` in mutual mode.
pub fn conditional_rate(xi: &MeasureCollection, q: f64, theta: f64, mode: IntersectionMode) -> f64 {
    let i = rate_functional(xi);
    if !i.is_finite() || constraint_functional(xi, q, mode) < 1.0 - CONSTRAINT_SLACK {
        return f64::INFINITY;
    }
    i - multiplicity(xi, mode) * theta
}

/// `I(xi) - m S(xi)^{gamma/q} + m rho`, `m` as in [`conditional_rate`]; in mutual mode
/// `q` plays the role of `p`.
pub fn gibbs_rate(xi: &MeasureCollection, q: f64, gamma: f64, rho: f64, mode: IntersectionMode) -> f64 {
    let i = rate_functional(xi);
    if !i.is_finite() {
        return f64::INFINITY;
    }
    let m = multiplicity(xi, mode);
    i - m * constraint_functional(xi, q, mode).powf(gamma / q) + m * rho
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridField, GridSpec};
    use crate::measures::{MeasureCollection, MeasureTuple};

    fn gaussian_tuple(spec: &GridSpec, var: f64, mass: f64, center: f64) -> MeasureTuple {
        let f = GridField::from_fn(spec.clone(), |x| {
            mass * (-(x[0] - center).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
        })
        .unwrap();
        MeasureTuple::from_fields(&[f]).unwrap()
    }

    #[test]
    fn empty_collection_has_zero_rate() {
        let xi = MeasureCollection::empty(1, 1);
        assert_eq!(rate_functional(&xi), 0.0);
        assert_eq!(gibbs_rate(&xi, 2.0, 1.0, 0.41, IntersectionMode::SelfIntersection), 0.41);
    }

    #[test]
    fn standard_gaussian_rate_is_one_eighth() {
        let spec = GridSpec::centered(1, 0.01, 12.0).unwrap();
        let xi = MeasureCollection::singleton(gaussian_tuple(&spec, 1.0, 1.0, 0.0)).unwrap();
        let r = rate_functional_checked(&xi);
        assert!((r.value - 0.125).abs() < 1e-3, "{}", r.value);
        assert!(!r.boundary_flagged);
    }

    #[test]
    fn rate_is_additive() {
        let spec = GridSpec::centered(1, 0.02, 10.0).unwrap();
        let a = gaussian_tuple(&spec, 0.7, 0.4, -2.0);
        let b = gaussian_tuple(&spec, 1.9, 0.5, 1.0);
        let both = MeasureCollection::new(1, 1, vec![a.clone(), b.clone()], true).unwrap();
        let ra = rate_functional(&MeasureCollection::singleton(a).unwrap());
        let rb = rate_functional(&MeasureCollection::singleton(b).unwrap());
        assert_eq!(rate_functional(&both), ra + rb);
    }

    #[test]
    fn spikes_on_fine_grids_are_infinite() {
        let spec = GridSpec::centered(1, 1e-4, 0.01).unwrap();
        let t = MeasureTuple::atoms(spec, 50, &[1.0]).unwrap();
        assert!(rate_functional(&MeasureCollection::singleton(t).unwrap()).is_infinite());
    }

    #[test]
    fn boundary_mass_is_flagged() {
        let spec = GridSpec::centered(1, 0.05, 2.0).unwrap();
        let xi = MeasureCollection::singleton(gaussian_tuple(&spec, 1.0, 0.9, 0.0)).unwrap();
        assert!(rate_functional_checked(&xi).boundary_flagged);
    }

    #[test]
    fn infeasible_constraint_gives_infinity() {
        let spec = GridSpec::centered(1, 0.02, 10.0).unwrap();
        // a wide Gaussian has tiny ||psi||_4^4
        let xi = MeasureCollection::singleton(gaussian_tuple(&spec, 2.0, 1.0, 0.0)).unwrap();
        assert!(constraint_functional(&xi, 2.0, IntersectionMode::SelfIntersection) < 0.5);
        assert!(conditional_rate(&xi, 2.0, 1.5, IntersectionMode::SelfIntersection).is_infinite());
    }
}
