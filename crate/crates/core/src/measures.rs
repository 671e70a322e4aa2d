//! Finite collections of grid measures taken up to diagonal shift.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridField, GridSpec};

/// `p` densities on one grid. A diagonal shift moves the grid corner, never the values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureTuple {
    pub spec: GridSpec,
    pub components: Vec<Vec<f64>>,
}

impl MeasureTuple {
    pub fn new(spec: GridSpec, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Shape("a tuple needs at least one component".into()));
        }
        for c in &components {
            if c.len() != spec.len() {
                return Err(Error::Shape(format!(
                    "component has {} values, grid has {} nodes",
                    c.len(),
                    spec.len()
                )));
            }
            if c.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::Domain("densities must be finite and >= 0".into()));
            }
        }
        Ok(Self { spec, components })
    }

    pub fn from_fields(fields: &[GridField]) -> Result<Self> {
        let spec = fields
            .first()
            .ok_or_else(|| Error::Shape("a tuple needs at least one component".into()))?
            .spec
            .clone();
        for f in fields {
            crate::grid::same_grid(&spec, &f.spec)?;
        }
        Self::new(spec, fields.iter().map(|f| f.values.clone()).collect())
    }

    /// Point masses `masses[j]` at the grid node `node` of every component.
    pub fn atoms(spec: GridSpec, node: usize, masses: &[f64]) -> Result<Self> {
        let vol = spec.cell_volume();
        let comps = masses
            .iter()
            .map(|&m| {
                let mut v = vec![0.0; spec.len()];
                v[node] = m / vol;
                v
            })
            .collect();
        Self::new(spec, comps)
    }

    pub fn p(&self) -> usize {
        self.components.len()
    }

    pub fn mass(&self, j: usize) -> f64 {
        self.components[j].iter().sum::<f64>() * self.spec.cell_volume()
    }

    pub fn masses(&self) -> Vec<f64> {
        (0..self.p()).map(|j| self.mass(j)).collect()
    }

    pub fn field(&self, j: usize) -> GridField {
        GridField { spec: self.spec.clone(), values: self.components[j].clone() }
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|c| c.iter().all(|&v| v == 0.0))
    }

    /// The same tuple translated by the lattice vector `offset * h`.
    pub fn shifted(&self, offset: &[i64]) -> Self {
        let mut spec = self.spec.clone();
        for (k, o) in offset.iter().enumerate() {
            spec.lower[k] += *o as f64 * spec.h;
        }
        Self { spec, components: self.components.clone() }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            spec: self.spec.clone(),
            components: self
                .components
                .iter()
                .map(|v| v.iter().map(|x| x * c).collect())
                .collect(),
        }
    }
}

/// A finite element of the shift-quotient space: a multiset of tuples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureCollection {
    pub p: usize,
    pub d: usize,
    pub tuples: Vec<MeasureTuple>,
    /// Enforce `sum_i mass(alpha_i^j) <= 1` per component.
    pub sub_probability: bool,
}

impl MeasureCollection {
    pub fn new(p: usize, d: usize, tuples: Vec<MeasureTuple>, sub_probability: bool) -> Result<Self> {
        let c = Self { p, d, tuples, sub_probability };
        c.validate()?;
        Ok(c)
    }

    pub fn empty(p: usize, d: usize) -> Self {
        Self { p, d, tuples: Vec::new(), sub_probability: true }
    }

    pub fn singleton(t: MeasureTuple) -> Result<Self> {
        let (p, d) = (t.p(), t.spec.d);
        Self::new(p, d, vec![t], true)
    }

    pub fn validate(&self) -> Result<()> {
        for t in &self.tuples {
            if t.p() != self.p || t.spec.d != self.d {
                return Err(Error::Shape(format!(
                    "tuple of arity {} in dimension {} inside a (p={}, d={}) collection",
                    t.p(),
                    t.spec.d,
                    self.p,
                    self.d
                )));
            }
            if t.is_zero() {
                return Err(Error::Domain("all-zero tuples must be erased".into()));
            }
        }
        if self.sub_probability {
            for (j, m) in self.total_masses().iter().enumerate() {
                if *m > 1.0 + 1e-9 {
                    return Err(Error::Domain(format!("component {j} carries mass {m} > 1")));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    /// `sum_i mass(alpha_i^j)` for each `j`.
    pub fn total_masses(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.p];
        for t in &self.tuples {
            for (j, v) in t.masses().into_iter().enumerate() {
                m[j] += v;
            }
        }
        m
    }

    /// Per-tuple diagonal shift of the representation.
    pub fn shifted(&self, offsets: &[Vec<i64>]) -> Self {
        Self {
            p: self.p,
            d: self.d,
            tuples: self.tuples.iter().zip(offsets).map(|(t, o)| t.shifted(o)).collect(),
            sub_probability: self.sub_probability,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("collections serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> GridSpec {
        GridSpec::centered(1, 0.1, 1.0).unwrap()
    }

    #[test]
    fn atoms_carry_their_mass() {
        let t = MeasureTuple::atoms(spec(), 10, &[0.3, 0.7]).unwrap();
        assert!((t.mass(0) - 0.3).abs() < 1e-12 && (t.mass(1) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn sub_probability_is_enforced() {
        let a = MeasureTuple::atoms(spec(), 3, &[0.6]).unwrap();
        let b = MeasureTuple::atoms(spec(), 7, &[0.6]).unwrap();
        assert!(MeasureCollection::new(1, 1, vec![a.clone(), b.clone()], true).is_err());
        assert!(MeasureCollection::new(1, 1, vec![a, b], false).is_ok());
    }

    #[test]
    fn zero_tuples_are_rejected() {
        let z = MeasureTuple::new(spec(), vec![vec![0.0; 21]]).unwrap();
        assert!(MeasureCollection::new(1, 1, vec![z], true).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let a = MeasureTuple::atoms(spec(), 3, &[0.5, 0.25]).unwrap();
        let c = MeasureCollection::singleton(a).unwrap();
        assert_eq!(MeasureCollection::from_json(&c.to_json()).unwrap(), c);
    }
}
