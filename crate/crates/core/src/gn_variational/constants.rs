//! Closed forms tying the sharp Gagliardo-Nirenberg constant to the rate constants.

use serde::{Deserialize, Serialize};

use super::lattice::gn_exponent;
use crate::error::{Error, Result};
use crate::stats::golden_max;

pub(crate) fn check_admissible(d: usize, q: f64) -> Result<()> {
    if d == 0 || !(q > 1.0) || !q.is_finite() {
        return Err(Error::Domain(format!("need d >= 1 and q > 1, got d={d} q={q}")));
    }
    if d as f64 * (q - 1.0) >= 2.0 * q {
        return Err(Error::Domain(format!(
            "d(q-1) < 2q fails for d={d} q={q}: the problem is critical or supercritical"
        )));
    }
    Ok(())
}

fn check_gamma(d: usize, q: f64, gamma: f64) -> Result<()> {
    check_admissible(d, q)?;
    if !(gamma >= 0.0) || gamma * d as f64 * (q - 1.0) >= 2.0 * q {
        return Err(Error::Domain(format!(
            "tilt exponent must satisfy 0 <= gamma d(q-1) < 2q, got gamma={gamma}"
        )));
    }
    Ok(())
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::Domain(format!("kappa must be positive, got {kappa}")));
    }
    Ok(())
}

/// `inf { ||grad psi||^2 / 2 : ||psi||_2 = ||psi||_{2q} = 1 } = kappa^{-4q/(d(q-1))} / 2`.
pub fn theta_closed_form(d: usize, q: f64, kappa: f64) -> Result<f64> {
    check_admissible(d, q)?;
    check_kappa(kappa)?;
    Ok(0.5 * kappa.powf(-2.0 / gn_exponent(d, q)))
}

/// Tilted exponent `a' = gamma d (q-1) / (2q)`.
pub fn tilted_exponent(d: usize, q: f64, gamma: f64) -> f64 {
    gamma * gn_exponent(d, q)
}

/// Maximizer `y*` of `kappa^{2 gamma} y^{a'} - y/2`; the squared gradient norm of the
/// unit-mass tilted optimizer.
pub fn tilted_grad_sq(d: usize, q: f64, gamma: f64, kappa: f64) -> Result<f64> {
    check_gamma(d, q, gamma)?;
    check_kappa(kappa)?;
    let ap = tilted_exponent(d, q, gamma);
    Ok((2.0 * ap * kappa.powf(2.0 * gamma)).powf(1.0 / (1.0 - ap)))
}

/// `rho = (1 - a') (2a')^{a'/(1-a')} kappa^{2 gamma/(1-a')}`, which equals
/// `sup_y { kappa^{2 gamma} y^{a'} - y/2 }`. Returns 1 at `gamma = 0`.
pub fn rho_closed_form(d: usize, q: f64, gamma: f64, kappa: f64) -> Result<f64> {
    check_gamma(d, q, gamma)?;
    check_kappa(kappa)?;
    let ap = tilted_exponent(d, q, gamma);
    Ok((1.0 - ap) * (2.0 * ap).powf(ap / (1.0 - ap)) * kappa.powf(2.0 * gamma / (1.0 - ap)))
}

/// `sup_{y >= 0} { kappa^{2 gamma} y^{a'} - y/2 }` by golden-section search.
pub fn rho_scalar_search(d: usize, q: f64, gamma: f64, kappa: f64) -> Result<f64> {
    check_gamma(d, q, gamma)?;
    check_kappa(kappa)?;
    let ap = tilted_exponent(d, q, gamma);
    let k = kappa.powf(2.0 * gamma);
    let f = |y: f64| k * y.powf(ap) - 0.5 * y;
    if ap == 0.0 {
        return Ok(f(0.0));
    }
    let mut b = 1e-6;
    while f(2.0 * b) > f(b) {
        b *= 2.0;
    }
    let (_, v) = golden_max(f, 0.0, 4.0 * b, 1e-15);
    Ok(v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantSet {
    pub d: usize,
    pub q: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub theta: f64,
    pub rho: f64,
}

impl ConstantSet {
    pub fn from_kappa(d: usize, q: f64, gamma: f64, kappa: f64) -> Result<Self> {
        Ok(Self {
            d,
            q,
            gamma,
            kappa,
            theta: theta_closed_form(d, q, kappa)?,
            rho: rho_closed_form(d, q, gamma, kappa)?,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("constants serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unit_kappa_gives_one_half() {
        for (d, q) in [(1, 2.0), (1, 3.0), (2, 2.0), (3, 2.0), (2, 1.5)] {
            assert!((theta_closed_form(d, q, 1.0).unwrap() - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn theta_exponent_arithmetic() {
        // d=1, q=2: exponent -4q/(d(q-1)) = -8
        assert!((theta_closed_form(1, 2.0, 2.0).unwrap() - 1.0 / 512.0).abs() < 1e-15);
        // the sharp 1-d constant gives theta = 3/2
        let k = 3f64.powf(-0.125);
        assert!((theta_closed_form(1, 2.0, k).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn inadmissible_regimes_are_rejected() {
        assert!(theta_closed_form(3, 3.0, 1.0).is_err());
        assert!(theta_closed_form(4, 2.0, 1.0).is_err());
        assert!(rho_closed_form(1, 2.0, 4.0, 1.0).is_err());
        assert!(theta_closed_form(1, 2.0, 0.0).is_err());
    }

    #[test]
    fn rho_at_zero_tilt_is_one() {
        assert_eq!(rho_closed_form(1, 2.0, 0.0, 0.7).unwrap(), 1.0);
        assert!((rho_closed_form(1, 2.0, 1e-9, 0.7).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rho_is_not_monotone_in_gamma_at_unit_kappa() {
        // the (2a')^{a'/(1-a')} factor dips below one for small tilts
        let r: Vec<f64> = [0.0, 0.05, 1.0, 1.5]
            .iter()
            .map(|&g| rho_closed_form(1, 2.0, g, 1.0).unwrap())
            .collect();
        assert!(r.windows(2).all(|w| w[1] < w[0]));
        // large kappa: increasing away from the origin
        let big: Vec<f64> = [0.5, 1.0, 1.5]
            .iter()
            .map(|&g| rho_closed_form(1, 2.0, g, 3.0).unwrap())
            .collect();
        assert!(big.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn rho_one_dimensional_cubic() {
        let k = 3f64.powf(-0.125);
        let r = rho_closed_form(1, 2.0, 1.0, k).unwrap();
        assert!((r - 0.75 * (1.0f64 / 6.0).cbrt()).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn closed_form_matches_scalar_search(
            k in 0.2f64..3.0,
            gamma in 0.05f64..1.9,
            case in 0usize..3,
        ) {
            let (d, q) = [(1, 2.0), (1, 3.0), (2, 1.5)][case];
            prop_assume!(gamma * d as f64 * (q - 1.0) < 2.0 * q * 0.95);
            let a = rho_closed_form(d, q, gamma, k).unwrap();
            let b = rho_scalar_search(d, q, gamma, k).unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-300), "{} vs {}", a, b);
        }

        #[test]
        fn tilted_grad_sq_is_the_maximizer(k in 0.3f64..2.0, gamma in 0.1f64..1.8) {
            let y = tilted_grad_sq(1, 2.0, gamma, k).unwrap();
            let ap = tilted_exponent(1, 2.0, gamma);
            let f = |y: f64| k.powf(2.0 * gamma) * y.powf(ap) - 0.5 * y;
            prop_assert!((f(y) - rho_closed_form(1, 2.0, gamma, k).unwrap()).abs() < 1e-12 * f(y).abs().max(1.0));
            prop_assert!(f(y) >= f(y * 1.01) && f(y) >= f(y * 0.99));
        }
    }
}
