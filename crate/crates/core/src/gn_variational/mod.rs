//! Gagliardo-Nirenberg extremals, the constants derived from them, and the rate
//! functionals they minimize.

mod check;
mod constants;
mod lattice;
mod oracles;
mod rates;
mod solver;

pub use check::{constants_check, standard_grid, ConstantsCheck, RhoCheck};
pub(crate) use constants::check_admissible;
pub use constants::{
    rho_closed_form, rho_scalar_search, theta_closed_form, tilted_exponent, tilted_grad_sq,
    ConstantSet,
};
pub use lattice::gn_exponent;
pub use oracles::{rho_by_maximization, theta_by_minimization, OracleResult};
pub use rates::{
    conditional_rate, constraint_functional, gibbs_rate, rate_functional, rate_functional_checked,
    sqrt_density_energy, IntersectionMode, RateValue, BOUNDARY_MASS_FLAG, CONSTRAINT_SLACK,
    INFINITE_ENERGY,
};
pub use solver::{
    constrained_grad_sq, solve_gn_at_unit_norms, solve_gn_optimizer, solve_gn_with, GNSolution,
    GnOptions,
};

use crate::error::Result;
use crate::grid::{GridField, GridSpec};
use crate::measures::{MeasureCollection, MeasureTuple};

/// Unit-mass maximizer of `||psi||_{2q}^{2 gamma} - ||grad psi||^2 / 2`, obtained from a
/// converged extremal by one vertical and one horizontal scaling: the output has
/// `||psi||_2 = 1` and `||grad psi||_2^2 = tilted_grad_sq(kappa)` with `kappa` the
/// base profile's ratio.
pub fn tilted_optimizer(d: usize, q: f64, gamma: f64, base: &GNSolution) -> Result<GNSolution> {
    let y = tilted_grad_sq(d, q, gamma, base.ratio)?;
    rescale_to(base, 1.0, y)
}

/// Rescale an extremal to prescribed `||psi||_2^2 = m` and `||grad psi||_2^2 = g`.
pub fn rescale_to(base: &GNSolution, m: f64, g: f64) -> Result<GNSolution> {
    let m0 = base.l2_norm.powi(2);
    let g0 = base.grad_l2_norm.powi(2);
    let d = base.d as f64;
    // a psi(b x): mass a^2 b^{-d} m0, energy a^2 b^{2-d} g0
    let b = (g * m0 / (m * g0)).sqrt();
    let a = (m * b.powf(d) / m0).sqrt();
    base.rescaled(a, b)
}

/// The extremal rescaled to unit `L2` and unit `L2q` norms: the minimizer of the
/// constrained problem whose value is `Theta`.
pub fn unit_norm_minimizer(base: &GNSolution) -> Result<GNSolution> {
    let g = constrained_grad_sq(base.d, base.q, base.ratio);
    rescale_to(base, 1.0, g)
}

/// Singleton collection whose density is `psi^2`.
pub fn collection_from_profile(sol: &GNSolution) -> Result<MeasureCollection> {
    MeasureCollection::singleton(MeasureTuple::from_fields(&[sol.density()])?)
}

/// Density `psi^2` of a profile moved onto another grid.
pub fn density_on(sol: &GNSolution, spec: &GridSpec) -> GridField {
    sol.density().shifted_onto(&vec![0.0; spec.d], spec)
}
