//! Cross-checks of the closed-form constants against the independent lattice oracles.
//!
//! The lattice has no scaling symmetry, so each oracle runs on the base grid stretched to
//! the width its optimizer is predicted to have. All three problems then see the same
//! number of nodes per profile width and share one discretization error.

use serde::{Deserialize, Serialize};

use super::constants::{rho_closed_form, rho_scalar_search, theta_closed_form, tilted_grad_sq};
use super::oracles::{rho_by_maximization, theta_by_minimization};
use super::solver::{constrained_grad_sq, solve_gn_optimizer};
use crate::error::{Error, Result};
use crate::grid::GridSpec;

const ORACLE_TOL: f64 = 1e-10;
const ORACLE_MAX_ITER: usize = 50_000;

/// Default lattice and tolerance for the extremal in dimension `d`.
pub fn standard_grid(d: usize) -> Result<(GridSpec, f64)> {
    let (h, half, tol) = match d {
        1 => (0.02, 14.0, 1e-10),
        2 => (0.05, 7.0, 1e-10),
        3 => (0.12, 6.0, 1e-9),
        _ => return Err(Error::UnsupportedDimension { op: "standard extremal grid", dim: d }),
    };
    Ok((GridSpec::centered(d, h, half)?, tol))
}

fn stretched(grid: &GridSpec, s: f64) -> Result<GridSpec> {
    let half = 0.5 * (grid.extents[0] - 1) as f64 * grid.h;
    GridSpec::centered(grid.d, grid.h * s, half * s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoCheck {
    pub gamma: f64,
    pub rho: f64,
    pub scalar: f64,
    pub scalar_abs_error: f64,
    pub grid: f64,
    pub grid_rel_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsCheck {
    pub d: usize,
    pub q: f64,
    pub kappa: f64,
    pub solver_iterations: usize,
    pub theta: f64,
    pub theta_oracle: f64,
    pub theta_rel_error: f64,
    pub rho: Vec<RhoCheck>,
}

/// Solves for `kappa` on `grid`, derives `Theta` and `rho(gamma)` in closed form and
/// compares them with the constrained minimization, the scalar search and the lattice sup.
pub fn constants_check(d: usize, q: f64, gammas: &[f64], grid: &GridSpec, tol: f64) -> Result<ConstantsCheck> {
    let sol = solve_gn_optimizer(d, q, grid, tol)?;
    let kappa = sol.ratio;
    let theta = theta_closed_form(d, q, kappa)?;
    let s = 1.0 / constrained_grad_sq(d, q, kappa).sqrt();
    let theta_oracle = theta_by_minimization(d, q, &stretched(grid, s)?, ORACLE_TOL, ORACLE_MAX_ITER)?.value;
    let rho = gammas
        .iter()
        .map(|&gamma| {
            let rho = rho_closed_form(d, q, gamma, kappa)?;
            let scalar = rho_scalar_search(d, q, gamma, kappa)?;
            let s = 1.0 / tilted_grad_sq(d, q, gamma, kappa)?.sqrt();
            let g = rho_by_maximization(d, q, gamma, &stretched(grid, s)?, ORACLE_TOL, ORACLE_MAX_ITER)?.value;
            Ok(RhoCheck {
                gamma,
                rho,
                scalar,
                scalar_abs_error: (rho - scalar).abs(),
                grid: g,
                grid_rel_error: (rho / g - 1.0).abs(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConstantsCheck {
        d,
        q,
        kappa,
        solver_iterations: sol.iterations,
        theta,
        theta_oracle,
        theta_rel_error: (theta / theta_oracle - 1.0).abs(),
        rho,
    })
}
