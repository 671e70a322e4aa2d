//! Direct lattice solutions of the two constrained problems whose values the closed
//! forms predict. They share no code path with the ratio solver beyond the lattice
//! operators.

use serde::{Deserialize, Serialize};

use super::constants::check_admissible;
use super::lattice::{dirichlet_energy, dot, mass2, neg_laplacian, odd_power, power2q, Preconditioner};
use crate::error::{Error, Result};
use crate::grid::GridSpec;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleResult {
    pub value: f64,
    pub profile: Vec<f64>,
    pub iterations: usize,
    pub trace: Vec<f64>,
}

/// Initial guess: a centered Gaussian whose width is a fixed fraction of the box, so a
/// stretched box stretches the starting point with it.
fn gaussian(grid: &GridSpec) -> Vec<f64> {
    let w = (grid.extents[0] - 1) as f64 * grid.h / 12.0;
    (0..grid.len())
        .map(|i| {
            let r2: f64 = grid.node(i).iter().map(|x| x * x).sum();
            (-0.5 * r2 / (w * w)).exp()
        })
        .collect()
}

/// Replace `phi` by `a |phi|^s` with unit `L2` and unit `L2q` norms. `s` solves
/// `ln S(2qs) - q ln S(2s) = (q-1) ln h^d`, `S(x) = sum |phi|^x`; the left side is
/// increasing in `s`.
fn retract_power(grid: &GridSpec, phi: &mut [f64], q: f64) -> bool {
    let vol = grid.cell_volume();
    let logs: Vec<f64> = phi.iter().map(|v| if *v != 0.0 { v.abs().ln() } else { f64::NEG_INFINITY }).collect();
    let lmax = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !lmax.is_finite() {
        return false;
    }
    // log S(x) with the max factored out
    let log_s = |x: f64| -> (f64, f64) {
        let mut s = 0.0;
        let mut sl = 0.0;
        for &l in &logs {
            if l.is_finite() {
                let e = (x * (l - lmax)).exp();
                s += e;
                sl += e * l;
            }
        }
        (x * lmax + s.ln(), sl / s)
    };
    let target = (q - 1.0) * vol.ln();
    let phi_fn = |s: f64| -> (f64, f64) {
        let (a, ea) = log_s(2.0 * q * s);
        let (b, eb) = log_s(2.0 * s);
        (a - q * b - target, 2.0 * q * (ea - eb))
    };
    // safeguarded Newton from s = 1 (a feasible input is a fixed point); the bracket
    // grows by doubling or halving until the root is enclosed
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut s = 1.0f64;
    let mut converged = false;
    for _ in 0..200 {
        let (f, df) = phi_fn(s);
        if !f.is_finite() {
            return false;
        }
        if f.abs() < 1e-15 {
            converged = true;
            break;
        }
        if f > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        let newton = s - f / df;
        s = if df > 0.0 && newton > lo && newton < hi {
            newton
        } else if hi.is_infinite() {
            2.0 * s
        } else if lo == 0.0 {
            0.5 * s
        } else {
            0.5 * (lo + hi)
        };
        if hi.is_finite() && hi - lo < 1e-15 * s {
            converged = true;
            break;
        }
        if !(1e-12..=1e3).contains(&s) {
            return false;
        }
    }
    if !converged {
        return false;
    }
    let (l2s, _) = log_s(2.0 * s);
    let log_a = -0.5 * (l2s + vol.ln());
    for (v, &l) in phi.iter_mut().zip(&logs) {
        *v = if l.is_finite() { (log_a + s * l).exp() } else { 0.0 };
    }
    true
}

/// `inf { ||grad psi||^2 / 2 : ||psi||_2 = 1, ||psi||_{2q} = 1 }` on the lattice,
/// by preconditioned Riemannian descent with a power-law retraction.
pub fn theta_by_minimization(d: usize, q: f64, grid: &GridSpec, tol: f64, max_iter: usize) -> Result<OracleResult> {
    check_admissible(d, q)?;
    if grid.d != d {
        return Err(Error::Shape("grid dimension differs from problem dimension".into()));
    }
    let n = grid.len();
    let vol = grid.cell_volume();
    let mut psi = gaussian(grid);
    if !retract_power(grid, &mut psi, q) {
        return Err(Error::Feasibility("initial profile cannot meet both norm constraints".into()));
    }
    let mut g = dirichlet_energy(grid, &psi);
    let pc = Preconditioner::new(grid, 0.3 * mass2(grid, &psi) / g);
    let (mut lp, mut odd) = (vec![0.0; n], vec![0.0; n]);
    let (mut bl, mut b1, mut b2) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut dir = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut trace = vec![0.5 * g];
    let mut tau = f64::NAN;
    let mut calm = 0;
    for it in 1..=max_iter {
        neg_laplacian(grid, &psi, &mut lp);
        odd_power(&psi, q, &mut odd);
        pc.apply(&lp, &mut bl);
        pc.apply(&psi, &mut b1);
        pc.apply(&odd, &mut b2);
        let a11 = dot(&psi, &b1);
        let a12 = dot(&psi, &b2);
        let a22 = dot(&odd, &b2);
        let r1 = -dot(&psi, &bl);
        let r2 = -dot(&odd, &bl);
        let det = a11 * a22 - a12 * a12;
        let c1 = (r1 * a22 - r2 * a12) / det;
        let c2 = (a11 * r2 - a12 * r1) / det;
        for i in 0..n {
            dir[i] = -bl[i] - c1 * b1[i] - c2 * b2[i];
        }
        let slope = 2.0 * vol * dot(&lp, &dir);
        if slope >= 0.0 {
            break;
        }
        if tau.is_nan() {
            tau = 0.05 * (dot(&psi, &psi) / dot(&dir, &dir).max(1e-300)).sqrt();
        } else {
            tau *= 2.0;
        }
        let mut accepted = false;
        let mut gt = g;
        for _ in 0..60 {
            for i in 0..n {
                trial[i] = psi[i] + tau * dir[i];
            }
            if retract_power(grid, &mut trial, q) {
                gt = dirichlet_energy(grid, &trial);
                if gt <= g + 1e-4 * tau * slope {
                    accepted = true;
                    break;
                }
            }
            tau *= 0.5;
        }
        if !accepted {
            break;
        }
        let step2: f64 = psi.iter().zip(&trial).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() * vol;
        std::mem::swap(&mut psi, &mut trial);
        let rel = (g - gt).abs() / g;
        g = gt;
        trace.push(0.5 * g);
        if rel < tol && step2.sqrt() < tol.sqrt() * 1e-2 {
            calm += 1;
        } else {
            calm = 0;
        }
        if calm >= 3 {
            return Ok(OracleResult { value: 0.5 * g, profile: psi, iterations: it, trace });
        }
    }
    let iterations = trace.len() - 1;
    if iterations >= max_iter {
        return Err(Error::NonConvergence {
            iterations,
            last: trace.last().copied(),
            trace: trace[trace.len().saturating_sub(50)..].to_vec(),
        });
    }
    Ok(OracleResult { value: 0.5 * g, profile: psi, iterations, trace })
}

/// `sup { ||psi||_{2q}^{2 gamma} - ||grad psi||^2 / 2 : ||psi||_2 = 1 }` on the lattice,
/// by preconditioned projected ascent with `L2` renormalization.
pub fn rho_by_maximization(
    d: usize,
    q: f64,
    gamma: f64,
    grid: &GridSpec,
    tol: f64,
    max_iter: usize,
) -> Result<OracleResult> {
    check_admissible(d, q)?;
    if gamma * d as f64 * (q - 1.0) >= 2.0 * q || !(gamma > 0.0) {
        return Err(Error::Domain(format!("tilt exponent {gamma} outside the admissible range")));
    }
    let n = grid.len();
    let vol = grid.cell_volume();
    let objective = |v: &[f64]| power2q(grid, v, q).powf(gamma / q) - 0.5 * dirichlet_energy(grid, v);
    let normalize = |v: &mut [f64]| {
        let m = mass2(grid, v).sqrt();
        v.iter_mut().for_each(|x| *x /= m);
    };
    let mut psi = gaussian(grid);
    normalize(&mut psi);
    let pc = Preconditioner::new(grid, 1.0 / dirichlet_energy(grid, &psi));
    let mut j = objective(&psi);
    let (mut lp, mut odd, mut grad) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let (mut bg, mut bp) = (vec![0.0; n], vec![0.0; n]);
    let mut dir = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut trace = vec![j];
    let mut tau = f64::NAN;
    let mut calm = 0;
    for it in 1..=max_iter {
        let p = power2q(grid, &psi, q);
        neg_laplacian(grid, &psi, &mut lp);
        odd_power(&psi, q, &mut odd);
        let c = 2.0 * gamma * p.powf(gamma / q - 1.0);
        for i in 0..n {
            grad[i] = c * odd[i] - lp[i];
        }
        pc.apply(&grad, &mut bg);
        pc.apply(&psi, &mut bp);
        let lam = dot(&psi, &bg) / dot(&psi, &bp);
        for i in 0..n {
            dir[i] = bg[i] - lam * bp[i];
        }
        let slope = vol * dot(&grad, &dir);
        if slope <= 0.0 {
            break;
        }
        if tau.is_nan() {
            tau = 0.05 * (dot(&psi, &psi) / dot(&dir, &dir).max(1e-300)).sqrt();
        } else {
            tau *= 2.0;
        }
        let mut accepted = false;
        let mut jt = j;
        for _ in 0..60 {
            for i in 0..n {
                trial[i] = psi[i] + tau * dir[i];
            }
            normalize(&mut trial);
            jt = objective(&trial);
            if jt >= j + 1e-4 * tau * slope {
                accepted = true;
                break;
            }
            tau *= 0.5;
        }
        if !accepted {
            break;
        }
        let step2: f64 = psi.iter().zip(&trial).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() * vol;
        std::mem::swap(&mut psi, &mut trial);
        let rel = (jt - j).abs() / j.abs().max(1e-300);
        j = jt;
        trace.push(j);
        if rel < tol && step2.sqrt() < tol.sqrt() * 1e-2 {
            calm += 1;
        } else {
            calm = 0;
        }
        if calm >= 3 {
            return Ok(OracleResult { value: j, profile: psi, iterations: it, trace });
        }
    }
    let iterations = trace.len() - 1;
    if iterations >= max_iter {
        return Err(Error::NonConvergence {
            iterations,
            last: trace.last().copied(),
            trace: trace[trace.len().saturating_sub(50)..].to_vec(),
        });
    }
    Ok(OracleResult { value: j, profile: psi, iterations, trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_retraction_meets_both_constraints() {
        let g = GridSpec::centered(1, 0.05, 8.0).unwrap();
        let mut v = gaussian(&g);
        assert!(retract_power(&g, &mut v, 2.0));
        assert!((mass2(&g, &v) - 1.0).abs() < 1e-12);
        assert!((power2q(&g, &v, 2.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn theta_one_dimensional_cubic() {
        let g = GridSpec::centered(1, 0.005, 6.0).unwrap();
        let r = theta_by_minimization(1, 2.0, &g, 1e-11, 20_000).unwrap();
        assert!((r.value / 1.5 - 1.0).abs() < 1e-4, "{}", r.value);
    }
}
