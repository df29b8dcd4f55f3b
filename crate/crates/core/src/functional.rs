//! J_T(u) = ½∫|∇_H u|² - (1/2*)∫|u|^{2*}, its variations, the X_T dual
//! norm of the gradient and the Hardy-type norm.
//!
//! Every quantity is computed from the same discrete energy, so the first
//! and second variations are its exact derivatives.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::numerics::{dot, pairwise_sum};
use crate::quadrature::GridFunction;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub energy: f64,
    pub grad_dual_norm: f64,
    pub hardy_norm: f64,
    pub lq_norm: f64,
}

fn mass_sum(u: &GridFunction, f: impl Fn(f64) -> f64) -> f64 {
    let nphi = u.grid.nphi();
    let mw = u.grid.mass_weights();
    let terms: Vec<f64> = u.values.iter().enumerate().map(|(k, &w)| mw[k % nphi] * f(w)).collect();
    pairwise_sum(&terms)
}

pub fn lq_integral(u: &GridFunction) -> f64 {
    let p = u.grid.params.p_crit;
    mass_sum(u, |w| w.abs().powf(p))
}

pub fn energy(u: &GridFunction) -> f64 {
    let p = u.grid.params.p_crit;
    let g = u.grid.gram_apply(&u.values);
    0.5 * dot(&u.values, &g) - lq_integral(u) / p
}

/// Coefficient vector of dJ_T(u): component k is dJ_T(u)[e_k].
pub fn gradient(u: &GridFunction) -> Vec<f64> {
    let p = u.grid.params.p_crit;
    let nphi = u.grid.nphi();
    let mw = u.grid.mass_weights();
    let mut g = u.grid.gram_apply(&u.values);
    for (k, gk) in g.iter_mut().enumerate() {
        let w = u.values[k];
        *gk -= mw[k % nphi] * w.abs().powf(p - 2.0) * w;
    }
    g
}

pub fn first_variation(u: &GridFunction, phi: &GridFunction) -> Result<f64> {
    u.check_same(phi)?;
    Ok(dot(&phi.values, &gradient(u)))
}

/// sqrt(gᵀ G⁻¹ g): the X_T norm of the Riesz representative of dJ_T(u).
pub fn dual_norm(u: &GridFunction, g: &[f64]) -> f64 {
    let h = u.grid.gram_solve(g);
    dot(g, &h).max(0.0).sqrt()
}

pub fn grad_dual_norm(u: &GridFunction) -> f64 {
    dual_norm(u, &gradient(u))
}

/// Diagonal (2*-1)|u|^{2*-2} times the mass weights: H = G - diag(this).
pub fn potential_diag(u: &GridFunction) -> Vec<f64> {
    let p = u.grid.params.p_crit;
    let nphi = u.grid.nphi();
    let mw = u.grid.mass_weights();
    u.values
        .iter()
        .enumerate()
        .map(|(k, &w)| (p - 1.0) * mw[k % nphi] * w.abs().powf(p - 2.0))
        .collect()
}

pub fn second_variation(u: &GridFunction, phi: &GridFunction, psi: &GridFunction) -> Result<f64> {
    u.check_same(phi)?;
    u.check_same(psi)?;
    let gpsi = u.grid.gram_apply(&psi.values);
    let d = potential_diag(u);
    let pot: f64 = phi.values.iter().zip(&psi.values).zip(&d).map(|((a, b), c)| a * b * c).sum();
    Ok(dot(&phi.values, &gpsi) - pot)
}

/// sqrt(∫|∇_H u|² + |u/|x||²).
pub fn hardy_norm(u: &GridFunction) -> f64 {
    let g = u.grid.gram_apply(&u.values);
    (dot(&u.values, &g) + mass_sum(u, |w| w * w)).max(0.0).sqrt()
}

pub fn lq_norm(u: &GridFunction) -> f64 {
    lq_integral(u).powf(1.0 / u.grid.params.p_crit)
}

pub fn report(u: &GridFunction) -> FunctionalReport {
    FunctionalReport {
        energy: energy(u),
        grad_dual_norm: grad_dual_norm(u),
        hardy_norm: hardy_norm(u),
        lq_norm: lq_norm(u),
    }
}
