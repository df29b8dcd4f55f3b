#![allow(dead_code)]

use heisfowler::heis::{group_mul, CylPoint, HPoint};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Left-invariant flow p·exp(ε V) for V = X_j (imag = false) or Y_j.
fn flow(p: &HPoint, j: usize, imag: bool, eps: f64) -> HPoint {
    let mut z = vec![Complex64::new(0.0, 0.0); p.dim()];
    z[j] = if imag { Complex64::new(0.0, eps) } else { Complex64::new(eps, 0.0) };
    group_mul(p, &HPoint::new(z, 0.0)).unwrap()
}

/// 6th-order central second difference of ε ↦ g(ε) at 0.
fn d2(g: impl Fn(f64) -> f64, h: f64) -> f64 {
    let c = [-49.0 / 18.0, 1.5, -0.15, 1.0 / 90.0];
    let mut acc = c[0] * g(0.0);
    for k in 1..4 {
        let e = k as f64 * h;
        acc += c[k] * (g(e) + g(-e));
    }
    acc / (h * h)
}

fn d1(g: impl Fn(f64) -> f64, h: f64) -> f64 {
    let c = [0.75, -0.15, 1.0 / 60.0];
    let mut acc = 0.0;
    for k in 1..4 {
        let e = k as f64 * h;
        acc += c[k - 1] * (g(e) - g(-e));
    }
    acc / h
}

/// Σ_j X_j² f + Y_j² f by differencing along the group flows.
pub fn fd_sublap(f: &dyn Fn(&HPoint) -> f64, p: &HPoint, h: f64) -> f64 {
    let mut acc = 0.0;
    for j in 0..p.dim() {
        for imag in [false, true] {
            acc += d2(|e| f(&flow(p, j, imag, e)), h);
        }
    }
    acc
}

/// 2nd-order version, used for convergence-order checks.
pub fn fd_sublap_2(f: &dyn Fn(&HPoint) -> f64, p: &HPoint, h: f64) -> f64 {
    let mut acc = 0.0;
    for j in 0..p.dim() {
        for imag in [false, true] {
            acc += (f(&flow(p, j, imag, h)) - 2.0 * f(p) + f(&flow(p, j, imag, -h))) / (h * h);
        }
    }
    acc
}

/// Σ_j (X_j f)² + (Y_j f)².
pub fn fd_hgrad_sq(f: &dyn Fn(&HPoint) -> f64, p: &HPoint, h: f64) -> f64 {
    let mut acc = 0.0;
    for j in 0..p.dim() {
        for imag in [false, true] {
            let d = d1(|e| f(&flow(p, j, imag, e)), h);
            acc += d * d;
        }
    }
    acc
}

/// A point of H^n with |z| = r spread over the coordinates with random phases.
pub fn lift(c: CylPoint, n: usize, r: &mut ChaCha8Rng) -> HPoint {
    let mut parts: Vec<f64> = (0..n).map(|_| r.random::<f64>() + 0.1).collect();
    let norm = parts.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in parts.iter_mut() {
        *x *= c.r / norm;
    }
    let z = parts
        .iter()
        .map(|&m| Complex64::from_polar(m, r.random::<f64>() * std::f64::consts::TAU))
        .collect();
    HPoint::new(z, c.t)
}

pub fn random_cyl(r: &mut ChaCha8Rng, rmax: f64, tmax: f64) -> CylPoint {
    CylPoint::new(0.05 + r.random::<f64>() * rmax, (2.0 * r.random::<f64>() - 1.0) * tmax)
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
