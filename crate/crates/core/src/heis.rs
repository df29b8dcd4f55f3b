//! Heisenberg group algebra, dilations, the Korányi norm and the
//! cylindrically reduced first and second order operators.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupParams {
    pub n: usize,
    pub q: usize,
    pub p_crit: f64,
    pub sphere_area: f64,
}

impl GroupParams {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("n must be positive".into()));
        }
        let q = 2 * n + 2;
        let p_crit = 2.0 * q as f64 / (q as f64 - 2.0);
        // |S^{2n-1}| = 2 pi^n / (n-1)!
        let fact: f64 = (1..n).map(|k| k as f64).product();
        let sphere_area = 2.0 * PI.powi(n as i32) / fact;
        Ok(GroupParams { n, q, p_crit, sphere_area })
    }

    /// Decay exponent (Q-2)/2 of X_T; equals n.
    pub fn beta(&self) -> f64 {
        (self.q as f64 - 2.0) / 2.0
    }

    pub fn qf(&self) -> f64 {
        self.q as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HPoint {
    pub z: Vec<Complex64>,
    pub t: f64,
}

impl HPoint {
    pub fn new(z: Vec<Complex64>, t: f64) -> Self {
        HPoint { z, t }
    }

    pub fn origin(n: usize) -> Self {
        HPoint { z: vec![Complex64::new(0.0, 0.0); n], t: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }

    pub fn zabs(&self) -> f64 {
        self.z.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn cyl(&self) -> CylPoint {
        CylPoint { r: self.zabs(), t: self.t }
    }

    pub fn inverse(&self) -> Self {
        HPoint { z: self.z.iter().map(|c| -c).collect(), t: -self.t }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylPoint {
    pub r: f64,
    pub t: f64,
}

impl CylPoint {
    pub fn new(r: f64, t: f64) -> Self {
        CylPoint { r, t }
    }
}

pub fn group_mul(p: &HPoint, q: &HPoint) -> Result<HPoint> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch(p.dim(), q.dim()));
    }
    let mut im = 0.0;
    let z = p
        .z
        .iter()
        .zip(&q.z)
        .map(|(a, b)| {
            im += (a * b.conj()).im;
            a + b
        })
        .collect();
    Ok(HPoint { z, t: p.t + q.t + 2.0 * im })
}

/// Points on which the dilations δ_λ act and the Korányi norm is defined.
pub trait Graded: Sized {
    fn dilate_unchecked(&self, l: f64) -> Self;
    fn knorm(&self) -> f64;
}

impl Graded for HPoint {
    fn dilate_unchecked(&self, l: f64) -> Self {
        HPoint { z: self.z.iter().map(|c| c * l).collect(), t: l * l * self.t }
    }

    fn knorm(&self) -> f64 {
        let r2 = self.z.iter().map(|c| c.norm_sqr()).sum::<f64>();
        (r2 * r2 + self.t * self.t).sqrt().sqrt()
    }
}

impl Graded for CylPoint {
    fn dilate_unchecked(&self, l: f64) -> Self {
        CylPoint { r: l * self.r, t: l * l * self.t }
    }

    fn knorm(&self) -> f64 {
        let r2 = self.r * self.r;
        (r2 * r2 + self.t * self.t).sqrt().sqrt()
    }
}

pub fn dilate<P: Graded>(l: f64, p: &P) -> Result<P> {
    if !(l > 0.0) || !l.is_finite() {
        return Err(Error::InvalidParameter(format!("dilation factor must be positive, got {l}")));
    }
    Ok(p.dilate_unchecked(l))
}

pub fn knorm<P: Graded>(p: &P) -> f64 {
    p.knorm()
}

/// Value and partial derivatives of a cylindrical function u(r, t).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Jet {
    pub u: f64,
    pub ur: f64,
    pub ut: f64,
    pub urr: f64,
    pub utt: f64,
    pub urt: f64,
}

pub trait CylField {
    fn jet(&self, p: CylPoint) -> Jet;

    fn value(&self, p: CylPoint) -> f64 {
        self.jet(p).u
    }
}

impl<F: CylField + ?Sized> CylField for &F {
    fn jet(&self, p: CylPoint) -> Jet {
        (**self).jet(p)
    }
}

/// Cylindrical restriction of Z = Σ x∂x + y∂y + 2t∂t.
pub fn z_apply<F: CylField + ?Sized>(u: &F, p: CylPoint) -> f64 {
    let j = u.jet(p);
    p.r * j.ur + 2.0 * p.t * j.ut
}

/// |∇_H u|² for u = u(|z|, t).
pub fn cyl_hgrad_sq<F: CylField + ?Sized>(u: &F, p: CylPoint) -> f64 {
    let j = u.jet(p);
    j.ur * j.ur + 4.0 * p.r * p.r * j.ut * j.ut
}

const AXIS_TOL: f64 = 1e-12;

/// Δ_H u = u_rr + (2n-1)/r u_r + 4 r² u_tt. On the axis the closure
/// u_r(0, t) = 0 turns (2n-1) u_r / r into (2n-1) u_rr.
pub fn cyl_sublap<F: CylField + ?Sized>(params: &GroupParams, u: &F, p: CylPoint) -> Result<f64> {
    let j = u.jet(p);
    let m = 2.0 * params.n as f64 - 1.0;
    if p.r == 0.0 {
        if j.ur.abs() > AXIS_TOL * (1.0 + j.u.abs()) {
            return Err(Error::AxisClosure { t: p.t, ur: j.ur });
        }
        return Ok(j.urr + m * j.urr);
    }
    Ok(j.urr + m / p.r * j.ur + 4.0 * p.r * p.r * j.utt)
}

/// u = knorm^a with analytic derivatives.
#[derive(Debug, Clone, Copy)]
pub struct KnormPower {
    pub a: f64,
}

impl CylField for KnormPower {
    fn jet(&self, p: CylPoint) -> Jet {
        let a = self.a;
        let (r, t) = (p.r, p.t);
        let r2 = r * r;
        let big = r2 * r2 + t * t;
        let e = a / 4.0;
        let u = big.powf(e);
        let pm1 = big.powf(e - 1.0);
        let pm2 = big.powf(e - 2.0);
        Jet {
            u,
            ur: a * r * r2 * pm1,
            ut: 0.5 * a * t * pm1,
            urr: a * pm2 * (3.0 * r2 * big + 4.0 * (e - 1.0) * r2 * r2 * r2),
            utt: 0.5 * a * pm2 * (big + 2.0 * (e - 1.0) * t * t),
            urt: 2.0 * a * (e - 1.0) * r * r2 * t * pm2,
        }
    }
}

/// Closed-form field given only as a value function; derivatives by
/// 4th-order central differences with step h.
pub struct FdField<F: Fn(CylPoint) -> f64> {
    pub f: F,
    pub h: f64,
}

impl<F: Fn(CylPoint) -> f64> FdField<F> {
    pub fn new(f: F, h: f64) -> Self {
        FdField { f, h }
    }
}

impl<F: Fn(CylPoint) -> f64> CylField for FdField<F> {
    fn jet(&self, p: CylPoint) -> Jet {
        let h = self.h;
        let f = |dr: f64, dt: f64| (self.f)(CylPoint::new((p.r + dr).abs(), p.t + dt));
        let u = f(0.0, 0.0);
        let d1 = |g: &dyn Fn(f64) -> f64| (8.0 * (g(h) - g(-h)) - (g(2.0 * h) - g(-2.0 * h))) / (12.0 * h);
        let d2 = |g: &dyn Fn(f64) -> f64| {
            (-(g(2.0 * h) + g(-2.0 * h)) + 16.0 * (g(h) + g(-h)) - 30.0 * g(0.0)) / (12.0 * h * h)
        };
        let gr = |x: f64| f(x, 0.0);
        let gt = |x: f64| f(0.0, x);
        let urt = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h);
        Jet { u, ur: d1(&gr), ut: d1(&gt), urr: d2(&gr), utt: d2(&gt), urt }
    }
}
