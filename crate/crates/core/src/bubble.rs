//! The Jerison–Lee bubble ω_λ = λ^{-(Q-2)/2} ω∘δ_{1/λ},
//! ω = c0 ((1+|z|²)² + t²)^{-(Q-2)/4}.

use crate::error::{Error, Result};
use crate::heis::{cyl_sublap, z_apply, CylField, CylPoint, GroupParams, Jet};

/// c0 = (2n)^n, forced by Δ_H S^{-n/2} = -4n² S^{-(n+2)/2}.
pub fn c0_constant(params: &GroupParams) -> f64 {
    (2.0 * params.n as f64).powi(params.n as i32)
}

#[derive(Debug, Clone, Copy)]
pub struct Bubble {
    pub params: GroupParams,
    pub lambda: f64,
    pub c0: f64,
}

impl Bubble {
    pub fn new(params: GroupParams, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
        }
        Ok(Bubble { params, lambda, c0: c0_constant(&params) })
    }

    fn m(&self) -> f64 {
        (self.params.q as f64 - 2.0) / 4.0
    }

    /// Weighted representative w = e^{βs} ω_λ in the chart ρ = e^s.
    pub fn w_rep(&self, s: f64, phi: f64) -> f64 {
        w_profile(&self.params, self.c0, s - self.lambda.ln(), phi)
    }

    /// ∂_λ of w_rep.
    pub fn w_rep_dlambda(&self, s: f64, phi: f64) -> f64 {
        -w_profile_da(&self.params, self.c0, s - self.lambda.ln(), phi) / self.lambda
    }
}

/// c0 (2 cosh 2a + 2 cos φ)^{-n/2}: the bubble centred at log-scale 0,
/// seen from log-scale a.
pub fn w_profile(params: &GroupParams, c0: f64, a: f64, phi: f64) -> f64 {
    let m = params.n as f64 / 2.0;
    c0 * (2.0 * (2.0 * a).cosh() + 2.0 * phi.cos()).powf(-m)
}

pub fn w_profile_da(params: &GroupParams, c0: f64, a: f64, phi: f64) -> f64 {
    let m = params.n as f64 / 2.0;
    let base = 2.0 * (2.0 * a).cosh() + 2.0 * phi.cos();
    -4.0 * m * c0 * (2.0 * a).sinh() * base.powf(-m - 1.0)
}

fn jet_unit(c0: f64, m: f64, r: f64, t: f64) -> Jet {
    let r2 = r * r;
    let a = 1.0 + r2;
    let s = a * a + t * t;
    let sr = 4.0 * r * a;
    let st = 2.0 * t;
    let srr = 4.0 + 12.0 * r2;
    let stt = 2.0;
    let p0 = s.powf(-m);
    let p1 = p0 / s;
    let p2 = p1 / s;
    Jet {
        u: c0 * p0,
        ur: -m * c0 * p1 * sr,
        ut: -m * c0 * p1 * st,
        urr: c0 * (m * (m + 1.0) * p2 * sr * sr - m * p1 * srr),
        utt: c0 * (m * (m + 1.0) * p2 * st * st - m * p1 * stt),
        urt: c0 * m * (m + 1.0) * p2 * sr * st,
    }
}

impl CylField for Bubble {
    fn jet(&self, p: CylPoint) -> Jet {
        let l = self.lambda;
        let j = jet_unit(self.c0, self.m(), p.r / l, p.t / (l * l));
        let f = l.powf(-self.params.beta());
        Jet {
            u: f * j.u,
            ur: f / l * j.ur,
            ut: f / (l * l) * j.ut,
            urr: f / (l * l) * j.urr,
            utt: f / (l * l * l * l) * j.utt,
            urt: f / (l * l * l) * j.urt,
        }
    }
}

pub fn omega_eval(b: &Bubble, p: CylPoint) -> f64 {
    b.value(p)
}

/// ∂ω_λ/∂λ = -(Q-2)/(2λ) ω_λ - (1/λ) Z ω_λ.
pub fn omega_dlambda(b: &Bubble, p: CylPoint) -> f64 {
    -(b.params.beta() * b.value(p) + z_apply(b, p)) / b.lambda
}

/// -Δ_H ω_λ - ω_λ^{(Q+2)/(Q-2)} from the analytic derivatives.
pub fn bubble_residual(b: &Bubble, p: CylPoint) -> f64 {
    let u = b.value(p);
    let lap = cyl_sublap(&b.params, b, p).expect("bubble satisfies the axis closure");
    -lap - u.powf(b.params.p_crit - 1.0)
}
