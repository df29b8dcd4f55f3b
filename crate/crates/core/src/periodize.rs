//! Ψ_{λ,T} = Σ_k ω_{λ/T^k}, truncated at |k| ≤ K with a certified tail.

use crate::bubble::{w_profile, w_profile_da, Bubble};
use crate::error::{Error, Result};
use crate::heis::{CylField, CylPoint, Graded, GroupParams, Jet};

pub const MAX_TRUNCATION: usize = 64;

#[derive(Debug, Clone, Copy)]
pub struct PeriodizedBubble {
    pub bubble: Bubble,
    pub t_period: f64,
    pub k: usize,
    pub tail_bound: f64,
    /// knorm interval on which tail_bound is certified.
    pub region: (f64, f64),
}

fn validate_period(t_period: f64) -> Result<()> {
    if !(t_period > 1.0) || !t_period.is_finite() {
        return Err(Error::InvalidParameter(format!("period T must exceed 1, got {t_period}")));
    }
    Ok(())
}

/// Sup bound of Σ_{|k|>K} ω_{λ/T^k} on {knorm ∈ region}, valid for both
/// the physical values and the weighted representative. Uses
/// (2 cosh 2a + 2 cos φ)^{-n/2} ≤ e^{-n|a|}.
pub fn tail_bound(params: &GroupParams, t_period: f64, region: (f64, f64), lambda: f64, k: usize) -> f64 {
    let n = params.n as f64;
    let l = t_period.ln();
    let ell = lambda.ln();
    let (s_lo, s_hi) = (region.0.ln(), region.1.ln());
    let kp = (k + 1) as f64;
    let e_hi = s_lo - ell + kp * l;
    let e_lo = kp * l - s_hi + ell;
    if e_hi <= 0.0 || e_lo <= 0.0 {
        return f64::INFINITY;
    }
    let c0 = crate::bubble::c0_constant(params);
    let scale = (-params.beta() * s_lo).exp().max(1.0);
    scale * c0 * ((-n * e_hi).exp() + (-n * e_lo).exp()) / (1.0 - t_period.powf(-n))
}

pub fn choose_truncation(
    params: &GroupParams,
    t_period: f64,
    tol: f64,
    region: (f64, f64),
    lambda: f64,
) -> Result<(usize, f64)> {
    validate_period(t_period)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    if !(region.0 > 0.0 && region.1 >= region.0) {
        return Err(Error::InvalidParameter(format!("bad knorm region {region:?}")));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    for k in 1..=MAX_TRUNCATION {
        let b = tail_bound(params, t_period, region, lambda, k);
        if b < tol {
            return Ok((k, b));
        }
    }
    Err(Error::TruncationTooLarge(MAX_TRUNCATION + 1))
}

impl PeriodizedBubble {
    /// Truncation chosen for tolerance `tol` on the default region [1/T, T²].
    pub fn new(params: GroupParams, lambda: f64, t_period: f64, tol: f64) -> Result<Self> {
        Self::with_region(params, lambda, t_period, tol, (1.0 / t_period, t_period * t_period))
    }

    pub fn with_region(
        params: GroupParams,
        lambda: f64,
        t_period: f64,
        tol: f64,
        region: (f64, f64),
    ) -> Result<Self> {
        let bubble = Bubble::new(params, lambda)?;
        let (k, tail_bound) = choose_truncation(&params, t_period, tol, region, lambda)?;
        Ok(PeriodizedBubble { bubble, t_period, k, tail_bound, region })
    }

    /// Fixed truncation order; tail_bound recomputed for it.
    pub fn with_order(params: GroupParams, lambda: f64, t_period: f64, k: usize) -> Result<Self> {
        validate_period(t_period)?;
        let bubble = Bubble::new(params, lambda)?;
        let region = (1.0 / t_period, t_period * t_period);
        let tail_bound = tail_bound(&params, t_period, region, lambda, k);
        Ok(PeriodizedBubble { bubble, t_period, k, tail_bound, region })
    }

    pub fn params(&self) -> &GroupParams {
        &self.bubble.params
    }

    pub fn lambda(&self) -> f64 {
        self.bubble.lambda
    }

    /// Same truncation, different λ.
    pub fn at_lambda(&self, lambda: f64) -> Result<Self> {
        let bubble = Bubble::new(self.bubble.params, lambda)?;
        let tail_bound = tail_bound(&bubble.params, self.t_period, self.region, lambda, self.k);
        Ok(PeriodizedBubble { bubble, tail_bound, ..*self })
    }

    fn terms(&self) -> impl Iterator<Item = Bubble> + '_ {
        let k = self.k as i32;
        (-k..=k).map(move |j| Bubble { lambda: self.bubble.lambda * self.t_period.powi(-j), ..self.bubble })
    }

    /// Index j with knorm(δ_{T^{-j}} p) ∈ [1, T) when p lies outside the region.
    fn reduce(&self, p: CylPoint) -> Result<(CylPoint, i32)> {
        let rho = p.knorm();
        if rho == 0.0 {
            return Err(Error::Singular);
        }
        if rho >= self.region.0 && rho <= self.region.1 {
            return Ok((p, 0));
        }
        let j = (rho.ln() / self.t_period.ln()).floor() as i32;
        Ok((p.dilate_unchecked(self.t_period.powi(-j)), j))
    }

    /// Weighted representative Σ_{|k|≤K} c0 (2cosh 2(s - log λ + kL) + 2cos φ)^{-n/2}.
    pub fn w_rep(&self, s: f64, phi: f64) -> f64 {
        let l = self.t_period.ln();
        let ell = self.bubble.lambda.ln();
        let k = self.k as i32;
        (-k..=k)
            .map(|j| w_profile(&self.bubble.params, self.bubble.c0, s - ell + j as f64 * l, phi))
            .sum()
    }

    /// Σ_{|k|≤K} w_k^e, the term-wise power of the representative.
    pub fn w_rep_term_power(&self, s: f64, phi: f64, e: f64) -> f64 {
        let l = self.t_period.ln();
        let ell = self.bubble.lambda.ln();
        let k = self.k as i32;
        (-k..=k)
            .map(|j| w_profile(&self.bubble.params, self.bubble.c0, s - ell + j as f64 * l, phi).powf(e))
            .sum()
    }

    /// ∂_λ of w_rep.
    pub fn w_rep_dlambda(&self, s: f64, phi: f64) -> f64 {
        let l = self.t_period.ln();
        let ell = self.bubble.lambda.ln();
        let k = self.k as i32;
        let d: f64 = (-k..=k)
            .map(|j| w_profile_da(&self.bubble.params, self.bubble.c0, s - ell + j as f64 * l, phi))
            .sum();
        -d / self.bubble.lambda
    }
}

impl CylField for PeriodizedBubble {
    /// Jet of the truncated sum; outside the region the point is pulled back
    /// by δ_{T^{-j}} and the jet rescaled with u∘δ_T = T^{-β} u.
    fn jet(&self, p: CylPoint) -> Jet {
        let (q, j) = match self.reduce(p) {
            Ok(v) => v,
            Err(_) => return Jet { u: f64::NAN, ..Jet::default() },
        };
        let mut acc = Jet::default();
        for b in self.terms() {
            let t = b.jet(q);
            acc.u += t.u;
            acc.ur += t.ur;
            acc.ut += t.ut;
            acc.urr += t.urr;
            acc.utt += t.utt;
            acc.urt += t.urt;
        }
        if j == 0 {
            return acc;
        }
        let f = self.t_period.powi(-j);
        let g = f.powf(self.bubble.params.beta());
        Jet {
            u: g * acc.u,
            ur: g * f * acc.ur,
            ut: g * f * f * acc.ut,
            urr: g * f * f * acc.urr,
            utt: g * f.powi(4) * acc.utt,
            urt: g * f.powi(3) * acc.urt,
        }
    }
}

pub fn psi_eval(pb: &PeriodizedBubble, p: CylPoint) -> Result<f64> {
    pb.reduce(p)?;
    Ok(pb.value(p))
}

/// ∂Ψ_λ/∂λ = -(Q-2)/(2λ) Ψ_λ - (1/λ) Z Ψ_λ, term-wise under the truncation.
pub fn psi_dlambda(pb: &PeriodizedBubble, p: CylPoint) -> Result<f64> {
    pb.reduce(p)?;
    let j = pb.jet(p);
    let z = p.r * j.ur + 2.0 * p.t * j.ut;
    Ok(-(pb.params().beta() * j.u + z) / pb.lambda())
}
