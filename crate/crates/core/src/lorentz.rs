//! Lorentz quasinorms, the periodic/weak-L^p norm equivalence on X_T and
//! the empirical Sobolev constant.
//!
//! ‖u‖_{L^{p,q}} = p^{1/q} ‖λ μ{|u|>λ}^{1/p}‖_{L^q(dλ/λ)}, with the sup for q = ∞.

use serde::{Serialize, Serializer};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::functional::lq_norm;
use crate::heis::{cyl_hgrad_sq, CylField, GroupParams};
use crate::numerics::pairwise_sum;
use crate::quadrature::{AnnulusGrid, GridFunction, SAxis};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Step,
    Sampled,
}

/// μ{|u| > λ} on a set of thresholds.
///
/// A step distribution comes from a function taking finitely many values:
/// `measures[k]` is μ{|u| ≥ thresholds[k]}, which is μ{|u| > λ} for λ in
/// [thresholds[k-1], thresholds[k]). A sampled distribution holds exact
/// values μ{|u| > λ_k}; between samples the quasinorm integrand is
/// integrated by the trapezoid rule in log λ, below the first sample μ is
/// held constant and above the last it is taken as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionFunction {
    thresholds: Vec<f64>,
    measures: Vec<f64>,
    kind: Kind,
}

impl DistributionFunction {
    /// Distribution of the step function equal to `values[i]` on a set of
    /// measure `weights[i]`.
    pub fn from_steps(values: &[f64], weights: &[f64]) -> Result<Self> {
        if values.len() != weights.len() {
            return Err(Error::DimensionMismatch(values.len(), weights.len()));
        }
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(values.len());
        for (&v, &w) in values.iter().zip(weights) {
            if !v.is_finite() || !(w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidParameter(format!("bad step ({v}, {w})")));
            }
            if v != 0.0 && w > 0.0 {
                pairs.push((v.abs(), w));
            }
        }
        if pairs.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut thresholds = Vec::new();
        let mut mass = Vec::new();
        for (v, w) in pairs {
            if thresholds.last() == Some(&v) {
                *mass.last_mut().unwrap() += w;
            } else {
                thresholds.push(v);
                mass.push(w);
            }
        }
        let mut measures = vec![0.0; mass.len()];
        let mut acc = 0.0;
        for k in (0..mass.len()).rev() {
            acc += mass[k];
            measures[k] = acc;
        }
        Ok(DistributionFunction { thresholds, measures, kind: Kind::Step })
    }

    pub fn from_samples(thresholds: Vec<f64>, measures: Vec<f64>) -> Result<Self> {
        if thresholds.len() != measures.len() {
            return Err(Error::DimensionMismatch(thresholds.len(), measures.len()));
        }
        if thresholds.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        let sorted = thresholds.windows(2).all(|w| w[0] < w[1]);
        let monotone = measures.windows(2).all(|w| w[1] <= w[0]);
        if !sorted || !(thresholds[0] > 0.0) || !monotone || measures.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(Error::InvalidParameter(
                "thresholds must be positive increasing and measures nonincreasing".into(),
            ));
        }
        Ok(DistributionFunction { thresholds, measures, kind: Kind::Sampled })
    }

    /// Step distribution of the nodal values of u, each node carrying its
    /// physical volume weight.
    pub fn from_grid_nodes(u: &GridFunction) -> Result<Self> {
        let g = &u.grid;
        let mut vals = Vec::with_capacity(g.len());
        for i in 0..g.ns() {
            for j in 0..g.nphi() {
                vals.push(u.physical(i, j));
            }
        }
        Self::from_steps(&vals, g.weights())
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn measures(&self) -> &[f64] {
        &self.measures
    }

    /// Distribution of c·u.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if c == 0.0 || !c.is_finite() {
            return Err(Error::InvalidParameter(format!("scale must be finite and nonzero, got {c}")));
        }
        let mut d = self.clone();
        for t in d.thresholds.iter_mut() {
            *t *= c.abs();
        }
        Ok(d)
    }
}

pub fn lorentz_quasinorm(d: &DistributionFunction, p: f64, q: f64) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() || !(q >= 1.0) {
        return Err(Error::InvalidParameter(format!("need 1 ≤ p < ∞ and 1 ≤ q ≤ ∞, got p={p}, q={q}")));
    }
    if d.thresholds.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    let (th, me) = (&d.thresholds, &d.measures);
    if q.is_infinite() {
        return Ok(th.iter().zip(me).map(|(l, m)| l * m.powf(1.0 / p)).fold(0.0, f64::max));
    }
    let integral = match d.kind {
        Kind::Step => {
            let mut prev = 0.0;
            let terms: Vec<f64> = th
                .iter()
                .zip(me)
                .map(|(&a, &m)| {
                    let piece = m.powf(q / p) * (a.powf(q) - prev) / q;
                    prev = a.powf(q);
                    piece
                })
                .collect();
            pairwise_sum(&terms)
        }
        Kind::Sampled => {
            let f: Vec<f64> = th.iter().zip(me).map(|(l, m)| (l * m.powf(1.0 / p)).powf(q)).collect();
            let mut terms = vec![f[0] / q];
            for k in 1..th.len() {
                terms.push(0.5 * (f[k] + f[k - 1]) * (th[k] / th[k - 1]).ln());
            }
            pairwise_sum(&terms)
        }
    };
    Ok(p.powf(1.0 / q) * integral.powf(1.0 / q))
}

/// Exact level-set measures of a sampled function on the grid's s-range.
///
/// On each φ column the representative u = e^{-αs} w is interpolated with
/// log|w| piecewise linear in s (periodically on a periodic grid), so
/// {|u| > λ} is a union of intervals whose e^{Qs} ds measure is explicit.
/// Functions of the form knorm^{-α} g(φ) are reproduced exactly in s.
#[derive(Debug, Clone)]
pub struct LevelSets {
    q: f64,
    alpha: f64,
    /// per column: knots (s, log|w|) covering the integration range
    columns: Vec<Vec<(f64, f64)>>,
    col_weight: Vec<f64>,
    range: (f64, f64),
    umin: f64,
    umax: f64,
}

impl LevelSets {
    /// `w` holds e^{αs}|u| at the nodes, layout [i * nphi + j].
    pub fn new(grid: &AnnulusGrid, alpha: f64, w: &[f64]) -> Result<Self> {
        if w.len() != grid.len() {
            return Err(Error::DimensionMismatch(grid.len(), w.len()));
        }
        let (ns, nphi) = (grid.ns(), grid.nphi());
        let s = grid.s();
        let tiny = f64::MIN_POSITIVE;
        let lw = |i: usize, j: usize| w[i * nphi + j].abs().max(tiny).ln();
        let mut columns = Vec::with_capacity(nphi);
        let range = match grid.axis {
            SAxis::Periodic { period } => (0.0, period),
            SAxis::Dirichlet { .. } => (s[0], s[ns - 1]),
        };
        for j in 0..nphi {
            let mut knots = Vec::with_capacity(ns + 2);
            if let SAxis::Periodic { period } = grid.axis {
                knots.push((s[ns - 1] - period, lw(ns - 1, j)));
            }
            knots.extend((0..ns).map(|i| (s[i], lw(i, j))));
            if let SAxis::Periodic { period } = grid.axis {
                knots.push((s[0] + period, lw(0, j)));
            }
            columns.push(knots);
        }
        let col_weight: Vec<f64> = grid.mass_weights().iter().map(|m| m / grid.h()).collect();
        let mut umin = f64::INFINITY;
        let mut umax: f64 = 0.0;
        for col in &columns {
            for win in col.windows(2) {
                for x in [win[0].0.clamp(range.0, range.1), win[1].0.clamp(range.0, range.1)] {
                    let v = interp(win, x) - alpha * x;
                    umin = umin.min(v.exp());
                    umax = umax.max(v.exp());
                }
            }
        }
        if !(umax > 0.0) {
            return Err(Error::EmptyDistribution);
        }
        Ok(LevelSets { q: grid.params.qf(), alpha, columns, col_weight, range, umin, umax })
    }

    pub fn from_grid_function(u: &GridFunction) -> Result<Self> {
        Self::new(&u.grid, u.grid.params.beta(), &u.values)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// (min, max) of |u| over the integration range.
    pub fn value_range(&self) -> (f64, f64) {
        (self.umin, self.umax)
    }

    pub fn total_measure(&self) -> f64 {
        let (a, b) = self.range;
        let seg = ((self.q * b).exp() - (self.q * a).exp()) / self.q;
        self.col_weight.iter().sum::<f64>() * seg
    }

    /// μ{x in the annulus : |u(x)| > λ}.
    pub fn measure(&self, lambda: f64) -> f64 {
        if !(lambda > 0.0) {
            return self.total_measure();
        }
        if lambda >= self.umax {
            return 0.0;
        }
        let c = lambda.ln();
        let (lo, hi) = self.range;
        let q = self.q;
        let mut terms = Vec::with_capacity(self.columns.len());
        for (col, cw) in self.columns.iter().zip(&self.col_weight) {
            let mut acc = 0.0;
            for win in col.windows(2) {
                let a = win[0].0.max(lo);
                let b = win[1].0.min(hi);
                if b <= a {
                    continue;
                }
                let la = interp(win, a) - self.alpha * a;
                let lb = interp(win, b) - self.alpha * b;
                let (x1, x2) = if la > c && lb > c {
                    (a, b)
                } else if la <= c && lb <= c {
                    continue;
                } else {
                    let xs = a + (c - la) * (b - a) / (lb - la);
                    if la > c {
                        (a, xs)
                    } else {
                        (xs, b)
                    }
                };
                acc += ((q * x2).exp() - (q * x1).exp()) / q;
            }
            terms.push(cw * acc);
        }
        pairwise_sum(&terms)
    }

    /// Sampled distribution on `count` geometric thresholds spanning the
    /// value range.
    pub fn sample(&self, count: usize) -> Result<DistributionFunction> {
        let count = count.max(2);
        let lo = (self.umin.max(self.umax * 1e-300)).ln();
        let hi = self.umax.ln();
        let mut th = Vec::with_capacity(count);
        let mut me = Vec::with_capacity(count);
        for k in 0..count {
            let l = (lo + (hi - lo) * k as f64 / (count - 1) as f64).exp();
            if th.last().is_some_and(|x: &f64| *x >= l) {
                continue;
            }
            th.push(l);
            me.push(self.measure(l));
        }
        DistributionFunction::from_samples(th, me)
    }
}

fn interp(win: &[(f64, f64)], x: f64) -> f64 {
    let (x0, y0) = win[0];
    let (x1, y1) = win[1];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Whole-space distribution g(λ) = Σ_k T^{Qk} f(λ T^{αk}) of a function
/// with u∘δ_T = T^{-α} u, from its distribution f on Ω_T.
#[derive(Debug, Clone)]
pub struct PeriodicDistribution {
    cell: LevelSets,
    t_period: f64,
}

impl PeriodicDistribution {
    pub fn new(cell: LevelSets, t_period: f64) -> Result<Self> {
        if !(t_period > 1.0) {
            return Err(Error::InvalidParameter(format!("period must exceed 1, got {t_period}")));
        }
        if !(cell.alpha > 0.0) {
            return Err(Error::InvalidParameter("periodic distribution needs α > 0".into()));
        }
        Ok(PeriodicDistribution { cell, t_period })
    }

    pub fn measure(&self, lambda: f64) -> f64 {
        let (t, q, a) = (self.t_period, self.cell.q, self.cell.alpha);
        let (umin, umax) = self.cell.value_range();
        // f(λT^{αk}) = 0 once λT^{αk} ≥ umax, = |Ω_T| once λT^{αk} < umin
        let k_hi = ((umax / lambda).ln() / (a * t.ln())).ceil() as i64;
        let k_lo = ((umin / lambda).ln() / (a * t.ln())).floor() as i64 - 1;
        let mut terms = Vec::new();
        let total = self.cell.total_measure();
        // Σ_{k ≤ k_lo} T^{Qk} |Ω_T|
        terms.push(total * t.powf(q * k_lo as f64) / (1.0 - t.powf(-q)));
        for k in (k_lo + 1)..=k_hi {
            terms.push(t.powf(q * k as f64) * self.cell.measure(lambda * t.powf(a * k as f64)));
        }
        pairwise_sum(&terms)
    }

    /// ‖u‖_{L^{p,∞}(H^n)}. With αp = Q the map λ ↦ λ g(λ)^{1/p} is invariant
    /// under λ → T^α λ, so the sup runs over one multiplicative period.
    pub fn weak_norm(&self, p: f64) -> f64 {
        let span = self.cell.alpha * self.t_period.ln();
        let base = self.cell.value_range().1.ln() - span;
        let f = |x: f64| {
            let l = (base + x).exp();
            l * self.measure(l).powf(1.0 / p)
        };
        sup_on_interval(f, span, 2048)
    }
}

/// sup of f on [0, span]: dense sampling plus golden-section refinement
/// around the best sample.
fn sup_on_interval(f: impl Fn(f64) -> f64, span: f64, samples: usize) -> f64 {
    let dx = span / samples as f64;
    let mut best = (0.0, f64::NEG_INFINITY);
    for k in 0..=samples {
        let x = k as f64 * dx;
        let v = f(x);
        if v > best.1 {
            best = (x, v);
        }
    }
    let (mut a, mut b) = (best.0 - dx, best.0 + dx);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..60 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    best.1.max(fc).max(fd)
}

fn ser_exponent<S: Serializer>(q: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if q.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*q)
    }
}

/// lhs = ((T^Q-1)/T^Q)^{1/p} ‖u‖_{p,∞}, mid = ‖u‖_{L^p(Ω_T)},
/// rhs = Q^{1/p} (log T)^{1/p} ‖u‖_{p,∞}; the middle constant is 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormEquivalenceReport {
    pub p: f64,
    #[serde(serialize_with = "ser_exponent")]
    pub q: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
    pub lhs: f64,
    pub mid: f64,
    pub rhs: f64,
}

/// Relative slack allowed in the two inequalities for quadrature error.
pub const EQUIVALENCE_SLACK: f64 = 1e-9;

/// Norm equivalence for the periodic function on `grid` with u∘δ_T = T^{-α}u
/// and nodal values w = e^{αs}u.
pub fn check_norm_equivalence(grid: &Arc<AnnulusGrid>, alpha: f64, w: &[f64], p: f64) -> Result<NormEquivalenceReport> {
    let params = grid.params;
    let q = params.qf();
    if ((alpha * p - q) / q).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!("need αp = Q, got α={alpha}, p={p}")));
    }
    let t = grid
        .period()
        .ok_or_else(|| Error::InvalidParameter("norm equivalence needs a periodic grid".into()))?;
    let cell = LevelSets::new(grid, alpha, w)?;
    let weak = PeriodicDistribution::new(cell, t)?.weak_norm(p);
    // αp = Q makes |u|^p dx s-independent in the chart
    let terms: Vec<f64> = w
        .iter()
        .enumerate()
        .map(|(k, v)| grid.mass_weights()[k % grid.nphi()] * v.abs().powf(p))
        .collect();
    let mid = pairwise_sum(&terms).powf(1.0 / p);
    let tq = t.powf(q);
    let lhs = ((tq - 1.0) / tq).powf(1.0 / p) * weak;
    let rhs = (q * t.ln()).powf(1.0 / p) * weak;
    Ok(NormEquivalenceReport {
        p,
        q: f64::INFINITY,
        t,
        lower_ok: lhs <= mid * (1.0 + EQUIVALENCE_SLACK),
        upper_ok: mid <= rhs * (1.0 + EQUIVALENCE_SLACK),
        lhs,
        mid,
        rhs,
    })
}

/// ‖u‖_{L^{2*}(Ω_T)} / ‖u‖_{X_T}.
pub fn sobolev_ratio(u: &GridFunction) -> Result<f64> {
    let x = u.xt_norm();
    if !(x > 0.0) {
        return Err(Error::InvalidParameter("sobolev ratio of the zero function".into()));
    }
    Ok(lq_norm(u) / x)
}

/// (log T)^{(Q-2)/2Q} (T^Q/(T^Q-1))^{1/2}: the T-dependence of the Sobolev
/// constant on X_T.
pub fn sobolev_scale(params: &GroupParams, t: f64) -> f64 {
    let q = params.qf();
    let tq = t.powf(q);
    t.ln().powf((q - 2.0) / (2.0 * q)) * (tq / (tq - 1.0)).sqrt()
}

pub trait WeakNorm {
    /// ‖·‖_{L^{p,∞}} of the underlying function.
    fn weak_norm(&self, p: f64) -> f64;
}

impl WeakNorm for PeriodicDistribution {
    fn weak_norm(&self, p: f64) -> f64 {
        PeriodicDistribution::weak_norm(self, p)
    }
}

impl WeakNorm for LevelSets {
    /// Sup over the sampled value range; on a whole-space surrogate this is
    /// the weak norm up to the mass outside the annulus.
    fn weak_norm(&self, p: f64) -> f64 {
        let (lo, hi) = self.value_range();
        let lo = lo.max(hi * 1e-12);
        let span = (hi / lo).ln();
        sup_on_interval(
            |x| {
                let l = lo * x.exp();
                l * self.measure(l).powf(1.0 / p)
            },
            span,
            4096,
        )
    }
}

/// Level sets of |u| (weight α = β) and |∇_H u| (weight α = β + 1) for a
/// cylindrical field given by its jets.
pub fn field_level_sets<F: CylField>(grid: &AnnulusGrid, f: &F) -> Result<(LevelSets, LevelSets)> {
    let beta = grid.params.beta();
    let mut uw = Vec::with_capacity(grid.len());
    let mut gw = Vec::with_capacity(grid.len());
    for i in 0..grid.ns() {
        let s = grid.s()[i];
        for j in 0..grid.nphi() {
            let p = grid.node(i, j);
            uw.push((beta * s).exp() * f.value(p).abs());
            gw.push(((beta + 1.0) * s).exp() * cyl_hgrad_sq(f, p).sqrt());
        }
    }
    Ok((LevelSets::new(grid, beta, &uw)?, LevelSets::new(grid, beta + 1.0, &gw)?))
}

/// ‖u‖_{L^{2*,∞}} / ‖∇_H u‖_{L^{2,∞}}.
pub fn weak_sobolev_ratio(params: &GroupParams, u: &dyn WeakNorm, grad: &dyn WeakNorm) -> f64 {
    u.weak_norm(params.p_crit) / grad.weak_norm(2.0)
}
