//! Log-polar discretization of the Korányi annulus Ω_T and the X_T
//! inner product.
//!
//! Chart: ρ = e^s, (r, t) = (ρ √cos φ, ρ² sin φ), φ ∈ (-π/2, π/2), so that
//! knorm = e^s and dx = σ e^{Qs} cos^{n-1}φ ds dφ. A cylindrical u ∈ X_T is
//! stored as w = e^{βs} u, which is L-periodic in s (L = log T).
//!
//! In s the grid is uniform with a Fourier (periodic) or sine (Dirichlet)
//! basis; in φ it uses Gauss–Legendre nodes with the nodal differentiation
//! matrix. The Gram operator is the exact quadratic form
//! Σ σ h q_j cos^n φ_j [(w_s - βw)² + 4 w_φ²], diagonal in the s-modes.

use nalgebra::{Cholesky, DMatrix, Dyn};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::heis::{CylPoint, GroupParams};
use crate::numerics::{dot, gauss_legendre, legendre, pairwise_sum};

pub const MIN_POINTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SAxis {
    /// Uniform nodes on one period [0, L) of the dilation-periodic class.
    Periodic { period: f64 },
    /// Interior nodes of [lo, hi] with w = 0 at both ends.
    Dirichlet { lo: f64, hi: f64 },
}

pub fn chart_point(s: f64, phi: f64) -> CylPoint {
    let rho = s.exp();
    CylPoint::new(rho * phi.cos().max(0.0).sqrt(), rho * rho * phi.sin())
}

pub fn chart_coords(p: CylPoint) -> (f64, f64) {
    let r2 = p.r * p.r;
    let s = 0.25 * (r2 * r2 + p.t * p.t).ln();
    (s, p.t.atan2(r2))
}

/// (u_r, u_t) from the chart derivatives (u_s, u_φ) at (s, φ).
pub fn chain_rule(s: f64, phi: f64, us: f64, uphi: f64) -> (f64, f64) {
    let (c, sn) = (phi.cos(), phi.sin());
    let ur = (-s).exp() * c.sqrt() * (c * us - 2.0 * sn * uphi);
    let ut = (-2.0 * s).exp() * (c * uphi + 0.5 * sn * us);
    (ur, ut)
}

pub struct AnnulusGrid {
    pub params: GroupParams,
    pub axis: SAxis,
    ns: usize,
    nphi: usize,
    h: f64,
    s: Vec<f64>,
    phi: Vec<f64>,
    qphi: Vec<f64>,
    dphi: Vec<f64>,
    weights: Vec<f64>,
    mass_w: Vec<f64>,
    grad_w: Vec<f64>,
    stiff_phi: Vec<f64>,
    kappa: Vec<f64>,
    fft_fwd: Arc<dyn Fft<f64>>,
    fft_inv: Arc<dyn Fft<f64>>,
    factors: OnceLock<Vec<Cholesky<f64, Dyn>>>,
}

impl fmt::Debug for AnnulusGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AnnulusGrid")
            .field("n", &self.params.n)
            .field("axis", &self.axis)
            .field("ns", &self.ns)
            .field("nphi", &self.nphi)
            .finish()
    }
}

pub fn build_grid(params: GroupParams, t_period: f64, ns: usize, nphi: usize) -> Result<Arc<AnnulusGrid>> {
    if !(t_period > 1.0) || !t_period.is_finite() {
        return Err(Error::InvalidParameter(format!("period T must exceed 1, got {t_period}")));
    }
    AnnulusGrid::build(params, SAxis::Periodic { period: t_period.ln() }, ns, nphi)
}

impl AnnulusGrid {
    /// Surrogate for the whole group: knorm ∈ [1/R, R] with decay (Dirichlet)
    /// conditions in s.
    pub fn whole_space(params: GroupParams, r_outer: f64, ns: usize, nphi: usize) -> Result<Arc<Self>> {
        if !(r_outer > 1.0) {
            return Err(Error::InvalidParameter(format!("outer radius must exceed 1, got {r_outer}")));
        }
        let l = r_outer.ln();
        Self::build(params, SAxis::Dirichlet { lo: -l, hi: l }, ns, nphi)
    }

    fn build(params: GroupParams, axis: SAxis, ns: usize, nphi: usize) -> Result<Arc<Self>> {
        if ns < MIN_POINTS || nphi < MIN_POINTS {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least {MIN_POINTS} points per direction, got {ns}x{nphi}"
            )));
        }
        let q = params.qf();
        let sigma = params.sphere_area;

        let mut planner = FftPlanner::new();
        let (h, s, kappa, fft_len) = match axis {
            SAxis::Periodic { period } => {
                let h = period / ns as f64;
                // Offset making Σ h e^{Q s_i} equal the exact ∫_0^L e^{Qs} ds.
                let s0 = ((q * h).exp_m1() / (q * h)).ln() / q;
                let s: Vec<f64> = (0..ns).map(|i| s0 + h * i as f64).collect();
                let kappa = (0..ns)
                    .map(|m| {
                        if 2 * m == ns {
                            PI * ns as f64 / period
                        } else {
                            let f = if 2 * m < ns { m as f64 } else { m as f64 - ns as f64 };
                            2.0 * PI * f / period
                        }
                    })
                    .collect();
                (h, s, kappa, ns)
            }
            SAxis::Dirichlet { lo, hi } => {
                let len = hi - lo;
                let h = len / (ns + 1) as f64;
                let s = (0..ns).map(|i| lo + h * (i + 1) as f64).collect();
                let kappa = (0..ns).map(|m| PI * (m + 1) as f64 / len).collect();
                (h, s, kappa, 2 * (ns + 1))
            }
        };

        let (xg, wg) = gauss_legendre(nphi);
        let phi: Vec<f64> = xg.iter().map(|x| 0.5 * PI * x).collect();
        let qphi: Vec<f64> = wg.iter().map(|w| 0.5 * PI * w).collect();
        let mut dphi = crate::numerics::diff_matrix(&xg);
        for v in dphi.iter_mut() {
            *v *= 2.0 / PI;
        }
        let nf = params.n as f64;
        let mass_w: Vec<f64> = (0..nphi).map(|j| sigma * h * qphi[j] * phi[j].cos().powf(nf - 1.0)).collect();
        let grad_w: Vec<f64> = (0..nphi).map(|j| sigma * h * qphi[j] * phi[j].cos().powf(nf)).collect();
        let mut weights = Vec::with_capacity(ns * nphi);
        for si in &s {
            let e = (q * si).exp();
            weights.extend(mass_w.iter().map(|m| m * e));
        }
        // Dᵀ diag(grad_w) D
        let mut stiff_phi = vec![0.0; nphi * nphi];
        for a in 0..nphi {
            for b in 0..nphi {
                let mut acc = 0.0;
                for k in 0..nphi {
                    acc += dphi[k * nphi + a] * grad_w[k] * dphi[k * nphi + b];
                }
                stiff_phi[a * nphi + b] = acc;
            }
        }
        Ok(Arc::new(AnnulusGrid {
            params,
            axis,
            ns,
            nphi,
            h,
            s,
            phi,
            qphi,
            dphi,
            weights,
            mass_w,
            grad_w,
            stiff_phi,
            kappa,
            fft_fwd: planner.plan_fft_forward(fft_len),
            fft_inv: planner.plan_fft_inverse(fft_len),
            factors: OnceLock::new(),
        }))
    }

    pub fn ns(&self) -> usize {
        self.ns
    }

    pub fn nphi(&self) -> usize {
        self.nphi
    }

    pub fn len(&self) -> usize {
        self.ns * self.nphi
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn phi_weights(&self) -> &[f64] {
        &self.qphi
    }

    /// Period T of the dilation-periodic class (None for Dirichlet grids).
    pub fn period(&self) -> Option<f64> {
        match self.axis {
            SAxis::Periodic { period } => Some(period.exp()),
            SAxis::Dirichlet { .. } => None,
        }
    }

    pub fn log_period(&self) -> Option<f64> {
        match self.axis {
            SAxis::Periodic { period } => Some(period),
            SAxis::Dirichlet { .. } => None,
        }
    }

    pub fn node(&self, i: usize, j: usize) -> CylPoint {
        chart_point(self.s[i], self.phi[j])
    }

    /// Physical quadrature weights σ h e^{Q s_i} q_j cos^{n-1} φ_j.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Per-φ weights of |w|^p terms in the w-representation.
    pub fn mass_weights(&self) -> &[f64] {
        &self.mass_w
    }

    pub fn grad_weights(&self) -> &[f64] {
        &self.grad_w
    }

    /// Row-major φ stiffness Dᵀ diag(grad_w) D.
    pub fn phi_stiffness(&self) -> &[f64] {
        &self.stiff_phi
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    pub(crate) fn same_as(&self, other: &AnnulusGrid) -> bool {
        std::ptr::eq(self, other)
            || (self.params == other.params && self.axis == other.axis && self.ns == other.ns && self.nphi == other.nphi)
    }

    /// Transform along s of every φ column; layout [j * ns + m].
    fn to_modes(&self, x: &[f64]) -> Vec<Complex64> {
        let (ns, nphi) = (self.ns, self.nphi);
        match self.axis {
            SAxis::Periodic { .. } => {
                let mut buf = vec![Complex64::new(0.0, 0.0); ns * nphi];
                for i in 0..ns {
                    for j in 0..nphi {
                        buf[j * ns + i] = Complex64::new(x[i * nphi + j], 0.0);
                    }
                }
                self.fft_fwd.process(&mut buf);
                buf
            }
            SAxis::Dirichlet { .. } => {
                let len = 2 * (ns + 1);
                let mut buf = vec![Complex64::new(0.0, 0.0); len * nphi];
                for j in 0..nphi {
                    let col = &mut buf[j * len..(j + 1) * len];
                    for i in 0..ns {
                        let v = x[i * nphi + j];
                        col[i + 1] = Complex64::new(v, 0.0);
                        col[len - 1 - i] = Complex64::new(-v, 0.0);
                    }
                }
                self.fft_fwd.process(&mut buf);
                let mut out = vec![Complex64::new(0.0, 0.0); ns * nphi];
                for j in 0..nphi {
                    for m in 0..ns {
                        // FFT of the odd extension is -2i times the sine transform.
                        out[j * ns + m] = Complex64::new(-0.5 * buf[j * len + m + 1].im, 0.0);
                    }
                }
                out
            }
        }
    }

    fn from_modes(&self, mut buf: Vec<Complex64>) -> Vec<f64> {
        let (ns, nphi) = (self.ns, self.nphi);
        let mut x = vec![0.0; ns * nphi];
        match self.axis {
            SAxis::Periodic { .. } => {
                self.fft_inv.process(&mut buf);
                let inv = 1.0 / ns as f64;
                for i in 0..ns {
                    for j in 0..nphi {
                        x[i * nphi + j] = buf[j * ns + i].re * inv;
                    }
                }
            }
            SAxis::Dirichlet { .. } => {
                let re: Vec<f64> = buf.iter().map(|c| c.re).collect();
                let back = self.to_modes_transposed(&re);
                let f = 2.0 / (ns + 1) as f64;
                for j in 0..nphi {
                    for i in 0..ns {
                        x[i * nphi + j] = f * back[j * ns + i].re;
                    }
                }
            }
        }
        x
    }

    // The sine transform is its own inverse up to 2/(N+1); mode data arrive
    // in [j * ns + m] layout.
    fn to_modes_transposed(&self, modes: &[f64]) -> Vec<Complex64> {
        let (ns, nphi) = (self.ns, self.nphi);
        let mut x = vec![0.0; ns * nphi];
        for j in 0..nphi {
            for m in 0..ns {
                x[m * nphi + j] = modes[j * ns + m];
            }
        }
        self.to_modes(&x)
    }

    fn mode_factor_index(&self, m: usize) -> usize {
        match self.axis {
            SAxis::Periodic { .. } => m.min(self.ns - m),
            SAxis::Dirichlet { .. } => m,
        }
    }

    fn mode_matrix(&self, m: usize) -> DMatrix<f64> {
        let n = self.nphi;
        let beta = self.params.beta();
        let sym = self.kappa[m] * self.kappa[m] + beta * beta;
        DMatrix::from_fn(n, n, |a, b| {
            let d = if a == b { sym * self.grad_w[a] } else { 0.0 };
            d + 4.0 * self.stiff_phi[a * n + b]
        })
    }

    fn factors(&self) -> &Vec<Cholesky<f64, Dyn>> {
        self.factors.get_or_init(|| {
            let count = match self.axis {
                SAxis::Periodic { .. } => self.ns / 2 + 1,
                SAxis::Dirichlet { .. } => self.ns,
            };
            (0..count)
                .map(|m| Cholesky::new(self.mode_matrix(m)).expect("Gram mode block is positive definite"))
                .collect()
        })
    }

    /// Gram (X_T inner product) operator applied to a coefficient vector.
    pub fn gram_apply(&self, x: &[f64]) -> Vec<f64> {
        let (ns, nphi) = (self.ns, self.nphi);
        let beta2 = self.params.beta().powi(2);
        let mut modes = self.to_modes(x);
        for j in 0..nphi {
            for m in 0..ns {
                modes[j * ns + m] *= self.kappa[m] * self.kappa[m] + beta2;
            }
        }
        let ss = self.from_modes(modes);
        let mut y = vec![0.0; ns * nphi];
        for i in 0..ns {
            let row = &x[i * nphi..(i + 1) * nphi];
            let out = &mut y[i * nphi..(i + 1) * nphi];
            for a in 0..nphi {
                let k = &self.stiff_phi[a * nphi..(a + 1) * nphi];
                out[a] = ss[i * nphi + a] * self.grad_w[a] + 4.0 * dot(k, row);
            }
        }
        y
    }

    /// Solve G y = b exactly (per-mode Cholesky).
    pub fn gram_solve(&self, b: &[f64]) -> Vec<f64> {
        let (ns, nphi) = (self.ns, self.nphi);
        let factors = self.factors();
        let mut modes = self.to_modes(b);
        let mut rhs = DMatrix::<f64>::zeros(nphi, 2);
        for m in 0..ns {
            for j in 0..nphi {
                let c = modes[j * ns + m];
                rhs[(j, 0)] = c.re;
                rhs[(j, 1)] = c.im;
            }
            let sol = factors[self.mode_factor_index(m)].solve(&rhs);
            for j in 0..nphi {
                modes[j * ns + m] = Complex64::new(sol[(j, 0)], sol[(j, 1)]);
            }
        }
        self.from_modes(modes)
    }

    /// Spectral ∂_s on the periodic axis (Nyquist mode dropped).
    pub fn ds(&self, x: &[f64]) -> Result<Vec<f64>> {
        let period = self
            .log_period()
            .ok_or_else(|| Error::InvalidParameter("spectral s-derivative needs a periodic axis".into()))?;
        let (ns, nphi) = (self.ns, self.nphi);
        let mut modes = self.to_modes(x);
        for m in 0..ns {
            let k = if 2 * m == ns {
                0.0
            } else if 2 * m < ns {
                2.0 * PI * m as f64 / period
            } else {
                2.0 * PI * (m as f64 - ns as f64) / period
            };
            for j in 0..nphi {
                modes[j * ns + m] *= Complex64::new(0.0, k);
            }
        }
        Ok(self.from_modes(modes))
    }

    /// Nodal ∂_φ along every row.
    pub fn dphi(&self, x: &[f64]) -> Vec<f64> {
        let nphi = self.nphi;
        let mut y = vec![0.0; x.len()];
        for (row, out) in x.chunks(nphi).zip(y.chunks_mut(nphi)) {
            for a in 0..nphi {
                out[a] = dot(&self.dphi[a * nphi..(a + 1) * nphi], row);
            }
        }
        y
    }

    /// Keep only the s-Fourier modes with signed frequency f for which
    /// `keep(f)` holds (periodic axis).
    pub fn filter_s_modes(&self, x: &[f64], keep: impl Fn(i64) -> bool) -> Result<Vec<f64>> {
        if self.log_period().is_none() {
            return Err(Error::InvalidParameter("mode filtering needs a periodic axis".into()));
        }
        let (ns, nphi) = (self.ns, self.nphi);
        let mut modes = self.to_modes(x);
        for m in 0..ns {
            let f = if 2 * m <= ns { m as i64 } else { m as i64 - ns as i64 };
            if !keep(f) {
                for j in 0..nphi {
                    modes[j * ns + m] = Complex64::new(0.0, 0.0);
                }
            }
        }
        Ok(self.from_modes(modes))
    }
}

#[derive(Debug, Clone)]
pub struct GridFunction {
    pub grid: Arc<AnnulusGrid>,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(grid: &Arc<AnnulusGrid>) -> Self {
        GridFunction { grid: grid.clone(), values: vec![0.0; grid.len()] }
    }

    pub fn from_values(grid: &Arc<AnnulusGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch(values.len(), grid.len()));
        }
        Ok(GridFunction { grid: grid.clone(), values })
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.nphi + j]
    }

    pub fn check_same(&self, other: &GridFunction) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn add(&self, other: &GridFunction) -> Result<GridFunction> {
        self.check_same(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(GridFunction { grid: self.grid.clone(), values })
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.check_same(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(GridFunction { grid: self.grid.clone(), values })
    }

    pub fn scaled(&self, c: f64) -> GridFunction {
        GridFunction { grid: self.grid.clone(), values: self.values.iter().map(|v| c * v).collect() }
    }

    /// Physical value u = e^{-βs} w at node (i, j).
    pub fn physical(&self, i: usize, j: usize) -> f64 {
        (-self.grid.params.beta() * self.grid.s[i]).exp() * self.at(i, j)
    }

    pub fn xt_norm(&self) -> f64 {
        dot(&self.values, &self.grid.gram_apply(&self.values)).max(0.0).sqrt()
    }

    /// Smooth random element: s-Fourier modes |m| ≤ 3 times Legendre
    /// profiles P_l(2φ/π), l ≤ 3, with iid standard normal coefficients.
    pub fn random_smooth<R: Rng + ?Sized>(grid: &Arc<AnnulusGrid>, rng: &mut R) -> Result<GridFunction> {
        const MODES: usize = 3;
        const DEGREE: usize = 3;
        let period = grid
            .log_period()
            .ok_or_else(|| Error::InvalidParameter("random_smooth needs a periodic grid".into()))?;
        let mut coef = Vec::new();
        for _ in 0..(2 * MODES + 1) * (DEGREE + 1) {
            coef.push(rng.sample::<f64, _>(StandardNormal));
        }
        let mut values = vec![0.0; grid.len()];
        for i in 0..grid.ns {
            let s = grid.s[i];
            let mut sb = vec![1.0];
            for m in 1..=MODES {
                let a = 2.0 * PI * m as f64 * s / period;
                sb.push(a.cos());
                sb.push(a.sin());
            }
            for j in 0..grid.nphi {
                let x = 2.0 * grid.phi[j] / PI;
                let mut v = 0.0;
                for (a, sv) in sb.iter().enumerate() {
                    for l in 0..=DEGREE {
                        v += coef[a * (DEGREE + 1) + l] * sv * legendre(l, x);
                    }
                }
                values[i * grid.nphi + j] = v;
            }
        }
        Ok(GridFunction { grid: grid.clone(), values })
    }

    /// CSV dump `s,phi,w`, row-major, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "s,phi,w")?;
        for i in 0..self.grid.ns {
            for j in 0..self.grid.nphi {
                writeln!(out, "{:.16e},{:.16e},{:.16e}", self.grid.s[i], self.grid.phi[j], self.at(i, j))?;
            }
        }
        Ok(())
    }
}

/// w(s_i, φ_j) = e^{β s_i} f(node_ij).
pub fn sample(grid: &Arc<AnnulusGrid>, f: impl Fn(CylPoint) -> f64) -> Result<GridFunction> {
    let beta = grid.params.beta();
    sample_w(grid, |s, phi| (beta * s).exp() * f(chart_point(s, phi)))
}

/// Sample the weighted representative directly.
pub fn sample_w(grid: &Arc<AnnulusGrid>, f: impl Fn(f64, f64) -> f64) -> Result<GridFunction> {
    let mut values = Vec::with_capacity(grid.len());
    for &s in &grid.s {
        for &phi in &grid.phi {
            let v = f(s, phi);
            if !v.is_finite() {
                return Err(Error::NonFinite { s, phi, value: v });
            }
            values.push(v);
        }
    }
    Ok(GridFunction { grid: grid.clone(), values })
}

/// max_j |w(s_0 + L, φ_j) - w(s_0, φ_j)| for the representative of f.
pub fn seam_mismatch(grid: &AnnulusGrid, f: impl Fn(CylPoint) -> f64) -> Result<f64> {
    let l = grid
        .log_period()
        .ok_or_else(|| Error::InvalidParameter("seam mismatch needs a periodic grid".into()))?;
    let beta = grid.params.beta();
    let s0 = grid.s[0];
    let w = |s: f64, phi: f64| (beta * s).exp() * f(chart_point(s, phi));
    Ok(grid.phi.iter().map(|&phi| (w(s0 + l, phi) - w(s0, phi)).abs()).fold(0.0, f64::max))
}

/// Σ weights · integrand over nodes (row-major, pairwise summation).
pub fn integrate(grid: &AnnulusGrid, integrand: &[f64]) -> Result<f64> {
    if integrand.len() != grid.len() {
        return Err(Error::DimensionMismatch(integrand.len(), grid.len()));
    }
    let terms: Vec<f64> = grid.weights.iter().zip(integrand).map(|(w, v)| w * v).collect();
    Ok(pairwise_sum(&terms))
}

pub fn integrate_fn(grid: &AnnulusGrid, f: impl Fn(CylPoint) -> f64) -> f64 {
    let mut vals = Vec::with_capacity(grid.len());
    for &s in &grid.s {
        for &phi in &grid.phi {
            vals.push(f(chart_point(s, phi)));
        }
    }
    integrate(grid, &vals).expect("sizes agree by construction")
}

/// ⟨u, v⟩_{X_T} = ∫_{Ω_T} ∇_H u · ∇_H v.
pub fn xt_inner(u: &GridFunction, v: &GridFunction) -> Result<f64> {
    u.check_same(v)?;
    Ok(dot(&u.values, &u.grid.gram_apply(&v.values)))
}

/// Nodal quadrature of |∇_H u|² assembled pointwise through the chain rule;
/// agrees with xt_inner(u, u) for functions without Nyquist content in s.
pub fn xt_norm_sq_chain_rule(u: &GridFunction) -> Result<f64> {
    let grid = &u.grid;
    let beta = grid.params.beta();
    let ws = grid.ds(&u.values)?;
    let wp = grid.dphi(&u.values);
    let mut vals = Vec::with_capacity(grid.len());
    for i in 0..grid.ns {
        let s = grid.s[i];
        let e = (-beta * s).exp();
        for j in 0..grid.nphi {
            let k = i * grid.nphi + j;
            let us = e * (ws[k] - beta * u.values[k]);
            let up = e * wp[k];
            let p = chart_point(s, grid.phi[j]);
            let (ur, ut) = chain_rule(s, grid.phi[j], us, up);
            vals.push(ur * ur + 4.0 * p.r * p.r * ut * ut);
        }
    }
    integrate(grid, &vals)
}

/// ∫_{H^n} F dx for F given through its chart density g(s, φ) = e^{Qs} F:
/// the s-line is folded onto one period by summing the shifts s + kL,
/// |k| ≤ k_max, so decaying integrands keep spectral accuracy.
pub fn integrate_folded(grid: &AnnulusGrid, g: impl Fn(f64, f64) -> f64, k_max: usize) -> Result<f64> {
    let l = grid
        .log_period()
        .ok_or_else(|| Error::InvalidParameter("folding needs a periodic grid".into()))?;
    let k = k_max as i64;
    let mut terms = Vec::with_capacity(grid.len());
    for &s in &grid.s {
        for (j, &phi) in grid.phi.iter().enumerate() {
            let folded: f64 = (-k..=k).map(|kk| g(s + kk as f64 * l, phi)).sum();
            terms.push(grid.mass_w[j] * folded);
        }
    }
    Ok(pairwise_sum(&terms))
}
