//! Discrete Hessian and Gram operators, generalized spectra, kernel
//! diagnostics and the Lyapunov–Schmidt solver: projected Newton for the
//! auxiliary equation and a λ-scan for the bifurcation equation.
//!
//! All inner products are the X_T (Gram) product. With H = G - D and
//! D = diag((2*-1)|u|^{2*-2}) · mass ≥ 0, the pencil Hv = μGv is equivalent
//! to Bv = (1-μ)v for B = G⁻¹D, which is self-adjoint in the G-product.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::functional::{energy, gradient, grad_dual_norm, hardy_norm, potential_diag};
use crate::numerics::{axpy, dot};
use crate::periodize::PeriodizedBubble;
use crate::quadrature::{sample_w, AnnulusGrid, GridFunction};
use crate::bubble::Bubble;
use crate::heis::{CylField, GroupParams};

pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    fn is_symmetric(&self) -> bool;
}

#[derive(Debug, Clone)]
pub struct GramOperator {
    pub grid: Arc<AnnulusGrid>,
}

impl LinearOperator for GramOperator {
    fn dim(&self) -> usize {
        self.grid.len()
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.grid.gram_apply(x)
    }
    fn is_symmetric(&self) -> bool {
        true
    }
}

/// H = G - diag(potential).
#[derive(Debug, Clone)]
pub struct HessianOperator {
    pub grid: Arc<AnnulusGrid>,
    potential: Vec<f64>,
}

impl HessianOperator {
    pub fn potential(&self) -> &[f64] {
        &self.potential
    }
}

impl LinearOperator for HessianOperator {
    fn dim(&self) -> usize {
        self.grid.len()
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.grid.gram_apply(x);
        for ((yk, xk), dk) in y.iter_mut().zip(x).zip(&self.potential) {
            *yk -= dk * xk;
        }
        y
    }
    fn is_symmetric(&self) -> bool {
        true
    }
}

pub fn assemble_gram(grid: &Arc<AnnulusGrid>) -> GramOperator {
    GramOperator { grid: grid.clone() }
}

pub fn assemble_hessian(u: &GridFunction) -> HessianOperator {
    HessianOperator { grid: u.grid.clone(), potential: potential_diag(u) }
}

/// G-orthonormal basis of a direction set, for projections onto its
/// G-orthogonal complement.
#[derive(Debug, Clone)]
struct Constraint {
    dirs: Vec<Vec<f64>>,
    gdirs: Vec<Vec<f64>>,
}

/// Relative norm below which a direction counts as dependent on the others.
const DEGENERACY: f64 = 1e-10;

impl Constraint {
    fn new(grid: &AnnulusGrid, directions: &[&[f64]]) -> Result<Self> {
        let mut c = Constraint { dirs: Vec::new(), gdirs: Vec::new() };
        for d in directions {
            if d.len() != grid.len() {
                return Err(Error::DimensionMismatch(grid.len(), d.len()));
            }
            let n0 = dot(d, &grid.gram_apply(d)).max(0.0).sqrt();
            if !(n0 > 0.0) {
                return Err(Error::DegenerateDirections(0.0));
            }
            let mut v = d.to_vec();
            c.project(&mut v);
            c.project(&mut v);
            let gv = grid.gram_apply(&v);
            let n = dot(&v, &gv).max(0.0).sqrt();
            if n < DEGENERACY * n0 {
                return Err(Error::DegenerateDirections(n / n0));
            }
            c.dirs.push(v.iter().map(|x| x / n).collect());
            c.gdirs.push(gv.iter().map(|x| x / n).collect());
        }
        Ok(c)
    }

    fn project(&self, x: &mut [f64]) {
        for (d, gd) in self.dirs.iter().zip(&self.gdirs) {
            let a = dot(gd, x);
            axpy(-a, d, x);
        }
    }

    /// Euclidean adjoint of the projection: Pᵀ = G P G⁻¹.
    fn project_dual(&self, y: &mut [f64]) {
        for (d, gd) in self.dirs.iter().zip(&self.gdirs) {
            let a = dot(d, y);
            axpy(-a, gd, y);
        }
    }
}

/// G-orthogonal projection of w onto the complement of the directions.
pub fn project_orth(w: &GridFunction, directions: &[&GridFunction]) -> Result<GridFunction> {
    for d in directions {
        w.check_same(d)?;
    }
    let dirs: Vec<&[f64]> = directions.iter().map(|d| d.values.as_slice()).collect();
    let c = Constraint::new(&w.grid, &dirs)?;
    let mut v = w.values.clone();
    c.project(&mut v);
    c.project(&mut v);
    GridFunction::from_values(&w.grid, v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumOptions {
    /// Block size of the Krylov expansion (at least 4).
    pub block: usize,
    /// Basis size at which the iteration restarts.
    pub max_basis: usize,
    pub max_restarts: usize,
    /// Bound on ‖Hv - μGv‖_{G⁻¹} for G-normalized v.
    pub tol: f64,
    pub seed: u64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions { block: 4, max_basis: 360, max_restarts: 12, tol: 1e-8, seed: 7 }
    }
}

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    /// G-normalized.
    pub vector: GridFunction,
    pub residual: f64,
}

/// k smallest eigenpairs of Hv = μGv, sorted ascending.
pub fn spectrum(h: &HessianOperator, k: usize, opts: &SpectrumOptions) -> Result<Vec<EigenPair>> {
    spectrum_constrained(h, k, &[], opts)
}

/// As `spectrum`, restricted to the G-orthogonal complement of the
/// constraint directions.
pub fn spectrum_constrained(
    h: &HessianOperator,
    k: usize,
    constraints: &[&GridFunction],
    opts: &SpectrumOptions,
) -> Result<Vec<EigenPair>> {
    if k < 3 {
        return Err(Error::InvalidParameter(format!("need k ≥ 3 eigenpairs, got {k}")));
    }
    let grid = &h.grid;
    let n = grid.len();
    let dirs: Vec<&[f64]> = constraints.iter().map(|d| d.values.as_slice()).collect();
    let cons = Constraint::new(grid, &dirs)?;
    if k + cons.dirs.len() > n {
        return Err(Error::InvalidParameter(format!("k = {k} exceeds the space dimension")));
    }
    let d = &h.potential;
    let b = opts.block.max(4).max(k);
    let max_basis = opts.max_basis.clamp(2 * b + k, n.max(2 * b + k));

    // B x = P G⁻¹ D x on range(P)
    let apply_b = |x: &[f64]| {
        let dx: Vec<f64> = x.iter().zip(d).map(|(a, c)| a * c).collect();
        let mut y = grid.gram_solve(&dx);
        cons.project(&mut y);
        y
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut random_block = |count: usize| -> Vec<Vec<f64>> {
        (0..count).map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()).collect()
    };

    let mut kr = Krylov::default();
    let mut next = random_block(b);
    let mut total = 0usize;
    let mut restarts = 0usize;
    let mut worst = f64::INFINITY;
    loop {
        let mut added = 0;
        for mut x in next.drain(..) {
            cons.project(&mut x);
            if kr.push(grid, &cons, x, &apply_b, d) {
                added += 1;
                total += 1;
            }
        }
        let m = kr.v.len();
        if m >= k && (added == 0 || m >= 2 * b || m == n - cons.dirs.len()) {
            let (pairs, res) = kr.ritz(grid, k + b);
            worst = res[..k].iter().cloned().fold(0.0, f64::max);
            if worst <= opts.tol {
                let mut out: Vec<EigenPair> = pairs
                    .into_iter()
                    .take(k)
                    .zip(res)
                    .map(|((nu, vec), r)| EigenPair {
                        value: 1.0 - nu,
                        vector: GridFunction { grid: grid.clone(), values: vec },
                        residual: r,
                    })
                    .collect();
                out.sort_by(|a, b| a.value.total_cmp(&b.value));
                return Ok(out);
            }
            if m + b > max_basis {
                if restarts == opts.max_restarts {
                    return Err(Error::EigenFailed { residual: worst, iterations: total });
                }
                restarts += 1;
                let keep: Vec<Vec<f64>> = pairs.into_iter().map(|(_, v)| v).collect();
                kr = Krylov::default();
                for v in keep {
                    kr.push(grid, &cons, v, &apply_b, d);
                }
                next = kr.last_block_images(b);
                continue;
            }
        }
        if added == 0 {
            // invariant subspace: inject fresh directions
            if total > 4 * n {
                return Err(Error::EigenFailed { residual: worst, iterations: total });
            }
            next = random_block(b);
        } else {
            next = kr.last_block_images(added);
        }
    }
}

/// G-orthonormal Krylov basis with B-images and the Rayleigh matrix
/// T_ij = v_iᵀ D v_j = ⟨v_i, B v_j⟩_G.
#[derive(Default)]
struct Krylov {
    v: Vec<Vec<f64>>,
    gv: Vec<Vec<f64>>,
    bv: Vec<Vec<f64>>,
    t: Vec<Vec<f64>>,
}

impl Krylov {
    fn push(
        &mut self,
        grid: &AnnulusGrid,
        cons: &Constraint,
        mut x: Vec<f64>,
        apply_b: &dyn Fn(&[f64]) -> Vec<f64>,
        d: &[f64],
    ) -> bool {
        let n0 = dot(&x, &grid.gram_apply(&x)).max(0.0).sqrt();
        if !(n0 > 0.0) || !n0.is_finite() {
            return false;
        }
        for _ in 0..2 {
            for (v, gv) in self.v.iter().zip(&self.gv) {
                let a = dot(gv, &x);
                axpy(-a, v, &mut x);
            }
            cons.project(&mut x);
        }
        let gx = grid.gram_apply(&x);
        let nx = dot(&x, &gx).max(0.0).sqrt();
        if nx < 1e-10 * n0 {
            return false;
        }
        x.iter_mut().for_each(|a| *a /= nx);
        let gx: Vec<f64> = gx.iter().map(|a| a / nx).collect();
        let dx: Vec<f64> = x.iter().zip(d).map(|(a, c)| a * c).collect();
        let mut row: Vec<f64> = self.v.iter().map(|v| dot(v, &dx)).collect();
        row.push(dot(&x, &dx));
        for (i, r) in self.t.iter_mut().enumerate() {
            r.push(row[i]);
        }
        self.t.push(row);
        self.bv.push(apply_b(&x));
        self.v.push(x);
        self.gv.push(gx);
        true
    }

    fn last_block_images(&self, count: usize) -> Vec<Vec<f64>> {
        let m = self.bv.len();
        self.bv[m.saturating_sub(count)..].to_vec()
    }

    /// Leading `want` Ritz pairs (largest ν first) and G-norm residuals.
    fn ritz(&self, grid: &AnnulusGrid, want: usize) -> (Vec<(f64, Vec<f64>)>, Vec<f64>) {
        let m = self.v.len();
        let tm = DMatrix::from_fn(m, m, |i, j| 0.5 * (self.t[i][j] + self.t[j][i]));
        let eig = SymmetricEigen::new(tm);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let n = grid.len();
        let mut pairs = Vec::new();
        let mut res = Vec::new();
        for &c in order.iter().take(want.min(m)) {
            let nu = eig.eigenvalues[c];
            let mut y = vec![0.0; n];
            let mut by = vec![0.0; n];
            for i in 0..m {
                let a = eig.eigenvectors[(i, c)];
                axpy(a, &self.v[i], &mut y);
                axpy(a, &self.bv[i], &mut by);
            }
            let r: Vec<f64> = by.iter().zip(&y).map(|(p, q)| p - nu * q).collect();
            res.push(dot(&r, &grid.gram_apply(&r)).max(0.0).sqrt());
            pairs.push((nu, y));
        }
        (pairs, res)
    }
}

/// |⟨a, b⟩_G| / (‖a‖_G ‖b‖_G).
pub fn g_alignment(a: &GridFunction, b: &GridFunction) -> f64 {
    let ga = a.grid.gram_apply(&a.values);
    let ab = dot(&ga, &b.values);
    let aa = dot(&ga, &a.values);
    let bb = dot(&b.values, &b.grid.gram_apply(&b.values));
    (ab.abs() / (aa * bb).sqrt()).min(1.0)
}

/// Norm of the G-projection of the unit direction d onto the span of
/// G-orthonormal vectors.
pub fn subspace_alignment(d: &GridFunction, span: &[&GridFunction]) -> f64 {
    let gd = d.grid.gram_apply(&d.values);
    let dd = dot(&gd, &d.values);
    let s: f64 = span.iter().map(|v| dot(&gd, &v.values).powi(2)).sum();
    (s / dd).sqrt().min(1.0)
}

/// Eigenvalues with |μ| below this count as near-kernel.
pub const NEAR_KERNEL: f64 = 0.05;

#[derive(Debug, Clone, Serialize)]
pub struct KernelReport {
    pub lambda: f64,
    pub r_outer: f64,
    pub grid: (usize, usize),
    pub eigenvalues: Vec<f64>,
    pub near_kernel_count: usize,
    /// Projection of ∂_λω onto the near-kernel eigenspace.
    pub dlambda_alignment: f64,
    /// Best single-eigenvector alignment with ∂_λω.
    pub dlambda_best_cos: f64,
    /// Projection of ∂_tω onto the near-kernel eigenspace.
    pub dt_alignment: f64,
    /// Alignment of the negative eigenvector with ω.
    pub negative_alignment: f64,
    /// Smallest μ on the complement of {ω, ∂_λω, ∂_tω}.
    pub coercivity: f64,
    /// d²J(ω)[v,v]/‖v‖²_{hardy} for the corresponding eigenvector.
    pub coercivity_hardy: f64,
}

/// Kernel of d²J(ω_λ) on the whole-space surrogate {1/R ≤ knorm ≤ R}.
pub fn whole_space_kernel_check(
    params: GroupParams,
    lambda: f64,
    r_outer: f64,
    ns: usize,
    nphi: usize,
    k: usize,
    opts: &SpectrumOptions,
) -> Result<KernelReport> {
    let grid = AnnulusGrid::whole_space(params, r_outer, ns, nphi)?;
    let b = Bubble::new(params, lambda)?;
    let beta = params.beta();
    let om = sample_w(&grid, |s, phi| b.w_rep(s, phi))?;
    let dl = sample_w(&grid, |s, phi| b.w_rep_dlambda(s, phi))?;
    let dt = sample_w(&grid, |s, phi| {
        let p = crate::quadrature::chart_point(s, phi);
        (beta * s).exp() * b.jet(p).ut
    })?;
    let h = assemble_hessian(&om);
    let pairs = spectrum(&h, k, opts)?;
    let near: Vec<&GridFunction> = pairs.iter().filter(|p| p.value.abs() < NEAR_KERNEL).map(|p| &p.vector).collect();
    let dlambda_best_cos = pairs.iter().map(|p| g_alignment(&p.vector, &dl)).fold(0.0, f64::max);
    let negative_alignment = pairs
        .iter()
        .filter(|p| p.value < -NEAR_KERNEL)
        .map(|p| g_alignment(&p.vector, &om))
        .fold(0.0, f64::max);
    let comp = spectrum_constrained(&h, 3, &[&om, &dl, &dt], opts)?;
    let v = &comp[0].vector;
    let quad = dot(&v.values, &h.apply(&v.values));
    Ok(KernelReport {
        lambda,
        r_outer,
        grid: (ns, nphi),
        eigenvalues: pairs.iter().map(|p| p.value).collect(),
        near_kernel_count: near.len(),
        dlambda_alignment: subspace_alignment(&dl, &near),
        dlambda_best_cos,
        dt_alignment: subspace_alignment(&dt, &near),
        negative_alignment,
        coercivity: comp[0].value,
        coercivity_hardy: quad / hardy_norm(v).powi(2),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    #[serde(rename = "T")]
    pub t: f64,
    pub lambda: f64,
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
    pub negative_count: usize,
    /// Alignment of the most negative eigenvector with Ψ.
    pub negative_alignment: f64,
    /// Eigenvalue whose eigenvector is best aligned with ∂_λΨ, and the alignment.
    pub tangent_eigenvalue: f64,
    pub tangent_alignment: f64,
    /// Smallest μ on the complement of {Ψ, ∂_λΨ}.
    pub coercivity: f64,
    pub coercivity_hardy: f64,
    /// Smallest eigenvalues of the modes even and odd in φ (t ↦ -t).
    pub smallest_even: f64,
    pub smallest_odd: f64,
}

/// Spectral diagnostics of d²J_T at Ψ_λ (or at any u with the ansatz
/// directions supplied).
pub fn ansatz_spectrum(u: &GridFunction, psi: &GridFunction, tangent: &GridFunction, k: usize, opts: &SpectrumOptions) -> Result<SpectrumReport> {
    let h = assemble_hessian(u);
    let pairs = spectrum(&h, k, opts)?;
    let negative_count = pairs.iter().filter(|p| p.value < -MORSE_TOL).count();
    let negative_alignment = g_alignment(&pairs[0].vector, psi);
    let (ti, ta) = pairs
        .iter()
        .enumerate()
        .map(|(i, p)| (i, g_alignment(&p.vector, tangent)))
        .fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a });
    let comp = spectrum_constrained(&h, 3, &[psi, tangent], opts)?;
    let v = &comp[0].vector;
    let quad = dot(&v.values, &h.apply(&v.values));
    let (mut even, mut odd) = (f64::INFINITY, f64::INFINITY);
    for p in &pairs {
        if phi_parity(&p.vector) > 0.0 {
            even = even.min(p.value);
        } else {
            odd = odd.min(p.value);
        }
    }
    Ok(SpectrumReport {
        t: u.grid.period().unwrap_or(f64::NAN),
        lambda: f64::NAN,
        eigenvalues: pairs.iter().map(|p| p.value).collect(),
        residuals: pairs.iter().map(|p| p.residual).collect(),
        negative_count,
        negative_alignment,
        tangent_eigenvalue: pairs[ti].value,
        tangent_alignment: ta,
        coercivity: comp[0].value,
        coercivity_hardy: quad / hardy_norm(v).powi(2),
        smallest_even: even,
        smallest_odd: odd,
    })
}

/// ⟨v, Rv⟩_G / ‖v‖²_G for the reflection φ ↦ -φ: +1 even, -1 odd.
pub fn phi_parity(v: &GridFunction) -> f64 {
    let nphi = v.grid.nphi();
    let mut r = v.values.clone();
    for row in r.chunks_mut(nphi) {
        row.reverse();
    }
    let gv = v.grid.gram_apply(&v.values);
    dot(&gv, &r) / dot(&gv, &v.values)
}

/// Ψ_λ and ∂_λΨ_λ sampled on a periodic grid.
pub fn ansatz_on_grid(grid: &Arc<AnnulusGrid>, lambda: f64, tol: f64) -> Result<(PeriodizedBubble, GridFunction, GridFunction)> {
    let t = grid
        .period()
        .ok_or_else(|| Error::InvalidParameter("the ansatz needs a periodic grid".into()))?;
    let pb = PeriodizedBubble::new(grid.params, lambda, t, tol)?;
    let psi = sample_w(grid, |s, phi| pb.w_rep(s, phi))?;
    let tau = sample_w(grid, |s, phi| pb.w_rep_dlambda(s, phi))?;
    Ok((pb, psi, tau))
}

/// Splitting dJ(Ψ)[u] = A + B with A = Σ_k ∫∇ω_k·∇u - ω_k^{2*-1}u and
/// B = ∫(Σ_k ω_k^{2*-1} - Ψ^{2*-1})u, on the same quadrature.
pub fn ansatz_pairing(pb: &PeriodizedBubble, u: &GridFunction) -> Result<(f64, f64)> {
    let grid = &u.grid;
    let p = grid.params.p_crit;
    let psi = sample_w(grid, |s, phi| pb.w_rep(s, phi))?;
    let powsum = sample_w(grid, |s, phi| pb.w_rep_term_power(s, phi, p - 1.0))?;
    let nphi = grid.nphi();
    let mw = grid.mass_weights();
    let gpsi = grid.gram_apply(&psi.values);
    let mut a = dot(&gpsi, &u.values);
    let mut b = 0.0;
    for k in 0..grid.len() {
        let m = mw[k % nphi] * u.values[k];
        a -= m * powsum.values[k];
        b += m * (powsum.values[k] - psi.values[k].abs().powf(p - 2.0) * psi.values[k]);
    }
    Ok((a, b))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// MINRES relative residual.
    pub linear_tol: f64,
    pub max_linear: usize,
    /// Residual growth factor treated as divergence.
    pub divergence: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tol: 1e-8, max_iter: 40, linear_tol: 1e-12, max_linear: 800, divergence: 1e6 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReductionState {
    pub lambda: f64,
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(skip)]
    pub w: GridFunction,
    /// ‖π∇J_T(Ψ_λ + w)‖ in the X_T dual norm.
    pub residual_dual_norm: f64,
    /// Full gradient dual norm (tangential component included).
    pub full_dual_norm: f64,
    pub newton_iters: usize,
    pub history: Vec<f64>,
    /// ‖δ_i‖_{X_T} of the accepted Newton steps.
    pub step_norms: Vec<f64>,
    pub w_norm: f64,
    pub psi_norm: f64,
    pub energy: f64,
    pub min_eigenvalues: Vec<f64>,
}

impl ReductionState {
    pub fn solution(&self, psi: &GridFunction) -> Result<GridFunction> {
        psi.add(&self.w)
    }
}

/// Solve π∇J_T(Ψ_λ + w) = 0 for w ⊥_G ∂_λΨ_λ by projected Newton, each
/// step by MINRES in the G-product on π G⁻¹ H π.
pub fn solve_auxiliary(grid: &Arc<AnnulusGrid>, lambda: f64, opts: &NewtonOptions, start: Option<&GridFunction>) -> Result<ReductionState> {
    let t = grid
        .period()
        .ok_or_else(|| Error::InvalidParameter("the auxiliary equation needs a periodic grid".into()))?;
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter("newton tolerance must be positive".into()));
    }
    let (_pb, psi, tau) = ansatz_on_grid(grid, lambda, 1e-15)?;
    let cons = Constraint::new(grid, &[&tau.values])?;
    let mut w = match start {
        Some(w0) => {
            psi.check_same(w0)?;
            let mut v = w0.values.clone();
            cons.project(&mut v);
            v
        }
        None => vec![0.0; grid.len()],
    };
    let residual = |w: &[f64]| -> (f64, Vec<f64>, Vec<f64>) {
        let u = GridFunction { grid: grid.clone(), values: psi.values.iter().zip(w).map(|(a, b)| a + b).collect() };
        let g = gradient(&u);
        let mut r = grid.gram_solve(&g);
        cons.project(&mut r);
        (dot(&r, &g).max(0.0).sqrt(), r, u.values)
    };
    let mut history = Vec::new();
    let mut step_norms = Vec::new();
    let (mut res, mut r, mut u) = residual(&w);
    let r0 = res;
    history.push(res);
    let fail = |reason: &str, history: &[f64]| Error::NewtonFailed { reason: reason.into(), history: history.to_vec() };
    let mut iters = 0;
    while res >= opts.tol {
        if iters == opts.max_iter {
            return Err(fail("max iterations", &history));
        }
        iters += 1;
        let uf = GridFunction { grid: grid.clone(), values: u.clone() };
        let d = potential_diag(&uf);
        let rhs: Vec<f64> = r.iter().map(|x| -x).collect();
        let delta = minres_projected(grid, &cons, &d, &rhs, opts.linear_tol, opts.max_linear);
        let mut step = 1.0;
        loop {
            let trial: Vec<f64> = w.iter().zip(&delta).map(|(a, b)| a + step * b).collect();
            let (tres, tr, tu) = residual(&trial);
            if tres.is_finite() && tres < (1.0 - 1e-4 * step) * res {
                let mut next = trial;
                cons.project(&mut next);
                let dn: Vec<f64> = delta.iter().map(|x| step * x).collect();
                step_norms.push(dot(&dn, &grid.gram_apply(&dn)).max(0.0).sqrt());
                w = next;
                res = tres;
                r = tr;
                u = tu;
                break;
            }
            step *= 0.5;
            if step < 1.0 / 1024.0 {
                return Err(fail("line search stalled", &history));
            }
        }
        history.push(res);
        if !res.is_finite() || res > opts.divergence * r0.max(1e-300) {
            return Err(fail("diverged", &history));
        }
    }
    let wf = GridFunction { grid: grid.clone(), values: w };
    let uf = GridFunction { grid: grid.clone(), values: u };
    Ok(ReductionState {
        lambda,
        t,
        w_norm: wf.xt_norm(),
        psi_norm: psi.xt_norm(),
        w: wf,
        residual_dual_norm: res,
        full_dual_norm: grad_dual_norm(&uf),
        newton_iters: iters,
        history,
        step_norms,
        energy: energy(&uf),
        min_eigenvalues: Vec::new(),
    })
}

/// MINRES for π G⁻¹ H π x = b on range(π), self-adjoint in the G-product.
/// Only one Gram solve per iteration: G(Av) = πᵀ(Hv) and Hv = Gv - Dv.
fn minres_projected(grid: &AnnulusGrid, cons: &Constraint, d: &[f64], b: &[f64], rtol: f64, max_iter: usize) -> Vec<f64> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let gb = grid.gram_apply(b);
    let beta1 = dot(b, &gb).max(0.0).sqrt();
    if beta1 == 0.0 {
        return x;
    }
    let mut v: Vec<f64> = b.iter().map(|a| a / beta1).collect();
    let mut gv: Vec<f64> = gb.iter().map(|a| a / beta1).collect();
    let mut v_old = vec![0.0; n];
    let mut gv_old = vec![0.0; n];
    let mut w1 = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let (mut c1, mut s1, mut c2, mut s2) = (1.0, 0.0, 1.0, 0.0);
    let mut beta = 0.0;
    let mut eta = beta1;
    for _ in 0..max_iter {
        let hv: Vec<f64> = gv.iter().zip(&v).zip(d).map(|((g, x), dd)| g - dd * x).collect();
        let mut p = grid.gram_solve(&hv);
        cons.project(&mut p);
        let mut gp = hv;
        cons.project_dual(&mut gp);
        let alpha = dot(&p, &gv);
        axpy(-alpha, &v, &mut p);
        axpy(-beta, &v_old, &mut p);
        axpy(-alpha, &gv, &mut gp);
        axpy(-beta, &gv_old, &mut gp);
        let beta_next = dot(&p, &gp).max(0.0).sqrt();

        let eps = s2 * beta;
        let dbar = c2 * beta;
        let delta = c1 * dbar + s1 * alpha;
        let gbar = -s1 * dbar + c1 * alpha;
        let gamma = gbar.hypot(beta_next);
        if gamma == 0.0 {
            break;
        }
        let (c, s) = (gbar / gamma, beta_next / gamma);
        let wn: Vec<f64> = (0..n).map(|i| (v[i] - delta * w1[i] - eps * w2[i]) / gamma).collect();
        axpy(c * eta, &wn, &mut x);
        eta *= -s;
        w2 = std::mem::replace(&mut w1, wn);
        c2 = c1;
        s2 = s1;
        c1 = c;
        s1 = s;
        if eta.abs() <= rtol * beta1 || beta_next == 0.0 {
            break;
        }
        v_old = std::mem::replace(&mut v, p.iter().map(|a| a / beta_next).collect());
        gv_old = std::mem::replace(&mut gv, gp.iter().map(|a| a / beta_next).collect());
        beta = beta_next;
    }
    cons.project(&mut x);
    x
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanSample {
    pub lambda: f64,
    /// Φ(λ) = J_T(Ψ_λ + w(λ)).
    pub phi: f64,
    /// Tangential gradient component ⟨∇J_T(u), ∂_λΨ⟩ / ‖∂_λΨ‖.
    pub tangential: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanReport {
    pub lambda0: f64,
    pub samples: Vec<ScanSample>,
    /// Φ is constant below resolution; λ0 is then the sample with the
    /// smallest tangential gradient.
    pub flat: bool,
    /// |Φ(λ_first) - Φ(T λ_first)|.
    pub periodicity_gap: f64,
    pub state: ReductionState,
}

/// Relative variation of Φ treated as flat.
pub const FLAT_TOL: f64 = 1e-9;

fn tangential(grid: &Arc<AnnulusGrid>, st: &ReductionState) -> Result<f64> {
    let (_pb, psi, tau) = ansatz_on_grid(grid, st.lambda, 1e-15)?;
    let u = psi.add(&st.w)?;
    Ok(dot(&gradient(&u), &tau.values) / tau.xt_norm())
}

/// Evaluate Φ on the samples, locate a stationary point and return the
/// corrected solution u = Ψ_{λ0} + w(λ0).
pub fn bifurcation_scan(grid: &Arc<AnnulusGrid>, lambda_samples: &[f64], opts: &NewtonOptions) -> Result<(GridFunction, ScanReport)> {
    let t = grid
        .period()
        .ok_or_else(|| Error::InvalidParameter("the scan needs a periodic grid".into()))?;
    if lambda_samples.is_empty() {
        return Err(Error::InvalidParameter("no λ samples".into()));
    }
    let mut states = Vec::new();
    let mut samples = Vec::new();
    for &l in lambda_samples {
        let st = solve_auxiliary(grid, l, opts, None)?;
        samples.push(ScanSample { lambda: l, phi: st.energy, tangential: tangential(grid, &st)?, residual: st.residual_dual_norm });
        states.push(st);
    }
    let wrap = solve_auxiliary(grid, lambda_samples[0] * t, opts, None)?;
    let periodicity_gap = (wrap.energy - states[0].energy).abs();

    let (lo, hi) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, s| (a.0.min(s.phi), a.1.max(s.phi)));
    let flat = hi - lo <= FLAT_TOL * hi.abs().max(lo.abs()).max(1.0);
    let best = if flat {
        (0..samples.len())
            .min_by(|&a, &b| samples[a].tangential.abs().total_cmp(&samples[b].tangential.abs()))
            .unwrap()
    } else {
        match (0..samples.len().saturating_sub(1)).find(|&i| samples[i].tangential * samples[i + 1].tangential <= 0.0) {
            Some(i) => {
                let st = refine_root(grid, &samples[i], &samples[i + 1], opts)?;
                states.push(st);
                states.len() - 1
            }
            None => (0..samples.len()).min_by(|&a, &b| samples[a].phi.total_cmp(&samples[b].phi)).unwrap(),
        }
    };
    let state = states.swap_remove(best);
    let (_pb, psi, _tau) = ansatz_on_grid(grid, state.lambda, 1e-15)?;
    let u = state.solution(&psi)?;
    Ok((u, ScanReport { lambda0: state.lambda, samples, flat, periodicity_gap, state }))
}

/// Root of the tangential gradient between two bracketing samples
/// (bisection-safeguarded secant in log λ).
fn refine_root(grid: &Arc<AnnulusGrid>, a: &ScanSample, b: &ScanSample, opts: &NewtonOptions) -> Result<ReductionState> {
    let (mut xa, mut fa) = (a.lambda.ln(), a.tangential);
    let (mut xb, mut fb) = (b.lambda.ln(), b.tangential);
    let mut best: Option<(f64, ReductionState)> = None;
    for _ in 0..40 {
        let sec = if fb != fa { xb - fb * (xb - xa) / (fb - fa) } else { 0.5 * (xa + xb) };
        let x = if sec > xa.min(xb) && sec < xa.max(xb) { sec } else { 0.5 * (xa + xb) };
        let st = solve_auxiliary(grid, x.exp(), opts, None)?;
        let f = tangential(grid, &st)?;
        let done = f.abs() < opts.tol || (xb - xa).abs() < 1e-13;
        if best.as_ref().is_none_or(|(bf, _)| f.abs() < *bf) {
            best = Some((f.abs(), st));
        }
        if done {
            break;
        }
        if f * fa <= 0.0 {
            xb = x;
            fb = f;
        } else {
            xa = x;
            fa = f;
        }
    }
    Ok(best.expect("at least one refinement step").1)
}

/// Eigenvalues below -MORSE_TOL count towards the Morse index.
pub const MORSE_TOL: f64 = 1e-6;
/// Relative G-distance from the δ_{T^{1/m}}-periodic subspace required for
/// the minimal-period check.
pub const PERIOD_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub grad_dual_norm: f64,
    pub min_u: f64,
    pub positive: bool,
    /// (m, relative distance from the T^{1/m}-periodic subspace).
    pub period_distances: Vec<(usize, f64)>,
    pub minimal_period: bool,
    pub morse_index: usize,
    pub eigenvalues: Vec<f64>,
}

/// Relative X_T distance of u from δ_{T^{1/m}}-periodic functions
/// (s-modes that are multiples of m).
pub fn period_distance(u: &GridFunction, m: usize) -> Result<f64> {
    let kept = u.grid.filter_s_modes(&u.values, |f| f % m as i64 == 0)?;
    let diff: Vec<f64> = u.values.iter().zip(&kept).map(|(a, b)| a - b).collect();
    let g = u.grid.gram_apply(&diff);
    let n = u.xt_norm();
    Ok(dot(&diff, &g).max(0.0).sqrt() / n)
}

pub fn verify_solution(u: &GridFunction, opts: &SpectrumOptions) -> Result<VerificationReport> {
    let grid = &u.grid;
    let mut min_u = f64::INFINITY;
    for i in 0..grid.ns() {
        for j in 0..grid.nphi() {
            min_u = min_u.min(u.physical(i, j));
        }
    }
    let mut period_distances = Vec::new();
    for m in 2..=6 {
        period_distances.push((m, period_distance(u, m)?));
    }
    let minimal_period = period_distances.iter().all(|(_, d)| *d > PERIOD_TOL);
    let h = assemble_hessian(u);
    let mut k = 6;
    let pairs = loop {
        let pairs = spectrum(&h, k, opts)?;
        if pairs.iter().any(|p| p.value >= -MORSE_TOL) || k >= 48 {
            break pairs;
        }
        k *= 2;
    };
    Ok(VerificationReport {
        grad_dual_norm: grad_dual_norm(u),
        min_u,
        positive: min_u > 0.0,
        period_distances,
        minimal_period,
        morse_index: pairs.iter().filter(|p| p.value < -MORSE_TOL).count(),
        eigenvalues: pairs.iter().map(|p| p.value).collect(),
    })
}

/// Newton success at period T: converged, and the corrected solution keeps
/// its minimal period (no collapse onto the homogeneous solution).
pub fn construction_succeeds(params: GroupParams, t: f64, ns: usize, nphi: usize, opts: &NewtonOptions) -> bool {
    let Ok(grid) = crate::quadrature::build_grid(params, t, ns, nphi) else {
        return false;
    };
    let Ok(st) = solve_auxiliary(&grid, 1.0, opts, None) else {
        return false;
    };
    let Ok((_pb, psi, _tau)) = ansatz_on_grid(&grid, 1.0, 1e-15) else {
        return false;
    };
    let Ok(u) = st.solution(&psi) else {
        return false;
    };
    (2..=6).all(|m| period_distance(&u, m).is_ok_and(|d| d > PERIOD_TOL))
}

/// Empirical T₀: bisection in log T on construction success between a
/// failing `lo` and a succeeding `hi`.
pub fn discover_t0(params: GroupParams, lo: f64, hi: f64, ns: usize, nphi: usize, opts: &NewtonOptions, steps: usize) -> Result<f64> {
    if construction_succeeds(params, lo, ns, nphi, opts) || !construction_succeeds(params, hi, ns, nphi, opts) {
        return Err(Error::InvalidParameter(format!("[{lo}, {hi}] does not bracket the construction threshold")));
    }
    let (mut a, mut b) = (lo.ln(), hi.ln());
    for _ in 0..steps {
        let m = 0.5 * (a + b);
        if construction_succeeds(params, m.exp(), ns, nphi, opts) {
            b = m;
        } else {
            a = m;
        }
    }
    Ok(b.exp())
}
