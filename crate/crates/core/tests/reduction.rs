mod common;

use common::*;
use heisfowler::functional::*;
use heisfowler::heis::*;
use heisfowler::numerics::dot;
use heisfowler::periodize::PeriodizedBubble;
use heisfowler::quadrature::*;
use heisfowler::reduction::*;
use heisfowler::GridFunction;
use nalgebra::{DMatrix, SymmetricEigen};
use std::f64::consts::PI;
use std::sync::Arc;

fn p1() -> GroupParams {
    GroupParams::new(1).unwrap()
}

fn dense(op: &dyn LinearOperator) -> DMatrix<f64> {
    let n = op.dim();
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = op.apply(&e);
        for i in 0..n {
            m[(i, j)] = col[i];
        }
    }
    m
}

/// Generalized eigenvalues of (H, G) by Cholesky reduction, ascending.
fn dense_pencil(h: &DMatrix<f64>, g: &DMatrix<f64>) -> Vec<f64> {
    let l = g.clone().cholesky().unwrap().l();
    let li = l.clone().try_inverse().unwrap();
    let c = &li * h * li.transpose();
    let c = 0.5 * (&c + c.transpose());
    let mut ev: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().cloned().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

fn psi(grid: &Arc<heisfowler::AnnulusGrid>) -> (GridFunction, GridFunction) {
    let (_pb, psi, tau) = ansatz_on_grid(grid, 1.0, 1e-15).unwrap();
    (psi, tau)
}

#[test]
fn gram_operator_properties() {
    let g = build_grid(p1(), 5.0, 16, 8).unwrap();
    let gram = assemble_gram(&g);
    assert!(gram.is_symmetric());
    let m = dense(&gram);
    let asym = (&m - m.transpose()).amax();
    assert!(asym < 1e-12 * m.amax(), "{asym}");
    let ev = SymmetricEigen::new(m.clone()).eigenvalues;
    let min = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(min > 0.0, "smallest Gram eigenvalue {min}");
    let mut r = rng(60);
    for _ in 0..5 {
        let u = GridFunction::random_smooth(&g, &mut r).unwrap();
        let q = dot(&u.values, &gram.apply(&u.values));
        assert!(rel(q, xt_inner(&u, &u).unwrap()) < 1e-13);
    }
    // distinct s-Fourier modes of a fixed φ-profile are G-orthogonal
    let l = g.log_period().unwrap();
    let mode = |m: usize, sine: bool| {
        sample_w(&g, |s, phi| {
            let a = 2.0 * PI * m as f64 * s / l;
            (if sine { a.sin() } else { a.cos() }) * (1.0 + phi.sin() + 0.3 * phi.cos())
        })
        .unwrap()
    };
    let fs = [mode(0, false), mode(1, false), mode(1, true), mode(2, false), mode(3, true)];
    for i in 0..fs.len() {
        for j in 0..i {
            let a = xt_inner(&fs[i], &fs[j]).unwrap();
            assert!(a.abs() < 1e-12 * fs[i].xt_norm() * fs[j].xt_norm(), "{i},{j}: {a}");
        }
    }
}

#[test]
fn hessian_operator_properties() {
    let g = build_grid(p1(), 5.0, 16, 8).unwrap();
    let z = GridFunction::zeros(&g);
    let h0 = dense(&assemble_hessian(&z));
    assert!((&h0 - dense(&assemble_gram(&g))).amax() == 0.0);
    let (u, _) = psi(&g);
    let h = assemble_hessian(&u);
    let m = dense(&h);
    assert!((&m - m.transpose()).amax() < 1e-12 * m.amax());
    let mut r = rng(61);
    let phi = GridFunction::random_smooth(&g, &mut r).unwrap();
    let hphi = h.apply(&phi.values);
    for _ in 0..20 {
        let p = GridFunction::random_smooth(&g, &mut r).unwrap();
        let a = dot(&p.values, &hphi);
        let b = second_variation(&u, &phi, &p).unwrap();
        assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()));
    }
}

#[test]
fn spectrum_matches_dense_oracle() {
    let g = build_grid(p1(), 6.0, 16, 8).unwrap();
    let (u, tau) = psi(&g);
    let h = assemble_hessian(&u);
    let ev = dense_pencil(&dense(&h), &dense(&assemble_gram(&g)));
    let pairs = spectrum(&h, 6, &SpectrumOptions::default()).unwrap();
    for (p, e) in pairs.iter().zip(&ev) {
        assert!((p.value - e).abs() < 1e-8 * (1.0 + e.abs()), "{} vs {e}", p.value);
        assert!(p.residual <= 1e-8);
        assert!(rel(p.vector.xt_norm(), 1.0) < 1e-10);
    }
    // constrained: compare with the dense pencil on an explicit complement basis
    let cons = spectrum_constrained(&h, 4, &[&u, &tau], &SpectrumOptions::default()).unwrap();
    let n = g.len();
    let gm = dense(&assemble_gram(&g));
    let mut basis = Vec::new();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let ef = GridFunction::from_values(&g, e).unwrap();
        basis.push(project_orth(&ef, &[&u, &tau]).unwrap().values);
    }
    // columns span the complement (rank n - 2); restrict via SVD-free trick:
    // orthonormalize in G, dropping dependent columns
    let mut q: Vec<Vec<f64>> = Vec::new();
    for mut v in basis {
        for _ in 0..2 {
            for w in &q {
                let gw = g.gram_apply(w);
                let a = dot(&gw, &v);
                for (vi, wi) in v.iter_mut().zip(w) {
                    *vi -= a * wi;
                }
            }
        }
        let nv = dot(&v, &g.gram_apply(&v)).sqrt();
        if nv > 1e-8 {
            q.push(v.iter().map(|x| x / nv).collect());
        }
    }
    assert_eq!(q.len(), n - 2);
    let qm = DMatrix::from_fn(n, q.len(), |i, j| q[j][i]);
    let hm = dense(&h);
    let red = qm.transpose() * &hm * &qm;
    let gr = qm.transpose() * &gm * &qm;
    let evc = dense_pencil(&red, &gr);
    for (p, e) in cons.iter().zip(&evc) {
        assert!((p.value - e).abs() < 1e-8 * (1.0 + e.abs()), "{} vs {e}", p.value);
        assert!(xt_inner(&p.vector, &u).unwrap().abs() < 1e-10);
        assert!(xt_inner(&p.vector, &tau).unwrap().abs() < 1e-10 * tau.xt_norm());
    }
}

#[test]
fn spectrum_trivial_and_errors() {
    let g = build_grid(p1(), 6.0, 32, 16).unwrap();
    let z = GridFunction::zeros(&g);
    let h = assemble_hessian(&z);
    let pairs = spectrum(&h, 4, &SpectrumOptions::default()).unwrap();
    assert!(pairs.iter().all(|p| (p.value - 1.0).abs() < 1e-14));
    assert!(matches!(spectrum(&h, 2, &SpectrumOptions::default()), Err(heisfowler::Error::InvalidParameter(_))));
    let tight = SpectrumOptions { max_basis: 8, max_restarts: 0, tol: 1e-15, ..Default::default() };
    let (u, _) = psi(&g);
    match spectrum(&assemble_hessian(&u), 6, &tight) {
        Err(heisfowler::Error::EigenFailed { residual, .. }) => assert!(residual > 0.0),
        other => panic!("expected EigenFailed, got {other:?}"),
    }
}

#[test]
fn spectrum_is_deterministic() {
    let g = build_grid(p1(), 16.0, 64, 24).unwrap();
    let (u, _) = psi(&g);
    let h = assemble_hessian(&u);
    let a = spectrum(&h, 5, &SpectrumOptions::default()).unwrap();
    let b = spectrum(&h, 5, &SpectrumOptions::default()).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.value.to_bits(), y.value.to_bits());
    }
    let c = spectrum(&h, 5, &SpectrumOptions { seed: 99, ..Default::default() }).unwrap();
    for (x, y) in a.iter().zip(&c) {
        assert!((x.value - y.value).abs() < 1e-8);
    }
}

#[test]
fn projection_properties() {
    let g = build_grid(p1(), 9.0, 32, 16).unwrap();
    let mut r = rng(62);
    let (u, tau) = psi(&g);
    let w = GridFunction::random_smooth(&g, &mut r).unwrap();
    let p1w = project_orth(&w, &[&u, &tau]).unwrap();
    let p2w = project_orth(&p1w, &[&u, &tau]).unwrap();
    let diff = p1w.values.iter().zip(&p2w.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-12 * p1w.values.iter().fold(0.0f64, |a, b| a.max(b.abs())));
    for d in [&u, &tau] {
        assert!(xt_inner(&p1w, d).unwrap().abs() < 1e-12 * p1w.xt_norm() * d.xt_norm());
        assert!(project_orth(d, &[&u, &tau]).unwrap().xt_norm() < 1e-12 * d.xt_norm());
    }
    let twice = u.scaled(2.0);
    assert!(matches!(project_orth(&w, &[&u, &twice]), Err(heisfowler::Error::DegenerateDirections(_))));
}

#[test]
fn ansatz_pairing_splits_first_variation() {
    // A = 0 up to quadrature error; B carries dJ(Ψ)
    let t = 16.0;
    let g = build_grid(p1(), t, 64, 24).unwrap();
    let pb = PeriodizedBubble::new(p1(), 1.0, t, 1e-15).unwrap();
    let ps = sample_w(&g, |s, phi| pb.w_rep(s, phi)).unwrap();
    let mut r = rng(63);
    for _ in 0..10 {
        let u = GridFunction::random_smooth(&g, &mut r).unwrap();
        let u = u.scaled(1.0 / u.xt_norm());
        let (a, b) = ansatz_pairing(&pb, &u).unwrap();
        assert!(a.abs() < 1e-10, "{a}");
        assert!((a + b - first_variation(&ps, &u).unwrap()).abs() < 1e-11);
    }
}

#[test]
fn auxiliary_equation_large_period() {
    let t = 128.0;
    let g = build_grid(p1(), t, 96, 32).unwrap();
    let opts = NewtonOptions::default();
    let st = solve_auxiliary(&g, 1.0, &opts, None).unwrap();
    let (u0, tau) = psi(&g);
    assert!(st.residual_dual_norm < opts.tol);
    assert!(*st.history.last().unwrap() < opts.tol);
    assert!(st.newton_iters <= 10);
    let cosang = xt_inner(&st.w, &tau).unwrap() / (st.w_norm * tau.xt_norm());
    assert!(cosang.abs() < 1e-10, "{cosang}");
    assert!(st.w_norm / st.psi_norm < 0.2);
    // the tangential component vanishes by dilation symmetry
    assert!(st.full_dual_norm < 1e-7, "{}", st.full_dual_norm);

    // first step bounded by ‖(πHπ)⁻¹‖ · ‖π∇J(Ψ)‖
    let h = assemble_hessian(&u0);
    let ev = spectrum_constrained(&h, 6, &[&tau], &SpectrumOptions::default()).unwrap();
    assert!(ev.iter().any(|p| p.value > 0.0));
    let inv_norm = 1.0 / ev.iter().map(|p| p.value.abs()).fold(f64::INFINITY, f64::min);
    assert!(st.step_norms[0] <= inv_norm * st.history[0] * (1.0 + 1e-6), "{} vs {}", st.step_norms[0], inv_norm * st.history[0]);

    let u = st.solution(&u0).unwrap();
    let rep = verify_solution(&u, &SpectrumOptions::default()).unwrap();
    assert!(rep.positive && rep.min_u > 0.0);
    assert!(rep.minimal_period, "{:?}", rep.period_distances);
    assert_eq!(rep.morse_index, 1, "{:?}", rep.eigenvalues);
    assert!(rep.grad_dual_norm < 1e-7);
}

#[test]
fn correction_shrinks_with_period() {
    let opts = NewtonOptions::default();
    let mut ratios = Vec::new();
    for t in [128.0, 256.0] {
        let g = build_grid(p1(), t, 96, 32).unwrap();
        let st = solve_auxiliary(&g, 1.0, &opts, None).unwrap();
        ratios.push(st.w_norm / st.psi_norm);
    }
    assert!(ratios[1] < ratios[0], "{ratios:?}");
}

#[test]
fn newton_failure_carries_history() {
    let g = build_grid(p1(), 32.0, 64, 24).unwrap();
    let opts = NewtonOptions { max_iter: 2, ..Default::default() };
    match solve_auxiliary(&g, 1.0, &opts, None) {
        Err(heisfowler::Error::NewtonFailed { reason, history }) => {
            assert_eq!(reason, "max iterations");
            assert_eq!(history.len(), 3);
            assert!(history.iter().all(|h| h.is_finite()));
        }
        other => panic!("expected NewtonFailed, got {other:?}"),
    }
    assert!(solve_auxiliary(&g, 1.0, &NewtonOptions { tol: 0.0, ..Default::default() }, None).is_err());
}

#[test]
fn homogeneous_solution_fails_minimal_period() {
    // knorm^{-β} has an s-constant representative
    let g = build_grid(p1(), 16.0, 32, 16).unwrap();
    let u = sample(&g, |p| knorm(&p).powf(-1.0)).unwrap();
    let rep = verify_solution(&u, &SpectrumOptions::default()).unwrap();
    assert!(!rep.minimal_period);
    assert!(rep.period_distances.iter().all(|(_, d)| *d < 1e-13));
    assert!(rep.positive);
}

#[test]
fn bifurcation_scan_returns_stationary_point() {
    let t: f64 = 128.0;
    let g = build_grid(p1(), t, 96, 32).unwrap();
    let samples: Vec<f64> = (0..4).map(|i| t.powf(i as f64 / 4.0)).collect();
    let opts = NewtonOptions::default();
    let (u, rep) = bifurcation_scan(&g, &samples, &opts).unwrap();
    assert_eq!(rep.samples.len(), 4);
    assert!(rep.periodicity_gap < 1e-8 * rep.samples[0].phi.abs());
    assert!(grad_dual_norm(&u) < 1e-7);
    assert!(u.values.iter().all(|v| *v > 0.0));
    // Φ is dilation invariant, so the scan reports it flat
    assert!(rep.flat);
}

#[test]
fn whole_space_kernel() {
    let rep = whole_space_kernel_check(p1(), 1.0, 32.0, 128, 64, 6, &SpectrumOptions::default()).unwrap();
    assert!(rep.dlambda_alignment > 0.95, "{rep:?}");
    assert!(rep.negative_alignment > 0.9);
    assert!(rep.eigenvalues[0] < -1.5);
    assert!(rep.coercivity > 0.0);
    assert!(rep.coercivity_hardy > 0.0);
}

#[test]
fn empirical_threshold_brackets() {
    let opts = NewtonOptions::default();
    assert!(!construction_succeeds(p1(), 16.0, 64, 24, &opts));
    assert!(construction_succeeds(p1(), 128.0, 64, 24, &opts));
    let t0 = discover_t0(p1(), 16.0, 128.0, 64, 24, &opts, 5).unwrap();
    assert!(t0 > 16.0 && t0 <= 128.0);
    assert!(discover_t0(p1(), 128.0, 256.0, 64, 24, &opts, 2).is_err());
}
