mod common;

use common::*;
use kpls_core::kernels::{self, gram};
use kpls_core::linalg::trace_powers;
use kpls_core::sensitivity::{
    self, chebyshev, default_fd_step, dof_from_moments, exact_spectrum, jacobian_fd, krylov_moments, saad_bound,
};
use kpls_core::{dof_approx, dof_exact, fit, DenseMatrix, KernelMatrix, KernelSpec};
use proptest::prelude::*;
use rand::Rng;

/// Uncentered rbf problem on well separated 1-D points, so that K is
/// comfortably full rank and the fit runs to m = n.
fn full_rank_problem(seed: u64, n: usize) -> (Vec<f64>, KernelMatrix) {
    let mut r = rng(seed);
    let x: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 + r.random_range(-0.2..0.2)]).collect();
    let y: Vec<f64> = x.iter().map(|p| (0.4 * p[0]).sin() + 0.3 * r.random_range(-1.0..1.0)).collect();
    (y, gram(&KernelSpec::rbf(1.0).unwrap(), &x).unwrap())
}

#[test]
fn identity_kernel_has_full_dof() {
    let n = 7;
    let k = KernelMatrix::from_dense(DenseMatrix::identity(n), KernelSpec::Linear).unwrap();
    let y: Vec<f64> = (0..n).map(|i| i as f64 - 2.5).collect();
    let model = fit(&k, &y, 1).unwrap();
    assert!((dof_exact(&k, &y, &model, 1).unwrap().dof() - n as f64).abs() < 1e-12);
    let j = jacobian_fd(&k, &y, 1, default_fd_step(&y)).unwrap();
    for a in 0..n {
        for b in 0..n {
            let target = if a == b { 1.0 } else { 0.0 };
            assert!((j[(a, b)] - target).abs() < 1e-6);
        }
    }
}

#[test]
fn exact_dof_matches_finite_differences() {
    for seed in 0..4 {
        for &width in &[0.5, 1.0, 2.0] {
            let (_, y, k) = rbf_problem(seed, 30, width);
            let model = fit(&k, &y, 5).unwrap();
            for m in 1..=model.actual_m().min(5) {
                let exact = dof_exact(&k, &y, &model, m).unwrap().dof();
                let fd = jacobian_fd(&k, &y, m, default_fd_step(&y)).unwrap().trace();
                assert!((exact - fd).abs() <= 1e-3, "seed {seed} width {width} m {m}: {exact} vs {fd}");
            }
        }
    }
}

#[test]
fn moment_expansion_agrees_with_spectral_form() {
    for seed in 0..3 {
        let (_, y, k) = rbf_problem(10 + seed, 30, 1.0);
        let model = fit(&k, &y, 5).unwrap();
        let eigs = na_eigenvalues(k.matrix());
        let traces: Vec<f64> = (1..=5).map(|j| trace_powers(&eigs, j).unwrap()).collect();
        for m in 1..=4 {
            let a = dof_from_moments(&k, &y, &model, m, &traces).unwrap();
            let b = dof_exact(&k, &y, &model, m).unwrap();
            let tol = 1e-5 * b.dof().max(1.0);
            assert!((a.dof() - b.dof()).abs() <= tol, "m {m}: {} vs {}", a.dof(), b.dof());
            assert!((a.term_trace - b.term_trace).abs() <= tol);
            assert!((a.term_latent - b.term_latent).abs() <= tol);
            assert!((a.term_residual - b.term_residual).abs() <= tol);
        }
    }
}

#[test]
fn approximation_is_exact_at_full_dimension() {
    for seed in 0..3 {
        let n = 30 + 10 * seed as usize;
        let (y, k) = full_rank_problem(seed, n);
        let model = fit(&k, &y, n).unwrap();
        assert_eq!(model.actual_m(), n, "seed {seed} broke down");
        let spectrum = exact_spectrum(&k, &y, &model, n).unwrap();
        for m in 1..=n {
            let exact = spectrum.dof(&model, m).unwrap().dof();
            let approx = dof_approx(&k, &y, &model, m, n).unwrap().dof();
            assert!((exact - approx).abs() <= 1e-6 * exact.max(1.0), "n {n} m {m}: {exact} vs {approx}");
        }
    }
}

#[test]
fn full_fit_has_n_degrees_of_freedom() {
    let (y, k) = full_rank_problem(4, 20);
    let model = fit(&k, &y, 20).unwrap();
    assert_eq!(model.actual_m(), 20);
    assert!((dof_exact(&k, &y, &model, 20).unwrap().dof() - 20.0).abs() < 1e-4);
    let j = jacobian_fd(&k, &y, 20, default_fd_step(&y)).unwrap();
    for a in 0..20 {
        for b in 0..20 {
            let target = if a == b { 1.0 } else { 0.0 };
            assert!((j[(a, b)] - target).abs() < 1e-4);
        }
    }
}

#[test]
fn shared_spectrum_matches_single_calls() {
    let (_, y, k) = rbf_problem(20, 40, 1.0);
    let model = fit(&k, &y, 8).unwrap();
    let spectrum = exact_spectrum(&k, &y, &model, 8).unwrap();
    for m in 1..=8 {
        let a = spectrum.dof(&model, m).unwrap().dof();
        let b = dof_exact(&k, &y, &model, m).unwrap().dof();
        assert!((a - b).abs() < 1e-10 * b);
    }
}

#[test]
fn krylov_moments_single_component() {
    let (_, y, k) = rbf_problem(21, 20, 1.0);
    let model = fit(&k, &y, 3).unwrap();
    let mom = krylov_moments(&k, &y, &model, 1).unwrap();
    let yc = model.center_y(&y).unwrap();
    let ky = k.matvec(&yc);
    let nky = norm(&ky);
    assert!(rel_err(mom.b.get(0, 0), nky) < 1e-13);
    let t1y: f64 = model.t(1).iter().zip(&yc).map(|(a, b)| a * b).sum();
    assert!(rel_err(mom.c[0], t1y / nky) < 1e-13);
}

#[test]
fn krylov_moments_definitions() {
    let (_, y, k) = rbf_problem(22, 30, 1.0);
    let model = fit(&k, &y, 5).unwrap();
    let mom = krylov_moments(&k, &y, &model, 5).unwrap();
    assert!(mom.lower_residual <= 1e-6);
    let b = mom.b.as_dense();
    for i in 0..5 {
        for j in 0..i {
            assert_eq!(b[(i, j)], 0.0);
        }
    }
    // T = V Bᵀ
    let vbt = mom.v.matmul(&b.transpose()).unwrap();
    let t = DenseMatrix::from_columns(model.t_columns()).unwrap();
    for r in 0..30 {
        for c in 0..5 {
            assert!((vbt[(r, c)] - t[(r, c)]).abs() <= 1e-8);
        }
    }
    // B c = Tᵀy
    let yc = model.center_y(&y).unwrap();
    let bc = kpls_core::linalg::matvec(b, &mom.c).unwrap();
    for l in 0..5 {
        let tty: f64 = model.t(l + 1).iter().zip(&yc).map(|(a, b)| a * b).sum();
        assert!((bc[l] - tty).abs() <= 1e-8 * norm(&yc));
    }
}

#[test]
fn dof_is_at_least_m_on_sinc_data_small_widths() {
    for seed in 0..5 {
        let (x, y) = sinc_data(seed, 100, 0.1);
        for &w in &[0.01, 0.1] {
            let k = kernels::center(&gram(&KernelSpec::rbf(w).unwrap(), &x).unwrap()).unwrap();
            let model = fit(&k, &y, 15).unwrap();
            let top = model.actual_m();
            let spectrum = exact_spectrum(&k, &y, &model, top).unwrap();
            for m in 1..=top {
                let d = spectrum.dof(&model, m).unwrap().dof();
                assert!(d >= m as f64 - 1e-6, "seed {seed} width {w} m {m}: {d}");
            }
        }
    }
}

#[test]
fn dof_can_drop_below_m() {
    // at width 1 the fit can use fewer than m degrees of freedom; the
    // finite-difference trace confirms the value
    let (x, y) = sinc_data(2, 100, 0.1);
    let k = kernels::center(&gram(&KernelSpec::rbf(1.0).unwrap(), &x).unwrap()).unwrap();
    let model = fit(&k, &y, 6).unwrap();
    let exact = dof_exact(&k, &y, &model, 6).unwrap().dof();
    let fd = jacobian_fd(&k, &y, 6, default_fd_step(&y)).unwrap().trace();
    assert!((exact - fd).abs() < 1e-4, "{exact} vs {fd}");
    assert!(exact < 5.0, "{exact}");
}

#[test]
fn saad_left_inequality() {
    for seed in 0..3 {
        let (_, y, k) = rbf_problem(30 + seed, 40, 1.0);
        let model = fit(&k, &y, 8).unwrap();
        let report = saad_bound(&k, &y, &model, 8).unwrap();
        let lam1 = report.rows[0].lambda;
        assert!(report.min_gap() >= -1e-6 * lam1);
        assert!(report.rows[0].gamma.is_none());
    }
}

#[test]
fn saad_gaps_vanish_at_full_dimension() {
    let (y, k) = full_rank_problem(5, 16);
    let model = fit(&k, &y, 16).unwrap();
    let report = saad_bound(&k, &y, &model, 16).unwrap();
    let lam1 = report.rows[0].lambda;
    for row in &report.rows {
        assert!(row.gap.abs() <= 1e-6 * lam1);
    }
}

#[test]
fn chebyshev_values() {
    assert_eq!(chebyshev(0, 2.0), 1.0);
    assert_eq!(chebyshev(2, 2.0), 7.0);
    assert_eq!(chebyshev(3, 2.0), 26.0);
    for l in 0..6 {
        assert!((chebyshev(l, 0.3) - (l as f64 * 0.3f64.acos()).cos()).abs() < 1e-14);
    }
}

#[test]
fn truncated_space_sets_warning() {
    let k = KernelMatrix::from_dense(DenseMatrix::identity(5), KernelSpec::Linear).unwrap();
    let y = vec![1.0, 2.0, 3.0, 4.0, 5.0];
    let model = fit(&k, &y, 3).unwrap();
    let report = dof_approx(&k, &y, &model, 1, 3).unwrap();
    assert!(report.warning.is_some());
    assert_eq!(report.m_max_used, 1);
    assert!(report.dof_approx.is_some() && report.dof_exact.is_none());
}

#[test]
fn approximation_error_shrinks_with_m_max() {
    let (x, y) = sinc_data(0, 100, 0.1);
    let k = kernels::center(&gram(&KernelSpec::rbf(1.0).unwrap(), &x).unwrap()).unwrap();
    let model = fit(&k, &y, 30).unwrap();
    let spectrum = exact_spectrum(&k, &y, &model, 10).unwrap();
    for m in 1..=10.min(model.actual_m()) {
        let exact = spectrum.dof(&model, m).unwrap().dof();
        let e_small = (dof_approx(&k, &y, &model, m, m).unwrap().dof() - exact).abs();
        let e_large = (dof_approx(&k, &y, &model, m, 30).unwrap().dof() - exact).abs();
        assert!(e_large <= 0.1, "m {m}: {e_large}");
        assert!(e_large <= e_small + 1e-9, "m {m}: {e_large} > {e_small}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn report_terms_add_up(seed in 0u64..10_000, width in 0.4f64..2.5, m in 1usize..8) {
        let (_, y, k) = rbf_problem(seed, 30, width);
        let model = fit(&k, &y, 10).unwrap();
        let m = m.min(model.actual_m());
        for r in [dof_exact(&k, &y, &model, m).unwrap(), dof_approx(&k, &y, &model, m, model.actual_m()).unwrap()] {
            let total = r.term_trace - r.term_latent + r.term_residual + r.plus_m as f64;
            prop_assert!((total - r.dof()).abs() <= 1e-12 * total.abs().max(1.0));
            prop_assert_eq!(r.plus_m, m);
        }
    }

    #[test]
    fn exact_path_is_exactness_limit(seed in 0u64..10_000) {
        let (y, k) = full_rank_problem(seed, 24);
        let model = fit(&k, &y, 24).unwrap();
        prop_assume!(model.actual_m() == 24);
        let spectrum = exact_spectrum(&k, &y, &model, 24).unwrap();
        for m in [1, 5, 12, 24] {
            let e = spectrum.dof(&model, m).unwrap().dof();
            let a = sensitivity::dof_approx(&k, &y, &model, m, 24).unwrap().dof();
            prop_assert!((e - a).abs() <= 1e-6 * e.max(1.0));
        }
    }
}
