mod common;

use common::*;
use kpls_core::intervals::{h_transpose_k, predictive_stderr, z_value};
use kpls_core::kernels::kernel_column;
use kpls_core::linalg::{dot, matvec, solve_upper, solve_upper_transpose};
use kpls_core::sensitivity::{alpha_jacobian_fd, default_fd_step, jacobian_fd, krylov_moments};
use kpls_core::{confidence_band, fit, Dataset, KernelMatrix, KplsModel, SensitivityCache, SigmaDof};
use rand::Rng;

fn query_columns(seed: u64, x: &[Vec<f64>], k: &KernelMatrix, count: usize) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..count)
        .map(|_| {
            let q = vec![r.random_range(-2.5..2.5), r.random_range(-2.5..2.5)];
            k.center_column(&kernel_column(k.spec(), x, &q).unwrap()).unwrap()
        })
        .collect()
}

fn jt_times(j: &kpls_core::DenseMatrix, v: &[f64]) -> Vec<f64> {
    matvec(&j.transpose(), v).unwrap()
}

/// The moment form of Hᵀk for a given m×m matrix N, applied through
/// `n_apply(v) = N v`:
/// Σ_j K^{j-1} { c_j (k - K T N Rᵀ k) + K (y - ŷ) u_jᵀ k } + T N Rᵀ k,
/// with U = R Nᵀ B⁻ᵀ. For a diagonal N this is the arrangement as printed.
fn moment_form(
    k: &KernelMatrix,
    y: &[f64],
    model: &KplsModel,
    m: usize,
    kx: &[f64],
    n_apply: &dyn Fn(&[f64]) -> Vec<f64>,
) -> Vec<f64> {
    let n = model.n();
    let mom = krylov_moments(k, y, model, m).unwrap();
    let yc = model.center_y(y).unwrap();
    let res: Vec<f64> = yc.iter().zip(model.yhat(m)).map(|(a, b)| a - b).collect();
    let rk: Vec<f64> = (1..=m).map(|j| dot(model.r(j), kx)).collect();
    let nrk = n_apply(&rk);
    let mut tnr = vec![0.0; n];
    for (l, a) in nrk.iter().enumerate() {
        for (v, t) in tnr.iter_mut().zip(model.t(l + 1)) {
            *v += a * t;
        }
    }
    // Uᵀk = B⁻¹ N Rᵀ k
    let utk = solve_upper(&mom.b, &nrk).unwrap();
    let ktnr = k.matvec(&tnr);
    let kres = k.matvec(&res);
    let mut out = tnr.clone();
    let mut power = vec![0.0; n];
    // Horner from j = m down to 1
    for j in (0..m).rev() {
        let mut term: Vec<f64> = (0..n).map(|i| mom.c[j] * (kx[i] - ktnr[i]) + kres[i] * utk[j]).collect();
        if j + 1 < m {
            let kp = k.matvec(&power);
            for (t, v) in term.iter_mut().zip(kp) {
                *t += v;
            }
        }
        power = term;
    }
    for (o, p) in out.iter_mut().zip(power) {
        *o += p;
    }
    out
}

#[test]
fn quadratic_path_matches_fd_jacobian_of_alpha() {
    for seed in 0..3 {
        let (x, y, k) = rbf_problem(seed, 25, 1.0);
        let model = fit(&k, &y, 4).unwrap();
        let queries = query_columns(50 + seed, &x, &k, 20);
        for m in 1..=4 {
            let j = alpha_jacobian_fd(&k, &y, m, default_fd_step(&y)).unwrap();
            let cache = SensitivityCache::new(&model, m).unwrap();
            for kx in &queries {
                let ours = h_transpose_k(&cache, &model, &k, m, kx).unwrap();
                let oracle = jt_times(&j, kx);
                let rel = (norm(&ours) - norm(&oracle)).abs() / norm(&oracle);
                assert!(rel <= 1e-3, "seed {seed} m {m}: {rel}");
                assert!(max_abs_diff(&ours, &oracle) <= 1e-3 * norm(&oracle));
            }
        }
    }
}

#[test]
fn moment_form_with_inverse_bidiagonal_n() {
    // N = L⁻ᵀ reproduces ∂α/∂y; the diagonal 1/‖K r_i‖ drops the
    // superdiagonal of L and does not
    let (x, y, k) = rbf_problem(7, 25, 1.0);
    let model = fit(&k, &y, 4).unwrap();
    let queries = query_columns(8, &x, &k, 5);
    let mut diag_best = f64::INFINITY;
    for m in 1..=4 {
        let j = alpha_jacobian_fd(&k, &y, m, default_fd_step(&y)).unwrap();
        let cache = SensitivityCache::new(&model, m).unwrap();
        let l = model.l_block(m).unwrap();
        let knorms = model.knorms()[..m].to_vec();
        let l_inv_t = |v: &[f64]| solve_upper_transpose(&l, v).unwrap();
        let diag = |v: &[f64]| v.iter().zip(&knorms).map(|(a, b)| a / b).collect::<Vec<_>>();
        for kx in &queries {
            let oracle = jt_times(&j, kx);
            let ours = h_transpose_k(&cache, &model, &k, m, kx).unwrap();
            let with_l = moment_form(&k, &y, &model, m, kx, &l_inv_t);
            let err = max_abs_diff(&with_l, &oracle) / norm(&oracle);
            assert!(err <= 1e-3, "m {m}: {err}");
            assert!(max_abs_diff(&with_l, &ours) <= 1e-6 * norm(&ours), "m {m}");
            if m > 1 {
                let with_diag = moment_form(&k, &y, &model, m, kx, &diag);
                diag_best = diag_best.min(max_abs_diff(&with_diag, &oracle) / norm(&oracle));
            }
        }
    }
    assert!(diag_best > 1e-3, "{diag_best}");
}

#[test]
fn alpha_jacobian_is_consistent_with_fit_jacobian() {
    let (_, y, k) = rbf_problem(9, 25, 1.0);
    for m in 1..=3 {
        let ja = alpha_jacobian_fd(&k, &y, m, default_fd_step(&y)).unwrap();
        let jy = jacobian_fd(&k, &y, m, default_fd_step(&y)).unwrap();
        let kja = k.matrix().matmul(&ja).unwrap();
        let scale = jy.max_abs();
        for a in 0..25 {
            for b in 0..25 {
                assert!((kja[(a, b)] - jy[(a, b)]).abs() <= 1e-3 * scale);
            }
        }
    }
}

#[test]
fn zero_column_and_sigma_scaling() {
    let (x, y, k) = rbf_problem(10, 20, 1.0);
    let model = fit(&k, &y, 3).unwrap();
    let cache = SensitivityCache::new(&model, 3).unwrap();
    let zero = vec![0.0; 20];
    assert!(h_transpose_k(&cache, &model, &k, 3, &zero).unwrap().iter().all(|v| *v == 0.0));
    assert_eq!(predictive_stderr(&cache, &model, &k, 3, &zero, 1.0).unwrap(), 0.0);
    let kx = &query_columns(11, &x, &k, 1)[0];
    let a = predictive_stderr(&cache, &model, &k, 3, kx, 0.7).unwrap();
    let b = predictive_stderr(&cache, &model, &k, 3, kx, 1.4).unwrap();
    assert_eq!(2.0 * a, b);
    assert!(predictive_stderr(&cache, &model, &k, 3, kx, 0.0).is_err());
    assert!(h_transpose_k(&cache, &model, &k, 2, kx).is_err());
}

#[test]
fn band_is_ordered_and_has_the_right_width() {
    let (x, y, k) = rbf_problem(12, 30, 1.0);
    let data = Dataset::new(x.clone(), y.clone()).unwrap();
    let model = fit(&k, &y, 5).unwrap();
    let grid: Vec<Vec<f64>> = (0..15).map(|i| vec![-3.0 + 0.4 * i as f64, 0.5]).collect();
    let band = confidence_band(&model, &k, &data, &grid, 4, 0.98, None, SigmaDof::Approx).unwrap();
    let z = z_value(0.98).unwrap();
    assert_eq!(band.z, z);
    for i in 0..grid.len() {
        assert!(band.stderr[i] >= 0.0);
        assert!(band.lower[i] <= band.prediction[i] && band.prediction[i] <= band.upper[i]);
        let width = band.upper[i] - band.lower[i];
        assert!((width - 2.0 * z * band.stderr[i]).abs() <= 1e-12 * width.max(1.0));
    }
    let exact = confidence_band(&model, &k, &data, &grid, 4, 0.98, None, SigmaDof::Exact).unwrap();
    let dof = kpls_core::dof_exact(&k, &y, &model, 4).unwrap().dof();
    let yc = model.center_y(&y).unwrap();
    let rss: f64 = yc.iter().zip(model.yhat(4)).map(|(a, b)| (a - b).powi(2)).sum();
    assert!(rel_err(exact.sigma, (rss / (30.0 - dof)).sqrt()) < 1e-12);
    assert!(band.sigma > 0.0 && band.sigma.is_finite());
}

#[test]
fn far_away_points_revert_to_the_mean() {
    let (x, y, k) = rbf_problem(13, 30, 0.5);
    let data = Dataset::new(x, y.clone()).unwrap();
    let model = fit(&k, &y, 4).unwrap();
    let far = vec![vec![40.0, -40.0]];
    let band = confidence_band(&model, &k, &data, &far, 4, 0.9, Some(1.0), SigmaDof::Approx).unwrap();
    // the centered column of a far point is -K𝟙/n + const, not zero, so the
    // limit is the mean shifted by the fit at the training centroid
    let kx = k.center_column(&vec![0.0; 30]).unwrap();
    let expect = kpls_core::predict(&model, &kx, 4).unwrap();
    assert!((band.prediction[0] - expect).abs() < 1e-12);
    let cache = SensitivityCache::new(&model, 4).unwrap();
    let se = predictive_stderr(&cache, &model, &k, 4, &kx, 1.0).unwrap();
    assert!((band.stderr[0] - se).abs() < 1e-12);
}
