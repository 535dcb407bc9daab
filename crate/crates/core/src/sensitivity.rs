//! Degrees of freedom of the fit and the finite-difference oracles used to
//! check them.
//!
//! With θ_1..θ_m the Ritz values of D_m = L_mᵀL_m, the fit after m
//! components is ŷ = p(K)y with p(λ) = 1 - π(λ), π(λ) = ∏(1 - λ/θ_k). The
//! derivative of ŷ with respect to y works out to p(K) + 2TTᵀπ(K), so
//!
//! ```text
//! DoF = Σ_i p(λ_i) + 2 Σ_i π(λ_i) ‖Tᵀu_i‖²
//! ```
//!
//! over the eigenpairs (λ_i, u_i) of K. This is the same quantity as the
//! moment expansion Σ_j c_j tr(K^j) - Σ_j c_j Σ_l t_lᵀK^j t_l +
//! (y - ŷ)ᵀ Σ_j K^j v_j + m (see [`dof_from_moments`]), but it avoids the
//! monomial coefficients c_j, which grow like the inverse powers of the
//! smallest Ritz value and cancel catastrophically beyond a handful of
//! components.
//!
//! π(λ_i) is itself badly conditioned as a product when λ_i sits next to a
//! converged Ritz value, so it is also read off the residual:
//! π(K)y = y - ŷ gives π(λ_i) = u_iᵀ(y - ŷ) / u_iᵀy, and in the Krylov
//! coordinates of D_M, π(μ_k) = ρ_{m+1} s_{m+1,k} / (ρ_1 s_{1,k}). Each
//! value is taken from whichever route has the smaller error estimate.

use rayon::prelude::*;

use crate::error::{KplsError, Result};
use crate::kernels::KernelMatrix;
use crate::kpls::{self, KplsModel};
use crate::linalg::{
    self, solve_upper, solve_upper_transpose, spectral_coordinates, symtri_eigen, symtri_eigenvalues,
    DenseMatrix, SpectralCoordinates, UpperTriangular,
};

/// Monomial quantities: `B_ij = ⟨t_i, K^j y⟩`, `c = B⁻¹Tᵀy`, `V = T B⁻ᵀ`.
#[derive(Debug, Clone)]
pub struct KrylovMoments {
    pub b: UpperTriangular,
    pub c: Vec<f64>,
    /// n×m
    pub v: DenseMatrix,
    /// Largest `|⟨t_i, K^j y⟩|` with i > j before it was zeroed, relative to max |B|.
    pub lower_residual: f64,
}

pub fn krylov_moments(k: &KernelMatrix, y: &[f64], model: &KplsModel, m: usize) -> Result<KrylovMoments> {
    model.check_m(m)?;
    let yc = model.center_y(y)?;
    let n = model.n();
    let mut q = yc.clone();
    let mut b = DenseMatrix::zeros(m, m);
    for j in 0..m {
        q = k.matvec(&q);
        for i in 0..m {
            b[(i, j)] = linalg::dot(model.t(i + 1), &q);
        }
    }
    let scale = b.max_abs();
    let mut lower: f64 = 0.0;
    for i in 0..m {
        for j in 0..i {
            lower = lower.max(b[(i, j)].abs());
            b[(i, j)] = 0.0;
        }
    }
    let b = UpperTriangular::new(b)?;
    let tol = b.tol_singular();
    if let Some(i) = (0..m).find(|&i| !(b.get(i, i).abs() > tol)) {
        return Err(KplsError::NearBreakdown { index: i + 1 });
    }
    let tty: Vec<f64> = (1..=m).map(|i| linalg::dot(model.t(i), &yc)).collect();
    let c = solve_upper(&b, &tty)?;
    // row i of V solves B x = (row i of T)
    let mut v = DenseMatrix::zeros(n, m);
    let mut row = vec![0.0; m];
    for r in 0..n {
        for (l, slot) in row.iter_mut().enumerate() {
            *slot = model.t(l + 1)[r];
        }
        let x = solve_upper(&b, &row)?;
        v.row_mut(r).copy_from_slice(&x);
    }
    Ok(KrylovMoments { b, c, v, lower_residual: if scale > 0.0 { lower / scale } else { 0.0 } })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DofReport {
    pub m: usize,
    pub dof_exact: Option<f64>,
    pub dof_approx: Option<f64>,
    pub m_max_used: usize,
    /// `Σ_j c_j tr(K^j)`, or with `tr(D^j)` for the approximation.
    pub term_trace: f64,
    /// `Σ_j c_j Σ_l t_lᵀK^j t_l`
    pub term_latent: f64,
    /// `(y - ŷ)ᵀ Σ_j K^j v_j`
    pub term_residual: f64,
    pub plus_m: usize,
    pub warning: Option<String>,
}

impl DofReport {
    fn new(m: usize, m_max_used: usize, trace: f64, latent: f64, residual: f64) -> Self {
        DofReport {
            m,
            dof_exact: None,
            dof_approx: None,
            m_max_used,
            term_trace: trace,
            term_latent: latent,
            term_residual: residual,
            plus_m: m,
            warning: None,
        }
    }

    fn total(&self) -> f64 {
        self.term_trace - self.term_latent + self.term_residual + self.plus_m as f64
    }

    /// The exact value if present, otherwise the approximation.
    pub fn dof(&self) -> f64 {
        self.dof_exact.or(self.dof_approx).unwrap_or_else(|| self.total())
    }
}

/// Ritz values of `D_m`, descending.
pub fn ritz_values(model: &KplsModel, m: usize) -> Result<Vec<f64>> {
    model.check_m(m)?;
    symtri_eigenvalues(&kpls::tridiagonal_d(model).leading(m)?)
}

/// `π(λ) = ∏_k (1 - λ/θ_k)` evaluated as a product, with a first-order bound
/// on its absolute rounding error in units of machine epsilon.
fn pi_product(lambda: f64, theta: &[f64]) -> (f64, f64) {
    let mut value = 1.0;
    let mut growth = 1.0;
    for &t in theta {
        let ratio = lambda / t;
        value *= 1.0 - ratio;
        growth *= 1.0 + ratio.abs();
    }
    (value, (theta.len() + 1) as f64 * growth)
}

/// Picks between the product and a ratio estimate `num/den` whose error is
/// about `(num_scale + |num/den| den_scale) / |den|` epsilons.
fn pi_stable(lambda: f64, theta: &[f64], num: f64, den: f64, num_scale: f64, den_scale: f64) -> f64 {
    let (prod, prod_err) = pi_product(lambda, theta);
    if den == 0.0 || !den.is_finite() {
        return prod;
    }
    let ratio = num / den;
    let ratio_err = 4.0 * (num_scale + ratio.abs() * den_scale) / den.abs();
    if ratio.is_finite() && ratio_err < prod_err {
        ratio
    } else {
        prod
    }
}

fn residual(model: &KplsModel, yc: &[f64], m: usize) -> Vec<f64> {
    yc.iter().zip(model.yhat(m)).map(|(a, b)| a - b).collect()
}

/// Spectrum of K together with the eigen-coordinates of y, of the residuals
/// y - ŷ_m for m = 1..=m_upto and of t_1..t_{m_upto}. One Householder
/// reduction (O(n³)) serves every m up to `m_upto`.
#[derive(Debug, Clone)]
pub struct ExactSpectrum {
    spec: SpectralCoordinates,
    m_upto: usize,
    y_norm: f64,
    res_norms: Vec<f64>,
}

impl ExactSpectrum {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.spec.eigenvalues
    }

    pub fn m_upto(&self) -> usize {
        self.m_upto
    }

    /// Exact degrees of freedom after `m ≤ m_upto` components.
    pub fn dof(&self, model: &KplsModel, m: usize) -> Result<DofReport> {
        model.check_m(m)?;
        if m > self.m_upto || self.spec.eigenvalues.len() != model.n() {
            return Err(KplsError::invalid(format!(
                "spectrum covers m <= {} for n = {}",
                self.m_upto,
                self.spec.eigenvalues.len()
            )));
        }
        let theta = ritz_values(model, m)?;
        let mu = self.m_upto;
        let (ny, nr) = (self.y_norm, self.res_norms[m - 1]);
        let mut trace = 0.0;
        let mut latent = 0.0;
        let mut resid = 0.0;
        for (i, &lambda) in self.spec.eigenvalues.iter().enumerate() {
            let row = self.spec.coords.row(i);
            let pi = pi_stable(lambda, &theta, row[m], row[0], nr, ny);
            let w: f64 = row[mu + 1..mu + 1 + m].iter().map(|c| c * c).sum();
            trace += 1.0 - pi;
            latent += (1.0 - pi) * w;
            resid += pi * w;
        }
        let mut report = DofReport::new(m, model.n(), trace, latent, resid);
        report.dof_exact = Some(report.total());
        Ok(report)
    }
}

pub fn exact_spectrum(k: &KernelMatrix, y: &[f64], model: &KplsModel, m_upto: usize) -> Result<ExactSpectrum> {
    model.check_m(m_upto)?;
    if k.n() != model.n() {
        return Err(KplsError::invalid("kernel and model disagree on n"));
    }
    let yc = model.center_y(y)?;
    let residuals: Vec<Vec<f64>> = (1..=m_upto).map(|m| residual(model, &yc, m)).collect();
    let mut vecs: Vec<&[f64]> = Vec::with_capacity(2 * m_upto + 1);
    vecs.push(&yc);
    vecs.extend(residuals.iter().map(Vec::as_slice));
    vecs.extend((1..=m_upto).map(|l| model.t(l)));
    let spec = spectral_coordinates(k.matrix(), &vecs)?;
    Ok(ExactSpectrum {
        spec,
        m_upto,
        y_norm: linalg::norm2(&yc),
        res_norms: residuals.iter().map(|r| linalg::norm2(r)).collect(),
    })
}

/// Exact degrees of freedom after `m` components. O(n³) through one
/// Householder reduction of K; use [`exact_spectrum`] to share it across m.
pub fn dof_exact(k: &KernelMatrix, y: &[f64], model: &KplsModel, m: usize) -> Result<DofReport> {
    exact_spectrum(k, y, model, m)?.dof(model, m)
}

/// Approximate degrees of freedom from the Ritz values of `D_{m_max}`.
///
/// Cost O(m_max³) on top of the fit; K is not touched. The latent and
/// residual terms come from Gauss quadrature on the same Krylov space, which
/// is exact once `m_max ≥ ⌈3m/2⌉`.
pub fn dof_approx(k: &KernelMatrix, y: &[f64], model: &KplsModel, m: usize, m_max: usize) -> Result<DofReport> {
    model.check_m(m)?;
    if m_max < m {
        return Err(KplsError::invalid(format!("m_max = {m_max} is smaller than m = {m}")));
    }
    if k.n() != model.n() || y.len() != model.n() {
        return Err(KplsError::invalid("kernel, targets and model disagree on n"));
    }
    let mm = m_max.min(model.actual_m());
    let d = kpls::tridiagonal_d(model).leading(mm)?;
    let (mu, s) = symtri_eigen(&d)?;
    let theta = ritz_values(model, m)?;
    let rho = model.residual_knorms();
    let l_m = model.l_block(m)?;

    let mut trace = 0.0;
    let mut resid = 0.0;
    let mut col = vec![0.0; m];
    for (kk, &muk) in mu.iter().enumerate() {
        let pi = if m == mm {
            0.0
        } else {
            let num = rho[m] * s[(m, kk)];
            let den = rho[0] * s[(0, kk)];
            pi_stable(muk, &theta, num, den, rho[m], rho[0])
        };
        for (j, slot) in col.iter_mut().enumerate() {
            *slot = s[(j, kk)];
        }
        let z = solve_upper_transpose(&l_m, &col)?;
        let zz: f64 = z.iter().map(|v| v * v).sum();
        trace += 1.0 - pi;
        resid += muk * pi * zz;
    }
    let mut report = DofReport::new(m, mm, trace, m as f64 - resid, resid);
    report.dof_approx = Some(report.total());
    if m_max > model.actual_m() {
        report.warning = Some(format!(
            "Krylov space exhausted after {} components; D truncated from {m_max}",
            model.actual_m()
        ));
    }
    Ok(report)
}

/// Evaluates the moment expansion term by term from [`KrylovMoments`], with
/// `traces[j-1] = tr(K^j)` (or any substitute such as `tr(D^j)`).
///
/// The latent term carries the weights c_j; without them the expansion
/// does not reproduce the finite-difference trace. Numerically usable only
/// for a few components.
pub fn dof_from_moments(
    k: &KernelMatrix,
    y: &[f64],
    model: &KplsModel,
    m: usize,
    traces: &[f64],
) -> Result<DofReport> {
    if traces.len() < m {
        return Err(KplsError::invalid(format!("need {m} trace powers, got {}", traces.len())));
    }
    let mom = krylov_moments(k, y, model, m)?;
    let yc = model.center_y(y)?;
    let res = residual(model, &yc, m);
    let trace: f64 = mom.c.iter().zip(traces).map(|(c, t)| c * t).sum();
    let mut latent = 0.0;
    for l in 1..=m {
        let mut z = model.t(l).to_vec();
        for cj in &mom.c {
            z = k.matvec(&z);
            latent += cj * linalg::dot(model.t(l), &z);
        }
    }
    let mut resid = 0.0;
    let mut z = res;
    for j in 0..m {
        z = k.matvec(&z);
        resid += (0..model.n()).map(|r| z[r] * mom.v[(r, j)]).sum::<f64>();
    }
    let mut report = DofReport::new(m, model.n(), trace, latent, resid);
    report.dof_exact = Some(report.total());
    Ok(report)
}

/// One row of the Ritz-value deviation report.
#[derive(Debug, Clone, PartialEq)]
pub struct SaadRow {
    pub lambda: f64,
    pub mu: f64,
    pub gap: f64,
    pub theta: f64,
    pub kappa: f64,
    /// `(λ_i - λ_{i-1}) / (λ_{i+1} - λ_n)` exactly as printed in the bound;
    /// undefined for i = 1.
    pub gamma: Option<f64>,
    pub bound: Option<f64>,
    /// Same bound with the usual `γ_i = (λ_i - λ_{i+1}) / (λ_{i+1} - λ_n)`.
    pub bound_standard: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaadBoundReport {
    pub rows: Vec<SaadRow>,
}

impl SaadBoundReport {
    pub fn min_gap(&self) -> f64 {
        self.rows.iter().map(|r| r.gap).fold(f64::INFINITY, f64::min)
    }
}

/// Chebyshev polynomial of the first kind by the three-term recurrence.
pub fn chebyshev(l: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if l == 0 {
        return prev;
    }
    for _ in 1..l {
        let next = 2.0 * x * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Compares the Ritz values of D_m with the spectrum of K. Cubic; meant for
/// diagnostics and tests.
pub fn saad_bound(k: &KernelMatrix, y: &[f64], model: &KplsModel, m: usize) -> Result<SaadBoundReport> {
    model.check_m(m)?;
    let yc = model.center_y(y)?;
    let ky = linalg::dot(&yc, &k.matvec(&yc));
    if !(ky > 0.0) {
        return Err(KplsError::invalid("y has zero K-norm"));
    }
    let spec = spectral_coordinates(k.matrix(), &[&yc])?;
    let lam = &spec.eigenvalues;
    let n = lam.len();
    let mu = ritz_values(model, m)?;
    let lam_n = lam[n - 1];
    let spread = lam[0] - lam_n;
    let bound = |i: usize, kappa: f64, theta: f64, gamma: f64| -> Option<f64> {
        let denom = chebyshev(m - i - 1, 1.0 + 2.0 * gamma);
        let value = spread * (kappa * theta.tan() / denom).powi(2);
        value.is_finite().then_some(value)
    };
    let rows = (0..m)
        .map(|i| {
            let cos = (lam[i].max(0.0).sqrt() * spec.coords[(i, 0)] / ky.sqrt()).abs().min(1.0);
            let theta = cos.acos();
            let kappa: f64 = (0..i).map(|j| (mu[j] - lam_n) / (mu[j] - lam[i])).product();
            let below = if i + 1 < n { Some(lam[i + 1] - lam_n) } else { None };
            let gamma = match (i, below) {
                (0, _) | (_, None) => None,
                (_, Some(b)) => Some((lam[i] - lam[i - 1]) / b),
            };
            let gamma_std = below.map(|b| (lam[i] - lam[i + 1]) / b);
            SaadRow {
                lambda: lam[i],
                mu: mu[i],
                gap: lam[i] - mu[i],
                theta,
                kappa,
                gamma,
                bound: gamma.and_then(|g| bound(i, kappa, theta, g)),
                bound_standard: gamma_std.and_then(|g| bound(i, kappa, theta, g)),
            }
        })
        .collect();
    Ok(SaadBoundReport { rows })
}

/// Default finite-difference step `1e-5 ‖y‖`.
pub fn default_fd_step(y: &[f64]) -> f64 {
    1e-5 * linalg::norm2(y)
}

fn perturbed_fits<F>(k: &KernelMatrix, y: &[f64], m: usize, step: f64, read: F) -> Result<DenseMatrix>
where
    F: Fn(&KplsModel) -> Vec<f64> + Sync,
{
    let n = k.n();
    if y.len() != n {
        return Err(KplsError::invalid("y length does not match kernel order"));
    }
    if !(step > 0.0) {
        return Err(KplsError::invalid("finite-difference step must be positive"));
    }
    let columns: Vec<Result<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let side = |sign: f64| -> Result<Vec<f64>> {
                let mut yp = y.to_vec();
                yp[j] += sign * step;
                let model = kpls::fit(k, &yp, m)?;
                if model.actual_m() < m {
                    return Err(KplsError::OracleInconclusive(format!(
                        "perturbed fit for column {j} stopped after {} components",
                        model.actual_m()
                    )));
                }
                Ok(read(&model))
            };
            let plus = side(1.0)?;
            let minus = side(-1.0)?;
            Ok(plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * step)).collect())
        })
        .collect();
    let columns = columns.into_iter().collect::<Result<Vec<_>>>()?;
    DenseMatrix::from_columns(&columns)
}

/// Central-difference Jacobian of ŷ_m with respect to y. Refits 2n times.
pub fn jacobian_fd(k: &KernelMatrix, y: &[f64], m: usize, step: f64) -> Result<DenseMatrix> {
    perturbed_fits(k, y, m, step, |model| model.yhat(m).to_vec())
}

/// Central-difference Jacobian of α_m with respect to y.
pub fn alpha_jacobian_fd(k: &KernelMatrix, y: &[f64], m: usize, step: f64) -> Result<DenseMatrix> {
    perturbed_fits(k, y, m, step, |model| model.alpha(m).to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;

    #[test]
    fn chebyshev_values() {
        assert_eq!(chebyshev(0, 2.0), 1.0);
        assert_eq!(chebyshev(1, 2.0), 2.0);
        assert_eq!(chebyshev(2, 2.0), 7.0);
        assert_eq!(chebyshev(3, 2.0), 26.0);
    }

    #[test]
    fn identity_kernel_dof_is_n() {
        let k = KernelMatrix::from_dense(DenseMatrix::identity(6), KernelSpec::Linear).unwrap();
        let y = [0.3, -1.0, 2.0, 0.1, 0.0, 1.5];
        let model = kpls::fit(&k, &y, 1).unwrap();
        let rep = dof_exact(&k, &y, &model, 1).unwrap();
        assert!((rep.dof() - 6.0).abs() < 1e-12, "{rep:?}");
        let jac = jacobian_fd(&k, &y, 1, default_fd_step(&y)).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((jac[(i, j)] - expect).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn pi_product_matches_definition() {
        let (v, _) = pi_product(1.0, &[2.0, 4.0]);
        assert_eq!(v, 0.5 * 0.75);
        let (v, _) = pi_product(3.0, &[]);
        assert_eq!(v, 1.0);
    }

    #[test]
    fn pi_stable_prefers_ratio_near_converged_root() {
        // λ equal to a root up to rounding, other roots tiny: product is hopeless
        let theta = [1.0 + 1e-16, 1e-4, 1e-5];
        let chosen = pi_stable(1.0, &theta, 1e-20, 1.0, 1.0, 1.0);
        assert_eq!(chosen, 1e-20);
        // small λ: the product is accurate and wins
        let chosen = pi_stable(1e-9, &theta, 0.3, 1e-12, 1.0, 1.0);
        assert!((chosen - pi_product(1e-9, &theta).0).abs() < 1e-15);
    }
}
