//! Pointwise confidence bands from the first-order sensitivity of the
//! kernel coefficients.
//!
//! With H = ∂α_m/∂y and the Ritz polynomial π of the m-component fit,
//!
//! ```text
//! Hᵀk = p̃(K) k + 2 π(K) T L⁻ᵀ Rᵀ k,   p̃(λ) = (1 - π(λ)) / λ
//! ```
//!
//! where p̃(λ) = Σ_k θ_k⁻¹ ∏_{i<k} (1 - λ/θ_i) is applied by a telescoping
//! loop. Every step is a product with K or with an n×m factor, so a query
//! costs 2m products with K.

use rayon::prelude::*;

use crate::error::{KplsError, Result};
use crate::kernels::{kernel_column, KernelMatrix};
use crate::kpls::{self, Dataset, KplsModel};
use crate::linalg::{self, solve_upper_transpose, UpperTriangular};
use crate::sensitivity::{self, ritz_values};

/// Per-model quantities shared by all queries.
#[derive(Debug, Clone)]
pub struct SensitivityCache {
    m: usize,
    theta: Vec<f64>,
    l: UpperTriangular,
}

impl SensitivityCache {
    pub fn new(model: &KplsModel, m: usize) -> Result<Self> {
        model.check_m(m)?;
        Ok(SensitivityCache { m, theta: ritz_values(model, m)?, l: model.l_block(m)? })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Ritz values of D_m, descending.
    pub fn ritz_values(&self) -> &[f64] {
        &self.theta
    }
}

/// `Hᵀ kx` with `H = ∂α_m/∂y`, in O(m n²).
pub fn h_transpose_k(
    cache: &SensitivityCache,
    model: &KplsModel,
    k: &KernelMatrix,
    m: usize,
    kx: &[f64],
) -> Result<Vec<f64>> {
    if m != cache.m {
        return Err(KplsError::invalid(format!("cache was built for m = {}, not {m}", cache.m)));
    }
    model.check_m(m)?;
    let n = model.n();
    if kx.len() != n || k.n() != n {
        return Err(KplsError::invalid(format!(
            "kernel column length {} and kernel order {} must equal n = {n}",
            kx.len(),
            k.n()
        )));
    }
    let rk: Vec<f64> = (1..=m).map(|j| linalg::dot(model.r(j), kx)).collect();
    let a = solve_upper_transpose(&cache.l, &rk)?;
    let mut v = vec![0.0; n];
    for (j, aj) in a.iter().enumerate() {
        linalg::axpy(*aj, model.t(j + 1), &mut v);
    }

    let mut kw = vec![0.0; n];
    // p̃(K) kx
    let mut acc = vec![0.0; n];
    let mut w = kx.to_vec();
    for (idx, &th) in cache.theta.iter().enumerate() {
        linalg::axpy(1.0 / th, &w, &mut acc);
        if idx + 1 < cache.theta.len() {
            k.matvec_into(&w, &mut kw);
            linalg::axpy(-1.0 / th, &kw, &mut w);
        }
    }
    // 2 π(K) v
    for &th in &cache.theta {
        k.matvec_into(&v, &mut kw);
        linalg::axpy(-1.0 / th, &kw, &mut v);
    }
    linalg::axpy(2.0, &v, &mut acc);
    Ok(acc)
}

/// `sigma ‖Hᵀ kx‖`
pub fn predictive_stderr(
    cache: &SensitivityCache,
    model: &KplsModel,
    k: &KernelMatrix,
    m: usize,
    kx: &[f64],
    sigma: f64,
) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(KplsError::invalid(format!("sigma must be positive, got {sigma}")));
    }
    Ok(sigma * linalg::norm2(&h_transpose_k(cache, model, k, m, kx)?))
}

/// Inverse of the standard normal distribution function (rational
/// approximation, relative error below 1.2e-9).
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(KplsError::invalid(format!("probability must lie in (0, 1), got {p}")));
    }
    #[allow(clippy::excessive_precision)]
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00, 3.754408661907416e+00];
    const P_LOW: f64 = 0.02425;

    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let x = if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    };
    Ok(x)
}

/// Two-sided standard normal quantile for a confidence level.
pub fn z_value(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(KplsError::invalid(format!("level must lie in (0, 1), got {level}")));
    }
    normal_quantile(0.5 + 0.5 * level)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SigmaDof {
    /// Residual degrees of freedom from the Ritz approximation.
    #[default]
    Approx,
    Exact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceBand {
    pub points: Vec<Vec<f64>>,
    pub prediction: Vec<f64>,
    pub stderr: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub level: f64,
    pub z: f64,
    pub sigma: f64,
    pub m: usize,
}

/// Noise level estimate `‖y - ŷ_m‖² / (n - DoF(m))`, square-rooted.
pub fn estimate_sigma(k: &KernelMatrix, y: &[f64], model: &KplsModel, m: usize, dof: SigmaDof) -> Result<f64> {
    let n = model.n();
    let report = match dof {
        SigmaDof::Approx => sensitivity::dof_approx(k, y, model, m, model.actual_m())?,
        SigmaDof::Exact => sensitivity::dof_exact(k, y, model, m)?,
    };
    let df = report.dof();
    if !(df < n as f64) {
        return Err(KplsError::CannotEstimateSigma { dof: df, n });
    }
    let df = df.min(n as f64 - 1.0);
    let yc = model.center_y(y)?;
    let rss: f64 = yc.iter().zip(model.yhat(m)).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((rss / (n as f64 - df)).sqrt())
}

/// Prediction and interval on every grid point. `sigma = None` estimates the
/// noise level from the residuals.
#[allow(clippy::too_many_arguments)]
pub fn confidence_band(
    model: &KplsModel,
    k: &KernelMatrix,
    data: &Dataset,
    grid: &[Vec<f64>],
    m: usize,
    level: f64,
    sigma: Option<f64>,
    sigma_dof: SigmaDof,
) -> Result<ConfidenceBand> {
    let z = z_value(level)?;
    model.check_m(m)?;
    if data.n() != model.n() {
        return Err(KplsError::invalid("dataset and model disagree on n"));
    }
    if let Some(bad) = grid.iter().find(|g| g.len() != data.dim()) {
        return Err(KplsError::invalid(format!(
            "grid point has dimension {}, training data has {}",
            bad.len(),
            data.dim()
        )));
    }
    let sigma = match sigma {
        Some(s) => s,
        None => estimate_sigma(k, data.y(), model, m, sigma_dof)?,
    };
    let cache = SensitivityCache::new(model, m)?;
    let rows: Vec<Result<(f64, f64)>> = grid
        .par_iter()
        .map(|x| {
            let raw = kernel_column(k.spec(), data.x(), x)?;
            let kx = k.center_column(&raw)?;
            let pred = kpls::predict(model, &kx, m)?;
            let se = predictive_stderr(&cache, model, k, m, &kx, sigma)?;
            Ok((pred, se))
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let prediction: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let stderr: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let lower = prediction.iter().zip(&stderr).map(|(p, s)| p - z * s).collect();
    let upper = prediction.iter().zip(&stderr).map(|(p, s)| p + z * s).collect();
    Ok(ConfidenceBand { points: grid.to_vec(), prediction, stderr, lower, upper, level, z, sigma, m })
}
