//! Kernel NIPALS fit.
//!
//! Each component costs one product with K. Deflation of K is done
//! implicitly: for a residual r that is already orthogonal to the current
//! components, the deflated product K_i r equals (I - TTᵀ) K r, so no
//! working copy of K is kept.

use crate::error::{KplsError, Result};
use crate::kernels::KernelMatrix;
use crate::linalg::{self, DenseMatrix, SymTridiagonal, UpperTriangular};

/// Inputs and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(KplsError::invalid(format!("{} inputs but {} targets", x.len(), y.len())));
        }
        if x.len() < 2 {
            return Err(KplsError::invalid("a dataset needs at least two rows"));
        }
        let d = x[0].len();
        if d == 0 {
            return Err(KplsError::invalid("inputs must have at least one column"));
        }
        for (i, row) in x.iter().enumerate() {
            if row.len() != d {
                return Err(KplsError::invalid(format!("row {i} has {} columns, expected {d}", row.len())));
            }
            if row.iter().any(|v| !v.is_finite()) || !y[i].is_finite() {
                return Err(KplsError::invalid(format!("row {i} has a non-finite value")));
            }
        }
        Ok(Dataset { x, y })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn dim(&self) -> usize {
        self.x[0].len()
    }

    pub fn x(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// First `n` rows.
    pub fn prefix(&self, n: usize) -> Result<Dataset> {
        if n > self.n() {
            return Err(KplsError::invalid(format!("prefix {n} exceeds dataset size {}", self.n())));
        }
        Dataset::new(self.x[..n].to_vec(), self.y[..n].to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// All requested components were extracted.
    Completed,
    /// The residual has (numerically) zero K-norm.
    ResidualExhausted,
    /// The new direction lies in the span of the previous components.
    KrylovExhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KplsModel {
    m_max: usize,
    centered: bool,
    y_mean: f64,
    t: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    knorms: Vec<f64>,
    l_super: Vec<f64>,
    residual_knorms: Vec<f64>,
    yhat: Vec<Vec<f64>>,
    alpha: Vec<Vec<f64>>,
    stop: StopReason,
}

impl KplsModel {
    pub fn n(&self) -> usize {
        self.y_len()
    }

    fn y_len(&self) -> usize {
        self.t.first().map_or(0, Vec::len)
    }

    pub fn m_max(&self) -> usize {
        self.m_max
    }

    pub fn actual_m(&self) -> usize {
        self.t.len()
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn y_mean(&self) -> f64 {
        self.y_mean
    }

    pub fn stop_reason(&self) -> StopReason {
        self.stop
    }

    /// Latent component `t_j`, 1-based.
    pub fn t(&self, j: usize) -> &[f64] {
        &self.t[j - 1]
    }

    /// Normalized residual `r_j`, 1-based.
    pub fn r(&self, j: usize) -> &[f64] {
        &self.r[j - 1]
    }

    pub fn t_columns(&self) -> &[Vec<f64>] {
        &self.t
    }

    pub fn r_columns(&self) -> &[Vec<f64>] {
        &self.r
    }

    /// `‖K_i r_i‖`, the diagonal of L.
    pub fn knorms(&self) -> &[f64] {
        &self.knorms
    }

    /// Superdiagonal of L: entry `i` is `l_{i,i+1}` (0-based).
    pub fn l_superdiag(&self) -> &[f64] {
        &self.l_super
    }

    /// `sqrt(eᵀ K e)` for the residuals `e = y - ŷ_{i-1}`, i = 1.. (one per
    /// normalization performed, possibly one more than `actual_m`).
    pub fn residual_knorms(&self) -> &[f64] {
        &self.residual_knorms
    }

    /// Fitted values after `m` components (centered scale).
    pub fn yhat(&self, m: usize) -> &[f64] {
        &self.yhat[m - 1]
    }

    /// Kernel coefficients after `m` components.
    pub fn alpha(&self, m: usize) -> &[f64] {
        &self.alpha[m - 1]
    }

    pub fn check_m(&self, m: usize) -> Result<()> {
        if m == 0 || m > self.actual_m() {
            return Err(KplsError::invalid(format!(
                "m = {m} outside 1..={} fitted components",
                self.actual_m()
            )));
        }
        Ok(())
    }

    /// Leading m×m block of the upper bidiagonal L.
    pub fn l_block(&self, m: usize) -> Result<UpperTriangular> {
        self.check_m(m)?;
        let a = DenseMatrix::from_fn(m, m, |i, j| {
            if i == j {
                self.knorms[i]
            } else if j == i + 1 {
                self.l_super[i]
            } else {
                0.0
            }
        });
        UpperTriangular::new(a)
    }

    /// Targets on the scale the model was fitted on.
    pub fn center_y(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.n() {
            return Err(KplsError::invalid(format!("y has length {}, model has n = {}", y.len(), self.n())));
        }
        Ok(if self.centered { crate::kernels::center_targets(y).0 } else { y.to_vec() })
    }

    /// Reassembles a model from stored parts (used by persistence).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        m_max: usize,
        centered: bool,
        y_mean: f64,
        t: Vec<Vec<f64>>,
        r: Vec<Vec<f64>>,
        knorms: Vec<f64>,
        l_super: Vec<f64>,
        residual_knorms: Vec<f64>,
        yhat: Vec<Vec<f64>>,
        alpha: Vec<Vec<f64>>,
        stop: StopReason,
    ) -> Result<Self> {
        let m = t.len();
        let n = t.first().map_or(0, Vec::len);
        let cols_ok = |v: &[Vec<f64>]| v.len() == m && v.iter().all(|c| c.len() == n);
        if m == 0 || n == 0 || m > m_max {
            return Err(KplsError::invalid("model needs at least one component and m <= m_max"));
        }
        if !cols_ok(&r) || !cols_ok(&yhat) || !cols_ok(&alpha) {
            return Err(KplsError::invalid("component matrices have inconsistent shapes"));
        }
        if knorms.len() != m || l_super.len() + 1 != m || residual_knorms.len() < m {
            return Err(KplsError::invalid("bidiagonal factor has inconsistent length"));
        }
        Ok(KplsModel { m_max, centered, y_mean, t, r, knorms, l_super, residual_knorms, yhat, alpha, stop })
    }
}

/// Fits up to `m_max` components.
///
/// If `k` is centered, `y` is centered internally and its mean is kept for
/// prediction; fitted values and coefficients refer to the centered
/// targets.
pub fn fit(k: &KernelMatrix, y: &[f64], m_max: usize) -> Result<KplsModel> {
    let n = k.n();
    if y.len() != n {
        return Err(KplsError::invalid(format!("y has length {}, kernel has order {n}", y.len())));
    }
    if m_max == 0 || m_max > n {
        return Err(KplsError::invalid(format!("m_max must be in 1..={n}, got {m_max}")));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(KplsError::invalid("y has non-finite entries"));
    }
    let centered = k.is_centered();
    let (yc, y_mean) = if centered { crate::kernels::center_targets(y) } else { (y.to_vec(), 0.0) };
    let tol_breakdown = 1e-10 * (k.matrix().trace() / n as f64).abs() * linalg::norm2(&yc);

    let mut t: Vec<Vec<f64>> = Vec::with_capacity(m_max);
    let mut r: Vec<Vec<f64>> = Vec::with_capacity(m_max);
    let mut knorms = Vec::with_capacity(m_max);
    let mut l_super = Vec::with_capacity(m_max);
    let mut residual_knorms = Vec::with_capacity(m_max + 1);
    let mut yhat_all: Vec<Vec<f64>> = Vec::with_capacity(m_max);
    let mut alpha_all: Vec<Vec<f64>> = Vec::with_capacity(m_max);

    let mut yhat = vec![0.0; n];
    let mut alpha = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut stop = StopReason::Completed;

    for i in 0..m_max {
        let e: Vec<f64> = yc.iter().zip(&yhat).map(|(a, b)| a - b).collect();
        k.matvec_into(&e, &mut q);
        let s = linalg::dot(&e, &q);
        if !s.is_finite() {
            return Err(KplsError::Numerical(format!("non-finite residual norm at component {}", i + 1)));
        }
        let rho = s.max(0.0).sqrt();
        residual_knorms.push(rho);
        if s <= 0.0 || rho <= tol_breakdown {
            stop = StopReason::ResidualExhausted;
            break;
        }
        let ri: Vec<f64> = e.iter().map(|v| v / rho).collect();
        let kr: Vec<f64> = q.iter().map(|v| v / rho).collect();

        let mut ti = kr.clone();
        for _ in 0..2 {
            for tj in &t {
                let c = linalg::dot(tj, &ti);
                linalg::axpy(-c, tj, &mut ti);
            }
        }
        let kn = linalg::norm2(&ti);
        if !kn.is_finite() {
            return Err(KplsError::Numerical(format!("non-finite component norm at component {}", i + 1)));
        }
        if kn <= 1e-12 * linalg::norm2(&kr) {
            stop = StopReason::KrylovExhausted;
            break;
        }
        ti.iter_mut().for_each(|v| *v /= kn);

        let b = linalg::dot(&ti, &yc);
        if let Some(prev) = t.last() {
            let lup = linalg::dot(prev, &kr);
            // g_i = (r_i - l_{i-1,i} g_{i-1}) / l_ii
            for (gv, rv) in g.iter_mut().zip(&ri) {
                *gv = (rv - lup * *gv) / kn;
            }
            l_super.push(lup);
        } else {
            for (gv, rv) in g.iter_mut().zip(&ri) {
                *gv = rv / kn;
            }
        }
        linalg::axpy(b, &g, &mut alpha);
        linalg::axpy(b, &ti, &mut yhat);

        knorms.push(kn);
        t.push(ti);
        r.push(ri);
        yhat_all.push(yhat.clone());
        alpha_all.push(alpha.clone());
    }

    if t.is_empty() {
        return Err(KplsError::Numerical(
            "no component could be extracted: y has zero K-norm".into(),
        ));
    }
    Ok(KplsModel {
        m_max,
        centered,
        y_mean,
        t,
        r,
        knorms,
        l_super,
        residual_knorms,
        yhat: yhat_all,
        alpha: alpha_all,
        stop,
    })
}

/// `⟨α_m, kx⟩ + y_mean` for a (centered, if the model is) kernel column.
pub fn predict(model: &KplsModel, kx: &[f64], m: usize) -> Result<f64> {
    model.check_m(m)?;
    if kx.len() != model.n() {
        return Err(KplsError::invalid(format!(
            "kernel column has length {}, model has n = {}",
            kx.len(),
            model.n()
        )));
    }
    Ok(linalg::dot(model.alpha(m), kx) + model.y_mean)
}

/// `D = LᵀL` over all fitted components.
pub fn tridiagonal_d(model: &KplsModel) -> SymTridiagonal {
    let m = model.actual_m();
    let l = &model.knorms;
    let u = &model.l_super;
    let diag = (0..m).map(|j| l[j] * l[j] + if j > 0 { u[j - 1] * u[j - 1] } else { 0.0 }).collect();
    let off = (0..m.saturating_sub(1)).map(|j| l[j] * u[j]).collect();
    SymTridiagonal::new(diag, off).expect("bidiagonal factor has consistent lengths")
}
