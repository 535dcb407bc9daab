//! Kernel functions, Gram matrices and double centering.

use rayon::prelude::*;

use crate::error::{KplsError, Result};
use crate::linalg::{self, DenseMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    /// `exp(-‖x - z‖² / (2 width²))`
    Rbf { width: f64 },
    Linear,
}

impl KernelSpec {
    pub fn rbf(width: f64) -> Result<Self> {
        if !(width > 0.0) || !width.is_finite() {
            return Err(KplsError::invalid(format!("rbf width must be positive, got {width}")));
        }
        Ok(KernelSpec::Rbf { width })
    }

    pub fn width(&self) -> Option<f64> {
        match self {
            KernelSpec::Rbf { width } => Some(*width),
            KernelSpec::Linear => None,
        }
    }

    fn eval_unchecked(&self, x: &[f64], z: &[f64]) -> f64 {
        match self {
            KernelSpec::Rbf { width } => {
                let d2: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (2.0 * width * width)).exp()
            }
            KernelSpec::Linear => linalg::dot(x, z),
        }
    }
}

pub fn kernel_eval(spec: &KernelSpec, x: &[f64], z: &[f64]) -> Result<f64> {
    if x.len() != z.len() {
        return Err(KplsError::invalid(format!(
            "kernel arguments differ in dimension ({} vs {})",
            x.len(),
            z.len()
        )));
    }
    Ok(spec.eval_unchecked(x, z))
}

/// Row means and grand mean of the uncentered Gram matrix, kept so query
/// columns can be centered consistently.
#[derive(Debug, Clone, PartialEq)]
pub struct Centering {
    pub row_means: Vec<f64>,
    pub grand_mean: f64,
}

/// Symmetric Gram matrix. Symmetry is exact: only the upper triangle is
/// computed and then mirrored.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    matrix: DenseMatrix,
    spec: KernelSpec,
    centering: Option<Centering>,
}

impl KernelMatrix {
    /// Wraps an explicit matrix, e.g. the identity in tests.
    pub fn from_dense(matrix: DenseMatrix, spec: KernelSpec) -> Result<Self> {
        if !matrix.is_symmetric() {
            return Err(KplsError::invalid("kernel matrix must be exactly symmetric"));
        }
        Ok(KernelMatrix { matrix, spec, centering: None })
    }

    pub fn n(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn is_centered(&self) -> bool {
        self.centering.is_some()
    }

    pub fn centering(&self) -> Option<&Centering> {
        self.centering.as_ref()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n(), "vector length must match kernel order");
        let mut y = vec![0.0; self.n()];
        linalg::matvec_into(&self.matrix, x, &mut y);
        y
    }

    pub(crate) fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        linalg::matvec_into(&self.matrix, x, y);
    }

    /// Applies the training-set centering to the raw kernel column of a
    /// query point: `(I - 𝟙𝟙ᵀ/n)(k(x) - K𝟙/n)`. Identity for uncentered
    /// matrices.
    pub fn center_column(&self, kx: &[f64]) -> Result<Vec<f64>> {
        if kx.len() != self.n() {
            return Err(KplsError::invalid(format!(
                "kernel column has length {}, expected {}",
                kx.len(),
                self.n()
            )));
        }
        let Some(c) = &self.centering else {
            return Ok(kx.to_vec());
        };
        let shifted: Vec<f64> = kx.iter().zip(&c.row_means).map(|(k, m)| k - m).collect();
        let mean = shifted.iter().sum::<f64>() / shifted.len() as f64;
        Ok(shifted.into_iter().map(|v| v - mean).collect())
    }
}

fn check_points(points: &[Vec<f64>]) -> Result<usize> {
    let first = points.first().ok_or_else(|| KplsError::invalid("no points given"))?;
    let d = first.len();
    if let Some((i, p)) = points.iter().enumerate().find(|(_, p)| p.len() != d) {
        return Err(KplsError::invalid(format!(
            "point {i} has dimension {}, expected {d}",
            p.len()
        )));
    }
    Ok(d)
}

pub fn gram(spec: &KernelSpec, points: &[Vec<f64>]) -> Result<KernelMatrix> {
    check_points(points)?;
    if let KernelSpec::Rbf { width } = spec {
        KernelSpec::rbf(*width)?;
    }
    let n = points.len();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (i..n).map(|j| spec.eval_unchecked(&points[i], &points[j])).collect())
        .collect();
    let mut a = DenseMatrix::zeros(n, n);
    for (i, row) in upper.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            a[(i, i + off)] = v;
            a[(i + off, i)] = v;
        }
    }
    Ok(KernelMatrix { matrix: a, spec: *spec, centering: None })
}

/// Raw kernel column `(k(x, x_1), ..., k(x, x_n))` of a query point.
pub fn kernel_column(spec: &KernelSpec, points: &[Vec<f64>], x: &[f64]) -> Result<Vec<f64>> {
    let d = check_points(points)?;
    if x.len() != d {
        return Err(KplsError::invalid(format!(
            "query has dimension {}, training points have {d}",
            x.len()
        )));
    }
    Ok(points.iter().map(|p| spec.eval_unchecked(p, x)).collect())
}

/// Double centering `(I - 𝟙𝟙ᵀ/n) K (I - 𝟙𝟙ᵀ/n)` in O(n²).
pub fn center(k: &KernelMatrix) -> Result<KernelMatrix> {
    if k.is_centered() {
        return Err(KplsError::InvalidState("kernel matrix is already centered".into()));
    }
    let n = k.n();
    let a = &k.matrix;
    let row_means: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum::<f64>() / n as f64).collect();
    let grand_mean = row_means.iter().sum::<f64>() / n as f64;
    let mut c = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = a[(i, j)] - row_means[i] - row_means[j] + grand_mean;
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    Ok(KernelMatrix {
        matrix: c,
        spec: k.spec,
        centering: Some(Centering { row_means, grand_mean }),
    })
}

/// Returns `y - mean(y)` and the mean.
pub fn center_targets(y: &[f64]) -> (Vec<f64>, f64) {
    if y.is_empty() {
        return (Vec::new(), 0.0);
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    (y.iter().map(|v| v - mean).collect(), mean)
}
