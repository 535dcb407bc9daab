//! Small dense linear algebra kernel: row-major matrices, triangular solves,
//! a tridiagonal QL eigensolver and a Householder reduction for dense
//! symmetric matrices.

use std::ops::{Index, IndexMut};

use crate::error::{KplsError, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "DenseMatrix needs at least one row and column");
        DenseMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(KplsError::invalid("matrix dimensions must be positive"));
        }
        if data.len() != rows * cols {
            return Err(KplsError::invalid(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        if cols == 0 || rows == 0 || columns.iter().any(|c| c.len() != rows) {
            return Err(KplsError::invalid("columns must be nonempty and of equal length"));
        }
        Ok(Self::from_fn(rows, cols, |i, j| columns[j][i]))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> DenseMatrix {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Plain matrix product. Only used off the quadratic-time paths.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(KplsError::invalid(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a != 0.0 {
                    axpy(a, other.row(k), out_row);
                }
            }
        }
        Ok(out)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Exact symmetry test (no tolerance).
    pub fn is_symmetric(&self) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| (0..i).all(|j| self[(i, j)] == self[(j, i)]))
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Symmetric tridiagonal matrix; the off-diagonal is stored once.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal {
    diag: Vec<f64>,
    offdiag: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, offdiag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(KplsError::invalid("tridiagonal matrix must have order at least 1"));
        }
        if offdiag.len() + 1 != diag.len() {
            return Err(KplsError::invalid(format!(
                "off-diagonal length {} does not match order {}",
                offdiag.len(),
                diag.len()
            )));
        }
        Ok(SymTridiagonal { diag, offdiag })
    }

    pub fn order(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn offdiag(&self) -> &[f64] {
        &self.offdiag
    }

    pub fn trace(&self) -> f64 {
        self.diag.iter().sum()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let m = self.order();
        let mut a = DenseMatrix::zeros(m, m);
        for i in 0..m {
            a[(i, i)] = self.diag[i];
        }
        for (i, &e) in self.offdiag.iter().enumerate() {
            a[(i, i + 1)] = e;
            a[(i + 1, i)] = e;
        }
        a
    }

    /// Leading principal submatrix of order `k`.
    pub fn leading(&self, k: usize) -> Result<SymTridiagonal> {
        if k == 0 || k > self.order() {
            return Err(KplsError::invalid(format!("leading block {k} out of range")));
        }
        SymTridiagonal::new(self.diag[..k].to_vec(), self.offdiag[..k - 1].to_vec())
    }

    fn check_finite(&self) -> Result<()> {
        if self.diag.iter().chain(&self.offdiag).all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(KplsError::invalid("tridiagonal matrix has non-finite entries"))
        }
    }
}

/// Square upper triangular matrix with an exactly zero strict lower triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct UpperTriangular {
    inner: DenseMatrix,
}

impl UpperTriangular {
    pub fn new(a: DenseMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(KplsError::invalid("upper triangular matrix must be square"));
        }
        for i in 0..a.rows() {
            for j in 0..i {
                if a[(i, j)] != 0.0 {
                    return Err(KplsError::invalid(format!(
                        "entry ({i},{j}) below the diagonal is nonzero"
                    )));
                }
            }
        }
        Ok(UpperTriangular { inner: a })
    }

    /// Keeps the upper triangle of `a` and zeroes everything below it.
    pub fn from_upper_part(a: &DenseMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(KplsError::invalid("upper triangular matrix must be square"));
        }
        let n = a.rows();
        Ok(UpperTriangular { inner: DenseMatrix::from_fn(n, n, |i, j| if i <= j { a[(i, j)] } else { 0.0 }) })
    }

    pub fn order(&self) -> usize {
        self.inner.rows()
    }

    pub fn as_dense(&self) -> &DenseMatrix {
        &self.inner
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner[(i, j)]
    }

    /// Singularity threshold `1e-12 * max |u_ii|`.
    pub fn tol_singular(&self) -> f64 {
        let max_diag = (0..self.order()).fold(0.0_f64, |acc, i| acc.max(self.get(i, i).abs()));
        1e-12 * max_diag
    }

    fn check_regular(&self) -> Result<()> {
        let tol = self.tol_singular();
        for i in 0..self.order() {
            let u = self.get(i, i);
            if !(u.abs() > tol) || !u.is_finite() {
                return Err(KplsError::Singular { index: i });
            }
        }
        Ok(())
    }
}

/// Solves `U x = b` by back substitution.
pub fn solve_upper(u: &UpperTriangular, b: &[f64]) -> Result<Vec<f64>> {
    let n = u.order();
    if b.len() != n {
        return Err(KplsError::invalid(format!("rhs length {} != order {n}", b.len())));
    }
    u.check_regular()?;
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        let row = u.inner.row(i);
        let s: f64 = (i + 1..n).map(|j| row[j] * x[j]).sum();
        x[i] = (x[i] - s) / row[i];
    }
    Ok(x)
}

/// Solves `Uᵀ x = b` by forward substitution.
pub fn solve_upper_transpose(u: &UpperTriangular, b: &[f64]) -> Result<Vec<f64>> {
    let n = u.order();
    if b.len() != n {
        return Err(KplsError::invalid(format!("rhs length {} != order {n}", b.len())));
    }
    u.check_regular()?;
    let mut x = b.to_vec();
    for i in 0..n {
        let s: f64 = (0..i).map(|j| u.get(j, i) * x[j]).sum();
        x[i] = (x[i] - s) / u.get(i, i);
    }
    Ok(x)
}

pub fn matvec(a: &DenseMatrix, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != a.cols() {
        return Err(KplsError::invalid(format!(
            "cannot multiply {}x{} matrix by vector of length {}",
            a.rows(),
            a.cols(),
            x.len()
        )));
    }
    let mut y = vec![0.0; a.rows()];
    matvec_into(a, x, &mut y);
    Ok(y)
}

/// `y = A x` without dimension checks beyond debug assertions.
pub(crate) fn matvec_into(a: &DenseMatrix, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), a.cols());
    debug_assert_eq!(y.len(), a.rows());
    for (i, yi) in y.iter_mut().enumerate() {
        *yi = dot(a.row(i), x);
    }
}

/// `Σ eigs_i^j`, the trace of the j-th power of a matrix with spectrum `eigs`.
pub fn trace_powers(eigs: &[f64], j: u32) -> Result<f64> {
    if j == 0 {
        return Err(KplsError::invalid("trace_powers needs j >= 1"));
    }
    Ok(eigs.iter().map(|&l| l.powi(j as i32)).sum())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // four accumulators so the loop vectorizes without fast-math
    let mut acc = [0.0_f64; 4];
    let chunks_a = a.chunks_exact(4);
    let chunks_b = b.chunks_exact(4);
    let (rest_a, rest_b) = (chunks_a.remainder(), chunks_b.remainder());
    for (ca, cb) in chunks_a.zip(chunks_b) {
        for k in 0..4 {
            acc[k] += ca[k] * cb[k];
        }
    }
    let tail: f64 = rest_a.iter().zip(rest_b).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += a x`
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Euclidean norm with scaling, safe against overflow and underflow.
pub fn norm2(x: &[f64]) -> f64 {
    let scale = x.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let ssq: f64 = x.iter().map(|v| (v / scale).powi(2)).sum();
    scale * ssq.sqrt()
}

/// Implicit QL with Wilkinson shifts on a symmetric tridiagonal matrix.
///
/// `d` holds the diagonal, `e[i]` couples `i` and `i+1` (`e.len() == d.len()`,
/// the last entry is scratch). Each Givens rotation acting on indices
/// `(i, i+1)` is reported through `rotate(i, c, s)` so callers can
/// accumulate eigenvectors or rotate only the coordinates they need.
fn tql_implicit(d: &mut [f64], e: &mut [f64], mut rotate: impl FnMut(usize, f64, f64)) -> Result<()> {
    const MAX_SWEEPS: usize = 60;
    let n = d.len();
    if n <= 1 {
        return Ok(());
    }
    e[n - 1] = 0.0;
    // couplings below eps‖T‖ are dropped even between tiny diagonal entries;
    // a purely relative test stalls on clusters at roundoff level
    let floor = f64::EPSILON * d.iter().zip(e.iter()).map(|(a, b)| a.abs() + b.abs()).fold(0.0, f64::max);
    for l in 0..n {
        let mut sweeps = 0;
        loop {
            let mut mm = l;
            while mm < n - 1 {
                let dd = d[mm].abs() + d[mm + 1].abs();
                if e[mm].abs() <= f64::EPSILON * dd || e[mm].abs() <= floor {
                    break;
                }
                mm += 1;
            }
            if mm == l {
                break;
            }
            sweeps += 1;
            if sweeps > MAX_SWEEPS {
                return Err(KplsError::Numerical(format!(
                    "tridiagonal QL did not converge for eigenvalue {l}"
                )));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[mm] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            let mut i = mm;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[mm] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                rotate(i, c, s);
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[mm] = 0.0;
        }
    }
    Ok(())
}

fn descending_order(vals: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    idx.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
    idx
}

/// All eigenvalues of a symmetric tridiagonal matrix, sorted descending.
pub fn symtri_eigenvalues(t: &SymTridiagonal) -> Result<Vec<f64>> {
    t.check_finite()?;
    let mut d = t.diag.clone();
    let mut e = t.offdiag.clone();
    e.push(0.0);
    tql_implicit(&mut d, &mut e, |_, _, _| {})?;
    d.sort_by(|a, b| b.total_cmp(a));
    Ok(d)
}

/// Eigenvalues (descending) and orthonormal eigenvectors (matching columns).
pub fn symtri_eigen(t: &SymTridiagonal) -> Result<(Vec<f64>, DenseMatrix)> {
    t.check_finite()?;
    let n = t.order();
    let mut d = t.diag.clone();
    let mut e = t.offdiag.clone();
    e.push(0.0);
    let mut z = DenseMatrix::identity(n);
    tql_implicit(&mut d, &mut e, |i, c, s| {
        for k in 0..n {
            let f = z[(k, i + 1)];
            z[(k, i + 1)] = s * z[(k, i)] + c * f;
            z[(k, i)] = c * z[(k, i)] - s * f;
        }
    })?;
    let order = descending_order(&d);
    let vals = order.iter().map(|&i| d[i]).collect();
    let vecs = DenseMatrix::from_fn(n, n, |r, c| z[(r, order[c])]);
    Ok((vals, vecs))
}

/// Householder reduction `A = Q T Qᵀ` of a dense symmetric matrix.
///
/// Q is kept in factored form; [`Tridiagonalization::apply_qt`] applies Qᵀ
/// to a vector in O(n²).
#[derive(Debug, Clone)]
pub struct Tridiagonalization {
    tri: SymTridiagonal,
    // reflector k acts on indices k+1.. and is I - tau v vᵀ with v[0] = 1
    reflectors: Vec<(f64, Vec<f64>)>,
}

impl Tridiagonalization {
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(KplsError::invalid("tridiagonalization needs a square matrix"));
        }
        if a.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(KplsError::invalid("matrix has non-finite entries"));
        }
        let n = a.rows();
        let mut w = a.clone();
        let mut offdiag = Vec::with_capacity(n.saturating_sub(1));
        let mut reflectors = Vec::with_capacity(n.saturating_sub(2));
        let mut p = vec![0.0; n];
        for k in 0..n.saturating_sub(2) {
            let x: Vec<f64> = (k + 1..n).map(|i| w[(i, k)]).collect();
            let (tau, beta, v) = householder(&x);
            offdiag.push(beta);
            if tau != 0.0 {
                // p = tau * A22 v, then w = p - (tau/2)(pᵀv) v, A22 -= v wᵀ + w vᵀ
                let off = k + 1;
                let m = n - off;
                for (r, pr) in p[..m].iter_mut().enumerate() {
                    *pr = tau * dot(&w.row(off + r)[off..], &v);
                }
                let alpha = 0.5 * tau * dot(&p[..m], &v);
                for r in 0..m {
                    p[r] -= alpha * v[r];
                }
                for r in 0..m {
                    let (vr, pr) = (v[r], p[r]);
                    let row = &mut w.row_mut(off + r)[off..];
                    for c in 0..m {
                        row[c] -= vr * p[c] + pr * v[c];
                    }
                }
            }
            reflectors.push((tau, v));
        }
        if n >= 2 {
            offdiag.push(w[(n - 1, n - 2)]);
        }
        let diag = (0..n).map(|i| w[(i, i)]).collect();
        Ok(Tridiagonalization { tri: SymTridiagonal::new(diag, offdiag)?, reflectors })
    }

    pub fn tridiagonal(&self) -> &SymTridiagonal {
        &self.tri
    }

    pub fn apply_qt(&self, z: &mut [f64]) {
        for (k, (tau, v)) in self.reflectors.iter().enumerate() {
            if *tau == 0.0 {
                continue;
            }
            let tail = &mut z[k + 1..];
            let s = tau * dot(tail, v);
            axpy(-s, v, tail);
        }
    }
}

/// Returns `(tau, beta, v)` with `(I - tau v vᵀ) x = beta e₁` and `v[0] = 1`.
fn householder(x: &[f64]) -> (f64, f64, Vec<f64>) {
    let alpha = x[0];
    let xnorm = norm2(&x[1..]);
    let mut v = vec![0.0; x.len()];
    v[0] = 1.0;
    if xnorm == 0.0 {
        return (0.0, alpha, v);
    }
    let beta = -alpha.signum() * alpha.hypot(xnorm);
    let tau = (beta - alpha) / beta;
    let scale = 1.0 / (alpha - beta);
    for (vi, xi) in v[1..].iter_mut().zip(&x[1..]) {
        *vi = xi * scale;
    }
    (tau, beta, v)
}

/// Spectrum of a dense symmetric matrix together with the coordinates of
/// a few vectors in its eigenbasis.
#[derive(Debug, Clone)]
pub struct SpectralCoordinates {
    /// Eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// `coords[(i, j)] = u_iᵀ z_j` for eigenvector `u_i` and input vector `z_j`.
    pub coords: DenseMatrix,
}

/// Eigenvalues of a dense symmetric `a` plus `Uᵀ z_j` for each input vector.
///
/// The cost is one Householder reduction (4n³/3 flops) plus O(n² k) for k
/// vectors; the eigenvectors themselves are never formed.
pub fn spectral_coordinates(a: &DenseMatrix, vectors: &[&[f64]]) -> Result<SpectralCoordinates> {
    let n = a.rows();
    if vectors.iter().any(|v| v.len() != n) {
        return Err(KplsError::invalid("vector length does not match matrix order"));
    }
    let red = Tridiagonalization::new(a)?;
    let k = vectors.len();
    // w holds Qᵀ z_j in column j; rotations then act on its rows
    let mut w = DenseMatrix::zeros(n, k.max(1));
    for (j, z) in vectors.iter().enumerate() {
        let mut qz = z.to_vec();
        red.apply_qt(&mut qz);
        for i in 0..n {
            w[(i, j)] = qz[i];
        }
    }
    let mut d = red.tri.diag.clone();
    let mut e = red.tri.offdiag.clone();
    e.push(0.0);
    tql_implicit(&mut d, &mut e, |i, c, s| {
        for j in 0..k {
            let f = w[(i + 1, j)];
            let g = w[(i, j)];
            w[(i + 1, j)] = s * g + c * f;
            w[(i, j)] = c * g - s * f;
        }
    })?;
    let order = descending_order(&d);
    let eigenvalues = order.iter().map(|&i| d[i]).collect();
    let coords = DenseMatrix::from_fn(n, k.max(1), |r, c| if c < k { w[(order[r], c)] } else { 0.0 });
    Ok(SpectralCoordinates { eigenvalues, coords })
}

/// Eigenvalues of a dense symmetric matrix, descending.
pub fn sym_eigenvalues(a: &DenseMatrix) -> Result<Vec<f64>> {
    symtri_eigenvalues(Tridiagonalization::new(a)?.tridiagonal())
}
