#![allow(dead_code)]

use kpls_core::kernels::{self, KernelMatrix, KernelSpec};
use kpls_core::DenseMatrix;
use nalgebra::DMatrix;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn normals(rng: &mut StdRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn points(rng: &mut StdRng, n: usize, d: usize, spread: f64) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.random_range(-spread..spread)).collect()).collect()
}

/// 1-D sinc regression problem on [-π, π].
pub fn sinc_data(seed: u64, n: usize, sigma: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut r = rng(seed);
    let x: Vec<Vec<f64>> =
        (0..n).map(|_| vec![r.random_range(-std::f64::consts::PI..std::f64::consts::PI)]).collect();
    let y = x
        .iter()
        .map(|p| {
            let v = p[0];
            let s = if v == 0.0 { 1.0 } else { v.sin() / v };
            s + sigma * r.sample::<f64, _>(StandardNormal)
        })
        .collect();
    (x, y)
}

/// Random rbf problem: points in [-2, 2]^2, smooth targets plus noise,
/// centered Gram matrix.
pub fn rbf_problem(seed: u64, n: usize, width: f64) -> (Vec<Vec<f64>>, Vec<f64>, KernelMatrix) {
    let mut r = rng(seed);
    let x = points(&mut r, n, 2, 2.0);
    let y: Vec<f64> =
        x.iter().map(|p| (1.3 * p[0]).sin() + 0.5 * p[1] * p[1] + 0.2 * r.sample::<f64, _>(StandardNormal)).collect();
    let spec = KernelSpec::rbf(width).unwrap();
    let k = kernels::center(&kernels::gram(&spec, &x).unwrap()).unwrap();
    (x, y, k)
}

pub fn to_na(a: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(a.rows(), a.cols(), a.as_slice())
}

/// Eigenvalues of a symmetric matrix, descending, from nalgebra.
pub fn na_eigenvalues(a: &DenseMatrix) -> Vec<f64> {
    let mut v: Vec<f64> = to_na(a).symmetric_eigen().eigenvalues.iter().copied().collect();
    v.sort_by(|x, y| y.total_cmp(x));
    v
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}
