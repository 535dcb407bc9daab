//! Problem builders shared by the benchmarks.

use kpls_cli::data::synth_kinlike;
use kpls_core::kernels::{center, gram};
use kpls_core::{KernelMatrix, KernelSpec};

/// Centered rbf kernel (width 2) and targets of a kin-like sample of size n.
pub fn kin_problem(n: usize, seed: u64) -> (KernelMatrix, Vec<f64>) {
    let d = synth_kinlike(n, 0.1, seed).expect("n >= 2");
    let spec = KernelSpec::rbf(2.0).expect("positive width");
    let k = center(&gram(&spec, d.x()).expect("valid inputs")).expect("square kernel");
    (k, d.y().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn problem_is_centered() {
        let (k, y) = kin_problem(20, 1);
        assert_eq!((k.n(), y.len()), (20, 20));
        assert!(k.is_centered());
    }
}
