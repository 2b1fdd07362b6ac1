//! Helpers for randomized tests: well-conditioned and integer unimodular
//! transforms. Kept in the library so integration tests share one source.

use nalgebra::DMatrix;
use rand::rngs::StdRng;
use rand::Rng;

/// Random invertible matrix with singular values in [0.5, 2]: built as
/// Q1 * diag * Q2 from QR factors of Gaussian-ish matrices.
pub fn random_well_conditioned(n: usize, rng: &mut StdRng) -> DMatrix<f64> {
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let q1 = random_orthogonal(n, rng);
    let q2 = random_orthogonal(n, rng);
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |_, _| {
        rng.gen_range(0.5..2.0)
    }));
    q1 * d * q2
}

pub fn random_orthogonal(n: usize, rng: &mut StdRng) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let qr = m.qr();
    qr.q()
}

/// Random integer matrix with determinant ±1: product of elementary
/// row operations with small integer multipliers. Exact-arithmetic
/// friendly.
pub fn random_unimodular(n: usize, rng: &mut StdRng) -> DMatrix<f64> {
    let mut m = DMatrix::<f64>::identity(n, n);
    if n < 2 {
        return m;
    }
    for _ in 0..3 * n {
        let i = rng.gen_range(0..n);
        let mut j = rng.gen_range(0..n);
        while j == i {
            j = rng.gen_range(0..n);
        }
        let k = rng.gen_range(-2i64..=2) as f64;
        for c in 0..n {
            let add = k * m[(j, c)];
            m[(i, c)] += add;
        }
    }
    m
}
