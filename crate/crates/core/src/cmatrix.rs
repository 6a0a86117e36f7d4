//! Dense complex-matrix helpers shared by the oracles and the equalizers.
//!
//! These are deliberately plain loops (no BLAS) so that every complex
//! multiply can be tallied into [`Counters`]; the dense paths exist as
//! correctness baselines and instrumented complexity baselines, not as
//! performance kernels.

use crate::counters::Counters;
use ndarray::{Array1, Array2};
use num_complex::Complex64;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// K x K identity.
pub fn identity(k: usize) -> Array2<Complex64> {
    Array2::from_shape_fn((k, k), |(i, j)| if i == j { ONE } else { ZERO })
}

/// Counted dense product `a * b`.
pub fn mat_mul(a: &Array2<Complex64>, b: &Array2<Complex64>, ctr: &mut Counters) -> Array2<Complex64> {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    assert_eq!(ca, rb, "mat_mul: inner dimensions {ca} vs {rb}");
    let mut out = Array2::from_elem((ra, cb), ZERO);
    // i-k-j order keeps both b and out row accesses contiguous.
    for i in 0..ra {
        for k in 0..ca {
            let aik = a[[i, k]];
            if aik == ZERO {
                continue;
            }
            let brow = b.row(k);
            let mut orow = out.row_mut(i);
            for j in 0..cb {
                orow[j] += aik * brow[j];
            }
            ctr.add_mul(cb as u64);
        }
    }
    out
}

/// Counted dense matrix-vector product.
pub fn mat_vec(a: &Array2<Complex64>, x: &Array1<Complex64>, ctr: &mut Counters) -> Array1<Complex64> {
    let (r, c) = a.dim();
    assert_eq!(c, x.len(), "mat_vec: {c} columns vs vector length {}", x.len());
    let mut out = Array1::from_elem(r, ZERO);
    for i in 0..r {
        let mut acc = ZERO;
        let arow = a.row(i);
        for j in 0..c {
            acc += arow[j] * x[j];
        }
        out[i] = acc;
    }
    ctr.add_mul((r * c) as u64);
    out
}

/// Conjugate transpose.
pub fn adjoint(a: &Array2<Complex64>) -> Array2<Complex64> {
    let (r, c) = a.dim();
    Array2::from_shape_fn((c, r), |(i, j)| a[[j, i]].conj())
}

/// Frobenius norm.
pub fn frob(a: &Array2<Complex64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest entry magnitude.
pub fn max_abs(a: &Array2<Complex64>) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest entrywise difference.
pub fn max_abs_diff(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// `f (x) I_m` for an n x n factor: the block at (i, j) is `f[i,j] * I_m`.
pub fn kron_with_identity(f: &Array2<Complex64>, m: usize) -> Array2<Complex64> {
    let (n, nc) = f.dim();
    assert_eq!(n, nc);
    let mut out = Array2::from_elem((n * m, n * m), ZERO);
    for i in 0..n {
        for j in 0..n {
            let v = f[[i, j]];
            if v == ZERO {
                continue;
            }
            for r in 0..m {
                out[[i * m + r, j * m + r]] = v;
            }
        }
    }
    out
}

/// K-point unitary DFT matrix, entries `e^{-j 2 pi i k / K} / sqrt(K)`.
pub fn unitary_dft(k: usize) -> Array2<Complex64> {
    let scale = 1.0 / (k as f64).sqrt();
    Array2::from_shape_fn((k, k), |(i, j)| {
        let phase = -2.0 * std::f64::consts::PI * (i as f64) * (j as f64) / k as f64;
        Complex64::from_polar(scale, phase)
    })
}
