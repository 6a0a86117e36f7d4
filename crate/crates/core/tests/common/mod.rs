//! Shared oracle helpers for the integration tests. Everything here is
//! deliberately independent of the library's linear-algebra paths: plain
//! loops and a cyclic Jacobi eigensolver.

use ndarray::Array2;
use num_complex::Complex64;

/// Eigenvalues of a real symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    let off = |a: &Vec<Vec<f64>>| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i][j] * a[i][j];
                }
            }
        }
        s.sqrt()
    };
    let scale: f64 = a.iter().flatten().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    for _sweep in 0..64 {
        if off(&a) < 1e-13 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let tau = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

/// Singular values of a complex matrix, descending, via the real symmetric
/// embedding of A^H A (each eigenvalue of A^H A appears twice in the
/// embedding).
pub fn singular_values(a: &Array2<Complex64>) -> Vec<f64> {
    let (rows, cols) = a.dim();
    // g = a^H a (Hermitian, cols x cols)
    let mut g = vec![vec![Complex64::new(0.0, 0.0); cols]; cols];
    for i in 0..cols {
        for j in 0..cols {
            let mut acc = Complex64::new(0.0, 0.0);
            for r in 0..rows {
                acc += a[[r, i]].conj() * a[[r, j]];
            }
            g[i][j] = acc;
        }
    }
    // real embedding [[Re, -Im], [Im, Re]]
    let n = 2 * cols;
    let mut e = vec![vec![0.0f64; n]; n];
    for i in 0..cols {
        for j in 0..cols {
            e[i][j] = g[i][j].re;
            e[i][j + cols] = -g[i][j].im;
            e[i + cols][j] = g[i][j].im;
            e[i + cols][j + cols] = g[i][j].re;
        }
    }
    let mut eig = jacobi_eigenvalues(e);
    eig.sort_by(|x, y| y.total_cmp(x));
    // doubled spectrum: take every other entry
    (0..cols).map(|i| eig[2 * i].max(0.0).sqrt()).collect()
}
