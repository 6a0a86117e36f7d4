//! Delay-Doppler lattice types and the Fourier machinery built on them.
//!
//! Everything here follows one normalization convention: all M-point and
//! N-point DFT matrices are unitary (entries `e^{-j2pi ik/K} / sqrt(K)`).
//! Under that convention [`isfft`]/[`sfft`] are exact mutual inverses and
//! norm-preserving, and the sequence-level operators [`sequence_fft`]/
//! [`sequence_ifft`] form a unitary pair across the block index.
//!
//! Two companion operators carry the non-unitary scalings needed by the
//! block-circulant algebra so that no other module has to think about
//! normalization:
//!
//! * [`block_spectrum`]: `S_t = sum_n e^{-j2pi(t)(n)/N} A_n` - the blocks of
//!   the block-diagonal form of `circ{A_1..A_N}` under conjugation by the
//!   unitary `F_N (x) I_M`.
//! * [`sequence_from_spectrum`]: `A_n = (1/N) sum_t e^{+j2pi(t)(n)/N} S_t` -
//!   its exact inverse, recovering the generator blocks.

use crate::cmatrix::ZERO;
use crate::counters::Counters;
use crate::error::{Error, Result};
use crate::fft;
use ndarray::{Array1, Array2};
use num_complex::Complex64;

/// The (M, N, delta_f, T) lattice geometry shared by every module.
///
/// M counts subcarriers / delay bins, N counts OTFS symbols / Doppler bins.
/// The lattice is critically sampled: `T * delta_f = 1` by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdGrid {
    m: usize,
    n: usize,
    delta_f: f64,
}

impl DdGrid {
    /// Build a grid; the symbol duration is derived as `T = 1 / delta_f`.
    pub fn new(m: usize, n: usize, delta_f: f64) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::InvalidGrid(format!(
                "M and N must be positive (got M = {m}, N = {n})"
            )));
        }
        if delta_f <= 0.0 || !delta_f.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "subcarrier spacing must be positive and finite (got {delta_f})"
            )));
        }
        Ok(Self { m, n, delta_f })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nm(&self) -> usize {
        self.n * self.m
    }

    /// Subcarrier spacing in Hz.
    pub fn delta_f(&self) -> f64 {
        self.delta_f
    }

    /// OFDM symbol duration in seconds (`1 / delta_f`).
    pub fn symbol_time(&self) -> f64 {
        1.0 / self.delta_f
    }

    /// Baseband sample rate `M * delta_f` in Hz.
    pub fn sample_rate(&self) -> f64 {
        self.m as f64 * self.delta_f
    }

    /// Sample period `1 / (M * delta_f)` in seconds.
    pub fn sample_period(&self) -> f64 {
        1.0 / self.sample_rate()
    }
}

/// Delay-Doppler frame: M x N complex data (delay rows, Doppler columns).
#[derive(Debug, Clone, PartialEq)]
pub struct DdFrame {
    grid: DdGrid,
    data: Array2<Complex64>,
}

/// Time-frequency frame: M x N complex data (frequency rows, time columns).
#[derive(Debug, Clone, PartialEq)]
pub struct TfFrame {
    grid: DdGrid,
    data: Array2<Complex64>,
}

macro_rules! frame_impl {
    ($ty:ident) => {
        impl $ty {
            pub fn new(grid: DdGrid, data: Array2<Complex64>) -> Result<Self> {
                if data.dim() != (grid.m(), grid.n()) {
                    return Err(Error::Dimension(format!(
                        "{} data is {:?}, grid wants ({}, {})",
                        stringify!($ty),
                        data.dim(),
                        grid.m(),
                        grid.n()
                    )));
                }
                Ok(Self { grid, data })
            }

            pub fn zeros(grid: DdGrid) -> Self {
                Self {
                    grid,
                    data: Array2::from_elem((grid.m(), grid.n()), ZERO),
                }
            }

            pub fn grid(&self) -> DdGrid {
                self.grid
            }

            pub fn data(&self) -> &Array2<Complex64> {
                &self.data
            }

            pub fn data_mut(&mut self) -> &mut Array2<Complex64> {
                &mut self.data
            }
        }
    };
}

frame_impl!(DdFrame);
frame_impl!(TfFrame);

/// Ordered set of N complex M x M matrices; the common currency for
/// time-domain channel blocks, effective-channel generators, transformed
/// spectra and equalizer blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSequence {
    grid: DdGrid,
    blocks: Vec<Array2<Complex64>>,
}

impl MatrixSequence {
    pub fn new(grid: DdGrid, blocks: Vec<Array2<Complex64>>) -> Result<Self> {
        if blocks.len() != grid.n() {
            return Err(Error::Dimension(format!(
                "sequence has {} blocks, grid wants N = {}",
                blocks.len(),
                grid.n()
            )));
        }
        for (i, b) in blocks.iter().enumerate() {
            if b.dim() != (grid.m(), grid.m()) {
                return Err(Error::Dimension(format!(
                    "block {} is {:?}, grid wants ({m}, {m})",
                    i + 1,
                    b.dim(),
                    m = grid.m()
                )));
            }
        }
        Ok(Self { grid, blocks })
    }

    pub fn zeros(grid: DdGrid) -> Self {
        let blocks = (0..grid.n())
            .map(|_| Array2::from_elem((grid.m(), grid.m()), ZERO))
            .collect();
        Self { grid, blocks }
    }

    pub fn from_fn(grid: DdGrid, f: impl FnMut(usize) -> Array2<Complex64>) -> Result<Self> {
        Self::new(grid, (0..grid.n()).map(f).collect())
    }

    pub fn grid(&self) -> DdGrid {
        self.grid
    }

    pub fn block(&self, i: usize) -> &Array2<Complex64> {
        &self.blocks[i]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut Array2<Complex64> {
        &mut self.blocks[i]
    }

    pub fn blocks(&self) -> &[Array2<Complex64>] {
        &self.blocks
    }

    /// Sum of squared Frobenius norms across blocks.
    pub fn energy(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum()
    }
}

/// Inverse symplectic finite Fourier transform: `F_M X F_N^H` with unitary
/// factors. Forward M-point DFT down each column, inverse N-point DFT along
/// each row.
pub fn isfft(frame: &DdFrame) -> TfFrame {
    TfFrame {
        grid: frame.grid,
        data: symplectic(&frame.data, true),
    }
}

/// Symplectic finite Fourier transform: `F_M^H R F_N`; exact inverse of
/// [`isfft`].
pub fn sfft(frame: &TfFrame) -> DdFrame {
    DdFrame {
        grid: frame.grid,
        data: symplectic(&frame.data, false),
    }
}

fn symplectic(data: &Array2<Complex64>, forward_rows_inverse_cols: bool) -> Array2<Complex64> {
    let (m, n) = data.dim();
    let mut out = data.clone();
    let mut col = vec![ZERO; m];
    for j in 0..n {
        for i in 0..m {
            col[i] = out[[i, j]];
        }
        if forward_rows_inverse_cols {
            fft::forward(&mut col);
        } else {
            fft::inverse(&mut col);
        }
        let s = 1.0 / (m as f64).sqrt();
        for i in 0..m {
            out[[i, j]] = col[i] * s;
        }
    }
    let mut row = vec![ZERO; n];
    for i in 0..m {
        for j in 0..n {
            row[j] = out[[i, j]];
        }
        if forward_rows_inverse_cols {
            fft::inverse(&mut row);
        } else {
            fft::forward(&mut row);
        }
        let s = 1.0 / (n as f64).sqrt();
        for j in 0..n {
            out[[i, j]] = row[j] * s;
        }
    }
    out
}

/// Column-wise stacking: frame element (m, n) lands at vector index
/// `n * M + m` (0-based).
pub fn vectorize(frame: &DdFrame) -> Array1<Complex64> {
    let (m, n) = frame.data.dim();
    let mut v = Array1::from_elem(n * m, ZERO);
    for j in 0..n {
        for i in 0..m {
            v[j * m + i] = frame.data[[i, j]];
        }
    }
    v
}

/// Exact inverse of [`vectorize`].
pub fn devectorize(v: &Array1<Complex64>, grid: DdGrid) -> Result<DdFrame> {
    if v.len() != grid.nm() {
        return Err(Error::Dimension(format!(
            "vector length {} does not match N*M = {}",
            v.len(),
            grid.nm()
        )));
    }
    let (m, n) = (grid.m(), grid.n());
    let mut data = Array2::from_elem((m, n), ZERO);
    for j in 0..n {
        for i in 0..m {
            data[[i, j]] = v[j * m + i];
        }
    }
    Ok(DdFrame { grid, data })
}

/// Shared worker: independent length-N transforms across the block index at
/// each of the M^2 matrix positions, times `scale`.
fn sequence_dft(seq: &MatrixSequence, forward: bool, scale: f64, ctr: &mut Counters) -> MatrixSequence {
    let m = seq.grid.m();
    let n = seq.grid.n();
    let mut out = seq.clone();
    let mut lane = vec![ZERO; n];
    for r in 0..m {
        for c in 0..m {
            for (p, b) in seq.blocks.iter().enumerate() {
                lane[p] = b[[r, c]];
            }
            if forward {
                fft::forward(&mut lane);
            } else {
                fft::inverse(&mut lane);
            }
            ctr.add_fft(n);
            if scale == 1.0 {
                for (p, v) in lane.iter().enumerate() {
                    out.blocks[p][[r, c]] = *v;
                }
            } else {
                for (p, v) in lane.iter().enumerate() {
                    out.blocks[p][[r, c]] = v * scale;
                }
                ctr.add_mul(n as u64);
            }
        }
    }
    out
}

/// Unitary forward DFT across the block index, independently at each matrix
/// position: output block t = `(1/sqrt(N)) sum_n e^{-j2pi t n / N} A_n`.
pub fn sequence_fft(seq: &MatrixSequence) -> MatrixSequence {
    sequence_fft_counted(seq, &mut Counters::new())
}

pub fn sequence_fft_counted(seq: &MatrixSequence, ctr: &mut Counters) -> MatrixSequence {
    let n = seq.grid.n() as f64;
    sequence_dft(seq, true, 1.0 / n.sqrt(), ctr)
}

/// Exact inverse of [`sequence_fft`] (unitary inverse DFT across blocks).
pub fn sequence_ifft(seq: &MatrixSequence) -> MatrixSequence {
    sequence_ifft_counted(seq, &mut Counters::new())
}

pub fn sequence_ifft_counted(seq: &MatrixSequence, ctr: &mut Counters) -> MatrixSequence {
    let n = seq.grid.n() as f64;
    sequence_dft(seq, false, 1.0 / n.sqrt(), ctr)
}

/// Block-diagonalization blocks of `circ{A_1..A_N}`:
/// `S_t = sum_n e^{-j2pi t n / N} A_n` (unnormalized forward transform).
///
/// These satisfy
/// `(F_N^H (x) I_M) circ{A} (F_N (x) I_M) = diag(S_1..S_N)` with unitary F_N.
pub fn block_spectrum(seq: &MatrixSequence, ctr: &mut Counters) -> MatrixSequence {
    sequence_dft(seq, true, 1.0, ctr)
}

/// Recover generator blocks from their spectrum:
/// `A_n = (1/N) sum_t e^{+j2pi t n / N} S_t`. Exact inverse of
/// [`block_spectrum`].
pub fn sequence_from_spectrum(seq: &MatrixSequence, ctr: &mut Counters) -> MatrixSequence {
    let n = seq.grid.n() as f64;
    sequence_dft(seq, false, 1.0 / n, ctr)
}

/// Materialize `circ{A_1..A_N}` as a dense NM x NM matrix: block row i,
/// block column k holds `A_n` with `n = <k - i>_N + 1` (1-based law; the
/// sequence is the first block row). Intended for oracles and small tests.
pub fn assemble_block_circulant(seq: &MatrixSequence) -> Array2<Complex64> {
    let m = seq.grid.m();
    let n = seq.grid.n();
    let mut out = Array2::from_elem((n * m, n * m), ZERO);
    for bi in 0..n {
        for bk in 0..n {
            let src = &seq.blocks[(bk + n - bi) % n];
            for r in 0..m {
                for c in 0..m {
                    out[[bi * m + r, bk * m + c]] = src[[r, c]];
                }
            }
        }
    }
    out
}

/// Max deviation from the block-shift identity
/// `block(i,k) = block(i+1 mod N, k+1 mod N)` of a dense NM x NM matrix.
/// Zero (to tolerance) iff the matrix is block-circulant.
pub fn block_circulant_deviation(a: &Array2<Complex64>, grid: DdGrid) -> f64 {
    let (m, n) = (grid.m(), grid.n());
    assert_eq!(a.dim(), (n * m, n * m));
    let mut worst = 0.0_f64;
    for bi in 0..n {
        for bk in 0..n {
            let (bi2, bk2) = ((bi + 1) % n, (bk + 1) % n);
            for r in 0..m {
                for c in 0..m {
                    let d = (a[[bi * m + r, bk * m + c]] - a[[bi2 * m + r, bk2 * m + c]]).norm();
                    worst = worst.max(d);
                }
            }
        }
    }
    worst
}
