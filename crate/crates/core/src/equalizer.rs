//! ZF and MMSE equalizers in block-circulant (low-complexity) and direct
//! dense-inversion (oracle) forms.
//!
//! The low-complexity builders never touch an NM x NM matrix: they work on
//! the N generator blocks and the N diagonalization blocks. Application is
//! the three-stage factored product (inverse DFT across segments, one M x M
//! block product per Doppler bin, forward DFT back), costing
//! O(M^2 N + M N log N) per frame.

use crate::channel::EffectiveChannel;
use crate::cmatrix::{self, ZERO};
use crate::counters::Counters;
use crate::error::{Error, Result};
use crate::fft;
use crate::linalg::{
    block_circulant_inverse_full, conforms, dense_inverse, DelayPattern,
};
use crate::transforms::{block_spectrum, sequence_from_spectrum, MatrixSequence};
use ndarray::{Array1, Array2};
use num_complex::Complex64;

/// Zero-forcing equalizer: the inverse of the block-circulant effective
/// channel, stored as generator blocks plus the cached diagonalization
/// spectrum used by [`ZfEqualizer::apply`].
#[derive(Debug, Clone)]
pub struct ZfEqualizer {
    blocks: MatrixSequence,
    spectrum: MatrixSequence,
}

impl ZfEqualizer {
    /// Invert the effective channel blockwise. With a conforming delay
    /// pattern the per-block inversions run through the structured LU;
    /// otherwise dense. Total cost O(M^2 N log N + N M^2 D_P).
    pub fn build(
        eff: &EffectiveChannel,
        pattern: Option<&DelayPattern>,
        ctr: &mut Counters,
    ) -> Result<Self> {
        let inv = block_circulant_inverse_full(eff.generator(), pattern, ctr)?;
        Ok(Self { blocks: inv.blocks, spectrum: inv.spectrum_inverse })
    }

    /// Generator blocks `B_1 .. B_N` of the equalizer.
    pub fn blocks(&self) -> &MatrixSequence {
        &self.blocks
    }

    /// Equalize one vectorized DD frame.
    pub fn apply(&self, y: &Array1<Complex64>, ctr: &mut Counters) -> Result<Array1<Complex64>> {
        apply_block_circulant(&self.spectrum, y, ctr)
    }
}

/// MMSE equalizer `(H^H H + sigma^2 I)^{-1} H^H` in block-circulant form.
#[derive(Debug, Clone)]
pub struct MmseEqualizer {
    sigma2: f64,
    blocks: MatrixSequence,
    spectrum: MatrixSequence,
}

impl MmseEqualizer {
    /// Build from the effective channel and the noise variance.
    ///
    /// The regularized Gram operator `C = H^H H + sigma^2 I` is formed
    /// directly in the transformed domain (its diagonalization blocks are
    /// `S_t^H S_t + sigma^2 I`), each block is inverted, the inverse is
    /// transformed back to its generator blocks `C_i^{-1}`, and the
    /// equalizer blocks follow from the block cyclic correlation
    /// `W_k = sum_i C_i^{-1} A^H_{<i-k>_N + 1}`, exploiting the tap sparsity
    /// of the A blocks when a conforming pattern is supplied. Dominant cost
    /// O(M^2 N^2 P).
    pub fn build(
        eff: &EffectiveChannel,
        sigma2: f64,
        pattern: Option<&DelayPattern>,
        ctr: &mut Counters,
    ) -> Result<Self> {
        if sigma2 < 0.0 || !sigma2.is_finite() {
            return Err(Error::Config(format!("noise variance must be >= 0 (got {sigma2})")));
        }
        let grid = eff.grid();
        let (m, n) = (grid.m(), grid.n());
        let gen = eff.generator();
        let spectrum = block_spectrum(gen, ctr);
        let sparse_pattern = pattern
            .filter(|p| p.m() == m && gen.blocks().iter().all(|b| conforms(b, p)));

        // Diagonalization blocks of C, inverted one at a time.
        let mut gram_inverses = Vec::with_capacity(n);
        for t in 0..n {
            let st = spectrum.block(t);
            let gram = match sparse_pattern {
                Some(pat) if conforms(st, pat) => gram_from_taps(st, pat, sigma2, ctr),
                _ => {
                    let mut g = cmatrix::mat_mul(&cmatrix::adjoint(st), st, ctr);
                    for i in 0..m {
                        g[[i, i]] += sigma2;
                    }
                    g
                }
            };
            let inv = dense_inverse(&gram, ctr)
                .map_err(|e| Error::SingularBlock { t: t + 1, source: Box::new(e) })?;
            gram_inverses.push(inv);
        }
        let gram_inv_spectrum = MatrixSequence::new(grid, gram_inverses)?;
        let c_inv = sequence_from_spectrum(&gram_inv_spectrum, ctr);

        // W_k = sum_i C_i^{-1} A^H_{(i - k) mod N}
        let adj_sparse: Option<Vec<SparseAdjoint>> =
            sparse_pattern.map(|p| gen.blocks().iter().map(|b| SparseAdjoint::new(b, p)).collect());
        let mut w_blocks = Vec::with_capacity(n);
        for k in 0..n {
            let mut acc = Array2::from_elem((m, m), ZERO);
            for i in 0..n {
                let j = (i + n - k) % n;
                match &adj_sparse {
                    Some(rows) => rows[j].accumulate_left_product(c_inv.block(i), &mut acc, ctr),
                    None => {
                        let prod = cmatrix::mat_mul(c_inv.block(i), &cmatrix::adjoint(gen.block(j)), ctr);
                        acc += &prod;
                    }
                }
            }
            w_blocks.push(acc);
        }
        let blocks = MatrixSequence::new(grid, w_blocks)?;
        let spectrum = block_spectrum(&blocks, ctr);
        Ok(Self { sigma2, blocks, spectrum })
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Generator blocks `W_1 .. W_N` of the equalizer.
    pub fn blocks(&self) -> &MatrixSequence {
        &self.blocks
    }

    /// Equalize one vectorized DD frame.
    pub fn apply(&self, y: &Array1<Complex64>, ctr: &mut Counters) -> Result<Array1<Complex64>> {
        apply_block_circulant(&self.spectrum, y, ctr)
    }
}

/// `S^H S + sigma^2 I` for a tap-patterned S in O(M P^2): row m of S touches
/// columns (m - d_j), so each row contributes P^2 rank-one terms.
fn gram_from_taps(
    s: &Array2<Complex64>,
    pattern: &DelayPattern,
    sigma2: f64,
    ctr: &mut Counters,
) -> Array2<Complex64> {
    let m = pattern.m();
    let p = pattern.path_count();
    let mut g = Array2::from_elem((m, m), ZERO);
    for row in 0..m {
        for j in 0..p {
            let a = pattern.column(row, j);
            let va = s[[row, a]].conj();
            for k in 0..p {
                let b = pattern.column(row, k);
                g[[a, b]] += va * s[[row, b]];
            }
        }
        ctr.add_mul((p * p) as u64);
    }
    for i in 0..m {
        g[[i, i]] += sigma2;
    }
    g
}

/// Sparse rows of `A^H` for a tap-patterned A: row a holds the P entries
/// `(c, conj(A[c, a]))` with `c = (a + d_k) mod M`.
struct SparseAdjoint {
    m: usize,
    entries: Vec<(usize, Complex64)>,
}

impl SparseAdjoint {
    fn new(a: &Array2<Complex64>, pattern: &DelayPattern) -> Self {
        let m = pattern.m();
        let p = pattern.path_count();
        let mut entries = Vec::with_capacity(m * p);
        for row in 0..m {
            for k in 0..p {
                let c = (row + pattern.offsets()[k]) % m;
                entries.push((c, a[[c, row]].conj()));
            }
        }
        Self { m, entries }
    }

    /// `acc += dense * A^H` in O(M^2 P).
    fn accumulate_left_product(
        &self,
        dense: &Array2<Complex64>,
        acc: &mut Array2<Complex64>,
        ctr: &mut Counters,
    ) {
        let m = self.m;
        let p = self.entries.len() / m;
        for r in 0..m {
            let drow = dense.row(r);
            let mut arow = acc.row_mut(r);
            for a in 0..m {
                let v = drow[a];
                if v == ZERO {
                    continue;
                }
                for (c, w) in &self.entries[a * p..(a + 1) * p] {
                    arow[*c] += v * w;
                }
            }
        }
        ctr.add_mul((m * m * p) as u64);
    }
}

/// Apply a block-circulant operator given its diagonalization spectrum:
/// inverse unitary DFT across the N segments at each of the M positions,
/// one M x M product per bin, forward unitary DFT back.
pub fn apply_block_circulant(
    spectrum: &MatrixSequence,
    y: &Array1<Complex64>,
    ctr: &mut Counters,
) -> Result<Array1<Complex64>> {
    let grid = spectrum.grid();
    let (m, n) = (grid.m(), grid.n());
    if y.len() != grid.nm() {
        return Err(Error::Dimension(format!(
            "vector length {} does not match N*M = {}",
            y.len(),
            grid.nm()
        )));
    }
    let root_n = (n as f64).sqrt();
    // segments[t][r]: segment t after the inverse transform
    let mut segments = Array2::from_elem((n, m), ZERO);
    let mut lane = vec![ZERO; n];
    for r in 0..m {
        for p in 0..n {
            lane[p] = y[p * m + r];
        }
        fft::inverse(&mut lane);
        ctr.add_fft(n);
        for t in 0..n {
            segments[[t, r]] = lane[t] / root_n;
        }
        ctr.add_mul(n as u64);
    }
    // one block product per bin
    let mut products = Array2::from_elem((n, m), ZERO);
    for t in 0..n {
        let st = spectrum.block(t);
        for r in 0..m {
            let mut acc = ZERO;
            let srow = st.row(r);
            for c in 0..m {
                acc += srow[c] * segments[[t, c]];
            }
            products[[t, r]] = acc;
        }
        ctr.add_mul((m * m) as u64);
    }
    // forward transform back
    let mut out = Array1::from_elem(grid.nm(), ZERO);
    for r in 0..m {
        for t in 0..n {
            lane[t] = products[[t, r]];
        }
        fft::forward(&mut lane);
        ctr.add_fft(n);
        for p in 0..n {
            out[p * m + r] = lane[p] / root_n;
        }
        ctr.add_mul(n as u64);
    }
    Ok(out)
}

/// Direct-inversion ZF baseline on a dense effective channel.
pub fn direct_zf(
    h_dense: &Array2<Complex64>,
    y: &Array1<Complex64>,
    ctr: &mut Counters,
) -> Result<Array1<Complex64>> {
    let w = dense_inverse(h_dense, ctr)?;
    Ok(cmatrix::mat_vec(&w, y, ctr))
}

/// Direct-inversion MMSE baseline `(H^H H + sigma^2 I)^{-1} H^H y` on a
/// dense effective channel.
pub fn direct_mmse(
    h_dense: &Array2<Complex64>,
    sigma2: f64,
    y: &Array1<Complex64>,
    ctr: &mut Counters,
) -> Result<Array1<Complex64>> {
    let w = direct_mmse_matrix(h_dense, sigma2, ctr)?;
    Ok(cmatrix::mat_vec(&w, y, ctr))
}

/// The dense MMSE evaluation matrix itself (shared by the oracle tests).
pub fn direct_mmse_matrix(
    h_dense: &Array2<Complex64>,
    sigma2: f64,
    ctr: &mut Counters,
) -> Result<Array2<Complex64>> {
    let k = h_dense.nrows();
    let hh = cmatrix::adjoint(h_dense);
    let mut c = cmatrix::mat_mul(&hh, h_dense, ctr);
    for i in 0..k {
        c[[i, i]] += sigma2;
    }
    let cinv = dense_inverse(&c, ctr)?;
    Ok(cmatrix::mat_mul(&cinv, &hh, ctr))
}
