//! Structured linear algebra kernels.
//!
//! The matrices inverted here are M x M with nonzeros confined to a circular
//! tap pattern: entry (i, j) can be nonzero only when `(i - j) mod M` is one
//! of the delay offsets `d = [D_1 .. D_P]` (D_1 = 0, so the diagonal is
//! populated). Equivalently: a lower band at offsets `d` plus a wrap-around
//! wedge in the top-right corner of width D_P.
//!
//! Gaussian elimination without pivoting on such a matrix produces no fill
//! outside the trailing D_P columns: in the leading M - D_P columns the
//! pivots and subdiagonal entries are never touched by earlier eliminations,
//! so multipliers exist only at the offsets `d`, and all row updates land in
//! the trailing columns. [`structured_lu`] exploits exactly that, finishing
//! with a dense factorization of the trailing (D_P x D_P) Schur complement.
//! The factor-and-invert path costs O(M^2 D_P) against O(M^3) for a dense
//! inverse.
//!
//! [`block_circulant_inverse`] lifts the M x M inverses to the NM x NM
//! block-circulant operator: transform the generator blocks to their
//! diagonalization spectrum, invert each spectrum block (structured when the
//! pattern applies, dense otherwise), transform back.

use crate::cmatrix::{self, identity, max_abs, ONE, ZERO};
use crate::counters::Counters;
use crate::error::{Error, Result};
use crate::transforms::{block_spectrum, sequence_from_spectrum, MatrixSequence};
use crate::DENSE_SIZE_LIMIT;
use ndarray::Array2;
use num_complex::Complex64;

/// Pivot magnitudes below this abort the factorization as singular.
pub const SINGULARITY_EPS: f64 = 1e-14;

/// Off-pattern mass above this (relative to the largest entry) disqualifies
/// a matrix from the structured path.
pub const CONFORMANCE_TOL: f64 = 1e-9;

/// The circular tap-offset pattern of a structured matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelayPattern {
    offsets: Vec<usize>,
    m: usize,
}

impl DelayPattern {
    /// Offsets must be strictly increasing with the largest below `m`.
    pub fn new(offsets: Vec<usize>, m: usize) -> Result<Self> {
        if offsets.is_empty() {
            return Err(Error::Profile("delay pattern needs at least one offset".into()));
        }
        if !offsets.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Profile(format!(
                "delay offsets must be strictly increasing (got {offsets:?})"
            )));
        }
        let dp = *offsets.last().unwrap();
        if dp >= m {
            return Err(Error::Profile(format!(
                "maximum delay offset {dp} must be below the matrix size {m}"
            )));
        }
        Ok(Self { offsets, m })
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of taps P.
    pub fn path_count(&self) -> usize {
        self.offsets.len()
    }

    /// Largest offset D_P.
    pub fn max_delay(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// First column of the trailing (dense) region: M - D_P.
    pub fn band_start(&self) -> usize {
        self.m - self.max_delay()
    }

    /// The no-pivot elimination needs a populated diagonal, i.e. a tap at
    /// offset zero. Patterns without it fall back to dense inversion.
    pub fn supports_structured(&self) -> bool {
        self.offsets[0] == 0
    }

    /// Column hit by tap `k` in `row`: `(row - d_k) mod M`.
    pub fn column(&self, row: usize, k: usize) -> usize {
        (row + self.m - self.offsets[k]) % self.m
    }
}

/// Largest off-pattern entry magnitude of `a` under `pattern`.
pub fn off_pattern_mass(a: &Array2<Complex64>, pattern: &DelayPattern) -> f64 {
    let m = pattern.m();
    assert_eq!(a.dim(), (m, m));
    let mut on = vec![false; m * m];
    for row in 0..m {
        for k in 0..pattern.path_count() {
            on[row * m + pattern.column(row, k)] = true;
        }
    }
    let mut worst = 0.0_f64;
    for row in 0..m {
        for col in 0..m {
            if !on[row * m + col] {
                worst = worst.max(a[[row, col]].norm());
            }
        }
    }
    worst
}

/// True when `a` fits the pattern to within [`CONFORMANCE_TOL`] relative to
/// its largest entry.
pub fn conforms(a: &Array2<Complex64>, pattern: &DelayPattern) -> bool {
    if a.dim() != (pattern.m(), pattern.m()) {
        return false;
    }
    off_pattern_mass(a, pattern) <= CONFORMANCE_TOL * max_abs(a).max(1e-300)
}

/// An M x M matrix whose nonzeros obey a circular tap pattern with a
/// populated diagonal. Construction projects sub-tolerance off-pattern
/// residue (e.g. FFT round-off) to exact zero.
#[derive(Debug, Clone)]
pub struct StructuredMatrix {
    data: Array2<Complex64>,
    pattern: DelayPattern,
}

impl StructuredMatrix {
    pub fn new(data: Array2<Complex64>, pattern: DelayPattern) -> Result<Self> {
        if data.dim() != (pattern.m(), pattern.m()) {
            return Err(Error::Dimension(format!(
                "matrix is {:?}, pattern wants ({m}, {m})",
                data.dim(),
                m = pattern.m()
            )));
        }
        if !pattern.supports_structured() {
            return Err(Error::Profile(
                "structured matrices require a tap at offset zero (populated diagonal)".into(),
            ));
        }
        if !conforms(&data, &pattern) {
            return Err(Error::Dimension(format!(
                "matrix does not conform to the delay pattern: off-pattern mass {:.3e}",
                off_pattern_mass(&data, &pattern)
            )));
        }
        let mut projected = Array2::from_elem(data.dim(), ZERO);
        let m = pattern.m();
        for row in 0..m {
            for k in 0..pattern.path_count() {
                let col = pattern.column(row, k);
                projected[[row, col]] = data[[row, col]];
            }
        }
        Ok(Self { data: projected, pattern })
    }

    pub fn data(&self) -> &Array2<Complex64> {
        &self.data
    }

    pub fn pattern(&self) -> &DelayPattern {
        &self.pattern
    }
}

/// Outcome of [`structured_lu`]: unit-lower multipliers, the upper factor,
/// and the forward-substitution workspace filled in by the inversion stage.
#[derive(Debug, Clone)]
pub struct LuWorkspace {
    pattern: DelayPattern,
    phi: Array2<Complex64>,
    lu: Array2<Complex64>,
    y: Array2<Complex64>,
}

impl LuWorkspace {
    /// Unit-lower multiplier matrix.
    pub fn multipliers(&self) -> &Array2<Complex64> {
        &self.phi
    }

    /// Upper factor.
    pub fn upper(&self) -> &Array2<Complex64> {
        &self.lu
    }

    /// Forward-substitution workspace (rows of L^{-1} once the inversion ran).
    pub fn forward_workspace(&self) -> &Array2<Complex64> {
        &self.y
    }

    pub fn pattern(&self) -> &DelayPattern {
        &self.pattern
    }

    /// Counted L * U product, for reconstruction checks.
    pub fn reconstruct(&self, ctr: &mut Counters) -> Array2<Complex64> {
        cmatrix::mat_mul(&self.phi, &self.lu, ctr)
    }
}

/// No-pivot LU factorization exploiting the tap structure.
///
/// Columns left of `M - D_P` produce multipliers only at the tap offsets and
/// update only the trailing D_P columns; the trailing square block is then
/// factored densely. Identical (entry for entry) to dense Doolittle without
/// pivoting, at O(M P D_P + D_P^3) cost.
pub fn structured_lu(s: &StructuredMatrix, ctr: &mut Counters) -> Result<LuWorkspace> {
    let pattern = s.pattern().clone();
    let m = pattern.m();
    let band = pattern.band_start();
    let mut lu = s.data().clone();
    let mut phi = identity(m);

    // Structured phase: columns 0 .. band. Pivots and subdiagonal entries
    // here are never touched by earlier eliminations, and pivot rows carry
    // upper-part nonzeros only in the trailing columns.
    for col in 0..band {
        let pivot = lu[[col, col]];
        if pivot.norm() < SINGULARITY_EPS {
            return Err(Error::SingularPivot { step: col + 1, magnitude: pivot.norm() });
        }
        for k in 1..pattern.path_count() {
            let row = col + pattern.offsets()[k];
            let val = lu[[row, col]];
            if val == ZERO {
                continue;
            }
            let mult = val / pivot;
            ctr.add_mul(1);
            phi[[row, col]] = mult;
            lu[[row, col]] = ZERO;
            for j in band..m {
                let upd = mult * lu[[col, j]];
                lu[[row, j]] -= upd;
            }
            ctr.add_mul((m - band) as u64);
        }
    }

    // Trailing dense phase on the Schur complement.
    for col in band..m {
        let pivot = lu[[col, col]];
        if pivot.norm() < SINGULARITY_EPS {
            return Err(Error::SingularPivot { step: col + 1, magnitude: pivot.norm() });
        }
        for row in col + 1..m {
            let val = lu[[row, col]];
            if val == ZERO {
                continue;
            }
            let mult = val / pivot;
            ctr.add_mul(1);
            phi[[row, col]] = mult;
            lu[[row, col]] = ZERO;
            for j in col + 1..m {
                let upd = mult * lu[[col, j]];
                lu[[row, j]] -= upd;
            }
            ctr.add_mul((m - col - 1) as u64);
        }
    }

    let y = Array2::from_elem((m, m), ZERO);
    Ok(LuWorkspace { pattern, phi, lu, y })
}

/// Inverse from an existing factorization: forward-substitute L Y = I using
/// only the stored multipliers, then back-substitute through the upper
/// factor. The back substitution over the trailing columns dominates at
/// O(M^2 D_P).
pub fn invert_factored(ws: &mut LuWorkspace, ctr: &mut Counters) -> Array2<Complex64> {
    let m = ws.pattern.m();
    let band = ws.pattern.band_start();

    // Forward: row r of Y = e_r - sum_{c < r} phi[r, c] * row c of Y.
    // Row c of Y has support 0..=c, so each update is an axpy of length c+1.
    ws.y = identity(m);
    for r in 0..m {
        for c in 0..r {
            let f = ws.phi[[r, c]];
            if f == ZERO {
                continue;
            }
            let (done, mut cur) = ws.y.view_mut().split_at(ndarray::Axis(0), r);
            let src = done.row(c);
            let mut dst = cur.row_mut(0);
            for j in 0..=c {
                let upd = f * src[j];
                dst[j] -= upd;
            }
            ctr.add_mul((c + 1) as u64);
        }
    }

    // Back: row r of X = (row r of Y - sum_{j > r} lu[r, j] * row j of X) / lu[r, r].
    // Rows left of the band have upper nonzeros only in the trailing columns.
    let mut x = ws.y.clone();
    for r in (0..m).rev() {
        let first = (r + 1).max(band);
        for j in first..m {
            let u = ws.lu[[r, j]];
            if u == ZERO {
                continue;
            }
            let (mut top, bottom) = x.view_mut().split_at(ndarray::Axis(0), j);
            let src = bottom.row(0);
            let mut dst = top.row_mut(r);
            for col in 0..m {
                let upd = u * src[col];
                dst[col] -= upd;
            }
            ctr.add_mul(m as u64);
        }
        let inv_piv = ONE / ws.lu[[r, r]];
        ctr.add_mul(1);
        let mut row = x.row_mut(r);
        for col in 0..m {
            row[col] *= inv_piv;
        }
        ctr.add_mul(m as u64);
    }
    x
}

/// Factor and invert in one call.
pub fn structured_inverse(s: &StructuredMatrix, ctr: &mut Counters) -> Result<Array2<Complex64>> {
    let mut ws = structured_lu(s, ctr)?;
    Ok(invert_factored(&mut ws, ctr))
}

/// Dense inversion with partial pivoting (Gauss-Jordan on [A | I]).
///
/// This is the reference baseline for every equivalence test and for the
/// direct-inversion complexity rows; it refuses sizes above
/// [`DENSE_SIZE_LIMIT`].
pub fn dense_inverse(a: &Array2<Complex64>, ctr: &mut Counters) -> Result<Array2<Complex64>> {
    let (rows, cols) = a.dim();
    if rows != cols {
        return Err(Error::Dimension(format!("cannot invert a {rows}x{cols} matrix")));
    }
    if rows > DENSE_SIZE_LIMIT {
        return Err(Error::SizeGuard { size: rows, limit: DENSE_SIZE_LIMIT });
    }
    let k = rows;
    let scale = max_abs(a).max(1e-300);
    // force standard layout: the row-slice elimination below assumes it
    let mut work = Array2::from_shape_fn((k, k), |ix| a[ix]);
    let mut inv = identity(k);

    for col in 0..k {
        let mut best = col;
        let mut best_mag = work[[col, col]].norm();
        for r in col + 1..k {
            let mag = work[[r, col]].norm();
            if mag > best_mag {
                best = r;
                best_mag = mag;
            }
        }
        if best_mag < SINGULARITY_EPS * scale {
            return Err(Error::NumericallySingular { cond_estimate: scale / best_mag.max(1e-300) });
        }
        if best != col {
            swap_rows(&mut work, col, best);
            swap_rows(&mut inv, col, best);
        }
        let inv_piv = ONE / work[[col, col]];
        ctr.add_mul(1);
        {
            let mut wrow = work.row_mut(col);
            for j in col..k {
                wrow[j] *= inv_piv;
            }
            let mut irow = inv.row_mut(col);
            for j in 0..k {
                irow[j] *= inv_piv;
            }
            ctr.add_mul((k - col + k) as u64);
        }
        for r in 0..k {
            if r == col {
                continue;
            }
            let f = work[[r, col]];
            if f == ZERO {
                continue;
            }
            {
                let (wr, wc) = two_rows(&mut work, r, col);
                for j in col..k {
                    let upd = f * wc[j];
                    wr[j] -= upd;
                }
            }
            {
                let (ir, ic) = two_rows(&mut inv, r, col);
                for j in 0..k {
                    let upd = f * ic[j];
                    ir[j] -= upd;
                }
            }
            ctr.add_mul((k - col + k) as u64);
        }
    }
    Ok(inv)
}

fn swap_rows(a: &mut Array2<Complex64>, r1: usize, r2: usize) {
    if r1 == r2 {
        return;
    }
    let cols = a.ncols();
    for j in 0..cols {
        let tmp = a[[r1, j]];
        a[[r1, j]] = a[[r2, j]];
        a[[r2, j]] = tmp;
    }
}

/// Mutable views of two distinct rows.
fn two_rows(a: &mut Array2<Complex64>, r: usize, c: usize) -> (&mut [Complex64], &[Complex64]) {
    assert_ne!(r, c);
    let cols = a.ncols();
    let ptr = a.as_slice_mut().expect("contiguous").as_mut_ptr();
    unsafe {
        let row_r = std::slice::from_raw_parts_mut(ptr.add(r * cols), cols);
        let row_c = std::slice::from_raw_parts(ptr.add(c * cols), cols);
        (row_r, row_c)
    }
}

/// Max-norm residual `max |A A^{-1} - I|` (not counted; diagnostic only).
pub fn inverse_residual(a: &Array2<Complex64>, inv: &Array2<Complex64>) -> f64 {
    let mut ctr = Counters::new();
    let prod = cmatrix::mat_mul(a, inv, &mut ctr);
    cmatrix::max_abs_diff(&prod, &identity(a.nrows()))
}

/// Inverse of a block-circulant operator, returned as both the generator
/// blocks and the per-block spectrum inverses.
#[derive(Debug, Clone)]
pub struct BlockCirculantInverse {
    /// Generator blocks of the inverse operator.
    pub blocks: MatrixSequence,
    /// `S_t^{-1}`: the diagonalization blocks of the inverse.
    pub spectrum_inverse: MatrixSequence,
}

/// Invert `circ{A_1..A_N}` without materializing it: transform the generator
/// to its diagonalization spectrum, invert each M x M spectrum block
/// (structured when `pattern` is given and the block conforms, dense
/// otherwise), transform back.
pub fn block_circulant_inverse_full(
    generator: &MatrixSequence,
    pattern: Option<&DelayPattern>,
    ctr: &mut Counters,
) -> Result<BlockCirculantInverse> {
    let grid = generator.grid();
    let spectrum = block_spectrum(generator, ctr);
    let structured = pattern.filter(|p| p.m() == grid.m() && p.supports_structured());
    let mut inverses = Vec::with_capacity(grid.n());
    for t in 0..grid.n() {
        let st = spectrum.block(t);
        let inv = match structured {
            Some(pat) if conforms(st, pat) => StructuredMatrix::new(st.clone(), pat.clone())
                .and_then(|sm| structured_inverse(&sm, ctr)),
            _ => dense_inverse(st, ctr),
        };
        inverses.push(inv.map_err(|e| Error::SingularBlock { t: t + 1, source: Box::new(e) })?);
    }
    let spectrum_inverse = MatrixSequence::new(grid, inverses)?;
    let blocks = sequence_from_spectrum(&spectrum_inverse, ctr);
    Ok(BlockCirculantInverse { blocks, spectrum_inverse })
}

/// Generator blocks of the inverse operator (see
/// [`block_circulant_inverse_full`]).
pub fn block_circulant_inverse(
    generator: &MatrixSequence,
    pattern: Option<&DelayPattern>,
    ctr: &mut Counters,
) -> Result<MatrixSequence> {
    Ok(block_circulant_inverse_full(generator, pattern, ctr)?.blocks)
}
