//! Time-varying multipath channels and the DD-domain effective channel.
//!
//! The physical model is a tap-delay line: P discrete paths at integer
//! sample delays `d = [D_1 .. D_P]`, each with a complex gain drawn once per
//! frame and a Doppler shift that rotates the gain sample by sample. With a
//! cyclic prefix longer than D_P, the per-OFDM-symbol channel matrix is
//! circular in the taps: row m of block p holds the P tap values at columns
//! `(m - D_k) mod M`.
//!
//! Three effective-channel constructions are provided:
//!
//! * [`effective_channel`] - the production route: the generator blocks of
//!   the block-circulant DD-domain operator, obtained from the time-domain
//!   blocks by one inverse DFT across the block index (O(M^2 N log N)).
//! * [`effective_channel_dense`] - the direct triple product
//!   `(F_N (x) I_M) H (F_N^H (x) I_M)` materialized densely; the testing
//!   oracle, size-guarded.
//! * [`mismatch_channel`] - the doubly-circulant operator a receiver would
//!   assume under ideal waveforms: the true first column reshaped and spread
//!   as a 2-D circular convolution. Used to demonstrate the mismatch penalty.

use crate::cmatrix::{self, ZERO};
use crate::counters::Counters;
use crate::error::{Error, Result};
use crate::linalg::{DelayPattern, StructuredMatrix};
use crate::transforms::{sequence_from_spectrum, DdGrid, MatrixSequence};
use crate::DENSE_SIZE_LIMIT;
use ndarray::Array2;
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::io::{BufRead, Write};

/// ITU-R Vehicular B power-delay profile.
pub const VEHICULAR_B_DELAYS_US: [f64; 6] = [0.0, 0.3, 8.9, 12.9, 17.1, 20.0];
pub const VEHICULAR_B_POWERS_DB: [f64; 6] = [-2.5, 0.0, -12.8, -10.0, -25.2, -16.0];

/// Static description of the multipath geometry: physical delays, average
/// path powers, and the grid-quantized sample positions.
///
/// Delay quantization is `D_k = ceil(delay_k * M * delta_f)` (with a 1e-9
/// guard against floating-point spill), which places the 20 us Vehicular-B
/// tail at sample position 20 for the 64 x 15 kHz grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayProfile {
    delays_s: Vec<f64>,
    powers_db: Vec<f64>,
    positions: Vec<usize>,
    cp_len: usize,
}

impl DelayProfile {
    /// Quantize physical delays (seconds) onto a grid.
    pub fn from_delays(delays_s: &[f64], powers_db: &[f64], grid: DdGrid) -> Result<Self> {
        if delays_s.is_empty() {
            return Err(Error::Profile("at least one path is required".into()));
        }
        if delays_s.len() != powers_db.len() {
            return Err(Error::Profile(format!(
                "{} delays but {} powers",
                delays_s.len(),
                powers_db.len()
            )));
        }
        if !delays_s.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Profile("path delays must be strictly increasing".into()));
        }
        if delays_s[0] < 0.0 {
            return Err(Error::Profile("path delays must be nonnegative".into()));
        }
        let rate = grid.sample_rate();
        let positions: Vec<usize> = delays_s
            .iter()
            .map(|d| (d * rate - 1e-9).ceil().max(0.0) as usize)
            .collect();
        Self::from_parts(delays_s.to_vec(), powers_db.to_vec(), positions, grid)
    }

    /// Build directly from integer sample positions.
    pub fn from_positions(positions: &[usize], powers_db: &[f64], grid: DdGrid) -> Result<Self> {
        let ts = grid.sample_period();
        let delays = positions.iter().map(|&p| p as f64 * ts).collect();
        Self::from_parts(delays, powers_db.to_vec(), positions.to_vec(), grid)
    }

    fn from_parts(
        delays_s: Vec<f64>,
        powers_db: Vec<f64>,
        positions: Vec<usize>,
        grid: DdGrid,
    ) -> Result<Self> {
        if positions.len() != powers_db.len() {
            return Err(Error::Profile(format!(
                "{} positions but {} powers",
                positions.len(),
                powers_db.len()
            )));
        }
        if !positions.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Profile(format!(
                "delay positions must be pairwise distinct and increasing after rounding (got {positions:?})"
            )));
        }
        let dp = *positions.last().unwrap();
        if dp >= grid.m() {
            return Err(Error::Profile(format!(
                "maximum delay position {dp} must satisfy D_P < M = {}",
                grid.m()
            )));
        }
        Ok(Self { delays_s, powers_db, positions, cp_len: dp + 1 })
    }

    /// Vehicular B quantized onto `grid`.
    pub fn vehicular_b(grid: DdGrid) -> Result<Self> {
        Self::from_delays(&VEHICULAR_B_DELAYS_US.map(|d| d * 1e-6), &VEHICULAR_B_POWERS_DB, grid)
    }

    /// Vehicular B with the delay axis compressed so the largest tap lands
    /// at `max_pos` samples: position_k = ceil(delay_k / delay_P * max_pos).
    /// Keeps P = 6 on grids too small for the native 20-sample spread.
    pub fn vehicular_b_scaled(grid: DdGrid, max_pos: usize) -> Result<Self> {
        let longest = *VEHICULAR_B_DELAYS_US.last().unwrap();
        let positions: Vec<usize> = VEHICULAR_B_DELAYS_US
            .iter()
            .map(|d| ((d / longest) * max_pos as f64 - 1e-9).ceil().max(0.0) as usize)
            .collect();
        Self::from_positions(&positions, &VEHICULAR_B_POWERS_DB, grid)
    }

    /// Override the cyclic-prefix length; must stay above the maximum delay.
    pub fn with_cp_len(mut self, cp_len: usize) -> Result<Self> {
        if cp_len < self.max_position() + 1 {
            return Err(Error::Profile(format!(
                "cp_len {cp_len} must be at least D_P + 1 = {}",
                self.max_position() + 1
            )));
        }
        self.cp_len = cp_len;
        Ok(self)
    }

    pub fn path_count(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn delays_s(&self) -> &[f64] {
        &self.delays_s
    }

    pub fn powers_db(&self) -> &[f64] {
        &self.powers_db
    }

    /// Maximum delay position D_P.
    pub fn max_position(&self) -> usize {
        *self.positions.last().unwrap()
    }

    pub fn cp_len(&self) -> usize {
        self.cp_len
    }

    /// The tap pattern as seen by the structured solver.
    pub fn pattern(&self, m: usize) -> Result<DelayPattern> {
        DelayPattern::new(self.positions.clone(), m)
    }

    /// Per-path gain variances, normalized to sum to one.
    pub fn normalized_variances(&self) -> Vec<f64> {
        let lin: Vec<f64> = self.powers_db.iter().map(|p| 10f64.powf(p / 10.0)).collect();
        let total: f64 = lin.iter().sum();
        lin.iter().map(|v| v / total).collect()
    }
}

/// One fading realization: a complex gain and a Doppler shift per path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRealization {
    gains: Vec<Complex64>,
    dopplers_hz: Vec<f64>,
}

impl PathRealization {
    /// Assemble a realization from explicit per-path gains and Doppler
    /// shifts (one of each per path).
    pub fn new(gains: Vec<Complex64>, dopplers_hz: Vec<f64>) -> Result<Self> {
        if gains.len() != dopplers_hz.len() || gains.is_empty() {
            return Err(Error::Profile(format!(
                "need matching nonempty gain/doppler lists (got {} and {})",
                gains.len(),
                dopplers_hz.len()
            )));
        }
        Ok(Self { gains, dopplers_hz })
    }

    pub fn gains(&self) -> &[Complex64] {
        &self.gains
    }

    pub fn dopplers_hz(&self) -> &[f64] {
        &self.dopplers_hz
    }
}

/// Draw one realization from an explicit RNG: gains are circularly symmetric
/// complex Gaussian with the profile's normalized variances, Doppler shifts
/// uniform on [-f_max, f_max]. Draw order is fixed (per path: gain real,
/// gain imag, doppler).
pub fn draw_realization_with(
    profile: &DelayProfile,
    f_max_hz: f64,
    rng: &mut impl Rng,
) -> PathRealization {
    assert!(f_max_hz >= 0.0, "maximum Doppler spread must be nonnegative");
    let vars = profile.normalized_variances();
    let mut gains = Vec::with_capacity(vars.len());
    let mut dopplers = Vec::with_capacity(vars.len());
    for &v in &vars {
        let s = (v / 2.0).sqrt();
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        gains.push(Complex64::new(re * s, im * s));
        let u: f64 = rng.gen();
        dopplers.push((2.0 * u - 1.0) * f_max_hz);
    }
    PathRealization { gains, dopplers_hz: dopplers }
}

/// Seeded wrapper around [`draw_realization_with`]; identical seeds yield
/// identical realizations.
pub fn draw_realization(profile: &DelayProfile, f_max_hz: f64, rng_seed: u64) -> PathRealization {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    draw_realization_with(profile, f_max_hz, &mut rng)
}

/// The block-diagonal time-domain channel: N per-symbol M x M matrices, each
/// storing only its M x P tap values.
#[derive(Debug, Clone)]
pub struct TimeVaryingChannel {
    grid: DdGrid,
    profile: DelayProfile,
    /// `taps[p][[m, k]]` is the value of tap k in row m of block p.
    taps: Vec<Array2<Complex64>>,
}

impl TimeVaryingChannel {
    pub fn grid(&self) -> DdGrid {
        self.grid
    }

    pub fn profile(&self) -> &DelayProfile {
        &self.profile
    }

    /// Dense M x M form of block p (exact zeros off the tap pattern).
    pub fn dense_block(&self, p: usize) -> Array2<Complex64> {
        let m = self.grid.m();
        let mut out = Array2::from_elem((m, m), ZERO);
        for row in 0..m {
            for (k, &d) in self.profile.positions().iter().enumerate() {
                out[[row, (row + m - d) % m]] = self.taps[p][[row, k]];
            }
        }
        out
    }

    /// All blocks as a dense matrix sequence.
    pub fn sequence(&self) -> MatrixSequence {
        MatrixSequence::new(self.grid, (0..self.grid.n()).map(|p| self.dense_block(p)).collect())
            .expect("blocks match grid by construction")
    }

    /// Block p wrapped for the structured solver.
    pub fn structured_block(&self, p: usize) -> Result<StructuredMatrix> {
        StructuredMatrix::new(self.dense_block(p), self.profile.pattern(self.grid.m())?)
    }

    /// Sparse product `out = H_p x` in O(M P).
    pub fn apply_block(&self, p: usize, x: &[Complex64], out: &mut [Complex64], ctr: &mut Counters) {
        let m = self.grid.m();
        assert_eq!(x.len(), m);
        assert_eq!(out.len(), m);
        let taps = &self.taps[p];
        for row in 0..m {
            let mut acc = ZERO;
            for (k, &d) in self.profile.positions().iter().enumerate() {
                acc += taps[[row, k]] * x[(row + m - d) % m];
            }
            out[row] = acc;
        }
        ctr.add_mul((m * self.profile.path_count()) as u64);
    }
}

/// Build the time-domain blocks from a realization. The phase of tap k at
/// OFDM symbol p (0-based), row m (0-based) uses the absolute sample index
/// `q = p (M + L_cp) + L_cp + m + 1`: CP samples are discarded but still
/// advance time.
pub fn build_time_domain(
    realization: &PathRealization,
    profile: &DelayProfile,
    grid: DdGrid,
) -> Result<TimeVaryingChannel> {
    if profile.max_position() >= grid.m() {
        return Err(Error::Profile(format!(
            "profile D_P = {} incompatible with M = {}",
            profile.max_position(),
            grid.m()
        )));
    }
    if realization.gains.len() != profile.path_count() {
        return Err(Error::Profile(format!(
            "realization has {} paths, profile has {}",
            realization.gains.len(),
            profile.path_count()
        )));
    }
    let (m, n) = (grid.m(), grid.n());
    let p_count = profile.path_count();
    let ts = grid.sample_period();
    let cp = profile.cp_len();
    let tau = 2.0 * std::f64::consts::PI;
    let mut taps = Vec::with_capacity(n);
    for p in 0..n {
        let mut block = Array2::from_elem((m, p_count), ZERO);
        for row in 0..m {
            let q = (p * (m + cp) + cp + row + 1) as f64;
            for k in 0..p_count {
                let phase = tau * realization.dopplers_hz[k] * q * ts;
                block[[row, k]] = realization.gains[k] * Complex64::from_polar(1.0, phase);
            }
        }
        taps.push(block);
    }
    Ok(TimeVaryingChannel { grid, profile: clone_profile_for(grid, profile)?, taps })
}

fn clone_profile_for(grid: DdGrid, profile: &DelayProfile) -> Result<DelayProfile> {
    if profile.max_position() >= grid.m() {
        return Err(Error::Profile("profile incompatible with grid".into()));
    }
    Ok(profile.clone())
}

/// The DD-domain effective channel in compact block-circulant form.
#[derive(Debug, Clone)]
pub struct EffectiveChannel {
    generator: MatrixSequence,
}

impl EffectiveChannel {
    pub fn from_generator(generator: MatrixSequence) -> Self {
        Self { generator }
    }

    pub fn grid(&self) -> DdGrid {
        self.generator.grid()
    }

    /// Generator blocks `A_1 .. A_N` (the first block row of the operator).
    pub fn generator(&self) -> &MatrixSequence {
        &self.generator
    }

    /// Dense materialization for oracles and small tests.
    pub fn assemble(&self) -> Result<Array2<Complex64>> {
        let nm = self.grid().nm();
        if nm > DENSE_SIZE_LIMIT {
            return Err(Error::SizeGuard { size: nm, limit: DENSE_SIZE_LIMIT });
        }
        Ok(crate::transforms::assemble_block_circulant(&self.generator))
    }
}

/// Effective channel in compact form: the generator blocks are
/// `A_n = (1/N) sum_p e^{+j2pi p n / N} H_p`, i.e. the time-domain blocks
/// are exactly the diagonalization spectrum of the effective channel.
/// Costs O(M^2 N log N); never materializes NM x NM.
pub fn effective_channel(ch: &TimeVaryingChannel, ctr: &mut Counters) -> EffectiveChannel {
    let generator = sequence_from_spectrum(&ch.sequence(), ctr);
    EffectiveChannel { generator }
}

/// Direct dense evaluation of the effective channel,
/// `(F_N (x) I_M) diag(H_1..H_N) (F_N^H (x) I_M)` with unitary F_N.
/// Testing oracle; guarded above [`DENSE_SIZE_LIMIT`].
pub fn effective_channel_dense(ch: &TimeVaryingChannel, ctr: &mut Counters) -> Result<Array2<Complex64>> {
    let grid = ch.grid();
    let nm = grid.nm();
    if nm > DENSE_SIZE_LIMIT {
        return Err(Error::SizeGuard { size: nm, limit: DENSE_SIZE_LIMIT });
    }
    let (m, n) = (grid.m(), grid.n());
    let mut hbig = Array2::from_elem((nm, nm), ZERO);
    for p in 0..n {
        let block = ch.dense_block(p);
        for r in 0..m {
            for c in 0..m {
                hbig[[p * m + r, p * m + c]] = block[[r, c]];
            }
        }
    }
    let f = cmatrix::unitary_dft(n);
    let fk = cmatrix::kron_with_identity(&f, m);
    let fkh = cmatrix::adjoint(&fk);
    let left = cmatrix::mat_mul(&fk, &hbig, ctr);
    Ok(cmatrix::mat_mul(&left, &fkh, ctr))
}

/// The doubly-circulant channel a receiver would assume under ideal
/// waveforms, derived from the true first column of the effective channel.
#[derive(Debug, Clone)]
pub struct MismatchChannel {
    grid: DdGrid,
    h_dd: Array2<Complex64>,
    dense: Array2<Complex64>,
}

impl MismatchChannel {
    pub fn grid(&self) -> DdGrid {
        self.grid
    }

    /// M x N matrix whose column n is the n-th length-M segment of the first
    /// column of the true effective channel.
    pub fn h_dd(&self) -> &Array2<Complex64> {
        &self.h_dd
    }

    /// Dense NM x NM doubly-circulant operator.
    pub fn dense(&self) -> &Array2<Complex64> {
        &self.dense
    }
}

/// Build the mismatched ideal-waveform operator: reshape the first column of
/// the effective channel into H_DD, then spread it as the 2-D circular
/// convolution `Y[k,l] = sum H_DD[k',l'] X[<k-k'>_M, <l-l'>_N]`.
pub fn mismatch_channel(eff: &EffectiveChannel) -> Result<MismatchChannel> {
    let grid = eff.grid();
    let (m, n) = (grid.m(), grid.n());
    let nm = grid.nm();
    if nm > DENSE_SIZE_LIMIT {
        return Err(Error::SizeGuard { size: nm, limit: DENSE_SIZE_LIMIT });
    }
    // First column of the assembled operator: block row i holds generator
    // block (N - i) mod N, whose first column is the i-th segment.
    let mut h_dd = Array2::from_elem((m, n), ZERO);
    for seg in 0..n {
        let block = eff.generator().block((n - seg) % n);
        for r in 0..m {
            h_dd[[r, seg]] = block[[r, 0]];
        }
    }
    let mut dense = Array2::from_elem((nm, nm), ZERO);
    for l in 0..n {
        for lam in 0..n {
            let dn = (l + n - lam) % n;
            for k in 0..m {
                for kap in 0..m {
                    dense[[l * m + k, lam * m + kap]] = h_dd[[(k + m - kap) % m, dn]];
                }
            }
        }
    }
    Ok(MismatchChannel { grid, h_dd, dense })
}

/// Write a channel realization as a plain-text record: one header line with
/// `M N delta_f P d_1..d_P`, then one `p m k re im` line per nonzero
/// (1-based indices, 17 significant digits).
pub fn write_channel<W: Write>(ch: &TimeVaryingChannel, out: &mut W) -> Result<()> {
    let grid = ch.grid();
    write!(out, "{} {} {:.16e} {}", grid.m(), grid.n(), grid.delta_f(), ch.profile().path_count())?;
    for d in ch.profile().positions() {
        write!(out, " {d}")?;
    }
    writeln!(out)?;
    for p in 0..grid.n() {
        for m in 0..grid.m() {
            for k in 0..ch.profile().path_count() {
                let v = ch.taps[p][[m, k]];
                writeln!(out, "{} {} {} {:.16e} {:.16e}", p + 1, m + 1, k + 1, v.re, v.im)?;
            }
        }
    }
    Ok(())
}

/// Read a channel record produced by [`write_channel`]. Power metadata is
/// not part of the record; the reconstructed profile carries flat powers and
/// the default CP length.
pub fn read_channel<R: BufRead>(input: &mut R) -> Result<TimeVaryingChannel> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::ChannelParse { line: 1, msg: "missing header".into() })??;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() < 4 {
        return Err(Error::ChannelParse { line: 1, msg: "header needs M N delta_f P d...".into() });
    }
    let parse_usize = |s: &str, line: usize| {
        s.parse::<usize>().map_err(|e| Error::ChannelParse { line, msg: format!("{e}: {s}") })
    };
    let m = parse_usize(fields[0], 1)?;
    let n = parse_usize(fields[1], 1)?;
    let delta_f: f64 = fields[2]
        .parse()
        .map_err(|e| Error::ChannelParse { line: 1, msg: format!("{e}: {}", fields[2]) })?;
    let p_count = parse_usize(fields[3], 1)?;
    if fields.len() != 4 + p_count {
        return Err(Error::ChannelParse {
            line: 1,
            msg: format!("expected {p_count} delay positions, got {}", fields.len() - 4),
        });
    }
    let mut positions = Vec::with_capacity(p_count);
    for f in &fields[4..] {
        positions.push(parse_usize(f, 1)?);
    }
    let grid = DdGrid::new(m, n, delta_f).map_err(|e| Error::ChannelParse { line: 1, msg: e.to_string() })?;
    let profile = DelayProfile::from_positions(&positions, &vec![0.0; p_count], grid)
        .map_err(|e| Error::ChannelParse { line: 1, msg: e.to_string() })?;
    let mut taps = vec![Array2::from_elem((m, p_count), ZERO); n];
    let mut lineno = 1usize;
    for line in lines {
        lineno += 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 5 {
            return Err(Error::ChannelParse { line: lineno, msg: format!("expected 5 fields, got {}", f.len()) });
        }
        let p = parse_usize(f[0], lineno)?;
        let row = parse_usize(f[1], lineno)?;
        let k = parse_usize(f[2], lineno)?;
        if p == 0 || p > n || row == 0 || row > m || k == 0 || k > p_count {
            return Err(Error::ChannelParse { line: lineno, msg: format!("index out of range: {p} {row} {k}") });
        }
        let re: f64 = f[3].parse().map_err(|e| Error::ChannelParse { line: lineno, msg: format!("{e}") })?;
        let im: f64 = f[4].parse().map_err(|e| Error::ChannelParse { line: lineno, msg: format!("{e}") })?;
        taps[p - 1][[row - 1, k - 1]] = Complex64::new(re, im);
    }
    Ok(TimeVaryingChannel { grid, profile, taps })
}
