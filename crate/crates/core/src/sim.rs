//! End-to-end link simulation: QAM mapping, the factored transmit chain,
//! Monte-Carlo BER sweeps and the complexity report.
//!
//! Frames are independent work units keyed by (seed, SNR index, frame
//! index); every frame derives its own RNG stream, so results do not depend
//! on scheduling and all equalizer variants inside one frame see identical
//! channel, data and noise draws (paired comparison).

use crate::channel::{
    build_time_domain, draw_realization_with, effective_channel, effective_channel_dense,
    mismatch_channel, DelayProfile, TimeVaryingChannel,
};
use crate::cmatrix::ZERO;
use crate::counters::Counters;
use crate::equalizer::{direct_mmse, direct_zf, MmseEqualizer, ZfEqualizer};
use crate::error::{Error, Result};
use crate::fft;
use crate::linalg::DelayPattern;
use crate::transforms::{DdFrame, DdGrid};
use crate::DENSE_SIZE_LIMIT;
use ndarray::Array1;
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::fmt;
use std::time::Instant;

/// Square QAM with per-axis Gray labeling and unit average symbol energy.
///
/// Bits map MSB-first: the first half of each symbol's bits selects the
/// in-phase level, the second half the quadrature level. The all-zero label
/// maps to the most positive level on both axes, so 4-QAM sends 00 to
/// `(+1+j)/sqrt(2)`.
#[derive(Debug, Clone)]
pub struct QamConstellation {
    order: usize,
    axis_bits: usize,
    scale: f64,
}

impl QamConstellation {
    pub fn new(order: usize) -> Result<Self> {
        let axis_bits = match order {
            4 => 1,
            16 => 2,
            64 => 3,
            _ => {
                return Err(Error::Config(format!(
                    "unsupported QAM order {order} (use 4, 16 or 64)"
                )))
            }
        };
        let levels = 1usize << axis_bits;
        let lf = levels as f64;
        // mean of the squared odd levels on one axis is (L^2 - 1) / 3
        let scale = 1.0 / (2.0 * (lf * lf - 1.0) / 3.0).sqrt();
        Ok(Self { order, axis_bits, scale })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        2 * self.axis_bits
    }

    fn gray_to_binary(mut g: usize) -> usize {
        let mut shift = 1;
        while (g >> shift) != 0 {
            g ^= g >> shift;
            shift <<= 1;
        }
        g
    }

    fn level(&self, gray_bits: usize) -> f64 {
        let levels = 1usize << self.axis_bits;
        let b = Self::gray_to_binary(gray_bits);
        ((levels - 1) as f64 - 2.0 * b as f64) * self.scale
    }

    fn axis_index(&self, value: f64) -> usize {
        let levels = 1usize << self.axis_bits;
        let u = value / self.scale;
        let b = (((levels - 1) as f64 - u) / 2.0).round();
        let b = b.clamp(0.0, (levels - 1) as f64) as usize;
        b ^ (b >> 1)
    }

    /// Map a bit string (0/1 bytes, length divisible by bits-per-symbol)
    /// to symbols.
    pub fn map_bits(&self, bits: &[u8]) -> Result<Vec<Complex64>> {
        let bps = self.bits_per_symbol();
        if bits.len() % bps != 0 {
            return Err(Error::Dimension(format!(
                "bit count {} is not a multiple of {bps}",
                bits.len()
            )));
        }
        let mut out = Vec::with_capacity(bits.len() / bps);
        for chunk in bits.chunks(bps) {
            let mut i_idx = 0usize;
            let mut q_idx = 0usize;
            for k in 0..self.axis_bits {
                i_idx = (i_idx << 1) | chunk[k] as usize;
                q_idx = (q_idx << 1) | chunk[self.axis_bits + k] as usize;
            }
            out.push(Complex64::new(self.level(i_idx), self.level(q_idx)));
        }
        Ok(out)
    }

    /// Minimum-distance hard decisions back to bits.
    pub fn demap(&self, symbols: &[Complex64]) -> Vec<u8> {
        let mut bits = Vec::with_capacity(symbols.len() * self.bits_per_symbol());
        for s in symbols {
            let i_idx = self.axis_index(s.re);
            let q_idx = self.axis_index(s.im);
            for k in (0..self.axis_bits).rev() {
                bits.push(((i_idx >> k) & 1) as u8);
            }
            for k in (0..self.axis_bits).rev() {
                bits.push(((q_idx >> k) & 1) as u8);
            }
        }
        bits
    }
}

/// Which multipath profile a simulation uses.
#[derive(Debug, Clone, PartialEq)]
pub enum ProfileSpec {
    /// ITU-R Vehicular B quantized onto the grid.
    VehicularB,
    /// Vehicular B with the delay axis compressed so D_P = `max_pos`.
    VehicularBScaled { max_pos: usize },
    /// Explicit sample positions and per-path powers.
    Custom { positions: Vec<usize>, powers_db: Vec<f64> },
}

impl ProfileSpec {
    pub fn build(&self, grid: DdGrid) -> Result<DelayProfile> {
        match self {
            ProfileSpec::VehicularB => DelayProfile::vehicular_b(grid),
            ProfileSpec::VehicularBScaled { max_pos } => {
                DelayProfile::vehicular_b_scaled(grid, *max_pos)
            }
            ProfileSpec::Custom { positions, powers_db } => {
                DelayProfile::from_positions(positions, powers_db, grid)
            }
        }
    }
}

/// Equalizer variants selectable in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EqualizerKind {
    ZfLow,
    ZfDirect,
    MmseLow,
    MmseDirect,
    IdealMismatchZf,
    IdealMismatchMmse,
}

impl EqualizerKind {
    pub const ALL: [EqualizerKind; 6] = [
        EqualizerKind::ZfLow,
        EqualizerKind::ZfDirect,
        EqualizerKind::MmseLow,
        EqualizerKind::MmseDirect,
        EqualizerKind::IdealMismatchZf,
        EqualizerKind::IdealMismatchMmse,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            EqualizerKind::ZfLow => "zf_low",
            EqualizerKind::ZfDirect => "zf_direct",
            EqualizerKind::MmseLow => "mmse_low",
            EqualizerKind::MmseDirect => "mmse_direct",
            EqualizerKind::IdealMismatchZf => "ideal_mismatch_zf",
            EqualizerKind::IdealMismatchMmse => "ideal_mismatch_mmse",
        }
    }

    /// Does this variant materialize a dense NM x NM operator?
    pub fn needs_dense(&self) -> bool {
        !matches!(self, EqualizerKind::ZfLow | EqualizerKind::MmseLow)
    }
}

impl fmt::Display for EqualizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EqualizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EqualizerKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown equalizer '{s}'")))
    }
}

/// Full experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub m: usize,
    pub n: usize,
    pub delta_f: f64,
    pub profile: ProfileSpec,
    pub f_max_hz: f64,
    /// Cyclic prefix length; defaults to D_P + 1 when absent.
    pub cp_len: Option<usize>,
    pub snr_db: Vec<f64>,
    pub frames: usize,
    pub seed: u64,
    pub equalizers: Vec<EqualizerKind>,
    pub qam_order: usize,
}

impl Default for SimConfig {
    /// The full-scale profile: 64 subcarriers at 15 kHz, 32 OTFS symbols,
    /// Vehicular B (D_P = 20, CP 21), 4-QAM, 1 kHz maximum Doppler,
    /// 20000 frames per SNR point.
    fn default() -> Self {
        Self {
            m: 64,
            n: 32,
            delta_f: 15e3,
            profile: ProfileSpec::VehicularB,
            f_max_hz: 1000.0,
            cp_len: None,
            snr_db: vec![5.0, 7.0, 9.0, 11.0, 13.0, 15.0],
            frames: 20000,
            seed: 1,
            equalizers: vec![EqualizerKind::ZfLow, EqualizerKind::MmseLow],
            qam_order: 4,
        }
    }
}

impl SimConfig {
    /// Build the grid and quantized profile this config describes.
    pub fn resolve(&self) -> Result<(DdGrid, DelayProfile)> {
        let grid = DdGrid::new(self.m, self.n, self.delta_f)?;
        let mut profile = self.profile.build(grid)?;
        if let Some(cp) = self.cp_len {
            profile = profile.with_cp_len(cp)?;
        }
        Ok((grid, profile))
    }

    pub fn validate(&self) -> Result<()> {
        let (grid, _) = self.resolve()?;
        if self.snr_db.is_empty() {
            return Err(Error::Config("snr_db list must be nonempty".into()));
        }
        if self.frames == 0 {
            return Err(Error::Config("frames must be at least 1".into()));
        }
        if self.equalizers.is_empty() {
            return Err(Error::Config("select at least one equalizer".into()));
        }
        if self.f_max_hz.is_nan() || self.f_max_hz < 0.0 {
            return Err(Error::Config("f_max_hz must be nonnegative".into()));
        }
        QamConstellation::new(self.qam_order)?;
        if self.equalizers.iter().any(|e| e.needs_dense()) && grid.nm() > DENSE_SIZE_LIMIT {
            return Err(Error::SizeGuard { size: grid.nm(), limit: DENSE_SIZE_LIMIT });
        }
        Ok(())
    }
}

/// Accumulated per-(equalizer, SNR) results.
#[derive(Debug, Clone, PartialEq)]
pub struct BerRecord {
    pub equalizer: EqualizerKind,
    pub snr_db: f64,
    pub bits: u64,
    pub errors: u64,
    /// Frames that contributed bits.
    pub frames: u64,
    /// Frames skipped after a numerical breakdown (singular channel).
    pub skipped: u64,
    pub wall_ms: f64,
    pub mult_count: u64,
}

impl BerRecord {
    pub fn ber(&self) -> f64 {
        if self.bits == 0 {
            0.0
        } else {
            self.errors as f64 / self.bits as f64
        }
    }
}

/// Send one DD frame through the time-varying channel and add complex AWGN
/// of variance `sigma2` per entry.
///
/// The product uses the factored form (length-N transforms around one sparse
/// block product per OFDM symbol), costing O(NM log N + NMP); no NM x NM
/// operator is formed.
pub fn transmit_frame(
    x_dd: &DdFrame,
    ch: &TimeVaryingChannel,
    sigma2: f64,
    rng: &mut impl Rng,
    ctr: &mut Counters,
) -> Result<Array1<Complex64>> {
    let grid = ch.grid();
    if x_dd.grid() != grid {
        return Err(Error::Dimension("frame grid does not match channel grid".into()));
    }
    let (m, n) = (grid.m(), grid.n());
    let root_n = (n as f64).sqrt();

    // segments of (F_N^H (x) I_M) x
    let mut segs = vec![vec![ZERO; m]; n];
    let mut lane = vec![ZERO; n];
    for r in 0..m {
        for p in 0..n {
            lane[p] = x_dd.data()[[r, p]];
        }
        fft::inverse(&mut lane);
        ctr.add_fft(n);
        for t in 0..n {
            segs[t][r] = lane[t] / root_n;
        }
        ctr.add_mul(n as u64);
    }
    // sparse per-symbol channel product
    let mut prod = vec![vec![ZERO; m]; n];
    for t in 0..n {
        ch.apply_block(t, &segs[t], &mut prod[t], ctr);
    }
    // forward transform back and add noise
    let mut y = Array1::from_elem(n * m, ZERO);
    let noise_scale = (sigma2 / 2.0).sqrt();
    for r in 0..m {
        for t in 0..n {
            lane[t] = prod[t][r];
        }
        fft::forward(&mut lane);
        ctr.add_fft(n);
        for p in 0..n {
            y[p * m + r] = lane[p] / root_n;
        }
        ctr.add_mul(n as u64);
    }
    for v in y.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *v += Complex64::new(re * noise_scale, im * noise_scale);
    }
    Ok(y)
}

struct FrameEqOutcome {
    bits: u64,
    errors: u64,
    wall_ms: f64,
    cmul: u64,
}

/// Run one frame; `Ok(None)` means the frame hit a numerical breakdown and
/// is skipped for every equalizer (the comparison stays paired).
#[allow(clippy::too_many_arguments)]
fn run_frame(
    cfg: &SimConfig,
    grid: DdGrid,
    profile: &DelayProfile,
    pattern: &DelayPattern,
    constellation: &QamConstellation,
    snr_index: usize,
    frame_index: usize,
    sigma2: f64,
) -> Result<Option<Vec<FrameEqOutcome>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(((snr_index as u64) << 32) | frame_index as u64);

    let realization = draw_realization_with(profile, cfg.f_max_hz, &mut rng);
    let ch = build_time_domain(&realization, profile, grid)?;

    let bps = constellation.bits_per_symbol();
    let nbits = grid.nm() * bps;
    let bits: Vec<u8> = (0..nbits).map(|_| rng.gen_range(0..2u8)).collect();
    let symbols = constellation.map_bits(&bits)?;
    let x = crate::transforms::devectorize(&Array1::from_vec(symbols), grid)?;

    let mut shared = Counters::new();
    let y = transmit_frame(&x, &ch, sigma2, &mut rng, &mut shared)?;

    let mut outcomes = Vec::with_capacity(cfg.equalizers.len());
    for kind in &cfg.equalizers {
        let mut ctr = Counters::new();
        let start = Instant::now();
        let equalized = equalize_one(*kind, &ch, pattern, sigma2, &y, &mut ctr);
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        let xh = match equalized {
            Ok(v) => v,
            Err(e) if e.is_numerical_breakdown() => return Ok(None),
            Err(e) => return Err(e),
        };
        let decided = constellation.demap(xh.as_slice().expect("contiguous"));
        let errors = decided.iter().zip(&bits).filter(|(a, b)| a != b).count() as u64;
        outcomes.push(FrameEqOutcome { bits: nbits as u64, errors, wall_ms, cmul: ctr.cmul });
    }
    Ok(Some(outcomes))
}

fn equalize_one(
    kind: EqualizerKind,
    ch: &TimeVaryingChannel,
    pattern: &DelayPattern,
    sigma2: f64,
    y: &Array1<Complex64>,
    ctr: &mut Counters,
) -> Result<Array1<Complex64>> {
    match kind {
        EqualizerKind::ZfLow => {
            let eff = effective_channel(ch, ctr);
            let eq = ZfEqualizer::build(&eff, Some(pattern), ctr)?;
            eq.apply(y, ctr)
        }
        EqualizerKind::MmseLow => {
            let eff = effective_channel(ch, ctr);
            let eq = MmseEqualizer::build(&eff, sigma2, Some(pattern), ctr)?;
            eq.apply(y, ctr)
        }
        EqualizerKind::ZfDirect => {
            let dense = effective_channel_dense(ch, ctr)?;
            direct_zf(&dense, y, ctr)
        }
        EqualizerKind::MmseDirect => {
            let dense = effective_channel_dense(ch, ctr)?;
            direct_mmse(&dense, sigma2, y, ctr)
        }
        EqualizerKind::IdealMismatchZf => {
            let eff = effective_channel(ch, ctr);
            let mis = mismatch_channel(&eff)?;
            direct_zf(mis.dense(), y, ctr)
        }
        EqualizerKind::IdealMismatchMmse => {
            let eff = effective_channel(ch, ctr);
            let mis = mismatch_channel(&eff)?;
            direct_mmse(mis.dense(), sigma2, y, ctr)
        }
    }
}

impl Error {
    /// True for per-frame numerical breakdowns that a sweep skips and
    /// counts rather than aborting on.
    pub fn is_numerical_breakdown(&self) -> bool {
        match self {
            Error::SingularPivot { .. } | Error::NumericallySingular { .. } => true,
            Error::SingularBlock { source, .. } => source.is_numerical_breakdown(),
            _ => false,
        }
    }
}

/// Monte-Carlo BER sweep over the configured SNR points and equalizers.
///
/// Deterministic for a given config (frames derive independent RNG streams,
/// so the parallelism degree cannot change results). Returned records are
/// grouped by equalizer, then SNR, in configuration order.
pub fn run_ber_sweep(cfg: &SimConfig) -> Result<Vec<BerRecord>> {
    cfg.validate()?;
    let (grid, profile) = cfg.resolve()?;
    let pattern = profile.pattern(grid.m())?;
    let constellation = QamConstellation::new(cfg.qam_order)?;

    let mut per_snr: Vec<Vec<BerRecord>> = Vec::with_capacity(cfg.snr_db.len());
    for (si, &snr) in cfg.snr_db.iter().enumerate() {
        let sigma2 = 10f64.powf(-snr / 10.0);
        let frames: Vec<Result<Option<Vec<FrameEqOutcome>>>> = (0..cfg.frames)
            .into_par_iter()
            .map(|f| run_frame(cfg, grid, &profile, &pattern, &constellation, si, f, sigma2))
            .collect();
        let mut records: Vec<BerRecord> = cfg
            .equalizers
            .iter()
            .map(|&equalizer| BerRecord {
                equalizer,
                snr_db: snr,
                bits: 0,
                errors: 0,
                frames: 0,
                skipped: 0,
                wall_ms: 0.0,
                mult_count: 0,
            })
            .collect();
        for frame in frames {
            match frame? {
                None => {
                    for r in records.iter_mut() {
                        r.skipped += 1;
                    }
                }
                Some(outcomes) => {
                    for (r, o) in records.iter_mut().zip(outcomes) {
                        r.bits += o.bits;
                        r.errors += o.errors;
                        r.frames += 1;
                        r.wall_ms += o.wall_ms;
                        r.mult_count += o.cmul;
                    }
                }
            }
        }
        per_snr.push(records);
    }
    // regroup: equalizer-major, SNR-minor
    let mut out = Vec::with_capacity(cfg.equalizers.len() * cfg.snr_db.len());
    for ei in 0..cfg.equalizers.len() {
        for snr_records in &per_snr {
            out.push(snr_records[ei].clone());
        }
    }
    Ok(out)
}

/// One row of the complexity report.
#[derive(Debug, Clone)]
pub struct ComplexityRow {
    pub scheme: &'static str,
    pub m: usize,
    pub n: usize,
    pub p: usize,
    /// Measured complex multiplies for one equalizer build; `None` when the
    /// dense baseline was skipped by the size guard.
    pub mult_count: Option<u64>,
    pub wall_ms: f64,
    /// The matching analytic operation-count formula evaluated at (M, N, P).
    pub analytic: f64,
}

/// Analytic headline ratios `(NM)^3 / (M^2 N log2 N)` and
/// `(NM)^3 / (M^2 N^2 P)`.
pub fn headline_ratios(m: usize, n: usize, p: usize) -> (f64, f64) {
    let (mf, nf, pf) = (m as f64, n as f64, p as f64);
    let cube = (nf * mf).powi(3);
    let zf = mf * mf * nf * nf.log2();
    let mmse = mf * mf * nf * nf * pf;
    (cube / zf, cube / mmse)
}

/// Measure build costs for each scheme across grid sizes. Multiply counts
/// come from one instrumented run; wall times are the median of `reps`
/// repetitions. Dense baselines are measured only up to `dense_nm_limit`
/// (and never above the hard size guard); rows beyond it carry no count.
pub fn complexity_report(
    dims: &[(usize, usize)],
    seed: u64,
    reps: usize,
    dense_nm_limit: usize,
) -> Result<Vec<ComplexityRow>> {
    let mut rows = Vec::new();
    for &(m, n) in dims {
        let grid = DdGrid::new(m, n, 15e3)?;
        let profile = DelayProfile::vehicular_b_scaled(grid, 20.min(m - 1))?;
        let pattern = profile.pattern(m)?;
        let p = profile.path_count();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let realization = draw_realization_with(&profile, 1000.0, &mut rng);
        let ch = build_time_domain(&realization, &profile, grid)?;
        let (mf, nf, pf) = (m as f64, n as f64, p as f64);

        let dense_ok = grid.nm() <= dense_nm_limit.min(DENSE_SIZE_LIMIT);
        let reps = reps.max(1);

        rows.push(measure(
            "zf_low",
            m,
            n,
            p,
            mf * mf * nf * nf.log2(),
            reps,
            || {
                let mut ctr = Counters::new();
                let eff = effective_channel(&ch, &mut ctr);
                ZfEqualizer::build(&eff, Some(&pattern), &mut ctr)?;
                Ok(ctr)
            },
        )?);
        rows.push(if dense_ok {
            measure("zf_direct", m, n, p, (nf * mf).powi(3), reps, || {
                let mut ctr = Counters::new();
                let dense = effective_channel_dense(&ch, &mut ctr)?;
                crate::linalg::dense_inverse(&dense, &mut ctr)?;
                Ok(ctr)
            })?
        } else {
            ComplexityRow {
                scheme: "zf_direct",
                m,
                n,
                p,
                mult_count: None,
                wall_ms: 0.0,
                analytic: (nf * mf).powi(3),
            }
        });
        rows.push(measure(
            "mmse_low",
            m,
            n,
            p,
            mf * mf * nf * nf * pf,
            reps,
            || {
                let mut ctr = Counters::new();
                let eff = effective_channel(&ch, &mut ctr);
                MmseEqualizer::build(&eff, 0.1, Some(&pattern), &mut ctr)?;
                Ok(ctr)
            },
        )?);
        rows.push(if dense_ok {
            measure("mmse_direct", m, n, p, (nf * mf).powi(3), reps, || {
                let mut ctr = Counters::new();
                let dense = effective_channel_dense(&ch, &mut ctr)?;
                crate::equalizer::direct_mmse_matrix(&dense, 0.1, &mut ctr)?;
                Ok(ctr)
            })?
        } else {
            ComplexityRow {
                scheme: "mmse_direct",
                m,
                n,
                p,
                mult_count: None,
                wall_ms: 0.0,
                analytic: (nf * mf).powi(3),
            }
        });
    }
    Ok(rows)
}

fn measure(
    scheme: &'static str,
    m: usize,
    n: usize,
    p: usize,
    analytic: f64,
    reps: usize,
    mut body: impl FnMut() -> Result<Counters>,
) -> Result<ComplexityRow> {
    let mut walls = Vec::with_capacity(reps);
    let start = Instant::now();
    let ctr = body()?;
    walls.push(start.elapsed().as_secs_f64() * 1e3);
    for _ in 1..reps {
        let start = Instant::now();
        body()?;
        walls.push(start.elapsed().as_secs_f64() * 1e3);
    }
    walls.sort_by(f64::total_cmp);
    let wall_ms = walls[walls.len() / 2];
    Ok(ComplexityRow { scheme, m, n, p, mult_count: Some(ctr.cmul), wall_ms, analytic })
}

/// One-sided paired comparison of two error processes observed on the same
/// bits: `worse_only` counts bits only scheme A got wrong, `better_only`
/// bits only scheme B got wrong. Returns true when A's excess is
/// significant at the given one-sided z quantile (e.g. 2.326 for 99%).
/// Falls back to the exact binomial tail for small discordant counts.
pub fn paired_excess_significant(worse_only: u64, better_only: u64, z: f64) -> bool {
    let n = worse_only + better_only;
    if n == 0 {
        return false;
    }
    if n < 50 {
        // exact one-sided binomial tail with p = 1/2
        let mut tail = 0.0f64;
        for k in worse_only..=n {
            tail += binomial_pmf_half(n, k);
        }
        // translate the z quantile to its one-sided alpha
        let alpha = 0.5 * erfc_approx(z / std::f64::consts::SQRT_2);
        return tail < alpha;
    }
    let nf = n as f64;
    let stat = (worse_only as f64 - nf / 2.0 - 0.5) / (nf / 4.0).sqrt();
    stat > z
}

fn binomial_pmf_half(n: u64, k: u64) -> f64 {
    // exp(ln C(n,k) - n ln 2), stable for the small n this is used with
    let mut ln_c = 0.0f64;
    for i in 0..k {
        ln_c += ((n - i) as f64).ln() - ((i + 1) as f64).ln();
    }
    (ln_c - n as f64 * std::f64::consts::LN_2).exp()
}

/// Abramowitz-Stegun 7.1.26 complementary error function (|err| < 1.5e-7).
fn erfc_approx(x: f64) -> f64 {
    let sign_neg = x < 0.0;
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592 + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let erfc = poly * (-x * x).exp();
    if sign_neg {
        2.0 - erfc
    } else {
        erfc
    }
}

/// Three-sigma binomial margin on an error count, used by the BER-ordering
/// checks.
pub fn binomial_margin(errors: u64) -> f64 {
    3.0 * (errors.max(25) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw_realization, PathRealization};
    use crate::cmatrix::mat_vec;
    use crate::transforms::vectorize;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn identity_channel(grid: DdGrid) -> TimeVaryingChannel {
        let profile = DelayProfile::from_positions(&[0], &[0.0], grid).unwrap();
        let real = PathRealization::new(vec![c(1.0, 0.0)], vec![0.0]).unwrap();
        build_time_domain(&real, &profile, grid).unwrap()
    }

    #[test]
    fn qam4_gray_table() {
        let q = QamConstellation::new(4).unwrap();
        let s = 1.0 / 2f64.sqrt();
        let syms = q.map_bits(&[0, 0, 0, 1, 1, 1, 1, 0]).unwrap();
        assert!((syms[0] - c(s, s)).norm() < 1e-15);
        assert!((syms[1] - c(s, -s)).norm() < 1e-15);
        assert!((syms[2] - c(-s, -s)).norm() < 1e-15);
        assert!((syms[3] - c(-s, s)).norm() < 1e-15);
    }

    #[test]
    fn qam_constellations_have_unit_energy() {
        for order in [4usize, 16, 64] {
            let q = QamConstellation::new(order).unwrap();
            let bps = q.bits_per_symbol();
            let mut energy = 0.0;
            for idx in 0..order {
                let bits: Vec<u8> = (0..bps).rev().map(|k| ((idx >> k) & 1) as u8).collect();
                let s = q.map_bits(&bits).unwrap()[0];
                energy += s.norm_sqr();
            }
            assert!((energy / order as f64 - 1.0).abs() < 1e-12, "order {order}");
        }
    }

    #[test]
    fn qam_round_trip_and_gray_neighbors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for order in [4usize, 16, 64] {
            let q = QamConstellation::new(order).unwrap();
            let bits: Vec<u8> = (0..q.bits_per_symbol() * 2500).map(|_| rng.gen_range(0..2)).collect();
            let syms = q.map_bits(&bits).unwrap();
            assert_eq!(q.demap(&syms), bits);
        }
    }

    #[test]
    fn qam_decisions_survive_sub_half_distance_noise() {
        let q = QamConstellation::new(16).unwrap();
        let bits = [1u8, 0, 0, 1];
        let s = q.map_bits(&bits).unwrap()[0];
        // half the minimum distance is exactly `scale`
        let noisy = s + c(0.9 * q.scale, -0.9 * q.scale);
        assert_eq!(q.demap(&[noisy]), bits);
    }

    #[test]
    fn qam_rejects_ragged_bitstream() {
        let q = QamConstellation::new(4).unwrap();
        assert!(q.map_bits(&[1, 0, 1]).is_err());
        assert!(QamConstellation::new(8).is_err());
    }

    #[test]
    fn transmit_identity_channel_noiseless_is_vectorize() {
        let grid = DdGrid::new(4, 4, 15e3).unwrap();
        let ch = identity_channel(grid);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = ndarray::Array2::from_shape_fn((4, 4), |_| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let x = DdFrame::new(grid, data).unwrap();
        let mut ctr = Counters::new();
        let y = transmit_frame(&x, &ch, 0.0, &mut rng, &mut ctr).unwrap();
        let want = vectorize(&x);
        for i in 0..16 {
            assert!((y[i] - want[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn transmit_matches_dense_effective_product() {
        let grid = DdGrid::new(4, 4, 15e3).unwrap();
        let profile = DelayProfile::from_positions(&[0, 1], &[0.0, -2.0], grid).unwrap();
        let real = draw_realization(&profile, 800.0, 4);
        let ch = build_time_domain(&real, &profile, grid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let data = ndarray::Array2::from_shape_fn((4, 4), |_| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let x = DdFrame::new(grid, data).unwrap();
        let mut ctr = Counters::new();
        let y = transmit_frame(&x, &ch, 0.0, &mut rng, &mut ctr).unwrap();
        let dense = effective_channel_dense(&ch, &mut ctr).unwrap();
        let want = mat_vec(&dense, &vectorize(&x), &mut ctr);
        for i in 0..16 {
            assert!((y[i] - want[i]).norm() < 1e-10);
        }
    }

    #[test]
    fn transmit_through_physical_ofdm_chain_agrees() {
        // ISFFT -> per-symbol IFFT -> channel taps -> FFT -> SFFT must equal
        // the factored effective-channel product.
        let grid = DdGrid::new(4, 3, 15e3).unwrap();
        let profile = DelayProfile::from_positions(&[0, 2], &[0.0, -1.0], grid).unwrap();
        let real = draw_realization(&profile, 700.0, 9);
        let ch = build_time_domain(&real, &profile, grid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let data = ndarray::Array2::from_shape_fn((4, 3), |_| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let x = DdFrame::new(grid, data).unwrap();

        let tf = crate::transforms::isfft(&x);
        let f = crate::cmatrix::unitary_dft(4);
        let fh = crate::cmatrix::adjoint(&f);
        let mut ctr = Counters::new();
        let mut r_tf = ndarray::Array2::from_elem((4, 3), ZERO);
        for p in 0..3 {
            let col = tf.data().column(p).to_owned();
            let time = mat_vec(&fh, &col, &mut ctr);
            let mut out = vec![ZERO; 4];
            ch.apply_block(p, time.as_slice().unwrap(), &mut out, &mut ctr);
            let freq = mat_vec(&f, &Array1::from_vec(out), &mut ctr);
            for r in 0..4 {
                r_tf[[r, p]] = freq[r];
            }
        }
        let y_frame = crate::transforms::sfft(&crate::transforms::TfFrame::new(grid, r_tf).unwrap());
        let want = vectorize(&y_frame);

        let mut ctr2 = Counters::new();
        let y = transmit_frame(&x, &ch, 0.0, &mut rng, &mut ctr2).unwrap();
        for i in 0..12 {
            assert!((y[i] - want[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn noise_variance_calibrated() {
        let grid = DdGrid::new(8, 4, 15e3).unwrap();
        let ch = identity_channel(grid);
        let x = DdFrame::zeros(grid);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut ctr = Counters::new();
        let mut acc = 0.0;
        let frames = 10_000;
        for _ in 0..frames {
            let y = transmit_frame(&x, &ch, 1.0, &mut rng, &mut ctr).unwrap();
            acc += y.iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
        let var = acc / (frames * 32) as f64;
        assert!((var - 1.0).abs() < 0.03, "empirical variance {var}");
    }

    #[test]
    fn sweep_is_deterministic_and_paired() {
        let cfg = SimConfig {
            m: 8,
            n: 4,
            delta_f: 15e3,
            profile: ProfileSpec::Custom { positions: vec![0, 1, 3], powers_db: vec![0.0, -2.0, -5.0] },
            f_max_hz: 400.0,
            cp_len: None,
            snr_db: vec![8.0, 14.0],
            frames: 40,
            seed: 42,
            equalizers: vec![EqualizerKind::ZfLow, EqualizerKind::ZfDirect],
            qam_order: 4,
        };
        let a = run_ber_sweep(&cfg).unwrap();
        let b = run_ber_sweep(&cfg).unwrap();
        assert_eq!(a.len(), 4);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!((x.equalizer, x.bits, x.errors, x.frames, x.skipped), (y.equalizer, y.bits, y.errors, y.frames, y.skipped));
        }
        // paired equivalence: identical error counts per SNR point
        for i in 0..2 {
            assert_eq!(a[i].errors, a[i + 2].errors, "snr point {i}");
            assert_eq!(a[i].equalizer, EqualizerKind::ZfLow);
            assert_eq!(a[i + 2].equalizer, EqualizerKind::ZfDirect);
        }
    }

    #[test]
    fn noiseless_invertible_channel_has_zero_ber() {
        let cfg = SimConfig {
            m: 8,
            n: 4,
            delta_f: 15e3,
            profile: ProfileSpec::Custom { positions: vec![0, 2], powers_db: vec![0.0, -3.0] },
            f_max_hz: 300.0,
            cp_len: None,
            snr_db: vec![100.0],
            frames: 100,
            seed: 3,
            equalizers: vec![EqualizerKind::ZfLow],
            qam_order: 4,
        };
        let records = run_ber_sweep(&cfg).unwrap();
        assert_eq!(records[0].errors, 0);
        assert_eq!(records[0].skipped, 0);
        assert_eq!(records[0].bits, 100 * 32 * 2);
    }

    #[test]
    fn awgn_identity_channel_matches_q_function() {
        // fixed unit channel + ZF is pure AWGN detection; 4-QAM BER = Q(1/sigma)
        let grid = DdGrid::new(8, 4, 15e3).unwrap();
        let ch = identity_channel(grid);
        let q = QamConstellation::new(4).unwrap();
        let snr_db = 7.0;
        let sigma2 = 10f64.powf(-snr_db / 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut ctr = Counters::new();
        let eff = effective_channel(&ch, &mut ctr);
        let eq = ZfEqualizer::build(&eff, None, &mut ctr).unwrap();
        let mut errors = 0u64;
        let mut bits_total = 0u64;
        while bits_total < 100_000 {
            let bits: Vec<u8> = (0..64).map(|_| rng.gen_range(0..2)).collect();
            let x = crate::transforms::devectorize(&Array1::from_vec(q.map_bits(&bits).unwrap()), grid).unwrap();
            let y = transmit_frame(&x, &ch, sigma2, &mut rng, &mut ctr).unwrap();
            let xh = eq.apply(&y, &mut ctr).unwrap();
            let decided = q.demap(xh.as_slice().unwrap());
            errors += decided.iter().zip(&bits).filter(|(a, b)| a != b).count() as u64;
            bits_total += 64;
        }
        let ber = errors as f64 / bits_total as f64;
        let q_arg = (1.0 / sigma2).sqrt();
        let want = 0.5 * erfc_approx(q_arg / std::f64::consts::SQRT_2);
        assert!(
            (ber - want).abs() <= 0.15 * want,
            "ber {ber:.4e} vs closed form {want:.4e}"
        );
    }

    #[test]
    fn headline_ratio_values() {
        let (zf, mmse) = headline_ratios(32, 32, 6);
        assert!((zf - 6553.6).abs() < 0.1);
        assert!((mmse - 170.666).abs() < 0.01);
    }

    #[test]
    fn degenerate_single_symbol_grid_counts_close() {
        // N = 1: no block structure to exploit; structured and direct ZF
        // builds must agree in cost within a small constant factor.
        let dims = [(8usize, 1usize)];
        let rows = complexity_report(&dims, 5, 1, 1024).unwrap();
        let zf_low = rows.iter().find(|r| r.scheme == "zf_low").unwrap();
        let zf_direct = rows.iter().find(|r| r.scheme == "zf_direct").unwrap();
        let (a, b) = (zf_low.mult_count.unwrap() as f64, zf_direct.mult_count.unwrap() as f64);
        let ratio = (a / b).max(b / a);
        assert!(ratio <= 4.0, "count ratio {ratio}");
    }

    #[test]
    fn mcnemar_helper_behaves() {
        assert!(paired_excess_significant(100, 10, 2.326));
        assert!(!paired_excess_significant(10, 100, 2.326));
        assert!(!paired_excess_significant(0, 0, 2.326));
        assert!(!paired_excess_significant(5, 4, 2.326));
        assert!(paired_excess_significant(30, 0, 2.326));
    }

    #[test]
    fn config_validation_errors() {
        let mut cfg = SimConfig::default();
        cfg.snr_db.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = SimConfig::default();
        cfg.frames = 0;
        assert!(cfg.validate().is_err());
        // direct equalizer above the dense guard is refused up front
        let mut cfg = SimConfig::default();
        cfg.m = 128;
        cfg.n = 64;
        cfg.profile = ProfileSpec::Custom { positions: vec![0, 1], powers_db: vec![0.0, -3.0] };
        cfg.equalizers = vec![EqualizerKind::ZfDirect];
        assert!(matches!(cfg.validate(), Err(Error::SizeGuard { .. })));
        // vehicular-B on a tiny grid collides
        let cfg = SimConfig { m: 8, n: 4, ..SimConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
