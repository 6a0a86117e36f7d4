//! Acceptance suite. Each test implements one criterion at its stated
//! tolerance and prints one PASS line (failures panic with the measured
//! value). Tests serialize through a mutex so the allocation tracking in
//! the full-scale smoke test observes only its own traffic.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use otfs_core::channel::{
    build_time_domain, draw_realization, effective_channel, effective_channel_dense,
    mismatch_channel, DelayProfile,
};
use otfs_core::cmatrix::{frob, max_abs_diff};
use otfs_core::equalizer::{direct_mmse, direct_zf, MmseEqualizer, ZfEqualizer};
use otfs_core::linalg::{
    dense_inverse, inverse_residual, structured_inverse, structured_lu, DelayPattern,
    StructuredMatrix,
};
use otfs_core::sim::{
    binomial_margin, complexity_report, headline_ratios, paired_excess_significant, run_ber_sweep,
    transmit_frame, EqualizerKind, ProfileSpec, QamConstellation, SimConfig,
};
use otfs_core::transforms::{
    assemble_block_circulant, block_circulant_deviation, devectorize,
};
use otfs_core::{Counters, DdGrid};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::Instant;

// ---------------------------------------------------------------------------
// allocation tracking (largest single request) and test serialization
// ---------------------------------------------------------------------------

struct TrackingAllocator;

static PEAK_SINGLE_ALLOC: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for TrackingAllocator {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        PEAK_SINGLE_ALLOC.fetch_max(layout.size(), Ordering::Relaxed);
        unsafe { System.alloc(layout) }
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) }
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        PEAK_SINGLE_ALLOC.fetch_max(new_size, Ordering::Relaxed);
        unsafe { System.realloc(ptr, layout, new_size) }
    }
}

#[global_allocator]
static GLOBAL: TrackingAllocator = TrackingAllocator;

fn serial() -> MutexGuard<'static, ()> {
    static LOCK: OnceLock<Mutex<()>> = OnceLock::new();
    LOCK.get_or_init(|| Mutex::new(()))
        .lock()
        .unwrap_or_else(|poisoned| poisoned.into_inner())
}

// ---------------------------------------------------------------------------
// shared fixtures
// ---------------------------------------------------------------------------

/// Desk grid for the equivalence criteria: 16 x 8 at 15 kHz.
fn desk_grid() -> DdGrid {
    DdGrid::new(16, 8, 15e3).unwrap()
}

/// Vehicular B compressed to D_P = 15 so it fits M = 16.
fn desk_profile(grid: DdGrid) -> DelayProfile {
    DelayProfile::vehicular_b_scaled(grid, 15).unwrap()
}

/// Maximum Doppler that keeps the full-scale normalized spread
/// f_max * N * T = 1 kHz * 32 / 15 kHz on a smaller grid.
fn scaled_f_max(grid: DdGrid) -> f64 {
    let reference = 1000.0 * 32.0 / 15e3;
    reference / (grid.n() as f64 * grid.symbol_time())
}

fn random_qam_frame(
    grid: DdGrid,
    q: &QamConstellation,
    rng: &mut impl Rng,
) -> (Vec<u8>, otfs_core::DdFrame) {
    let bits: Vec<u8> = (0..grid.nm() * q.bits_per_symbol()).map(|_| rng.gen_range(0..2)).collect();
    let frame = devectorize(&Array1::from_vec(q.map_bits(&bits).unwrap()), grid).unwrap();
    (bits, frame)
}

fn rel_error(a: &Array1<Complex64>, b: &Array1<Complex64>) -> f64 {
    let scale = b.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale
}

// ---------------------------------------------------------------------------
// criteria
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_block_circulant_structure() {
    let _guard = serial();
    let start = Instant::now();
    let grid = DdGrid::new(8, 8, 15e3).unwrap();
    let profile = DelayProfile::from_positions(&[0, 2, 5], &[0.0, -3.0, -6.0], grid).unwrap();
    let mut worst_shift = 0.0f64;
    let mut worst_match = 0.0f64;
    for seed in 0..50u64 {
        let real = draw_realization(&profile, 1500.0, seed);
        let ch = build_time_domain(&real, &profile, grid).unwrap();
        let mut ctr = Counters::new();
        let dense = effective_channel_dense(&ch, &mut ctr).unwrap();
        worst_shift = worst_shift.max(block_circulant_deviation(&dense, grid));
        let assembled = assemble_block_circulant(effective_channel(&ch, &mut ctr).generator());
        worst_match = worst_match.max(max_abs_diff(&dense, &assembled));
    }
    assert!(worst_shift < 1e-10, "block-shift deviation {worst_shift:.3e}");
    assert!(worst_match < 1e-10, "construction mismatch {worst_match:.3e}");
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 30.0, "runtime {secs:.1}s over budget");
    println!(
        "PASS criterion 1 (block-circulant structure): shift dev {worst_shift:.2e}, \
         construction dev {worst_match:.2e}, {secs:.1}s"
    );
}

#[test]
fn criterion_2_zf_equivalence() {
    let _guard = serial();
    let start = Instant::now();
    let grid = desk_grid();
    let profile = desk_profile(grid);
    let pattern = profile.pattern(grid.m()).unwrap();
    let f_max = scaled_f_max(grid);
    let q = QamConstellation::new(4).unwrap();

    // algebraic agreement over 20 seeds
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let real = draw_realization(&profile, f_max, 500 + seed);
        let ch = build_time_domain(&real, &profile, grid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
        let (_bits, frame) = random_qam_frame(grid, &q, &mut rng);
        let mut ctr = Counters::new();
        let y = transmit_frame(&frame, &ch, 0.1, &mut rng, &mut ctr).unwrap();
        let eff = effective_channel(&ch, &mut ctr);
        let low = ZfEqualizer::build(&eff, Some(&pattern), &mut ctr)
            .unwrap()
            .apply(&y, &mut ctr)
            .unwrap();
        let dense = effective_channel_dense(&ch, &mut ctr).unwrap();
        let direct = direct_zf(&dense, &y, &mut ctr).unwrap();
        worst = worst.max(rel_error(&low, &direct));
    }
    assert!(worst < 1e-8, "ZF low/direct relative error {worst:.3e}");

    // paired BER counts across the sweep
    let cfg = SimConfig {
        m: 16,
        n: 8,
        delta_f: 15e3,
        profile: ProfileSpec::VehicularBScaled { max_pos: 15 },
        f_max_hz: f_max,
        cp_len: None,
        snr_db: vec![5.0, 10.0, 15.0],
        frames: 200,
        seed: 71,
        equalizers: vec![EqualizerKind::ZfLow, EqualizerKind::ZfDirect],
        qam_order: 4,
    };
    let records = run_ber_sweep(&cfg).unwrap();
    for i in 0..3 {
        assert_eq!(
            records[i].errors,
            records[i + 3].errors,
            "paired ZF error counts diverge at {} dB",
            records[i].snr_db
        );
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 120.0, "runtime {secs:.1}s over budget");
    println!(
        "PASS criterion 2 (ZF equivalence): max rel err {worst:.2e}, \
         paired errors {:?}, {secs:.1}s",
        records[..3].iter().map(|r| r.errors).collect::<Vec<_>>()
    );
}

#[test]
fn criterion_3_mmse_equivalence() {
    let _guard = serial();
    let start = Instant::now();
    let grid = desk_grid();
    let profile = desk_profile(grid);
    let pattern = profile.pattern(grid.m()).unwrap();
    let f_max = scaled_f_max(grid);
    let q = QamConstellation::new(4).unwrap();

    let mut worst = 0.0f64;
    for &sigma2 in &[0.1, 0.01] {
        for seed in 0..20u64 {
            let real = draw_realization(&profile, f_max, 1500 + seed);
            let ch = build_time_domain(&real, &profile, grid).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(1900 + seed);
            let (_bits, frame) = random_qam_frame(grid, &q, &mut rng);
            let mut ctr = Counters::new();
            let y = transmit_frame(&frame, &ch, sigma2, &mut rng, &mut ctr).unwrap();
            let eff = effective_channel(&ch, &mut ctr);
            let low = MmseEqualizer::build(&eff, sigma2, Some(&pattern), &mut ctr)
                .unwrap()
                .apply(&y, &mut ctr)
                .unwrap();
            let dense = effective_channel_dense(&ch, &mut ctr).unwrap();
            let direct = direct_mmse(&dense, sigma2, &y, &mut ctr).unwrap();
            worst = worst.max(rel_error(&low, &direct));
        }
    }
    assert!(worst < 1e-8, "MMSE low/direct relative error {worst:.3e}");

    let cfg = SimConfig {
        m: 16,
        n: 8,
        delta_f: 15e3,
        profile: ProfileSpec::VehicularBScaled { max_pos: 15 },
        f_max_hz: f_max,
        cp_len: None,
        snr_db: vec![5.0, 10.0, 15.0],
        frames: 200,
        seed: 72,
        equalizers: vec![EqualizerKind::MmseLow, EqualizerKind::MmseDirect],
        qam_order: 4,
    };
    let records = run_ber_sweep(&cfg).unwrap();
    for i in 0..3 {
        assert_eq!(
            records[i].errors,
            records[i + 3].errors,
            "paired MMSE error counts diverge at {} dB",
            records[i].snr_db
        );
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 180.0, "runtime {secs:.1}s over budget");
    println!(
        "PASS criterion 3 (MMSE equivalence): max rel err {worst:.2e}, \
         paired errors {:?}, {secs:.1}s",
        records[..3].iter().map(|r| r.errors).collect::<Vec<_>>()
    );
}

#[test]
fn criterion_4_structured_lu() {
    let _guard = serial();
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(4040);
    let mut checked = 0usize;
    let mut worst_rec = 0.0f64;
    let mut worst_res = 0.0f64;
    let mut worst_oracle = 0.0f64;
    'outer: for &m in &[8usize, 16, 32] {
        for &p in &[2usize, 4, 6] {
            for _ in 0..12 {
                if checked == 100 {
                    break 'outer;
                }
                // random pattern with a zero offset
                let mut offsets = vec![0usize];
                while offsets.len() < p {
                    let cand = rng.gen_range(1..m);
                    if !offsets.contains(&cand) {
                        offsets.push(cand);
                    }
                }
                offsets.sort_unstable();
                let pattern = DelayPattern::new(offsets, m).unwrap();
                let mut data = Array2::from_elem((m, m), Complex64::new(0.0, 0.0));
                for row in 0..m {
                    for k in 0..pattern.path_count() {
                        let col = pattern.column(row, k);
                        let mut v =
                            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
                        if col == row {
                            v += Complex64::new(3.0, 0.0);
                        }
                        data[[row, col]] = v;
                    }
                }
                let s = StructuredMatrix::new(data, pattern.clone()).unwrap();
                let mut ctr = Counters::new();
                let ws = structured_lu(&s, &mut ctr).unwrap();

                let scale = s.data().iter().map(|z| z.norm()).fold(0.0, f64::max);
                let rec = max_abs_diff(&ws.reconstruct(&mut ctr), s.data()) / scale.max(1.0);
                worst_rec = worst_rec.max(rec);

                // fill confinement: exact zeros off the offsets in the band
                let band = pattern.band_start();
                for col in 0..band {
                    for row in col + 1..m {
                        if !pattern.offsets().contains(&(row - col)) {
                            assert_eq!(
                                ws.multipliers()[[row, col]],
                                Complex64::new(0.0, 0.0),
                                "fill at ({row}, {col}) for M={m}, P={p}"
                            );
                        }
                    }
                }

                let inv = structured_inverse(&s, &mut ctr).unwrap();
                worst_res = worst_res.max(inverse_residual(s.data(), &inv));
                let oracle = dense_inverse(s.data(), &mut ctr).unwrap();
                worst_oracle = worst_oracle.max(frob(&(&inv - &oracle)) / frob(&oracle));
                checked += 1;
            }
        }
    }
    assert_eq!(checked, 100);
    assert!(worst_rec < 1e-9, "reconstruction error {worst_rec:.3e}");
    assert!(worst_res < 1e-8, "inverse residual {worst_res:.3e}");
    assert!(worst_oracle < 1e-8, "oracle disagreement {worst_oracle:.3e}");
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 60.0, "runtime {secs:.1}s over budget");
    println!(
        "PASS criterion 4 (structured LU): 100 matrices, reconstruction {worst_rec:.2e}, \
         residual {worst_res:.2e}, oracle dev {worst_oracle:.2e}, {secs:.1}s"
    );
}

#[test]
fn criterion_5_complexity_headline() {
    let _guard = serial();
    let start = Instant::now();
    let (zf_ratio, mmse_ratio) = headline_ratios(32, 32, 6);
    assert!(
        (5000.0..=8000.0).contains(&zf_ratio),
        "analytic ZF ratio {zf_ratio:.1} outside [5000, 8000]"
    );
    assert!(
        (150.0..=250.0).contains(&mmse_ratio),
        "analytic MMSE ratio {mmse_ratio:.1} outside [150, 250]"
    );

    let rows = complexity_report(&[(32, 32)], 9, 1, 1024).unwrap();
    let low = rows
        .iter()
        .find(|r| r.scheme == "zf_low")
        .and_then(|r| r.mult_count)
        .unwrap();
    let direct = rows
        .iter()
        .find(|r| r.scheme == "zf_direct")
        .and_then(|r| r.mult_count)
        .unwrap();
    let measured = direct as f64 / low as f64;
    assert!(measured > 1000.0, "measured ZF count ratio {measured:.0} not above 1000");
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 120.0, "runtime {secs:.1}s over budget");
    println!(
        "PASS criterion 5 (complexity headline): analytic ZF {zf_ratio:.0}x, \
         MMSE {mmse_ratio:.0}x, measured ZF {measured:.0}x ({direct} vs {low}), {secs:.1}s"
    );
}

#[test]
fn criterion_6_mismatch_degradation() {
    let _guard = serial();
    let start = Instant::now();
    let grid = desk_grid();
    let profile = desk_profile(grid);
    let pattern = profile.pattern(grid.m()).unwrap();
    let f_max = scaled_f_max(grid);
    let sigma2 = 10f64.powf(-1.2); // 12 dB
    let q = QamConstellation::new(4).unwrap();

    let mut matched_errors = 0u64;
    let mut mismatch_errors = 0u64;
    let mut mismatch_only = 0u64;
    let mut matched_only = 0u64;
    let mut bits_total = 0u64;
    for frame_idx in 0..2000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(606);
        rng.set_stream(frame_idx);
        let real = otfs_core::channel::draw_realization_with(&profile, f_max, &mut rng);
        let ch = build_time_domain(&real, &profile, grid).unwrap();
        let (bits, frame) = random_qam_frame(grid, &q, &mut rng);
        let mut ctr = Counters::new();
        let y = transmit_frame(&frame, &ch, sigma2, &mut rng, &mut ctr).unwrap();

        let eff = effective_channel(&ch, &mut ctr);
        let matched = MmseEqualizer::build(&eff, sigma2, Some(&pattern), &mut ctr)
            .unwrap()
            .apply(&y, &mut ctr)
            .unwrap();
        let mis = mismatch_channel(&eff).unwrap();
        let assumed = direct_mmse(mis.dense(), sigma2, &y, &mut ctr).unwrap();

        let matched_bits = q.demap(matched.as_slice().unwrap());
        let assumed_bits = q.demap(assumed.as_slice().unwrap());
        for ((tx, a), b) in bits.iter().zip(&matched_bits).zip(&assumed_bits) {
            let matched_err = a != tx;
            let mismatch_err = b != tx;
            matched_errors += matched_err as u64;
            mismatch_errors += mismatch_err as u64;
            mismatch_only += (mismatch_err && !matched_err) as u64;
            matched_only += (matched_err && !mismatch_err) as u64;
        }
        bits_total += bits.len() as u64;
    }
    let ber_matched = matched_errors as f64 / bits_total as f64;
    let ber_mismatch = mismatch_errors as f64 / bits_total as f64;
    assert!(
        ber_mismatch > ber_matched,
        "mismatch BER {ber_mismatch:.4e} not above matched {ber_matched:.4e}"
    );
    // one-sided paired test at 99%
    assert!(
        paired_excess_significant(mismatch_only, matched_only, 2.326),
        "degradation not significant: discordant {mismatch_only} vs {matched_only}"
    );
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 180.0, "runtime {secs:.1}s over budget");
    println!(
        "PASS criterion 6 (mismatch degradation): BER {ber_mismatch:.3e} vs {ber_matched:.3e}, \
         discordant {mismatch_only}/{matched_only}, {secs:.1}s"
    );
}

#[test]
fn criterion_7_scaling_law() {
    let _guard = serial();
    let start = Instant::now();

    // growth in N at M = 16 (profile fixed by M, so D_P is constant)
    let dims: Vec<(usize, usize)> = [8usize, 16, 32, 64].iter().map(|&n| (16, n)).collect();
    let rows = complexity_report(&dims, 12, 1, 0).unwrap();
    let counts: Vec<u64> = rows
        .iter()
        .filter(|r| r.scheme == "zf_low")
        .map(|r| r.mult_count.unwrap())
        .collect();
    let ns = [8usize, 16, 32, 64];
    let exp_n = fit_exponent(&ns, &counts);
    assert!(
        (0.9..=1.3).contains(&exp_n),
        "N exponent {exp_n:.3} outside [0.9, 1.3]; counts {counts:?}"
    );
    let normalized: Vec<f64> = ns
        .iter()
        .zip(&counts)
        .map(|(&n, &c)| c as f64 / (n as f64 * (n as f64).log2()))
        .collect();
    let spread = normalized.iter().fold(0.0f64, |a, &b| a.max(b))
        / normalized.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    assert!(spread < 2.0, "counts / (N log2 N) spread {spread:.2} not within 2x");

    // growth in M at N = 8 with a fixed tap pattern
    let ms = [8usize, 16, 32, 64];
    let mut m_counts = Vec::new();
    for &m in &ms {
        let grid = DdGrid::new(m, 8, 15e3).unwrap();
        let profile =
            DelayProfile::from_positions(&[0, 1, 4, 6], &[0.0, -1.0, -3.0, -6.0], grid).unwrap();
        let pattern = profile.pattern(m).unwrap();
        let real = draw_realization(&profile, 1000.0, 13);
        let ch = build_time_domain(&real, &profile, grid).unwrap();
        let mut ctr = Counters::new();
        let eff = effective_channel(&ch, &mut ctr);
        ZfEqualizer::build(&eff, Some(&pattern), &mut ctr).unwrap();
        m_counts.push(ctr.cmul);
    }
    let exp_m = fit_exponent(&ms, &m_counts);
    assert!(
        (1.8..=2.2).contains(&exp_m),
        "M exponent {exp_m:.3} outside [1.8, 2.2]; counts {m_counts:?}"
    );
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 120.0, "runtime {secs:.1}s over budget");
    println!(
        "PASS criterion 7 (scaling law): N exponent {exp_n:.2} (spread {spread:.2}), \
         M exponent {exp_m:.2}, {secs:.1}s"
    );
}

fn fit_exponent(sizes: &[usize], counts: &[u64]) -> f64 {
    let xs: Vec<f64> = sizes.iter().map(|&s| (s as f64).ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|&c| (c as f64).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

#[test]
fn criterion_8_full_scale_smoke() {
    let _guard = serial();
    let start = Instant::now();
    PEAK_SINGLE_ALLOC.store(0, Ordering::Relaxed);

    let cfg = SimConfig {
        m: 64,
        n: 32,
        delta_f: 15e3,
        profile: ProfileSpec::VehicularB,
        f_max_hz: 1000.0,
        cp_len: Some(21),
        snr_db: vec![10.0],
        frames: 100,
        seed: 8,
        equalizers: vec![EqualizerKind::ZfLow, EqualizerKind::MmseLow],
        qam_order: 4,
    };
    let records = run_ber_sweep(&cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let peak = PEAK_SINGLE_ALLOC.load(Ordering::Relaxed);

    let zf = &records[0];
    let mmse = &records[1];
    assert_eq!(zf.equalizer, EqualizerKind::ZfLow);
    assert_eq!(mmse.equalizer, EqualizerKind::MmseLow);
    assert!(zf.ber().is_finite() && mmse.ber().is_finite());
    assert!(zf.bits > 0 && mmse.bits > 0);
    let margin = binomial_margin(zf.errors);
    assert!(
        (mmse.errors as f64) <= zf.errors as f64 + margin,
        "MMSE errors {} above ZF {} + margin {margin}",
        mmse.errors,
        zf.errors
    );

    // an NM x NM complex matrix would be a single 67 MB request; the
    // structured pipeline must stay far below that
    let nm_dense_bytes = 2048usize * 2048 * 16;
    assert!(
        peak < 16 << 20,
        "largest single allocation {peak} bytes (dense NM x NM would be {nm_dense_bytes})"
    );
    assert!(secs < 300.0, "runtime {secs:.1}s over budget");
    println!(
        "PASS criterion 8 (full-scale smoke): ZF BER {:.3e}, MMSE BER {:.3e}, \
         peak alloc {:.1} MiB, {secs:.1}s",
        zf.ber(),
        mmse.ber(),
        peak as f64 / (1 << 20) as f64
    );
}
