//! Shared fixtures for the criterion benchmarks.

use otfs_core::channel::{build_time_domain, draw_realization, DelayProfile, TimeVaryingChannel};
use otfs_core::linalg::DelayPattern;
use otfs_core::DdGrid;

/// A Vehicular-B-style channel realization on an M x N grid, with the tap
/// pattern the structured solver needs.
pub fn fixture_channel(m: usize, n: usize, seed: u64) -> (TimeVaryingChannel, DelayPattern) {
    let grid = DdGrid::new(m, n, 15e3).expect("grid");
    let profile = DelayProfile::vehicular_b_scaled(grid, 20.min(m - 1)).expect("profile");
    let pattern = profile.pattern(m).expect("pattern");
    let realization = draw_realization(&profile, 1000.0, seed);
    let channel = build_time_domain(&realization, &profile, grid).expect("channel");
    (channel, pattern)
}
