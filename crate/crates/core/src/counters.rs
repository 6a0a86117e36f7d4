//! Complex-multiply accounting for the complexity benchmarks.
//!
//! Every structured kernel and every dense oracle in this crate takes a
//! `&mut Counters` and tallies the complex multiplies it performs, so that
//! measured costs can be compared against the analytic formulas
//! `(NM)^3`, `M^2 N log2 N` and `M^2 N^2 P`. Divisions are tallied as one
//! multiply. FFT calls are tallied with the standard radix-2 model
//! `(K/2) log2 K` per length-K transform (`K ceil(log2 K)` when K is not a
//! power of two); everything else is counted by the loops that actually run.

/// Operation tally. Cheap to copy and merge; not thread-shared (each worker
/// owns one and results are merged).
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct Counters {
    /// Complex multiplies (divisions count as one multiply).
    pub cmul: u64,
}

impl Counters {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add_mul(&mut self, n: u64) {
        self.cmul += n;
    }

    /// Tally one length-`len` FFT or inverse FFT.
    #[inline]
    pub fn add_fft(&mut self, len: usize) {
        self.cmul += fft_mul_count(len);
    }

    pub fn merge(&mut self, other: &Counters) {
        self.cmul += other.cmul;
    }
}

/// Complex-multiply model for one length-`len` transform.
pub fn fft_mul_count(len: usize) -> u64 {
    if len <= 1 {
        return 0;
    }
    let l = len as u64;
    if len.is_power_of_two() {
        (l / 2) * len.trailing_zeros() as u64
    } else {
        l * (usize::BITS - (len - 1).leading_zeros()) as u64
    }
}
