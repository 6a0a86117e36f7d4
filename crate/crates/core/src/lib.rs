//! Numerics for OTFS (delay-Doppler) links with rectangular waveforms.
//!
//! The crate is organized around one structural fact: with rectangular
//! transmit/receive pulses and a CP longer than the maximum path delay, the
//! DD-domain effective channel is block-circulant, and its generator blocks
//! are related to the per-symbol time-domain channel matrices by a DFT
//! across the block index. Equalizers can therefore be built from N small
//! M x M inversions plus batched FFTs instead of one NM x NM inversion.
//!
//! * [`transforms`] - lattice types, ISFFT/SFFT, matrix-sequence DFTs and
//!   the block-circulant assembly/diagonalization helpers.
//! * [`channel`] - tap-delay-line channel generation, the effective-channel
//!   construction, its dense oracle and the ideal-waveform mismatch model.
//! * [`linalg`] - the delay-structured LU factorization/inversion,
//!   block-circulant inversion and the instrumented dense oracle.
//! * [`equalizer`] - ZF and MMSE in block-circulant and direct dense forms.
//! * [`sim`] - QAM, the transmit chain, Monte-Carlo BER sweeps and the
//!   complexity report.
//!
//! Dense NM x NM objects appear only in oracles and are size-guarded; the
//! production paths never materialize one.

pub mod channel;
pub mod cmatrix;
pub mod counters;
pub mod equalizer;
pub mod error;
mod fft;
pub mod linalg;
pub mod sim;
pub mod transforms;

pub use counters::Counters;
pub use error::{Error, Result};
pub use transforms::{DdFrame, DdGrid, MatrixSequence, TfFrame};

/// Dense materializations (assembled channels, dense inverses) refuse to
/// run above this NM by default.
pub const DENSE_SIZE_LIMIT: usize = 4096;
