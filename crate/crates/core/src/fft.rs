//! Thin wrapper over rustfft: cached plans, in-place unnormalized transforms.
//!
//! Normalization is the caller's business; the canonical unitary scalings
//! live in [`crate::transforms`].

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

type PlanKey = (usize, bool);

fn plan(len: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    static PLANS: OnceLock<Mutex<HashMap<PlanKey, Arc<dyn Fft<f64>>>>> = OnceLock::new();
    let plans = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = plans.lock().expect("fft plan cache poisoned");
    map.entry((len, forward))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if forward {
                planner.plan_fft_forward(len)
            } else {
                planner.plan_fft_inverse(len)
            }
        })
        .clone()
}

fn process(buf: &mut [Complex64], forward: bool) {
    if buf.len() <= 1 {
        return;
    }
    let fft = plan(buf.len(), forward);
    thread_local! {
        static SCRATCH: std::cell::RefCell<Vec<Complex64>> = const { std::cell::RefCell::new(Vec::new()) };
    }
    SCRATCH.with(|s| {
        let mut scratch = s.borrow_mut();
        let need = fft.get_inplace_scratch_len();
        if scratch.len() < need {
            scratch.resize(need, Complex64::new(0.0, 0.0));
        }
        fft.process_with_scratch(buf, &mut scratch[..need]);
    });
}

/// In-place forward DFT, unnormalized: `X_t = sum_n x_n e^{-j 2 pi t n / K}`.
pub fn forward(buf: &mut [Complex64]) {
    process(buf, true);
}

/// In-place inverse DFT, unnormalized: `x_n = sum_t X_t e^{+j 2 pi t n / K}`.
pub fn inverse(buf: &mut [Complex64]) {
    process(buf, false);
}
