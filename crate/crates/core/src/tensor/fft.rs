//! Discrete Fourier transforms over f64, backed by `rustfft`.
//!
//! `rustfft` plans every length (mixed radix, Rader, Bluestein), so no
//! external padding is needed and the spectrum is exactly the length-n DFT.

use std::cell::RefCell;

pub use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn transform(buf: &mut [Complex<f64>], inverse: bool) {
    if buf.is_empty() {
        return;
    }
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        let plan = if inverse {
            p.plan_fft_inverse(buf.len())
        } else {
            p.plan_fft_forward(buf.len())
        };
        plan.process(buf);
    });
}

/// Forward DFT of a real sequence: X[k] = Σ x[t]·e^{-2πikt/n}.
pub fn fft(x: &[f64]) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    transform(&mut buf, false);
    buf
}

/// Inverse DFT, normalized by 1/n.
pub fn ifft(spectrum: &[Complex<f64>]) -> Vec<Complex<f64>> {
    let mut buf = spectrum.to_vec();
    transform(&mut buf, true);
    let n = buf.len() as f64;
    for v in &mut buf {
        *v /= n;
    }
    buf
}

/// Real part of the inverse DFT.
pub fn ifft_real(spectrum: &[Complex<f64>]) -> Vec<f64> {
    ifft(spectrum).into_iter().map(|c| c.re).collect()
}
