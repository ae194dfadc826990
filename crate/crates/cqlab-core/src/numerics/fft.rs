//! Cached FFT plans and line transforms built on rustfft.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

thread_local! {
    static FORWARD: RefCell<HashMap<usize, Arc<dyn Fft<f64>>>> = RefCell::new(HashMap::new());
    static INVERSE: RefCell<HashMap<usize, Arc<dyn Fft<f64>>>> = RefCell::new(HashMap::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let cache = if inverse { &INVERSE } else { &FORWARD };
    cache.with(|c| {
        c.borrow_mut()
            .entry(n)
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                if inverse {
                    planner.plan_fft_inverse(n)
                } else {
                    planner.plan_fft_forward(n)
                }
            })
            .clone()
    })
}

/// In-place forward DFT of one line.
pub fn fft_forward(buf: &mut [Complex64]) {
    plan(buf.len(), false).process(buf);
}

/// In-place inverse DFT of one line, normalized by 1/n.
pub fn fft_inverse(buf: &mut [Complex64]) {
    let n = buf.len();
    plan(n, true).process(buf);
    let scale = 1.0 / n as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

/// Angular wavenumbers in DFT layout for a periodic axis of length `span`.
///
/// Index k maps to mode m = k for k <= n/2 and m = k - n beyond, so the
/// returned values are 2 pi m / span.
pub fn wavenumbers(n: usize, span: f64) -> Vec<f64> {
    let base = 2.0 * std::f64::consts::PI / span;
    (0..n)
        .map(|k| {
            let m = if k <= n / 2 { k as isize } else { k as isize - n as isize };
            base * m as f64
        })
        .collect()
}

/// Applies d/dx^order in Fourier space to one line sampled over `span`.
///
/// The Nyquist mode is zeroed for odd orders; its derivative has no
/// consistent sign on a real sample set.
pub fn spectral_derivative_line(buf: &mut [Complex64], span: f64, order: usize) {
    let n = buf.len();
    fft_forward(buf);
    let ks = wavenumbers(n, span);
    match order {
        1 => {
            for (k, v) in ks.iter().zip(buf.iter_mut()) {
                *v *= Complex64::new(0.0, *k);
            }
            if n % 2 == 0 {
                buf[n / 2] = Complex64::new(0.0, 0.0);
            }
        }
        2 => {
            for (k, v) in ks.iter().zip(buf.iter_mut()) {
                *v *= -k * k;
            }
        }
        _ => unreachable!("orders are validated by the caller"),
    }
    fft_inverse(buf);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_identity() {
        let n = 64;
        let mut buf: Vec<Complex64> = (0..n)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let orig = buf.clone();
        fft_forward(&mut buf);
        fft_inverse(&mut buf);
        for (a, b) in buf.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn wavenumber_layout_matches_dft_convention() {
        let ks = wavenumbers(8, 2.0 * std::f64::consts::PI);
        assert_eq!(ks[0], 0.0);
        assert_eq!(ks[1], 1.0);
        assert_eq!(ks[4], 4.0);
        assert_eq!(ks[5], -3.0);
        assert_eq!(ks[7], -1.0);
    }
}
