//! FFT plumbing shared by the propagation and DSP code.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Forward and inverse transforms of one size with their scratch space.
///
/// The inverse is normalized by `1/n`, so `inverse(forward(x)) == x`.
pub struct Spectral {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl Spectral {
    pub fn new(n: usize) -> Self {
        let (fwd, inv) = PLANNER.with(|p| {
            let mut p = p.borrow_mut();
            (p.plan_fft_forward(n), p.plan_fft_inverse(n))
        });
        let len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        Self { n, fwd, inv, scratch: vec![Complex64::default(); len] }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn forward(&mut self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.n);
        self.fwd.process_with_scratch(buf, &mut self.scratch);
    }

    pub fn inverse(&mut self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.n);
        self.inv.process_with_scratch(buf, &mut self.scratch);
        let scale = 1.0 / self.n as f64;
        buf.iter_mut().for_each(|c| *c *= scale);
    }

    /// Multiply the spectrum of `buf` by `transfer` (FFT bin order).
    pub fn filter(&mut self, buf: &mut [Complex64], transfer: &[Complex64]) {
        self.forward(buf);
        buf.iter_mut().zip(transfer).for_each(|(b, h)| *b *= h);
        self.inverse(buf);
    }
}

/// Frequency of FFT bin `k` for an `n`-point transform, Hz. Bins above
/// `n/2` map to negative frequencies; the Nyquist bin is negative.
pub fn bin_frequency(k: usize, n: usize, sample_rate_hz: f64) -> f64 {
    let df = sample_rate_hz / n as f64;
    let signed = if 2 * k >= n { k as f64 - n as f64 } else { k as f64 };
    signed * df
}

pub fn frequencies(n: usize, sample_rate_hz: f64) -> Vec<f64> {
    (0..n).map(|k| bin_frequency(k, n, sample_rate_hz)).collect()
}

pub fn angular_frequencies(n: usize, sample_rate_hz: f64) -> Vec<f64> {
    (0..n).map(|k| 2.0 * PI * bin_frequency(k, n, sample_rate_hz)).collect()
}

/// Express a frequency offset as a whole number of FFT bins, if it is one.
pub fn offset_in_bins(offset_hz: f64, n: usize, sample_rate_hz: f64) -> Option<i64> {
    let bins = offset_hz * n as f64 / sample_rate_hz;
    let rounded = bins.round();
    ((bins - rounded).abs() < 1e-6).then_some(rounded as i64)
}

/// Multiply by `exp(j·2π·bins·t/T)` over a periodic frame of `buf.len()` samples.
pub fn frequency_shift(buf: &mut [Complex64], bins: i64) {
    let n = buf.len() as i64;
    let k = bins.rem_euclid(n);
    if k == 0 {
        return;
    }
    for (i, c) in buf.iter_mut().enumerate() {
        let phase_index = ((i as i128 * k as i128) % n as i128) as f64;
        *c *= Complex64::from_polar(1.0, 2.0 * PI * phase_index / n as f64);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_undoes_forward() {
        let mut s = Spectral::new(60);
        let orig: Vec<Complex64> = (0..60).map(|i| Complex64::new(i as f64, -(i as f64).sqrt())).collect();
        let mut buf = orig.clone();
        s.forward(&mut buf);
        s.inverse(&mut buf);
        for (a, b) in buf.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn bin_frequencies_wrap() {
        let f = frequencies(4, 4.0);
        assert_eq!(f, vec![0.0, 1.0, -2.0, -1.0]);
        let f = frequencies(5, 5.0);
        assert_eq!(f, vec![0.0, 1.0, 2.0, -2.0, -1.0]);
    }

    #[test]
    fn shift_moves_spectrum_by_whole_bins() {
        let n = 32;
        let mut buf = vec![Complex64::new(1.0, 0.0); n];
        frequency_shift(&mut buf, 3);
        let mut s = Spectral::new(n);
        s.forward(&mut buf);
        for (k, c) in buf.iter().enumerate() {
            let expected = if k == 3 { n as f64 } else { 0.0 };
            assert!((c.norm() - expected).abs() < 1e-9, "bin {k}");
        }
        assert_eq!(offset_in_bins(60e9, 153_600, 1e12), Some(9216));
        assert_eq!(offset_in_bins(1.0, 3, 7.0), None);
    }
}
