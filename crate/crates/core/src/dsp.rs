//! Shared signal-processing primitives: STFT plans, windows and FIR filters.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Periodic Hann window; sums to one at 50% overlap.
pub fn hann_periodic(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// Symmetric Hann window with zero endpoints, used for FIR design.
pub fn hann_symmetric(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / (len - 1) as f64).cos())
        .collect()
}

/// Number of full frames that fit in `len` samples.
pub fn frame_count(len: usize, frame_length: usize, hop: usize) -> usize {
    if len < frame_length {
        0
    } else {
        (len - frame_length) / hop + 1
    }
}

/// Forward/inverse FFT pair plus analysis window for one frame length.
#[derive(Clone)]
pub struct StftPlan {
    pub frame_length: usize,
    pub hop: usize,
    pub window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for StftPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StftPlan")
            .field("frame_length", &self.frame_length)
            .field("hop", &self.hop)
            .finish()
    }
}

impl StftPlan {
    pub fn new(frame_length: usize, hop: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            frame_length,
            hop,
            window: hann_periodic(frame_length),
            forward: planner.plan_fft_forward(frame_length),
            inverse: planner.plan_fft_inverse(frame_length),
        }
    }

    pub fn bins(&self) -> usize {
        self.frame_length / 2 + 1
    }

    pub fn frames(&self, len: usize) -> usize {
        frame_count(len, self.frame_length, self.hop)
    }

    /// Non-negative-frequency spectrum of every windowed frame.
    pub fn analyze(&self, signal: &[f64]) -> Vec<Vec<Complex64>> {
        let n = self.frame_length;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        (0..self.frames(signal.len()))
            .map(|t| {
                let start = t * self.hop;
                for (i, b) in buf.iter_mut().enumerate() {
                    *b = Complex64::new(signal[start + i] * self.window[i], 0.0);
                }
                self.forward.process(&mut buf);
                buf[..self.bins()].to_vec()
            })
            .collect()
    }

    /// Adjoint of one frame of `analyze`: maps the gradient with respect to
    /// the non-negative bins (real part + i·imaginary part) back to the
    /// gradient with respect to the windowed frame's samples, then applies
    /// the window.
    pub fn frame_adjoint(&self, grad_bins: &[Complex64], out: &mut [f64]) {
        let n = self.frame_length;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        buf[..grad_bins.len()].copy_from_slice(grad_bins);
        self.inverse.process(&mut buf);
        for i in 0..n {
            out[i] = buf[i].re * self.window[i];
        }
    }

    /// Inverse of a full (Hermitian-extended) spectrum, scaled by `1/N`.
    pub fn synthesize_frame(&self, bins: &[Complex64]) -> Vec<f64> {
        let n = self.frame_length;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        buf[..bins.len()].copy_from_slice(bins);
        for k in 1..bins.len() {
            if n - k >= bins.len() {
                buf[n - k] = bins[k].conj();
            }
        }
        self.inverse.process(&mut buf);
        buf.iter().map(|c| c.re / n as f64).collect()
    }
}

/// Hann-windowed sinc low-pass with unit DC gain.
pub fn windowed_sinc_lowpass(taps: usize, cutoff_hz: f64, sample_rate: f64) -> Vec<f64> {
    assert!(taps % 2 == 1, "odd tap count keeps the filter centered");
    let fc = cutoff_hz / sample_rate;
    let center = (taps / 2) as f64;
    let window = hann_symmetric(taps);
    let mut h: Vec<f64> = (0..taps)
        .map(|n| {
            let m = n as f64 - center;
            let sinc = if m == 0.0 {
                2.0 * fc
            } else {
                (2.0 * PI * fc * m).sin() / (PI * m)
            };
            sinc * window[n]
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= sum);
    h
}

/// Zero-padded convolution trimmed to the input length, aligned on the
/// kernel center. Self-adjoint for symmetric kernels.
pub fn convolve_same(signal: &[f64], kernel: &[f64]) -> Vec<f64> {
    let c = kernel.len() / 2;
    let n = signal.len();
    (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for (j, &h) in kernel.iter().enumerate() {
                let idx = i as isize + c as isize - j as isize;
                if idx >= 0 && (idx as usize) < n {
                    acc += h * signal[idx as usize];
                }
            }
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hann_overlap_sums_to_one() {
        let w = hann_periodic(256);
        for n in 0..128 {
            assert!((w[n] + w[n + 128] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn frame_counts() {
        assert_eq!(frame_count(255, 256, 128), 0);
        assert_eq!(frame_count(256, 256, 128), 1);
        assert_eq!(frame_count(383, 256, 128), 1);
        assert_eq!(frame_count(384, 256, 128), 2);
    }

    #[test]
    fn lowpass_has_unit_dc_gain_and_symmetry() {
        let h = windowed_sinc_lowpass(127, 3600.0, 16000.0);
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..127 {
            assert!((h[i] - h[126 - i]).abs() < 1e-15);
        }
    }

    #[test]
    fn convolution_is_self_adjoint_for_symmetric_kernels() {
        let h = [0.25, 0.5, 0.25];
        let x = [1.0, -2.0, 3.0, 0.5, 4.0];
        let y = [0.3, 0.1, -1.0, 2.0, 0.7];
        let lhs: f64 = convolve_same(&x, &h).iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(convolve_same(&y, &h)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn synthesis_inverts_analysis() {
        let plan = StftPlan::new(16, 8);
        let x: Vec<f64> = (0..16).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let spec = plan.analyze(&x);
        let y = plan.synthesize_frame(&spec[0]);
        for i in 0..16 {
            assert!((y[i] - x[i] * plan.window[i]).abs() < 1e-12);
        }
    }
}
