use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::dsp::StftPlan;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Log-magnitude spectral frontend.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frontend {
    pub sample_rate: u32,
    pub frame_length: usize,
    pub hop: usize,
    /// Floor inside the logarithm.
    pub eps_log: f64,
    /// Smoothing term inside the magnitude square root.
    pub eps_mag: f64,
}

impl Default for Frontend {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            frame_length: 256,
            hop: 128,
            eps_log: 1e-9,
            eps_mag: 1e-9,
        }
    }
}

impl Frontend {
    pub fn bins(&self) -> usize {
        self.frame_length / 2 + 1
    }

    pub fn frames(&self, len: usize) -> usize {
        crate::dsp::frame_count(len, self.frame_length, self.hop)
    }

    pub fn plan(&self) -> StftPlan {
        StftPlan::new(self.frame_length, self.hop)
    }

    /// Features of a clip, checking its rate against the frontend.
    pub fn extract(&self, clip: &AudioClip) -> Result<Matrix> {
        if clip.sample_rate != self.sample_rate {
            return Err(Error::RateMismatch {
                expected: self.sample_rate,
                got: clip.sample_rate,
            });
        }
        Ok(self.analyze(&clip.to_real().values)?.features)
    }

    /// Features plus everything needed to backpropagate to the samples.
    pub fn analyze(&self, signal: &[f64]) -> Result<FeatureTape> {
        if signal.len() < self.frame_length {
            return Err(Error::ClipTooShort {
                len: signal.len(),
                min: self.frame_length,
            });
        }
        let plan = self.plan();
        let spectra = plan.analyze(signal);
        let bins = self.bins();
        let mut features = Matrix::zeros(spectra.len(), bins);
        let mut magnitudes = Matrix::zeros(spectra.len(), bins);
        for (t, frame) in spectra.iter().enumerate() {
            for (k, c) in frame.iter().enumerate() {
                let mag = (c.norm_sqr() + self.eps_mag).sqrt();
                magnitudes.set(t, k, mag);
                features.set(t, k, (self.eps_log + mag).ln());
            }
        }
        Ok(FeatureTape {
            signal_len: signal.len(),
            spectra,
            magnitudes,
            features,
            plan,
        })
    }
}

pub fn extract_features(clip: &AudioClip, frontend: &Frontend) -> Result<Matrix> {
    frontend.extract(clip)
}

/// Cached forward pass of the frontend.
#[derive(Debug)]
pub struct FeatureTape {
    pub signal_len: usize,
    pub spectra: Vec<Vec<Complex64>>,
    pub magnitudes: Matrix,
    pub features: Matrix,
    plan: StftPlan,
}

impl FeatureTape {
    /// Chain rule from feature gradients back to every input sample.
    /// Samples that no frame covers receive exactly zero.
    pub fn backward(&self, frontend: &Frontend, grad_features: &Matrix) -> Vec<f64> {
        let mut grad = vec![0.0; self.signal_len];
        let n = self.plan.frame_length;
        let mut frame_grad = vec![0.0; n];
        let mut bins = vec![Complex64::new(0.0, 0.0); frontend.bins()];
        for (t, frame) in self.spectra.iter().enumerate() {
            for (k, c) in frame.iter().enumerate() {
                let mag = self.magnitudes.get(t, k);
                let d_mag = grad_features.get(t, k) / (frontend.eps_log + mag);
                // d|X|/dRe = Re/|X|, d|X|/dIm = Im/|X|
                bins[k] = Complex64::new(d_mag * c.re / mag, d_mag * c.im / mag);
            }
            self.plan.frame_adjoint(&bins, &mut frame_grad);
            let start = t * self.plan.hop;
            for i in 0..n {
                grad[start + i] += frame_grad[i];
            }
        }
        grad
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn silence_is_constant() {
        let fe = Frontend::default();
        let clip = AudioClip::new("s", vec![0; 1024], 16000).unwrap();
        let f = fe.extract(&clip).unwrap();
        assert_eq!(f.rows, 7);
        assert_eq!(f.cols, 129);
        let expected = (1e-9 + 1e-9f64.sqrt()).ln();
        assert!(f.data.iter().all(|v| (v - expected).abs() < 1e-6));
    }

    #[test]
    fn tone_peaks_at_expected_bin() {
        let fe = Frontend::default();
        let samples = (0..4000)
            .map(|n| (8000.0 * (2.0 * PI * 1000.0 * n as f64 / 16000.0).sin()).round() as i16)
            .collect();
        let f = fe.extract(&AudioClip::new("t", samples, 16000).unwrap()).unwrap();
        let expected = (1000.0f64 * 256.0 / 16000.0).round() as usize;
        for t in 0..f.rows {
            let row = f.row(t);
            let argmax = (0..row.len())
                .max_by(|&a, &b| row[a].total_cmp(&row[b]))
                .unwrap();
            assert_eq!(argmax, expected);
        }
    }

    #[test]
    fn parseval_energy() {
        let fe = Frontend::default();
        let signal: Vec<f64> = (0..256).map(|n| ((n * 37 % 101) as f64 / 101.0) - 0.5).collect();
        let tape = fe.analyze(&signal).unwrap();
        let plan = fe.plan();
        let windowed: f64 = signal
            .iter()
            .zip(&plan.window)
            .map(|(x, w)| (x * w).powi(2))
            .sum();
        // one-sided spectrum: interior bins stand for two conjugate bins
        let spec = &tape.spectra[0];
        let mut energy = spec[0].norm_sqr() + spec[128].norm_sqr();
        energy += 2.0 * spec[1..128].iter().map(|c| c.norm_sqr()).sum::<f64>();
        assert!((energy / 256.0 - windowed).abs() < 1e-9 * windowed.max(1.0));
    }

    #[test]
    fn rejects_short_and_wrong_rate() {
        let fe = Frontend::default();
        let short = AudioClip::new("s", vec![1; 100], 16000).unwrap();
        assert!(matches!(fe.extract(&short), Err(Error::ClipTooShort { .. })));
        let rate = AudioClip::new("r", vec![1; 1000], 8000).unwrap();
        assert!(matches!(fe.extract(&rate), Err(Error::RateMismatch { .. })));
    }
}
