//! Input-transformation defenses: quantization, local smoothing,
//! down-sampling with recovery, and frame-level autoencoder reformation.
//!
//! Each defense has an integer-domain form (what a deployed system applies)
//! and, where an adaptive attack needs one, a real-valued form with its
//! adjoint so gradients can be routed through it.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::audio::{real_to_pcm, AudioClip};
use crate::dsp::{convolve_same, windowed_sinc_lowpass};
use crate::error::{Error, Result};
use crate::toy_asr::Frontend;

/// Tap count of the anti-aliasing and recovery filter.
pub const RECOVERY_TAPS: usize = 127;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SmoothKind {
    Average,
    Median,
}

impl std::str::FromStr for SmoothKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "average" | "avg" | "mean" => Ok(Self::Average),
            "median" => Ok(Self::Median),
            other => Err(Error::InvalidParameter(format!("unknown smoothing kind {other:?}"))),
        }
    }
}

/// A defense `T(·)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TransformSpec {
    Identity,
    Quantize { q: u32 },
    Smooth { smooth_kind: SmoothKind, k: usize },
    Downsample { factor: usize },
    Autoencoder { rank: usize },
}

impl TransformSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Quantize { q } if q == 0 => Err(Error::InvalidParameter("q must be >= 1".into())),
            Self::Smooth { k, .. } if k == 0 => Err(Error::InvalidParameter("K must be >= 1".into())),
            Self::Downsample { factor } if factor < 2 => {
                Err(Error::InvalidParameter("factor must be >= 2".into()))
            }
            Self::Autoencoder { rank } if rank == 0 => {
                Err(Error::InvalidParameter("rank must be >= 1".into()))
            }
            _ => Ok(()),
        }
    }

    /// Short label such as `quan-256` or `median-4`.
    pub fn label(&self) -> String {
        match *self {
            Self::Identity => "identity".into(),
            Self::Quantize { q } => format!("quan-{q}"),
            Self::Smooth { smooth_kind: SmoothKind::Average, k } => format!("average-{k}"),
            Self::Smooth { smooth_kind: SmoothKind::Median, k } => format!("median-{k}"),
            Self::Downsample { factor } => format!("downsample-{factor}"),
            Self::Autoencoder { rank } => format!("autoencoder-{rank}"),
        }
    }

    /// Applies the defense. The autoencoder variant needs a fitted model.
    pub fn apply(&self, clip: &AudioClip, ae: Option<&FrameAutoencoder>) -> Result<AudioClip> {
        self.validate()?;
        match *self {
            Self::Identity => Ok(clip.clone()),
            Self::Quantize { q } => Ok(quantize(clip, q)),
            Self::Smooth { smooth_kind, k } => Ok(smooth(clip, smooth_kind, k)),
            Self::Downsample { factor } => downsample_defense(clip, factor),
            Self::Autoencoder { rank } => {
                let ae = ae.ok_or_else(|| {
                    Error::InvalidParameter("autoencoder transform needs a fitted model".into())
                })?;
                if ae.rank() != rank {
                    return Err(Error::InvalidParameter(format!(
                        "fitted autoencoder has rank {}, transform asks for {rank}",
                        ae.rank()
                    )));
                }
                autoencoder_reform(clip, ae)
            }
        }
    }
}

fn quantize_sample(s: i16, q: u32) -> i16 {
    let q = i64::from(q);
    let v = i64::from(s);
    // round half away from zero
    let steps = (2 * v.abs() + q) / (2 * q);
    (v.signum() * steps * q).clamp(-32768, 32767) as i16
}

/// Rounds every sample to the nearest multiple of `q` (ties away from zero).
pub fn quantize(clip: &AudioClip, q: u32) -> AudioClip {
    assert!(q >= 1, "q must be positive");
    clip.with_samples(clip.samples.iter().map(|&s| quantize_sample(s, q)).collect())
}

#[inline]
fn window_index(i: usize, offset: isize, len: usize) -> usize {
    (i as isize + offset).clamp(0, len as isize - 1) as usize
}

/// Replaces each sample by the rounded mean or the median of the
/// `2K-1` samples centred on it; edges are replicated.
pub fn smooth(clip: &AudioClip, kind: SmoothKind, k: usize) -> AudioClip {
    assert!(k >= 1, "K must be positive");
    let n = clip.samples.len();
    let reach = k as isize - 1;
    let width = 2 * k - 1;
    let mut window = Vec::with_capacity(width);
    let out = (0..n)
        .map(|i| {
            window.clear();
            window.extend((-reach..=reach).map(|o| i64::from(clip.samples[window_index(i, o, n)])));
            match kind {
                SmoothKind::Average => {
                    let sum: i64 = window.iter().sum();
                    (sum as f64 / width as f64).round() as i16
                }
                SmoothKind::Median => {
                    let mid = width / 2;
                    *window.select_nth_unstable(mid).1 as i16
                }
            }
        })
        .collect();
    clip.with_samples(out)
}

/// Real-valued smoothing used by adaptive attacks. For the median the
/// returned routing holds, per output sample, the input index whose value
/// was selected (lowest index among equal values).
pub fn smooth_real(signal: &[f64], kind: SmoothKind, k: usize) -> (Vec<f64>, Vec<usize>) {
    let n = signal.len();
    let reach = k as isize - 1;
    let width = 2 * k - 1;
    let mut routing = Vec::new();
    let mut window: Vec<(f64, usize)> = Vec::with_capacity(width);
    let out = (0..n)
        .map(|i| match kind {
            SmoothKind::Average => {
                (-reach..=reach).map(|o| signal[window_index(i, o, n)]).sum::<f64>() / width as f64
            }
            SmoothKind::Median => {
                window.clear();
                window.extend((-reach..=reach).map(|o| {
                    let j = window_index(i, o, n);
                    (signal[j], j)
                }));
                window.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let value = window[width / 2].0;
                let src = window
                    .iter()
                    .filter(|w| w.0 == value)
                    .map(|w| w.1)
                    .min()
                    .expect("median present");
                routing.push(src);
                value
            }
        })
        .collect();
    (out, routing)
}

/// Adjoint of [`smooth_real`]: pulls an output gradient back to the input.
pub fn smooth_real_adjoint(
    grad_out: &[f64],
    kind: SmoothKind,
    k: usize,
    routing: &[usize],
) -> Vec<f64> {
    let n = grad_out.len();
    let mut grad = vec![0.0; n];
    match kind {
        SmoothKind::Average => {
            let reach = k as isize - 1;
            let width = (2 * k - 1) as f64;
            for i in 0..n {
                let g = grad_out[i] / width;
                for o in -reach..=reach {
                    grad[window_index(i, o, n)] += g;
                }
            }
        }
        SmoothKind::Median => {
            for (i, &src) in routing.iter().enumerate() {
                grad[src] += grad_out[i];
            }
        }
    }
    grad
}

/// Low-pass, decimate, zero-insert and low-pass again (real-valued, linear,
/// self-adjoint). Output has the input length.
#[derive(Clone, Debug)]
pub struct Resampler {
    pub factor: usize,
    pub kernel: Vec<f64>,
}

impl Resampler {
    pub fn new(factor: usize, sample_rate: u32) -> Self {
        let cutoff = f64::from(sample_rate) / factor as f64 / 2.0 * 0.9;
        Self {
            factor,
            kernel: windowed_sinc_lowpass(RECOVERY_TAPS, cutoff, f64::from(sample_rate)),
        }
    }

    /// Anti-alias filter then keep every `factor`-th sample.
    pub fn decimate(&self, signal: &[f64]) -> Vec<f64> {
        convolve_same(signal, &self.kernel)
            .into_iter()
            .step_by(self.factor)
            .collect()
    }

    /// Zero-insertion to `len` samples followed by the gain-compensated
    /// low-pass.
    pub fn recover(&self, low_rate: &[f64], len: usize) -> Vec<f64> {
        let mut up = vec![0.0; len];
        for (i, &v) in low_rate.iter().enumerate() {
            if i * self.factor < len {
                up[i * self.factor] = v * self.factor as f64;
            }
        }
        convolve_same(&up, &self.kernel)
    }

    /// Adjoint of [`Self::recover`].
    pub fn recover_adjoint(&self, grad: &[f64]) -> Vec<f64> {
        convolve_same(grad, &self.kernel)
            .into_iter()
            .step_by(self.factor)
            .map(|v| v * self.factor as f64)
            .collect()
    }

    pub fn apply(&self, signal: &[f64]) -> Vec<f64> {
        self.recover(&self.decimate(signal), signal.len())
    }
}

/// Band-limits to the lower rate and recovers at the original rate.
pub fn downsample_defense(clip: &AudioClip, factor: usize) -> Result<AudioClip> {
    if factor < 2 {
        return Err(Error::InvalidParameter("factor must be >= 2".into()));
    }
    if clip.len() <= RECOVERY_TAPS {
        return Err(Error::ClipTooShort {
            len: clip.len(),
            min: RECOVERY_TAPS + 1,
        });
    }
    let resampler = Resampler::new(factor, clip.sample_rate);
    Ok(clip.with_samples(real_to_pcm(&resampler.apply(&clip.to_real().values))))
}

/// Linear principal-subspace autoencoder over log-magnitude frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameAutoencoder {
    pub version: u32,
    pub frontend: Frontend,
    pub mean: Vec<f64>,
    /// `rank` orthonormal rows of length `bins`.
    pub basis: Vec<Vec<f64>>,
    /// Covariance eigenvalues of the kept directions, descending.
    pub eigenvalues: Vec<f64>,
}

impl FrameAutoencoder {
    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Latent code of one frame.
    pub fn encode(&self, frame: &[f64]) -> Vec<f64> {
        self.basis
            .iter()
            .map(|b| b.iter().zip(frame).zip(&self.mean).map(|((u, f), m)| u * (f - m)).sum())
            .collect()
    }

    pub fn decode(&self, code: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (b, &z) in self.basis.iter().zip(code) {
            for (o, u) in out.iter_mut().zip(b) {
                *o += z * u;
            }
        }
        out
    }

    pub fn reconstruct(&self, frame: &[f64]) -> Vec<f64> {
        self.decode(&self.encode(frame))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("autoencoder serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ae: Self = serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
        if ae.version != 1 || ae.basis.iter().any(|b| b.len() != ae.mean.len()) {
            return Err(Error::ModelFormat("inconsistent autoencoder artifact".into()));
        }
        Ok(ae)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::ModelFormat(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&text)
    }
}

/// Mean and frame covariance (divided by the frame count) of feature rows.
pub fn frame_statistics(frames: &[Vec<f64>]) -> (Vec<f64>, DMatrix<f64>) {
    let dim = frames[0].len();
    let count = frames.len() as f64;
    let mut mean = vec![0.0; dim];
    for f in frames {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    let mut centered = vec![0.0; dim];
    for f in frames {
        for i in 0..dim {
            centered[i] = f[i] - mean[i];
        }
        for i in 0..dim {
            let ci = centered[i];
            for j in i..dim {
                cov[(i, j)] += ci * centered[j];
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            let v = cov[(i, j)] / count;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    (mean, cov)
}

/// Fits the top-`rank` principal subspace of raw frame vectors.
pub fn fit_frames(frames: &[Vec<f64>], rank: usize, frontend: Frontend) -> Result<FrameAutoencoder> {
    if frames.len() < rank || frames.is_empty() {
        return Err(Error::InsufficientFrames {
            have: frames.len(),
            need: rank.max(1),
        });
    }
    let dim = frames[0].len();
    if rank == 0 || rank > dim {
        return Err(Error::InvalidParameter(format!("rank must be in 1..={dim}")));
    }
    let (mean, cov) = frame_statistics(frames);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut basis = Vec::with_capacity(rank);
    let mut eigenvalues = Vec::with_capacity(rank);
    for &idx in order.iter().take(rank) {
        let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        // fix the sign so the largest-magnitude component is positive
        let pivot = v
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(1.0);
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        basis.push(v);
        eigenvalues.push(eig.eigenvalues[idx]);
    }
    Ok(FrameAutoencoder {
        version: 1,
        frontend,
        mean,
        basis,
        eigenvalues,
    })
}

/// Fits the autoencoder on the log-magnitude frames of a corpus.
pub fn autoencoder_fit(corpus: &[AudioClip], rank: usize, frontend: Frontend) -> Result<FrameAutoencoder> {
    let mut frames = Vec::new();
    for clip in corpus {
        if clip.len() < frontend.frame_length {
            continue;
        }
        let features = frontend.extract(clip)?;
        frames.extend((0..features.rows).map(|t| features.row(t).to_vec()));
    }
    fit_frames(&frames, rank, frontend)
}

/// Projects every frame's log magnitude onto the subspace, keeps the
/// original phase and resynthesizes by weighted overlap-add.
pub fn autoencoder_reform(clip: &AudioClip, ae: &FrameAutoencoder) -> Result<AudioClip> {
    let fe = ae.frontend;
    if clip.sample_rate != fe.sample_rate {
        return Err(Error::RateMismatch {
            expected: fe.sample_rate,
            got: clip.sample_rate,
        });
    }
    let signal = clip.to_real().values;
    if signal.len() < fe.frame_length {
        return Ok(clip.clone());
    }
    let plan = fe.plan();
    let spectra = plan.analyze(&signal);
    let n = fe.frame_length;
    let mut numer = vec![0.0; signal.len()];
    let mut denom = vec![0.0; signal.len()];
    for (t, frame) in spectra.iter().enumerate() {
        let mags: Vec<f64> = frame.iter().map(|c| (c.norm_sqr() + fe.eps_mag).sqrt()).collect();
        let logs: Vec<f64> = mags.iter().map(|m| (fe.eps_log + m).ln()).collect();
        let projected = ae.reconstruct(&logs);
        let bins: Vec<Complex64> = frame
            .iter()
            .zip(&projected)
            .map(|(c, &lf)| {
                let smooth_mag = (lf.exp() - fe.eps_log).max(0.0);
                let mag = (smooth_mag * smooth_mag - fe.eps_mag).max(0.0).sqrt();
                let norm = c.norm();
                if norm > 0.0 {
                    c * (mag / norm)
                } else {
                    Complex64::new(mag, 0.0)
                }
            })
            .collect();
        let y = plan.synthesize_frame(&bins);
        let start = t * fe.hop;
        for i in 0..n {
            numer[start + i] += y[i] * plan.window[i];
            denom[start + i] += plan.window[i] * plan.window[i];
        }
    }
    let out: Vec<f64> = signal
        .iter()
        .zip(numer.iter().zip(&denom))
        .map(|(&orig, (&num, &den))| if den > 1e-6 { num / den } else { orig })
        .collect();
    Ok(clip.with_samples(real_to_pcm(&out)))
}

/// Relative RMS difference `‖a - b‖ / ‖b‖` on integer samples.
pub fn relative_rms(a: &AudioClip, b: &AudioClip) -> f64 {
    let num: f64 = a
        .samples
        .iter()
        .zip(&b.samples)
        .map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2))
        .sum();
    let den: f64 = b.samples.iter().map(|&y| f64::from(y).powi(2)).sum();
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}
