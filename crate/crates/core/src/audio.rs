//! Canonical audio representation, PCM16 WAV I/O, and loudness metrics.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, WavError};

/// Sample rate of every synthetic corpus clip.
pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Scale between signed 16-bit amplitudes and normalized reals.
pub const PCM_SCALE: f64 = 32768.0;

/// A mono PCM16 waveform.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AudioClip {
    pub id: String,
    pub samples: Vec<i16>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(id: impl Into<String>, samples: Vec<i16>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidClip("no samples".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidClip("sample rate must be positive".into()));
        }
        Ok(Self {
            id: id.into(),
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn to_real(&self) -> RealWave {
        RealWave {
            values: self.samples.iter().map(|&s| f64::from(s) / PCM_SCALE).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Copy of this clip with different samples, keeping id and rate.
    pub fn with_samples(&self, samples: Vec<i16>) -> Self {
        Self {
            id: self.id.clone(),
            samples,
            sample_rate: self.sample_rate,
        }
    }
}

/// Real-valued working representation in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealWave {
    pub values: Vec<f64>,
    pub sample_rate: u32,
}

impl RealWave {
    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self {
            values: vec![0.0; len],
            sample_rate,
        }
    }

    /// Rounds to the nearest PCM16 value and saturates at the int16 range.
    pub fn to_clip(&self, id: impl Into<String>) -> Result<AudioClip> {
        AudioClip::new(id, real_to_pcm(&self.values), self.sample_rate)
    }
}

pub fn pcm_from_real(v: f64) -> i16 {
    (v * PCM_SCALE).round().clamp(-32768.0, 32767.0) as i16
}

pub fn real_to_pcm(values: &[f64]) -> Vec<i16> {
    values.iter().map(|&v| pcm_from_real(v)).collect()
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip, WavError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| WavError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_wav(&bytes, id)
}

/// Parses an in-memory RIFF/WAVE PCM16 mono file.
pub fn parse_wav(bytes: &[u8], id: impl Into<String>) -> Result<AudioClip, WavError> {
    if bytes.len() < 12 {
        return Err(WavError::MalformedHeader("file shorter than RIFF header".into()));
    }
    if &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(WavError::MalformedHeader("missing RIFF/WAVE magic".into()));
    }

    let mut pos = 12;
    let mut format: Option<(u32, u16)> = None;
    while pos + 8 <= bytes.len() {
        let tag = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body = pos + 8;
        match tag {
            b"fmt " => {
                if size < 16 || body + size > bytes.len() {
                    return Err(WavError::MalformedHeader("fmt chunk too small".into()));
                }
                let f = &bytes[body..body + size];
                let audio_format = u16::from_le_bytes([f[0], f[1]]);
                let channels = u16::from_le_bytes([f[2], f[3]]);
                let sample_rate = u32::from_le_bytes([f[4], f[5], f[6], f[7]]);
                let bits = u16::from_le_bytes([f[14], f[15]]);
                if audio_format != 1 {
                    return Err(WavError::UnsupportedEncoding(format!(
                        "format tag {audio_format} is not PCM"
                    )));
                }
                if channels != 1 {
                    return Err(WavError::UnsupportedEncoding(format!(
                        "{channels} channels, only mono is accepted"
                    )));
                }
                if bits != 16 {
                    return Err(WavError::UnsupportedEncoding(format!(
                        "{bits}-bit samples, only 16-bit is accepted"
                    )));
                }
                if sample_rate == 0 {
                    return Err(WavError::MalformedHeader("zero sample rate".into()));
                }
                format = Some((sample_rate, channels));
            }
            b"data" => {
                let (sample_rate, _) = format.ok_or_else(|| {
                    WavError::MalformedHeader("data chunk before fmt chunk".into())
                })?;
                let available = bytes.len() - body;
                if size > available || size % 2 != 0 {
                    return Err(WavError::Truncated {
                        expected: size,
                        found: available,
                    });
                }
                if size == 0 {
                    return Err(WavError::Empty);
                }
                let samples = bytes[body..body + size]
                    .chunks_exact(2)
                    .map(|b| i16::from_le_bytes([b[0], b[1]]))
                    .collect();
                return Ok(AudioClip {
                    id: id.into(),
                    samples,
                    sample_rate,
                });
            }
            _ => {}
        }
        // chunks are word aligned
        pos = body + size + (size & 1);
    }
    if format.is_none() {
        Err(WavError::MalformedHeader("missing fmt chunk".into()))
    } else {
        Err(WavError::MalformedHeader("missing data chunk".into()))
    }
}

/// Serializes a clip with the canonical 44-byte header.
pub fn encode_wav(clip: &AudioClip) -> Vec<u8> {
    let data_len = clip.samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for s in &clip.samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

pub fn write_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<(), WavError> {
    let path = path.as_ref();
    fs::write(path, encode_wav(clip)).map_err(|source| WavError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Peak loudness `max_i 20·log10|x_i|` on raw 16-bit amplitudes.
pub fn db_scale(clip: &AudioClip) -> Result<f64> {
    let peak = clip
        .samples
        .iter()
        .map(|&s| i32::from(s).unsigned_abs())
        .max()
        .unwrap_or(0);
    if peak == 0 {
        return Err(Error::UndefinedLoudness);
    }
    Ok(20.0 * f64::from(peak).log10())
}

/// Relative loudness of a perturbation: `dB(delta) - dB(x)`.
pub fn db_distortion(x: &AudioClip, delta: &AudioClip) -> Result<f64> {
    if x.len() != delta.len() {
        return Err(Error::ClipMismatch(format!(
            "lengths differ: {} vs {}",
            x.len(),
            delta.len()
        )));
    }
    if x.sample_rate != delta.sample_rate {
        return Err(Error::ClipMismatch(format!(
            "sample rates differ: {} vs {}",
            x.sample_rate, delta.sample_rate
        )));
    }
    Ok(db_scale(delta)? - db_scale(x)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Byte-level WAV built field by field, independent of `encode_wav`.
    fn handmade_wav(samples: &[i16], channels: u16, bits: u16, format: u16) -> Vec<u8> {
        let data: Vec<u8> = samples.iter().flat_map(|s| s.to_le_bytes()).collect();
        let mut b = Vec::new();
        b.extend(b"RIFF");
        b.extend((36 + data.len() as u32).to_le_bytes());
        b.extend(b"WAVE");
        b.extend(b"fmt ");
        b.extend(16u32.to_le_bytes());
        b.extend(format.to_le_bytes());
        b.extend(channels.to_le_bytes());
        b.extend(16000u32.to_le_bytes());
        b.extend((16000u32 * u32::from(channels) * u32::from(bits) / 8).to_le_bytes());
        b.extend((channels * bits / 8).to_le_bytes());
        b.extend(bits.to_le_bytes());
        b.extend(b"data");
        b.extend((data.len() as u32).to_le_bytes());
        b.extend(data);
        b
    }

    #[test]
    fn parses_handmade_header() {
        let bytes = handmade_wav(&[0, 100, -100], 1, 16, 1);
        assert_eq!(bytes.len(), 44 + 6);
        let clip = parse_wav(&bytes, "h").unwrap();
        assert_eq!(clip.samples, vec![0, 100, -100]);
        assert_eq!(clip.sample_rate, 16000);
        assert_eq!(encode_wav(&clip), bytes);
    }

    #[test]
    fn silence_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("silence.wav");
        fs::write(&path, handmade_wav(&vec![0; 16000], 1, 16, 1)).unwrap();
        let clip = read_wav(&path).unwrap();
        assert_eq!(clip.len(), 16000);
        assert!(clip.samples.iter().all(|&s| s == 0));
        assert_eq!(clip.id, "silence");
    }

    #[test]
    fn rejects_unsupported_and_broken_files() {
        let stereo = handmade_wav(&[1, 2, 3, 4], 2, 16, 1);
        assert!(matches!(
            parse_wav(&stereo, "s"),
            Err(WavError::UnsupportedEncoding(_))
        ));
        let float = handmade_wav(&[1, 2], 1, 16, 3);
        assert!(matches!(
            parse_wav(&float, "f"),
            Err(WavError::UnsupportedEncoding(_))
        ));
        let mut eight_bit = handmade_wav(&[1, 2], 1, 16, 1);
        eight_bit[34] = 8;
        assert!(matches!(
            parse_wav(&eight_bit, "e"),
            Err(WavError::UnsupportedEncoding(_))
        ));
        let mut truncated = handmade_wav(&[1, 2, 3], 1, 16, 1);
        truncated.truncate(truncated.len() - 2);
        assert!(matches!(
            parse_wav(&truncated, "t"),
            Err(WavError::Truncated { .. })
        ));
        assert!(matches!(
            parse_wav(b"RIFX....WAVE", "m"),
            Err(WavError::MalformedHeader(_))
        ));
        assert!(matches!(
            read_wav("/nonexistent/file.wav"),
            Err(WavError::Io { .. })
        ));
    }

    #[test]
    fn skips_unknown_chunks() {
        let mut bytes = handmade_wav(&[7, -7], 1, 16, 1);
        let list = [b"LIST".as_slice(), &3u32.to_le_bytes(), b"abc\0"].concat();
        bytes.splice(36..36, list);
        assert_eq!(parse_wav(&bytes, "l").unwrap().samples, vec![7, -7]);
    }

    #[test]
    fn round_trip_extremes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wav");
        for samples in [vec![0, 100, -100], vec![32767, -32768]] {
            let clip = AudioClip::new("x", samples, 16000).unwrap();
            write_wav(&clip, &path).unwrap();
            assert_eq!(read_wav(&path).unwrap(), clip);
        }
    }

    #[test]
    fn db_values() {
        let c = AudioClip::new("a", vec![3, -1000, 20], 16000).unwrap();
        assert!((db_scale(&c).unwrap() - 60.0).abs() < 1e-12);
        let one = AudioClip::new("b", vec![0, 1, -1], 16000).unwrap();
        assert_eq!(db_scale(&one).unwrap(), 0.0);
        let zero = AudioClip::new("z", vec![0, 0], 16000).unwrap();
        assert_eq!(db_scale(&zero), Err(Error::UndefinedLoudness));
        let min = AudioClip::new("m", vec![-32768], 16000).unwrap();
        assert!((db_scale(&min).unwrap() - 20.0 * 32768f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn distortion_values() {
        let x = AudioClip::new("x", vec![1000, -500, 250], 16000).unwrap();
        let tenth = AudioClip::new("d", vec![100, -50, 25], 16000).unwrap();
        assert_eq!(db_distortion(&x, &x).unwrap(), 0.0);
        assert!((db_distortion(&x, &tenth).unwrap() + 20.0).abs() < 1e-12);
        let short = AudioClip::new("s", vec![1], 16000).unwrap();
        assert!(matches!(
            db_distortion(&x, &short),
            Err(Error::ClipMismatch(_))
        ));
        let other_rate = AudioClip::new("r", vec![1, 2, 3], 8000).unwrap();
        assert!(matches!(
            db_distortion(&x, &other_rate),
            Err(Error::ClipMismatch(_))
        ));
    }

    fn nonzero_samples() -> impl Strategy<Value = Vec<i16>> {
        prop::collection::vec(any::<i16>(), 1..300)
            .prop_filter("needs a nonzero sample", |v| v.iter().any(|&s| s != 0))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn wav_round_trip_is_bit_exact(samples in prop::collection::vec(any::<i16>(), 1..2000), rate in 1u32..96_000) {
            let clip = AudioClip::new("p", samples, rate).unwrap();
            prop_assert_eq!(parse_wav(&encode_wav(&clip), "p").unwrap(), clip);
        }

        #[test]
        fn db_matches_scan(samples in nonzero_samples()) {
            let clip = AudioClip::new("p", samples.clone(), 16000).unwrap();
            let mut best = f64::NEG_INFINITY;
            for s in &samples {
                if *s != 0 {
                    best = best.max(20.0 * (f64::from(*s).abs()).log10());
                }
            }
            prop_assert_eq!(db_scale(&clip).unwrap(), best);
            prop_assert_eq!(db_distortion(&clip, &clip).unwrap(), 0.0);
        }

        #[test]
        fn db_is_scale_equivariant(samples in prop::collection::vec(-3276i16..=3276, 1..200)) {
            prop_assume!(samples.iter().any(|&s| s != 0));
            let clip = AudioClip::new("p", samples.clone(), 16000).unwrap();
            let louder = clip.with_samples(samples.iter().map(|s| s * 10).collect());
            let diff = db_scale(&louder).unwrap() - db_scale(&clip).unwrap();
            prop_assert!((diff - 20.0).abs() < 1e-9);
        }

        #[test]
        fn int_real_int_identity(samples in prop::collection::vec(any::<i16>(), 1..500)) {
            let clip = AudioClip::new("p", samples, 16000).unwrap();
            prop_assert_eq!(clip.to_real().to_clip("p").unwrap(), clip);
        }
    }
}
