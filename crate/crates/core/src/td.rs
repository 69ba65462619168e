//! Temporal-dependency consistency detector: transcribe the first `k`
//! portion of a clip, transcribe the whole clip, truncate the latter to the
//! length of the former and measure how much the two disagree.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::backend::{AsrBackend, TranscribeError};
use crate::error::{Error, Result};
use crate::text::{cer, lcp, wer, Transcript};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Benign,
    Adversarial,
}

impl Label {
    pub fn is_adversarial(self) -> bool {
        self == Self::Adversarial
    }
}

/// A fixed fraction or a per-clip uniform draw from `[a, b)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KChoice {
    Fixed { k: f64 },
    Rand { a: f64, b: f64 },
}

impl KChoice {
    pub fn fixed(k: f64) -> Self {
        Self::Fixed { k }
    }

    pub fn validate(&self) -> Result<()> {
        let open = |v: f64| v > 0.0 && v < 1.0;
        match *self {
            Self::Fixed { k } if !open(k) => Err(Error::InvalidParameter(format!("k={k} not in (0,1)"))),
            Self::Rand { a, b } if !(open(a) && open(b) && a < b) => Err(Error::InvalidParameter(
                format!("Rand({a},{b}) needs 0 < a < b < 1"),
            )),
            _ => Ok(()),
        }
    }

    /// The `k` used for one clip. Rand draws are a pure function of
    /// `(seed, clip id)`.
    pub fn draw(&self, seed: u64, clip_id: &str) -> f64 {
        match *self {
            Self::Fixed { k } => k,
            Self::Rand { a, b } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(clip_id.as_bytes()));
                rng.gen_range(a..b)
            }
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Self::Fixed { k } => format!("{k:.4}"),
            Self::Rand { a, b } => format!("rand({a},{b})"),
        }
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Wer,
    Cer,
    #[serde(rename = "lcp")]
    LcpRatio,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Wer, Metric::Cer, Metric::LcpRatio];

    pub fn name(self) -> &'static str {
        match self {
            Self::Wer => "wer",
            Self::Cer => "cer",
            Self::LcpRatio => "lcp",
        }
    }

    /// Truncation used when none is forced.
    pub fn default_granularity(self) -> Granularity {
        match self {
            Self::Cer => Granularity::Char,
            Self::Wer | Self::LcpRatio => Granularity::Word,
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wer" => Ok(Self::Wer),
            "cer" => Ok(Self::Cer),
            "lcp" | "lcp-ratio" | "lcp_ratio" => Ok(Self::LcpRatio),
            other => Err(Error::InvalidParameter(format!("unknown metric {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Word,
    Char,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TdConfig {
    pub k: KChoice,
    pub metric: Metric,
    pub seed: u64,
    /// Forces one truncation granularity for every metric.
    #[serde(default)]
    pub granularity: Option<Granularity>,
}

impl TdConfig {
    pub fn new(k: KChoice, metric: Metric) -> Self {
        Self {
            k,
            metric,
            seed: 0,
            granularity: None,
        }
    }

    pub fn granularity_for(&self, metric: Metric) -> Granularity {
        self.granularity.unwrap_or(metric.default_granularity())
    }
}

/// Number of prefix samples kept for fraction `k`.
pub fn prefix_len(n: usize, k: f64) -> usize {
    (k * n as f64).floor() as usize
}

/// First `floor(k·N)` samples of the clip.
pub fn split_prefix(clip: &AudioClip, k: f64) -> Result<AudioClip> {
    let len = prefix_len(clip.len(), k);
    if len == 0 || len > clip.len() {
        return Err(Error::ClipTooShort {
            len: clip.len(),
            min: (1.0 / k).ceil() as usize,
        });
    }
    Ok(clip.with_samples(clip.samples[..len].to_vec()))
}

/// Truncates `whole` to the length of `reference`, in words or characters.
pub fn truncate_transcript(whole: &Transcript, reference: &Transcript, granularity: Granularity) -> Transcript {
    match granularity {
        Granularity::Word => whole.first_words(reference.word_count().min(whole.word_count())),
        Granularity::Char => whole.first_chars(reference.char_len().min(whole.char_len())),
    }
}

/// Disagreement between the prefix transcript and the truncated whole.
/// Empty against empty is 0; one side empty is 1.
pub fn td_distance(prefix: &Transcript, whole_k: &Transcript, metric: Metric) -> f64 {
    match (prefix.is_empty(), whole_k.is_empty()) {
        (true, true) => return 0.0,
        (true, false) | (false, true) => return 1.0,
        _ => {}
    }
    match metric {
        Metric::Wer => wer(whole_k, prefix).expect("non-empty reference"),
        Metric::Cer => cer(whole_k, prefix).expect("non-empty reference"),
        Metric::LcpRatio => {
            let longest = prefix.char_len().max(whole_k.char_len());
            1.0 - lcp(prefix.as_str(), whole_k.as_str()) as f64 / longest as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricOutcome {
    pub metric: Metric,
    pub whole_k: Transcript,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TdOutcome {
    pub k: f64,
    pub prefix: Transcript,
    pub whole: Transcript,
    /// One entry per metric, in [`Metric::ALL`] order.
    pub metrics: Vec<MetricOutcome>,
}

impl TdOutcome {
    pub fn distance(&self, metric: Metric) -> f64 {
        self.metrics
            .iter()
            .find(|m| m.metric == metric)
            .map(|m| m.distance)
            .expect("all metrics scored")
    }

    /// Builds the outcome from the two transcripts.
    pub fn from_transcripts(k: f64, prefix: Transcript, whole: Transcript, cfg: &TdConfig) -> Self {
        let metrics = Metric::ALL
            .iter()
            .map(|&metric| {
                let whole_k = truncate_transcript(&whole, &prefix, cfg.granularity_for(metric));
                let mut distance = td_distance(&prefix, &whole_k, metric);
                if prefix.is_empty() && !whole.is_empty() {
                    distance = 1.0;
                }
                MetricOutcome {
                    metric,
                    whole_k,
                    distance,
                }
            })
            .collect();
        Self {
            k,
            prefix,
            whole,
            metrics,
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum TdError {
    #[error("degenerate prefix: {0}")]
    DegeneratePrefix(Error),
    #[error(transparent)]
    Transcription(#[from] TranscribeError),
}

/// Scores one clip.
pub fn td_score(backend: &AsrBackend, clip: &AudioClip, cfg: &TdConfig) -> Result<TdOutcome, TdError> {
    cfg.k.validate().map_err(TdError::DegeneratePrefix)?;
    let k = cfg.k.draw(cfg.seed, &clip.id);
    let prefix_clip = split_prefix(clip, k).map_err(TdError::DegeneratePrefix)?;
    let prefix = backend.transcribe(&prefix_clip)?;
    let whole = backend.transcribe(clip)?;
    Ok(TdOutcome::from_transcripts(k, prefix, whole, cfg))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub id: String,
    pub label: Label,
    pub k: f64,
    pub metric: Metric,
    /// Distance under `metric`; absent when scoring failed.
    pub score: Option<f64>,
    pub outcome: Option<TdOutcome>,
    pub error: Option<String>,
}

/// Scores every clip (in parallel); records keep input order.
pub fn detect_batch(backend: &AsrBackend, clips: &[(AudioClip, Label)], cfg: &TdConfig) -> Vec<DetectionRecord> {
    clips
        .par_iter()
        .map(|(clip, label)| {
            let k = cfg.k.draw(cfg.seed, &clip.id);
            match td_score(backend, clip, cfg) {
                Ok(outcome) => DetectionRecord {
                    id: clip.id.clone(),
                    label: *label,
                    k,
                    metric: cfg.metric,
                    score: Some(outcome.distance(cfg.metric)),
                    outcome: Some(outcome),
                    error: None,
                },
                Err(e) => DetectionRecord {
                    id: clip.id.clone(),
                    label: *label,
                    k,
                    metric: cfg.metric,
                    score: None,
                    outcome: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

/// `id,k,metric,score,label` rows; failed clips have an empty score.
pub fn records_to_csv(records: &[DetectionRecord]) -> String {
    let mut out = String::from("id,k,metric,score,label\n");
    for r in records {
        let score = r.score.map(|s| format!("{s:.6}")).unwrap_or_default();
        let label = match r.label {
            Label::Benign => "benign",
            Label::Adversarial => "adversarial",
        };
        writeln!(out, "{},{:.6},{},{},{}", r.id, r.k, r.metric.name(), score, label).expect("string write");
    }
    out
}
