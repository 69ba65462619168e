//! Synthetic tone speech: every character is a short tone burst.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::audio::{real_to_pcm, AudioClip};
use crate::error::{Error, Result};
use crate::text::Transcript;

use super::model::ALPHABET;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisSpec {
    pub sample_rate: u32,
    pub char_ms: f64,
    /// Peak amplitude as a fraction of full scale.
    pub amplitude: f64,
    pub ramp_ms: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthesisSpec {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            char_ms: 80.0,
            amplitude: 0.3,
            ramp_ms: 5.0,
            noise_sigma: 0.005,
            seed: 0,
        }
    }
}

impl SynthesisSpec {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn samples_per_char(&self) -> usize {
        (self.char_ms * f64::from(self.sample_rate) / 1000.0).round() as usize
    }
}

/// Tone frequency of a letter: 400 Hz plus 120 Hz per alphabet position.
pub fn tone_frequency(c: char) -> Option<f64> {
    ALPHABET
        .chars()
        .filter(|&a| a != ' ')
        .position(|a| a == c)
        .map(|i| 400.0 + 120.0 * i as f64)
}

pub fn synthesize(text: &Transcript, spec: &SynthesisSpec) -> Result<AudioClip> {
    synthesize_with_id(text, spec, text.as_str().replace(' ', "_"))
}

pub fn synthesize_with_id(
    text: &Transcript,
    spec: &SynthesisSpec,
    id: impl Into<String>,
) -> Result<AudioClip> {
    if text.is_empty() {
        return Err(Error::EmptyText);
    }
    let per_char = spec.samples_per_char();
    let ramp = (spec.ramp_ms * f64::from(spec.sample_rate) / 1000.0).round() as usize;
    let rate = f64::from(spec.sample_rate);
    let mut wave = Vec::with_capacity(per_char * text.char_len());
    for c in text.as_str().chars() {
        if c == ' ' {
            wave.extend(std::iter::repeat(0.0).take(per_char));
            continue;
        }
        let freq = tone_frequency(c).ok_or(Error::OutOfAlphabet(c))?;
        for n in 0..per_char {
            let envelope = if n < ramp {
                0.5 - 0.5 * (PI * n as f64 / ramp as f64).cos()
            } else if n >= per_char - ramp {
                0.5 - 0.5 * (PI * (per_char - 1 - n) as f64 / ramp as f64).cos()
            } else {
                1.0
            };
            wave.push(spec.amplitude * envelope * (2.0 * PI * freq * n as f64 / rate).sin());
        }
    }
    if spec.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let noise = Normal::new(0.0, spec.noise_sigma).expect("finite sigma");
        for v in wave.iter_mut() {
            *v += noise.sample(&mut rng);
        }
    }
    AudioClip::new(id, real_to_pcm(&wave), spec.sample_rate)
}

/// One corpus entry: text plus the seed of its noise.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub text: Transcript,
    pub seed: u64,
}

impl Utterance {
    pub fn synthesize(&self) -> Result<AudioClip> {
        synthesize_with_id(&self.text, &SynthesisSpec::with_seed(self.seed), self.id.clone())
    }
}

/// Shape of random utterances.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub utterances: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub min_word_len: usize,
    pub max_word_len: usize,
    pub seed: u64,
}

impl CorpusSpec {
    /// 500 utterances of 3–8 words with 2–5 letters each.
    pub fn standard(seed: u64) -> Self {
        Self {
            utterances: 500,
            min_words: 3,
            max_words: 8,
            min_word_len: 2,
            max_word_len: 5,
            seed,
        }
    }
}

/// A random word over the letters; neighbouring letters always differ so
/// every word is recoverable from the tone sequence.
pub fn random_word<R: Rng>(rng: &mut R, min_len: usize, max_len: usize) -> String {
    let letters: Vec<char> = ALPHABET.chars().filter(|&c| c != ' ').collect();
    let len = rng.gen_range(min_len..=max_len);
    let mut word = String::with_capacity(len);
    let mut prev = None;
    for _ in 0..len {
        let c = loop {
            let c = *letters.choose(rng).expect("non-empty alphabet");
            if Some(c) != prev {
                break c;
            }
        };
        word.push(c);
        prev = Some(c);
    }
    word
}

pub fn random_phrase<R: Rng>(rng: &mut R, words: usize, min_len: usize, max_len: usize) -> Transcript {
    let ws: Vec<String> = (0..words).map(|_| random_word(rng, min_len, max_len)).collect();
    Transcript::new(&ws.join(" "))
}

pub fn generate_corpus(spec: &CorpusSpec) -> Vec<Utterance> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.utterances)
        .map(|i| {
            let words = rng.gen_range(spec.min_words..=spec.max_words);
            let text = random_phrase(&mut rng, words, spec.min_word_len, spec.max_word_len);
            Utterance {
                id: format!("utt{i:04}"),
                text,
                seed: rng.gen(),
            }
        })
        .collect()
}

/// The standard 400 train / 100 held-out split.
pub fn standard_split(seed: u64) -> (Vec<Utterance>, Vec<Utterance>) {
    let mut all = generate_corpus(&CorpusSpec::standard(seed));
    let held_out = all.split_off(400);
    (all, held_out)
}
