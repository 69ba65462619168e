use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::optim::Adam;
use crate::text::{cer, Transcript};

use super::ctc::ctc_loss_and_grad;
use super::frontend::Frontend;
use super::model::ToyAsrModel;
use super::synth::Utterance;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub init_scale: f64,
    pub hidden: usize,
    pub seed: u64,
    /// Fraction of examples per epoch that get extra white noise.
    #[serde(default = "default_augment_prob")]
    pub augment_prob: f64,
    /// Extra noise σ is drawn log-uniformly from [0.005, augment_sigma];
    /// 0 disables augmentation.
    #[serde(default = "default_augment_sigma")]
    pub augment_sigma: f64,
}

const AUGMENT_SIGMA_MIN: f64 = 0.005;

fn default_augment_prob() -> f64 {
    0.3
}

fn default_augment_sigma() -> f64 {
    0.02
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 30,
            batch_size: 8,
            init_scale: 0.05,
            hidden: 32,
            seed: 0,
            augment_prob: default_augment_prob(),
            augment_sigma: default_augment_sigma(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Mean per-utterance CTC loss of every epoch.
    pub epoch_loss: Vec<f64>,
}

struct Example {
    signal: Vec<f64>,
    features: Matrix,
    labels: Vec<usize>,
}

/// Trains a fresh model on synthesized utterances. Single-threaded and
/// fully determined by the corpus and `config.seed`.
pub fn train(corpus: &[Utterance], config: &TrainConfig) -> Result<(ToyAsrModel, TrainLog)> {
    train_with_progress(corpus, config, |_, _| {})
}

pub fn train_with_progress(
    corpus: &[Utterance],
    config: &TrainConfig,
    on_epoch: impl FnMut(usize, f64),
) -> Result<(ToyAsrModel, TrainLog)> {
    let clips = corpus
        .iter()
        .map(|u| Ok((u.synthesize()?, u.text.clone())))
        .collect::<Result<Vec<_>>>()?;
    train_on_clips(&clips, config, on_epoch)
}

/// Trains on recorded clips paired with their transcripts.
pub fn train_on_clips(
    clips: &[(AudioClip, Transcript)],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<(ToyAsrModel, TrainLog)> {
    if clips.is_empty() {
        return Err(Error::TrainingFailed("empty corpus".into()));
    }
    let frontend = Frontend::default();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = ToyAsrModel::random(frontend, config.hidden, config.init_scale, &mut rng);

    let examples = clips
        .iter()
        .map(|(clip, text)| {
            Ok(Example {
                signal: clip.to_real().values,
                features: frontend.extract(clip)?,
                labels: model.encode(text)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let all: Vec<&Matrix> = examples.iter().map(|e| &e.features).collect();
    model.fit_standardization(&all);

    let mut adam = Adam::new(config.learning_rate, &model.tensor_sizes());
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut log = TrainLog::default();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size.max(1)) {
            let mut total = model.zero_grads();
            for &i in batch {
                let ex = &examples[i];
                let noisy;
                let features = if config.augment_sigma > AUGMENT_SIGMA_MIN
                    && rng.gen_bool(config.augment_prob.clamp(0.0, 1.0))
                {
                    let sigma = AUGMENT_SIGMA_MIN
                        * (config.augment_sigma / AUGMENT_SIGMA_MIN).powf(rng.gen::<f64>());
                    let signal: Vec<f64> = ex
                        .signal
                        .iter()
                        .map(|v| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            v + sigma * z
                        })
                        .collect::<Vec<f64>>();
                    noisy = frontend.analyze(&signal)?.features;
                    &noisy
                } else {
                    &ex.features
                };
                let (logits, cache) = model.forward_with_cache(features);
                let (loss, grad_logits) = ctc_loss_and_grad(&logits, &ex.labels, model.blank)?;
                if !loss.is_finite() {
                    return Err(Error::TrainingFailed(format!(
                        "non-finite loss at epoch {epoch}"
                    )));
                }
                epoch_loss += loss;
                let (grads, _) = model.backward(&cache, &grad_logits, false);
                total.add_assign(&grads);
            }
            total.scale(1.0 / batch.len() as f64);
            let grads = total.tensors();
            adam.update(&mut model.tensors_mut(), &grads);
        }
        let mean = epoch_loss / examples.len() as f64;
        if !mean.is_finite() {
            return Err(Error::TrainingFailed(format!("non-finite loss at epoch {epoch}")));
        }
        log.epoch_loss.push(mean);
        on_epoch(epoch, mean);
    }
    model.validate().map_err(|e| Error::TrainingFailed(e.to_string()))?;
    Ok((model, log))
}

/// Corpus-level character error rate: total edits over total reference
/// characters.
pub fn corpus_cer(model: &ToyAsrModel, utterances: &[Utterance]) -> Result<f64> {
    let mut edits = 0.0;
    let mut chars = 0.0;
    for u in utterances {
        let hyp: Transcript = model.transcribe(&u.synthesize()?)?;
        let n = u.text.char_len() as f64;
        edits += cer(&u.text, &hyp)? * n;
        chars += n;
    }
    Ok(edits / chars)
}
