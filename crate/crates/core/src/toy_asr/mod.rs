//! Miniature differentiable speech recognizer used as the attack target:
//! log-magnitude STFT frontend, bidirectional tanh recurrent layer,
//! per-frame softmax and CTC.

pub mod ctc;
pub mod frontend;
pub mod model;
pub mod synth;
pub mod train;

pub use ctc::{ctc_backward, ctc_loss, ctc_loss_and_grad, min_frames};
pub use frontend::{extract_features, FeatureTape, Frontend};
pub use model::{waveform_grad, ToyAsrModel, ALPHABET, BLANK};
pub use synth::{
    generate_corpus, random_phrase, standard_split, synthesize, CorpusSpec, SynthesisSpec,
    Utterance,
};
pub use train::{corpus_cer, train, train_on_clips, train_with_progress, TrainConfig, TrainLog};
