use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::text::{normalize_text, Transcript};

use super::ctc::{best_path, ctc_loss_and_grad};
use super::frontend::Frontend;

/// Output alphabet; label `i + 1` is `ALPHABET[i]`, label 0 is the blank.
pub const ALPHABET: &str = "abcdefghij ";
pub const BLANK: usize = 0;
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// One direction of a tanh recurrent layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RnnWeights {
    /// hidden × input
    pub w_in: Vec<f64>,
    /// hidden × hidden
    pub w_rec: Vec<f64>,
    pub bias: Vec<f64>,
}

impl RnnWeights {
    fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_in: vec![0.0; hidden * input],
            w_rec: vec![0.0; hidden * hidden],
            bias: vec![0.0; hidden],
        }
    }

    fn random<R: Rng>(input: usize, hidden: usize, scale: f64, rng: &mut R) -> Self {
        let mut w = Self::zeros(input, hidden);
        for v in w.w_in.iter_mut().chain(w.w_rec.iter_mut()) {
            *v = rng.gen_range(-scale..scale);
        }
        w
    }

    /// Runs over `features` in the given time order, returning states in
    /// the same (original) time indexing.
    fn run(&self, features: &Matrix, hidden: usize, reverse: bool) -> Matrix {
        let frames = features.rows;
        let input = features.cols;
        let mut states = Matrix::zeros(frames, hidden);
        let mut prev = vec![0.0; hidden];
        let mut next = vec![0.0; hidden];
        for step in 0..frames {
            let t = if reverse { frames - 1 - step } else { step };
            let x = features.row(t);
            for h in 0..hidden {
                let a = self.bias[h]
                    + dot(&self.w_in[h * input..(h + 1) * input], x)
                    + dot(&self.w_rec[h * hidden..(h + 1) * hidden], &prev);
                next[h] = a.tanh();
            }
            states.row_mut(t).copy_from_slice(&next);
            std::mem::swap(&mut prev, &mut next);
        }
        states
    }

    /// Backpropagation through time. `grad_states[t]` is dL/dh_t coming from
    /// the output layer; accumulates weight gradients into `grads` and, when
    /// requested, input gradients into `grad_features`.
    fn backprop(
        &self,
        features: &Matrix,
        states: &Matrix,
        grad_states: &Matrix,
        reverse: bool,
        grads: &mut RnnWeights,
        mut grad_features: Option<&mut Matrix>,
    ) {
        let frames = features.rows;
        let input = features.cols;
        let hidden = states.cols;
        let mut carry = vec![0.0; hidden];
        let mut da = vec![0.0; hidden];
        let zero = vec![0.0; hidden];
        for step in (0..frames).rev() {
            let t = if reverse { frames - 1 - step } else { step };
            let h = states.row(t);
            let g = grad_states.row(t);
            for i in 0..hidden {
                da[i] = (g[i] + carry[i]) * (1.0 - h[i] * h[i]);
            }
            let prev: &[f64] = if step == 0 {
                &zero
            } else {
                let tp = if reverse { t + 1 } else { t - 1 };
                states.row(tp)
            };
            let x = features.row(t);
            for i in 0..hidden {
                let d = da[i];
                if d == 0.0 {
                    continue;
                }
                grads.bias[i] += d;
                let wi = &mut grads.w_in[i * input..(i + 1) * input];
                for (w, xv) in wi.iter_mut().zip(x) {
                    *w += d * xv;
                }
                let wr = &mut grads.w_rec[i * hidden..(i + 1) * hidden];
                for (w, pv) in wr.iter_mut().zip(prev) {
                    *w += d * pv;
                }
            }
            carry.iter_mut().for_each(|c| *c = 0.0);
            for i in 0..hidden {
                let d = da[i];
                let row = &self.w_rec[i * hidden..(i + 1) * hidden];
                for j in 0..hidden {
                    carry[j] += row[j] * d;
                }
            }
            if let Some(gf) = grad_features.as_deref_mut() {
                let out = gf.row_mut(t);
                for i in 0..hidden {
                    let d = da[i];
                    let row = &self.w_in[i * input..(i + 1) * input];
                    for j in 0..input {
                        out[j] += row[j] * d;
                    }
                }
            }
        }
    }

    fn tensors(&self) -> [&[f64]; 3] {
        [&self.w_in, &self.w_rec, &self.bias]
    }

    fn tensors_mut(&mut self) -> [&mut [f64]; 3] {
        [&mut self.w_in, &mut self.w_rec, &mut self.bias]
    }
}

/// Miniature bidirectional recurrent CTC recognizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyAsrModel {
    pub version: u32,
    pub alphabet: String,
    pub blank: usize,
    pub frontend: Frontend,
    pub hidden: usize,
    /// Per-bin standardization applied to features before the recurrences.
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub forward_rnn: RnnWeights,
    pub backward_rnn: RnnWeights,
    /// classes × (2·hidden)
    pub out_w: Vec<f64>,
    pub out_b: Vec<f64>,
}

/// Activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Standardized features.
    pub inputs: Matrix,
    pub forward_states: Matrix,
    pub backward_states: Matrix,
}

/// Gradients with the same layout as the model parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGrads {
    pub forward_rnn: RnnWeights,
    pub backward_rnn: RnnWeights,
    pub out_w: Vec<f64>,
    pub out_b: Vec<f64>,
}

impl ModelGrads {
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = Vec::with_capacity(8);
        v.extend(self.forward_rnn.tensors());
        v.extend(self.backward_rnn.tensors());
        v.push(&self.out_w);
        v.push(&self.out_b);
        v
    }

    pub fn add_assign(&mut self, other: &ModelGrads) {
        let pairs = [
            (&mut self.forward_rnn.w_in, &other.forward_rnn.w_in),
            (&mut self.forward_rnn.w_rec, &other.forward_rnn.w_rec),
            (&mut self.forward_rnn.bias, &other.forward_rnn.bias),
            (&mut self.backward_rnn.w_in, &other.backward_rnn.w_in),
            (&mut self.backward_rnn.w_rec, &other.backward_rnn.w_rec),
            (&mut self.backward_rnn.bias, &other.backward_rnn.bias),
            (&mut self.out_w, &other.out_w),
            (&mut self.out_b, &other.out_b),
        ];
        for (a, b) in pairs {
            a.iter_mut().zip(b.iter()).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = Vec::with_capacity(8);
        v.extend(self.forward_rnn.tensors_mut());
        v.extend(self.backward_rnn.tensors_mut());
        v.push(&mut self.out_w);
        v.push(&mut self.out_b);
        v
    }
}

impl ToyAsrModel {
    pub fn zeros(frontend: Frontend, hidden: usize) -> Self {
        let input = frontend.bins();
        let classes = ALPHABET.chars().count() + 1;
        Self {
            version: MODEL_FORMAT_VERSION,
            alphabet: ALPHABET.to_string(),
            blank: BLANK,
            frontend,
            hidden,
            input_mean: vec![0.0; input],
            input_scale: vec![1.0; input],
            forward_rnn: RnnWeights::zeros(input, hidden),
            backward_rnn: RnnWeights::zeros(input, hidden),
            out_w: vec![0.0; classes * 2 * hidden],
            out_b: vec![0.0; classes],
        }
    }

    /// Weights uniform in `[-scale, scale)`, biases zero.
    pub fn random<R: Rng>(frontend: Frontend, hidden: usize, scale: f64, rng: &mut R) -> Self {
        let mut m = Self::zeros(frontend, hidden);
        let input = frontend.bins();
        m.forward_rnn = RnnWeights::random(input, hidden, scale, rng);
        m.backward_rnn = RnnWeights::random(input, hidden, scale, rng);
        for v in m.out_w.iter_mut() {
            *v = rng.gen_range(-scale..scale);
        }
        m
    }

    pub fn classes(&self) -> usize {
        self.out_b.len()
    }

    pub fn input_dim(&self) -> usize {
        self.frontend.bins()
    }

    pub fn zero_grads(&self) -> ModelGrads {
        ModelGrads {
            forward_rnn: RnnWeights::zeros(self.input_dim(), self.hidden),
            backward_rnn: RnnWeights::zeros(self.input_dim(), self.hidden),
            out_w: vec![0.0; self.out_w.len()],
            out_b: vec![0.0; self.out_b.len()],
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = Vec::with_capacity(8);
        v.extend(self.forward_rnn.tensors_mut());
        v.extend(self.backward_rnn.tensors_mut());
        v.push(&mut self.out_w);
        v.push(&mut self.out_b);
        v
    }

    pub fn tensor_sizes(&self) -> Vec<usize> {
        self.zero_grads().tensors().iter().map(|t| t.len()).collect()
    }

    pub fn forward(&self, features: &Matrix) -> Matrix {
        self.forward_with_cache(features).0
    }

    /// Sets the standardization from the per-bin mean and spread of a set
    /// of feature matrices.
    pub fn fit_standardization(&mut self, sets: &[&Matrix]) {
        let dim = self.input_dim();
        let mut sum = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        let mut count = 0.0;
        for m in sets {
            for t in 0..m.rows {
                for (j, &v) in m.row(t).iter().enumerate() {
                    sum[j] += v;
                    sq[j] += v * v;
                }
                count += 1.0;
            }
        }
        if count == 0.0 {
            return;
        }
        for j in 0..dim {
            let mean = sum[j] / count;
            let var = (sq[j] / count - mean * mean).max(0.0);
            self.input_mean[j] = mean;
            self.input_scale[j] = 1.0 / var.sqrt().max(1e-3);
        }
    }

    pub fn standardize(&self, features: &Matrix) -> Matrix {
        let mut x = features.clone();
        for t in 0..x.rows {
            for ((v, m), s) in x.row_mut(t).iter_mut().zip(&self.input_mean).zip(&self.input_scale) {
                *v = (*v - m) * s;
            }
        }
        x
    }

    pub fn forward_with_cache(&self, features: &Matrix) -> (Matrix, ForwardCache) {
        assert_eq!(features.cols, self.input_dim(), "feature width mismatch");
        let inputs = self.standardize(features);
        let fwd = self.forward_rnn.run(&inputs, self.hidden, false);
        let bwd = self.backward_rnn.run(&inputs, self.hidden, true);
        let classes = self.classes();
        let h2 = 2 * self.hidden;
        let mut logits = Matrix::zeros(features.rows, classes);
        let mut joint = vec![0.0; h2];
        for t in 0..features.rows {
            joint[..self.hidden].copy_from_slice(fwd.row(t));
            joint[self.hidden..].copy_from_slice(bwd.row(t));
            let row = logits.row_mut(t);
            for (c, out) in row.iter_mut().enumerate() {
                *out = self.out_b[c] + dot(&self.out_w[c * h2..(c + 1) * h2], &joint);
            }
        }
        (
            logits,
            ForwardCache {
                inputs,
                forward_states: fwd,
                backward_states: bwd,
            },
        )
    }

    /// Gradients of a loss with respect to the parameters and, optionally,
    /// the input features.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_logits: &Matrix,
        want_input_grad: bool,
    ) -> (ModelGrads, Option<Matrix>) {
        let hidden = self.hidden;
        let h2 = 2 * hidden;
        let classes = self.classes();
        let features = &cache.inputs;
        let frames = features.rows;
        let mut grads = self.zero_grads();
        let mut g_fwd = Matrix::zeros(frames, hidden);
        let mut g_bwd = Matrix::zeros(frames, hidden);
        for t in 0..frames {
            let dz = grad_logits.row(t);
            let hf = cache.forward_states.row(t);
            let hb = cache.backward_states.row(t);
            for c in 0..classes {
                let d = dz[c];
                grads.out_b[c] += d;
                let gw = &mut grads.out_w[c * h2..(c + 1) * h2];
                for i in 0..hidden {
                    gw[i] += d * hf[i];
                    gw[hidden + i] += d * hb[i];
                }
                let w = &self.out_w[c * h2..(c + 1) * h2];
                let gf = g_fwd.row_mut(t);
                for i in 0..hidden {
                    gf[i] += w[i] * d;
                }
                let gb = g_bwd.row_mut(t);
                for i in 0..hidden {
                    gb[i] += w[hidden + i] * d;
                }
            }
        }
        let mut grad_features = want_input_grad.then(|| Matrix::zeros(frames, features.cols));
        self.forward_rnn.backprop(
            features,
            &cache.forward_states,
            &g_fwd,
            false,
            &mut grads.forward_rnn,
            grad_features.as_mut(),
        );
        self.backward_rnn.backprop(
            features,
            &cache.backward_states,
            &g_bwd,
            true,
            &mut grads.backward_rnn,
            grad_features.as_mut(),
        );
        if let Some(g) = grad_features.as_mut() {
            for t in 0..frames {
                for (v, s) in g.row_mut(t).iter_mut().zip(&self.input_scale) {
                    *v *= s;
                }
            }
        }
        (grads, grad_features)
    }

    pub fn label_of(&self, c: char) -> Result<usize> {
        self.alphabet
            .chars()
            .position(|a| a == c)
            .map(|i| i + 1)
            .ok_or(Error::OutOfAlphabet(c))
    }

    /// Label sequence of a normalized transcript.
    pub fn encode(&self, text: &Transcript) -> Result<Vec<usize>> {
        text.as_str().chars().map(|c| self.label_of(c)).collect()
    }

    pub fn decode_labels(&self, labels: &[usize]) -> Transcript {
        let chars: Vec<char> = self.alphabet.chars().collect();
        let raw: String = labels
            .iter()
            .filter_map(|&l| l.checked_sub(1).and_then(|i| chars.get(i)))
            .collect();
        normalize_text(&raw)
    }

    /// Best-path decoding of per-frame logits.
    pub fn greedy_decode(&self, logits: &Matrix) -> Transcript {
        self.decode_labels(&best_path(logits, self.blank))
    }

    /// Logits for a real-valued signal.
    pub fn logits_for(&self, signal: &[f64]) -> Result<Matrix> {
        let tape = self.frontend.analyze(signal)?;
        Ok(self.forward(&tape.features))
    }

    pub fn transcribe(&self, clip: &AudioClip) -> Result<Transcript> {
        let features = self.frontend.extract(clip)?;
        Ok(self.greedy_decode(&self.forward(&features)))
    }

    /// CTC loss of `target` for a real-valued signal, its gradient with
    /// respect to every sample, and the decoded transcript.
    pub fn loss_and_signal_grad(
        &self,
        signal: &[f64],
        target: &[usize],
    ) -> Result<SignalGrad> {
        let tape = self.frontend.analyze(signal)?;
        let (logits, cache) = self.forward_with_cache(&tape.features);
        let (loss, grad_logits) = ctc_loss_and_grad(&logits, target, self.blank)?;
        let (_, grad_features) = self.backward(&cache, &grad_logits, true);
        let grad = tape.backward(&self.frontend, &grad_features.expect("requested"));
        Ok(SignalGrad {
            loss,
            grad,
            decoded: self.greedy_decode(&logits),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelFormat(format!("unsupported version {}", self.version)));
        }
        let classes = self.alphabet.chars().count() + 1;
        let input = self.input_dim();
        let h = self.hidden;
        let ok = self.out_b.len() == classes
            && self.out_w.len() == classes * 2 * h
            && self.input_mean.len() == input
            && self.input_scale.len() == input
            && [&self.forward_rnn, &self.backward_rnn].iter().all(|r| {
                r.w_in.len() == h * input && r.w_rec.len() == h * h && r.bias.len() == h
            });
        if !ok {
            return Err(Error::ModelFormat("tensor shapes do not match header".into()));
        }
        let finite = self
            .clone()
            .tensors_mut()
            .iter()
            .map(|t| &**t)
            .chain([self.input_mean.as_slice(), self.input_scale.as_slice()])
            .all(|t| t.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::ModelFormat("non-finite weight".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self =
            serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
        model.validate()?;
        Ok(model)
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

/// Result of [`ToyAsrModel::loss_and_signal_grad`].
#[derive(Clone, Debug)]
pub struct SignalGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub decoded: Transcript,
}

/// Gradient of `ctc_loss(forward(features(clip)), target)` with respect to
/// each normalized sample of `clip`.
pub fn waveform_grad(model: &ToyAsrModel, clip: &AudioClip, target: &Transcript) -> Result<Vec<f64>> {
    let labels = model.encode(target)?;
    Ok(model.loss_and_signal_grad(&clip.to_real().values, &labels)?.grad)
}
