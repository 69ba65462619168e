//! Targeted optimization attacks on the toy recognizer: the plain attack
//! `min ‖δ‖² + c·l(x+δ, t)`, adaptive versions that optimize through a
//! defense, and the segment, concatenation and combination attacks aimed at
//! the temporal-dependency detector.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{real_to_pcm, AudioClip, RealWave, PCM_SCALE};
use crate::error::{Error, Result};
use crate::optim::Adam;
use crate::td::prefix_len;
use crate::text::Transcript;
use crate::toy_asr::{random_phrase, ToyAsrModel};
use crate::transforms::{quantize, smooth, smooth_real, smooth_real_adjoint, Resampler, TransformSpec};

pub const DEFAULT_C_SCHEDULE: [f64; 4] = [0.1, 1.0, 10.0, 100.0];
pub const DEFAULT_ITERATIONS: usize = 1000;
pub const DEFAULT_STEP_SIZE: f64 = 0.01;

/// Prefix fractions the combination attack protects.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KSet {
    Fixed { ks: Vec<f64> },
    /// A fresh `k ~ Uniform(a, b)` every iteration.
    Rand { a: f64, b: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Variant {
    Plain,
    Segment { k: f64 },
    ConcatSplit { k: f64 },
    ConcatSilence { k: f64 },
    Combination { k_a: KSet },
}

impl Variant {
    pub fn label(&self) -> String {
        match self {
            Self::Plain => "plain".into(),
            Self::Segment { k } => format!("segment({k:.4})"),
            Self::ConcatSplit { k } => format!("concat_split({k:.4})"),
            Self::ConcatSilence { k } => format!("concat_silence({k:.4})"),
            Self::Combination { k_a: KSet::Fixed { ks } } => {
                let ks: Vec<String> = ks.iter().map(|k| format!("{k:.4}")).collect();
                format!("combination({})", ks.join(","))
            }
            Self::Combination { k_a: KSet::Rand { a, b } } => format!("combination(rand({a},{b}))"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub target: Transcript,
    pub c_schedule: Vec<f64>,
    pub iterations: usize,
    /// Adam learning rate in normalized amplitude units.
    pub step_size: f64,
    /// Defense the attack optimizes through; `identity` for none.
    pub adaptive: TransformSpec,
    pub variant: Variant,
    pub seed: u64,
}

impl AttackConfig {
    pub fn new(target: Transcript) -> Self {
        Self {
            target,
            c_schedule: DEFAULT_C_SCHEDULE.to_vec(),
            iterations: DEFAULT_ITERATIONS,
            step_size: DEFAULT_STEP_SIZE,
            adaptive: TransformSpec::Identity,
            variant: Variant::Plain,
            seed: 0,
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_adaptive(mut self, adaptive: TransformSpec) -> Self {
        self.adaptive = adaptive;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.c_schedule.is_empty() {
            return bad("empty c schedule".into());
        }
        if self.c_schedule.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return bad("c values must be finite and non-negative".into());
        }
        if self.c_schedule.windows(2).any(|w| w[0] >= w[1]) {
            return bad("c schedule must be strictly ascending".into());
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad("step size must be positive".into());
        }
        self.adaptive.validate()?;
        if matches!(self.adaptive, TransformSpec::Autoencoder { .. }) {
            return bad("no adaptive attack through the autoencoder".into());
        }
        let open = |k: f64| k > 0.0 && k < 1.0;
        match &self.variant {
            Variant::Plain => Ok(()),
            Variant::Segment { k } | Variant::ConcatSplit { k } | Variant::ConcatSilence { k } => {
                if !open(*k) {
                    return bad(format!("k={k} not in (0,1)"));
                }
                if self.adaptive != TransformSpec::Identity {
                    return bad("segment and concatenation attacks are not adaptive".into());
                }
                Ok(())
            }
            Variant::Combination { k_a: KSet::Fixed { ks } } => {
                if ks.is_empty() || ks.iter().any(|&k| !open(k)) {
                    return bad("k_A must be a non-empty set of fractions in (0,1)".into());
                }
                Ok(())
            }
            Variant::Combination { k_a: KSet::Rand { a, b } } => {
                if !(open(*a) && open(*b) && a < b) {
                    return bad(format!("Rand({a},{b}) needs 0 < a < b < 1"));
                }
                Ok(())
            }
        }
    }
}

/// Outcome of attacking one independently optimized part.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartOutcome {
    pub target: Transcript,
    pub achieved: Transcript,
    pub success: bool,
    pub iterations: usize,
    pub c_used: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub id: String,
    pub variant: String,
    pub target: Transcript,
    pub success: bool,
    /// Decode used for the success decision (after the defense for adaptive
    /// attacks).
    pub achieved: Transcript,
    /// `dB_x(δ)`; `-inf` when δ is all zero.
    pub db_distortion: f64,
    pub c_used: f64,
    pub iterations: usize,
    /// Prefix decodes checked by the combination attack, as `(k, decode)`.
    pub prefix_decodes: Vec<(f64, Transcript)>,
    /// Per-part outcomes of concatenation attacks.
    pub parts: Vec<PartOutcome>,
    /// Best objective so far at every update of the last `c` tried.
    #[serde(skip)]
    pub objective_trace: Vec<f64>,
    /// `x + δ` as played, before any defense.
    #[serde(skip)]
    pub adversarial: Option<AudioClip>,
    #[serde(skip)]
    pub delta: Option<RealWave>,
}

/// Flat JSON record of an attack run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackRecord {
    pub id: String,
    pub variant: String,
    pub target: Transcript,
    pub achieved: Transcript,
    pub success: bool,
    /// Decimal string, `-inf` for a zero perturbation.
    pub db: String,
    pub c: f64,
    pub iterations: usize,
}

impl AttackResult {
    pub fn adversarial_clip(&self) -> &AudioClip {
        self.adversarial.as_ref().expect("attack produced audio")
    }

    pub fn to_record(&self) -> AttackRecord {
        AttackRecord {
            id: self.id.clone(),
            variant: self.variant.clone(),
            target: self.target.clone(),
            achieved: self.achieved.clone(),
            success: self.success,
            db: format_db(self.db_distortion),
            c: self.c_used,
            iterations: self.iterations,
        }
    }
}

pub fn format_db(db: f64) -> String {
    if db.is_finite() {
        format!("{db:.4}")
    } else if db < 0.0 {
        "-inf".into()
    } else {
        "nan".into()
    }
}

/// `dB(δ) - dB(x)` on integer amplitudes, `-inf` when δ is zero.
pub fn perturbation_db(x: &[i16], adv: &[i16]) -> f64 {
    let peak_d = x
        .iter()
        .zip(adv)
        .map(|(&a, &b)| (i32::from(b) - i32::from(a)).unsigned_abs())
        .max()
        .unwrap_or(0);
    let peak_x = x.iter().map(|&a| i32::from(a).unsigned_abs()).max().unwrap_or(0);
    if peak_d == 0 {
        return f64::NEG_INFINITY;
    }
    if peak_x == 0 {
        return f64::INFINITY;
    }
    20.0 * f64::from(peak_d).log10() - 20.0 * f64::from(peak_x).log10()
}

/// Random target of `words` words (2–5 letters each) for one clip; a pure
/// function of `(seed, clip id)`.
pub fn random_target(seed: u64, clip_id: &str, words: usize) -> Transcript {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ crate::td::fnv1a(clip_id.as_bytes()));
    random_phrase(&mut rng, words, 2, 5)
}

/// First `ceil(k·words(t))` words of `t`.
pub fn prefix_target(target: &Transcript, k: f64) -> Transcript {
    target.first_words((k * target.word_count() as f64).ceil() as usize)
}

const MAX_PCM: f64 = 32767.0 / PCM_SCALE;

enum Param {
    Direct,
    Quantized { q: f64 },
    Decimated(Resampler),
}

struct PrefixTerm {
    len: usize,
    labels: Vec<usize>,
    text: Transcript,
    k: f64,
}

enum Prefixes {
    None,
    Fixed(Vec<PrefixTerm>),
    Rand { a: f64, b: f64 },
}

struct Evaluation {
    success: bool,
    decoded: Transcript,
    prefix_decodes: Vec<(f64, Transcript)>,
    objective: f64,
    grad: Vec<f64>,
    adv: Vec<i16>,
}

struct Engine<'a> {
    model: &'a ToyAsrModel,
    x: Vec<i16>,
    target: Vec<usize>,
    target_text: Transcript,
    transform: TransformSpec,
    param: Param,
    /// Parameters beyond this index are pinned to zero.
    active: usize,
    prefixes: Prefixes,
    rng: ChaCha8Rng,
}

struct Run {
    success: bool,
    decoded: Transcript,
    prefix_decodes: Vec<(f64, Transcript)>,
    adv: Vec<i16>,
    c_used: f64,
    iterations: usize,
    trace: Vec<f64>,
}

impl<'a> Engine<'a> {
    fn new(
        model: &'a ToyAsrModel,
        x: &AudioClip,
        target: &Transcript,
        transform: TransformSpec,
        active: Option<usize>,
        prefixes: Prefixes,
        seed: u64,
    ) -> Result<Self> {
        let labels = model.encode(target)?;
        let frames = model.frontend.frames(x.len());
        let need = crate::toy_asr::min_frames(&labels);
        if x.len() < model.frontend.frame_length || frames < need {
            return Err(Error::TargetTooLong { need, have: frames });
        }
        let n = x.len();
        let param = match transform {
            TransformSpec::Quantize { q } => Param::Quantized { q: f64::from(q) },
            TransformSpec::Downsample { factor } => {
                if n <= crate::transforms::RECOVERY_TAPS {
                    return Err(Error::ClipTooShort {
                        len: n,
                        min: crate::transforms::RECOVERY_TAPS + 1,
                    });
                }
                Param::Decimated(Resampler::new(factor, x.sample_rate))
            }
            _ => Param::Direct,
        };
        let param_len = match &param {
            Param::Decimated(r) => n.div_ceil(r.factor),
            _ => n,
        };
        Ok(Self {
            model,
            x: x.samples.clone(),
            target: labels,
            target_text: target.clone(),
            transform,
            param,
            active: active.unwrap_or(param_len).min(param_len),
            prefixes,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    fn param_len(&self) -> usize {
        match &self.param {
            Param::Decimated(r) => self.x.len().div_ceil(r.factor),
            _ => self.x.len(),
        }
    }

    fn learning_rate(&self, step: f64) -> f64 {
        match self.param {
            Param::Quantized { q } => step * PCM_SCALE / q,
            _ => step,
        }
    }

    /// Full-rate perturbation in normalized units.
    fn delta(&self, p: &[f64]) -> Vec<f64> {
        let n = self.x.len();
        match &self.param {
            Param::Direct => p.to_vec(),
            Param::Quantized { q } => p.iter().map(|u| q * u.round() / PCM_SCALE).collect(),
            Param::Decimated(r) => r.recover(p, n),
        }
    }

    fn defend(&self, adv: &[i16]) -> Vec<i16> {
        let clip = AudioClip {
            id: String::new(),
            samples: adv.to_vec(),
            sample_rate: self.model.frontend.sample_rate,
        };
        match self.transform {
            TransformSpec::Quantize { q } => quantize(&clip, q).samples,
            TransformSpec::Smooth { smooth_kind, k } => smooth(&clip, smooth_kind, k).samples,
            TransformSpec::Downsample { .. } => match &self.param {
                Param::Decimated(r) => real_to_pcm(&r.apply(&clip.to_real().values)),
                _ => unreachable!("downsample uses a decimated parameter"),
            },
            _ => clip.samples,
        }
    }

    fn evaluate(&mut self, p: &[f64], c: f64) -> Result<Evaluation> {
        let delta = self.delta(p);
        let adv: Vec<i16> = self
            .x
            .iter()
            .zip(&delta)
            .map(|(&x, &d)| (f64::from(x) + d * PCM_SCALE).round().clamp(-32768.0, 32767.0) as i16)
            .collect();
        let defended = self.defend(&adv);
        let input: Vec<f64> = defended.iter().map(|&s| f64::from(s) / PCM_SCALE).collect();

        let full = self.model.loss_and_signal_grad(&input, &self.target)?;
        let mut loss = full.loss;
        let mut g_in: Vec<f64> = full.grad.iter().map(|g| c * g).collect();
        let mut success = full.decoded == self.target_text;
        let mut prefix_decodes = Vec::new();

        let sampled;
        let terms: &[PrefixTerm] = match &self.prefixes {
            Prefixes::None => &[],
            Prefixes::Fixed(terms) => terms,
            Prefixes::Rand { a, b } => {
                let k = self.rng.gen_range(*a..*b);
                let text = prefix_target(&self.target_text, k);
                sampled = [PrefixTerm {
                    len: prefix_len(self.x.len(), k),
                    labels: self.model.encode(&text)?,
                    text,
                    k,
                }];
                &sampled
            }
        };
        let fixed = matches!(self.prefixes, Prefixes::Fixed(_));
        for term in terms {
            match self.model.loss_and_signal_grad(&input[..term.len], &term.labels) {
                Ok(sg) => {
                    loss += sg.loss;
                    for (g, d) in g_in.iter_mut().zip(&sg.grad) {
                        *g += c * d;
                    }
                    if fixed {
                        success &= sg.decoded == term.text;
                        prefix_decodes.push((term.k, sg.decoded));
                    }
                }
                // a random prefix too short for its words contributes nothing
                Err(Error::TargetTooLong { .. } | Error::ClipTooShort { .. }) if !fixed => {}
                Err(e) => return Err(e),
            }
        }

        // back through the defense
        let g_adv = match (&self.transform, &self.param) {
            (TransformSpec::Smooth { smooth_kind, k }, _) => {
                let adv_real: Vec<f64> = adv.iter().map(|&s| f64::from(s) / PCM_SCALE).collect();
                let (_, routing) = smooth_real(&adv_real, *smooth_kind, *k);
                smooth_real_adjoint(&g_in, *smooth_kind, *k, &routing)
            }
            (_, Param::Decimated(r)) => r.apply(&g_in),
            _ => g_in,
        };
        let distortion: f64 = delta.iter().map(|d| d * d).sum();
        let g_delta: Vec<f64> = g_adv.iter().zip(&delta).map(|(g, d)| g + 2.0 * d).collect();
        let mut grad = match &self.param {
            Param::Direct => g_delta,
            Param::Quantized { q } => g_delta.iter().map(|g| g * q / PCM_SCALE).collect(),
            Param::Decimated(r) => r.recover_adjoint(&g_delta),
        };
        grad[self.active..].iter_mut().for_each(|g| *g = 0.0);
        Ok(Evaluation {
            success,
            decoded: full.decoded,
            prefix_decodes,
            objective: distortion + c * loss,
            grad,
            adv,
        })
    }

    /// Keeps `x + δ` inside the PCM range for directly parameterized δ.
    fn project(&self, p: &mut [f64]) {
        if let Param::Direct = self.param {
            for (v, &x) in p.iter_mut().zip(&self.x) {
                let xr = f64::from(x) / PCM_SCALE;
                *v = v.clamp(-1.0 - xr, MAX_PCM - xr);
            }
        }
    }

    fn run(&mut self, cfg: &AttackConfig) -> Result<Run> {
        let mut p = vec![0.0; self.param_len()];
        let lr = self.learning_rate(cfg.step_size);
        let mut iterations = 0;
        let mut trace = Vec::new();
        let mut last = None;
        for &c in &cfg.c_schedule {
            let mut adam = Adam::new(lr, &[p.len()]);
            trace.clear();
            let mut best = f64::INFINITY;
            for it in 0..=cfg.iterations {
                let ev = self.evaluate(&p, c)?;
                if ev.success {
                    return Ok(Run {
                        success: true,
                        decoded: ev.decoded,
                        prefix_decodes: ev.prefix_decodes,
                        adv: ev.adv,
                        c_used: c,
                        iterations,
                        trace,
                    });
                }
                if it == cfg.iterations {
                    last = Some((ev, c));
                    break;
                }
                best = best.min(ev.objective);
                trace.push(best);
                adam.update(&mut [&mut p], &[&ev.grad]);
                p[self.active..].iter_mut().for_each(|v| *v = 0.0);
                self.project(&mut p);
                iterations += 1;
            }
        }
        let (ev, c) = last.expect("non-empty schedule");
        Ok(Run {
            success: false,
            decoded: ev.decoded,
            prefix_decodes: ev.prefix_decodes,
            adv: ev.adv,
            c_used: c,
            iterations,
            trace,
        })
    }
}

fn finish(clip: &AudioClip, cfg: &AttackConfig, run: Run) -> AttackResult {
    let adv = clip.with_samples(run.adv);
    let delta = RealWave {
        values: clip
            .samples
            .iter()
            .zip(&adv.samples)
            .map(|(&x, &a)| (f64::from(a) - f64::from(x)) / PCM_SCALE)
            .collect(),
        sample_rate: clip.sample_rate,
    };
    AttackResult {
        id: clip.id.clone(),
        variant: variant_label(cfg),
        target: cfg.target.clone(),
        success: run.success,
        achieved: run.decoded,
        db_distortion: perturbation_db(&clip.samples, &adv.samples),
        c_used: run.c_used,
        iterations: run.iterations,
        prefix_decodes: run.prefix_decodes,
        parts: Vec::new(),
        objective_trace: run.trace,
        adversarial: Some(adv),
        delta: Some(delta),
    }
}

fn variant_label(cfg: &AttackConfig) -> String {
    match cfg.adaptive {
        TransformSpec::Identity => cfg.variant.label(),
        t => format!("{}+adaptive-{}", cfg.variant.label(), t.label()),
    }
}

fn expect_variant(cfg: &AttackConfig, ok: bool, what: &str) -> Result<()> {
    cfg.validate()?;
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("config variant {} is not {what}", cfg.variant.label())))
    }
}

/// Plain attack with no defense in the loop.
pub fn opt_attack(model: &ToyAsrModel, clip: &AudioClip, cfg: &AttackConfig) -> Result<AttackResult> {
    expect_variant(
        cfg,
        cfg.variant == Variant::Plain && cfg.adaptive == TransformSpec::Identity,
        "a plain non-adaptive attack",
    )?;
    run_attack(model, clip, cfg)
}

/// Plain attack optimized through `cfg.adaptive`; success is judged on the
/// defended audio.
pub fn adaptive_transform_attack(model: &ToyAsrModel, clip: &AudioClip, cfg: &AttackConfig) -> Result<AttackResult> {
    expect_variant(cfg, cfg.variant == Variant::Plain, "plain")?;
    run_attack(model, clip, cfg)
}

/// Perturbs only the first `floor(k·N)` samples, targeting the whole phrase.
pub fn segment_attack(model: &ToyAsrModel, clip: &AudioClip, cfg: &AttackConfig) -> Result<AttackResult> {
    expect_variant(cfg, matches!(cfg.variant, Variant::Segment { .. }), "segment")?;
    run_attack(model, clip, cfg)
}

/// Attacks the prefix and the remainder as separate clips and joins them.
pub fn concat_attack(model: &ToyAsrModel, clip: &AudioClip, cfg: &AttackConfig) -> Result<AttackResult> {
    expect_variant(
        cfg,
        matches!(cfg.variant, Variant::ConcatSplit { .. } | Variant::ConcatSilence { .. }),
        "a concatenation attack",
    )?;
    run_attack(model, clip, cfg)
}

/// Adds prefix CTC terms so prefixes decode consistently with the target.
pub fn combination_attack(model: &ToyAsrModel, clip: &AudioClip, cfg: &AttackConfig) -> Result<AttackResult> {
    expect_variant(cfg, matches!(cfg.variant, Variant::Combination { .. }), "combination")?;
    run_attack(model, clip, cfg)
}

/// Dispatches on `cfg.variant`.
pub fn run_attack(model: &ToyAsrModel, clip: &AudioClip, cfg: &AttackConfig) -> Result<AttackResult> {
    cfg.validate()?;
    match &cfg.variant {
        Variant::Plain => {
            let mut engine = Engine::new(model, clip, &cfg.target, cfg.adaptive, None, Prefixes::None, cfg.seed)?;
            Ok(finish(clip, cfg, engine.run(cfg)?))
        }
        Variant::Segment { k } => {
            let len = prefix_len(clip.len(), *k);
            let mut engine =
                Engine::new(model, clip, &cfg.target, TransformSpec::Identity, Some(len), Prefixes::None, cfg.seed)?;
            Ok(finish(clip, cfg, engine.run(cfg)?))
        }
        Variant::Combination { k_a } => {
            let prefixes = match k_a {
                KSet::Fixed { ks } => Prefixes::Fixed(
                    ks.iter()
                        .map(|&k| {
                            let text = prefix_target(&cfg.target, k);
                            let len = prefix_len(clip.len(), k);
                            let labels = model.encode(&text)?;
                            let frames = model.frontend.frames(len);
                            let need = crate::toy_asr::min_frames(&labels);
                            if len < model.frontend.frame_length || frames < need {
                                return Err(Error::TargetTooLong { need, have: frames });
                            }
                            Ok(PrefixTerm { len, labels, text, k })
                        })
                        .collect::<Result<_>>()?,
                ),
                KSet::Rand { a, b } => Prefixes::Rand { a: *a, b: *b },
            };
            let mut engine = Engine::new(model, clip, &cfg.target, cfg.adaptive, None, prefixes, cfg.seed)?;
            Ok(finish(clip, cfg, engine.run(cfg)?))
        }
        Variant::ConcatSplit { k } | Variant::ConcatSilence { k } => {
            let len = prefix_len(clip.len(), *k);
            let (t1, t2) = match cfg.variant {
                Variant::ConcatSplit { .. } => {
                    let head = prefix_target(&cfg.target, *k);
                    let words = cfg.target.words();
                    let tail = Transcript::new(&words[head.word_count()..].join(" "));
                    (head, tail)
                }
                _ => (cfg.target.clone(), Transcript::empty()),
            };
            let first = clip.with_samples(clip.samples[..len].to_vec());
            let second = clip.with_samples(clip.samples[len..].to_vec());
            let mut parts = Vec::new();
            let mut joined = Vec::with_capacity(clip.len());
            let mut iterations = 0;
            let mut c_used: f64 = 0.0;
            for (part, target) in [(first, t1), (second, t2)] {
                let mut engine =
                    Engine::new(model, &part, &target, TransformSpec::Identity, None, Prefixes::None, cfg.seed)?;
                let run = engine.run(cfg)?;
                iterations += run.iterations;
                c_used = c_used.max(run.c_used);
                parts.push(PartOutcome {
                    target,
                    achieved: run.decoded,
                    success: run.success,
                    iterations: run.iterations,
                    c_used: run.c_used,
                });
                joined.extend_from_slice(&run.adv);
            }
            let adv = clip.with_samples(joined);
            let achieved = model.transcribe(&adv)?;
            let run = Run {
                success: achieved == cfg.target,
                decoded: achieved,
                prefix_decodes: Vec::new(),
                adv: adv.samples,
                c_used,
                iterations,
                trace: Vec::new(),
            };
            let mut result = finish(clip, cfg, run);
            result.parts = parts;
            Ok(result)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy_asr::{synthesize, Frontend, SynthesisSpec};
    use crate::transforms::SmoothKind;

    fn model() -> ToyAsrModel {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        ToyAsrModel::random(Frontend::default(), 6, 0.3, &mut rng)
    }

    fn clip() -> AudioClip {
        synthesize(&Transcript::new("abc de"), &SynthesisSpec::with_seed(2)).unwrap()
    }

    fn short(cfg: AttackConfig) -> AttackConfig {
        AttackConfig {
            iterations: 5,
            c_schedule: vec![1.0, 10.0],
            ..cfg
        }
    }

    #[test]
    fn already_satisfied_target_needs_no_perturbation() {
        let m = model();
        let x = clip();
        let current = m.transcribe(&x).unwrap();
        let r = opt_attack(&m, &x, &AttackConfig::new(current.clone())).unwrap();
        assert!(r.success);
        assert_eq!(r.achieved, current);
        assert_eq!(r.iterations, 0);
        assert!(r.delta.as_ref().unwrap().values.iter().all(|&d| d == 0.0));
        assert_eq!(r.db_distortion, f64::NEG_INFINITY);
        assert_eq!(r.to_record().db, "-inf");
    }

    #[test]
    fn zero_c_never_moves() {
        let m = model();
        let x = clip();
        let mut target = Transcript::new("jihgf");
        if m.transcribe(&x).unwrap() == target {
            target = Transcript::new("jigf");
        }
        let cfg = AttackConfig {
            c_schedule: vec![0.0],
            iterations: 20,
            ..AttackConfig::new(target)
        };
        let r = opt_attack(&m, &x, &cfg).unwrap();
        assert!(!r.success);
        assert_eq!(r.adversarial_clip(), &x);
    }

    #[test]
    fn quantized_steps_are_multiples_of_q() {
        let m = model();
        let x = clip();
        let cfg = short(AttackConfig::new(Transcript::new("jj ii")).with_adaptive(TransformSpec::Quantize { q: 256 }));
        let r = adaptive_transform_attack(&m, &x, &cfg).unwrap();
        assert!(r.iterations > 0);
        let adv = r.adversarial_clip();
        let mut moved = false;
        for (&a, &b) in x.samples.iter().zip(&adv.samples) {
            let d = i32::from(b) - i32::from(a);
            moved |= d != 0;
            assert!(d % 256 == 0 || b == 32767 || b == -32768, "delta {d}");
        }
        assert!(moved);
    }

    #[test]
    fn segment_mask_is_exact() {
        let m = model();
        let x = clip();
        let cfg = short(AttackConfig::new(Transcript::new("jj ii")).with_variant(Variant::Segment { k: 0.5 }));
        let r = segment_attack(&m, &x, &cfg).unwrap();
        let len = prefix_len(x.len(), 0.5);
        let d = r.delta.unwrap().values;
        assert!(d[len..].iter().all(|&v| v == 0.0));
        assert!(d[..len].iter().any(|&v| v != 0.0));
    }

    #[test]
    fn adaptive_modes_run_and_are_deterministic() {
        let m = model();
        let x = clip();
        for t in [
            TransformSpec::Downsample { factor: 2 },
            TransformSpec::Smooth { smooth_kind: SmoothKind::Median, k: 4 },
            TransformSpec::Smooth { smooth_kind: SmoothKind::Average, k: 3 },
        ] {
            let cfg = short(AttackConfig::new(Transcript::new("jj ii")).with_adaptive(t));
            let a = adaptive_transform_attack(&m, &x, &cfg).unwrap();
            let b = adaptive_transform_attack(&m, &x, &cfg).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.adversarial_clip().len(), x.len());
        }
    }

    #[test]
    fn best_objective_trace_is_monotone() {
        let m = model();
        let cfg = short(AttackConfig::new(Transcript::new("jj ii")));
        let r = opt_attack(&m, &clip(), &cfg).unwrap();
        assert!(r.objective_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn combination_and_concat_run() {
        let m = model();
        let x = clip();
        let target = Transcript::new("ab cd");
        let fixed = short(AttackConfig::new(target.clone()).with_variant(Variant::Combination {
            k_a: KSet::Fixed { ks: vec![0.5] },
        }));
        let r = combination_attack(&m, &x, &fixed).unwrap();
        assert_eq!(r.prefix_decodes.len(), 1);
        let rand = short(AttackConfig::new(target.clone()).with_variant(Variant::Combination {
            k_a: KSet::Rand { a: 0.3, b: 0.8 },
        }));
        assert_eq!(
            combination_attack(&m, &x, &rand).unwrap(),
            combination_attack(&m, &x, &rand).unwrap()
        );
        let split = short(AttackConfig::new(target.clone()).with_variant(Variant::ConcatSplit { k: 0.5 }));
        let r = concat_attack(&m, &x, &split).unwrap();
        assert_eq!(r.parts.len(), 2);
        assert_eq!(r.parts[0].target, Transcript::new("ab"));
        assert_eq!(r.parts[1].target, Transcript::new("cd"));
        let silence = short(AttackConfig::new(target).with_variant(Variant::ConcatSilence { k: 0.5 }));
        let r = concat_attack(&m, &x, &silence).unwrap();
        assert_eq!(r.parts[1].target, Transcript::empty());
        assert_eq!(r.parts[1].success, r.parts[1].achieved.is_empty());
    }

    #[test]
    fn config_validation() {
        let base = AttackConfig::new(Transcript::new("ab"));
        assert!(base.validate().is_ok());
        let descending = AttackConfig {
            c_schedule: vec![1.0, 0.5],
            ..base.clone()
        };
        assert!(descending.validate().is_err());
        assert!(base.clone().with_variant(Variant::Segment { k: 1.0 }).validate().is_err());
        assert!(base
            .clone()
            .with_variant(Variant::Segment { k: 0.5 })
            .with_adaptive(TransformSpec::Quantize { q: 256 })
            .validate()
            .is_err());
        assert!(opt_attack(&model(), &clip(), &base.clone().with_variant(Variant::Segment { k: 0.5 })).is_err());
        let too_long = AttackConfig::new(Transcript::new(&"ab ".repeat(40)));
        assert!(matches!(
            opt_attack(&model(), &clip(), &too_long),
            Err(Error::TargetTooLong { .. })
        ));
    }

    #[test]
    fn prefix_targets_round_up() {
        let t = Transcript::new("ab cd ef");
        assert_eq!(prefix_target(&t, 0.5), Transcript::new("ab cd"));
        assert_eq!(prefix_target(&t, 2.0 / 3.0), Transcript::new("ab cd"));
        assert_eq!(prefix_target(&Transcript::new("ab cd"), 0.5), Transcript::new("ab"));
    }

    #[test]
    fn db_of_perturbation() {
        assert_eq!(perturbation_db(&[100, -200], &[100, -200]), f64::NEG_INFINITY);
        let d = perturbation_db(&[1000, 0], &[1000, 10]);
        assert!((d + 40.0).abs() < 1e-12);
    }
}
