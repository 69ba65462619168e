//! End-to-end acceptance checks. Each test prints one PASS/FAIL line
//! (written straight to stderr so it shows without `--nocapture`). A FAIL
//! verdict is reported, not raised; setup errors still panic.
//!
//! Criteria 7-12 share one trained toy model and 20 held-out clips with
//! random 2-word targets; the model and every attack set are computed once.

use std::fmt::Display;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use tempdep_core::attacks::{random_target, run_attack, AttackConfig, AttackResult, KSet, Variant};
use tempdep_core::audio::{write_wav, AudioClip};
use tempdep_core::backend::AsrBackend;
use tempdep_core::eval::{auc, auc_ratio, load_manifest, roc_area, roc_curve, ClipRecord};
use tempdep_core::matrix::Matrix;
use tempdep_core::td::{detect_batch, KChoice, Label, Metric, TdConfig};
use tempdep_core::text::{edit_distance, Transcript};
use tempdep_core::toy_asr::{
    corpus_cer, ctc_backward, ctc_loss, min_frames, standard_split, train, synthesize, Frontend, SynthesisSpec,
    ToyAsrModel, TrainConfig,
};
use tempdep_core::transforms::{downsample_defense, quantize, smooth, SmoothKind, TransformSpec};

const SEED: u64 = 0;
const CLIPS: usize = 20;

fn verdict(n: u32, name: &str, pass: bool, detail: impl Display) {
    let line = format!(
        "criterion {n:>2} [{}] {name}: {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn note(line: impl Display) {
    let _ = std::io::stderr().write_all(format!("    {line}\n").as_bytes());
}

struct Testbed {
    model: ToyAsrModel,
    model_json: String,
    train_secs: f64,
    held_out_cer: f64,
    clips: Vec<AudioClip>,
    targets: Vec<Transcript>,
}

fn testbed() -> &'static Testbed {
    static CELL: OnceLock<Testbed> = OnceLock::new();
    CELL.get_or_init(|| {
        let (train_set, held) = standard_split(SEED);
        let start = Instant::now();
        let (model, _) = train(&train_set, &TrainConfig { seed: SEED, ..TrainConfig::default() }).unwrap();
        let train_secs = start.elapsed().as_secs_f64();
        let held_out_cer = corpus_cer(&model, &held).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(SEED);
        let mut picks = sample(&mut rng, held.len(), CLIPS).into_vec();
        picks.sort_unstable();
        let clips: Vec<AudioClip> = picks.iter().map(|&i| held[i].synthesize().unwrap()).collect();
        let targets = clips.iter().map(|c| random_target(SEED, &c.id, 2)).collect();
        Testbed {
            model_json: model.to_json(),
            model,
            train_secs,
            held_out_cer,
            clips,
            targets,
        }
    })
}

fn attack_all(cfg_for: impl Fn(Transcript) -> AttackConfig + Sync) -> Vec<AttackResult> {
    let tb = testbed();
    tb.clips
        .par_iter()
        .zip(&tb.targets)
        .map(|(clip, target)| run_attack(&tb.model, clip, &cfg_for(target.clone())).unwrap())
        .collect()
}

fn plain_results() -> &'static [AttackResult] {
    static CELL: OnceLock<Vec<AttackResult>> = OnceLock::new();
    CELL.get_or_init(|| attack_all(AttackConfig::new))
}

fn combination_results() -> &'static [AttackResult] {
    static CELL: OnceLock<Vec<AttackResult>> = OnceLock::new();
    CELL.get_or_init(|| {
        attack_all(|t| {
            AttackConfig::new(t).with_variant(Variant::Combination {
                k_a: KSet::Fixed { ks: vec![0.5] },
            })
        })
    })
}

fn success_rate(results: &[AttackResult]) -> f64 {
    results.iter().filter(|r| r.success).count() as f64 / results.len() as f64
}

/// TD scores of the 20 benign clips against the successful adversarial clips.
fn td_scores(adversarial: &[AttackResult], k: KChoice, metric: Metric) -> Vec<(f64, Label)> {
    let tb = testbed();
    let mut clips: Vec<(AudioClip, Label)> = tb.clips.iter().map(|c| (c.clone(), Label::Benign)).collect();
    for r in adversarial.iter().filter(|r| r.success) {
        let mut c = r.adversarial_clip().clone();
        c.id = format!("{}-adv", c.id);
        clips.push((c, Label::Adversarial));
    }
    let cfg = TdConfig {
        seed: SEED,
        ..TdConfig::new(k, metric)
    };
    let backend = AsrBackend::toy(tb.model.clone());
    detect_batch(&backend, &clips, &cfg)
        .into_iter()
        .map(|r| (r.score.expect("toy scoring succeeds"), r.label))
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(", ")
}

#[test]
fn criterion_01_edit_distance_oracle() {
    fn brute(a: &[u8], b: &[u8]) -> usize {
        match (a, b) {
            ([], _) => b.len(),
            (_, []) => a.len(),
            ([x, ra @ ..], [y, rb @ ..]) => {
                let sub = brute(ra, rb) + usize::from(x != y);
                sub.min(brute(ra, b) + 1).min(brute(a, rb) + 1)
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut mismatches = 0;
    for _ in 0..1000 {
        let word = |rng: &mut ChaCha8Rng| -> Vec<u8> {
            let n = rng.gen_range(0..=8);
            (0..n).map(|_| rng.gen_range(0..3u8)).collect()
        };
        let (a, b) = (word(&mut rng), word(&mut rng));
        if edit_distance(&a, &b).distance() != brute(&a, &b) {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        1,
        "edit distance equals brute-force recursion",
        mismatches == 0 && secs < 5.0,
        format!("1000 pairs, {mismatches} mismatches, {secs:.2} s"),
    );
}

fn brute_ctc(logits: &Matrix, target: &[usize]) -> f64 {
    let (t_len, classes) = (logits.rows, logits.cols);
    let probs: Vec<Vec<f64>> = (0..t_len)
        .map(|t| {
            let row = logits.row(t);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
            row.iter().map(|v| (v - m).exp() / z).collect()
        })
        .collect();
    let mut total = 0.0;
    let mut path = vec![0usize; t_len];
    loop {
        let mut collapsed = Vec::new();
        let mut prev = None;
        for &p in &path {
            if Some(p) != prev && p != 0 {
                collapsed.push(p);
            }
            prev = Some(p);
        }
        if collapsed == target {
            total += path.iter().enumerate().map(|(t, &p)| probs[t][p]).product::<f64>();
        }
        let mut i = 0;
        loop {
            if i == t_len {
                return -total.ln();
            }
            path[i] += 1;
            if path[i] < classes {
                break;
            }
            path[i] = 0;
            i += 1;
        }
    }
}

fn random_logits(rng: &mut ChaCha8Rng, t: usize, c: usize) -> Matrix {
    Matrix::from_rows(&(0..t).map(|_| (0..c).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect::<Vec<_>>())
}

#[test]
fn criterion_02_ctc_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut trials = 0;
    while trials < 500 {
        let letters = rng.gen_range(1..=3);
        let t = rng.gen_range(1..=6);
        let len = rng.gen_range(0..=3);
        let target: Vec<usize> = (0..len).map(|_| rng.gen_range(1..=letters)).collect();
        if min_frames(&target) > t {
            continue;
        }
        let logits = random_logits(&mut rng, t, letters + 1);
        let fast = ctc_loss(&logits, &target, 0).unwrap();
        worst = worst.max((fast - brute_ctc(&logits, &target)).abs());
        trials += 1;
    }
    verdict(
        2,
        "CTC loss equals alignment enumeration",
        worst < 1e-10,
        format!("500 cases (T<=6, |A|<=3, |t|<=3), max |diff| {worst:.2e}"),
    );
}

#[test]
fn criterion_03_gradient_checks() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-12);

    let mut worst_logit: f64 = 0.0;
    for _ in 0..20 {
        let logits = random_logits(&mut rng, 8, 4);
        let target: Vec<usize> = (0..3).map(|_| rng.gen_range(1..4)).collect();
        let grad = ctc_backward(&logits, &target, 0).unwrap();
        for _ in 0..10 {
            let (r, c) = (rng.gen_range(0..8), rng.gen_range(0..4));
            let h = 1e-5;
            let mut up = logits.clone();
            up.set(r, c, logits.get(r, c) + h);
            let mut down = logits.clone();
            down.set(r, c, logits.get(r, c) - h);
            let num = (ctc_loss(&up, &target, 0).unwrap() - ctc_loss(&down, &target, 0).unwrap()) / (2.0 * h);
            worst_logit = worst_logit.max(rel(grad.get(r, c), num));
        }
    }

    let model = ToyAsrModel::random(Frontend::default(), 32, 0.05, &mut rng);
    let model = ToyAsrModel {
        input_scale: vec![0.5; model.input_dim()],
        ..model
    };
    let clip = synthesize(&Transcript::new("abc de"), &SynthesisSpec::with_seed(3)).unwrap();
    let signal = clip.to_real().values;
    let labels = model.encode(&Transcript::new("ab")).unwrap();
    let grad = model.loss_and_signal_grad(&signal, &labels).unwrap().grad;
    let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    // coordinates whose gradient is not negligible, so the ratio is meaningful
    let candidates: Vec<usize> = (0..signal.len()).filter(|&i| grad[i].abs() > 1e-3 * scale).collect();
    let mut worst_wave: f64 = 0.0;
    for _ in 0..30 {
        let i = candidates[rng.gen_range(0..candidates.len())];
        let h = 1e-6;
        let mut up = signal.clone();
        up[i] += h;
        let mut down = signal.clone();
        down[i] -= h;
        let lu = model.loss_and_signal_grad(&up, &labels).unwrap().loss;
        let ld = model.loss_and_signal_grad(&down, &labels).unwrap().loss;
        worst_wave = worst_wave.max(rel(grad[i], (lu - ld) / (2.0 * h)));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        3,
        "analytic gradients match central differences",
        worst_logit < 1e-4 && worst_wave < 1e-3 && secs < 30.0,
        format!("logits max rel {worst_logit:.2e}, waveform max rel {worst_wave:.2e}, {secs:.1} s"),
    );
}

#[test]
fn criterion_04_transform_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut quant_ok = true;
    let mut median_ok = true;
    for i in 0..100 {
        let n = rng.gen_range(1..2000);
        let samples: Vec<i16> = (0..n).map(|_| rng.gen()).collect();
        let clip = AudioClip::new(format!("r{i}"), samples, 16000).unwrap();
        let q = rng.gen_range(1..=1024u32);
        let once = quantize(&clip, q);
        quant_ok &= quantize(&once, q) == once;
        quant_ok &= clip
            .samples
            .iter()
            .zip(&once.samples)
            .all(|(&a, &b)| (i32::from(a) - i32::from(b)).abs() as f64 <= f64::from(q) / 2.0 || b == i16::MAX || b == i16::MIN);
        let k = rng.gen_range(1..=6usize);
        let med = smooth(&clip, SmoothKind::Median, k);
        for (j, &m) in med.samples.iter().enumerate() {
            let mut w: Vec<i16> = (-(k as isize - 1)..k as isize)
                .map(|o| clip.samples[(j as isize + o).clamp(0, n as isize - 1) as usize])
                .collect();
            w.sort_unstable();
            median_ok &= w[w.len() / 2] == m;
        }
    }
    let sine = |f: f64| {
        let s: Vec<i16> = (0..8000)
            .map(|i| (10000.0 * (2.0 * std::f64::consts::PI * f * i as f64 / 16000.0).sin()).round() as i16)
            .collect();
        AudioClip::new("tone", s, 16000).unwrap()
    };
    let energy = |c: &AudioClip, r: std::ops::Range<usize>| c.samples[r].iter().map(|&v| f64::from(v).powi(2)).sum::<f64>();
    let x = sine(1000.0);
    let y = downsample_defense(&x, 2).unwrap();
    let inner = 200..7800;
    let err: f64 = x.samples[inner.clone()]
        .iter()
        .zip(&y.samples[inner.clone()])
        .map(|(&a, &b)| (f64::from(a) - f64::from(b)).powi(2))
        .sum();
    let in_band = (err / energy(&x, inner)).sqrt();
    let x7 = sine(7000.0);
    let out_band = energy(&downsample_defense(&x7, 2).unwrap(), 0..8000) / energy(&x7, 0..8000);
    verdict(
        4,
        "transform properties",
        quant_ok && median_ok && in_band < 0.05 && out_band < 0.05,
        format!(
            "quantize idempotent+bounded on 100 clips: {quant_ok}; median = sort oracle: {median_ok}; 1 kHz RMS error {:.3}%; 7 kHz residual energy {:.3}%",
            100.0 * in_band,
            100.0 * out_band
        ),
    );
}

#[test]
fn criterion_05_training() {
    let tb = testbed();
    let (train_set, _) = standard_split(SEED);
    let (again, _) = train(&train_set, &TrainConfig { seed: SEED, ..TrainConfig::default() }).unwrap();
    let identical = again.to_json() == tb.model_json && again == tb.model;
    verdict(
        5,
        "toy ASR training",
        tb.held_out_cer < 0.05 && tb.train_secs < 600.0 && identical,
        format!(
            "held-out CER {:.2}%, {:.0} s, second run bit-identical: {identical}",
            100.0 * tb.held_out_cer,
            tb.train_secs
        ),
    );
}

#[test]
fn criterion_06_auc_units() {
    use Label::{Adversarial as A, Benign as B};
    let hand = auc(&[(0.1, B), (0.4, B), (0.3, A), (0.9, A)]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    let mut symmetric = true;
    for _ in 0..1000 {
        let n = rng.gen_range(2..60);
        let mut r: Vec<(f64, Label)> = (0..n)
            .map(|_| (f64::from(rng.gen_range(0..15u8)) / 7.0, if rng.gen() { A } else { B }))
            .collect();
        r[0].1 = A;
        r[1].1 = B;
        let a = auc(&r).unwrap();
        worst = worst.max((roc_area(&roc_curve(&r).unwrap()) - a).abs());
        let flipped: Vec<(f64, Label)> = r.iter().map(|&(s, l)| (s, if l == A { B } else { A })).collect();
        let (x, y) = (auc_ratio(&r).unwrap(), auc_ratio(&flipped).unwrap());
        symmetric &= x.num + y.num == x.den && a + auc(&flipped).unwrap() == 1.0;
    }
    verdict(
        6,
        "AUC unit correctness",
        hand == 0.75 && symmetric && worst < 1e-12,
        format!("4-point example {hand}; flipped labels sum to 1 exactly: {symmetric}; trapezoid vs Mann-Whitney max diff {worst:.1e}"),
    );
}

#[test]
fn criterion_07_plain_attack_success() {
    let results = plain_results();
    for r in results {
        note(format!(
            "{} target {:?} -> {:?} success={} dB_x(delta)={:.2} c={} iters={}",
            r.id,
            r.target.as_str(),
            r.achieved.as_str(),
            r.success,
            r.db_distortion,
            r.c_used,
            r.iterations
        ));
    }
    let rate = success_rate(results);
    let all_reported = results.iter().filter(|r| r.success).all(|r| r.db_distortion.is_finite());
    verdict(
        7,
        "plain attack success",
        rate >= 0.9 && all_reported,
        format!("{:.0}% of {CLIPS} clips; dB reported for every success: {all_reported}", 100.0 * rate),
    );
}

#[test]
fn criterion_08_quantization_attacks() {
    let tb = testbed();
    let q = TransformSpec::Quantize { q: 256 };
    let adaptive = attack_all(|t| AttackConfig::new(t).with_adaptive(q));
    let adaptive_rate = success_rate(&adaptive);
    let plain = plain_results();
    let survived = plain
        .iter()
        .filter(|r| r.success)
        .filter(|r| {
            let defended = q.apply(r.adversarial_clip(), None).unwrap();
            tb.model.transcribe(&defended).unwrap() == r.target
        })
        .count();
    let non_adaptive_rate = survived as f64 / plain.len() as f64;
    verdict(
        8,
        "quantize-256: adaptive vs non-adaptive",
        adaptive_rate >= 0.9 && non_adaptive_rate <= 0.3,
        format!(
            "adaptive success {:.0}% (post-transform); non-adaptive success under the defense {:.0}%",
            100.0 * adaptive_rate,
            100.0 * non_adaptive_rate
        ),
    );
}

#[test]
fn criterion_09_td_detection() {
    let scores = td_scores(plain_results(), KChoice::fixed(0.5), Metric::Wer);
    let a = auc(&scores).unwrap();
    let of = |l: Label| scores.iter().filter(|s| s.1 == l).map(|s| s.0).collect::<Vec<_>>();
    let (mb, ma) = (median(of(Label::Benign)), median(of(Label::Adversarial)));
    note(format!("benign WER distances: {}", fmt_list(&of(Label::Benign))));
    note(format!("adversarial WER distances: {}", fmt_list(&of(Label::Adversarial))));
    verdict(
        9,
        "TD detection k=1/2, WER",
        a >= 0.85 && mb < ma,
        format!(
            "AUC {a:.3} ({} adversarial vs {} benign); median benign {mb:.3} vs adversarial {ma:.3}",
            of(Label::Adversarial).len(),
            of(Label::Benign).len()
        ),
    );
}

#[test]
fn criterion_10_segment_attack() {
    let results = attack_all(|t| AttackConfig::new(t).with_variant(Variant::Segment { k: 0.5 }));
    let rate = success_rate(&results);
    verdict(10, "segment attack k=1/2", rate <= 0.1, format!("success {:.0}% of {CLIPS}", 100.0 * rate));
}

#[test]
fn criterion_11_combination_matrix() {
    let results = combination_results();
    let succeeded = results.iter().filter(|r| r.success).count();
    let auc_at = |k: KChoice| auc(&td_scores(results, k, Metric::Wer)).ok();
    let half = auc_at(KChoice::fixed(0.5));
    let two_thirds = auc_at(KChoice::fixed(2.0 / 3.0));
    let rand = auc_at(KChoice::Rand { a: 0.2, b: 0.8 });
    let pass = matches!((half, two_thirds, rand), (Some(h), Some(t), Some(r)) if h < t && r >= 0.7);
    let show = |v: Option<f64>| v.map_or("undefined".into(), |x| format!("{x:.3}"));
    verdict(
        11,
        "combination attack k_A={1/2} vs TD",
        pass,
        format!(
            "{succeeded}/{CLIPS} attacks succeeded; AUC k_D=1/2 {}, k_D=2/3 {}, k_D=Rand(0.2,0.8) {}",
            show(half),
            show(two_thirds),
            show(rand)
        ),
    );
}

#[test]
fn criterion_12_k_sweep() {
    let aucs: Vec<f64> = [0.5, 2.0 / 3.0, 0.75, 0.8, 5.0 / 6.0]
        .iter()
        .map(|&k| auc(&td_scores(plain_results(), KChoice::fixed(k), Metric::Wer)).unwrap())
        .collect();
    let spread = aucs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - aucs.iter().cloned().fold(f64::INFINITY, f64::min);
    verdict(
        12,
        "k-sweep stability",
        spread < 0.15,
        format!("AUC at k=1/2,2/3,3/4,4/5,5/6: {}; spread {spread:.3}", fmt_list(&aucs)),
    );
}

fn tempdep(dir: &Path, args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_tempdep"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "tempdep {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn pipeline(dir: &Path, workers: &str) -> Vec<(String, Vec<u8>)> {
    let run = |args: &[&str]| {
        let mut all = args.to_vec();
        all.extend(["--seed", "5", "--workers", workers]);
        tempdep(dir, &all)
    };
    run(&["synth", "--out", "corpus", "--utterances", "40", "--train", "32"]);
    run(&["train", "--manifest", "corpus/train.jsonl", "--out", "model.json", "--epochs", "2", "--held-out", "corpus/heldout.jsonl"]);
    run(&["attack", "--manifest", "corpus/heldout.jsonl", "--model", "model.json", "--out", "atk", "--limit", "3", "--iters", "15", "--c-schedule", "1,10"]);
    run(&["detect", "--manifest", "atk/combined.jsonl", "--model", "model.json", "--k", "0.5,0.75", "--k-rand", "0.2", "0.8", "--out", "det"]);
    run(&["eval", "--manifest", "atk/combined.jsonl", "--model", "model.json", "--transform", "quantize", "--q", "256", "--out", "ev"]);
    ["model.json.report.json", "atk/attack_report.json", "det/detect_report.json", "ev/eval_report.json"]
        .iter()
        .map(|p| (p.to_string(), std::fs::read(dir.join(p)).unwrap()))
        .collect()
}

#[test]
fn criterion_13_pipeline_determinism() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = pipeline(a.path(), "1");
    let second = pipeline(b.path(), "2");
    let differing: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.as_str())
        .collect();
    verdict(
        13,
        "pipeline determinism",
        differing.is_empty(),
        format!(
            "synth->train->attack->detect->eval twice (1 vs 2 workers); {} reports compared, differing: {differing:?}",
            first.len()
        ),
    );
}

#[test]
fn criterion_14_harness_robustness() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut records = Vec::new();
    let mut scripted = serde_json::Map::new();
    for (i, (id, label)) in [("b1", Label::Benign), ("b2", Label::Benign), ("a1", Label::Adversarial), ("a2", Label::Adversarial), ("a3", Label::Adversarial)]
        .into_iter()
        .enumerate()
    {
        let clip = synthesize(&Transcript::new("ab cd"), &SynthesisSpec::with_seed(i as u64)).unwrap();
        write_wav(&clip, d.join(format!("{id}.wav"))).unwrap();
        records.push(match label {
            Label::Benign => ClipRecord::benign(id, format!("{id}.wav"), "ab cd"),
            Label::Adversarial => ClipRecord::adversarial(id, format!("{id}.wav"), "ab cd", Some("ef")),
        });
        if id != "a3" {
            let text = if label == Label::Benign { "ab cd" } else { "ef" };
            scripted.insert(id.into(), text.into());
        }
    }
    std::fs::write(d.join("broken.wav"), b"RIFF\x10\x00\x00\x00WAVEjunk").unwrap();
    records.push(ClipRecord::benign("broken", "broken.wav", "ab"));
    tempdep_core::eval::save_manifest(&records, d.join("m.jsonl")).unwrap();
    std::fs::write(d.join("scripted.json"), serde_json::Value::Object(scripted).to_string()).unwrap();
    let common = ["--manifest", "m.jsonl", "--backend", "scripted", "--scripted", "scripted.json"];
    tempdep(d, &[&["detect", "--out", "det"][..], &common].concat());
    tempdep(d, &[&["eval", "--out", "ev", "--transform", "quantize"][..], &common].concat());
    let det: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("det/detect_report.json")).unwrap()).unwrap();
    let ev: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("ev/eval_report.json")).unwrap()).unwrap();
    let failed = |v: &serde_json::Value| {
        let mut ids: Vec<String> = v["failures"].as_array().unwrap().iter().map(|f| f["id"].as_str().unwrap().to_string()).collect();
        ids.sort();
        ids
    };
    let section = &det["detection"][0];
    let det_ok = failed(&det) == ["a3", "broken"]
        && section["rows"].as_array().unwrap().len() == 4
        && section["benign"] == 2
        && section["adversarial"] == 2
        && section["metrics"]["wer"]["auc"].is_number();
    let summary = &ev["defense"]["summary"];
    let ev_ok = failed(&ev) == ["a3", "broken"]
        && ev["defense"]["rows"].as_array().unwrap().len() == 4
        && summary["benign"]["clips"] == 2
        && summary["adversarial"]["clips"] == 2
        && summary["attack_success_plain"] == 1.0;
    assert_eq!(load_manifest(d.join("m.jsonl")).unwrap().len(), 6);
    verdict(
        14,
        "harness robustness",
        det_ok && ev_ok,
        format!(
            "failures detect {:?}, eval {:?}; aggregates over the remaining 4 clips: detect {det_ok}, eval {ev_ok}",
            failed(&det),
            failed(&ev)
        ),
    );
}
