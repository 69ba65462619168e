//! Evaluation harness: manifests, ROC/AUC, defense and detection runs and
//! report emission.

pub mod manifest;
pub mod report;
pub mod roc;

use std::path::Path;

use rayon::prelude::*;
use serde_json::{json, Value};

use crate::audio::{read_wav, AudioClip};
use crate::backend::AsrBackend;
use crate::td::{detect_batch, KChoice, Label, Metric, TdConfig};
use crate::text::{cer, wer};
use crate::transforms::{FrameAutoencoder, TransformSpec};

pub use manifest::{load_manifest, manifest_to_string, parse_manifest, save_manifest, ClipRecord, ManifestError};
pub use report::{
    AttackSummary, DefenseReport, DefenseRow, DetectionRow, DetectionSection, EvalReport, Failure, MatrixRow,
};
pub use roc::{auc, auc_ratio, detection_rate, roc_area, roc_curve, roc_points_text, AucRatio};

/// A manifest record with its audio, or the reason the audio is missing.
pub type LoadedClip = (ClipRecord, Result<AudioClip, String>);

/// Reads every WAV (in parallel); the clip id is taken from the record.
pub fn load_clips(records: &[ClipRecord], base: &Path) -> Vec<LoadedClip> {
    records
        .par_iter()
        .map(|r| {
            let clip = read_wav(r.resolve(base))
                .map(|mut c| {
                    c.id = r.id.clone();
                    c
                })
                .map_err(|e| e.to_string());
            (r.clone(), clip)
        })
        .collect()
}

fn with_entry(mut config: Value, key: &str, value: Value) -> Value {
    if !config.is_object() {
        config = json!({});
    }
    config[key] = value;
    config
}

fn sort_failures(failures: &mut [Failure]) {
    failures.sort_by(|a, b| (&a.id, &a.stage).cmp(&(&b.id, &b.stage)));
}

/// Transcribes every clip with and without the transformation and compares
/// both to the ground truth.
pub fn run_defense_eval(
    backend: &AsrBackend,
    transform: &TransformSpec,
    autoencoder: Option<&FrameAutoencoder>,
    clips: &[LoadedClip],
    config: Value,
) -> EvalReport {
    let outcomes: Vec<Result<DefenseRow, Failure>> = clips
        .par_iter()
        .map(|(rec, clip)| {
            let fail = |stage: &str, error: String| Failure {
                id: rec.id.clone(),
                stage: stage.into(),
                error,
            };
            let clip = clip.as_ref().map_err(|e| fail("wav", e.clone()))?;
            let plain = backend.transcribe(clip).map_err(|e| fail("transcribe", e.to_string()))?;
            let transformed_clip = transform
                .apply(clip, autoencoder)
                .map_err(|e| fail("transform", e.to_string()))?;
            let transformed = backend
                .transcribe(&transformed_clip)
                .map_err(|e| fail("transcribe-transformed", e.to_string()))?;
            let gt = &rec.ground_truth;
            let score = |f: fn(&_, &_) -> crate::Result<f64>, hyp| f(gt, hyp).map_err(|e| fail("score", e.to_string()));
            Ok(DefenseRow {
                id: rec.id.clone(),
                label: rec.label,
                ground_truth: gt.as_str().into(),
                target: rec.adversarial_target.as_ref().map(|t| t.as_str().to_string()),
                wer_plain: score(wer, &plain)?,
                wer_transformed: score(wer, &transformed)?,
                cer_plain: score(cer, &plain)?,
                cer_transformed: score(cer, &transformed)?,
                plain: plain.as_str().into(),
                transformed: transformed.as_str().into(),
            })
        })
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => rows.push(r),
            Err(f) => failures.push(f),
        }
    }
    rows.sort_by(|a, b| a.id.cmp(&b.id));
    sort_failures(&mut failures);
    let mut report = EvalReport::new(
        "defense",
        with_entry(config, "transform", serde_json::to_value(transform).expect("spec serializes")),
    );
    report.defense = Some(DefenseReport {
        transform: transform.label(),
        summary: report::summarize_defense(&rows),
        rows,
    });
    report.failures = failures;
    report
}

/// Scores loaded clips under one detector configuration.
pub fn score_clips(backend: &AsrBackend, clips: &[LoadedClip], cfg: &TdConfig) -> (Vec<DetectionRow>, Vec<Failure>) {
    let mut failures = Vec::new();
    let mut ready = Vec::new();
    for (rec, clip) in clips {
        match clip {
            Ok(c) => ready.push((c.clone(), rec.label)),
            Err(e) => failures.push(Failure {
                id: rec.id.clone(),
                stage: "wav".into(),
                error: e.clone(),
            }),
        }
    }
    let mut rows = Vec::new();
    for rec in detect_batch(backend, &ready, cfg) {
        match (rec.outcome, rec.error) {
            (Some(o), _) => rows.push(DetectionRow {
                id: rec.id,
                label: rec.label,
                k: rec.k,
                wer: o.distance(Metric::Wer),
                cer: o.distance(Metric::Cer),
                lcp: o.distance(Metric::LcpRatio),
                prefix: o.prefix.as_str().into(),
                whole: o.whole.as_str().into(),
            }),
            (None, e) => failures.push(Failure {
                id: rec.id,
                stage: "detect".into(),
                error: e.unwrap_or_else(|| "unknown failure".into()),
            }),
        }
    }
    (rows, failures)
}

/// TD detection for each `k` choice; one report section per choice.
pub fn run_detection_eval(
    backend: &AsrBackend,
    base: &TdConfig,
    ks: &[KChoice],
    threshold: f64,
    clips: &[LoadedClip],
    config: Value,
) -> EvalReport {
    let mut config = with_entry(config, "threshold", json!(threshold));
    config = with_entry(config, "seed", json!(base.seed));
    config = with_entry(config, "granularity", serde_json::to_value(base.granularity).expect("serializes"));
    config = with_entry(config, "k", json!(ks.iter().map(KChoice::label).collect::<Vec<_>>()));
    let mut report = EvalReport::new("detection", config);
    let mut failures = Vec::new();
    for &k in ks {
        let cfg = TdConfig { k, ..*base };
        let (rows, f) = score_clips(backend, clips, &cfg);
        failures.extend(f.into_iter().map(|mut x| {
            x.stage = format!("{} k={}", x.stage, k.label());
            x
        }));
        report.detection.push(DetectionSection::new(k.label(), rows, threshold));
    }
    sort_failures(&mut failures);
    report.failures = failures;
    report
}

/// Attack-set × detector-`k` AUC matrix. Each set is scored as its own
/// detection section, labelled `set@k`.
pub fn run_detection_matrix(
    backend: &AsrBackend,
    base: &TdConfig,
    ks: &[KChoice],
    metric: Metric,
    sets: &[(String, Vec<LoadedClip>)],
    config: Value,
) -> EvalReport {
    let mut config = with_entry(config, "seed", json!(base.seed));
    config = with_entry(config, "metric", json!(metric.name()));
    config = with_entry(config, "threshold", json!(0.0));
    config = with_entry(config, "k", json!(ks.iter().map(KChoice::label).collect::<Vec<_>>()));
    config = with_entry(config, "sets", json!(sets.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>()));
    let mut report = EvalReport::new("matrix", config);
    let mut failures = Vec::new();
    for (name, clips) in sets {
        let mut row = MatrixRow {
            set: name.clone(),
            auc: Default::default(),
        };
        for &k in ks {
            let cfg = TdConfig { k, ..*base };
            let (rows, f) = score_clips(backend, clips, &cfg);
            failures.extend(f.into_iter().map(|mut x| {
                x.stage = format!("{} {}@{}", x.stage, name, k.label());
                x
            }));
            let section = DetectionSection::new(format!("{name}@{}", k.label()), rows, 0.0);
            row.auc.insert(k.label(), section.auc(metric));
            report.detection.push(section);
        }
        report.matrix.push(row);
    }
    sort_failures(&mut failures);
    report.failures = failures;
    report
}

/// Splits loaded clips by label, keeping order.
pub fn by_label(clips: &[LoadedClip], label: Label) -> Vec<LoadedClip> {
    clips.iter().filter(|(r, _)| r.label == label).cloned().collect()
}
