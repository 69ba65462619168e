use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};

use tempdep_core::attacks::{
    random_target, run_attack, AttackConfig, AttackResult, KSet, Variant, DEFAULT_C_SCHEDULE,
    DEFAULT_ITERATIONS, DEFAULT_STEP_SIZE,
};
use tempdep_core::audio::{write_wav, AudioClip};
use tempdep_core::backend::{AsrBackend, AsrBackendSpec, DEFAULT_MAX_IN_FLIGHT, DEFAULT_TIMEOUT_SECS};
use tempdep_core::eval::{
    load_clips, load_manifest, roc_curve, roc_points_text, run_defense_eval, run_detection_eval,
    run_detection_matrix, save_manifest, AttackSummary, ClipRecord, EvalReport, Failure, LoadedClip,
};
use tempdep_core::td::{Granularity, KChoice, Label, Metric, TdConfig};
use tempdep_core::text::{char_edit_distance, Transcript};
use tempdep_core::toy_asr::{generate_corpus, train_on_clips, CorpusSpec, ToyAsrModel, TrainConfig};
use tempdep_core::transforms::{autoencoder_fit, FrameAutoencoder, SmoothKind, TransformSpec};

use crate::args::{
    AttackArgs, BackendArgs, DetectArgs, EvalArgs, KFlags, SynthArgs, TrainArgs, TransformArgs,
    TransformFlags,
};
use crate::error::{CliError, Kind};
use crate::resolve::Resolver;

pub struct Ctx {
    pub resolver: Resolver,
    pub seed: u64,
    pub workers: Option<usize>,
    pub verbose: u8,
}

impl Ctx {
    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose > 0 {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn common(&self) -> Value {
        json!({ "seed": self.seed })
    }
}

fn base_dir(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::new("io", format!("cannot create {}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::new("io", format!("cannot write {}: {e}", path.display())))
}

fn write_report(report: &EvalReport, json_path: &Path, csv_path: Option<&Path>) -> Result<(), CliError> {
    report
        .verify()
        .map_err(|e| CliError::new("internal", format!("report self-check failed: {e}")))?;
    write_text(json_path, &report.to_json())?;
    if let Some(p) = csv_path {
        write_text(p, &report.to_csv())?;
    }
    Ok(())
}

fn print_summary(v: Value) {
    println!("{v}");
}

fn load(manifest: &Path) -> Result<Vec<LoadedClip>, CliError> {
    let records = load_manifest(manifest).kind("manifest")?;
    Ok(load_clips(&records, &base_dir(manifest)))
}

pub fn synth(ctx: &Ctx, a: SynthArgs) -> Result<(), CliError> {
    let r = &ctx.resolver;
    let out = r.path(a.out, "out")?;
    let utterances = r.or(a.utterances, "utterances", 500)?;
    let train = r.or(a.train, "train", 400.min(utterances))?;
    let min_words = r.or(a.min_words, "min-words", 3)?;
    let max_words = r.or(a.max_words, "max-words", 8)?;
    if train > utterances {
        return Err(CliError::new("usage", "--train exceeds --utterances"));
    }
    if min_words == 0 || min_words > max_words {
        return Err(CliError::new("usage", "need 1 <= --min-words <= --max-words"));
    }
    let spec = CorpusSpec {
        utterances,
        min_words,
        max_words,
        min_word_len: 2,
        max_word_len: 5,
        seed: ctx.seed,
    };
    let corpus = generate_corpus(&spec);
    create_dir(&out.join("wav"))?;
    corpus
        .par_iter()
        .map(|u| {
            let clip = u.synthesize().kind("synth")?;
            write_wav(&clip, out.join("wav").join(format!("{}.wav", u.id))).kind("io")
        })
        .collect::<Result<Vec<()>, CliError>>()?;
    let records: Vec<ClipRecord> = corpus
        .iter()
        .map(|u| ClipRecord::benign(&u.id, format!("wav/{}.wav", u.id), u.text.as_str()))
        .collect();
    save_manifest(&records, out.join("manifest.jsonl")).kind("io")?;
    save_manifest(&records[..train], out.join("train.jsonl")).kind("io")?;
    save_manifest(&records[train..], out.join("heldout.jsonl")).kind("io")?;
    let config = json!({ "corpus": spec, "train": train });
    write_text(&out.join("synth.json"), &(serde_json::to_string_pretty(&config).expect("json") + "\n"))?;
    print_summary(json!({ "command": "synth", "utterances": utterances, "out": out }));
    Ok(())
}

fn labelled_clips(loaded: Vec<LoadedClip>) -> Result<Vec<(AudioClip, Transcript)>, CliError> {
    loaded
        .into_iter()
        .map(|(rec, clip)| {
            clip.map(|c| (c, rec.ground_truth.clone()))
                .map_err(|e| CliError::new("wav", format!("{}: {e}", rec.id)))
        })
        .collect()
}

fn corpus_cer(model: &ToyAsrModel, clips: &[(AudioClip, Transcript)]) -> Result<f64, CliError> {
    let (edits, chars) = clips
        .par_iter()
        .map(|(clip, gt)| {
            let hyp = model.transcribe(clip).kind("model")?;
            Ok((char_edit_distance(gt, &hyp).distance(), gt.char_len()))
        })
        .collect::<Result<Vec<_>, CliError>>()?
        .into_iter()
        .fold((0usize, 0usize), |(e, n), (de, dn)| (e + de, n + dn));
    Ok(if chars == 0 { 0.0 } else { edits as f64 / chars as f64 })
}

pub fn train(ctx: &Ctx, a: TrainArgs) -> Result<(), CliError> {
    let r = &ctx.resolver;
    let manifest = r.path(a.manifest, "manifest")?;
    let out = r.path(a.out, "out")?;
    let epochs = r.or(a.epochs, "epochs", TrainConfig::default().epochs)?;
    let held_out: Option<PathBuf> = r.opt(a.held_out, "held-out")?;
    let report_path = match r.opt(a.report, "report")? {
        Some(p) => p,
        None => PathBuf::from(format!("{}.report.json", out.display())),
    };
    let clips = labelled_clips(load(&manifest)?)?;
    let config = TrainConfig {
        epochs,
        seed: ctx.seed,
        ..TrainConfig::default()
    };
    let (model, log) = train_on_clips(&clips, &config, |e, l| ctx.log(format!("epoch {e} loss {l:.4}")))
        .kind("training-failed")?;
    model.save(&out).kind("io")?;
    let held_cer = match &held_out {
        Some(p) => Some(corpus_cer(&model, &labelled_clips(load(p)?)?)?),
        None => None,
    };
    let report = json!({
        "tool": "tempdep",
        "version": env!("CARGO_PKG_VERSION"),
        "kind": "train",
        "config": { "train": config, "manifest": manifest, "held_out": held_out },
        "epoch_loss": log.epoch_loss,
        "train_cer": corpus_cer(&model, &clips)?,
        "held_out_cer": held_cer,
    });
    write_text(&report_path, &(serde_json::to_string_pretty(&report).expect("json") + "\n"))?;
    print_summary(json!({ "command": "train", "model": out, "held_out_cer": held_cer }));
    Ok(())
}

fn backend_from(r: &Resolver, a: BackendArgs) -> Result<(AsrBackend, Value), CliError> {
    let kind = r.or(a.backend, "backend", "toy".to_string())?;
    let timeout_secs = r.or(a.timeout, "timeout", DEFAULT_TIMEOUT_SECS)?;
    let spec = match kind.as_str() {
        "toy" => AsrBackendSpec::Toy {
            model_path: r.path(a.model, "model")?,
        },
        "command" => AsrBackendSpec::Command {
            template: r.required(a.command, "command")?,
            timeout_secs,
        },
        "http" => AsrBackendSpec::Http {
            endpoint: r.required(a.endpoint, "endpoint")?,
            timeout_secs,
            max_in_flight: r.or(a.max_in_flight, "max-in-flight", DEFAULT_MAX_IN_FLIGHT)?,
        },
        "scripted" => {
            let path: PathBuf = r.path(a.scripted, "scripted")?;
            let text = fs::read_to_string(&path)
                .map_err(|e| CliError::new("io", format!("cannot read {}: {e}", path.display())))?;
            let transcripts: BTreeMap<String, String> = serde_json::from_str(&text).kind("config")?;
            AsrBackendSpec::Scripted { transcripts }
        }
        other => return Err(CliError::new("usage", format!("unknown backend {other:?}"))),
    };
    let echo = match &spec {
        AsrBackendSpec::Scripted { transcripts } => json!({ "kind": "scripted", "entries": transcripts.len() }),
        s => serde_json::to_value(s).expect("spec serializes"),
    };
    Ok((AsrBackend::from_spec(&spec).kind("backend")?, echo))
}

fn transform_from(r: &Resolver, a: &TransformFlags, name: &str) -> Result<TransformSpec, CliError> {
    let spec = match name {
        "identity" | "none" => TransformSpec::Identity,
        "quantize" | "quan" | "quantization" => TransformSpec::Quantize {
            q: r.or(a.q, "q", 256)?,
        },
        "smooth" | "smoothing" => {
            let kind: String = r.or(a.smooth_kind.clone(), "smooth-kind", "median".into())?;
            TransformSpec::Smooth {
                smooth_kind: kind.parse::<SmoothKind>().kind("usage")?,
                k: r.or(a.window, "K", 4)?,
            }
        }
        "downsample" | "down-sample" => TransformSpec::Downsample {
            factor: r.or(a.factor, "factor", 2)?,
        },
        "autoencoder" | "ae" => TransformSpec::Autoencoder {
            rank: r.or(a.rank, "rank", 32)?,
        },
        other => return Err(CliError::new("usage", format!("unknown transform {other:?}"))),
    };
    spec.validate().kind("usage")?;
    Ok(spec)
}

/// Loads `--ae-model` or fits a frame autoencoder on the benign clips.
fn autoencoder_for(
    r: &Resolver,
    a: &TransformFlags,
    spec: &TransformSpec,
    clips: &[LoadedClip],
) -> Result<Option<FrameAutoencoder>, CliError> {
    let TransformSpec::Autoencoder { rank } = *spec else {
        return Ok(None);
    };
    if let Some(p) = r.opt(a.ae_model.clone(), "ae-model")? {
        return FrameAutoencoder::load(&p).kind("model").map(Some);
    }
    let benign: Vec<AudioClip> = clips
        .iter()
        .filter(|(rec, _)| rec.label == Label::Benign)
        .filter_map(|(_, c)| c.as_ref().ok().cloned())
        .collect();
    let frontend = tempdep_core::toy_asr::Frontend::default();
    autoencoder_fit(&benign, rank, frontend).kind("transform").map(Some)
}

fn k_choices(r: &Resolver, k: KFlags, default: &[f64]) -> Result<(Vec<f64>, Option<(f64, f64)>), CliError> {
    let fixed = r.list(k.k, "k")?;
    let rand: Option<Vec<f64>> = r.opt(k.k_rand, "k-rand")?;
    let rand = match rand.as_deref() {
        None => None,
        Some([a, b]) => Some((*a, *b)),
        Some(_) => return Err(CliError::new("usage", "--k-rand takes exactly two values")),
    };
    let fixed = if fixed.is_empty() && rand.is_none() {
        default.to_vec()
    } else {
        fixed
    };
    Ok((fixed, rand))
}

fn attack_variant(name: &str, fixed: &[f64], rand: Option<(f64, f64)>) -> Result<Variant, CliError> {
    let single = || {
        if rand.is_some() {
            return Err(CliError::new("usage", format!("{name} takes a fixed --k")));
        }
        Ok(fixed.first().copied().unwrap_or(0.5))
    };
    Ok(match name {
        "plain" => Variant::Plain,
        "segment" => Variant::Segment { k: single()? },
        "concat-split" | "concat_split" => Variant::ConcatSplit { k: single()? },
        "concat-silence" | "concat_silence" => Variant::ConcatSilence { k: single()? },
        "combination" => Variant::Combination {
            k_a: match rand {
                Some((a, b)) => KSet::Rand { a, b },
                None => KSet::Fixed { ks: fixed.to_vec() },
            },
        },
        other => return Err(CliError::new("usage", format!("unknown variant {other:?}"))),
    })
}

fn absolute(p: &Path) -> PathBuf {
    fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf())
}

pub fn attack(ctx: &Ctx, a: AttackArgs) -> Result<(), CliError> {
    let r = &ctx.resolver;
    let manifest = r.path(a.manifest, "manifest")?;
    let model_path = r.path(a.model, "model")?;
    let out = r.path(a.out, "out")?;
    let fixed_target: Option<String> = r.opt(a.target, "target")?;
    let words = r.or(a.target_words, "target-words", 2)?;
    let mut c_schedule = r.list(a.c_schedule, "c-schedule")?;
    if c_schedule.is_empty() {
        c_schedule = DEFAULT_C_SCHEDULE.to_vec();
    }
    let iterations = r.or(a.iters, "iters", DEFAULT_ITERATIONS)?;
    let step_size = r.or(a.step, "step", DEFAULT_STEP_SIZE)?;
    let adaptive_name = r.or(a.adaptive, "adaptive", "none".to_string())?;
    let adaptive = transform_from(r, &a.transform, &adaptive_name)?;
    let variant_name = r.or(a.variant, "variant", "plain".to_string())?;
    let (fixed, rand) = k_choices(r, a.k, &[0.5])?;
    let variant = attack_variant(&variant_name, &fixed, rand)?;
    let limit: Option<usize> = r.opt(a.limit, "limit")?;

    let model = ToyAsrModel::load(&model_path).kind("model")?;
    let mut records = load_manifest(&manifest).kind("manifest")?;
    records.retain(|x| x.label == Label::Benign);
    records.sort_by(|x, y| x.id.cmp(&y.id));
    if let Some(n) = limit {
        records.truncate(n);
    }
    let base = base_dir(&manifest);
    let loaded = load_clips(&records, &base);
    let template = AttackConfig {
        target: Transcript::empty(),
        c_schedule,
        iterations,
        step_size,
        adaptive,
        variant,
        seed: ctx.seed,
    };
    template.validate().kind("usage")?;

    let outcomes: Vec<(ClipRecord, Result<AttackResult, String>)> = loaded
        .par_iter()
        .map(|(rec, clip)| {
            let res = clip.clone().and_then(|clip| {
                let target = match &fixed_target {
                    Some(t) => Transcript::new(t),
                    None => random_target(ctx.seed, &rec.id, words),
                };
                let cfg = AttackConfig {
                    target,
                    ..template.clone()
                };
                let res = run_attack(&model, &clip, &cfg).map_err(|e| e.to_string());
                if let Ok(r) = &res {
                    ctx.log(format!("{} -> {:?} success={}", rec.id, r.achieved.as_str(), r.success));
                }
                res
            });
            (rec.clone(), res)
        })
        .collect();

    create_dir(&out.join("wav"))?;
    let mut summary_records = Vec::new();
    let mut failures = Vec::new();
    let mut adversarial = Vec::new();
    let mut combined = Vec::new();
    for (rec, res) in outcomes {
        match res {
            Ok(result) => {
                let adv_id = format!("{}-adv", rec.id);
                let rel = format!("wav/{adv_id}.wav");
                let mut clip = result.adversarial_clip().clone();
                clip.id = adv_id.clone();
                write_wav(&clip, out.join(&rel)).kind("io")?;
                let mut benign = rec.clone();
                benign.path = absolute(&rec.resolve(&base));
                combined.push(benign);
                if result.success {
                    let adv = ClipRecord::adversarial(
                        &adv_id,
                        &rel,
                        rec.ground_truth.as_str(),
                        Some(result.target.as_str()),
                    );
                    let mut abs = adv.clone();
                    abs.path = absolute(&out.join(&rel));
                    combined.push(abs);
                    adversarial.push(adv);
                }
                summary_records.push(result.to_record());
            }
            Err(error) => failures.push(Failure {
                id: rec.id.clone(),
                stage: "attack".into(),
                error,
            }),
        }
    }
    save_manifest(&adversarial, out.join("adversarial.jsonl")).kind("io")?;
    save_manifest(&combined, out.join("combined.jsonl")).kind("io")?;

    let mut config = ctx.common();
    config["attack"] = serde_json::to_value(&template).expect("config serializes");
    config["target"] = json!(fixed_target.unwrap_or_else(|| format!("random {words}-word per clip")));
    config["limit"] = json!(limit);
    let mut report = EvalReport::new("attack", config);
    report.failures = failures;
    let summary = AttackSummary::new(summary_records);
    print_summary(json!({
        "command": "attack",
        "attempted": summary.attempted,
        "succeeded": summary.succeeded,
        "failures": report.failures.len(),
    }));
    report.attack = Some(summary);
    write_report(&report, &out.join("attack_report.json"), Some(&out.join("attack.csv")))
}

pub fn transform(ctx: &Ctx, a: TransformArgs) -> Result<(), CliError> {
    let r = &ctx.resolver;
    let manifest = r.path(a.manifest, "manifest")?;
    let out = r.path(a.out, "out")?;
    let name: String = r.required(a.transform.transform.clone(), "transform")?;
    let spec = transform_from(r, &a.transform, &name)?;
    let loaded = load(&manifest)?;
    let ae = autoencoder_for(r, &a.transform, &spec, &loaded)?;
    create_dir(&out.join("wav"))?;
    if let Some(ae) = &ae {
        ae.save(out.join("autoencoder.json")).kind("io")?;
    }
    let results: Vec<(ClipRecord, Result<AudioClip, String>)> = loaded
        .par_iter()
        .map(|(rec, clip)| {
            let res = clip
                .clone()
                .and_then(|c| spec.apply(&c, ae.as_ref()).map_err(|e| e.to_string()));
            (rec.clone(), res)
        })
        .collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (rec, res) in results {
        match res {
            Ok(clip) => {
                let rel = format!("wav/{}.wav", rec.id);
                write_wav(&clip, out.join(&rel)).kind("io")?;
                records.push(ClipRecord {
                    path: rel.into(),
                    ..rec
                });
            }
            Err(error) => failures.push(Failure {
                id: rec.id,
                stage: "transform".into(),
                error,
            }),
        }
    }
    save_manifest(&records, out.join("manifest.jsonl")).kind("io")?;
    let mut config = ctx.common();
    config["transform"] = serde_json::to_value(spec).expect("spec serializes");
    let mut report = EvalReport::new("transform", config);
    report.failures = failures;
    print_summary(json!({ "command": "transform", "written": records.len(), "failures": report.failures.len() }));
    write_report(&report, &out.join("transform_report.json"), None)
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '_' })
        .collect()
}

pub fn detect(ctx: &Ctx, a: DetectArgs) -> Result<(), CliError> {
    let r = &ctx.resolver;
    let manifests: Vec<PathBuf> = r.list(a.manifest, "manifest")?;
    if manifests.is_empty() {
        return Err(CliError::new("usage", "missing required option --manifest"));
    }
    let out = r.path(a.out, "out")?;
    let metric: Metric = r.or(a.metric, "metric", "wer".to_string())?.parse().kind("usage")?;
    let threshold = r.or(a.threshold, "threshold", 0.0)?;
    let granularity = match r.opt(a.granularity, "granularity")?.as_deref() {
        None => None,
        Some("word") => Some(Granularity::Word),
        Some("char") => Some(Granularity::Char),
        Some(other) => return Err(CliError::new("usage", format!("unknown granularity {other:?}"))),
    };
    let (fixed, rand) = k_choices(r, a.k, &[0.5])?;
    let mut ks: Vec<KChoice> = fixed.into_iter().map(KChoice::fixed).collect();
    if let Some((a, b)) = rand {
        ks.push(KChoice::Rand { a, b });
    }
    for k in &ks {
        k.validate().kind("usage")?;
    }
    let (backend, backend_echo) = backend_from(r, a.backend)?;
    let base = TdConfig {
        k: ks[0],
        metric,
        seed: ctx.seed,
        granularity,
    };
    let mut config = ctx.common();
    config["backend"] = backend_echo;
    config["manifests"] = json!(manifests);
    create_dir(&out)?;
    if manifests.len() == 1 {
        let clips = load(&manifests[0])?;
        let report = run_detection_eval(&backend, &base, &ks, threshold, &clips, config);
        for s in &report.detection {
            for m in Metric::ALL {
                let scored: Vec<(f64, Label)> = s.rows.iter().map(|x| (x.score(m), x.label)).collect();
                if let Ok(points) = roc_curve(&scored) {
                    let name = format!("roc_k{}_{}.dat", sanitize(&s.k), m.name());
                    write_text(&out.join(name), &roc_points_text(&points))?;
                }
            }
        }
        let auc: BTreeMap<String, Option<f64>> =
            report.detection.iter().map(|s| (s.k.clone(), s.auc(metric))).collect();
        print_summary(json!({ "command": "detect", "metric": metric.name(), "auc": auc, "failures": report.failures.len() }));
        write_report(&report, &out.join("detect_report.json"), Some(&out.join("detect.csv")))
    } else {
        let mut sets = Vec::new();
        for m in &manifests {
            let name = m
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| m.display().to_string());
            sets.push((name, load(m)?));
        }
        let report = run_detection_matrix(&backend, &base, &ks, metric, &sets, config);
        print_summary(json!({ "command": "detect", "metric": metric.name(), "matrix": report.matrix }));
        write_report(&report, &out.join("matrix_report.json"), Some(&out.join("matrix.csv")))
    }
}

pub fn eval(ctx: &Ctx, a: EvalArgs) -> Result<(), CliError> {
    let r = &ctx.resolver;
    let manifest = r.path(a.manifest, "manifest")?;
    let out = r.path(a.out, "out")?;
    let name = r.or(a.transform.transform.clone(), "transform", "identity".to_string())?;
    let spec = transform_from(r, &a.transform, &name)?;
    let (backend, backend_echo) = backend_from(r, a.backend)?;
    let clips = load(&manifest)?;
    let ae = autoencoder_for(r, &a.transform, &spec, &clips)?;
    let mut config = ctx.common();
    config["backend"] = backend_echo;
    config["manifest"] = json!(manifest);
    let report = run_defense_eval(&backend, &spec, ae.as_ref(), &clips, config);
    create_dir(&out)?;
    let summary = &report.defense.as_ref().expect("defense report").summary;
    print_summary(json!({ "command": "eval", "transform": spec.label(), "summary": summary, "failures": report.failures.len() }));
    write_report(&report, &out.join("eval_report.json"), Some(&out.join("eval.csv")))
}
