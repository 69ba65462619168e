//! Report types, aggregate recomputation and deterministic serialization.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::attacks::AttackRecord;
use crate::td::{Label, Metric};

use super::roc::{auc, detection_rate};

/// Fixed interpretation choices, echoed into every report.
pub fn decisions() -> BTreeMap<String, String> {
    [
        ("auc", "Mann-Whitney with ties counted half; adversarial is the positive class"),
        ("detection_threshold", "score > threshold counts as detected"),
        ("effectiveness_ratio", "corpus level: sum of transformed distances over sum of plain distances; 0/0 = 1, x/0 = null"),
        ("td_truncation", "word count of S_k for wer and lcp, character count for cer"),
        ("td_empty", "empty vs empty = 0, empty vs nonempty = 1"),
        ("lcp_distance", "1 - lcp / max length"),
        ("failures", "excluded from aggregates and listed"),
        ("floats", "rounded to 6 decimals"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub id: String,
    pub stage: String,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefenseRow {
    pub id: String,
    pub label: Label,
    pub ground_truth: String,
    pub target: Option<String>,
    pub plain: String,
    pub transformed: String,
    pub wer_plain: f64,
    pub wer_transformed: f64,
    pub cer_plain: f64,
    pub cer_transformed: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioSummary {
    pub clips: usize,
    pub mean_wer_plain: f64,
    pub mean_wer_transformed: f64,
    pub mean_cer_plain: f64,
    pub mean_cer_transformed: f64,
    pub r_wer: Option<f64>,
    pub r_cer: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefenseSummary {
    pub benign: Option<RatioSummary>,
    pub adversarial: Option<RatioSummary>,
    /// Over adversarial rows with a target: decode of `x` equals the target.
    pub attack_success_plain: Option<f64>,
    /// Same, after the transformation.
    pub attack_success_transformed: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefenseReport {
    pub transform: String,
    pub rows: Vec<DefenseRow>,
    pub summary: DefenseSummary,
}

/// `num / den` with `0/0 = 1` and `x/0 = None`.
pub fn corpus_ratio(num: f64, den: f64) -> Option<f64> {
    if den > 0.0 {
        Some(num / den)
    } else if num == 0.0 {
        Some(1.0)
    } else {
        None
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn ratio_summary(rows: &[&DefenseRow]) -> Option<RatioSummary> {
    if rows.is_empty() {
        return None;
    }
    let sum = |f: fn(&DefenseRow) -> f64| rows.iter().map(|r| f(r)).sum::<f64>();
    Some(RatioSummary {
        clips: rows.len(),
        mean_wer_plain: mean(rows.iter().map(|r| r.wer_plain)),
        mean_wer_transformed: mean(rows.iter().map(|r| r.wer_transformed)),
        mean_cer_plain: mean(rows.iter().map(|r| r.cer_plain)),
        mean_cer_transformed: mean(rows.iter().map(|r| r.cer_transformed)),
        r_wer: corpus_ratio(sum(|r| r.wer_transformed), sum(|r| r.wer_plain)),
        r_cer: corpus_ratio(sum(|r| r.cer_transformed), sum(|r| r.cer_plain)),
    })
}

pub fn summarize_defense(rows: &[DefenseRow]) -> DefenseSummary {
    let of = |label| rows.iter().filter(|r| r.label == label).collect::<Vec<_>>();
    let targeted: Vec<&DefenseRow> = rows
        .iter()
        .filter(|r| r.label == Label::Adversarial && r.target.is_some())
        .collect();
    let rate = |hit: fn(&DefenseRow) -> bool| {
        (!targeted.is_empty())
            .then(|| targeted.iter().filter(|r| hit(r)).count() as f64 / targeted.len() as f64)
    };
    DefenseSummary {
        benign: ratio_summary(&of(Label::Benign)),
        adversarial: ratio_summary(&of(Label::Adversarial)),
        attack_success_plain: rate(|r| r.target.as_deref() == Some(r.plain.as_str())),
        attack_success_transformed: rate(|r| r.target.as_deref() == Some(r.transformed.as_str())),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub id: String,
    pub label: Label,
    pub k: f64,
    pub prefix: String,
    pub whole: String,
    pub wer: f64,
    pub cer: f64,
    pub lcp: f64,
}

impl DetectionRow {
    pub fn score(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Wer => self.wer,
            Metric::Cer => self.cer,
            Metric::LcpRatio => self.lcp,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    /// Absent when only one label was scored.
    pub auc: Option<f64>,
    pub detection_rate: f64,
    pub median_benign: Option<f64>,
    pub median_adversarial: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionSection {
    /// Label of the `k` choice (fixed fraction or rand range).
    pub k: String,
    pub rows: Vec<DetectionRow>,
    pub benign: usize,
    pub adversarial: usize,
    pub metrics: BTreeMap<String, MetricSummary>,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

pub fn summarize_detection(rows: &[DetectionRow], threshold: f64) -> BTreeMap<String, MetricSummary> {
    Metric::ALL
        .iter()
        .map(|&m| {
            let scored: Vec<(f64, Label)> = rows.iter().map(|r| (r.score(m), r.label)).collect();
            let of = |label| {
                scored
                    .iter()
                    .filter(|(_, l)| *l == label)
                    .map(|(s, _)| *s)
                    .collect::<Vec<_>>()
            };
            let summary = MetricSummary {
                auc: auc(&scored).ok(),
                detection_rate: detection_rate(&scored, threshold),
                median_benign: median(&of(Label::Benign)),
                median_adversarial: median(&of(Label::Adversarial)),
            };
            (m.name().to_string(), summary)
        })
        .collect()
}

impl DetectionSection {
    pub fn new(k: String, mut rows: Vec<DetectionRow>, threshold: f64) -> Self {
        rows.sort_by(|a, b| a.id.cmp(&b.id));
        let adversarial = rows.iter().filter(|r| r.label.is_adversarial()).count();
        Self {
            k,
            benign: rows.len() - adversarial,
            adversarial,
            metrics: summarize_detection(&rows, threshold),
            rows,
        }
    }

    pub fn auc(&self, metric: Metric) -> Option<f64> {
        self.metrics.get(metric.name()).and_then(|m| m.auc)
    }
}

/// One attack set (row) scored under several detector `k` choices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub set: String,
    /// `k` label → AUC under the report metric.
    pub auc: BTreeMap<String, Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DbStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub median: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackSummary {
    pub attempted: usize,
    pub succeeded: usize,
    pub success_rate: f64,
    /// Over successes with a nonzero perturbation.
    pub db: Option<DbStats>,
    pub records: Vec<AttackRecord>,
}

impl AttackSummary {
    pub fn new(mut records: Vec<AttackRecord>) -> Self {
        records.sort_by(|a, b| a.id.cmp(&b.id));
        let succeeded = records.iter().filter(|r| r.success).count();
        let dbs: Vec<f64> = records
            .iter()
            .filter(|r| r.success)
            .filter_map(|r| r.db.parse::<f64>().ok())
            .filter(|d| d.is_finite())
            .collect();
        let db = median(&dbs).map(|median| DbStats {
            min: dbs.iter().copied().fold(f64::INFINITY, f64::min),
            max: dbs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: mean(dbs.iter().copied()),
            median,
        });
        Self {
            attempted: records.len(),
            succeeded,
            success_rate: if records.is_empty() {
                0.0
            } else {
                succeeded as f64 / records.len() as f64
            },
            db,
            records,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tool: String,
    pub version: String,
    pub kind: String,
    pub config: Value,
    pub decisions: BTreeMap<String, String>,
    pub failures: Vec<Failure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defense: Option<DefenseReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub detection: Vec<DetectionSection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub matrix: Vec<MatrixRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack: Option<AttackSummary>,
}

fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) => {
            if let Some(f) = n.as_f64().filter(|_| n.is_f64()) {
                let r = (f * 1e6).round() / 1e6;
                // -0.0 prints as "-0.0"
                let r = if r == 0.0 { 0.0 } else { r };
                if let Some(num) = serde_json::Number::from_f64(r) {
                    *n = num;
                }
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_floats),
        Value::Object(o) => o.values_mut().for_each(round_floats),
        _ => {}
    }
}

impl EvalReport {
    pub fn new(kind: &str, config: Value) -> Self {
        Self {
            tool: "tempdep".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            kind: kind.into(),
            config,
            decisions: decisions(),
            failures: Vec::new(),
            defense: None,
            detection: Vec::new(),
            matrix: Vec::new(),
            attack: None,
        }
    }

    /// Recomputes every aggregate from the rows; `Err` names the first
    /// disagreement.
    pub fn verify(&self) -> Result<(), String> {
        if let Some(d) = &self.defense {
            if summarize_defense(&d.rows) != d.summary {
                return Err("defense summary does not match its rows".into());
            }
        }
        for s in &self.detection {
            let adv = s.rows.iter().filter(|r| r.label.is_adversarial()).count();
            if adv != s.adversarial || s.rows.len() - adv != s.benign {
                return Err(format!("detection counts for k={} do not match rows", s.k));
            }
            let threshold = self.config.get("threshold").and_then(Value::as_f64).unwrap_or(0.0);
            if summarize_detection(&s.rows, threshold) != s.metrics {
                return Err(format!("detection metrics for k={} do not match rows", s.k));
            }
        }
        if let Some(a) = &self.attack {
            if AttackSummary::new(a.records.clone()) != *a {
                return Err("attack summary does not match its records".into());
            }
        }
        Ok(())
    }

    /// Pretty JSON with sorted keys and floats rounded to 6 decimals.
    pub fn to_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        round_floats(&mut v);
        let mut s = serde_json::to_string_pretty(&v).expect("report serializes");
        s.push('\n');
        s
    }

    /// Per-clip rows of whichever section the report carries.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if let Some(d) = &self.defense {
            out.push_str("id,label,wer_plain,wer_transformed,cer_plain,cer_transformed,plain,transformed\n");
            for r in &d.rows {
                writeln!(
                    out,
                    "{},{},{:.6},{:.6},{:.6},{:.6},{},{}",
                    r.id,
                    label_name(r.label),
                    r.wer_plain,
                    r.wer_transformed,
                    r.cer_plain,
                    r.cer_transformed,
                    r.plain,
                    r.transformed
                )
                .expect("string write");
            }
        }
        if !self.detection.is_empty() {
            out.push_str("id,k,metric,score,label\n");
            for s in &self.detection {
                for r in &s.rows {
                    for m in Metric::ALL {
                        writeln!(out, "{},{:.6},{},{:.6},{}", r.id, r.k, m.name(), r.score(m), label_name(r.label))
                            .expect("string write");
                    }
                }
            }
        }
        if let Some(a) = &self.attack {
            out.push_str("id,variant,target,achieved,success,db,c,iterations\n");
            for r in &a.records {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    r.id,
                    r.variant,
                    r.target.as_str(),
                    r.achieved.as_str(),
                    r.success,
                    r.db,
                    r.c,
                    r.iterations
                )
                .expect("string write");
            }
        }
        out
    }
}

pub fn label_name(label: Label) -> &'static str {
    match label {
        Label::Benign => "benign",
        Label::Adversarial => "adversarial",
    }
}
