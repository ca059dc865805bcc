//! Confusion counts and predictive-value measures for multi-label output.
//!
//! A prediction is positive when its probability is at least the threshold.
//! PPV (= precision), NPV and recall are undefined when their denominator is
//! zero. The F-measure is `2·TP / (2·TP + FP + FN)`, which equals the
//! harmonic mean of PPV and recall whenever both are defined and non-zero;
//! it is undefined only for a label with no positive predictions and no
//! positive targets. Macro averages skip undefined entries and report how
//! many were skipped.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Counts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub labels: Vec<Counts>,
}

impl ConfusionCounts {
    /// Sums counts label by label, as if the samples had been scored together.
    pub fn pooled(parts: &[ConfusionCounts]) -> Result<ConfusionCounts> {
        let width = parts.first().map_or(0, |c| c.labels.len());
        let mut labels = vec![Counts::default(); width];
        for part in parts {
            if part.labels.len() != width {
                return Err(Error::shape("pooled counts", width, part.labels.len()));
            }
            for (acc, c) in labels.iter_mut().zip(&part.labels) {
                acc.tp += c.tp;
                acc.fp += c.fp;
                acc.tn += c.tn;
                acc.fn_ += c.fn_;
            }
        }
        Ok(ConfusionCounts { labels })
    }

    pub fn samples(&self) -> u64 {
        self.labels.first().map_or(0, Counts::total)
    }
}

pub fn confusion(
    preds: &[Vec<f64>],
    targets: &[Vec<u8>],
    threshold: f64,
) -> Result<ConfusionCounts> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Config(format!("threshold {threshold} outside (0, 1)")));
    }
    if preds.len() != targets.len() {
        return Err(Error::shape(
            "confusion",
            format!("{} predictions", preds.len()),
            format!("{} targets", targets.len()),
        ));
    }
    let width = preds.first().map_or(0, Vec::len);
    let mut labels = vec![Counts::default(); width];
    for (row, (p, t)) in preds.iter().zip(targets).enumerate() {
        if p.len() != width || t.len() != width {
            return Err(Error::shape(
                "confusion",
                format!("row {row}: {} predictions", p.len()),
                format!("{} targets (expected {width})", t.len()),
            ));
        }
        for ((c, &prob), &target) in labels.iter_mut().zip(p).zip(t) {
            match (prob >= threshold, target != 0) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
    }
    Ok(ConfusionCounts { labels })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct LabelMetrics {
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub recall: Option<f64>,
    pub f_measure: Option<f64>,
}

impl LabelMetrics {
    /// Precision is the same quantity as PPV.
    pub fn precision(&self) -> Option<f64> {
        self.ppv
    }

    pub fn from_counts(c: &Counts) -> Self {
        let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
        LabelMetrics {
            ppv: ratio(c.tp, c.tp + c.fp),
            npv: ratio(c.tn, c.tn + c.fn_),
            recall: ratio(c.tp, c.tp + c.fn_),
            f_measure: ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_),
        }
    }
}

/// Number of labels left out of each macro average.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Skipped {
    pub ppv: usize,
    pub npv: usize,
    pub recall: usize,
    pub f_measure: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub label_names: Vec<String>,
    pub per_label: Vec<LabelMetrics>,
    pub macro_avg: LabelMetrics,
    pub skipped: Skipped,
    pub counts: ConfusionCounts,
}

pub fn ppv_npv_f(counts: &ConfusionCounts, label_names: &[String]) -> MetricsReport {
    let per_label: Vec<LabelMetrics> = counts.labels.iter().map(LabelMetrics::from_counts).collect();
    let avg = |get: fn(&LabelMetrics) -> Option<f64>| {
        let vals: Vec<f64> = per_label.iter().filter_map(get).collect();
        let skipped = per_label.len() - vals.len();
        let mean = (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
        (mean, skipped)
    };
    let (ppv, s_ppv) = avg(|m| m.ppv);
    let (npv, s_npv) = avg(|m| m.npv);
    let (recall, s_recall) = avg(|m| m.recall);
    let (f_measure, s_f) = avg(|m| m.f_measure);
    let label_names = if label_names.len() == per_label.len() {
        label_names.to_vec()
    } else {
        (0..per_label.len()).map(|i| i.to_string()).collect()
    };
    MetricsReport {
        label_names,
        per_label,
        macro_avg: LabelMetrics {
            ppv,
            npv,
            recall,
            f_measure,
        },
        skipped: Skipped {
            ppv: s_ppv,
            npv: s_npv,
            recall: s_recall,
            f_measure: s_f,
        },
        counts: counts.clone(),
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "undef".to_string(), |x| format!("{x:.4}"))
}

const ROWS: [(&str, fn(&LabelMetrics) -> Option<f64>); 3] = [
    ("PPV", |m| m.ppv),
    ("NPV", |m| m.npv),
    ("F-measure", |m| m.f_measure),
];

impl MetricsReport {
    /// Long-format CSV: one row per (label, metric), the macro average under
    /// label `avg`, then raw counts.
    pub fn to_csv(&self, model: &str) -> String {
        let mut out = String::from("model,label,metric,value\n");
        let all = [
            ("ppv", (|m: &LabelMetrics| m.ppv) as fn(&LabelMetrics) -> Option<f64>),
            ("npv", |m| m.npv),
            ("recall", |m| m.recall),
            ("f_measure", |m| m.f_measure),
        ];
        for (name, m) in self.label_names.iter().zip(&self.per_label) {
            for (metric, get) in all {
                let _ = writeln!(out, "{model},{name},{metric},{}", csv_value(get(m)));
            }
        }
        for (metric, get) in all {
            let _ = writeln!(out, "{model},avg,{metric},{}", csv_value(get(&self.macro_avg)));
        }
        for (name, c) in self.label_names.iter().zip(&self.counts.labels) {
            for (metric, v) in [("tp", c.tp), ("fp", c.fp), ("tn", c.tn), ("fn", c.fn_)] {
                let _ = writeln!(out, "{model},{name},{metric},{v}");
            }
        }
        out
    }

    /// Rows PPV / NPV / F-measure, one column per label plus `avg.`.
    pub fn to_markdown(&self, model: &str) -> String {
        comparison_markdown(&[(model, self)])
    }
}

fn csv_value(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:?}"))
}

/// One block per model, each with a title row followed by PPV, NPV and
/// F-measure rows.
pub fn comparison_markdown(models: &[(&str, &MetricsReport)]) -> String {
    let names = models
        .first()
        .map(|(_, r)| r.label_names.clone())
        .unwrap_or_default();
    let mut out = String::from("| |");
    for n in &names {
        let _ = write!(out, " {n} |");
    }
    out.push_str(" avg. |\n|---|");
    for _ in 0..=names.len() {
        out.push_str("---|");
    }
    out.push('\n');
    for (model, report) in models {
        let _ = write!(out, "| **{model}** |");
        for _ in 0..=names.len() {
            out.push_str(" |");
        }
        out.push('\n');
        for (row, get) in ROWS {
            let _ = write!(out, "| {row} |");
            for m in &report.per_label {
                let _ = write!(out, " {} |", cell(get(m)));
            }
            let _ = writeln!(out, " {} |", cell(get(&report.macro_avg)));
        }
    }
    out
}
