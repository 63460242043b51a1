//! Score reports: a JSON document for machines and a fixed-width table for
//! people.

use std::collections::BTreeMap;
use std::fmt::Write;

use persuade_core::metrics::{
    self, BootstrapConfig, BootstrapInterval, ClassCounts, Component, FlatScore, MetricsError,
};
use persuade_core::{LabelHierarchy, LabelSet};
use serde::{Deserialize, Serialize};

use crate::formats::Task;

/// Round to 6 decimal places.
pub fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triple {
    pub hp: f64,
    pub hr: f64,
    pub hf_beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchicalSection {
    pub beta: f64,
    pub score: Triple,
    /// The same values on a 0-100 scale.
    pub percent: Triple,
    pub per_class: BTreeMap<String, ClassCounts>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatSection {
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub micro_f1_percent: f64,
    pub macro_f1_percent: f64,
    pub per_class: BTreeMap<String, metrics::ClassScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub toolkit_version: String,
    pub task: Task,
    pub instances: usize,
    /// Gold ids without a prediction; they were scored as empty sets.
    pub missing_predictions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hierarchical: Option<HierarchicalSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flat: Option<FlatSection>,
    /// Intervals keyed by metric name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub bootstrap: BTreeMap<String, BootstrapInterval>,
}

fn rounded(i: BootstrapInterval) -> BootstrapInterval {
    BootstrapInterval {
        point: round6(i.point),
        lower: round6(i.lower),
        upper: round6(i.upper),
        ..i
    }
}

pub fn hierarchical_report(
    h: &LabelHierarchy,
    gold: &BTreeMap<String, LabelSet>,
    pred: &BTreeMap<String, LabelSet>,
    beta: f64,
    bootstrap: Option<&BootstrapConfig>,
) -> Result<ScoreReport, MetricsError> {
    if gold.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let counts = metrics::aligned_counts(h, gold, pred)?;
    let s = metrics::hierarchical_score(h, gold, pred, beta)?;
    let score = Triple {
        hp: round6(s.hp),
        hr: round6(s.hr),
        hf_beta: round6(s.hf_beta),
    };
    let percent = Triple {
        hp: round6(s.hp * 100.0),
        hr: round6(s.hr * 100.0),
        hf_beta: round6(s.hf_beta * 100.0),
    };
    let mut intervals = BTreeMap::new();
    if let Some(cfg) = bootstrap {
        for (name, c) in [("hp", Component::Precision), ("hr", Component::Recall), ("hf_beta", Component::FBeta)] {
            intervals.insert(name.to_string(), rounded(metrics::hierarchical_bootstrap(&counts, beta, c, cfg)?));
        }
    }
    Ok(ScoreReport {
        toolkit_version: env!("CARGO_PKG_VERSION").into(),
        task: Task::Hier,
        instances: gold.len(),
        missing_predictions: counts.missing.clone(),
        hierarchical: Some(HierarchicalSection {
            beta,
            score,
            percent,
            per_class: metrics::per_class_hierarchical_diagnostics(h, gold, pred)?,
        }),
        flat: None,
        bootstrap: intervals,
    })
}

pub fn binary_report(
    gold: &BTreeMap<String, bool>,
    pred: &BTreeMap<String, bool>,
    bootstrap: Option<&BootstrapConfig>,
) -> Result<ScoreReport, MetricsError> {
    if gold.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let FlatScore {
        micro_f1,
        macro_f1,
        per_class,
    } = metrics::flat_binary_score(gold, pred)?;
    let mut intervals = BTreeMap::new();
    if let Some(cfg) = bootstrap {
        let confusions = metrics::binary_confusions(gold, pred)?;
        intervals.insert("micro_f1".into(), rounded(metrics::binary_bootstrap(&confusions, false, cfg)?));
        intervals.insert("macro_f1".into(), rounded(metrics::binary_bootstrap(&confusions, true, cfg)?));
    }
    let per_class = per_class
        .into_iter()
        .map(|(k, c)| {
            let c = metrics::ClassScore {
                precision: round6(c.precision),
                recall: round6(c.recall),
                f1: round6(c.f1),
                support: c.support,
            };
            (k, c)
        })
        .collect();
    Ok(ScoreReport {
        toolkit_version: env!("CARGO_PKG_VERSION").into(),
        task: Task::Binary,
        instances: gold.len(),
        missing_predictions: Vec::new(),
        hierarchical: None,
        flat: Some(FlatSection {
            micro_f1: round6(micro_f1),
            macro_f1: round6(macro_f1),
            micro_f1_percent: round6(micro_f1 * 100.0),
            macro_f1_percent: round6(macro_f1 * 100.0),
            per_class,
        }),
        bootstrap: intervals,
    })
}

impl ScoreReport {
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "instances: {}", self.instances);
        if let Some(hs) = &self.hierarchical {
            let f = if hs.beta == 1.0 { "H-F1".to_string() } else { format!("H-F{}", hs.beta) };
            let _ = writeln!(out, "{:<8} {:>12} {:>12} {:>12}", "", f, "H-Precision", "H-Recall");
            let _ = writeln!(
                out,
                "{:<8} {:>12.6} {:>12.6} {:>12.6}",
                "score", hs.score.hf_beta, hs.score.hp, hs.score.hr
            );
            let _ = writeln!(
                out,
                "{:<8} {:>12.3} {:>12.3} {:>12.3}",
                "x100", hs.percent.hf_beta, hs.percent.hp, hs.percent.hr
            );
            if let (Some(f), Some(p), Some(r)) = (
                self.bootstrap.get("hf_beta"),
                self.bootstrap.get("hp"),
                self.bootstrap.get("hr"),
            ) {
                let ci = |i: &BootstrapInterval| format!("{:.3}-{:.3}", i.lower, i.upper);
                let _ = writeln!(
                    out,
                    "{:<8} {:>12} {:>12} {:>12}",
                    format!("{:.0}% CI", f.confidence * 100.0),
                    ci(f),
                    ci(p),
                    ci(r)
                );
            }
        }
        if let Some(fs) = &self.flat {
            let _ = writeln!(out, "{:<8} {:>12} {:>12}", "", "Macro-F1", "Micro-F1");
            let _ = writeln!(out, "{:<8} {:>12.6} {:>12.6}", "score", fs.macro_f1, fs.micro_f1);
            let _ = writeln!(out, "{:<8} {:>12.3} {:>12.3}", "x100", fs.macro_f1_percent, fs.micro_f1_percent);
            if let (Some(ma), Some(mi)) = (self.bootstrap.get("macro_f1"), self.bootstrap.get("micro_f1")) {
                let _ = writeln!(
                    out,
                    "{:<8} {:>12} {:>12}",
                    format!("{:.0}% CI", ma.confidence * 100.0),
                    format!("{:.3}-{:.3}", ma.lower, ma.upper),
                    format!("{:.3}-{:.3}", mi.lower, mi.upper)
                );
            }
        }
        if !self.missing_predictions.is_empty() {
            let _ = writeln!(
                out,
                "missing predictions (scored as empty): {}",
                self.missing_predictions.join(", ")
            );
        }
        out
    }
}
