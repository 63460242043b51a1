//! Corpus-level hierarchical precision/recall/F-beta, flat binary F1 and
//! percentile bootstrap intervals.
//!
//! Hierarchical scores sum over instances before dividing:
//!
//! ```text
//! HP = Σ|gold_i ∩ pred_i| / Σ|pred_i|
//! HR = Σ|gold_i ∩ pred_i| / Σ|gold_i|
//! Fβ = (β² + 1)·HP·HR / (β²·HP + HR)
//! ```
//!
//! where both sides are ancestor-closed (root excluded) first. Zero
//! denominators: no gold and no predictions anywhere scores 1/1/1; otherwise
//! an empty side gives 0 for the ratio that divides by it.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::hierarchy::{HierarchyError, LabelHierarchy, LabelSet};

pub const POSITIVE: &str = "propagandistic";
pub const NEGATIVE: &str = "not_propagandistic";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("prediction for id `{0}` has no gold counterpart")]
    UnexpectedId(String),
    #[error("no prediction for id `{0}`")]
    MissingPrediction(String),
    #[error("beta must be finite and non-negative, got {0}")]
    InvalidBeta(f64),
    #[error("bootstrap needs at least 2 instances, got {0}")]
    TooFewInstances(usize),
    #[error("bootstrap needs at least 100 resamples, got {0}")]
    TooFewResamples(usize),
    #[error("confidence must lie in (0, 1), got {0}")]
    InvalidConfidence(f64),
    #[error(transparent)]
    Label(#[from] HierarchyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HierarchicalScore {
    pub hp: f64,
    pub hr: f64,
    pub hf_beta: f64,
    pub beta: f64,
}

/// Extended-set sizes for one instance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceCounts {
    pub intersection: u64,
    pub predicted: u64,
    pub gold: u64,
}

impl core::ops::AddAssign for InstanceCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.intersection += rhs.intersection;
        self.predicted += rhs.predicted;
        self.gold += rhs.gold;
    }
}

impl InstanceCounts {
    pub fn score(&self, beta: f64) -> HierarchicalScore {
        let (hp, hr) = match (self.predicted, self.gold) {
            (0, 0) => (1.0, 1.0),
            (p, g) => (ratio(self.intersection, p), ratio(self.intersection, g)),
        };
        HierarchicalScore {
            hp,
            hr,
            hf_beta: f_beta(hp, hr, beta),
            beta,
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Weighted harmonic mean of precision and recall.
pub fn f_beta(precision: f64, recall: f64, beta: f64) -> f64 {
    if precision == recall {
        return precision;
    }
    let b2 = beta * beta;
    let den = b2 * precision + recall;
    if den <= 0.0 {
        return 0.0;
    }
    let f = (b2 + 1.0) * precision * recall / den;
    f.clamp(precision.min(recall), precision.max(recall))
}

/// Gold and predictions paired by id, with per-instance counts.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedCounts {
    pub ids: Vec<String>,
    pub counts: Vec<InstanceCounts>,
    /// Gold ids that had no prediction; scored as empty predictions.
    pub missing: Vec<String>,
}

impl AlignedCounts {
    pub fn totals(&self) -> InstanceCounts {
        self.totals_over(0..self.counts.len())
    }

    pub fn totals_over(&self, indices: impl IntoIterator<Item = usize>) -> InstanceCounts {
        let mut acc = InstanceCounts::default();
        for i in indices {
            acc += self.counts[i];
        }
        acc
    }
}

fn check_beta(beta: f64) -> Result<(), MetricsError> {
    if beta.is_finite() && beta >= 0.0 {
        Ok(())
    } else {
        Err(MetricsError::InvalidBeta(beta))
    }
}

fn check_ids<V, W>(
    gold: &BTreeMap<String, V>,
    pred: &BTreeMap<String, W>,
) -> Result<(), MetricsError> {
    if gold.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    if let Some(id) = pred.keys().find(|id| !gold.contains_key(*id)) {
        return Err(MetricsError::UnexpectedId(id.clone()));
    }
    Ok(())
}

/// Close both sides and count per instance, in gold id order.
pub fn aligned_counts(
    h: &LabelHierarchy,
    gold: &BTreeMap<String, LabelSet>,
    pred: &BTreeMap<String, LabelSet>,
) -> Result<AlignedCounts, MetricsError> {
    check_ids(gold, pred)?;
    let empty = LabelSet::empty();
    let mut out = AlignedCounts {
        ids: Vec::with_capacity(gold.len()),
        counts: Vec::with_capacity(gold.len()),
        missing: Vec::new(),
    };
    for (id, g) in gold {
        let p = match pred.get(id) {
            Some(p) => p,
            None => {
                out.missing.push(id.clone());
                &empty
            }
        };
        let g = h.extend(g)?;
        let p = h.extend(p)?;
        out.ids.push(id.clone());
        out.counts.push(InstanceCounts {
            intersection: g.intersection_len(&p) as u64,
            predicted: p.len() as u64,
            gold: g.len() as u64,
        });
    }
    Ok(out)
}

pub fn hierarchical_score(
    h: &LabelHierarchy,
    gold: &BTreeMap<String, LabelSet>,
    pred: &BTreeMap<String, LabelSet>,
    beta: f64,
) -> Result<HierarchicalScore, MetricsError> {
    check_beta(beta)?;
    Ok(aligned_counts(h, gold, pred)?.totals().score(beta))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub false_neg: u64,
}

/// Per-label tallies over extended sets, keyed by label name. Every non-root
/// label appears, including those with all-zero counts.
pub fn per_class_hierarchical_diagnostics(
    h: &LabelHierarchy,
    gold: &BTreeMap<String, LabelSet>,
    pred: &BTreeMap<String, LabelSet>,
) -> Result<BTreeMap<String, ClassCounts>, MetricsError> {
    check_ids(gold, pred)?;
    let mut tallies = alloc::vec![ClassCounts::default(); h.len()];
    let empty = LabelSet::empty();
    for (id, g) in gold {
        let g = h.extend(g)?;
        let p = h.extend(pred.get(id).unwrap_or(&empty))?;
        for label in g.iter() {
            if p.contains(label) {
                tallies[label.index()].true_pos += 1;
            } else {
                tallies[label.index()].false_neg += 1;
            }
        }
        for label in p.iter().filter(|l| !g.contains(*l)) {
            tallies[label.index()].false_pos += 1;
        }
    }
    Ok(h
        .labels()
        .map(|id| (h.name(id).to_string(), tallies[id.index()]))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatScore {
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub per_class: BTreeMap<String, ClassScore>,
}

/// Binary confusion counts; `tp`/`fp`/`fn_`/`tn` relative to the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn add(&mut self, gold: bool, pred: bool) {
        match (gold, pred) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn score(&self) -> FlatScore {
        let pos = class_score(self.tp, self.fp, self.fn_);
        let neg = class_score(self.tn, self.fn_, self.fp);
        let mut per_class = BTreeMap::new();
        per_class.insert(POSITIVE.to_string(), pos);
        per_class.insert(NEGATIVE.to_string(), neg);
        FlatScore {
            micro_f1: pos.f1,
            macro_f1: (pos.f1 + neg.f1) / 2.0,
            per_class,
        }
    }
}

fn class_score(tp: u64, fp: u64, fn_: u64) -> ClassScore {
    let support = tp + fn_;
    if tp + fp + fn_ == 0 {
        return ClassScore {
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
            support,
        };
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, support);
    ClassScore {
        precision,
        recall,
        f1: f_beta(precision, recall, 1.0),
        support,
    }
}

/// Binary propagandistic / not-propagandistic scoring. Micro-F1 is the pooled
/// F1 of the positive class, macro-F1 the unweighted mean of both class F1s.
pub fn flat_binary_score(
    gold: &BTreeMap<String, bool>,
    pred: &BTreeMap<String, bool>,
) -> Result<FlatScore, MetricsError> {
    Ok(binary_confusions(gold, pred)?
        .into_iter()
        .fold(Confusion::default(), |mut acc, c| {
            acc.tp += c.tp;
            acc.fp += c.fp;
            acc.fn_ += c.fn_;
            acc.tn += c.tn;
            acc
        })
        .score())
}

/// One single-instance confusion per gold id, in id order.
pub fn binary_confusions(
    gold: &BTreeMap<String, bool>,
    pred: &BTreeMap<String, bool>,
) -> Result<Vec<Confusion>, MetricsError> {
    check_ids(gold, pred)?;
    gold.iter()
        .map(|(id, &g)| {
            let p = *pred
                .get(id)
                .ok_or_else(|| MetricsError::MissingPrediction(id.clone()))?;
            let mut c = Confusion::default();
            c.add(g, p);
            Ok(c)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub seed: u64,
    pub confidence: f64,
}

impl BootstrapConfig {
    /// 1000 resamples at 95% confidence.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            resamples: 1000,
            seed,
            confidence: 0.95,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapInterval {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub resamples: usize,
    pub seed: u64,
    pub confidence: f64,
}

/// Fill `out` with the `n` instance indices drawn for resample `resample`.
///
/// Resample `k` reads ChaCha8 seeded from `seed` on stream `k`; each index is
/// the high 64 bits of `next_u64() * n`.
pub fn resample_indices(seed: u64, resample: u64, n: usize, out: &mut Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(resample);
    out.clear();
    out.extend((0..n).map(|_| ((rng.next_u64() as u128 * n as u128) >> 64) as usize));
}

/// Percentile bootstrap over instance resampling. `score` receives the
/// indices of one resample (with repetition); the point estimate is `score`
/// on `0..n`. The interval is widened, if needed, to contain the point.
pub fn bootstrap_ci<F>(n: usize, cfg: &BootstrapConfig, score: F) -> Result<BootstrapInterval, MetricsError>
where
    F: Fn(&[usize]) -> f64,
{
    if n < 2 {
        return Err(MetricsError::TooFewInstances(n));
    }
    if cfg.resamples < 100 {
        return Err(MetricsError::TooFewResamples(cfg.resamples));
    }
    if !(cfg.confidence > 0.0 && cfg.confidence < 1.0) {
        return Err(MetricsError::InvalidConfidence(cfg.confidence));
    }
    let full: Vec<usize> = (0..n).collect();
    let point = score(&full);
    let mut buf = Vec::with_capacity(n);
    let mut stats: Vec<f64> = (0..cfg.resamples as u64)
        .map(|k| {
            resample_indices(cfg.seed, k, n, &mut buf);
            score(&buf)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let (lo, hi) = percentile_ranks(cfg.resamples, cfg.confidence);
    Ok(BootstrapInterval {
        point,
        lower: stats[lo].min(point),
        upper: stats[hi].max(point),
        resamples: cfg.resamples,
        seed: cfg.seed,
        confidence: cfg.confidence,
    })
}

/// Sorted-order ranks of the lower and upper percentile for `b` resamples.
pub fn percentile_ranks(b: usize, confidence: f64) -> (usize, usize) {
    let tail = (1.0 - confidence) / 2.0;
    // nudge past representation error in `1 - confidence`
    let lo = libm::floor(tail * b as f64 + 1e-9) as usize;
    let hi = (libm::ceil((1.0 - tail) * b as f64 - 1e-9) as usize).saturating_sub(1);
    (lo.min(b - 1), hi.min(b - 1).max(lo.min(b - 1)))
}

/// Which hierarchical component a bootstrap interval is for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Precision,
    Recall,
    FBeta,
}

pub fn hierarchical_bootstrap(
    counts: &AlignedCounts,
    beta: f64,
    component: Component,
    cfg: &BootstrapConfig,
) -> Result<BootstrapInterval, MetricsError> {
    check_beta(beta)?;
    bootstrap_ci(counts.counts.len(), cfg, |idx| {
        let s = counts.totals_over(idx.iter().copied()).score(beta);
        match component {
            Component::Precision => s.hp,
            Component::Recall => s.hr,
            Component::FBeta => s.hf_beta,
        }
    })
}

/// Bootstrap of micro-F1 (`macro_ = false`) or macro-F1 over binary instances.
pub fn binary_bootstrap(
    confusions: &[Confusion],
    macro_: bool,
    cfg: &BootstrapConfig,
) -> Result<BootstrapInterval, MetricsError> {
    bootstrap_ci(confusions.len(), cfg, |idx| {
        let mut acc = Confusion::default();
        for &i in idx {
            let c = confusions[i];
            acc.tp += c.tp;
            acc.fp += c.fp;
            acc.fn_ += c.fn_;
            acc.tn += c.tn;
        }
        let s = acc.score();
        if macro_ {
            s.macro_f1
        } else {
            s.micro_f1
        }
    })
}
