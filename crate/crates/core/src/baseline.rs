//! Hashed n-gram one-vs-rest logistic regression over the label hierarchy.
//!
//! Every non-root label gets its own head. Heads are trained on membership in
//! the ancestor-closed gold set, so internal nodes see the positives of all
//! their descendants. Predictions threshold each head and close the result
//! under ancestors, which makes every output hierarchy-consistent.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::captioner::fnv1a;
use crate::corpus::MemeInstance;
use crate::hierarchy::{ExtendedLabelSet, HierarchyError, LabelHierarchy, LabelSet};
use crate::metrics::InstanceCounts;
use crate::textmetrics::TokenSequence;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BaselineError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("dev corpus is empty")]
    EmptyDevCorpus,
    #[error("instance `{0}` has no gold labels")]
    MissingGold(String),
    #[error("instance `{0}` has no caption and captions are required")]
    MissingCaption(String),
    #[error("instance `{id}`: {source}")]
    Label { id: String, source: HierarchyError },
    #[error("model was trained on hierarchy {expected}, got {actual}")]
    HierarchyMismatch { expected: String, actual: String },
    #[error("feature dimension {0} is not a power of two")]
    Dimension(u32),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InputMode {
    #[default]
    #[serde(rename = "text")]
    Text,
    #[serde(rename = "text+caption")]
    TextCaption,
}

impl InputMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Text => "text",
            Self::TextCaption => "text+caption",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "text" => Some(Self::Text),
            "text+caption" => Some(Self::TextCaption),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub dimension: u32,
    pub word_ngrams: (u8, u8),
    pub char_ngrams: (u8, u8),
    pub mode: InputMode,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            dimension: 1 << 18,
            word_ngrams: (1, 2),
            char_ngrams: (3, 5),
            mode: InputMode::Text,
        }
    }
}

/// Sparse, L2-normalized (or all-zero) hashed feature vector.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub dimension: u32,
    /// `(bucket, weight)` sorted by bucket, no zero weights.
    pub entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    pub fn norm(&self) -> f64 {
        libm::sqrt(self.entries.iter().map(|(_, v)| v * v).sum())
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }
}

pub struct Featurized {
    pub vector: FeatureVector,
    /// Caption mode was requested but no caption was available.
    pub degraded: bool,
}

struct Accumulator {
    mask: u64,
    buckets: BTreeMap<u32, f64>,
}

impl Accumulator {
    fn add(&mut self, namespace: &str, kind: &str, parts: &[&str]) {
        let mut h = fnv1a(namespace.as_bytes(), 0);
        h = fold(h, kind.as_bytes());
        for (i, p) in parts.iter().enumerate() {
            if i > 0 {
                h = fold(h, b" ");
            }
            h = fold(h, p.as_bytes());
        }
        // extra mixing so low bits see the whole key
        h ^= h >> 33;
        h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
        h ^= h >> 33;
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        *self.buckets.entry((h & self.mask) as u32).or_insert(0.0) += sign;
    }

    fn text(&mut self, namespace: &str, text: &str, cfg: &FeatureConfig) {
        let tokens = TokenSequence::tokenize(text);
        let words: Vec<&str> = tokens
            .tokens()
            .iter()
            .map(String::as_str)
            .filter(|t| t.chars().any(char::is_alphanumeric))
            .collect();
        for n in cfg.word_ngrams.0.max(1)..=cfg.word_ngrams.1 {
            let n = n as usize;
            if words.len() >= n {
                for w in words.windows(n) {
                    self.add(namespace, "w", w);
                }
            }
        }
        if words.is_empty() {
            return;
        }
        let mut joined = String::from(" ");
        joined.push_str(&words.join(" "));
        joined.push(' ');
        let bounds: Vec<usize> = joined
            .char_indices()
            .map(|(i, _)| i)
            .chain(core::iter::once(joined.len()))
            .collect();
        let chars = bounds.len() - 1;
        for n in cfg.char_ngrams.0.max(1)..=cfg.char_ngrams.1 {
            let n = n as usize;
            for start in 0..chars.saturating_sub(n - 1) {
                self.add(namespace, "c", &[&joined[bounds[start]..bounds[start + n]]]);
            }
        }
    }
}

fn fold(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Hash word and character n-grams of `text` (and of `caption` in
/// text+caption mode, under its own namespace) into `cfg.dimension` signed
/// buckets, then L2-normalize.
pub fn featurize(text: &str, caption: Option<&str>, mode: InputMode, cfg: &FeatureConfig) -> Featurized {
    let mut acc = Accumulator {
        mask: u64::from(cfg.dimension.max(1)) - 1,
        buckets: BTreeMap::new(),
    };
    acc.text("t", text, cfg);
    let mut degraded = false;
    if mode == InputMode::TextCaption {
        match caption {
            Some(c) => acc.text("c", c, cfg),
            None => degraded = true,
        }
    }
    let mut entries: Vec<(u32, f64)> = acc.buckets.into_iter().filter(|(_, v)| *v != 0.0).collect();
    let norm = libm::sqrt(entries.iter().map(|(_, v)| v * v).sum());
    if norm > 0.0 {
        for (_, v) in entries.iter_mut() {
            *v /= norm;
        }
    }
    Featurized {
        vector: FeatureVector {
            dimension: cfg.dimension,
            entries,
        },
        degraded,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub l2: f64,
    pub learning_rate: f64,
    pub epochs: u32,
    pub features: FeatureConfig,
    /// Fail instead of degrading when text+caption mode meets a missing caption.
    pub strict_captions: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            learning_rate: 0.5,
            epochs: 200,
            features: FeatureConfig::default(),
            strict_captions: false,
        }
    }
}

/// A binary logistic problem over a compact column space.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticProblem {
    pub columns: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
    pub targets: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + libm::log1p(libm::exp(-z.abs()))
}

impl LogisticProblem {
    /// Mean log-loss plus `l2/2·‖w‖²` (bias unpenalized), with its gradient.
    pub fn loss_and_grad(&self, weights: &[f64], bias: f64, l2: f64) -> (f64, Vec<f64>, f64) {
        let n = self.rows.len().max(1) as f64;
        let mut grad: Vec<f64> = weights.iter().map(|w| l2 * w).collect();
        let mut grad_b = 0.0;
        let mut loss = 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>();
        for (row, &y) in self.rows.iter().zip(&self.targets) {
            let z = bias + row.iter().map(|&(j, x)| weights[j] * x).sum::<f64>();
            loss += (softplus(z) - y * z) / n;
            let r = (sigmoid(z) - y) / n;
            grad_b += r;
            for &(j, x) in row {
                grad[j] += r * x;
            }
        }
        (loss, grad, grad_b)
    }

    /// Full-batch gradient descent from zero.
    pub fn fit(&self, l2: f64, learning_rate: f64, epochs: u32) -> (Vec<f64>, f64) {
        let mut w = vec![0.0; self.columns];
        let mut b = 0.0;
        let n = self.rows.len().max(1) as f64;
        let mut grad = vec![0.0; self.columns];
        for _ in 0..epochs {
            for (g, wj) in grad.iter_mut().zip(&w) {
                *g = l2 * wj;
            }
            let mut grad_b = 0.0;
            for (row, &y) in self.rows.iter().zip(&self.targets) {
                let z = b + row.iter().map(|&(j, x)| w[j] * x).sum::<f64>();
                let r = (sigmoid(z) - y) / n;
                grad_b += r;
                for &(j, x) in row {
                    grad[j] += r * x;
                }
            }
            for (wj, g) in w.iter_mut().zip(&grad) {
                *wj -= learning_rate * g;
            }
            b -= learning_rate * grad_b;
        }
        (w, b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub label: String,
    /// Aligned with [`HierModel::buckets`].
    pub weights: Vec<f64>,
    pub bias: f64,
    pub threshold: f64,
    /// No positives at training time; never fires.
    pub always_negative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierModel {
    pub format_version: u32,
    pub hierarchy_fingerprint: String,
    pub features: FeatureConfig,
    pub hyperparams: Hyperparams,
    pub seed: u64,
    /// Hash buckets seen in training, ascending.
    pub buckets: Vec<u32>,
    /// One head per non-root label, ordered by label name.
    pub heads: Vec<Head>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrainWarning {
    NoPositives(String),
    MissingCaptions(usize),
}

pub struct Trained {
    pub model: HierModel,
    pub warnings: Vec<TrainWarning>,
}

fn extended_gold(h: &LabelHierarchy, inst: &MemeInstance) -> Result<ExtendedLabelSet, BaselineError> {
    let labels = inst
        .labels
        .as_ref()
        .ok_or_else(|| BaselineError::MissingGold(inst.id.clone()))?;
    let wrap = |source| BaselineError::Label {
        id: inst.id.clone(),
        source,
    };
    h.extend(&h.label_set(labels).map_err(wrap)?).map_err(wrap)
}

fn features_for(
    inst: &MemeInstance,
    features: &FeatureConfig,
    strict: bool,
) -> Result<Featurized, BaselineError> {
    let f = featurize(&inst.text, inst.caption.as_deref(), features.mode, features);
    if f.degraded && strict {
        return Err(BaselineError::MissingCaption(inst.id.clone()));
    }
    Ok(f)
}

/// Train one head per non-root label. The result depends only on the inputs;
/// gradient descent starts from zero, so `seed` is recorded for provenance.
pub fn train(
    corpus: &[MemeInstance],
    h: &LabelHierarchy,
    hyper: &Hyperparams,
    seed: u64,
) -> Result<Trained, BaselineError> {
    if corpus.is_empty() {
        return Err(BaselineError::EmptyCorpus);
    }
    if !hyper.features.dimension.is_power_of_two() {
        return Err(BaselineError::Dimension(hyper.features.dimension));
    }
    let mut warnings = Vec::new();
    let mut degraded = 0usize;
    let mut vectors = Vec::with_capacity(corpus.len());
    let mut golds = Vec::with_capacity(corpus.len());
    for inst in corpus {
        golds.push(extended_gold(h, inst)?);
        let f = features_for(inst, &hyper.features, hyper.strict_captions)?;
        degraded += usize::from(f.degraded);
        vectors.push(f.vector);
    }
    if degraded > 0 {
        warnings.push(TrainWarning::MissingCaptions(degraded));
    }

    let mut buckets: Vec<u32> = vectors.iter().flat_map(|v| v.entries.iter().map(|e| e.0)).collect();
    buckets.sort_unstable();
    buckets.dedup();
    let rows: Vec<Vec<(usize, f64)>> = vectors
        .iter()
        .map(|v| {
            v.entries
                .iter()
                .map(|&(b, x)| (buckets.binary_search(&b).unwrap_or_default(), x))
                .collect()
        })
        .collect();

    let mut problem = LogisticProblem {
        columns: buckets.len(),
        rows,
        targets: vec![0.0; corpus.len()],
    };
    let mut heads = Vec::new();
    for label in h.labels_by_name() {
        let name = h.name(label).to_string();
        for (t, g) in problem.targets.iter_mut().zip(&golds) {
            *t = if g.contains(label) { 1.0 } else { 0.0 };
        }
        if problem.targets.iter().all(|&t| t == 0.0) {
            warnings.push(TrainWarning::NoPositives(name.clone()));
            heads.push(Head {
                label: name,
                weights: vec![0.0; buckets.len()],
                bias: 0.0,
                threshold: 0.5,
                always_negative: true,
            });
            continue;
        }
        let (weights, bias) = problem.fit(hyper.l2, hyper.learning_rate, hyper.epochs);
        heads.push(Head {
            label: name,
            weights,
            bias,
            threshold: 0.5,
            always_negative: false,
        });
    }
    Ok(Trained {
        model: HierModel {
            format_version: MODEL_FORMAT_VERSION,
            hierarchy_fingerprint: h.fingerprint(),
            features: hyper.features,
            hyperparams: *hyper,
            seed,
            buckets,
            heads,
        },
        warnings,
    })
}

impl HierModel {
    pub fn check_hierarchy(&self, h: &LabelHierarchy) -> Result<(), BaselineError> {
        let actual = h.fingerprint();
        if actual != self.hierarchy_fingerprint {
            return Err(BaselineError::HierarchyMismatch {
                expected: self.hierarchy_fingerprint.clone(),
                actual,
            });
        }
        Ok(())
    }

    /// Sigmoid score per head (0 for always-negative heads).
    pub fn scores(&self, vector: &FeatureVector) -> Vec<f64> {
        let cols: Vec<(usize, f64)> = vector
            .entries
            .iter()
            .filter_map(|&(b, x)| self.buckets.binary_search(&b).ok().map(|j| (j, x)))
            .collect();
        self.heads
            .iter()
            .map(|head| {
                if head.always_negative {
                    0.0
                } else {
                    sigmoid(head.bias + cols.iter().map(|&(j, x)| head.weights[j] * x).sum::<f64>())
                }
            })
            .collect()
    }

    pub fn instance_scores(&self, inst: &MemeInstance) -> (Vec<f64>, bool) {
        let f = featurize(&inst.text, inst.caption.as_deref(), self.features.mode, &self.features);
        (self.scores(&f.vector), f.degraded)
    }

    fn decide(&self, h: &LabelHierarchy, scores: &[f64], thresholds: &[f64]) -> ExtendedLabelSet {
        let fired = self
            .heads
            .iter()
            .zip(scores.iter().zip(thresholds))
            .filter(|(head, (s, t))| !head.always_negative && **s >= **t)
            .filter_map(|(head, _)| h.id(&head.label));
        // ids come from `h` itself, and the fingerprint check pins the label set
        h.extend(&h.label_set_from_ids(fired).unwrap_or_default())
            .unwrap_or_default()
    }
}

/// Threshold every head and close the result under ancestors.
pub fn predict(model: &HierModel, h: &LabelHierarchy, inst: &MemeInstance) -> Result<LabelSet, BaselineError> {
    model.check_hierarchy(h)?;
    let (scores, _) = model.instance_scores(inst);
    let thresholds: Vec<f64> = model.heads.iter().map(|hd| hd.threshold).collect();
    Ok(model.decide(h, &scores, &thresholds).into_label_set())
}

/// Candidate thresholds 0.05, 0.10, …, 0.95.
pub fn threshold_grid() -> impl Iterator<Item = f64> {
    (1..=19).map(|k| k as f64 / 20.0)
}

fn corpus_hf1(
    model: &HierModel,
    h: &LabelHierarchy,
    scores: &[Vec<f64>],
    golds: &[ExtendedLabelSet],
    thresholds: &[f64],
) -> f64 {
    let mut acc = InstanceCounts::default();
    for (s, g) in scores.iter().zip(golds) {
        let p = model.decide(h, s, thresholds);
        acc += InstanceCounts {
            intersection: g.intersection_len(&p) as u64,
            predicted: p.len() as u64,
            gold: g.len() as u64,
        };
    }
    acc.score(1.0).hf_beta
}

/// Greedy coordinate ascent on dev HF1: labels in name order, each swept over
/// [`threshold_grid`], a change kept only if it strictly improves; at most
/// two passes, stopping early after a pass with no change.
pub fn tune_thresholds(
    model: &HierModel,
    dev: &[MemeInstance],
    h: &LabelHierarchy,
) -> Result<HierModel, BaselineError> {
    if dev.is_empty() {
        return Err(BaselineError::EmptyDevCorpus);
    }
    model.check_hierarchy(h)?;
    let golds = dev.iter().map(|i| extended_gold(h, i)).collect::<Result<Vec<_>, _>>()?;
    let scores: Vec<Vec<f64>> = dev.iter().map(|i| model.instance_scores(i).0).collect();
    let mut thresholds: Vec<f64> = model.heads.iter().map(|hd| hd.threshold).collect();
    let mut best = corpus_hf1(model, h, &scores, &golds, &thresholds);
    for _pass in 0..2 {
        let mut changed = false;
        for k in 0..model.heads.len() {
            if model.heads[k].always_negative {
                continue;
            }
            for t in threshold_grid() {
                let prev = thresholds[k];
                thresholds[k] = t;
                let f = corpus_hf1(model, h, &scores, &golds, &thresholds);
                if f > best {
                    best = f;
                    changed = true;
                } else {
                    thresholds[k] = prev;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut tuned = model.clone();
    for (head, t) in tuned.heads.iter_mut().zip(thresholds) {
        head.threshold = t;
    }
    Ok(tuned)
}

/// Corpus HF1 of `model` on labelled instances.
pub fn evaluate_hf1(model: &HierModel, dev: &[MemeInstance], h: &LabelHierarchy) -> Result<f64, BaselineError> {
    model.check_hierarchy(h)?;
    let golds = dev.iter().map(|i| extended_gold(h, i)).collect::<Result<Vec<_>, _>>()?;
    let scores: Vec<Vec<f64>> = dev.iter().map(|i| model.instance_scores(i).0).collect();
    let thresholds: Vec<f64> = model.heads.iter().map(|hd| hd.threshold).collect();
    Ok(corpus_hf1(model, h, &scores, &golds, &thresholds))
}
