//! Meme instances, caption attachments and prediction sets.
//!
//! Gold labels are kept as label names on [`MemeInstance`] so a corpus can be
//! loaded without a hierarchy; [`close_gold`] and [`gold_sets`] bind them to
//! one.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::hierarchy::{HierarchyError, LabelHierarchy, LabelSet};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CorpusError {
    #[error("record {index}: missing or empty id")]
    MissingId { index: usize },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("instance `{0}`: text may only be empty when an image is referenced")]
    EmptyText(String),
    #[error("instance `{0}`: caption without caption_source")]
    CaptionWithoutSource(String),
    #[error("instance `{id}`: {source}")]
    Label { id: String, source: HierarchyError },
    #[error("instance `{0}` has no gold labels")]
    MissingGold(String),
    #[error("caption for unknown id `{0}`")]
    UnknownId(String),
    #[error("instance `{0}` already has a caption; pass overwrite to replace it")]
    CaptionExists(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaptionSource {
    ExternalZeroShot,
    ExternalFinetuned,
    Manual,
    None,
}

impl CaptionSource {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::ExternalZeroShot => "external-zero-shot",
            Self::ExternalFinetuned => "external-finetuned",
            Self::Manual => "manual",
            Self::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Self::ExternalZeroShot,
            Self::ExternalFinetuned,
            Self::Manual,
            Self::None,
        ]
        .into_iter()
        .find(|c| c.as_str() == s)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemeInstance {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption_source: Option<CaptionSource>,
    /// Gold label names, sorted and de-duplicated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    /// Language tag passed through untouched.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lang: Option<String>,
}

impl MemeInstance {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            ..Self::default()
        }
    }

    pub fn validate(&self, index: usize) -> Result<(), CorpusError> {
        if self.id.is_empty() {
            return Err(CorpusError::MissingId { index });
        }
        if self.text.is_empty() && self.image.is_none() {
            return Err(CorpusError::EmptyText(self.id.clone()));
        }
        if self.caption.is_some() && self.caption_source.is_none() {
            return Err(CorpusError::CaptionWithoutSource(self.id.clone()));
        }
        Ok(())
    }
}

/// Per-record checks plus id uniqueness. Label lists are normalized to
/// sorted, duplicate-free order.
pub fn validate_corpus(instances: &mut [MemeInstance]) -> Result<(), CorpusError> {
    let mut seen = BTreeSet::new();
    for (i, inst) in instances.iter_mut().enumerate() {
        inst.validate(i)?;
        if !seen.insert(inst.id.clone()) {
            return Err(CorpusError::DuplicateId(inst.id.clone()));
        }
        if let Some(labels) = inst.labels.as_mut() {
            labels.sort();
            labels.dedup();
        }
    }
    Ok(())
}

/// A gold set that was not ancestor-closed and has been closed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClosureWarning {
    pub id: String,
    pub added: Vec<String>,
}

/// Validate gold labels against `h` and close them under ancestors in place.
pub fn close_gold(
    h: &LabelHierarchy,
    instances: &mut [MemeInstance],
) -> Result<Vec<ClosureWarning>, CorpusError> {
    let mut warnings = Vec::new();
    for inst in instances.iter_mut() {
        let Some(labels) = inst.labels.as_mut() else {
            continue;
        };
        let set = h.label_set(labels.iter()).map_err(|source| CorpusError::Label {
            id: inst.id.clone(),
            source,
        })?;
        let closed = h.extend(&set).map_err(|source| CorpusError::Label {
            id: inst.id.clone(),
            source,
        })?;
        if closed.len() != set.len() {
            let added = closed
                .iter()
                .filter(|l| !set.contains(*l))
                .map(|l| h.name(l).to_string())
                .collect();
            warnings.push(ClosureWarning {
                id: inst.id.clone(),
                added,
            });
            *labels = h.names_of(&closed.iter().collect::<Vec<_>>()).into_iter().map(String::from).collect();
        }
    }
    Ok(warnings)
}

/// Gold label sets keyed by id. Every instance must carry labels.
pub fn gold_sets(
    h: &LabelHierarchy,
    instances: &[MemeInstance],
) -> Result<BTreeMap<String, LabelSet>, CorpusError> {
    instances
        .iter()
        .map(|inst| {
            let labels = inst
                .labels
                .as_ref()
                .ok_or_else(|| CorpusError::MissingGold(inst.id.clone()))?;
            let set = h.label_set(labels).map_err(|source| CorpusError::Label {
                id: inst.id.clone(),
                source,
            })?;
            Ok((inst.id.clone(), set))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub caption: String,
    pub source: CaptionSource,
}

/// Attach captions by id. Existing captions are replaced only with `overwrite`.
pub fn merge_captions(
    corpus: &[MemeInstance],
    captions: &BTreeMap<String, CaptionRecord>,
    overwrite: bool,
) -> Result<Vec<MemeInstance>, CorpusError> {
    let ids: BTreeSet<&str> = corpus.iter().map(|i| i.id.as_str()).collect();
    if let Some(id) = captions.keys().find(|id| !ids.contains(id.as_str())) {
        return Err(CorpusError::UnknownId(id.clone()));
    }
    corpus
        .iter()
        .map(|inst| {
            let mut inst = inst.clone();
            if let Some(rec) = captions.get(&inst.id) {
                if inst.caption.is_some() && !overwrite {
                    return Err(CorpusError::CaptionExists(inst.id));
                }
                inst.caption = Some(rec.caption.clone());
                inst.caption_source = Some(rec.source);
            }
            Ok(inst)
        })
        .collect()
}

/// Predictions for a whole corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PredictionSet {
    Hierarchical(BTreeMap<String, LabelSet>),
    Binary(BTreeMap<String, bool>),
}

impl PredictionSet {
    pub fn len(&self) -> usize {
        match self {
            Self::Hierarchical(m) => m.len(),
            Self::Binary(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ids(&self) -> Vec<&str> {
        match self {
            Self::Hierarchical(m) => m.keys().map(String::as_str).collect(),
            Self::Binary(m) => m.keys().map(String::as_str).collect(),
        }
    }
}
