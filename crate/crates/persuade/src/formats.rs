//! JSON file formats: datasets, predictions, captions and model files.
//!
//! Every document is a UTF-8 JSON array of records. Loaders address errors by
//! record index (0-based) and id when one is available, and the `check_*`
//! variants collect every violation instead of stopping at the first.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use persuade_core::baseline::HierModel;
use persuade_core::corpus::{
    self, CaptionRecord, CaptionSource, ClosureWarning, MemeInstance, PredictionSet,
};
use persuade_core::metrics::{NEGATIVE, POSITIVE};
use persuade_core::{LabelHierarchy, LabelSet};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("expected a JSON array of records")]
    NotAnArray,
    #[error("{0}")]
    Record(RecordError),
    #[error(transparent)]
    Corpus(#[from] corpus::CorpusError),
    #[error("unsupported model format version {0}")]
    ModelVersion(u32),
}

/// A problem with one record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordError {
    pub index: usize,
    pub id: Option<String>,
    pub message: String,
}

impl fmt::Display for RecordError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.id {
            Some(id) => write!(f, "record {} (id `{id}`): {}", self.index, self.message),
            None => write!(f, "record {}: {}", self.index, self.message),
        }
    }
}

/// Source field names accepted for each canonical dataset field, tried in
/// order. Writers always use the canonical (first default) name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldAliases {
    pub id: Vec<String>,
    pub text: Vec<String>,
    pub image: Vec<String>,
    pub labels: Vec<String>,
    pub caption: Vec<String>,
    pub caption_source: Vec<String>,
    pub lang: Vec<String>,
}

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

impl Default for FieldAliases {
    fn default() -> Self {
        Self {
            id: names(&["id"]),
            text: names(&["text"]),
            image: names(&["image", "image_ref"]),
            labels: names(&["labels"]),
            caption: names(&["caption"]),
            caption_source: names(&["caption_source"]),
            lang: names(&["lang"]),
        }
    }
}

impl FieldAliases {
    /// Add an alias from a `field=name` spec, ahead of the defaults.
    pub fn push_spec(&mut self, spec: &str) -> Result<(), String> {
        let (field, name) = spec
            .split_once('=')
            .ok_or_else(|| format!("alias `{spec}` is not of the form field=name"))?;
        let slot = match field {
            "id" => &mut self.id,
            "text" => &mut self.text,
            "image" => &mut self.image,
            "labels" => &mut self.labels,
            "caption" => &mut self.caption,
            "caption_source" => &mut self.caption_source,
            "lang" => &mut self.lang,
            other => return Err(format!("unknown dataset field `{other}`")),
        };
        slot.insert(0, name.to_string());
        Ok(())
    }
}

fn records(text: &str) -> Result<Vec<Value>, FormatError> {
    match serde_json::from_str::<Value>(text)? {
        Value::Array(v) => Ok(v),
        _ => Err(FormatError::NotAnArray),
    }
}

struct Fields<'a> {
    index: usize,
    obj: &'a Map<String, Value>,
    id: Option<String>,
}

impl<'a> Fields<'a> {
    fn new(index: usize, value: &'a Value, id_names: &[String]) -> Result<Self, RecordError> {
        let obj = value.as_object().ok_or(RecordError {
            index,
            id: None,
            message: "record is not an object".into(),
        })?;
        let mut f = Self { index, obj, id: None };
        f.id = match f.lookup(id_names) {
            Some(Value::String(s)) if !s.is_empty() => Some(s.clone()),
            Some(Value::Number(n)) => Some(n.to_string()),
            Some(Value::String(_)) | None => return Err(f.err("missing or empty id")),
            Some(_) => return Err(f.err("id must be a string")),
        };
        Ok(f)
    }

    fn id(&self) -> String {
        self.id.clone().unwrap_or_default()
    }

    fn err(&self, message: impl Into<String>) -> RecordError {
        RecordError {
            index: self.index,
            id: self.id.clone(),
            message: message.into(),
        }
    }

    fn lookup(&self, names: &[String]) -> Option<&'a Value> {
        names.iter().find_map(|n| self.obj.get(n))
    }

    fn string(&self, names: &[String]) -> Result<Option<String>, RecordError> {
        match self.lookup(names) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(self.err(format!("field `{}` must be a string", names[0]))),
        }
    }

    fn string_list(&self, names: &[String]) -> Result<Option<Vec<String>>, RecordError> {
        match self.lookup(names) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    Value::String(s) => Ok(s.clone()),
                    _ => Err(self.err(format!("field `{}` must hold strings", names[0]))),
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
            Some(_) => Err(self.err(format!("field `{}` must be an array", names[0]))),
        }
    }
}

/// A loaded dataset and the gold sets that had to be ancestor-closed.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedCorpus {
    pub instances: Vec<MemeInstance>,
    pub closed: Vec<ClosureWarning>,
}

fn parse_instance(index: usize, value: &Value, aliases: &FieldAliases) -> Result<MemeInstance, RecordError> {
    let f = Fields::new(index, value, &aliases.id)?;
    let caption_source = match f.string(&aliases.caption_source)? {
        None => None,
        Some(s) => Some(
            CaptionSource::parse(&s).ok_or_else(|| f.err(format!("unknown caption_source `{s}`")))?,
        ),
    };
    let inst = MemeInstance {
        id: f.id(),
        text: f.string(&aliases.text)?.unwrap_or_default(),
        image: f.string(&aliases.image)?,
        caption: f.string(&aliases.caption)?,
        caption_source,
        labels: f.string_list(&aliases.labels)?,
        lang: f.string(&aliases.lang)?,
    };
    inst.validate(index).map_err(|e| f.err(e.to_string()))?;
    Ok(inst)
}

/// Record-wise validation of a dataset; returns every violation found.
pub fn check_corpus(text: &str, h: Option<&LabelHierarchy>, aliases: &FieldAliases) -> Result<Vec<RecordError>, FormatError> {
    let mut errors = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, value) in records(text)?.iter().enumerate() {
        match parse_instance(i, value, aliases) {
            Ok(inst) => {
                if !seen.insert(inst.id.clone()) {
                    errors.push(RecordError {
                        index: i,
                        id: Some(inst.id.clone()),
                        message: "duplicate id".into(),
                    });
                }
                if let (Some(h), Some(labels)) = (h, &inst.labels) {
                    if let Err(e) = h.label_set(labels) {
                        errors.push(RecordError {
                            index: i,
                            id: Some(inst.id),
                            message: e.to_string(),
                        });
                    }
                }
            }
            Err(e) => errors.push(e),
        }
    }
    Ok(errors)
}

/// Parse and validate a dataset. With a hierarchy, gold labels are checked
/// and closed under ancestors.
pub fn load_corpus(text: &str, h: Option<&LabelHierarchy>, aliases: &FieldAliases) -> Result<LoadedCorpus, FormatError> {
    let mut instances = records(text)?
        .iter()
        .enumerate()
        .map(|(i, v)| parse_instance(i, v, aliases))
        .collect::<Result<Vec<_>, _>>()
        .map_err(FormatError::Record)?;
    corpus::validate_corpus(&mut instances)?;
    let closed = match h {
        Some(h) => corpus::close_gold(h, &mut instances)?,
        None => Vec::new(),
    };
    for w in &closed {
        log::warn!("gold for `{}` was not ancestor-closed; added {:?}", w.id, w.added);
    }
    Ok(LoadedCorpus { instances, closed })
}

pub fn write_corpus(instances: &[MemeInstance]) -> String {
    to_pretty(&instances)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Hierarchical multi-label (label sets per instance).
    Hier,
    /// Binary propagandistic / not_propagandistic.
    Binary,
}

fn parse_label_record(
    index: usize,
    value: &Value,
    h: &LabelHierarchy,
    labels_field: &[String],
) -> Result<(String, LabelSet), RecordError> {
    let f = Fields::new(index, value, &names(&["id"]))?;
    let labels = f
        .string_list(labels_field)?
        .ok_or_else(|| f.err("missing `labels`"))?;
    let set = h.label_set(&labels).map_err(|e| f.err(e.to_string()))?;
    Ok((f.id(), set))
}

fn parse_binary_record(index: usize, value: &Value) -> Result<(String, bool), RecordError> {
    let f = Fields::new(index, value, &names(&["id"]))?;
    match f.string(&names(&["label"]))?.as_deref() {
        Some(POSITIVE) => Ok((f.id(), true)),
        Some(NEGATIVE) => Ok((f.id(), false)),
        Some(other) => Err(f.err(format!("label must be `{POSITIVE}` or `{NEGATIVE}`, got `{other}`"))),
        None => Err(f.err("missing `label`")),
    }
}

/// Record-wise validation of a predictions (or gold) file.
pub fn check_predictions(text: &str, task: Task, h: Option<&LabelHierarchy>) -> Result<(Vec<String>, Vec<RecordError>), FormatError> {
    let mut errors = Vec::new();
    let mut ids = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, value) in records(text)?.iter().enumerate() {
        let id = match (task, h) {
            (Task::Hier, Some(h)) => parse_label_record(i, value, h, &names(&["labels"])).map(|r| r.0),
            (Task::Hier, None) => Fields::new(i, value, &names(&["id"])).and_then(|f| {
                f.string_list(&names(&["labels"]))?
                    .ok_or_else(|| f.err("missing `labels`"))?;
                Ok(f.id())
            }),
            (Task::Binary, _) => parse_binary_record(i, value).map(|r| r.0),
        };
        match id {
            Ok(id) if !seen.insert(id.clone()) => errors.push(RecordError {
                index: i,
                id: Some(id),
                message: "duplicate id".into(),
            }),
            Ok(id) => ids.push(id),
            Err(e) => errors.push(e),
        }
    }
    Ok((ids, errors))
}

fn dup(index: usize, id: &str) -> FormatError {
    FormatError::Record(RecordError {
        index,
        id: Some(id.to_string()),
        message: "duplicate id".into(),
    })
}

/// Label sets by id from `{id, labels}` records. Other fields are ignored, so
/// a labelled dataset also loads as gold.
pub fn load_label_sets(text: &str, h: &LabelHierarchy) -> Result<BTreeMap<String, LabelSet>, FormatError> {
    let mut map = BTreeMap::new();
    for (i, v) in records(text)?.iter().enumerate() {
        let (id, set) = parse_label_record(i, v, h, &names(&["labels"])).map_err(FormatError::Record)?;
        if map.insert(id.clone(), set).is_some() {
            return Err(dup(i, &id));
        }
    }
    Ok(map)
}

/// Binary labels by id from `{id, label}` records.
pub fn load_binary(text: &str) -> Result<BTreeMap<String, bool>, FormatError> {
    let mut map = BTreeMap::new();
    for (i, v) in records(text)?.iter().enumerate() {
        let (id, b) = parse_binary_record(i, v).map_err(FormatError::Record)?;
        if map.insert(id.clone(), b).is_some() {
            return Err(dup(i, &id));
        }
    }
    Ok(map)
}

pub fn load_predictions(text: &str, task: Task, h: &LabelHierarchy) -> Result<PredictionSet, FormatError> {
    Ok(match task {
        Task::Hier => PredictionSet::Hierarchical(load_label_sets(text, h)?),
        Task::Binary => PredictionSet::Binary(load_binary(text)?),
    })
}

#[derive(Serialize)]
struct LabelRecord<'a> {
    id: &'a str,
    labels: Vec<&'a str>,
}

#[derive(Serialize)]
struct BinaryRecord<'a> {
    id: &'a str,
    label: &'static str,
}

/// Records sorted by id; label names sorted.
pub fn write_predictions(p: &PredictionSet, h: &LabelHierarchy) -> String {
    match p {
        PredictionSet::Hierarchical(m) => to_pretty(
            &m.iter()
                .map(|(id, set)| {
                    let mut labels: Vec<&str> = set.iter().map(|l| h.name(l)).collect();
                    labels.sort_unstable();
                    LabelRecord { id, labels }
                })
                .collect::<Vec<_>>(),
        ),
        PredictionSet::Binary(m) => to_pretty(
            &m.iter()
                .map(|(id, &b)| BinaryRecord {
                    id,
                    label: if b { POSITIVE } else { NEGATIVE },
                })
                .collect::<Vec<_>>(),
        ),
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaptionFileRecord {
    id: String,
    caption: String,
    source: CaptionSource,
}

pub fn load_captions(text: &str) -> Result<BTreeMap<String, CaptionRecord>, FormatError> {
    let mut map = BTreeMap::new();
    for (i, v) in records(text)?.into_iter().enumerate() {
        let rec: CaptionFileRecord = serde_json::from_value(v).map_err(|e| {
            FormatError::Record(RecordError {
                index: i,
                id: None,
                message: e.to_string(),
            })
        })?;
        if rec.id.is_empty() {
            return Err(FormatError::Record(RecordError {
                index: i,
                id: None,
                message: "missing or empty id".into(),
            }));
        }
        let id = rec.id.clone();
        if map
            .insert(rec.id, CaptionRecord { caption: rec.caption, source: rec.source })
            .is_some()
        {
            return Err(dup(i, &id));
        }
    }
    Ok(map)
}

pub fn write_captions(captions: &BTreeMap<String, CaptionRecord>) -> String {
    to_pretty(
        &captions
            .iter()
            .map(|(id, r)| CaptionFileRecord {
                id: id.clone(),
                caption: r.caption.clone(),
                source: r.source,
            })
            .collect::<Vec<_>>(),
    )
}

pub fn write_model(model: &HierModel) -> String {
    to_pretty(model)
}

pub fn load_model(text: &str) -> Result<HierModel, FormatError> {
    let model: HierModel = serde_json::from_str(text)?;
    if model.format_version != persuade_core::baseline::MODEL_FORMAT_VERSION {
        return Err(FormatError::ModelVersion(model.format_version));
    }
    Ok(model)
}

pub(crate) fn to_pretty<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("in-memory JSON serialization");
    s.push('\n');
    s
}
