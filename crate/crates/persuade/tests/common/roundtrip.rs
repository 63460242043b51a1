//! Randomized serialization round-trips. Each check returns how many of the
//! generated values came back identical.

use std::collections::BTreeMap;

use persuade::formats::{self, FieldAliases, Task};
use persuade_core::baseline::{train, FeatureConfig, Hyperparams, InputMode};
use persuade_core::corpus::{CaptionRecord, CaptionSource, MemeInstance, PredictionSet};
use persuade_core::{parse_hierarchy, LabelHierarchy};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const HIERARCHY: &str = "root\nA\troot\nB\troot\nA1\tA\nA2\tA\nB1\tB\nAB\tA1\nAB\tB1\n";
const PIECES: &[&str] = &["vote", "ÉCOLE", "straße", "\"quoted\"", "tab\there", "line\nbreak", "emoji 🙂", "\\", "κόσμε", " ", "{meme_text}"];
const SOURCES: &[CaptionSource] = &[
    CaptionSource::ExternalZeroShot,
    CaptionSource::ExternalFinetuned,
    CaptionSource::Manual,
    CaptionSource::None,
];

pub fn hierarchy() -> LabelHierarchy {
    parse_hierarchy(HIERARCHY).unwrap()
}

fn label_names(h: &LabelHierarchy) -> Vec<String> {
    h.labels_by_name().into_iter().map(|l| h.name(l).to_string()).collect()
}

fn text(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(1..6);
    (0..n).map(|_| *PIECES.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn maybe<T>(rng: &mut ChaCha8Rng, f: impl FnOnce(&mut ChaCha8Rng) -> T) -> Option<T> {
    if rng.random_bool(0.5) {
        Some(f(rng))
    } else {
        None
    }
}

fn closed_labels(rng: &mut ChaCha8Rng, h: &LabelHierarchy) -> Vec<String> {
    let names = label_names(h);
    let k = rng.random_range(0..3);
    let picked: Vec<&String> = names.choose_multiple(rng, k).collect();
    let set = h.label_set(picked.iter().map(|s| s.as_str())).unwrap();
    let ext = h.extend(&set).unwrap();
    let mut out: Vec<String> = ext.iter().map(|l| h.name(l).to_string()).collect();
    out.sort();
    out
}

pub fn random_instance(rng: &mut ChaCha8Rng, h: &LabelHierarchy, i: usize) -> MemeInstance {
    let caption = maybe(rng, text);
    MemeInstance {
        id: format!("id-{i}-{}", rng.random_range(0..1000)),
        text: text(rng),
        image: maybe(rng, |r| format!("img/{}.png", r.random_range(0..100))),
        caption_source: caption.as_ref().map(|_| *SOURCES.choose(rng).unwrap()),
        caption,
        labels: maybe(rng, |r| closed_labels(r, h)),
        lang: maybe(rng, |r| ["en", "bg", "nl", "mk"].choose(r).unwrap().to_string()),
    }
}

pub fn corpus(rng: &mut ChaCha8Rng, n: usize) -> usize {
    let h = hierarchy();
    let docs: Vec<MemeInstance> = (0..n).map(|i| random_instance(rng, &h, i)).collect();
    let mut same = 0;
    for d in &docs {
        let one = std::slice::from_ref(d);
        let written = formats::write_corpus(one);
        let back = formats::load_corpus(&written, Some(&h), &FieldAliases::default()).unwrap();
        same += usize::from(back.instances == one && formats::write_corpus(&back.instances) == written);
    }
    let all = formats::load_corpus(&formats::write_corpus(&docs), Some(&h), &FieldAliases::default()).unwrap();
    assert_eq!(all.instances, docs);
    same
}

pub fn predictions(rng: &mut ChaCha8Rng, n: usize) -> usize {
    let h = hierarchy();
    let mut same = 0;
    for i in 0..n {
        let size = rng.random_range(1..6);
        let p = if i % 2 == 0 {
            PredictionSet::Hierarchical(
                (0..size)
                    .map(|j| (format!("{i}-{j}"), h.label_set(closed_labels(rng, &h)).unwrap()))
                    .collect(),
            )
        } else {
            PredictionSet::Binary((0..size).map(|j| (format!("{i}-{j}"), rng.random_bool(0.5))).collect())
        };
        let task = if i % 2 == 0 { Task::Hier } else { Task::Binary };
        let written = formats::write_predictions(&p, &h);
        let back = formats::load_predictions(&written, task, &h).unwrap();
        same += usize::from(back == p && formats::write_predictions(&back, &h) == written);
    }
    same
}

pub fn captions(rng: &mut ChaCha8Rng, n: usize) -> usize {
    let mut same = 0;
    for i in 0..n {
        let map: BTreeMap<String, CaptionRecord> = (0..rng.random_range(0..5))
            .map(|j| {
                (
                    format!("{i}:{j}"),
                    CaptionRecord {
                        caption: text(rng),
                        source: *SOURCES.choose(rng).unwrap(),
                    },
                )
            })
            .collect();
        let written = formats::write_captions(&map);
        let back = formats::load_captions(&written).unwrap();
        same += usize::from(back == map && formats::write_captions(&back) == written);
    }
    same
}

pub fn models(rng: &mut ChaCha8Rng, n: usize) -> usize {
    let h = hierarchy();
    let mut same = 0;
    for i in 0..n {
        let docs: Vec<MemeInstance> = (0..rng.random_range(2..8))
            .map(|j| MemeInstance {
                labels: Some(closed_labels(rng, &h)),
                caption: Some(text(rng)),
                caption_source: Some(CaptionSource::Manual),
                ..MemeInstance::new(format!("{j}"), text(rng))
            })
            .collect();
        let hyper = Hyperparams {
            epochs: rng.random_range(1..5),
            l2: rng.random_range(0.0..0.01),
            learning_rate: rng.random_range(0.1..1.0),
            features: FeatureConfig {
                dimension: 1 << rng.random_range(6..14),
                mode: if i % 2 == 0 { InputMode::Text } else { InputMode::TextCaption },
                ..FeatureConfig::default()
            },
            strict_captions: false,
        };
        let model = train(&docs, &h, &hyper, rng.random()).unwrap().model;
        let written = formats::write_model(&model);
        let back = formats::load_model(&written).unwrap();
        same += usize::from(back == model && formats::write_model(&back) == written);
    }
    same
}
