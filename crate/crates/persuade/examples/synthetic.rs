//! Regenerates the synthetic fixtures under `fixtures/`.
//!
//! ```text
//! cargo run -p persuade --example synthetic -- fixtures
//! ```
//!
//! `synthetic/` plants label keywords in the meme text. `ablation/` plants
//! them only in the captions, so a text-only model has nothing to learn from.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

const HIERARCHY: &str = "\
persuasion
Ethos\tpersuasion
Pathos\tpersuasion
Logos\tpersuasion
AdHominem\tEthos
Bandwagon\tEthos
NameCalling\tAdHominem
Doubt\tAdHominem
LoadedLanguage\tPathos
AppealToFear\tPathos
Reasoning\tLogos
Repetition\tLogos
Simplification\tReasoning
";

const LEAVES: &[(&str, &[&str])] = &[
    ("NameCalling", &["traitor", "clown", "puppet"]),
    ("Doubt", &["suspicious", "questionable", "unreliable"]),
    ("Bandwagon", &["everyone", "millions", "join"]),
    ("LoadedLanguage", &["disastrous", "outrageous", "horrific"]),
    ("AppealToFear", &["danger", "threat", "destroy"]),
    ("Simplification", &["simply", "obviously", "solution"]),
    ("Repetition", &["remember", "again", "repeat"]),
];

const FILLER: &[&str] = &[
    "the", "a", "this", "that", "we", "they", "our", "your", "city", "people", "day", "news", "vote",
    "party", "leader", "country", "today", "after", "before", "meeting", "school", "street", "money",
    "work", "family", "week", "report", "photo", "meme", "post", "about", "with", "from", "over",
    "under", "their", "new", "old", "big", "small", "left", "right", "plan", "law", "tax", "price",
    "road", "river", "park", "house", "car", "bus", "train", "summer", "winter", "morning", "night",
    "team", "game", "match", "speech", "crowd", "office", "market", "bank", "shop", "food", "water",
    "power", "light", "paper", "story", "film", "song", "book", "picture", "friend", "neighbour",
    "village", "state", "region", "border", "coast", "hill", "field", "farm", "factory", "bridge",
];

const CAPTION_FILLER: &[&str] = &[
    "image", "shows", "man", "woman", "standing", "near", "sign", "holding", "banner", "background",
    "text", "overlay", "blue", "red", "crowd", "cartoon", "face", "flag", "building", "screen",
];

const ROOT: &str = "persuasion";

fn ancestors(leaf: &str) -> Vec<&'static str> {
    let edges: Vec<(&str, &str)> = HIERARCHY
        .lines()
        .skip(1)
        .filter_map(|l| l.split_once('\t'))
        .collect();
    let mut out = Vec::new();
    let mut cur = leaf.to_string();
    while let Some(&(child, parent)) = edges.iter().find(|(c, _)| *c == cur) {
        out.push(child);
        if parent == ROOT {
            break;
        }
        cur = parent.to_string();
    }
    out
}

fn words(rng: &mut ChaCha8Rng, pool: &[&'static str], lo: usize, hi: usize) -> Vec<&'static str> {
    let n = rng.random_range(lo..=hi);
    (0..n).map(|_| *pool.choose(rng).unwrap()).collect()
}

fn labels(rng: &mut ChaCha8Rng) -> Vec<usize> {
    let k = match rng.random_range(0..10) {
        0 => 0,
        1..=6 => 1,
        _ => 2,
    };
    let mut picked = BTreeSet::new();
    while picked.len() < k {
        picked.insert(rng.random_range(0..LEAVES.len()));
    }
    picked.into_iter().collect()
}

fn plant(rng: &mut ChaCha8Rng, base: &mut Vec<&'static str>, leaves: &[usize]) {
    for &l in leaves {
        for _ in 0..rng.random_range(1..=2) {
            let w = *LEAVES[l].1.choose(rng).unwrap();
            let at = rng.random_range(0..=base.len());
            base.insert(at, w);
        }
    }
}

fn gold(leaves: &[usize]) -> Vec<&'static str> {
    let set: BTreeSet<&str> = leaves.iter().flat_map(|&l| ancestors(LEAVES[l].0)).collect();
    set.into_iter().collect()
}

fn keyword_docs(rng: &mut ChaCha8Rng, prefix: &str, n: usize) -> Vec<Value> {
    (0..n)
        .map(|i| {
            let leaves = labels(rng);
            let mut text = words(rng, FILLER, 8, 14);
            plant(rng, &mut text, &leaves);
            json!({"id": format!("{prefix}-{i:04}"), "text": text.join(" "), "labels": gold(&leaves)})
        })
        .collect()
}

fn caption_docs(rng: &mut ChaCha8Rng, prefix: &str, n: usize) -> Vec<Value> {
    (0..n)
        .map(|i| {
            let leaves = labels(rng);
            let text = words(rng, FILLER, 8, 14);
            let mut caption = words(rng, CAPTION_FILLER, 6, 10);
            plant(rng, &mut caption, &leaves);
            json!({
                "id": format!("{prefix}-{i:04}"),
                "text": text.join(" "),
                "image": format!("{prefix}-{i:04}.png"),
                "caption": caption.join(" "),
                "caption_source": "external-zero-shot",
                "labels": gold(&leaves),
            })
        })
        .collect()
}

fn write(path: &Path, value: &impl serde::Serialize) {
    let mut s = serde_json::to_string_pretty(value).unwrap();
    s.push('\n');
    std::fs::write(path, s).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
}

fn main() {
    let root = std::env::args().nth(1).unwrap_or_else(|| "fixtures".into());
    let root = Path::new(&root);
    for dir in ["synthetic", "ablation"] {
        std::fs::create_dir_all(root.join(dir)).unwrap();
        std::fs::write(root.join(dir).join("hierarchy.tsv"), HIERARCHY).unwrap();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(20240517);
    write(&root.join("synthetic/train.json"), &keyword_docs(&mut rng, "train", 500));
    write(&root.join("synthetic/heldout.json"), &keyword_docs(&mut rng, "heldout", 100));
    let mut rng = ChaCha8Rng::seed_from_u64(20240518);
    write(&root.join("ablation/train.json"), &caption_docs(&mut rng, "train", 300));
    write(&root.join("ablation/heldout.json"), &caption_docs(&mut rng, "heldout", 100));
}
