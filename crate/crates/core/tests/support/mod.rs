//! Brute-force reference implementations and random generators shared by the
//! integration tests. Everything here works on label names and plain std
//! collections, without going through the library's own set types.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use persuade_core::{parse_hierarchy, LabelHierarchy};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ROOT: &str = "root";

pub type NameSet = BTreeSet<String>;

#[derive(Debug, Clone)]
pub struct RandomHierarchy {
    /// `(child, parent)` pairs.
    pub edges: Vec<(String, String)>,
    /// Non-root labels.
    pub labels: Vec<String>,
}

impl RandomHierarchy {
    pub fn text(&self) -> String {
        let mut s = format!("{ROOT}\n");
        for (c, p) in &self.edges {
            s.push_str(&format!("{c}\t{p}\n"));
        }
        s
    }

    pub fn build(&self) -> LabelHierarchy {
        parse_hierarchy(&self.text()).expect("generated hierarchy is valid")
    }

    pub fn ancestors(&self, label: &str) -> NameSet {
        oracle_ancestors(&self.edges, label)
    }

    pub fn extend(&self, set: &NameSet) -> NameSet {
        oracle_extend(&self.edges, set)
    }
}

/// A random poset with `1..max_nodes` non-root labels on at most `max_depth`
/// levels. Every label has a parent one level up; some get extra parents from
/// any shallower level.
pub fn random_hierarchy(rng: &mut ChaCha8Rng, max_nodes: usize, max_depth: usize) -> RandomHierarchy {
    let n = rng.random_range(1..max_nodes);
    let depth = rng.random_range(1..=max_depth.min(n));
    let mut level: Vec<usize> = (0..n).map(|i| if i < depth { i + 1 } else { rng.random_range(1..=depth) }).collect();
    level.shuffle(rng);
    let names: Vec<String> = (0..n).map(|i| format!("L{i}")).collect();
    let at = |d: usize| -> Vec<&str> {
        if d == 0 {
            vec![ROOT]
        } else {
            (0..n).filter(|&i| level[i] == d).map(|i| names[i].as_str()).collect()
        }
    };
    let mut edges = Vec::new();
    for i in 0..n {
        let d = level[i];
        let mut parents = BTreeSet::new();
        parents.insert(at(d - 1).choose(rng).unwrap().to_string());
        while rng.random_bool(0.3) {
            let up = rng.random_range(0..d);
            parents.insert(at(up).choose(rng).unwrap().to_string());
        }
        for p in parents {
            edges.push((names[i].clone(), p));
        }
    }
    edges.shuffle(rng);
    RandomHierarchy { edges, labels: names }
}

/// Depth-1 hierarchy: every label is a child of the root.
pub fn flat_hierarchy(n: usize) -> RandomHierarchy {
    let labels: Vec<String> = (0..n).map(|i| format!("F{i}")).collect();
    RandomHierarchy {
        edges: labels.iter().map(|l| (l.clone(), ROOT.to_string())).collect(),
        labels,
    }
}

pub fn oracle_ancestors(edges: &[(String, String)], label: &str) -> NameSet {
    let mut out = NameSet::new();
    let mut stack = vec![label.to_string()];
    while let Some(node) = stack.pop() {
        for (c, p) in edges {
            if *c == node && p != ROOT && out.insert(p.clone()) {
                stack.push(p.clone());
            }
        }
    }
    out
}

pub fn oracle_extend(edges: &[(String, String)], set: &NameSet) -> NameSet {
    let mut out = set.clone();
    for l in set {
        out.extend(oracle_ancestors(edges, l));
    }
    out
}

pub fn random_subset(rng: &mut ChaCha8Rng, labels: &[String], max: usize) -> NameSet {
    let k = rng.random_range(0..=max.min(labels.len()));
    labels.choose_multiple(rng, k).cloned().collect()
}

pub fn oracle_f_beta(p: f64, r: f64, beta: f64) -> f64 {
    if p + r == 0.0 {
        return 0.0;
    }
    let b2 = beta * beta;
    (b2 + 1.0) * p * r / (b2 * p + r)
}

/// HP, HR and H-F-beta by literal set arithmetic over extended sets.
pub fn oracle_hierarchical(h: &RandomHierarchy, gold: &[NameSet], pred: &[NameSet], beta: f64) -> (f64, f64, f64) {
    let (mut inter, mut npred, mut ngold) = (0usize, 0usize, 0usize);
    for (g, p) in gold.iter().zip(pred) {
        let g = h.extend(g);
        let p = h.extend(p);
        inter += g.intersection(&p).count();
        npred += p.len();
        ngold += g.len();
    }
    if npred == 0 && ngold == 0 {
        return (1.0, 1.0, 1.0);
    }
    let hp = if npred == 0 { 0.0 } else { inter as f64 / npred as f64 };
    let hr = if ngold == 0 { 0.0 } else { inter as f64 / ngold as f64 };
    (hp, hr, oracle_f_beta(hp, hr, beta))
}

/// Pooled micro precision, recall and F1 over (instance, label) decisions.
pub fn pooled_micro(labels: &[String], gold: &[NameSet], pred: &[NameSet]) -> (f64, f64, f64) {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for l in labels {
        for (g, p) in gold.iter().zip(pred) {
            match (g.contains(l), p.contains(l)) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
    }
    if tp + fp + fn_ == 0 {
        return (1.0, 1.0, 1.0);
    }
    let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

/// Instance indices for bootstrap resample `k`: ChaCha8 seeded with `seed`,
/// stream `k`, each index the high half of a 64x64-bit product.
pub fn oracle_resample(seed: u64, k: u64, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let x = rng.next_u64() as u128 * n as u128;
        out.push((x >> 64) as usize);
    }
    out
}

/// Percentile interval from `b` resample statistics at a confidence given in
/// permille, widened to contain `point`.
pub fn oracle_percentile(mut stats: Vec<f64>, point: f64, confidence_permille: usize) -> (f64, f64) {
    let b = stats.len();
    stats.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let tail = (1000 - confidence_permille) * b; // in units of 1/2000
    let lo = tail / 2000;
    let hi = (2000 * b - tail).div_ceil(2000) - 1;
    (stats[lo].min(point), stats[hi].max(point))
}

/// LCS length by memoized recursion.
pub fn oracle_lcs(a: &[String], b: &[String]) -> usize {
    fn go(a: &[String], b: &[String], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if i == a.len() || j == b.len() {
            return 0;
        }
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let v = if a[i] == b[j] {
            1 + go(a, b, i + 1, j + 1, memo)
        } else {
            go(a, b, i + 1, j, memo).max(go(a, b, i, j + 1, memo))
        };
        memo.insert((i, j), v);
        v
    }
    go(a, b, 0, 0, &mut HashMap::new())
}

/// Sentence BLEU-4 with clipping, skipped empty orders and the closest
/// reference length for the brevity penalty.
pub fn oracle_bleu(c: &[String], refs: &[Vec<String>]) -> f64 {
    let refs: Vec<&Vec<String>> = refs.iter().filter(|r| !r.is_empty()).collect();
    if c.is_empty() {
        return 0.0;
    }
    let grams = |t: &[String], n: usize| -> HashMap<Vec<String>, usize> {
        let mut m = HashMap::new();
        for i in 0..t.len().saturating_sub(n - 1) {
            if i + n <= t.len() {
                *m.entry(t[i..i + n].to_vec()).or_insert(0) += 1;
            }
        }
        m
    };
    let mut precisions = Vec::new();
    for n in 1..=4 {
        let cg = grams(c, n);
        let total: usize = cg.values().sum();
        if total == 0 {
            continue;
        }
        let mut matched = 0;
        for (g, k) in &cg {
            let best = refs.iter().map(|r| grams(r, n).get(g).copied().unwrap_or(0)).max().unwrap_or(0);
            matched += (*k).min(best);
        }
        precisions.push(matched as f64 / total as f64);
    }
    if precisions.contains(&0.0) {
        return 0.0;
    }
    let gm = precisions.iter().product::<f64>().powf(1.0 / precisions.len() as f64);
    let mut best = refs[0].len();
    for r in &refs {
        let (d, bd) = (r.len().abs_diff(c.len()), best.abs_diff(c.len()));
        if d < bd || (d == bd && r.len() < best) {
            best = r.len();
        }
    }
    let bp = if c.len() < best { (1.0 - best as f64 / c.len() as f64).exp() } else { 1.0 };
    bp * gm
}

pub fn random_tokens(rng: &mut ChaCha8Rng, vocab: usize, max_len: usize) -> Vec<String> {
    let n = rng.random_range(0..=max_len);
    (0..n).map(|_| format!("w{}", rng.random_range(0..vocab))).collect()
}

/// Gold and predicted sets for a random corpus over `labels`.
pub fn random_corpus(rng: &mut ChaCha8Rng, labels: &[String], n: usize, max_set: usize) -> (Vec<NameSet>, Vec<NameSet>) {
    (0..n)
        .map(|_| (random_subset(rng, labels, max_set), random_subset(rng, labels, max_set)))
        .unzip()
}

pub fn keyed(sets: &[NameSet]) -> BTreeMap<String, Vec<String>> {
    sets.iter()
        .enumerate()
        .map(|(i, s)| (format!("i{i:03}"), s.iter().cloned().collect()))
        .collect()
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct SweepStats {
    pub graphs: u64,
    pub valid: u64,
    pub disagreements: u64,
}

impl std::ops::AddAssign for SweepStats {
    fn add_assign(&mut self, o: Self) {
        self.graphs += o.graphs;
        self.valid += o.valid;
        self.disagreements += o.disagreements;
    }
}

const SMALL: [&str; 5] = ["n0", "n1", "n2", "n3", "n4"];

/// Acyclicity of a parent relation given as bitmasks over `k` non-root nodes.
fn acyclic(parent_masks: &[u32]) -> bool {
    let k = parent_masks.len();
    let mut removed = 0u32;
    loop {
        let before = removed;
        for (i, &m) in parent_masks.iter().enumerate() {
            if removed & (1 << i) == 0 && m & !removed == 0 {
                removed |= 1 << i;
            }
        }
        if removed == (1u32 << k) - 1 {
            return true;
        }
        if removed == before {
            return false;
        }
    }
}

/// Ancestor bitmask of every node, by fixpoint iteration.
fn closure(parent_masks: &[u32]) -> Vec<u32> {
    let mut anc = parent_masks.to_vec();
    loop {
        let mut changed = false;
        for i in 0..anc.len() {
            let mut m = anc[i];
            for j in 0..anc.len() {
                if anc[i] & (1 << j) != 0 {
                    m |= anc[j];
                }
            }
            if m != anc[i] {
                anc[i] = m;
                changed = true;
            }
        }
        if !changed {
            return anc;
        }
    }
}

/// Compare construction, ancestors and `extend` against bitmask brute force
/// for one graph over `k` non-root nodes. `choice[i]` is node i's parent set:
/// bit 0 is the root, bit j+1 is node j.
fn check_small_graph(k: usize, choice: &[u32], edges: &mut Vec<(&'static str, &'static str)>) -> SweepStats {
    edges.clear();
    let mut masks = vec![0u32; k];
    for i in 0..k {
        if choice[i] & 1 != 0 {
            edges.push((SMALL[i], ROOT));
        }
        for (j, &parent) in SMALL.iter().enumerate().take(k) {
            if choice[i] & (1 << (j + 1)) != 0 {
                edges.push((SMALL[i], parent));
                masks[i] |= 1 << j;
            }
        }
    }
    let expect_ok = acyclic(&masks);
    let built = LabelHierarchy::from_edges(ROOT, edges.iter().copied());
    let mut stats = SweepStats {
        graphs: 1,
        ..SweepStats::default()
    };
    let h = match (built, expect_ok) {
        (Ok(h), true) => h,
        (Err(persuade_core::hierarchy::HierarchyError::Cycle(_)), false) => return stats,
        _ => {
            stats.disagreements += 1;
            return stats;
        }
    };
    stats.valid = 1;
    let anc = closure(&masks);
    let ids: Vec<_> = (0..k).map(|i| h.id(SMALL[i]).unwrap()).collect();
    let to_mask = |set: &persuade_core::ExtendedLabelSet| -> u32 {
        set.iter().map(|id| 1u32 << ids.iter().position(|&x| x == id).unwrap()).fold(0, |a, b| a | b)
    };
    let subsets = 1u32 << k;
    let mut extended = vec![0u32; subsets as usize];
    let mut bad = false;
    for s in 0..subsets {
        let set = h.label_set_from_ids((0..k).filter(|i| s & (1 << i) != 0).map(|i| ids[i])).unwrap();
        let e = h.extend(&set).unwrap();
        let m = to_mask(&e);
        let want = (0..k).filter(|i| s & (1 << i) != 0).fold(s, |a, i| a | anc[i]);
        let again = h.extend(&e.as_label_set()).unwrap();
        bad |= m != want || again != e || h.is_consistent(&set).unwrap() != (m == s);
        extended[s as usize] = m;
    }
    for s in 0..subsets {
        for x in 0..k {
            let t = s | (1 << x);
            bad |= extended[s as usize] & !extended[t as usize] != 0;
        }
    }
    stats.disagreements += u64::from(bad);
    stats
}

/// Every graph on the root plus `k` labels in which each label has at least
/// one parent other than itself (`k <= 5`, so at most six nodes).
pub fn exhaustive_small_graphs(k: usize) -> SweepStats {
    assert!(k <= SMALL.len());
    let per_node = (1u64 << k) - 1;
    let total = per_node.pow(k as u32);
    let mut stats = SweepStats::default();
    let mut edges = Vec::with_capacity(k * (k + 1));
    let mut choice = vec![0u32; k];
    for code in 0..total {
        let mut c = code;
        for (i, slot) in choice.iter_mut().enumerate() {
            let m = (c % per_node + 1) as u32;
            c /= per_node;
            // open a zero at bit i+1 so node i never lists itself
            let low = m & ((1 << (i + 1)) - 1);
            *slot = low | ((m >> (i + 1)) << (i + 2));
        }
        stats += check_small_graph(k, &choice, &mut edges);
    }
    stats
}

/// Random graphs with 7..=40 nodes: a random poset, then possibly a back edge
/// (cycle), a dangling parent, or a self loop. Construction and ancestor sets
/// are compared with the string-based oracle.
pub fn random_graph_check(rng: &mut ChaCha8Rng, count: usize) -> SweepStats {
    let mut stats = SweepStats::default();
    for _ in 0..count {
        let mut g = random_hierarchy(rng, 40, 6);
        while g.labels.len() < 6 {
            g = random_hierarchy(rng, 40, 6);
        }
        match rng.random_range(0..4) {
            0 => {
                // make an ancestor a child of one of its descendants
                let l = g.labels.choose(rng).unwrap().clone();
                if let Some(a) = g.ancestors(&l).into_iter().next() {
                    g.edges.push((a, l));
                }
            }
            1 => {
                let l = g.labels.choose(rng).unwrap().clone();
                g.edges.push((l, "undeclared".into()));
            }
            2 => {
                let l = g.labels.choose(rng).unwrap().clone();
                g.edges.push((l.clone(), l));
            }
            _ => {}
        }
        stats += check_random_graph(&g);
    }
    stats
}

fn oracle_valid(g: &RandomHierarchy) -> bool {
    let declared: NameSet = g.edges.iter().map(|(c, _)| c.clone()).collect();
    if g.edges.iter().any(|(_, p)| p != ROOT && !declared.contains(p)) {
        return false;
    }
    // depth-first search for a back edge
    fn visit(n: &str, g: &RandomHierarchy, state: &mut BTreeMap<String, u8>) -> bool {
        match state.get(n) {
            Some(1) => return false,
            Some(2) => return true,
            _ => {}
        }
        state.insert(n.to_string(), 1);
        for (c, p) in &g.edges {
            if c == n && p != ROOT && !visit(p, g, state) {
                return false;
            }
        }
        state.insert(n.to_string(), 2);
        true
    }
    let mut state = BTreeMap::new();
    declared.iter().all(|n| visit(n, g, &mut state))
}

fn check_random_graph(g: &RandomHierarchy) -> SweepStats {
    let built = LabelHierarchy::from_edges(ROOT, g.edges.iter().map(|(c, p)| (c.as_str(), p.as_str())));
    let mut stats = SweepStats {
        graphs: 1,
        ..SweepStats::default()
    };
    let valid = oracle_valid(g);
    let h = match (built, valid) {
        (Ok(h), true) => h,
        (Err(_), false) => return stats,
        _ => {
            stats.disagreements += 1;
            return stats;
        }
    };
    stats.valid = 1;
    let mut bad = false;
    let labels: Vec<String> = g.edges.iter().map(|(c, _)| c.clone()).collect::<NameSet>().into_iter().collect();
    for l in &labels {
        let got: NameSet = h.ancestors(l).unwrap().into_iter().map(String::from).collect();
        bad |= got != g.ancestors(l);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(labels.len() as u64);
    for _ in 0..20 {
        let s = random_subset(&mut rng, &labels, 6);
        let set = h.label_set(&s).unwrap();
        let e = h.extend(&set).unwrap();
        let names: NameSet = h.names_of(&e.iter().collect::<Vec<_>>()).into_iter().map(String::from).collect();
        bad |= names != g.extend(&s);
        bad |= h.extend(&e.as_label_set()).unwrap() != e;
        let mut bigger = s.clone();
        bigger.insert(labels.choose(&mut rng).unwrap().clone());
        let eb = h.extend(&h.label_set(&bigger).unwrap()).unwrap();
        bad |= e.iter().any(|id| !eb.contains(id));
    }
    stats.disagreements += u64::from(bad);
    stats
}

pub fn label_sets(h: &LabelHierarchy, sets: &[NameSet]) -> BTreeMap<String, persuade_core::LabelSet> {
    keyed(sets)
        .into_iter()
        .map(|(k, v)| (k, h.label_set(&v).unwrap()))
        .collect()
}
