//! Label hierarchies as posets with a single virtual root.
//!
//! A [`LabelHierarchy`] is built from child → parent edges. Every node other
//! than the root has at least one parent, the edge relation is acyclic, and
//! every node reaches the root by following parents. Multiple parents are
//! allowed, so the structure is a DAG rather than a tree.
//!
//! Label sets never contain the root. [`LabelSet`] and [`ExtendedLabelSet`]
//! can only be produced through a hierarchy, which is what keeps the root out.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use sha2::{Digest, Sha256};

/// Index of a node inside one [`LabelHierarchy`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LabelId(pub(crate) u32);

impl LabelId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HierarchyError {
    #[error("hierarchy input is empty")]
    Empty,
    #[error("line {line}: expected `child<TAB>parent`")]
    Malformed { line: usize },
    #[error("line {line}: `{name}` declares a second root")]
    MultipleRoots { line: usize, name: String },
    #[error("line {line}: duplicate edge {child} -> {parent}")]
    DuplicateEdge { line: usize, child: String, parent: String },
    #[error("parent `{parent}` of `{child}` is never declared")]
    UnknownParent { child: String, parent: String },
    #[error("root `{0}` cannot have a parent")]
    RootHasParent(String),
    #[error("cycle through `{0}`")]
    Cycle(String),
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("the root label `{0}` cannot be assigned")]
    RootLabel(String),
}

/// An immutable poset of labels with a virtual root.
#[derive(Clone)]
pub struct LabelHierarchy {
    names: Vec<String>,
    index: BTreeMap<String, LabelId>,
    parents: Vec<Vec<LabelId>>,
    children: Vec<Vec<LabelId>>,
    // strict ancestors, root excluded, sorted
    ancestors: Vec<Vec<LabelId>>,
}

impl fmt::Debug for LabelHierarchy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LabelHierarchy")
            .field("root", &self.names[0])
            .field("nodes", &self.names.len())
            .finish()
    }
}

impl PartialEq for LabelHierarchy {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names && self.parents == other.parents
    }
}

impl Eq for LabelHierarchy {}

/// Parse the tab-separated edge-list format.
///
/// Line 1 names the root. Every later non-empty, non-comment line is
/// `child<TAB>parent`. Lines starting with `#` are comments.
pub fn parse_hierarchy(text: &str) -> Result<LabelHierarchy, HierarchyError> {
    let mut root: Option<String> = None;
    let mut edges: Vec<(String, String, usize)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        match (&root, fields.as_slice()) {
            (None, [name]) if !name.is_empty() => root = Some(name.to_string()),
            (None, _) => return Err(HierarchyError::Malformed { line: line_no }),
            (Some(_), [name]) => {
                return Err(HierarchyError::MultipleRoots {
                    line: line_no,
                    name: name.to_string(),
                })
            }
            (Some(_), [child, parent]) if !child.is_empty() && !parent.is_empty() => {
                edges.push((child.to_string(), parent.to_string(), line_no));
            }
            (Some(_), _) => return Err(HierarchyError::Malformed { line: line_no }),
        }
    }
    let root = root.ok_or(HierarchyError::Empty)?;

    let mut seen = BTreeSet::new();
    for (child, parent, line) in &edges {
        if !seen.insert((child.as_str(), parent.as_str())) {
            return Err(HierarchyError::DuplicateEdge {
                line: *line,
                child: child.clone(),
                parent: parent.clone(),
            });
        }
    }
    LabelHierarchy::from_edges(
        &root,
        edges.iter().map(|(c, p, _)| (c.as_str(), p.as_str())),
    )
}

impl LabelHierarchy {
    /// Build from a root name and `(child, parent)` pairs. Nodes are numbered
    /// in order of first appearance as a child; the root is always id 0.
    /// Repeated edges are collapsed.
    pub fn from_edges<'a, I>(root: &str, edges: I) -> Result<Self, HierarchyError>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let edges: Vec<(&str, &str)> = edges.into_iter().collect();
        let mut order_names = vec![root];
        let mut lookup: BTreeMap<&str, LabelId> = BTreeMap::new();
        lookup.insert(root, LabelId(0));
        for &(child, _) in &edges {
            if child == root {
                return Err(HierarchyError::RootHasParent(root.to_string()));
            }
            if !lookup.contains_key(child) {
                lookup.insert(child, LabelId(order_names.len() as u32));
                order_names.push(child);
            }
        }
        let mut parents: Vec<Vec<LabelId>> = vec![Vec::new(); order_names.len()];
        for &(child, parent) in &edges {
            let p = *lookup.get(parent).ok_or_else(|| HierarchyError::UnknownParent {
                child: child.to_string(),
                parent: parent.to_string(),
            })?;
            let c = lookup[child];
            if !parents[c.index()].contains(&p) {
                parents[c.index()].push(p);
            }
        }
        let order = topological_order(&parents, &order_names)?;

        let names: Vec<String> = order_names.iter().map(|s| s.to_string()).collect();
        let index: BTreeMap<String, LabelId> = lookup.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        let mut children = vec![Vec::new(); names.len()];
        for (c, ps) in parents.iter().enumerate() {
            for p in ps {
                children[p.index()].push(LabelId(c as u32));
            }
        }
        let mut ancestors: Vec<Vec<LabelId>> = vec![Vec::new(); names.len()];
        // parents precede children in `order`
        for &node in &order {
            let mut acc = BTreeSet::new();
            for &p in &parents[node] {
                if p.0 != 0 {
                    acc.insert(p);
                    acc.extend(ancestors[p.index()].iter().copied());
                }
            }
            ancestors[node] = acc.into_iter().collect();
        }
        Ok(Self {
            names,
            index,
            parents,
            children,
            ancestors,
        })
    }

    pub fn root(&self) -> &str {
        &self.names[0]
    }

    /// Number of nodes including the root.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn name(&self, id: LabelId) -> &str {
        &self.names[id.index()]
    }

    pub fn id(&self, name: &str) -> Option<LabelId> {
        self.index.get(name).copied()
    }

    /// All non-root labels in id order.
    pub fn labels(&self) -> impl Iterator<Item = LabelId> + '_ {
        (1..self.names.len() as u32).map(LabelId)
    }

    /// Non-root labels sorted by name.
    pub fn labels_by_name(&self) -> Vec<LabelId> {
        self.index.values().copied().filter(|id| id.0 != 0).collect()
    }

    pub fn parents(&self, id: LabelId) -> &[LabelId] {
        &self.parents[id.index()]
    }

    pub fn children(&self, id: LabelId) -> &[LabelId] {
        &self.children[id.index()]
    }

    pub fn is_leaf(&self, id: LabelId) -> bool {
        self.children[id.index()].is_empty()
    }

    /// `(child, parent)` edges in child id order, parents in declaration order.
    pub fn edges(&self) -> impl Iterator<Item = (LabelId, LabelId)> + '_ {
        self.parents
            .iter()
            .enumerate()
            .flat_map(|(c, ps)| ps.iter().map(move |&p| (LabelId(c as u32), p)))
    }

    /// Strict ancestors of `label`, root excluded.
    pub fn ancestors(&self, label: &str) -> Result<BTreeSet<&str>, HierarchyError> {
        let id = self
            .id(label)
            .ok_or_else(|| HierarchyError::UnknownLabel(label.to_string()))?;
        Ok(self.ancestor_ids(id).iter().map(|&a| self.name(a)).collect())
    }

    pub fn ancestor_ids(&self, id: LabelId) -> &[LabelId] {
        &self.ancestors[id.index()]
    }

    /// Validate names into a [`LabelSet`]. Duplicates collapse.
    pub fn label_set<I, S>(&self, names: I) -> Result<LabelSet, HierarchyError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = BTreeSet::new();
        for name in names {
            let name = name.as_ref();
            match self.id(name) {
                Some(LabelId(0)) => return Err(HierarchyError::RootLabel(name.to_string())),
                Some(id) => {
                    set.insert(id);
                }
                None => return Err(HierarchyError::UnknownLabel(name.to_string())),
            }
        }
        Ok(LabelSet(set))
    }

    /// Build a [`LabelSet`] from ids, rejecting the root and foreign ids.
    pub fn label_set_from_ids<I>(&self, ids: I) -> Result<LabelSet, HierarchyError>
    where
        I: IntoIterator<Item = LabelId>,
    {
        let mut set = BTreeSet::new();
        for id in ids {
            self.check(id)?;
            set.insert(id);
        }
        Ok(LabelSet(set))
    }

    fn check(&self, id: LabelId) -> Result<(), HierarchyError> {
        match id.index() {
            0 => Err(HierarchyError::RootLabel(self.names[0].clone())),
            i if i < self.names.len() => Ok(()),
            i => Err(HierarchyError::UnknownLabel(alloc::format!("#{i}"))),
        }
    }

    /// Ancestor closure of `set`, root excluded.
    pub fn extend(&self, set: &LabelSet) -> Result<ExtendedLabelSet, HierarchyError> {
        let mut out = BTreeSet::new();
        for &id in &set.0 {
            self.check(id)?;
            out.insert(id);
            out.extend(self.ancestors[id.index()].iter().copied());
        }
        Ok(ExtendedLabelSet(out))
    }

    pub fn is_consistent(&self, set: &LabelSet) -> Result<bool, HierarchyError> {
        Ok(self.extend(set)?.0 == set.0)
    }

    pub fn names_of<'a>(&'a self, ids: impl IntoIterator<Item = &'a LabelId>) -> Vec<&'a str> {
        let mut v: Vec<&str> = ids.into_iter().map(|&id| self.name(id)).collect();
        v.sort_unstable();
        v
    }

    /// Render back to the edge-list file format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(self.root());
        out.push('\n');
        for (c, p) in self.edges() {
            out.push_str(self.name(c));
            out.push('\t');
            out.push_str(self.name(p));
            out.push('\n');
        }
        out
    }

    /// SHA-256 over the root and the sorted edge list, hex encoded. Comments,
    /// blank lines and edge order do not affect it.
    pub fn fingerprint(&self) -> String {
        let mut edges: Vec<(&str, &str)> = self
            .edges()
            .map(|(c, p)| (self.name(c), self.name(p)))
            .collect();
        edges.sort_unstable();
        let mut hasher = Sha256::new();
        hasher.update(self.root().as_bytes());
        hasher.update(b"\n");
        for (c, p) in edges {
            hasher.update(c.as_bytes());
            hasher.update(b"\t");
            hasher.update(p.as_bytes());
            hasher.update(b"\n");
        }
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for byte in digest.iter() {
            hex.push_str(&alloc::format!("{byte:02x}"));
        }
        hex
    }
}

// Kahn's algorithm from the root downwards; anything left over sits on or
// below a cycle.
fn topological_order(parents: &[Vec<LabelId>], names: &[&str]) -> Result<Vec<usize>, HierarchyError> {
    let n = parents.len();
    let mut pending: Vec<usize> = parents.iter().map(Vec::len).collect();
    // children in compressed rows: those of `p` are adj[start[p]..start[p + 1]]
    let mut start = vec![0usize; n + 1];
    for p in parents.iter().flatten() {
        start[p.index() + 1] += 1;
    }
    for i in 0..n {
        start[i + 1] += start[i];
    }
    let mut fill = start.clone();
    let mut adj = vec![0usize; start[n]];
    for (c, ps) in parents.iter().enumerate() {
        for p in ps {
            adj[fill[p.index()]] = c;
            fill[p.index()] += 1;
        }
    }
    let mut order = Vec::with_capacity(n);
    let mut stack = vec![0usize];
    while let Some(node) = stack.pop() {
        order.push(node);
        for &c in &adj[start[node]..start[node + 1]] {
            pending[c] -= 1;
            if pending[c] == 0 {
                stack.push(c);
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }
    // Every non-root node has a parent, so an unreached node either lies on a
    // cycle or descends from one. Walk parents among unreached nodes until a
    // node repeats to name a member of the cycle.
    let mut reached = vec![false; n];
    for &i in &order {
        reached[i] = true;
    }
    let start = (0..n).find(|&i| !reached[i]).unwrap_or(0);
    let mut visited = vec![false; n];
    let mut node = start;
    while !visited[node] {
        visited[node] = true;
        node = parents[node]
            .iter()
            .map(|p| p.index())
            .find(|&p| !reached[p])
            .unwrap_or(node);
    }
    Err(HierarchyError::Cycle(names[node].to_string()))
}

/// A set of non-root labels assigned to one instance.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct LabelSet(BTreeSet<LabelId>);

impl LabelSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, id: LabelId) -> bool {
        self.0.contains(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = LabelId> + '_ {
        self.0.iter().copied()
    }

    pub fn is_subset(&self, other: &LabelSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn union(&self, other: &LabelSet) -> LabelSet {
        LabelSet(self.0.union(&other.0).copied().collect())
    }
}

/// A label set closed under (non-root) ancestors.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct ExtendedLabelSet(BTreeSet<LabelId>);

impl ExtendedLabelSet {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, id: LabelId) -> bool {
        self.0.contains(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = LabelId> + '_ {
        self.0.iter().copied()
    }

    pub fn intersection_len(&self, other: &ExtendedLabelSet) -> usize {
        self.0.intersection(&other.0).count()
    }

    pub fn into_label_set(self) -> LabelSet {
        LabelSet(self.0)
    }

    pub fn as_label_set(&self) -> LabelSet {
        LabelSet(self.0.clone())
    }
}
