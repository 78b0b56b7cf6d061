//! Time-aware spatial tree over the corpus.
//!
//! Objects are packed bottom-up with a sort-tile-recursive scheme: sort by
//! longitude, cut into vertical slices, sort each slice by latitude, and cut
//! into nodes. Groups are split as evenly as possible so every node except
//! the root stays within [max_fanout / 2, max_fanout].
//!
//! Beyond geometry, each node carries three summaries used as upper bounds
//! during search, all chosen to dominate every descendant's exact score:
//! - `entropy_bound`: max of the node's own normalized category entropy and
//!   its children's bounds. Raw entropy alone is not monotone up the tree
//!   (merging subtrees can cancel diversity), so the running max is stored.
//! - `keyword_summary`: per-keyword maximum weight over the subtree.
//! - `time_bound`: per-interval maximum of descendants' peak-normalized
//!   check-in scores. Normalizing before taking the max is what makes the
//!   bound admissible; maxima of raw probabilities would not dominate the
//!   per-object scores, which divide by each object's own peak.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::Mbr;
use crate::model::{Corpus, IntervalScheme, ObjectId};

pub const DEFAULT_MAX_FANOUT: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Leaf { objects: Vec<ObjectId> },
    Internal { children: Vec<NodeId> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: NodeId,
    /// Derived from the child lists; never persisted.
    #[serde(skip)]
    pub parent: Option<NodeId>,
    pub mbr: Mbr,
    /// Upper bound on normalized category entropy over the subtree.
    pub entropy_bound: f64,
    /// Per-keyword maximum TF-IDF weight over the subtree.
    pub keyword_summary: BTreeMap<String, f64>,
    /// Per-interval upper bound on the visiting-time score of any descendant.
    pub time_bound: Vec<f64>,
    pub subtree_count: usize,
    pub kind: NodeKind,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf { .. })
    }

    pub fn entry_count(&self) -> usize {
        match &self.kind {
            NodeKind::Leaf { objects } => objects.len(),
            NodeKind::Internal { children } => children.len(),
        }
    }

    pub fn keyword_summary_weight(&self, keyword: &str) -> f64 {
        self.keyword_summary.get(keyword).copied().unwrap_or(0.0)
    }
}

/// Counts tree nodes touched while answering a query; reset per query.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NodeAccessCounter(usize);

impl NodeAccessCounter {
    pub fn new() -> Self {
        NodeAccessCounter(0)
    }

    pub fn record(&mut self) {
        self.0 += 1;
    }

    pub fn get(&self) -> usize {
        self.0
    }

    pub fn reset(&mut self) {
        self.0 = 0;
    }
}

#[derive(Debug, Clone)]
pub struct TrTree {
    max_fanout: usize,
    interval_count: usize,
    nodes: Vec<TreeNode>,
    root: NodeId,
    leaf_of: HashMap<ObjectId, NodeId>,
}

impl TrTree {
    /// Packs all corpus objects into a tree. Node ids follow construction
    /// order: leaves first, then each internal level, root last. Summaries
    /// are left empty until [`TrTree::compute_summaries`] runs.
    pub fn bulk_load(corpus: &Corpus, max_fanout: usize) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if max_fanout < 2 {
            return Err(Error::InvalidParameter(format!(
                "max fanout {max_fanout} must be at least 2"
            )));
        }

        let mut builder = TreeBuilder {
            nodes: Vec::new(),
            leaf_of: HashMap::new(),
        };

        let items: Vec<(f64, f64, ObjectId)> = corpus
            .objects()
            .iter()
            .map(|o| (o.location.lon, o.location.lat, o.id.clone()))
            .collect();
        let mut level: Vec<NodeId> = str_partition(items, max_fanout)
            .into_iter()
            .map(|group| builder.push_leaf(group, corpus))
            .collect();

        while level.len() > 1 {
            let items: Vec<(f64, f64, NodeId)> = level
                .iter()
                .map(|&id| {
                    let c = builder.nodes[id.0].mbr.center();
                    (c.lon, c.lat, id)
                })
                .collect();
            level = str_partition(items, max_fanout)
                .into_iter()
                .map(|group| builder.push_internal(group))
                .collect();
        }

        Ok(TrTree {
            max_fanout,
            interval_count: 0,
            root: level[0],
            nodes: builder.nodes,
            leaf_of: builder.leaf_of,
        })
    }

    /// Fills entropy, keyword, and time summaries bottom-up. Children always
    /// carry smaller ids than their parents, so a single ascending pass sees
    /// every child before its parent.
    pub fn compute_summaries(&mut self, corpus: &Corpus, scheme: IntervalScheme) -> Result<()> {
        let category_count = corpus.categories().len();
        let intervals = scheme.count();
        self.interval_count = intervals;
        let mut subtree_categories: Vec<BTreeMap<String, u64>> = vec![BTreeMap::new(); self.nodes.len()];

        for idx in 0..self.nodes.len() {
            let (entropy, keywords, time_bound, categories) = match &self.nodes[idx].kind {
                NodeKind::Leaf { objects } => {
                    let mut categories: BTreeMap<String, u64> = BTreeMap::new();
                    let mut keywords: BTreeMap<String, f64> = BTreeMap::new();
                    let mut time_bound = vec![0.0_f64; intervals];
                    for id in objects {
                        let obj = corpus.get(id).ok_or_else(|| Error::UnknownObject {
                            id: id.0.clone(),
                        })?;
                        *categories.entry(obj.category.clone()).or_insert(0) += 1;
                        for (word, &weight) in &obj.keywords {
                            let slot = keywords.entry(word.clone()).or_insert(0.0);
                            *slot = (*slot).max(weight);
                        }
                        for (slot, score) in time_bound.iter_mut().zip(obj.time_dist.score_profile())
                        {
                            *slot = (*slot).max(score);
                        }
                    }
                    let entropy = raw_category_entropy(
                        categories.values().copied().collect::<Vec<_>>().as_slice(),
                        category_count,
                    )?;
                    (entropy, keywords, time_bound, categories)
                }
                NodeKind::Internal { children } => {
                    let mut categories: BTreeMap<String, u64> = BTreeMap::new();
                    let mut keywords: BTreeMap<String, f64> = BTreeMap::new();
                    let mut time_bound = vec![0.0_f64; intervals];
                    let mut child_bound_max = 0.0_f64;
                    for child in children {
                        child_bound_max = child_bound_max.max(self.nodes[child.0].entropy_bound);
                        for (cat, count) in &subtree_categories[child.0] {
                            *categories.entry(cat.clone()).or_insert(0) += count;
                        }
                        for (word, &weight) in &self.nodes[child.0].keyword_summary {
                            let slot = keywords.entry(word.clone()).or_insert(0.0);
                            *slot = (*slot).max(weight);
                        }
                        for (slot, &score) in
                            time_bound.iter_mut().zip(&self.nodes[child.0].time_bound)
                        {
                            *slot = (*slot).max(score);
                        }
                    }
                    let own = raw_category_entropy(
                        categories.values().copied().collect::<Vec<_>>().as_slice(),
                        category_count,
                    )?;
                    // The running max keeps the bound monotone up the tree.
                    (own.max(child_bound_max), keywords, time_bound, categories)
                }
            };
            self.nodes[idx].entropy_bound = entropy;
            self.nodes[idx].keyword_summary = keywords;
            self.nodes[idx].time_bound = time_bound;
            subtree_categories[idx] = categories;
        }
        Ok(())
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id.0]
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn max_fanout(&self) -> usize {
        self.max_fanout
    }

    pub fn min_fanout(&self) -> usize {
        self.max_fanout / 2
    }

    pub fn interval_count(&self) -> usize {
        self.interval_count
    }

    pub fn leaf_of(&self, object: &ObjectId) -> Option<NodeId> {
        self.leaf_of.get(object).copied()
    }

    /// Number of levels from root to leaves inclusive.
    pub fn height(&self) -> usize {
        let mut height = 1;
        let mut id = self.root;
        loop {
            match &self.nodes[id.0].kind {
                NodeKind::Leaf { .. } => return height,
                NodeKind::Internal { children } => {
                    height += 1;
                    id = children[0];
                }
            }
        }
    }

    /// Walks parent links from `id` (inclusive) to the root.
    pub fn ancestors(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        let mut current = Some(id);
        std::iter::from_fn(move || {
            let id = current?;
            current = self.nodes[id.0].parent;
            Some(id)
        })
    }

    /// All object ids stored in the subtree rooted at `id`.
    pub fn subtree_objects(&self, id: NodeId) -> Vec<&ObjectId> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(id) = stack.pop() {
            match &self.nodes[id.0].kind {
                NodeKind::Leaf { objects } => out.extend(objects.iter()),
                NodeKind::Internal { children } => stack.extend(children.iter().copied()),
            }
        }
        out
    }

    /// Assembles a tree from persisted parts, rebuilding parent links and the
    /// object-to-leaf map, and validating structural invariants.
    pub fn from_parts(
        mut nodes: Vec<TreeNode>,
        root: NodeId,
        max_fanout: usize,
        interval_count: usize,
    ) -> Result<Self> {
        for (idx, node) in nodes.iter().enumerate() {
            if node.id.0 != idx {
                return Err(Error::Invariant(format!(
                    "node at position {idx} has id {}",
                    node.id
                )));
            }
        }
        if root.0 >= nodes.len() {
            return Err(Error::Invariant(format!("root id {root} out of bounds")));
        }
        let mut parents: Vec<Option<NodeId>> = vec![None; nodes.len()];
        let mut leaf_of = HashMap::new();
        for idx in 0..nodes.len() {
            match &nodes[idx].kind {
                NodeKind::Leaf { objects } => {
                    for object in objects {
                        if leaf_of.insert(object.clone(), NodeId(idx)).is_some() {
                            return Err(Error::Invariant(format!(
                                "object `{object}` stored in more than one leaf"
                            )));
                        }
                    }
                }
                NodeKind::Internal { children } => {
                    for child in children {
                        if child.0 >= nodes.len() {
                            return Err(Error::Invariant(format!(
                                "child id {child} out of bounds"
                            )));
                        }
                        if parents[child.0].is_some() {
                            return Err(Error::Invariant(format!(
                                "node {child} has more than one parent"
                            )));
                        }
                        parents[child.0] = Some(NodeId(idx));
                    }
                }
            }
        }
        for (idx, parent) in parents.iter().enumerate() {
            nodes[idx].parent = *parent;
            if parent.is_none() && idx != root.0 {
                return Err(Error::Invariant(format!(
                    "node {idx} is unreachable from the root"
                )));
            }
        }
        Ok(TrTree {
            max_fanout,
            interval_count,
            nodes,
            root,
            leaf_of,
        })
    }
}

struct TreeBuilder {
    nodes: Vec<TreeNode>,
    leaf_of: HashMap<ObjectId, NodeId>,
}

impl TreeBuilder {
    fn push_leaf(&mut self, objects: Vec<ObjectId>, corpus: &Corpus) -> NodeId {
        let id = NodeId(self.nodes.len());
        let mut mbr: Option<Mbr> = None;
        for object in &objects {
            let p = corpus.get(object).expect("bulk load over corpus objects");
            match &mut mbr {
                Some(m) => m.expand_point(&p.location),
                None => mbr = Some(Mbr::of_point(&p.location)),
            }
            self.leaf_of.insert(object.clone(), id);
        }
        self.nodes.push(TreeNode {
            id,
            parent: None,
            mbr: mbr.expect("leaf groups are non-empty"),
            entropy_bound: 0.0,
            keyword_summary: BTreeMap::new(),
            time_bound: Vec::new(),
            subtree_count: objects.len(),
            kind: NodeKind::Leaf { objects },
        });
        id
    }

    fn push_internal(&mut self, children: Vec<NodeId>, ) -> NodeId {
        let id = NodeId(self.nodes.len());
        let mut mbr = self.nodes[children[0].0].mbr;
        let mut count = 0;
        for child in &children {
            mbr.expand_mbr(&self.nodes[child.0].mbr);
            count += self.nodes[child.0].subtree_count;
            self.nodes[child.0].parent = Some(id);
        }
        self.nodes.push(TreeNode {
            id,
            parent: None,
            mbr,
            entropy_bound: 0.0,
            keyword_summary: BTreeMap::new(),
            time_bound: Vec::new(),
            subtree_count: count,
            kind: NodeKind::Internal { children },
        });
        id
    }
}

/// Splits `items` into `parts` consecutive runs whose sizes differ by at
/// most one.
fn even_split<T>(items: Vec<T>, parts: usize) -> Vec<Vec<T>> {
    let n = items.len();
    let base = n / parts;
    let extra = n % parts;
    let mut out = Vec::with_capacity(parts);
    let mut iter = items.into_iter();
    for i in 0..parts {
        let size = base + usize::from(i < extra);
        out.push(iter.by_ref().take(size).collect());
    }
    out
}

/// Sort-tile-recursive grouping of `(lon, lat, key)` items into groups of at
/// most `max_fanout`. Sizes are balanced so that whenever two or more groups
/// exist, each holds at least `max_fanout / 2` items; the trailing key makes
/// ties deterministic.
fn str_partition<T: Ord>(mut items: Vec<(f64, f64, T)>, max_fanout: usize) -> Vec<Vec<T>> {
    let group_count = items.len().div_ceil(max_fanout);
    if group_count <= 1 {
        return vec![items.into_iter().map(|(_, _, t)| t).collect()];
    }
    let slice_count = (group_count as f64).sqrt().ceil() as usize;
    items.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .expect("finite coordinates")
            .then_with(|| a.1.partial_cmp(&b.1).expect("finite coordinates"))
            .then_with(|| a.2.cmp(&b.2))
    });
    let mut groups = Vec::with_capacity(group_count);
    for mut slice in even_split(items, slice_count) {
        slice.sort_by(|a, b| {
            a.1.partial_cmp(&b.1)
                .expect("finite coordinates")
                .then_with(|| a.0.partial_cmp(&b.0).expect("finite coordinates"))
                .then_with(|| a.2.cmp(&b.2))
        });
        let parts = slice.len().div_ceil(max_fanout);
        groups.extend(
            even_split(slice, parts)
                .into_iter()
                .map(|g| g.into_iter().map(|(_, _, t)| t).collect()),
        );
    }
    groups
}

/// Normalized Shannon entropy of category counts: 0 for a single category,
/// 1 for a uniform spread over all `category_count` categories.
pub fn raw_category_entropy(counts: &[u64], category_count: usize) -> Result<f64> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::InvalidParameter(
            "category entropy of all-zero counts".to_string(),
        ));
    }
    if category_count <= 1 {
        return Ok(0.0);
    }
    let total = total as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum();
    Ok(h / (category_count as f64).log2())
}
