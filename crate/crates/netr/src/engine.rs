//! Top-k query execution.
//!
//! Three interchangeable strategies over one scoring context:
//! [`top_k`] runs best-first search with all prunes enabled, [`brute_force_top_k`]
//! scores everything in radius and sorts, and [`top_k_baseline_ir`] searches
//! with spatio-textual bounds only and re-ranks, mimicking an IR-tree that
//! knows nothing about time or friends.
//!
//! All three return the same entries for the same context: objects within the
//! query radius that are open at the query interval (nonzero visiting-time
//! score), ordered by total score descending with ascending object id on
//! ties. Closed objects are never returned; that is what makes discarding
//! zero-time-bound subtrees mid-search lossless.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::GeoPoint;
use crate::model::{ObjectId, UserId};
use crate::scoring::{ScoreBreakdown, ScoreWeights, ScoringContext};
use crate::tree::{NodeId, NodeKind};

/// One ranked request as issued by a user.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub user: UserId,
    pub location: GeoPoint,
    pub keywords: Vec<String>,
    pub time: NaiveDateTime,
    pub k: usize,
    pub max_distance_km: f64,
    pub weights: ScoreWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub object: ObjectId,
    pub breakdown: ScoreBreakdown,
}

impl RankedEntry {
    pub fn score(&self) -> f64 {
        self.breakdown.total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryStats {
    /// Tree nodes popped from the search frontier.
    pub node_accesses: usize,
    /// Objects given an exact full score.
    pub candidates_scored: usize,
    /// Nodes discarded because nothing below them is open at query time.
    pub temporal_skips: usize,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedResult {
    pub entries: Vec<RankedEntry>,
    pub stats: QueryStats,
}

/// Heap entry. Ordering puts the highest score first; on ties objects beat
/// nodes, leaf nodes beat internal ones, then the smaller id wins.
#[derive(Debug, Clone)]
enum Frontier {
    Object { id: ObjectId, breakdown: ScoreBreakdown },
    Node { id: NodeId, bound: f64, is_leaf: bool },
}

impl Frontier {
    fn priority(&self) -> f64 {
        match self {
            Frontier::Object { breakdown, .. } => breakdown.total,
            Frontier::Node { bound, .. } => *bound,
        }
    }

    fn kind_rank(&self) -> u8 {
        match self {
            Frontier::Object { .. } => 0,
            Frontier::Node { is_leaf: true, .. } => 1,
            Frontier::Node { is_leaf: false, .. } => 2,
        }
    }
}

impl PartialEq for Frontier {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Frontier {}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority()
            .total_cmp(&other.priority())
            .then_with(|| other.kind_rank().cmp(&self.kind_rank()))
            .then_with(|| match (self, other) {
                (Frontier::Object { id: a, .. }, Frontier::Object { id: b, .. }) => b.cmp(a),
                (Frontier::Node { id: a, .. }, Frontier::Node { id: b, .. }) => b.0.cmp(&a.0),
                _ => unreachable!("mixed kinds already ranked"),
            })
    }
}

/// Scores of object entries currently enqueued, kept sorted for the
/// could-it-still-place test.
#[derive(Default)]
struct EnqueuedScores(Vec<f64>);

impl EnqueuedScores {
    fn insert(&mut self, score: f64) {
        let at = self.0.partition_point(|&s| s < score);
        self.0.insert(at, score);
    }

    fn remove(&mut self, score: f64) {
        let at = self.0.partition_point(|&s| s < score);
        debug_assert!(self.0.get(at) == Some(&score));
        self.0.remove(at);
    }

    fn strictly_above(&self, score: f64) -> usize {
        self.0.len() - self.0.partition_point(|&s| s <= score)
    }
}

/// Best-first search with every prune enabled: subtrees are dropped when out
/// of radius, closed at the query interval, or provably unable to place an
/// object into the remaining result slots.
pub fn top_k(ctx: &ScoringContext, k: usize) -> Result<RankedResult> {
    check_k(k)?;
    let start = Instant::now();
    let tree = ctx.tree();
    let corpus = ctx.corpus();
    let interval = ctx.interval();

    let mut stats = QueryStats {
        node_accesses: 0,
        candidates_scored: 0,
        temporal_skips: 0,
        elapsed: Duration::ZERO,
    };
    let mut heap = BinaryHeap::new();
    let mut enqueued = EnqueuedScores::default();
    let mut entries: Vec<RankedEntry> = Vec::new();

    let root = tree.node(tree.root());
    heap.push(Frontier::Node {
        id: root.id,
        bound: ctx.bound_node(root, ctx.node_min_distance_km(root)).total,
        is_leaf: root.is_leaf(),
    });

    while let Some(top) = heap.pop() {
        match top {
            Frontier::Object { id, breakdown } => {
                enqueued.remove(breakdown.total);
                entries.push(RankedEntry { object: id, breakdown });
                if entries.len() == k {
                    break;
                }
            }
            Frontier::Node { id, .. } => {
                stats.node_accesses += 1;
                let node = tree.node(id);
                if node.time_bound[interval] == 0.0 {
                    stats.temporal_skips += 1;
                    continue;
                }
                let slots_left = k - entries.len();
                match &node.kind {
                    NodeKind::Leaf { objects } => {
                        for oid in objects {
                            let object = corpus.get(oid).expect("tree object is in the corpus");
                            let d = ctx.object_distance_km(object);
                            if d > ctx.max_distance_km() {
                                continue;
                            }
                            if object.time_dist.score_at(interval) == 0.0 {
                                continue;
                            }
                            let breakdown = ctx.score_object(object, d);
                            stats.candidates_scored += 1;
                            if enqueued.strictly_above(breakdown.total) < slots_left {
                                enqueued.insert(breakdown.total);
                                heap.push(Frontier::Object { id: oid.clone(), breakdown });
                            }
                        }
                    }
                    NodeKind::Internal { children } => {
                        for &cid in children {
                            let child = tree.node(cid);
                            let md = ctx.node_min_distance_km(child);
                            if md > ctx.max_distance_km() {
                                continue;
                            }
                            let bound = ctx.bound_node(child, md).total;
                            if enqueued.strictly_above(bound) < slots_left {
                                heap.push(Frontier::Node {
                                    id: cid,
                                    bound,
                                    is_leaf: child.is_leaf(),
                                });
                            }
                        }
                    }
                }
            }
        }
    }

    stats.elapsed = start.elapsed();
    Ok(RankedResult { entries, stats })
}

/// Definitional reference: score every open in-radius object and sort.
pub fn brute_force_top_k(ctx: &ScoringContext, k: usize) -> Result<RankedResult> {
    check_k(k)?;
    let start = Instant::now();
    let interval = ctx.interval();
    let mut entries: Vec<RankedEntry> = Vec::new();
    for object in ctx.corpus().objects() {
        let d = ctx.object_distance_km(object);
        if d > ctx.max_distance_km() || object.time_dist.score_at(interval) == 0.0 {
            continue;
        }
        entries.push(RankedEntry {
            object: object.id.clone(),
            breakdown: ctx.score_object(object, d),
        });
    }
    let candidates_scored = entries.len();
    sort_ranked(&mut entries);
    entries.truncate(k);
    Ok(RankedResult {
        entries,
        stats: QueryStats {
            node_accesses: 0,
            candidates_scored,
            temporal_skips: 0,
            elapsed: start.elapsed(),
        },
    })
}

/// IR-tree style two-phase search: walk every subtree that intersects the
/// radius ordered by spatio-textual promise alone, collect the in-radius
/// objects, then re-rank the open ones by the full score. Returns the same
/// entries as [`brute_force_top_k`]; exists to measure how many node accesses
/// the temporal and social prunes save.
pub fn top_k_baseline_ir(ctx: &ScoringContext, k: usize) -> Result<RankedResult> {
    check_k(k)?;
    let start = Instant::now();
    let tree = ctx.tree();
    let corpus = ctx.corpus();
    let weights = ctx.weights();
    let mut stats = QueryStats {
        node_accesses: 0,
        candidates_scored: 0,
        temporal_skips: 0,
        elapsed: Duration::ZERO,
    };

    let spatio_textual = |b: &ScoreBreakdown| weights.geo * b.geo + weights.keyword * b.keyword;

    let mut heap = BinaryHeap::new();
    let root = tree.node(tree.root());
    heap.push(Frontier::Node {
        id: root.id,
        bound: spatio_textual(&ctx.bound_node(root, ctx.node_min_distance_km(root))),
        is_leaf: root.is_leaf(),
    });
    let mut candidates: Vec<&ObjectId> = Vec::new();
    while let Some(top) = heap.pop() {
        let Frontier::Node { id, .. } = top else {
            unreachable!("baseline keeps only nodes enqueued");
        };
        stats.node_accesses += 1;
        match &tree.node(id).kind {
            NodeKind::Leaf { objects } => {
                for oid in objects {
                    let object = corpus.get(oid).expect("tree object is in the corpus");
                    if ctx.object_distance_km(object) <= ctx.max_distance_km() {
                        candidates.push(oid);
                    }
                }
            }
            NodeKind::Internal { children } => {
                for &cid in children {
                    let child = tree.node(cid);
                    let md = ctx.node_min_distance_km(child);
                    if md > ctx.max_distance_km() {
                        continue;
                    }
                    heap.push(Frontier::Node {
                        id: cid,
                        bound: spatio_textual(&ctx.bound_node(child, md)),
                        is_leaf: child.is_leaf(),
                    });
                }
            }
        }
    }

    let mut entries: Vec<RankedEntry> = Vec::new();
    for oid in candidates {
        let object = corpus.get(oid).expect("candidate came from the corpus");
        if object.time_dist.score_at(ctx.interval()) == 0.0 {
            continue;
        }
        let d = ctx.object_distance_km(object);
        entries.push(RankedEntry {
            object: oid.clone(),
            breakdown: ctx.score_object(object, d),
        });
        stats.candidates_scored += 1;
    }
    sort_ranked(&mut entries);
    entries.truncate(k);
    stats.elapsed = start.elapsed();
    Ok(RankedResult { entries, stats })
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    Ok(())
}

fn sort_ranked(entries: &mut [RankedEntry]) {
    entries.sort_by(|a, b| {
        b.score()
            .total_cmp(&a.score())
            .then_with(|| a.object.cmp(&b.object))
    });
}
