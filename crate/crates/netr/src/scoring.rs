//! Query-time ranking.
//!
//! Every object gets a weighted blend of four components in [0, 1] (the
//! social component can dip below zero for dissimilar neighbors): geo
//! (category diversity mixed with proximity), keyword relevance, visiting
//! time fit, and social pull from the querying user's neighbor circle. Tree
//! nodes get the same blend computed from their stored summaries; each node
//! value is an upper bound on the score of every object underneath, which is
//! what lets the search discard subtrees.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{haversine_km, min_distance_km, GeoPoint};
use crate::model::{Corpus, ObjectId, SpatialObject, UserId};
use crate::social::UserValueBlock;
use crate::tree::{TreeNode, TrTree};

pub const DEFAULT_GEO_WEIGHT: f64 = 0.25;
pub const DEFAULT_KEYWORD_WEIGHT: f64 = 0.25;
pub const DEFAULT_SOCIAL_WEIGHT: f64 = 0.3;
pub const DEFAULT_DIVERSITY_MIX: f64 = 0.5;
pub const DEFAULT_MAX_DISTANCE_KM: f64 = 12.0;

/// Component weights. The time weight is implicit: whatever remains after
/// geo, keyword, and social.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreWeights {
    pub geo: f64,
    pub keyword: f64,
    pub social: f64,
    /// Mix inside the geo component: `theta` on category diversity,
    /// `1 - theta` on proximity.
    pub theta: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        ScoreWeights {
            geo: DEFAULT_GEO_WEIGHT,
            keyword: DEFAULT_KEYWORD_WEIGHT,
            social: DEFAULT_SOCIAL_WEIGHT,
            theta: DEFAULT_DIVERSITY_MIX,
        }
    }
}

impl ScoreWeights {
    pub fn validated(self) -> Result<Self> {
        for (name, v) in [
            ("geo", self.geo),
            ("keyword", self.keyword),
            ("social", self.social),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "{name} weight {v} must be non-negative"
                )));
            }
        }
        let sum = self.geo + self.keyword + self.social;
        if sum > 1.0 + 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "geo + keyword + social weights sum to {sum}, above 1"
            )));
        }
        if !self.theta.is_finite() || !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::InvalidParameter(format!(
                "theta {} must lie in [0, 1]",
                self.theta
            )));
        }
        Ok(self)
    }

    pub fn time(&self) -> f64 {
        (1.0 - self.geo - self.keyword - self.social).max(0.0)
    }

    fn combine(&self, geo: f64, keyword: f64, social: f64, time: f64) -> f64 {
        self.geo * geo + self.keyword * keyword + self.social * social + self.time() * time
    }
}

/// One scored target, component by component. Components are stored
/// unweighted; `total` applies the weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub geo: f64,
    pub keyword: f64,
    pub time: f64,
    pub social: f64,
    pub total: f64,
}

/// A member of the querying user's neighbor circle, with everything needed
/// to score their influence: embedding closeness plus their check-in counts
/// projected onto objects and tree nodes. Users who never checked in carry
/// `None` and contribute nothing.
#[derive(Debug, Clone)]
pub struct NeighborContribution<'a> {
    pub user: UserId,
    pub closeness: f64,
    pub block: Option<&'a UserValueBlock>,
    pub object_counts: Option<&'a BTreeMap<ObjectId, u32>>,
}

/// Everything fixed for the duration of one query.
#[derive(Debug)]
pub struct ScoringContext<'a> {
    corpus: &'a Corpus,
    tree: &'a TrTree,
    weights: ScoreWeights,
    location: GeoPoint,
    keywords: Vec<String>,
    interval: usize,
    max_distance_km: f64,
    neighbors: Vec<NeighborContribution<'a>>,
}

impl<'a> ScoringContext<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        corpus: &'a Corpus,
        tree: &'a TrTree,
        weights: ScoreWeights,
        location: GeoPoint,
        mut keywords: Vec<String>,
        interval: usize,
        max_distance_km: f64,
        neighbors: Vec<NeighborContribution<'a>>,
    ) -> Result<Self> {
        let weights = weights.validated()?;
        keywords.sort();
        keywords.dedup();
        if keywords.is_empty() {
            return Err(Error::InvalidParameter(
                "query needs at least one keyword".into(),
            ));
        }
        if interval >= tree.interval_count() {
            return Err(Error::InvalidParameter(format!(
                "interval {interval} out of range for {} intervals",
                tree.interval_count()
            )));
        }
        if !(max_distance_km > 0.0) || !max_distance_km.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "query radius {max_distance_km} must be positive"
            )));
        }
        Ok(ScoringContext {
            corpus,
            tree,
            weights,
            location,
            keywords,
            interval,
            max_distance_km,
            neighbors,
        })
    }

    pub fn corpus(&self) -> &'a Corpus {
        self.corpus
    }

    pub fn tree(&self) -> &'a TrTree {
        self.tree
    }

    pub fn location(&self) -> GeoPoint {
        self.location
    }

    pub fn keywords(&self) -> &[String] {
        &self.keywords
    }

    pub fn interval(&self) -> usize {
        self.interval
    }

    pub fn max_distance_km(&self) -> f64 {
        self.max_distance_km
    }

    pub fn weights(&self) -> ScoreWeights {
        self.weights
    }

    pub fn neighbors(&self) -> &[NeighborContribution<'a>] {
        &self.neighbors
    }

    pub fn object_distance_km(&self, object: &SpatialObject) -> f64 {
        haversine_km(&self.location, &object.location)
    }

    pub fn node_min_distance_km(&self, node: &TreeNode) -> f64 {
        min_distance_km(&self.location, &node.mbr)
    }

    /// Linear falloff from 1 at the query point to 0 at the radius edge.
    /// Callers filter to the radius first, keeping the value in [0, 1].
    pub fn proximity(&self, distance_km: f64) -> f64 {
        1.0 - distance_km / self.max_distance_km
    }

    fn keyword_component(&self, weight_of: impl Fn(&str) -> f64) -> f64 {
        let phi_max = self.corpus.phi_max();
        if phi_max == 0.0 {
            return 0.0;
        }
        let sum: f64 = self.keywords.iter().map(|w| weight_of(w)).sum();
        sum / (phi_max * self.keywords.len() as f64)
    }

    /// Exact score of an object at a known distance. A single object has no
    /// category mix, so its diversity term is zero.
    pub fn score_object(&self, object: &SpatialObject, distance_km: f64) -> ScoreBreakdown {
        let geo = (1.0 - self.weights.theta) * self.proximity(distance_km);
        let keyword = self.keyword_component(|w| object.keyword_weight(w));
        let time = object.time_dist.score_at(self.interval);
        let social = self.social_component(object);
        ScoreBreakdown {
            geo,
            keyword,
            time,
            social,
            total: self.weights.combine(geo, keyword, social, time),
        }
    }

    /// Mean over neighbors of closeness scaled by how strongly the neighbor
    /// favors this object among the objects sharing its leaf page: the
    /// neighbor's check-in count at the object over their best count anywhere
    /// in that leaf.
    fn social_component(&self, object: &SpatialObject) -> f64 {
        if self.neighbors.is_empty() {
            return 0.0;
        }
        let leaf = self.tree.leaf_of(&object.id);
        let mut sum = 0.0;
        for n in &self.neighbors {
            let (Some(block), Some(counts)) = (n.block, n.object_counts) else {
                continue;
            };
            let count = counts.get(&object.id).copied().unwrap_or(0);
            if count == 0 {
                continue;
            }
            let peak = leaf.map(|l| block.value_at(l)).unwrap_or(0);
            if peak == 0 {
                continue;
            }
            sum += n.closeness * count as f64 / peak as f64;
        }
        sum / self.neighbors.len() as f64
    }

    /// Upper bound on the score of any object inside `node`, from the node's
    /// stored summaries and its minimum distance to the query point.
    pub fn bound_node(&self, node: &TreeNode, min_distance_km: f64) -> ScoreBreakdown {
        let geo = self.weights.theta * node.entropy_bound
            + (1.0 - self.weights.theta) * self.proximity(min_distance_km);
        let keyword = self.keyword_component(|w| node.keyword_summary_weight(w));
        let time = node.time_bound[self.interval];
        let social = self.social_bound(node);
        ScoreBreakdown {
            geo,
            keyword,
            time,
            social,
            total: self.weights.combine(geo, keyword, social, time),
        }
    }

    /// Per-object ratios never exceed 1, so a neighbor with any check-in
    /// under this node contributes at most their closeness; negative
    /// closeness floors at zero because the true contribution can vanish.
    fn social_bound(&self, node: &TreeNode) -> f64 {
        if self.neighbors.is_empty() {
            return 0.0;
        }
        let mut sum = 0.0;
        for n in &self.neighbors {
            let Some(block) = n.block else { continue };
            if block.value_at(node.id) > 0 {
                sum += n.closeness.max(0.0);
            }
        }
        sum / self.neighbors.len() as f64
    }
}
