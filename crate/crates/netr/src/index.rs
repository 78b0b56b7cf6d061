//! Index assembly: runs the full build pipeline and owns everything a query
//! needs — corpus, tree, embeddings, neighbor circles, and value blocks.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::engine::{self, Query, RankedResult};
use crate::error::{Error, Result};
use crate::model::{compute_tf_idf, CheckIn, Corpus, IntervalScheme, ObjectId, UserId};
use crate::scoring::{NeighborContribution, ScoringContext};
use crate::social::{
    build_feature_vectors, build_user_blocks, cosine, embed_line, select_neighbors,
    st_dbscan_clusters, user_object_counts, EmbeddingMatrix, EmbeddingParams, SocialGraph,
    StDbscanParams, UserValueBlock, DEFAULT_MIN_CHECKINS,
};
use crate::tree::{TrTree, DEFAULT_MAX_FANOUT};

pub const DEFAULT_INTERVAL_COUNT: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildParams {
    pub interval_count: usize,
    pub max_fanout: usize,
    /// Activity floor for entering another user's neighbor skyline.
    pub min_checkins: u32,
    pub dbscan: StDbscanParams,
    pub embedding: EmbeddingParams,
}

impl Default for BuildParams {
    fn default() -> Self {
        BuildParams {
            interval_count: DEFAULT_INTERVAL_COUNT,
            max_fanout: DEFAULT_MAX_FANOUT,
            min_checkins: DEFAULT_MIN_CHECKINS,
            dbscan: StDbscanParams::default(),
            embedding: EmbeddingParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexStats {
    pub objects: usize,
    pub users: usize,
    pub checkins: usize,
    pub friendships: usize,
    pub clusters: usize,
    pub tree_nodes: usize,
    pub tree_height: usize,
}

#[derive(Debug, Clone)]
pub struct NetrIndex {
    params: BuildParams,
    stats: IndexStats,
    corpus: Corpus,
    scheme: IntervalScheme,
    tree: TrTree,
    embeddings: EmbeddingMatrix,
    neighbors: BTreeMap<UserId, Vec<UserId>>,
    blocks: BTreeMap<UserId, UserValueBlock>,
    object_counts: BTreeMap<UserId, BTreeMap<ObjectId, u32>>,
}

/// Builds the whole index. The corpus must arrive with time distributions
/// attached (as [`crate::model::ingest`] leaves it); keyword weighting and
/// everything downstream happens here.
pub fn build_index(
    mut corpus: Corpus,
    checkins: &[CheckIn],
    friendships: &[(UserId, UserId)],
    params: BuildParams,
) -> Result<NetrIndex> {
    let scheme = IntervalScheme::new(params.interval_count)?;
    for o in corpus.objects() {
        if o.time_dist.probs().len() != params.interval_count {
            return Err(Error::InvalidParameter(format!(
                "object {} carries {} time intervals, build wants {}",
                o.id,
                o.time_dist.probs().len(),
                params.interval_count
            )));
        }
    }

    let stage = Instant::now();
    compute_tf_idf(&mut corpus);
    log::info!(
        "keyword weighting: {} objects in {:?}",
        corpus.len(),
        stage.elapsed()
    );

    let stage = Instant::now();
    let mut tree = TrTree::bulk_load(&corpus, params.max_fanout)?;
    tree.compute_summaries(&corpus, scheme)?;
    log::info!(
        "tree: {} nodes, height {} in {:?}",
        tree.len(),
        tree.height(),
        stage.elapsed()
    );

    let stage = Instant::now();
    let clusters = st_dbscan_clusters(checkins, &corpus, &params.dbscan)?;
    log::info!(
        "clustering: {} clusters over {} check-ins in {:?}",
        clusters.cluster_count,
        checkins.len(),
        stage.elapsed()
    );

    let mut users: Vec<UserId> = checkins.iter().map(|c| c.user.clone()).collect();
    users.extend(
        friendships
            .iter()
            .flat_map(|(a, b)| [a.clone(), b.clone()]),
    );
    let graph = SocialGraph::new(users, friendships)?;

    let stage = Instant::now();
    let features = build_feature_vectors(graph.users(), checkins, &corpus, &clusters, &scheme)?;
    let mut neighbors = BTreeMap::new();
    for user in graph.users() {
        neighbors.insert(
            user.clone(),
            select_neighbors(user, &features, &graph, params.min_checkins)?,
        );
    }
    log::info!(
        "neighbor selection: {} users in {:?}",
        graph.len(),
        stage.elapsed()
    );

    let stage = Instant::now();
    let embeddings = embed_line(&graph, &params.embedding)?;
    log::info!(
        "embedding: {} vertices, {} edges, dimension {} in {:?}",
        graph.len(),
        graph.edges().len(),
        params.embedding.dimension,
        stage.elapsed()
    );

    let stage = Instant::now();
    let object_counts = user_object_counts(checkins);
    let blocks = build_user_blocks(&object_counts, &tree)?;
    log::info!("value blocks: {} users in {:?}", blocks.len(), stage.elapsed());

    let stats = IndexStats {
        objects: corpus.len(),
        users: graph.len(),
        checkins: checkins.len(),
        friendships: graph.edges().len(),
        clusters: clusters.cluster_count,
        tree_nodes: tree.len(),
        tree_height: tree.height(),
    };
    NetrIndex::from_parts(
        params,
        stats,
        corpus,
        tree,
        embeddings,
        neighbors,
        blocks,
        object_counts,
    )
}

impl NetrIndex {
    /// Assembles an index from already-built pieces, enforcing the internal
    /// consistency the query path depends on. Everything loaded from disk
    /// funnels through here.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        params: BuildParams,
        stats: IndexStats,
        corpus: Corpus,
        tree: TrTree,
        embeddings: EmbeddingMatrix,
        neighbors: BTreeMap<UserId, Vec<UserId>>,
        blocks: BTreeMap<UserId, UserValueBlock>,
        object_counts: BTreeMap<UserId, BTreeMap<ObjectId, u32>>,
    ) -> Result<Self> {
        let scheme = IntervalScheme::new(params.interval_count)?;
        if tree.interval_count() != params.interval_count {
            return Err(Error::Invariant(format!(
                "tree built for {} intervals, parameters say {}",
                tree.interval_count(),
                params.interval_count
            )));
        }
        if embeddings.dimension() != params.embedding.dimension {
            return Err(Error::Invariant(format!(
                "embedding dimension {} does not match parameters ({})",
                embeddings.dimension(),
                params.embedding.dimension
            )));
        }
        if embeddings.len() != neighbors.len() {
            return Err(Error::Invariant(format!(
                "{} embedded users but {} neighbor lists",
                embeddings.len(),
                neighbors.len()
            )));
        }
        for (user, list) in &neighbors {
            if embeddings.get(user).is_none() {
                return Err(Error::Invariant(format!("user {user} has no embedding")));
            }
            for n in list {
                if !neighbors.contains_key(n) {
                    return Err(Error::Invariant(format!(
                        "neighbor {n} of user {user} is not a known user"
                    )));
                }
            }
        }
        for user in blocks.keys().chain(object_counts.keys()) {
            if !neighbors.contains_key(user) {
                return Err(Error::Invariant(format!(
                    "check-in data for unknown user {user}"
                )));
            }
        }
        Ok(NetrIndex {
            params,
            stats,
            corpus,
            scheme,
            tree,
            embeddings,
            neighbors,
            blocks,
            object_counts,
        })
    }

    pub fn params(&self) -> &BuildParams {
        &self.params
    }

    pub fn stats(&self) -> &IndexStats {
        &self.stats
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn tree(&self) -> &TrTree {
        &self.tree
    }

    pub fn scheme(&self) -> IntervalScheme {
        self.scheme
    }

    pub fn embeddings(&self) -> &EmbeddingMatrix {
        &self.embeddings
    }

    pub fn neighbors(&self) -> &BTreeMap<UserId, Vec<UserId>> {
        &self.neighbors
    }

    pub fn neighbors_of(&self, user: &UserId) -> Option<&[UserId]> {
        self.neighbors.get(user).map(|v| v.as_slice())
    }

    pub fn blocks(&self) -> &BTreeMap<UserId, UserValueBlock> {
        &self.blocks
    }

    pub fn object_counts(&self) -> &BTreeMap<UserId, BTreeMap<ObjectId, u32>> {
        &self.object_counts
    }

    pub fn contains_user(&self, user: &UserId) -> bool {
        self.neighbors.contains_key(user)
    }

    /// Resolves a query into a scoring context: looks up the user's neighbor
    /// circle and computes embedding closeness for each member.
    pub fn context_for(&self, query: &Query) -> Result<ScoringContext<'_>> {
        let circle = self
            .neighbors
            .get(&query.user)
            .ok_or_else(|| Error::UnknownUser {
                id: query.user.0.clone(),
            })?;
        let own = self
            .embeddings
            .get(&query.user)
            .expect("every known user is embedded");
        let mut contributions = Vec::with_capacity(circle.len());
        for member in circle {
            let theirs = self
                .embeddings
                .get(member)
                .expect("every neighbor is embedded");
            contributions.push(NeighborContribution {
                user: member.clone(),
                closeness: cosine(own, theirs)?,
                block: self.blocks.get(member),
                object_counts: self.object_counts.get(member),
            });
        }
        ScoringContext::new(
            &self.corpus,
            &self.tree,
            query.weights,
            query.location,
            query.keywords.clone(),
            self.scheme.interval_of(&query.time),
            query.max_distance_km,
            contributions,
        )
    }

    pub fn top_k(&self, query: &Query) -> Result<RankedResult> {
        engine::top_k(&self.context_for(query)?, query.k)
    }

    pub fn brute_force_top_k(&self, query: &Query) -> Result<RankedResult> {
        engine::brute_force_top_k(&self.context_for(query)?, query.k)
    }

    pub fn top_k_baseline_ir(&self, query: &Query) -> Result<RankedResult> {
        engine::top_k_baseline_ir(&self.context_for(query)?, query.k)
    }
}
