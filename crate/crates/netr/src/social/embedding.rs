//! First-order vertex embeddings of the friendship graph.
//!
//! Trains by edge sampling with negative sampling: each step draws an edge,
//! pulls its endpoints together, and pushes the source away from a handful of
//! vertices drawn from the degree^0.75 noise distribution. Cosine between two
//! trained vectors serves as the social closeness used by the ranking score.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::UserId;
use crate::social::SocialGraph;

pub const DEFAULT_DIMENSION: usize = 32;
pub const DEFAULT_EPOCHS: usize = 100;
pub const DEFAULT_NEGATIVE_SAMPLES: usize = 5;
pub const DEFAULT_INITIAL_LEARNING_RATE: f64 = 0.025;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EmbeddingParams {
    pub dimension: usize,
    /// Total sample count is `epochs * edge_count`.
    pub epochs: usize,
    pub negative_samples: usize,
    pub initial_learning_rate: f64,
    pub seed: u64,
}

impl Default for EmbeddingParams {
    fn default() -> Self {
        EmbeddingParams {
            dimension: DEFAULT_DIMENSION,
            epochs: DEFAULT_EPOCHS,
            negative_samples: DEFAULT_NEGATIVE_SAMPLES,
            initial_learning_rate: DEFAULT_INITIAL_LEARNING_RATE,
            seed: 0,
        }
    }
}

impl EmbeddingParams {
    fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::InvalidParameter(
                "embedding dimension must be at least 1".into(),
            ));
        }
        if !(self.initial_learning_rate > 0.0) || !self.initial_learning_rate.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "learning rate {} must be positive",
                self.initial_learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dimension: usize,
    vectors: BTreeMap<UserId, Vec<f64>>,
}

impl EmbeddingMatrix {
    pub fn new(dimension: usize, vectors: BTreeMap<UserId, Vec<f64>>) -> Result<Self> {
        for (user, v) in &vectors {
            if v.len() != dimension {
                return Err(Error::Invariant(format!(
                    "vector for user {user} has {} of {dimension} components",
                    v.len()
                )));
            }
        }
        Ok(EmbeddingMatrix { dimension, vectors })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, user: &UserId) -> Option<&[f64]> {
        self.vectors.get(user).map(|v| v.as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&UserId, &[f64])> {
        self.vectors.iter().map(|(u, v)| (u, v.as_slice()))
    }
}

pub fn embed_line(graph: &SocialGraph, params: &EmbeddingParams) -> Result<EmbeddingMatrix> {
    embed_line_with_loss(graph, params).map(|(matrix, _)| matrix)
}

/// Also returns the mean per-sample loss at ten evenly spaced checkpoints;
/// empty when the graph has no edges to train on.
pub fn embed_line_with_loss(
    graph: &SocialGraph,
    params: &EmbeddingParams,
) -> Result<(EmbeddingMatrix, Vec<f64>)> {
    params.validate()?;
    let n = graph.len();
    let d = params.dimension;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut vectors: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| (rng.gen::<f64>() - 0.5) / d as f64).collect())
        .collect();

    let edges = graph.edges();
    let total = params.epochs.saturating_mul(edges.len());
    let mut losses = Vec::new();
    if total > 0 {
        // cumulative degree^0.75 table for negative draws
        let noise: Vec<f64> = {
            let mut acc = 0.0;
            (0..n)
                .map(|i| {
                    acc += (graph.degree(i) as f64).powf(0.75);
                    acc
                })
                .collect()
        };
        let noise_total = *noise.last().expect("graph with edges has vertices");

        let checkpoint = (total / 10).max(1);
        let mut chunk_loss = 0.0;
        let mut chunk_len = 0usize;
        let mut source_delta = vec![0.0_f64; d];
        for step in 0..total {
            let lr = params.initial_learning_rate * (1.0 - 0.99 * step as f64 / total as f64);
            let (a, b) = edges[rng.gen_range(0..edges.len())];
            let (src, dst) = if rng.gen::<bool>() { (a, b) } else { (b, a) };

            source_delta.iter_mut().for_each(|x| *x = 0.0);
            let mut sample_loss = 0.0;
            for round in 0..=params.negative_samples {
                let (target, label) = if round == 0 {
                    (dst, 1.0)
                } else {
                    let pick = rng.gen::<f64>() * noise_total;
                    let t = noise.partition_point(|&c| c < pick).min(n - 1);
                    if t == src || t == dst {
                        continue;
                    }
                    (t, 0.0)
                };
                let dot: f64 = vectors[src]
                    .iter()
                    .zip(&vectors[target])
                    .map(|(x, y)| x * y)
                    .sum();
                let p = sigmoid(dot);
                sample_loss -= if label > 0.5 {
                    p.max(f64::MIN_POSITIVE).ln()
                } else {
                    (1.0 - p).max(f64::MIN_POSITIVE).ln()
                };
                let g = (label - p) * lr;
                for k in 0..d {
                    source_delta[k] += g * vectors[target][k];
                    vectors[target][k] += g * vectors[src][k];
                }
            }
            for k in 0..d {
                vectors[src][k] += source_delta[k];
            }
            chunk_loss += sample_loss;
            chunk_len += 1;
            if (step + 1) % checkpoint == 0 {
                losses.push(chunk_loss / chunk_len as f64);
                chunk_loss = 0.0;
                chunk_len = 0;
            }
        }
    }

    if vectors.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Invariant(
            "embedding training diverged to non-finite values".into(),
        ));
    }
    let map: BTreeMap<UserId, Vec<f64>> = vectors
        .into_iter()
        .enumerate()
        .map(|(i, v)| (graph.user_at(i).clone(), v))
        .collect();
    Ok((EmbeddingMatrix::new(d, map)?, losses))
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::social::cosine;

    fn uid(s: &str) -> UserId {
        UserId(s.to_string())
    }

    fn clique_pair_graph() -> SocialGraph {
        // two 5-cliques, one bridge edge
        let users: Vec<UserId> = (0..10).map(|i| uid(&format!("u{i}"))).collect();
        let mut edges = Vec::new();
        for base in [0, 5] {
            for i in 0..5 {
                for j in (i + 1)..5 {
                    edges.push((uid(&format!("u{}", base + i)), uid(&format!("u{}", base + j))));
                }
            }
        }
        edges.push((uid("u0"), uid("u5")));
        SocialGraph::new(users, &edges).unwrap()
    }

    fn params(dimension: usize, epochs: usize, seed: u64) -> EmbeddingParams {
        EmbeddingParams {
            dimension,
            epochs,
            seed,
            ..EmbeddingParams::default()
        }
    }

    #[test]
    fn every_user_gets_a_finite_vector() {
        let graph = clique_pair_graph();
        let matrix = embed_line(&graph, &params(8, 50, 3)).unwrap();
        assert_eq!(matrix.len(), 10);
        assert_eq!(matrix.dimension(), 8);
        for (_, v) in matrix.iter() {
            assert_eq!(v.len(), 8);
            assert!(v.iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn same_seed_reproduces_different_seed_diverges() {
        let graph = clique_pair_graph();
        let a = embed_line(&graph, &params(8, 20, 42)).unwrap();
        let b = embed_line(&graph, &params(8, 20, 42)).unwrap();
        assert_eq!(a, b);
        let c = embed_line(&graph, &params(8, 20, 43)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn cliques_end_up_closer_than_strangers() {
        let graph = clique_pair_graph();
        let matrix = embed_line(&graph, &params(8, 400, 1)).unwrap();
        let vec_of = |i: usize| matrix.get(&uid(&format!("u{i}"))).unwrap();
        let mut within = Vec::new();
        let mut across = Vec::new();
        for i in 0..10 {
            for j in (i + 1)..10 {
                let c = cosine(vec_of(i), vec_of(j)).unwrap();
                if (i < 5) == (j < 5) {
                    within.push(c);
                } else {
                    across.push(c);
                }
            }
        }
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        assert!(
            mean(&within) > mean(&across) + 0.2,
            "within {} across {}",
            mean(&within),
            mean(&across)
        );
    }

    #[test]
    fn loss_drops_over_training() {
        let graph = clique_pair_graph();
        let (_, losses) = embed_line_with_loss(&graph, &params(8, 400, 5)).unwrap();
        assert_eq!(losses.len(), 10);
        assert!(
            losses[9] < losses[0],
            "loss went {} -> {}",
            losses[0],
            losses[9]
        );
    }

    #[test]
    fn edgeless_graph_keeps_its_random_start() {
        let users: Vec<UserId> = (0..4).map(|i| uid(&format!("u{i}"))).collect();
        let graph = SocialGraph::new(users, &[]).unwrap();
        let (matrix, losses) = embed_line_with_loss(&graph, &params(6, 100, 9)).unwrap();
        assert!(losses.is_empty());
        assert_eq!(matrix.len(), 4);
        for (_, v) in matrix.iter() {
            // untouched initialization stays within the init range
            assert!(v.iter().all(|x| x.abs() <= 0.5 / 6.0));
        }
    }

    #[test]
    fn isolated_vertices_train_alongside_the_giant_component() {
        let mut users: Vec<UserId> = (0..6).map(|i| uid(&format!("u{i}"))).collect();
        users.push(uid("hermit"));
        let edges: Vec<(UserId, UserId)> = (0..5)
            .map(|i| (uid(&format!("u{i}")), uid(&format!("u{}", i + 1))))
            .collect();
        let graph = SocialGraph::new(users, &edges).unwrap();
        let matrix = embed_line(&graph, &params(4, 50, 2)).unwrap();
        assert!(matrix.get(&uid("hermit")).is_some());
    }

    #[test]
    fn rejects_bad_parameters() {
        let graph = clique_pair_graph();
        assert!(embed_line(&graph, &params(0, 10, 1)).is_err());
        let mut p = params(4, 10, 1);
        p.initial_learning_rate = 0.0;
        assert!(embed_line(&graph, &p).is_err());
    }

    #[test]
    fn matrix_rejects_ragged_vectors() {
        let mut vectors = BTreeMap::new();
        vectors.insert(uid("a"), vec![0.0; 3]);
        vectors.insert(uid("b"), vec![0.0; 2]);
        assert!(EmbeddingMatrix::new(3, vectors).is_err());
    }
}
