//! Social layer: friendship graph, behavioral feature vectors, skyline
//! neighbor selection, and per-user value blocks over the tree.

pub mod dbscan;
pub mod embedding;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CheckIn, Corpus, IntervalScheme, ObjectId, UserId};
use crate::tree::{NodeId, TrTree};

pub use dbscan::{
    st_dbscan_clusters, ClusterAssignment, StDbscanParams, DEFAULT_EPS_HOURS, DEFAULT_EPS_KM,
    DEFAULT_MIN_PTS,
};
pub use embedding::{
    embed_line, embed_line_with_loss, EmbeddingMatrix, EmbeddingParams, DEFAULT_DIMENSION,
};

pub const DEFAULT_MIN_CHECKINS: u32 = 5;

/// Undirected friendship graph over a fixed user roster. Vertices are dense
/// indices into the sorted roster, so the embedding trainer and the noise
/// table can use flat arrays.
#[derive(Debug, Clone)]
pub struct SocialGraph {
    users: Vec<UserId>,
    index: HashMap<UserId, usize>,
    adjacency: Vec<Vec<usize>>,
    edges: Vec<(usize, usize)>,
}

impl SocialGraph {
    pub fn new(users: Vec<UserId>, friendships: &[(UserId, UserId)]) -> Result<Self> {
        let mut users = users;
        users.sort();
        users.dedup();
        let index: HashMap<UserId, usize> = users
            .iter()
            .enumerate()
            .map(|(i, u)| (u.clone(), i))
            .collect();
        let mut edge_set: BTreeSet<(usize, usize)> = BTreeSet::new();
        for (a, b) in friendships {
            let ia = *index
                .get(a)
                .ok_or_else(|| Error::UnknownUser { id: a.0.clone() })?;
            let ib = *index
                .get(b)
                .ok_or_else(|| Error::UnknownUser { id: b.0.clone() })?;
            if ia == ib {
                return Err(Error::Invariant(format!("self friendship for user {a}")));
            }
            edge_set.insert((ia.min(ib), ia.max(ib)));
        }
        let edges: Vec<(usize, usize)> = edge_set.into_iter().collect();
        let mut adjacency = vec![Vec::new(); users.len()];
        for &(a, b) in &edges {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(SocialGraph {
            users,
            index,
            adjacency,
            edges,
        })
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn users(&self) -> &[UserId] {
        &self.users
    }

    pub fn index_of(&self, user: &UserId) -> Option<usize> {
        self.index.get(user).copied()
    }

    pub fn user_at(&self, idx: usize) -> &UserId {
        &self.users[idx]
    }

    pub fn neighbors_of(&self, idx: usize) -> &[usize] {
        &self.adjacency[idx]
    }

    pub fn degree(&self, idx: usize) -> usize {
        self.adjacency[idx].len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn friends(&self, user: &UserId) -> Vec<UserId> {
        match self.index_of(user) {
            Some(idx) => self.adjacency[idx]
                .iter()
                .map(|&j| self.users[j].clone())
                .collect(),
            None => Vec::new(),
        }
    }
}

/// Where, when, and what a user checks in to, as raw counts: one slot per
/// density cluster, per time interval, per category.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckinFeatureVectors {
    pub area: Vec<u32>,
    pub time: Vec<u32>,
    pub category: Vec<u32>,
    pub total_checkins: u32,
}

impl CheckinFeatureVectors {
    fn zeroed(areas: usize, intervals: usize, categories: usize) -> Self {
        CheckinFeatureVectors {
            area: vec![0; areas],
            time: vec![0; intervals],
            category: vec![0; categories],
            total_checkins: 0,
        }
    }

    /// Cosine of each facet against `other`, in (area, time, category) order.
    pub fn similarity(&self, other: &Self) -> Result<[f64; 3]> {
        Ok([
            cosine_counts(&self.area, &other.area)?,
            cosine_counts(&self.time, &other.time)?,
            cosine_counts(&self.category, &other.category)?,
        ])
    }
}

/// Counts per user for every roster member, including users who never check
/// in. Noise check-ins (no cluster) skip the area vector but still count
/// toward the time and category vectors and the total.
pub fn build_feature_vectors(
    users: &[UserId],
    checkins: &[CheckIn],
    corpus: &Corpus,
    clusters: &ClusterAssignment,
    scheme: &IntervalScheme,
) -> Result<BTreeMap<UserId, CheckinFeatureVectors>> {
    if clusters.labels.len() != checkins.len() {
        return Err(Error::Invariant(format!(
            "{} cluster labels for {} check-ins",
            clusters.labels.len(),
            checkins.len()
        )));
    }
    let categories = corpus.categories().len();
    let mut out: BTreeMap<UserId, CheckinFeatureVectors> = users
        .iter()
        .map(|u| {
            (
                u.clone(),
                CheckinFeatureVectors::zeroed(clusters.cluster_count, scheme.count(), categories),
            )
        })
        .collect();
    for (idx, c) in checkins.iter().enumerate() {
        let object = corpus.get(&c.object).ok_or_else(|| Error::UnknownObject {
            id: c.object.0.clone(),
        })?;
        let slot = out.get_mut(&c.user).ok_or_else(|| Error::UnknownUser {
            id: c.user.0.clone(),
        })?;
        if let Some(cluster) = clusters.labels[idx] {
            slot.area[cluster] += 1;
        }
        slot.time[scheme.interval_of(&c.time)] += 1;
        let cat = corpus
            .category_index(&object.category)
            .expect("object category is registered");
        slot.category[cat] += 1;
        slot.total_checkins += 1;
    }
    Ok(out)
}

/// Cosine similarity; zero when either vector is all zeros. Negative values
/// pass through untouched.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Invariant(format!(
            "cosine over mismatched dimensions {} and {}",
            a.len(),
            b.len()
        )));
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok(dot / (na.sqrt() * nb.sqrt()))
}

fn cosine_counts(a: &[u32], b: &[u32]) -> Result<f64> {
    let a: Vec<f64> = a.iter().map(|&x| x as f64).collect();
    let b: Vec<f64> = b.iter().map(|&x| x as f64).collect();
    cosine(&a, &b)
}

/// Keeps every candidate not dominated by another. `a` dominates `b` when
/// a >= b on all three axes and a > b on at least one; ties on all axes keep
/// both. Sort-filter-skyline: after sorting by coordinate sum, a point can
/// only be dominated by points already kept.
pub fn skyline(candidates: &[(UserId, [f64; 3])]) -> Vec<UserId> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&i, &j| {
        let si: f64 = candidates[i].1.iter().sum();
        let sj: f64 = candidates[j].1.iter().sum();
        sj.partial_cmp(&si)
            .expect("finite scores")
            .then_with(|| candidates[i].0.cmp(&candidates[j].0))
    });
    let mut kept: Vec<usize> = Vec::new();
    'outer: for &i in &order {
        for &k in &kept {
            if dominates(&candidates[k].1, &candidates[i].1) {
                continue 'outer;
            }
        }
        kept.push(i);
    }
    let mut users: Vec<UserId> = kept.into_iter().map(|i| candidates[i].0.clone()).collect();
    users.sort();
    users
}

fn dominates(a: &[f64; 3], b: &[f64; 3]) -> bool {
    a.iter().zip(b).all(|(x, y)| x >= y) && a.iter().zip(b).any(|(x, y)| x > y)
}

/// Related users for `target`: the skyline of active users by behavioral
/// similarity, plus all direct friends. Friends are included regardless of
/// activity or dominance.
pub fn select_neighbors(
    target: &UserId,
    features: &BTreeMap<UserId, CheckinFeatureVectors>,
    graph: &SocialGraph,
    min_checkins: u32,
) -> Result<Vec<UserId>> {
    let own = features.get(target).ok_or_else(|| Error::UnknownUser {
        id: target.0.clone(),
    })?;
    let mut candidates = Vec::new();
    for (user, vectors) in features {
        if user == target || vectors.total_checkins < min_checkins {
            continue;
        }
        candidates.push((user.clone(), vectors.similarity(own)?));
    }
    let mut selected: BTreeSet<UserId> = skyline(&candidates).into_iter().collect();
    for friend in graph.friends(target) {
        selected.insert(friend);
    }
    selected.remove(target);
    Ok(selected.into_iter().collect())
}

/// One user's check-in intensity projected onto the tree: for each node, the
/// highest per-object check-in count among the user's visited objects in that
/// subtree. Nodes the user never reaches are absent and read as zero.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserValueBlock {
    pub entries: BTreeMap<NodeId, u32>,
}

impl UserValueBlock {
    pub fn value_at(&self, node: NodeId) -> u32 {
        self.entries.get(&node).copied().unwrap_or(0)
    }
}

/// Per-user check-in counts per object; users absent from `checkins` do not
/// appear.
pub fn user_object_counts(checkins: &[CheckIn]) -> BTreeMap<UserId, BTreeMap<ObjectId, u32>> {
    let mut out: BTreeMap<UserId, BTreeMap<ObjectId, u32>> = BTreeMap::new();
    for c in checkins {
        *out.entry(c.user.clone())
            .or_default()
            .entry(c.object.clone())
            .or_default() += 1;
    }
    out
}

pub fn build_user_blocks(
    object_counts: &BTreeMap<UserId, BTreeMap<ObjectId, u32>>,
    tree: &TrTree,
) -> Result<BTreeMap<UserId, UserValueBlock>> {
    let mut out = BTreeMap::new();
    for (user, counts) in object_counts {
        let mut entries: BTreeMap<NodeId, u32> = BTreeMap::new();
        for (object, &count) in counts {
            let leaf = tree.leaf_of(object).ok_or_else(|| Error::UnknownObject {
                id: object.0.clone(),
            })?;
            for node in tree.ancestors(leaf) {
                let slot = entries.entry(node).or_default();
                *slot = (*slot).max(count);
            }
        }
        out.insert(user.clone(), UserValueBlock { entries });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoPoint;
    use crate::model::{SpatialObject, TimeDistribution};
    use chrono::NaiveDateTime;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uid(s: &str) -> UserId {
        UserId(s.to_string())
    }

    fn oid(s: &str) -> ObjectId {
        ObjectId(s.to_string())
    }

    fn object(id: &str, lat: f64, lon: f64, category: &str) -> SpatialObject {
        SpatialObject {
            id: oid(id),
            location: GeoPoint { lat, lon },
            category: category.to_string(),
            keyword_counts: BTreeMap::new(),
            keywords: BTreeMap::new(),
            time_dist: TimeDistribution::from_probs(vec![0.0; 24]).unwrap(),
            total_checkins: 0,
        }
    }

    fn checkin(user: &str, object: &str, time: &str) -> CheckIn {
        CheckIn {
            user: uid(user),
            object: oid(object),
            time: NaiveDateTime::parse_from_str(time, crate::model::TIMESTAMP_FORMAT).unwrap(),
        }
    }

    #[test]
    fn graph_dedups_and_sorts() {
        let users = vec![uid("c"), uid("a"), uid("b"), uid("a")];
        let graph = SocialGraph::new(
            users,
            &[
                (uid("a"), uid("b")),
                (uid("b"), uid("a")),
                (uid("b"), uid("c")),
            ],
        )
        .unwrap();
        assert_eq!(graph.users(), &[uid("a"), uid("b"), uid("c")]);
        assert_eq!(graph.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(graph.degree(1), 2);
        assert_eq!(graph.friends(&uid("b")), vec![uid("a"), uid("c")]);
        assert_eq!(graph.friends(&uid("z")), Vec::<UserId>::new());
    }

    #[test]
    fn graph_rejects_unknown_and_self_edges() {
        let users = vec![uid("a"), uid("b")];
        assert!(SocialGraph::new(users.clone(), &[(uid("a"), uid("z"))]).is_err());
        assert!(SocialGraph::new(users, &[(uid("a"), uid("a"))]).is_err());
    }

    #[test]
    fn cosine_basics() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0, 2.0], &[2.0, 4.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((cosine(&[1.0, 0.0], &[-1.0, 0.0]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert!(cosine(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn feature_vectors_count_all_facets() {
        let corpus = Corpus::from_objects(vec![
            object("o1", 40.0, 116.0, "bar"),
            object("o2", 40.1, 116.1, "cafe"),
        ])
        .unwrap();
        let checkins = vec![
            checkin("u1", "o1", "2010-06-01T20:00:00"),
            checkin("u1", "o1", "2010-06-02T21:00:00"),
            checkin("u1", "o2", "2010-06-03T09:00:00"),
            checkin("u2", "o2", "2010-06-03T10:00:00"),
        ];
        let clusters = ClusterAssignment {
            labels: vec![Some(0), Some(0), Some(1), None],
            cluster_count: 2,
        };
        let scheme = IntervalScheme::new(24).unwrap();
        let users = vec![uid("u1"), uid("u2"), uid("u3")];
        let got = build_feature_vectors(&users, &checkins, &corpus, &clusters, &scheme).unwrap();

        let u1 = &got[&uid("u1")];
        assert_eq!(u1.area, vec![2, 1]);
        assert_eq!(u1.time[20], 1);
        assert_eq!(u1.time[21], 1);
        assert_eq!(u1.time[9], 1);
        // categories() is sorted, so bar precedes cafe
        assert_eq!(u1.category, vec![2, 1]);
        assert_eq!(u1.total_checkins, 3);

        // u2's single check-in is noise: absent from area, present elsewhere
        let u2 = &got[&uid("u2")];
        assert_eq!(u2.area, vec![0, 0]);
        assert_eq!(u2.category, vec![0, 1]);
        assert_eq!(u2.total_checkins, 1);

        let u3 = &got[&uid("u3")];
        assert_eq!(u3.total_checkins, 0);
        assert_eq!(u3.similarity(u1).unwrap(), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn feature_vectors_reject_unknown_user() {
        let corpus = Corpus::from_objects(vec![object("o1", 40.0, 116.0, "bar")]).unwrap();
        let checkins = vec![checkin("ghost", "o1", "2010-06-01T20:00:00")];
        let clusters = ClusterAssignment {
            labels: vec![None],
            cluster_count: 0,
        };
        let scheme = IntervalScheme::new(24).unwrap();
        let got = build_feature_vectors(&[uid("u1")], &checkins, &corpus, &clusters, &scheme);
        assert!(matches!(got, Err(Error::UnknownUser { .. })));
    }

    #[test]
    fn skyline_keeps_exactly_the_undominated() {
        let candidates = vec![
            (uid("a"), [1.0, 0.0, 0.0]),
            (uid("b"), [0.0, 1.0, 0.0]),
            (uid("c"), [0.0, 0.0, 1.0]),
            (uid("d"), [0.5, 0.5, 0.5]),
            (uid("e"), [1.0, 1.0, 0.0]),
        ];
        // e dominates a and b; c and d trade off against everything kept
        assert_eq!(skyline(&candidates), vec![uid("c"), uid("d"), uid("e")]);
    }

    #[test]
    fn skyline_keeps_exact_ties() {
        let candidates = vec![
            (uid("a"), [0.5, 0.5, 0.5]),
            (uid("b"), [0.5, 0.5, 0.5]),
            (uid("c"), [0.1, 0.1, 0.1]),
        ];
        assert_eq!(skyline(&candidates), vec![uid("a"), uid("b")]);
    }

    #[test]
    fn skyline_matches_quadratic_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let candidates: Vec<(UserId, [f64; 3])> = (0..60)
                .map(|i| {
                    // coarse grid makes ties and dominance chains common
                    let v = [
                        (rng.gen_range(0..5) as f64) / 4.0,
                        (rng.gen_range(0..5) as f64) / 4.0,
                        (rng.gen_range(0..5) as f64) / 4.0,
                    ];
                    (uid(&format!("u{i:02}")), v)
                })
                .collect();
            let mut expected: Vec<UserId> = candidates
                .iter()
                .filter(|(_, v)| !candidates.iter().any(|(_, w)| dominates(w, v)))
                .map(|(u, _)| u.clone())
                .collect();
            expected.sort();
            assert_eq!(skyline(&candidates), expected);
        }
    }

    #[test]
    fn neighbor_selection_unions_friends_past_every_filter() {
        let corpus = Corpus::from_objects(vec![
            object("o1", 40.0, 116.0, "bar"),
            object("o2", 40.1, 116.1, "cafe"),
        ])
        .unwrap();
        // active: matches the target's behavior exactly
        // dominated: similar but strictly worse on every facet is impossible
        //   with cosines of identical vectors, so give it orthogonal behavior
        // lazy_friend: one check-in, below the activity floor
        let mut checkins = Vec::new();
        for d in 0..6 {
            checkins.push(checkin("target", "o1", &format!("2010-06-{:02}T20:00:00", d + 1)));
            checkins.push(checkin("active", "o1", &format!("2010-06-{:02}T20:00:00", d + 1)));
            checkins.push(checkin("loner", "o2", &format!("2010-06-{:02}T09:00:00", d + 1)));
        }
        checkins.push(checkin("lazy_friend", "o2", "2010-06-01T09:00:00"));
        let clusters = ClusterAssignment {
            labels: vec![None; checkins.len()],
            cluster_count: 0,
        };
        let scheme = IntervalScheme::new(24).unwrap();
        let users = vec![uid("target"), uid("active"), uid("loner"), uid("lazy_friend")];
        let features =
            build_feature_vectors(&users, &checkins, &corpus, &clusters, &scheme).unwrap();
        let graph = SocialGraph::new(users, &[(uid("target"), uid("lazy_friend"))]).unwrap();

        let got = select_neighbors(&uid("target"), &features, &graph, 5).unwrap();
        // active: kept by the skyline; lazy_friend: below min_checkins but a
        // friend; loner: orthogonal on time and category, kept (undominated on
        // the facets where both are zero is still a tie, and active does not
        // dominate it on the time facet)
        assert!(got.contains(&uid("active")));
        assert!(got.contains(&uid("lazy_friend")));
        assert!(!got.contains(&uid("target")));
    }

    #[test]
    fn zero_checkin_target_keeps_all_active_candidates() {
        let corpus = Corpus::from_objects(vec![object("o1", 40.0, 116.0, "bar")]).unwrap();
        let mut checkins = Vec::new();
        for user in ["a", "b", "c"] {
            for d in 0..5 {
                checkins.push(checkin(user, "o1", &format!("2010-06-{:02}T20:00:00", d + 1)));
            }
        }
        let clusters = ClusterAssignment {
            labels: vec![None; checkins.len()],
            cluster_count: 0,
        };
        let scheme = IntervalScheme::new(24).unwrap();
        let users = vec![uid("idle"), uid("a"), uid("b"), uid("c")];
        let features =
            build_feature_vectors(&users, &checkins, &corpus, &clusters, &scheme).unwrap();
        let graph = SocialGraph::new(users, &[]).unwrap();
        // every candidate scores (0, 0, 0) against an empty history: no one
        // dominates anyone, all stay
        let got = select_neighbors(&uid("idle"), &features, &graph, 5).unwrap();
        assert_eq!(got, vec![uid("a"), uid("b"), uid("c")]);
    }

    #[test]
    fn value_blocks_propagate_maxima_to_the_root() {
        let objects: Vec<SpatialObject> = (0..40)
            .map(|i| {
                object(
                    &format!("o{i:02}"),
                    39.5 + (i as f64) * 0.01,
                    116.0 + ((i * 7) % 40) as f64 * 0.01,
                    "bar",
                )
            })
            .collect();
        let corpus = Corpus::from_objects(objects).unwrap();
        let tree = TrTree::bulk_load(&corpus, 4).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checkins = Vec::new();
        for _ in 0..300 {
            let u = rng.gen_range(0..6);
            let o = rng.gen_range(0..40);
            checkins.push(checkin(
                &format!("u{u}"),
                &format!("o{o:02}"),
                "2010-06-01T12:00:00",
            ));
        }
        let counts = user_object_counts(&checkins);
        let blocks = build_user_blocks(&counts, &tree).unwrap();

        for (user, per_object) in &counts {
            let block = &blocks[user];
            for node in tree.nodes() {
                let expected = tree
                    .subtree_objects(node.id)
                    .into_iter()
                    .filter_map(|o| per_object.get(o).copied())
                    .max()
                    .unwrap_or(0);
                assert_eq!(block.value_at(node.id), expected, "user {user} node {}", node.id);
            }
            // absent node ids read as zero instead of panicking
            assert_eq!(block.value_at(NodeId(usize::MAX)), 0);
        }
    }

    #[test]
    fn value_blocks_reject_objects_outside_the_tree() {
        let corpus = Corpus::from_objects(vec![object("o1", 40.0, 116.0, "bar")]).unwrap();
        let tree = TrTree::bulk_load(&corpus, 4).unwrap();
        let mut counts = BTreeMap::new();
        counts.insert(uid("u1"), BTreeMap::from([(oid("ghost"), 3)]));
        assert!(matches!(
            build_user_blocks(&counts, &tree),
            Err(Error::UnknownObject { .. })
        ));
    }
}
