//! Index persistence: one directory per index, holding independently
//! inspectable artifacts plus a manifest of parameters and SHA-256 digests.
//!
//! The manifest is written last and records a digest for every artifact;
//! loading re-hashes each file and refuses silently altered bytes. Loading
//! also rebuilds the user value blocks from the persisted per-object check-in
//! counts and compares, so the two artifacts cannot drift apart undetected.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geo::GeoPoint;
use crate::index::{BuildParams, IndexStats, NetrIndex};
use crate::model::{Corpus, ObjectId, SpatialObject, TimeDistribution, UserId};
use crate::social::{build_user_blocks, EmbeddingMatrix, UserValueBlock};
use crate::tree::{NodeId, TreeNode, TrTree};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const OBJECTS_FILE: &str = "objects.json";
pub const TREE_FILE: &str = "tree.json";
pub const EMBEDDINGS_FILE: &str = "embeddings.bin";
pub const NEIGHBORS_FILE: &str = "neighbors.json";
pub const BLOCKS_FILE: &str = "blocks.json";

const EMBEDDING_MAGIC: [u8; 4] = *b"NEMB";
const EMBEDDING_VERSION: u32 = 1;

/// Digests of the three source files the index was built from, recorded so a
/// build can be traced back to its inputs; loading does not require the
/// sources to still exist.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigests {
    pub objects_csv: String,
    pub checkins_csv: String,
    pub friends_csv: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub params: BuildParams,
    pub stats: IndexStats,
    pub inputs: InputDigests,
    /// Artifact file name to SHA-256 hex digest.
    pub artifacts: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&read_bytes(path)?))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::corrupt(path.display().to_string(), e.to_string()))
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path, bytes: &[u8]) -> Result<T> {
    serde_json::from_slice(bytes)
        .map_err(|e| Error::corrupt(path.display().to_string(), e.to_string()))
}

#[derive(Serialize, Deserialize)]
struct StoredObject {
    id: ObjectId,
    location: GeoPoint,
    category: String,
    keyword_counts: BTreeMap<String, u32>,
    keyword_weights: BTreeMap<String, f64>,
    time_distribution: Vec<f64>,
    total_checkins: u32,
    /// Check-in count per user at this object; the exact counts behind both
    /// the social score numerators and the value blocks.
    user_checkins: BTreeMap<UserId, u32>,
}

#[derive(Serialize, Deserialize)]
struct StoredObjects {
    objects: Vec<StoredObject>,
}

#[derive(Serialize, Deserialize)]
struct StoredTree {
    max_fanout: usize,
    interval_count: usize,
    root: NodeId,
    nodes: Vec<TreeNode>,
}

type StoredBlocks = BTreeMap<UserId, Vec<(NodeId, u32)>>;

/// Writes every artifact into `dir` (created if needed) and the manifest
/// last. Existing files are overwritten; no timestamps or other
/// non-reproducible bytes are written anywhere.
pub fn save_index(index: &NetrIndex, dir: &Path, inputs: InputDigests) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut artifacts = BTreeMap::new();
    let mut emit = |name: &str, bytes: Vec<u8>| -> Result<()> {
        std::fs::write(dir.join(name), &bytes)?;
        artifacts.insert(name.to_string(), sha256_hex(&bytes));
        Ok(())
    };

    let mut per_object: BTreeMap<&ObjectId, BTreeMap<UserId, u32>> = BTreeMap::new();
    for (user, counts) in index.object_counts() {
        for (object, &count) in counts {
            per_object
                .entry(object)
                .or_default()
                .insert(user.clone(), count);
        }
    }
    let objects = StoredObjects {
        objects: index
            .corpus()
            .objects()
            .iter()
            .map(|o| StoredObject {
                id: o.id.clone(),
                location: o.location,
                category: o.category.clone(),
                keyword_counts: o.keyword_counts.clone(),
                keyword_weights: o.keywords.clone(),
                time_distribution: o.time_dist.probs().to_vec(),
                total_checkins: o.total_checkins,
                user_checkins: per_object.remove(&o.id).unwrap_or_default(),
            })
            .collect(),
    };
    emit(OBJECTS_FILE, to_pretty_json(&objects)?)?;

    let tree = StoredTree {
        max_fanout: index.tree().max_fanout(),
        interval_count: index.tree().interval_count(),
        root: index.tree().root(),
        nodes: index.tree().nodes().to_vec(),
    };
    emit(TREE_FILE, to_pretty_json(&tree)?)?;

    emit(EMBEDDINGS_FILE, encode_embeddings(index.embeddings()))?;
    emit(NEIGHBORS_FILE, to_pretty_json(index.neighbors())?)?;

    let blocks: StoredBlocks = index
        .blocks()
        .iter()
        .map(|(user, block)| {
            (
                user.clone(),
                block.entries.iter().map(|(&n, &c)| (n, c)).collect(),
            )
        })
        .collect();
    emit(BLOCKS_FILE, to_pretty_json(&blocks)?)?;

    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        params: *index.params(),
        stats: *index.stats(),
        inputs,
        artifacts,
    };
    std::fs::write(dir.join(MANIFEST_FILE), to_pretty_json(&manifest)?)?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let manifest: Manifest = parse_json(&path, &read_bytes(&path)?)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::corrupt(
            path.display().to_string(),
            format!(
                "format version {} is not the supported {FORMAT_VERSION}",
                manifest.format_version
            ),
        ));
    }
    Ok(manifest)
}

pub fn load_index(dir: &Path) -> Result<NetrIndex> {
    let manifest = read_manifest(dir)?;
    for name in [
        OBJECTS_FILE,
        TREE_FILE,
        EMBEDDINGS_FILE,
        NEIGHBORS_FILE,
        BLOCKS_FILE,
    ] {
        let Some(expected) = manifest.artifacts.get(name) else {
            return Err(Error::corrupt(
                dir.join(MANIFEST_FILE).display().to_string(),
                format!("manifest lists no digest for {name}"),
            ));
        };
        let actual = sha256_file(&dir.join(name))?;
        if &actual != expected {
            return Err(Error::corrupt(
                dir.join(name).display().to_string(),
                "content does not match its manifest digest".to_string(),
            ));
        }
    }

    let objects_path = dir.join(OBJECTS_FILE);
    let stored: StoredObjects = parse_json(&objects_path, &read_bytes(&objects_path)?)?;
    let mut object_counts: BTreeMap<UserId, BTreeMap<ObjectId, u32>> = BTreeMap::new();
    let mut objects = Vec::with_capacity(stored.objects.len());
    for s in stored.objects {
        for (user, count) in &s.user_checkins {
            object_counts
                .entry(user.clone())
                .or_default()
                .insert(s.id.clone(), *count);
        }
        objects.push(SpatialObject {
            time_dist: TimeDistribution::from_probs(s.time_distribution)
                .map_err(|e| Error::corrupt(objects_path.display().to_string(), e.to_string()))?,
            id: s.id,
            location: s.location,
            category: s.category,
            keyword_counts: s.keyword_counts,
            keywords: s.keyword_weights,
            total_checkins: s.total_checkins,
        });
    }
    let mut corpus = Corpus::from_objects(objects)?;
    corpus.restore_phi_max();

    let tree_path = dir.join(TREE_FILE);
    let stored: StoredTree = parse_json(&tree_path, &read_bytes(&tree_path)?)?;
    let tree = TrTree::from_parts(
        stored.nodes,
        stored.root,
        stored.max_fanout,
        stored.interval_count,
    )?;

    let neighbors_path = dir.join(NEIGHBORS_FILE);
    let neighbors: BTreeMap<UserId, Vec<UserId>> =
        parse_json(&neighbors_path, &read_bytes(&neighbors_path)?)?;

    let embeddings = decode_embeddings(
        &dir.join(EMBEDDINGS_FILE),
        manifest.params.embedding.dimension,
        &neighbors,
    )?;

    let blocks_path = dir.join(BLOCKS_FILE);
    let stored: StoredBlocks = parse_json(&blocks_path, &read_bytes(&blocks_path)?)?;
    let blocks: BTreeMap<UserId, UserValueBlock> = stored
        .into_iter()
        .map(|(user, entries)| {
            (
                user,
                UserValueBlock {
                    entries: entries.into_iter().collect(),
                },
            )
        })
        .collect();
    if build_user_blocks(&object_counts, &tree)? != blocks {
        return Err(Error::corrupt(
            blocks_path.display().to_string(),
            "value blocks disagree with the per-object check-in counts".to_string(),
        ));
    }

    NetrIndex::from_parts(
        manifest.params,
        manifest.stats,
        corpus,
        tree,
        embeddings,
        neighbors,
        blocks,
        object_counts,
    )
}

fn to_pretty_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| Error::Invariant(format!("serialization failed: {e}")))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Layout: magic, format version, row count, dimension (all little-endian
/// u32), then rows of little-endian f64 ordered by user id; the id list
/// itself lives in the neighbors artifact, which covers every user.
fn encode_embeddings(matrix: &EmbeddingMatrix) -> Vec<u8> {
    let n = matrix.len() as u32;
    let d = matrix.dimension() as u32;
    let mut out = Vec::with_capacity(16 + (n as usize) * (d as usize) * 8);
    out.extend_from_slice(&EMBEDDING_MAGIC);
    out.extend_from_slice(&EMBEDDING_VERSION.to_le_bytes());
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&d.to_le_bytes());
    for (_, row) in matrix.iter() {
        for value in row {
            out.extend_from_slice(&value.to_le_bytes());
        }
    }
    out
}

fn decode_embeddings(
    path: &Path,
    expected_dimension: usize,
    neighbors: &BTreeMap<UserId, Vec<UserId>>,
) -> Result<EmbeddingMatrix> {
    let corrupt = |message: String| Error::corrupt(path.display().to_string(), message);
    let bytes = read_bytes(path)?;
    if bytes.len() < 16 {
        return Err(corrupt(format!("{} bytes is too short for a header", bytes.len())));
    }
    if bytes[0..4] != EMBEDDING_MAGIC {
        return Err(corrupt("bad magic".to_string()));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    if word(4) != EMBEDDING_VERSION {
        return Err(corrupt(format!(
            "embedding format version {} is not the supported {EMBEDDING_VERSION}",
            word(4)
        )));
    }
    let n = word(8) as usize;
    let d = word(12) as usize;
    if d != expected_dimension {
        return Err(corrupt(format!(
            "dimension {d} does not match the manifest's {expected_dimension}"
        )));
    }
    if n != neighbors.len() {
        return Err(corrupt(format!(
            "{n} rows for {} known users",
            neighbors.len()
        )));
    }
    let expected_len = 16 + n * d * 8;
    if bytes.len() != expected_len {
        return Err(corrupt(format!(
            "{} bytes where {expected_len} were expected",
            bytes.len()
        )));
    }
    let mut vectors = BTreeMap::new();
    for (row, user) in neighbors.keys().enumerate() {
        let base = 16 + row * d * 8;
        let values = (0..d)
            .map(|i| {
                let at = base + i * 8;
                f64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"))
            })
            .collect();
        vectors.insert(user.clone(), values);
    }
    EmbeddingMatrix::new(expected_dimension, vectors)
}
