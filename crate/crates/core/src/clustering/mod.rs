//! Query-time clustering of retrieved chunks: UMAP reduction, diagonal GMM
//! with BIC model selection and soft assignment. Also the contiguous-grouping
//! ablation, which replaces clustering with a seeded shuffle and split.

pub mod gmm;
pub mod umap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use gmm::{fit_gmm, select_components_bic, GmmModel};
pub use umap::{reduce_umap, ReducerParams};

use crate::exec::Execution;
use crate::retrieval::ScoredChunk;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ClusterError {
    #[error("nothing to cluster")]
    Empty,
    #[error("{components} components requested for {points} points")]
    TooManyComponents { components: usize, points: usize },
    #[error("{groups} groups requested for {chunks} chunks")]
    TooManyGroups { groups: usize, chunks: usize },
    #[error("point dimension {got} differs from {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("invalid clustering config: {0}")]
    Config(String),
}

/// Soft-assignment cutoff used when none is configured.
pub const DEFAULT_ASSIGN_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub id: usize,
    pub members: Vec<ScoredChunk>,
    pub mean_query_similarity: f64,
}

impl Cluster {
    pub fn from_members(id: usize, members: Vec<ScoredChunk>) -> Self {
        let mean = members.iter().map(|m| m.score).sum::<f64>() / members.len() as f64;
        Self {
            id,
            members,
            mean_query_similarity: mean,
        }
    }
}

/// `min(8, floor(n / 2))`, never below 1.
pub fn default_max_components(n_points: usize) -> usize {
    (n_points / 2).clamp(1, 8)
}

/// Component memberships per point: every component at or above `threshold`,
/// plus the argmax (lowest index on ties), in ascending component order.
pub fn assign_memberships(responsibilities: &[Vec<f64>], threshold: f64) -> Vec<Vec<usize>> {
    responsibilities
        .iter()
        .map(|r| {
            let best = gmm::argmax(r);
            (0..r.len()).filter(|&k| k == best || r[k] >= threshold).collect()
        })
        .collect()
}

/// Builds clusters from memberships, drops empty components and numbers the
/// rest by descending mean query similarity (component index breaks ties).
pub fn clusters_from_memberships(chunks: &[ScoredChunk], memberships: &[Vec<usize>], n_components: usize) -> Vec<Cluster> {
    let mut buckets: Vec<Vec<ScoredChunk>> = vec![Vec::new(); n_components];
    for (chunk, comps) in chunks.iter().zip(memberships) {
        for &k in comps {
            buckets[k].push(chunk.clone());
        }
    }
    let mut clusters: Vec<(usize, Cluster)> = buckets
        .into_iter()
        .enumerate()
        .filter(|(_, m)| !m.is_empty())
        .map(|(k, m)| (k, Cluster::from_members(k, m)))
        .collect();
    clusters.sort_by(|(ka, a), (kb, b)| {
        b.mean_query_similarity
            .total_cmp(&a.mean_query_similarity)
            .then(ka.cmp(kb))
    });
    clusters
        .into_iter()
        .enumerate()
        .map(|(id, (_, mut c))| {
            c.id = id;
            c
        })
        .collect()
}

/// Reduce, select a mixture by BIC, then soft-assign.
pub fn cluster_chunks(
    chunks: &[ScoredChunk],
    params: &ReducerParams,
    max_components: usize,
    assign_threshold: f64,
    seed: u64,
    exec: Execution,
) -> Result<Vec<Cluster>, ClusterError> {
    if chunks.is_empty() {
        return Err(ClusterError::Empty);
    }
    if !(assign_threshold > 0.0 && assign_threshold < 1.0) {
        return Err(ClusterError::Config("assign_threshold must lie in (0, 1)".into()));
    }
    params.validate()?;
    let raw: Vec<Vec<f64>> = chunks.iter().map(|c| c.vector.values().to_vec()).collect();
    let reduced = reduce_umap(&raw, params, exec);
    let model = gmm::select_components_bic_with(&reduced, max_components, seed, exec)?;
    let resp = model.responsibilities(&reduced);
    let memberships = assign_memberships(&resp, assign_threshold);
    Ok(clusters_from_memberships(chunks, &memberships, model.n_components))
}

/// Seeded shuffle, then `n_groups` contiguous slices whose sizes differ by at
/// most one (larger slices first).
pub fn group_contiguous(chunks: &[ScoredChunk], n_groups: usize, seed: u64) -> Result<Vec<Cluster>, ClusterError> {
    if n_groups == 0 || n_groups > chunks.len() {
        return Err(ClusterError::TooManyGroups {
            groups: n_groups,
            chunks: chunks.len(),
        });
    }
    let mut shuffled = chunks.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = shuffled.len() / n_groups;
    let extra = shuffled.len() % n_groups;
    let mut rest = shuffled.into_iter();
    Ok((0..n_groups)
        .map(|g| {
            let size = base + usize::from(g < extra);
            Cluster::from_members(g, rest.by_ref().take(size).collect())
        })
        .collect())
}

/// Adjusted Rand index between two flat partitions of the same items.
/// Identical trivial partitions score 1.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let na = a.iter().max().map_or(0, |m| m + 1);
    let nb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; nb]; na];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let c2 = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.iter().flatten().map(|&v| c2(v)).sum();
    let rows: f64 = table.iter().map(|r| c2(r.iter().sum())).sum();
    let cols: f64 = (0..nb).map(|j| c2(table.iter().map(|r| r[j]).sum())).sum();
    let total = c2(n as u64);
    if total == 0.0 {
        return 1.0;
    }
    let expected = rows * cols / total;
    let max = 0.5 * (rows + cols);
    if (max - expected).abs() < f64::EPSILON {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Chunk;
    use crate::embedding::{normalize, EmbeddingVector};
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    pub(crate) fn scored(id: usize, vector: Vec<f64>, score: f64) -> ScoredChunk {
        ScoredChunk {
            chunk: Chunk {
                id: format!("p#{id:04}"),
                paper_id: "p".into(),
                study_id: "s".into(),
                text: format!("chunk {id}"),
                char_span: (0, 1),
            },
            vector: normalize(&EmbeddingVector::new(vector)).unwrap(),
            score,
            rank_within_source: id + 1,
        }
    }

    // Pair-counting form of ARI, independent of the contingency-table route.
    fn ari_pairs(a: &[usize], b: &[usize]) -> f64 {
        let (mut tp, mut fp, mut fn_, mut tn) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..a.len() {
            for j in i + 1..a.len() {
                match (a[i] == a[j], b[i] == b[j]) {
                    (true, true) => tp += 1.0,
                    (false, true) => fp += 1.0,
                    (true, false) => fn_ += 1.0,
                    (false, false) => tn += 1.0,
                }
            }
        }
        2.0 * (tp * tn - fn_ * fp) / ((tp + fn_) * (fn_ + tn) + (tp + fp) * (fp + tn))
    }

    #[test]
    fn ari_matches_pair_counting() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let n = rng.gen_range(4..40);
            let a: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            let b: Vec<usize> = (0..n).map(|_| rng.gen_range(0..4)).collect();
            let oracle = ari_pairs(&a, &b);
            if oracle.is_finite() {
                assert!((adjusted_rand_index(&a, &b) - oracle).abs() < 1e-12);
            }
        }
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]), 1.0);
    }

    #[test]
    fn tie_goes_to_lowest_component() {
        assert_eq!(assign_memberships(&[vec![0.5, 0.5]], 0.6), vec![vec![0]]);
        assert_eq!(assign_memberships(&[vec![0.3, 0.7]], 0.1), vec![vec![0, 1]]);
        assert_eq!(assign_memberships(&[vec![0.05, 0.95]], 0.1), vec![vec![1]]);
    }

    #[test]
    fn single_chunk_single_cluster() {
        let chunks = vec![scored(0, vec![1.0, 0.0, 0.0], 0.4)];
        let params = ReducerParams::for_points(1, 0);
        let clusters = cluster_chunks(&chunks, &params, 8, 0.1, 0, Execution::Sequential).unwrap();
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].members, chunks);
        assert!((clusters[0].mean_query_similarity - 0.4).abs() < 1e-15);
    }

    #[test]
    fn recovers_blob_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let dim = 24;
        let mut chunks = Vec::new();
        for i in 0..80 {
            let blob = i / 40;
            let v = (0..dim)
                .map(|d| f64::from(u8::from((d % 2) == blob)) + noise.sample(&mut rng))
                .collect();
            chunks.push(scored(i, v, if blob == 0 { 0.8 } else { 0.3 }));
        }
        let params = ReducerParams {
            target_dim: 2,
            ..ReducerParams::for_points(chunks.len(), 0)
        };
        let clusters = cluster_chunks(&chunks, &params, default_max_components(80), 0.1, 0, Execution::Parallel).unwrap();
        assert_eq!(clusters.len(), 2);
        let ids = |c: &Cluster| {
            let mut v: Vec<String> = c.members.iter().map(|m| m.chunk.id.clone()).collect();
            v.sort();
            v
        };
        let blob0: Vec<String> = (0..40).map(|i| format!("p#{i:04}")).collect();
        let blob1: Vec<String> = (40..80).map(|i| format!("p#{i:04}")).collect();
        // higher-similarity blob is numbered first
        assert_eq!(ids(&clusters[0]), blob0);
        assert_eq!(ids(&clusters[1]), blob1);
    }

    #[test]
    fn clusters_cover_input_and_are_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let chunks: Vec<ScoredChunk> = (0..25)
            .map(|i| scored(i, (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect(), rng.gen_range(0.0..1.0)))
            .collect();
        let params = ReducerParams::for_points(25, 3);
        let a = cluster_chunks(&chunks, &params, default_max_components(25), 0.1, 3, Execution::Sequential).unwrap();
        let b = cluster_chunks(&chunks, &params, default_max_components(25), 0.1, 3, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        for c in &chunks {
            assert!(a.iter().any(|cl| cl.members.iter().any(|m| m.chunk.id == c.chunk.id)));
        }
        for w in a.windows(2) {
            assert!(w[0].mean_query_similarity >= w[1].mean_query_similarity);
        }
    }

    #[test]
    fn contiguous_group_sizes() {
        let chunks: Vec<_> = (0..7).map(|i| scored(i, vec![1.0, i as f64], 0.5)).collect();
        let sizes = |n: usize, g: usize| -> Vec<usize> {
            group_contiguous(&chunks[..n], g, 9).unwrap().iter().map(|c| c.members.len()).collect()
        };
        assert_eq!(sizes(6, 3), vec![2, 2, 2]);
        assert_eq!(sizes(7, 3), vec![3, 2, 2]);
        assert_eq!(group_contiguous(&chunks, 3, 1).unwrap(), group_contiguous(&chunks, 3, 1).unwrap());
        assert!(matches!(group_contiguous(&chunks, 8, 0), Err(ClusterError::TooManyGroups { .. })));
        let all: usize = group_contiguous(&chunks, 4, 5).unwrap().iter().map(|c| c.members.len()).sum();
        assert_eq!(all, 7);
    }
}
