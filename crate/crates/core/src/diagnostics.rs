//! Analogy generation and cluster-bias analysis.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;
use crate::stats;
use crate::store::{EmbeddingStore, StoreError};
use crate::subspace::rank_by_projection;

/// `‖c - μ‖` at or below this is a degenerate bias direction.
pub const DIRECTION_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("word {word:?} is missing from store {store}")]
    MissingWord { word: String, store: usize },
    #[error("analogy seed ({0:?}, {1:?}) has a zero difference vector")]
    DegenerateSeed(String, String),
    #[error("at least one store is required")]
    NoStores,
    #[error("class {0:?} is not a member of the defining set")]
    ClassNotInSet(String),
    #[error("class {0:?} coincides with the defining-set mean")]
    DegenerateDirection(String),
    #[error("stores have different dimensions ({0} and {1})")]
    DimensionMismatch(usize, usize),
    #[error("{0} must be at least 1")]
    ZeroCount(&'static str),
    #[error("neighbor search failed: {0}")]
    Neighbors(String),
}

impl From<StoreError> for DiagnosticsError {
    fn from(e: StoreError) -> Self {
        DiagnosticsError::Neighbors(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalogyCandidate {
    pub x: String,
    pub y: String,
    /// Mean of `cos(a - b, x - y)` over the stores.
    pub score: f64,
    pub seed: (String, String),
}

fn lookup<'a>(store: &'a EmbeddingStore, word: &str, which: usize) -> Result<&'a [f64], DiagnosticsError> {
    store.vector(word).ok_or_else(|| DiagnosticsError::MissingWord {
        word: word.to_string(),
        store: which,
    })
}

/// Best `top` ordered pairs `(x, y)` of one store for the seed difference.
fn store_candidates(
    store: &EmbeddingStore,
    seed: (&str, &str),
    which: usize,
    top: usize,
    delta: f64,
) -> Result<Vec<(String, String, f64)>, DiagnosticsError> {
    let a = lookup(store, seed.0, which)?;
    let b = lookup(store, seed.1, which)?;
    let s = linalg::sub(a, b);
    let s_norm = linalg::norm(&s);
    if s_norm == 0.0 {
        return Err(DiagnosticsError::DegenerateSeed(seed.0.into(), seed.1.into()));
    }
    let skip: Vec<bool> = store.vocab().iter().map(|w| w == seed.0 || w == seed.1).collect();
    let mut scored: Vec<(usize, usize, f64)> = (0..store.len())
        .into_par_iter()
        .filter(|&x| !skip[x])
        .flat_map_iter(|x| {
            let skip = &skip;
            let s = &s;
            (0..store.len()).filter_map(move |y| {
                if y == x || skip[y] {
                    return None;
                }
                let diff = linalg::sub(store.row(x), store.row(y));
                let n = linalg::norm(&diff);
                if n == 0.0 || n > delta {
                    return None;
                }
                let score = (linalg::dot(s, &diff) / (s_norm * n)).clamp(-1.0, 1.0);
                Some((x, y, score))
            })
        })
        .collect();
    let by_rank = |p: &(usize, usize, f64), q: &(usize, usize, f64)| {
        q.2.total_cmp(&p.2)
            .then_with(|| store.word(p.0).cmp(store.word(q.0)))
            .then_with(|| store.word(p.1).cmp(store.word(q.1)))
    };
    if top < scored.len() {
        scored.select_nth_unstable_by(top, by_rank);
        scored.truncate(top);
    }
    scored.sort_by(by_rank);
    Ok(scored
        .into_iter()
        .map(|(x, y, score)| (store.word(x).to_string(), store.word(y).to_string(), score))
        .collect())
}

/// Analogy pairs `(x, y)` completing `a : b :: x : y` in every store.
///
/// Each store contributes its `top` highest-scoring ordered pairs with
/// `‖x - y‖ <= delta`; the result is the intersection, ordered by mean score
/// and then lexicographically. Pass `f64::INFINITY` to disable the norm bound.
pub fn generate_analogies(
    stores: &[&EmbeddingStore],
    seed: (&str, &str),
    top: usize,
    delta: f64,
) -> Result<Vec<AnalogyCandidate>, DiagnosticsError> {
    if stores.is_empty() {
        return Err(DiagnosticsError::NoStores);
    }
    let mut lists = Vec::with_capacity(stores.len());
    for (i, store) in stores.iter().enumerate() {
        lists.push(store_candidates(store, seed, i, top, delta)?);
    }
    let mut merged: BTreeMap<(String, String), (usize, f64)> = BTreeMap::new();
    for list in &lists {
        for (x, y, score) in list {
            let e = merged.entry((x.clone(), y.clone())).or_insert((0, 0.0));
            e.0 += 1;
            e.1 += score;
        }
    }
    let mut out: Vec<AnalogyCandidate> = merged
        .into_iter()
        .filter(|(_, (count, _))| *count == stores.len())
        .map(|((x, y), (count, sum))| AnalogyCandidate {
            x,
            y,
            score: sum / count as f64,
            seed: (seed.0.to_string(), seed.1.to_string()),
        })
        .collect();
    out.sort_by(|p, q| {
        q.score
            .total_cmp(&p.score)
            .then_with(|| (&p.x, &p.y).cmp(&(&q.x, &q.y)))
    });
    Ok(out)
}

/// `(c - μ) / ‖c - μ‖` with `μ` the mean of `set`.
pub fn bias_direction_from_vectors(class: &[f64], set: &[&[f64]]) -> Option<Vec<f64>> {
    let mu = linalg::mean(set.iter().copied(), class.len());
    let diff = linalg::sub(class, &mu);
    let n = linalg::norm(&diff);
    (n > DIRECTION_TOL).then(|| linalg::scaled(&diff, 1.0 / n))
}

/// Unit direction from the defining-set mean toward `class`.
pub fn bias_direction(
    store: &EmbeddingStore,
    class: &str,
    defining: &[String],
) -> Result<Vec<f64>, DiagnosticsError> {
    if !defining.iter().any(|w| w == class) {
        return Err(DiagnosticsError::ClassNotInSet(class.to_string()));
    }
    let vectors = defining
        .iter()
        .map(|w| lookup(store, w, 0))
        .collect::<Result<Vec<_>, _>>()?;
    let c = lookup(store, class, 0)?;
    bias_direction_from_vectors(c, &vectors).ok_or_else(|| DiagnosticsError::DegenerateDirection(class.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasedWord {
    pub word: String,
    pub bias: f64,
}

/// The `n` words with the largest `<w, b>`, descending, ties by token.
pub fn top_biased_words(store: &EmbeddingStore, b: &[f64], n: usize) -> Vec<BiasedWord> {
    rank_by_projection(store, b, n)
        .into_iter()
        .map(|(i, bias)| BiasedWord {
            word: store.word(i).to_string(),
            bias,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfessionBias {
    pub word: String,
    /// `<profession, b>` in the biased store.
    pub original_bias: f64,
    /// Neighbors whose biased-store vector has `<w, b> > 0`.
    pub neighbor_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreClusterReport {
    pub store: String,
    pub professions: Vec<ProfessionBias>,
    /// `None` when either sample is constant.
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassClusterReport {
    pub class: String,
    pub direction: Vec<f64>,
    pub top_biased_positive: Vec<BiasedWord>,
    pub top_biased_negative: Vec<BiasedWord>,
    pub stores: Vec<StoreClusterReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterBiasReport {
    pub neighbors: usize,
    pub top_biased: usize,
    pub classes: Vec<ClassClusterReport>,
    pub metadata: BTreeMap<String, String>,
}

impl ClusterBiasReport {
    /// One row per (class, store, profession).
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("class\tstore\tword\toriginal_bias\tneighbor_count\n");
        for class in &self.classes {
            for store in &class.stores {
                for p in &store.professions {
                    out.push_str(&format!(
                        "{}\t{}\t{}\t{}\t{}\n",
                        class.class,
                        store.store,
                        p.word,
                        crate::report::format_float(p.original_bias),
                        p.neighbor_count
                    ));
                }
            }
        }
        out
    }
}

/// Number of the `m` nearest neighbors of `word` in `store` (itself excluded)
/// whose vector in `reference` has a strictly positive component along `b`.
pub fn positive_neighbor_count(
    store: &EmbeddingStore,
    reference: &EmbeddingStore,
    word: &str,
    b: &[f64],
    m: usize,
) -> Result<usize, DiagnosticsError> {
    let query = lookup(store, word, 1)?;
    let exclude = HashSet::from([word.to_string()]);
    let neighbors = store.nearest_neighbors(query, m, &exclude)?;
    Ok(neighbors
        .iter()
        .filter(|n| reference.vector(&n.word).is_some_and(|w| linalg::dot(w, b) > 0.0))
        .count())
}

fn correlations(professions: &[ProfessionBias]) -> (Option<f64>, Option<f64>) {
    let bias: Vec<f64> = professions.iter().map(|p| p.original_bias).collect();
    let counts: Vec<f64> = professions.iter().map(|p| p.neighbor_count as f64).collect();
    (
        stats::pearson_r(&bias, &counts).ok(),
        stats::spearman_rho(&bias, &counts).ok(),
    )
}

/// Cluster-bias analysis for each class of `defining`, on the biased store
/// and on the debiased one.
///
/// Bias directions and neighbor polarity always come from `biased`; only
/// the neighbor search runs in the store under analysis.
pub fn cluster_bias_report(
    biased: &EmbeddingStore,
    debiased: &EmbeddingStore,
    defining: &[String],
    professions: &[String],
    m: usize,
    n: usize,
) -> Result<ClusterBiasReport, DiagnosticsError> {
    if m == 0 {
        return Err(DiagnosticsError::ZeroCount("neighbors"));
    }
    if n == 0 {
        return Err(DiagnosticsError::ZeroCount("top_biased"));
    }
    if biased.dim() != debiased.dim() {
        return Err(DiagnosticsError::DimensionMismatch(biased.dim(), debiased.dim()));
    }
    for p in professions {
        lookup(biased, p, 0)?;
        lookup(debiased, p, 1)?;
    }
    let mut classes = Vec::with_capacity(defining.len());
    for class in defining {
        let b = bias_direction(biased, class, defining)?;
        let negated = linalg::scaled(&b, -1.0);
        let original: Vec<f64> = professions
            .iter()
            .map(|p| linalg::dot(biased.vector(p).unwrap(), &b))
            .collect();
        let mut stores = Vec::with_capacity(2);
        for (label, store) in [("biased", biased), ("debiased", debiased)] {
            let counts = professions
                .par_iter()
                .map(|p| positive_neighbor_count(store, biased, p, &b, m))
                .collect::<Result<Vec<_>, _>>()?;
            let rows: Vec<ProfessionBias> = professions
                .iter()
                .zip(&original)
                .zip(counts)
                .map(|((word, &original_bias), neighbor_count)| ProfessionBias {
                    word: word.clone(),
                    original_bias,
                    neighbor_count,
                })
                .collect();
            let (pearson, spearman) = correlations(&rows);
            stores.push(StoreClusterReport {
                store: label.to_string(),
                professions: rows,
                pearson,
                spearman,
            });
        }
        classes.push(ClassClusterReport {
            class: class.clone(),
            top_biased_positive: top_biased_words(biased, &b, n),
            top_biased_negative: top_biased_words(biased, &negated, n)
                .into_iter()
                .map(|w| BiasedWord { bias: -w.bias, ..w })
                .collect(),
            direction: b,
            stores,
        });
    }
    let metadata = BTreeMap::from([
        ("neighbor_search".to_string(), "excludes the profession itself".to_string()),
        (
            "positive_bias".to_string(),
            "<w, b> > 0 with w and b from the biased store".to_string(),
        ),
    ]);
    Ok(ClusterBiasReport {
        neighbors: m,
        top_biased: n,
        classes,
        metadata,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-15)
    }

    #[test]
    fn parallel_pair_ranks_first() {
        let s = EmbeddingStore::from_rows([
            ("a", vec![1.0, 0.0]),
            ("b", vec![0.0, 0.0]),
            ("x", vec![0.5, 0.5]),
            ("y", vec![0.0, 0.5]),
            ("z", vec![0.1, 0.4]),
        ])
        .unwrap();
        let out = generate_analogies(&[&s], ("a", "b"), 3, 1.0).unwrap();
        assert_eq!((out[0].x.as_str(), out[0].y.as_str()), ("x", "y"));
        assert_eq!(out[0].score, 1.0);
        assert!(out.iter().all(|c| c.x != c.y && !["a", "b"].contains(&c.x.as_str())));
    }

    #[test]
    fn single_admissible_pair() {
        let s = EmbeddingStore::from_rows([
            ("a", vec![1.0, 0.0]),
            ("b", vec![-1.0, 0.0]),
            ("p", vec![10.0, 0.0]),
            ("q", vec![10.5, 0.2]),
            ("r", vec![-10.0, 5.0]),
            ("s", vec![0.0, -10.0]),
        ])
        .unwrap();
        for top in [1, 5, 100] {
            let out = generate_analogies(&[&s], ("a", "b"), top, 1.0).unwrap();
            assert_eq!((out[0].x.as_str(), out[0].y.as_str()), ("q", "p"));
            assert_eq!(out.len(), top.min(2));
        }
    }

    #[test]
    fn disjoint_top_lists_intersect_to_nothing() {
        let s1 = EmbeddingStore::from_rows([
            ("a", vec![1.0, 0.0]),
            ("b", vec![0.0, 0.0]),
            ("x", vec![1.0, 1.0]),
            ("y", vec![0.0, 1.0]),
        ])
        .unwrap();
        let s2 = EmbeddingStore::from_rows([
            ("a", vec![1.0, 0.0]),
            ("b", vec![0.0, 0.0]),
            ("x", vec![0.0, 1.0]),
            ("y", vec![1.0, 1.0]),
        ])
        .unwrap();
        assert!(generate_analogies(&[&s1, &s2], ("a", "b"), 1, 2.0).unwrap().is_empty());
        let single = generate_analogies(&[&s1], ("a", "b"), 2, 2.0).unwrap();
        assert_eq!(single.len(), 2);
        assert!(matches!(
            generate_analogies(&[&s1], ("a", "missing"), 1, 1.0),
            Err(DiagnosticsError::MissingWord { .. })
        ));
    }

    #[test]
    fn bias_direction_examples() {
        let b = bias_direction_from_vectors(&[1.0, 0.0], &[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
        let h = 1.0 / 2f64.sqrt();
        assert!(close(&b, &[h, -h]));
        assert!(bias_direction_from_vectors(&[1.0, 0.0], &[&[1.0, 0.0]]).is_none());
        let s = EmbeddingStore::from_rows([("c", vec![3.0, 4.0])]).unwrap();
        assert_eq!(
            bias_direction(&s, "c", &["c".to_string()]),
            Err(DiagnosticsError::DegenerateDirection("c".into()))
        );
        assert_eq!(
            bias_direction(&s, "d", &["c".to_string()]),
            Err(DiagnosticsError::ClassNotInSet("d".into()))
        );
    }

    #[test]
    fn top_biased_examples() {
        let s = EmbeddingStore::from_rows([
            ("o", vec![0.0, 1.0]),
            ("p", vec![2.0, 0.0]),
            ("q", vec![-1.0, 0.0]),
        ])
        .unwrap();
        let top: Vec<String> = top_biased_words(&s, &[1.0, 0.0], 1).into_iter().map(|w| w.word).collect();
        assert_eq!(top, ["p"]);
        let all: Vec<String> = top_biased_words(&s, &[1.0, 0.0], 10).into_iter().map(|w| w.word).collect();
        assert_eq!(all, ["p", "o", "q"]);
        assert_eq!(top_biased_words(&s, &[-1.0, 0.0], 1)[0].word, "q");
    }

    fn toy() -> EmbeddingStore {
        EmbeddingStore::from_rows([
            ("he", vec![1.0, 0.1, 0.0]),
            ("she", vec![-1.0, 0.1, 0.0]),
            ("p1", vec![0.9, 0.5, 0.1]),
            ("p2", vec![0.2, 0.9, 0.3]),
            ("p3", vec![-0.7, 0.6, 0.2]),
            ("n1", vec![0.8, 0.4, 0.3]),
            ("n2", vec![-0.6, 0.7, 0.1]),
            ("n3", vec![0.1, 0.2, 0.9]),
        ])
        .unwrap()
    }

    #[test]
    fn identical_stores_give_identical_counts() {
        let s = toy();
        let d = vec!["he".to_string(), "she".to_string()];
        let profs: Vec<String> = ["p1", "p2", "p3"].iter().map(|w| w.to_string()).collect();
        let r = cluster_bias_report(&s, &s, &d, &profs, 3, 2).unwrap();
        assert_eq!(r.classes.len(), 2);
        for class in &r.classes {
            assert_eq!(class.stores[0].professions, class.stores[1].professions);
            assert!(class.stores[0].professions.iter().all(|p| p.neighbor_count <= 3));
        }
        let tsv = r.to_tsv();
        assert_eq!(tsv.lines().count(), 1 + 2 * 2 * 3);
    }

    #[test]
    fn constant_sample_has_no_correlation() {
        let rows: Vec<ProfessionBias> = (0..3)
            .map(|i| ProfessionBias {
                word: format!("p{i}"),
                original_bias: i as f64,
                neighbor_count: 1,
            })
            .collect();
        assert_eq!(correlations(&rows), (None, None));
    }
}
