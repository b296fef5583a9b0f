//! Multiclass bias subspace.
//!
//! Every defining set `D_i` contributes the rows `w - mean(D_i)` for its
//! members. The union of those rows goes through PCA without any further
//! centering, and the leading `k` principal directions span the subspace.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::ResolvedSet;
use crate::linalg;
use crate::store::EmbeddingStore;

/// Maximum deviation from orthonormality accepted for a user-supplied basis.
pub const ORTHONORMAL_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum SubspaceError {
    #[error("no defining sets were given")]
    NoSets,
    #[error("defining set {0:?} is empty")]
    EmptySet(String),
    #[error("every deviation row is zero (all defining sets are singletons or constant)")]
    AllZero,
    #[error("requested {k} components but the deviation matrix has rank {rank}")]
    RankExceeded { k: usize, rank: usize },
    #[error("the number of components must be at least 1")]
    ZeroComponents,
    #[error("variance threshold must lie in (0, 1], got {0}")]
    BadThreshold(f64),
    #[error("basis vectors are not orthonormal (|<b_{i}, b_{j}> - delta| = {deviation:e})")]
    NotOrthonormal { i: usize, j: usize, deviation: f64 },
    #[error("expected vectors of dimension {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// How many principal directions to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComponentSelection {
    Count(usize),
    /// Smallest `k` whose cumulative explained-variance ratio reaches the threshold.
    VarianceThreshold(f64),
}

impl Default for ComponentSelection {
    fn default() -> Self {
        ComponentSelection::Count(1)
    }
}

/// PCA diagnostics attached to a subspace identified from defining sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Defining-set names the subspace was computed from.
    pub sets: Vec<String>,
    /// Number of deviation rows (the covariance divisor).
    pub rows: usize,
    pub rank: usize,
    /// Every eigenvalue of the deviation covariance, descending.
    pub eigenvalues: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

/// Orthonormal basis `b_1..b_k` of a bias subspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasSubspace {
    dim: usize,
    basis: Vec<Vec<f64>>,
    spectrum: Option<Spectrum>,
}

impl BiasSubspace {
    /// Wraps an externally supplied orthonormal basis.
    pub fn from_orthonormal(basis: Vec<Vec<f64>>) -> Result<Self, SubspaceError> {
        let dim = basis.first().map_or(0, Vec::len);
        if basis.is_empty() {
            return Err(SubspaceError::ZeroComponents);
        }
        for b in &basis {
            if b.len() != dim {
                return Err(SubspaceError::DimensionMismatch {
                    expected: dim,
                    found: b.len(),
                });
            }
        }
        for i in 0..basis.len() {
            for j in i..basis.len() {
                let target = if i == j { 1.0 } else { 0.0 };
                let deviation = (linalg::dot(&basis[i], &basis[j]) - target).abs();
                if deviation > ORTHONORMAL_TOLERANCE {
                    return Err(SubspaceError::NotOrthonormal { i, j, deviation });
                }
            }
        }
        Ok(Self {
            dim,
            basis,
            spectrum: None,
        })
    }

    pub fn k(&self) -> usize {
        self.basis.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    pub fn spectrum(&self) -> Option<&Spectrum> {
        self.spectrum.as_ref()
    }

    /// The `k` retained eigenvalues (empty for a user-supplied basis).
    pub fn eigenvalues(&self) -> &[f64] {
        self.spectrum
            .as_ref()
            .map_or(&[][..], |s| &s.eigenvalues[..self.k()])
    }

    pub fn explained_variance_ratio(&self) -> &[f64] {
        self.spectrum
            .as_ref()
            .map_or(&[][..], |s| &s.explained_variance_ratio[..self.k()])
    }

    /// `d × k` matrix whose columns are the basis vectors.
    pub fn basis_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.k(), |r, c| self.basis[c][r])
    }

    /// Coordinates `<w, b_i>` of `w` in the basis.
    pub fn coordinates(&self, w: &[f64]) -> Vec<f64> {
        self.basis.iter().map(|b| linalg::dot(w, b)).collect()
    }

    /// Component of `w` inside the subspace: `sum_i <w, b_i> b_i`.
    pub fn project(&self, w: &[f64]) -> Vec<f64> {
        assert_eq!(w.len(), self.dim, "vector dimension does not match the subspace");
        let mut out = vec![0.0; self.dim];
        for b in &self.basis {
            linalg::axpy(linalg::dot(w, b), b, &mut out);
        }
        out
    }

    /// Keeps the first `k` directions.
    pub fn truncated(&self, k: usize) -> Result<Self, SubspaceError> {
        if k == 0 {
            return Err(SubspaceError::ZeroComponents);
        }
        if k > self.k() {
            return Err(SubspaceError::RankExceeded { k, rank: self.k() });
        }
        Ok(Self {
            dim: self.dim,
            basis: self.basis[..k].to_vec(),
            spectrum: self.spectrum.clone(),
        })
    }
}

/// Rows `w - mean(D_i)` for every member of every set, in set order.
pub fn deviation_matrix_from_groups(groups: &[Vec<Vec<f64>>]) -> Result<DMatrix<f64>, SubspaceError> {
    let dim = groups
        .iter()
        .flatten()
        .next()
        .map(Vec::len)
        .ok_or(SubspaceError::NoSets)?;
    let mut rows: Vec<f64> = Vec::new();
    let mut count = 0;
    for (g, group) in groups.iter().enumerate() {
        if group.is_empty() {
            return Err(SubspaceError::EmptySet(format!("#{g}")));
        }
        for w in group {
            if w.len() != dim {
                return Err(SubspaceError::DimensionMismatch {
                    expected: dim,
                    found: w.len(),
                });
            }
        }
        let mu = linalg::mean(group.iter().map(Vec::as_slice), dim);
        for w in group {
            rows.extend(w.iter().zip(&mu).map(|(x, m)| x - m));
            count += 1;
        }
    }
    Ok(DMatrix::from_row_slice(count, dim, &rows))
}

/// Deviation rows for resolved defining sets.
pub fn deviation_matrix(store: &EmbeddingStore, sets: &[ResolvedSet]) -> Result<DMatrix<f64>, SubspaceError> {
    if let Some(s) = sets.iter().find(|s| s.is_empty()) {
        return Err(SubspaceError::EmptySet(s.name.clone()));
    }
    let groups: Vec<Vec<Vec<f64>>> = sets
        .iter()
        .map(|s| s.indices.iter().map(|&i| store.row(i).to_vec()).collect())
        .collect();
    deviation_matrix_from_groups(&groups)
}

/// PCA of deviation rows via SVD, without re-centering.
///
/// Eigenvalues use the population divisor (number of rows).
pub fn principal_subspace(
    deviations: &DMatrix<f64>,
    selection: ComponentSelection,
    set_names: Vec<String>,
) -> Result<BiasSubspace, SubspaceError> {
    let (n, d) = deviations.shape();
    if n == 0 || d == 0 {
        return Err(SubspaceError::NoSets);
    }
    if let ComponentSelection::Count(0) = selection {
        return Err(SubspaceError::ZeroComponents);
    }
    if let ComponentSelection::VarianceThreshold(t) = selection {
        if !(t > 0.0 && t <= 1.0) {
            return Err(SubspaceError::BadThreshold(t));
        }
    }

    let svd = deviations.clone().svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors were requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });
    let sigma: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let sigma_max = sigma.first().copied().unwrap_or(0.0);
    if sigma_max == 0.0 {
        return Err(SubspaceError::AllZero);
    }
    let tol = sigma_max * n.max(d) as f64 * f64::EPSILON;
    let rank = sigma.iter().take_while(|&&s| s > tol).count();

    let eigenvalues: Vec<f64> = sigma.iter().map(|s| s * s / n as f64).collect();
    let total: f64 = eigenvalues.iter().sum();
    let ratios: Vec<f64> = eigenvalues.iter().map(|e| e / total).collect();

    let k = match selection {
        ComponentSelection::Count(k) => {
            if k > rank {
                return Err(SubspaceError::RankExceeded { k, rank });
            }
            k
        }
        ComponentSelection::VarianceThreshold(t) => {
            let mut cumulative = 0.0;
            let mut k = rank;
            for (i, r) in ratios.iter().enumerate().take(rank) {
                cumulative += r;
                if cumulative >= t {
                    k = i + 1;
                    break;
                }
            }
            k
        }
    };

    let basis = order[..k]
        .iter()
        .map(|&row| {
            let mut b: Vec<f64> = v_t.row(row).iter().copied().collect();
            let norm = linalg::norm(&b);
            b.iter_mut().for_each(|x| *x /= norm);
            apply_sign_convention(&mut b);
            b
        })
        .collect();

    Ok(BiasSubspace {
        dim: d,
        basis,
        spectrum: Some(Spectrum {
            sets: set_names,
            rows: n,
            rank,
            eigenvalues,
            explained_variance_ratio: ratios,
        }),
    })
}

/// Flips `b` so that its largest-magnitude coordinate (the first one on ties) is positive.
pub fn apply_sign_convention(b: &mut [f64]) {
    let mut best = 0;
    for (i, x) in b.iter().enumerate() {
        if x.abs() > b[best].abs() {
            best = i;
        }
    }
    if b.get(best).is_some_and(|&x| x < 0.0) {
        b.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Bias subspace of the resolved defining sets.
pub fn identify_bias_subspace(
    store: &EmbeddingStore,
    sets: &[ResolvedSet],
    selection: ComponentSelection,
) -> Result<BiasSubspace, SubspaceError> {
    let deviations = deviation_matrix(store, sets)?;
    principal_subspace(
        &deviations,
        selection,
        sets.iter().map(|s| s.name.clone()).collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Loading {
    pub word: String,
    pub loading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentReport {
    pub component: usize,
    pub eigenvalue: Option<f64>,
    pub explained_variance_ratio: Option<f64>,
    pub basis_vector: Vec<f64>,
    /// Words with the largest `<w, b_i>`.
    pub top_positive: Vec<Loading>,
    /// Words with the smallest `<w, b_i>`.
    pub top_negative: Vec<Loading>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub k: usize,
    pub spectrum: Option<Spectrum>,
    pub components: Vec<ComponentReport>,
}

/// Per-component loadings of the vocabulary, for inspecting a subspace.
pub fn spectrum_report(store: &EmbeddingStore, subspace: &BiasSubspace, top: usize) -> SpectrumReport {
    let components = subspace
        .basis()
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let to_loadings = |ranked: Vec<(usize, f64)>| {
                ranked
                    .into_iter()
                    .map(|(w, loading)| Loading {
                        word: store.word(w).to_string(),
                        loading,
                    })
                    .collect()
            };
            let negated = linalg::scaled(b, -1.0);
            ComponentReport {
                component: i + 1,
                eigenvalue: subspace.eigenvalues().get(i).copied(),
                explained_variance_ratio: subspace.explained_variance_ratio().get(i).copied(),
                basis_vector: b.clone(),
                top_positive: to_loadings(rank_by_projection(store, b, top)),
                top_negative: to_loadings(
                    rank_by_projection(store, &negated, top)
                        .into_iter()
                        .map(|(w, x)| (w, -x))
                        .collect(),
                ),
            }
        })
        .collect();
    SpectrumReport {
        k: subspace.k(),
        spectrum: subspace.spectrum().cloned(),
        components,
    }
}

/// Indices of the `n` rows with the largest `<w, direction>`, descending,
/// ties broken by ascending token.
pub(crate) fn rank_by_projection(store: &EmbeddingStore, direction: &[f64], n: usize) -> Vec<(usize, f64)> {
    let mut scored: Vec<(usize, f64)> = store
        .rows()
        .enumerate()
        .map(|(i, w)| (i, linalg::dot(w, direction)))
        .collect();
    let by_rank = |a: &(usize, f64), b: &(usize, f64)| {
        b.1.total_cmp(&a.1)
            .then_with(|| store.word(a.0).cmp(store.word(b.0)))
    };
    if n < scored.len() {
        scored.select_nth_unstable_by(n, by_rank);
        scored.truncate(n);
    }
    scored.sort_by(by_rank);
    scored
}
