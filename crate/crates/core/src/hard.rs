//! Hard debiasing: neutralize bias-neutral words, equalize equality sets.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::{ResolvedLexicon, ResolvedNeutral};
use crate::linalg;
use crate::store::EmbeddingStore;
use crate::subspace::BiasSubspace;

/// A residual `w - w_B` at or below this norm (relative to `|w|`) is treated as zero.
pub const INSIDE_SUBSPACE_TOLERANCE: f64 = 1e-12;
/// `w_B` closer than this to `mu_B` makes the equalized direction undefined.
pub const DEGENERATE_EQUALITY_TOLERANCE: f64 = 1e-12;
/// Negative radicands down to this value are rounding noise and clamp to zero.
pub const RADICAND_CLAMP: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum DebiasError {
    #[error("embeddings must be unit-normalized before debiasing")]
    NotNormalized,
    #[error("subspace has dimension {subspace} but the embeddings have dimension {store}")]
    DimensionMismatch { subspace: usize, store: usize },
    #[error("word {word:?} lies inside the bias subspace; it cannot be neutralized")]
    InsideSubspace { word: String },
    #[error("word {word:?} has the same bias component as its equality-set mean; equalization is undefined")]
    DegenerateEquality { word: String },
    #[error("equality set {set:?}: mean has out-of-subspace norm above 1 (radicand {radicand:e})")]
    NegativeRadicand { set: String, radicand: f64 },
    #[error("word {word:?} is listed as neutral but also belongs to an equality set")]
    NeutralInEquality { word: String },
    #[error("word {word:?} appears in more than one equality set")]
    OverlappingEquality { word: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DebiasMethod {
    Hard,
    Soft,
}

/// Hashes identifying what produced a debiased store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub lexicon_hash: String,
    pub parameter_hash: String,
}

#[derive(Debug, Clone)]
pub struct DebiasResult {
    pub store: EmbeddingStore,
    pub method: DebiasMethod,
    pub k: usize,
    pub lambda: Option<f64>,
    /// Words whose bias component was removed (hard) or that formed `N` (soft).
    pub neutralized: Vec<String>,
    pub equalized: Vec<Vec<String>>,
    /// Neutral candidates left untouched because they lie inside the subspace.
    pub skipped: Vec<String>,
    pub warnings: Vec<String>,
    pub provenance: Provenance,
}

/// Removes the bias component of `w` and rescales to unit length.
pub fn neutralize(word: &str, w: &[f64], subspace: &BiasSubspace) -> Result<Vec<f64>, DebiasError> {
    let residual = linalg::sub(w, &subspace.project(w));
    let n = linalg::norm(&residual);
    if n <= INSIDE_SUBSPACE_TOLERANCE * linalg::norm(w).max(1.0) {
        return Err(DebiasError::InsideSubspace {
            word: word.to_string(),
        });
    }
    Ok(linalg::scaled(&residual, 1.0 / n))
}

/// Equalizes one equality set.
///
/// Every output equals `(mu - mu_B) + sqrt(1 - |mu - mu_B|^2) * dir(w_B - mu_B)`,
/// so all members share their out-of-subspace part and have unit norm when the
/// inputs do. A single-word set uses its own `w_B` direction instead, which
/// leaves a unit vector unchanged.
pub fn equalize(
    set_name: &str,
    members: &[(&str, &[f64])],
    subspace: &BiasSubspace,
) -> Result<Vec<Vec<f64>>, DebiasError> {
    let Some(&(_, first)) = members.first() else {
        return Ok(Vec::new());
    };
    let dim = first.len();
    let mu = linalg::mean(members.iter().map(|(_, w)| *w), dim);
    let mu_b = subspace.project(&mu);
    let outside = linalg::sub(&mu, &mu_b);
    let mut radicand = 1.0 - linalg::dot(&outside, &outside);
    if radicand < 0.0 {
        if radicand < -RADICAND_CLAMP {
            return Err(DebiasError::NegativeRadicand {
                set: set_name.to_string(),
                radicand,
            });
        }
        radicand = 0.0;
    }
    let scale = radicand.sqrt();

    members
        .iter()
        .map(|&(word, w)| {
            let w_b = subspace.project(w);
            let direction = if members.len() == 1 {
                w_b
            } else {
                linalg::sub(&w_b, &mu_b)
            };
            let dn = linalg::norm(&direction);
            let mut out = outside.clone();
            if dn <= DEGENERATE_EQUALITY_TOLERANCE {
                // a lone word orthogonal to B keeps only its outside part
                if members.len() == 1 {
                    return Ok(out);
                }
                return Err(DebiasError::DegenerateEquality {
                    word: word.to_string(),
                });
            }
            linalg::axpy(scale / dn, &direction, &mut out);
            Ok(out)
        })
        .collect()
}

/// Neutralize and equalize over a whole store.
pub fn hard_debias(
    store: &EmbeddingStore,
    lexicon: &ResolvedLexicon,
    subspace: &BiasSubspace,
) -> Result<DebiasResult, DebiasError> {
    if !store.is_normalized() {
        return Err(DebiasError::NotNormalized);
    }
    if subspace.dim() != store.dim() {
        return Err(DebiasError::DimensionMismatch {
            subspace: subspace.dim(),
            store: store.dim(),
        });
    }

    let mut owner: HashMap<usize, usize> = HashMap::new();
    for (s, set) in lexicon.equality_sets.iter().enumerate() {
        for &i in &set.indices {
            if owner.insert(i, s).is_some_and(|prev| prev != s) {
                return Err(DebiasError::OverlappingEquality {
                    word: store.word(i).to_string(),
                });
            }
        }
    }

    let (candidates, strict): (Vec<usize>, bool) = match &lexicon.neutral {
        ResolvedNeutral::AllButEquality => ((0..store.len()).filter(|i| !owner.contains_key(i)).collect(), false),
        ResolvedNeutral::Explicit(set) => {
            if let Some(&i) = set.indices.iter().find(|i| owner.contains_key(i)) {
                return Err(DebiasError::NeutralInEquality {
                    word: store.word(i).to_string(),
                });
            }
            (set.indices.clone(), true)
        }
    };

    let outcomes: Vec<Result<Vec<f64>, DebiasError>> = candidates
        .par_iter()
        .map(|&i| neutralize(store.word(i), store.row(i), subspace))
        .collect();

    let dim = store.dim();
    let mut data = store.as_slice().to_vec();
    let mut neutralized = Vec::with_capacity(candidates.len());
    let mut skipped = Vec::new();
    let mut warnings = Vec::new();
    for (&i, outcome) in candidates.iter().zip(outcomes) {
        match outcome {
            Ok(v) => {
                data[i * dim..(i + 1) * dim].copy_from_slice(&v);
                neutralized.push(store.word(i).to_string());
            }
            Err(e) if !strict => {
                warnings.push(format!("{e}; left unchanged"));
                skipped.push(store.word(i).to_string());
            }
            Err(e) => return Err(e),
        }
    }

    let mut equalized = Vec::with_capacity(lexicon.equality_sets.len());
    for set in &lexicon.equality_sets {
        if set.len() == 1 {
            warnings.push(format!(
                "equality set {:?} has a single word; it keeps its own bias direction",
                set.name
            ));
        }
        let members: Vec<(&str, &[f64])> = set
            .indices
            .iter()
            .map(|&i| (store.word(i), store.row(i)))
            .collect();
        let outputs = equalize(&set.name, &members, subspace)?;
        for (&i, v) in set.indices.iter().zip(outputs) {
            data[i * dim..(i + 1) * dim].copy_from_slice(&v);
        }
        equalized.push(set.words.clone());
    }
    for w in &warnings {
        log::warn!("{w}");
    }

    let provenance = provenance(DebiasMethod::Hard, lexicon, subspace, None);
    Ok(DebiasResult {
        store: store.with_data(data),
        method: DebiasMethod::Hard,
        k: subspace.k(),
        lambda: None,
        neutralized,
        equalized,
        skipped,
        warnings,
        provenance,
    })
}

/// Words the lexicon's neutral policy selects, as store indices in vocabulary
/// order for `all-but-equality` and list order for an explicit list.
pub fn neutral_indices(store: &EmbeddingStore, lexicon: &ResolvedLexicon) -> Vec<usize> {
    match &lexicon.neutral {
        ResolvedNeutral::AllButEquality => {
            let equality: HashSet<usize> = lexicon
                .equality_sets
                .iter()
                .flat_map(|s| s.indices.iter().copied())
                .collect();
            (0..store.len()).filter(|i| !equality.contains(i)).collect()
        }
        ResolvedNeutral::Explicit(set) => set.indices.clone(),
    }
}

pub(crate) fn provenance(
    method: DebiasMethod,
    lexicon: &ResolvedLexicon,
    subspace: &BiasSubspace,
    extra: Option<serde_json::Value>,
) -> Provenance {
    let sets = |sets: &[crate::lexicon::ResolvedSet]| {
        sets.iter()
            .map(|s| (s.name.clone(), s.words.clone()))
            .collect::<Vec<_>>()
    };
    let lexicon_value = serde_json::json!({
        "defining_sets": sets(&lexicon.defining_sets),
        "equality_sets": sets(&lexicon.equality_sets),
        "neutral": match &lexicon.neutral {
            ResolvedNeutral::AllButEquality => serde_json::json!("all-but-equality"),
            ResolvedNeutral::Explicit(s) => serde_json::json!(s.words),
        },
    });
    let parameters = serde_json::json!({
        "method": method,
        "basis": subspace.basis(),
        "extra": extra,
    });
    Provenance {
        lexicon_hash: crate::report::hash_json(&lexicon_value),
        parameter_hash: crate::report::hash_json(&parameters),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::{EvalSets, Lexicon, MissingPolicy, NamedSet, NeutralPolicy};

    fn x_axis() -> BiasSubspace {
        BiasSubspace::from_orthonormal(vec![vec![1.0, 0.0]]).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn neutralize_examples() {
        let b = x_axis();
        assert!(close(&neutralize("w", &[0.6, 0.8], &b).unwrap(), &[0.0, 1.0], 1e-15));
        assert_eq!(neutralize("w", &[0.0, 1.0], &b).unwrap(), [0.0, 1.0]);
        assert_eq!(
            neutralize("he", &[1.0, 0.0], &b),
            Err(DebiasError::InsideSubspace { word: "he".into() })
        );
    }

    #[test]
    fn equalize_fixed_point() {
        let out = equalize("e", &[("a", &[0.6, 0.8]), ("b", &[-0.6, 0.8])], &x_axis()).unwrap();
        assert!(close(&out[0], &[0.6, 0.8], 1e-15));
        assert!(close(&out[1], &[-0.6, 0.8], 1e-15));
    }

    #[test]
    fn equalize_hand_example() {
        // mu = (0.2, 0.4), outside part (0, 0.4), scale sqrt(0.84)
        let out = equalize("e", &[("a", &[1.0, 0.0]), ("b", &[-0.6, 0.8])], &x_axis()).unwrap();
        let s = 0.84f64.sqrt();
        assert!(close(&out[0], &[s, 0.4], 1e-12));
        assert!(close(&out[1], &[-s, 0.4], 1e-12));
        assert!((out[0][0] - 0.91652).abs() < 1e-5);
        for v in &out {
            assert!((linalg::norm(v) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn equalize_repeated_word_is_degenerate() {
        let w: &[f64] = &[0.6, 0.8];
        assert_eq!(
            equalize("e", &[("w", w), ("w2", w)], &x_axis()),
            Err(DebiasError::DegenerateEquality { word: "w".into() })
        );
    }

    #[test]
    fn equalize_mirror_pair_is_symmetric() {
        let out = equalize("e", &[("a", &[0.28, 0.96]), ("b", &[-0.8, 0.6])], &x_axis()).unwrap();
        assert!((out[0][0] + out[1][0]).abs() < 1e-15);
        assert_eq!(out[0][1], out[1][1]);
    }

    #[test]
    fn singleton_equality_set_is_unchanged() {
        let w = [0.6, 0.8];
        let out = equalize("e", &[("w", &w)], &x_axis()).unwrap();
        assert!(close(&out[0], &w, 1e-15));
        let orth = [0.0, 1.0];
        let out = equalize("e", &[("w", &orth)], &x_axis()).unwrap();
        assert!(close(&out[0], &orth, 1e-15));
    }

    #[test]
    fn negative_radicand_is_reported() {
        let err = equalize("e", &[("a", &[0.5, 2.0]), ("b", &[-0.5, 2.0])], &x_axis()).unwrap_err();
        assert!(matches!(err, DebiasError::NegativeRadicand { .. }));
    }

    fn lexicon(neutral: NeutralPolicy, equality: Vec<NamedSet>) -> Lexicon {
        Lexicon::new(
            vec![NamedSet::new("g", &["he", "she"])],
            Some(equality),
            neutral,
            EvalSets::default(),
            vec![],
        )
        .unwrap()
    }

    fn toy_store() -> EmbeddingStore {
        EmbeddingStore::from_rows([
            ("he", vec![0.8, 0.6]),
            ("she", vec![-0.6, 0.8]),
            ("doctor", vec![0.28, 0.96]),
            ("male", vec![1.0, 0.0]),
        ])
        .unwrap()
    }

    #[test]
    fn explicit_empty_policy_without_equality_is_identity() {
        let store = toy_store();
        let lex = Lexicon::from_json(
            r#"{"defining_sets": [{"name": "g", "words": ["he", "she"]}], "equality_sets": [], "neutral": []}"#,
        )
        .unwrap();
        let r = lex.resolve(&store, MissingPolicy::Error).unwrap();
        let out = hard_debias(&store, &r, &x_axis()).unwrap();
        assert_eq!(out.store, store);
        assert!(out.neutralized.is_empty());
    }

    #[test]
    fn all_but_equality_skips_words_inside_subspace() {
        let store = toy_store();
        let lex = lexicon(NeutralPolicy::AllButEquality, vec![NamedSet::new("g", &["he", "she"])]);
        let r = lex.resolve(&store, MissingPolicy::Error).unwrap();
        let out = hard_debias(&store, &r, &x_axis()).unwrap();
        assert_eq!(out.neutralized, ["doctor"]);
        assert_eq!(out.skipped, ["male"]);
        assert_eq!(out.store.vector("male").unwrap(), [1.0, 0.0]);
        assert_eq!(out.store.vector("doctor").unwrap(), [0.0, 1.0]);
        let he = out.store.vector("he").unwrap();
        let she = out.store.vector("she").unwrap();
        let doctor = out.store.vector("doctor").unwrap();
        assert!((linalg::dot(doctor, he) - linalg::dot(doctor, she)).abs() < 1e-12);
    }

    #[test]
    fn explicit_policy_fails_on_word_inside_subspace() {
        let store = toy_store();
        let lex = lexicon(
            NeutralPolicy::Explicit(vec!["doctor".into(), "male".into()]),
            vec![NamedSet::new("g", &["he", "she"])],
        );
        let r = lex.resolve(&store, MissingPolicy::Error).unwrap();
        assert_eq!(
            hard_debias(&store, &r, &x_axis()).unwrap_err(),
            DebiasError::InsideSubspace { word: "male".into() }
        );
    }

    #[test]
    fn overlapping_sets_and_neutral_conflicts_are_rejected() {
        let store = toy_store();
        let lex = lexicon(
            NeutralPolicy::AllButEquality,
            vec![NamedSet::new("a", &["he", "she"]), NamedSet::new("b", &["she", "doctor"])],
        );
        let r = lex.resolve(&store, MissingPolicy::Error).unwrap();
        assert!(matches!(
            hard_debias(&store, &r, &x_axis()),
            Err(DebiasError::OverlappingEquality { .. })
        ));
        let lex = lexicon(
            NeutralPolicy::Explicit(vec!["he".into()]),
            vec![NamedSet::new("g", &["he", "she"])],
        );
        let r = lex.resolve(&store, MissingPolicy::Error).unwrap();
        assert!(matches!(
            hard_debias(&store, &r, &x_axis()),
            Err(DebiasError::NeutralInEquality { .. })
        ));
    }

    #[test]
    fn requires_normalized_store() {
        let store = EmbeddingStore::from_rows([("he", vec![2.0, 0.0]), ("she", vec![0.0, 1.0])]).unwrap();
        let lex = lexicon(NeutralPolicy::AllButEquality, vec![NamedSet::new("g", &["he", "she"])]);
        let r = lex.resolve(&store, MissingPolicy::Error).unwrap();
        assert_eq!(hard_debias(&store, &r, &x_axis()).unwrap_err(), DebiasError::NotNormalized);
    }
}
