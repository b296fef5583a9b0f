//! Lexicon bundles: defining sets, equality sets, the neutral-word policy,
//! MAC evaluation sets and analogy seeds.
//!
//! ```json
//! {
//!   "defining_sets": [{"name": "pronouns", "words": ["he", "she"]}],
//!   "equality_sets": [{"name": "pronouns", "words": ["he", "she"]}],
//!   "neutral": "all-but-equality",
//!   "eval": {"targets": [...], "attributes": [...]},
//!   "analogy_seeds": [["man", "woman"]]
//! }
//! ```
//!
//! `equality_sets` defaults to a copy of `defining_sets`; `neutral` is either
//! the keyword `"all-but-equality"` or an explicit word list.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::EmbeddingStore;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("lexicon schema violation: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("lexicon has no defining sets")]
    NoDefiningSets,
    #[error("{kind} set {name:?} is empty")]
    EmptySet { kind: SetKind, name: String },
    #[error("{kind} set {name:?} lists {token:?} more than once")]
    DuplicateToken {
        kind: SetKind,
        name: String,
        token: String,
    },
    #[error("neutral policy must be \"all-but-equality\" or a word list, got {0:?}")]
    BadNeutralKeyword(String),
    #[error("analogy seed ({0:?}, {0:?}) pairs a word with itself")]
    DegenerateSeed(String),
    #[error("tokens missing from the vocabulary: {}", format_missing(.0))]
    MissingTokens(Vec<MissingToken>),
    #[error("{kind} set {name:?} is empty after skipping out-of-vocabulary tokens")]
    EmptyAfterSkip { kind: SetKind, name: String },
}

fn format_missing(missing: &[MissingToken]) -> String {
    missing
        .iter()
        .map(|m| format!("{:?} ({} set {:?})", m.token, m.kind, m.set))
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetKind {
    Defining,
    Equality,
    Neutral,
    Target,
    Attribute,
    AnalogySeed,
}

impl std::fmt::Display for SetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SetKind::Defining => "defining",
            SetKind::Equality => "equality",
            SetKind::Neutral => "neutral",
            SetKind::Target => "target",
            SetKind::Attribute => "attribute",
            SetKind::AnalogySeed => "analogy-seed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissingToken {
    pub kind: SetKind,
    pub set: String,
    pub token: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedSet {
    pub name: String,
    pub words: Vec<String>,
}

impl NamedSet {
    pub fn new(name: impl Into<String>, words: &[&str]) -> Self {
        Self {
            name: name.into(),
            words: words.iter().map(|w| w.to_string()).collect(),
        }
    }
}

/// Which words hard/soft debiasing treats as bias-neutral.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum NeutralPolicy {
    /// Every vocabulary word outside the equality sets.
    #[default]
    AllButEquality,
    Explicit(Vec<String>),
}

const ALL_BUT_EQUALITY: &str = "all-but-equality";

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NeutralRepr {
    Keyword(String),
    List(Vec<String>),
}

impl Serialize for NeutralPolicy {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            NeutralPolicy::AllButEquality => serializer.serialize_str(ALL_BUT_EQUALITY),
            NeutralPolicy::Explicit(words) => words.serialize(serializer),
        }
    }
}

impl<'de> Deserialize<'de> for NeutralPolicy {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        match NeutralRepr::deserialize(deserializer)? {
            NeutralRepr::Keyword(k) if k == ALL_BUT_EQUALITY => Ok(NeutralPolicy::AllButEquality),
            NeutralRepr::Keyword(k) => Err(serde::de::Error::custom(
                LexiconError::BadNeutralKeyword(k).to_string(),
            )),
            NeutralRepr::List(words) => Ok(NeutralPolicy::Explicit(words)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSets {
    #[serde(default)]
    pub targets: Vec<NamedSet>,
    #[serde(default)]
    pub attributes: Vec<NamedSet>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lexicon {
    pub defining_sets: Vec<NamedSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    equality_sets: Option<Vec<NamedSet>>,
    #[serde(default)]
    pub neutral: NeutralPolicy,
    #[serde(default)]
    pub eval: EvalSets,
    #[serde(default)]
    pub analogy_seeds: Vec<(String, String)>,
}

impl Lexicon {
    pub fn new(
        defining_sets: Vec<NamedSet>,
        equality_sets: Option<Vec<NamedSet>>,
        neutral: NeutralPolicy,
        eval: EvalSets,
        analogy_seeds: Vec<(String, String)>,
    ) -> Result<Self, LexiconError> {
        let mut lexicon = Self {
            defining_sets,
            equality_sets,
            neutral,
            eval,
            analogy_seeds,
        };
        lexicon.finish()?;
        Ok(lexicon)
    }

    pub fn from_json(text: &str) -> Result<Self, LexiconError> {
        let mut lexicon: Lexicon = serde_json::from_str(text)?;
        lexicon.finish()?;
        Ok(lexicon)
    }

    pub fn parse_file(path: impl AsRef<Path>) -> Result<Self, LexiconError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| LexiconError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("lexicon serialization is infallible")
    }

    /// Equality sets; the defining sets when none were given.
    pub fn equality_sets(&self) -> &[NamedSet] {
        self.equality_sets.as_deref().unwrap_or(&self.defining_sets)
    }

    /// Copy with every token lowercased, re-validated.
    pub fn lowercased(&self) -> Result<Self, LexiconError> {
        let lower_set = |s: &NamedSet| NamedSet {
            name: s.name.clone(),
            words: s.words.iter().map(|w| w.to_lowercase()).collect(),
        };
        let lower_sets = |sets: &[NamedSet]| sets.iter().map(lower_set).collect::<Vec<_>>();
        Self::new(
            lower_sets(&self.defining_sets),
            self.equality_sets.as_deref().map(lower_sets),
            match &self.neutral {
                NeutralPolicy::AllButEquality => NeutralPolicy::AllButEquality,
                NeutralPolicy::Explicit(words) => {
                    NeutralPolicy::Explicit(words.iter().map(|w| w.to_lowercase()).collect())
                }
            },
            EvalSets {
                targets: lower_sets(&self.eval.targets),
                attributes: lower_sets(&self.eval.attributes),
            },
            self.analogy_seeds
                .iter()
                .map(|(a, b)| (a.to_lowercase(), b.to_lowercase()))
                .collect(),
        )
    }

    fn finish(&mut self) -> Result<(), LexiconError> {
        if self.defining_sets.is_empty() {
            return Err(LexiconError::NoDefiningSets);
        }
        if self.equality_sets.is_none() {
            self.equality_sets = Some(self.defining_sets.clone());
        }
        let groups = [
            (SetKind::Defining, &self.defining_sets[..]),
            (SetKind::Equality, self.equality_sets()),
            (SetKind::Target, &self.eval.targets[..]),
            (SetKind::Attribute, &self.eval.attributes[..]),
        ];
        for (kind, sets) in groups {
            for set in sets {
                validate_set(kind, &set.name, &set.words, false)?;
            }
        }
        if let NeutralPolicy::Explicit(words) = &self.neutral {
            validate_set(SetKind::Neutral, "neutral", words, true)?;
        }
        if let Some((a, _)) = self.analogy_seeds.iter().find(|(a, b)| a == b) {
            return Err(LexiconError::DegenerateSeed(a.clone()));
        }
        Ok(())
    }

    /// Replaces tokens by store row indices.
    pub fn resolve(
        &self,
        store: &EmbeddingStore,
        policy: MissingPolicy,
    ) -> Result<ResolvedLexicon, LexiconError> {
        let mut r = Resolver {
            store,
            missing: Vec::new(),
            warnings: Vec::new(),
        };
        let defining_sets = r.sets(SetKind::Defining, &self.defining_sets);
        let equality_sets = r.sets(SetKind::Equality, self.equality_sets());
        let neutral = match &self.neutral {
            NeutralPolicy::AllButEquality => ResolvedNeutral::AllButEquality,
            NeutralPolicy::Explicit(words) => {
                ResolvedNeutral::Explicit(r.set(SetKind::Neutral, "neutral", words))
            }
        };
        let targets = r.sets(SetKind::Target, &self.eval.targets);
        let attributes = r.sets(SetKind::Attribute, &self.eval.attributes);
        let mut analogy_seeds = Vec::new();
        for (a, b) in &self.analogy_seeds {
            let label = format!("{a}:{b}");
            let ia = r.lookup(SetKind::AnalogySeed, &label, a);
            let ib = r.lookup(SetKind::AnalogySeed, &label, b);
            if let (Some(ia), Some(ib)) = (ia, ib) {
                analogy_seeds.push((ia, ib));
            }
        }

        if policy == MissingPolicy::Error && !r.missing.is_empty() {
            return Err(LexiconError::MissingTokens(r.missing));
        }
        let nonempty = |kind, sets: &[ResolvedSet]| -> Result<(), LexiconError> {
            match sets.iter().find(|s| s.is_empty()) {
                Some(s) => Err(LexiconError::EmptyAfterSkip {
                    kind,
                    name: s.name.clone(),
                }),
                None => Ok(()),
            }
        };
        nonempty(SetKind::Defining, &defining_sets)?;
        nonempty(SetKind::Equality, &equality_sets)?;
        nonempty(SetKind::Target, &targets)?;
        nonempty(SetKind::Attribute, &attributes)?;
        if let (ResolvedNeutral::Explicit(set), NeutralPolicy::Explicit(words)) = (&neutral, &self.neutral) {
            if set.is_empty() && !words.is_empty() {
                return Err(LexiconError::EmptyAfterSkip {
                    kind: SetKind::Neutral,
                    name: set.name.clone(),
                });
            }
        }
        for m in &r.missing {
            r.warnings.push(format!(
                "skipped out-of-vocabulary token {:?} in {} set {:?}",
                m.token, m.kind, m.set
            ));
        }
        for w in &r.warnings {
            log::warn!("{w}");
        }
        Ok(ResolvedLexicon {
            defining_sets,
            equality_sets,
            neutral,
            targets,
            attributes,
            analogy_seeds,
            warnings: r.warnings,
        })
    }
}

fn validate_set(kind: SetKind, name: &str, words: &[String], allow_empty: bool) -> Result<(), LexiconError> {
    if words.is_empty() && !allow_empty {
        return Err(LexiconError::EmptySet {
            kind,
            name: name.to_string(),
        });
    }
    let mut seen = HashSet::with_capacity(words.len());
    for w in words {
        if !seen.insert(w.as_str()) {
            return Err(LexiconError::DuplicateToken {
                kind,
                name: name.to_string(),
                token: w.clone(),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingPolicy {
    #[default]
    Error,
    Skip,
}

/// A named set whose tokens were found in a store.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedSet {
    pub name: String,
    pub words: Vec<String>,
    pub indices: Vec<usize>,
}

impl ResolvedSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResolvedNeutral {
    AllButEquality,
    Explicit(ResolvedSet),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedLexicon {
    pub defining_sets: Vec<ResolvedSet>,
    pub equality_sets: Vec<ResolvedSet>,
    pub neutral: ResolvedNeutral,
    pub targets: Vec<ResolvedSet>,
    pub attributes: Vec<ResolvedSet>,
    pub analogy_seeds: Vec<(usize, usize)>,
    /// One entry per skipped token.
    pub warnings: Vec<String>,
}

struct Resolver<'a> {
    store: &'a EmbeddingStore,
    missing: Vec<MissingToken>,
    warnings: Vec<String>,
}

impl Resolver<'_> {
    fn lookup(&mut self, kind: SetKind, set: &str, token: &str) -> Option<usize> {
        let found = self.store.index_of(token);
        if found.is_none() {
            self.missing.push(MissingToken {
                kind,
                set: set.to_string(),
                token: token.to_string(),
            });
        }
        found
    }

    fn set(&mut self, kind: SetKind, name: &str, words: &[String]) -> ResolvedSet {
        let mut kept = Vec::with_capacity(words.len());
        let mut indices = Vec::with_capacity(words.len());
        for w in words {
            if let Some(i) = self.lookup(kind, name, w) {
                kept.push(w.clone());
                indices.push(i);
            }
        }
        ResolvedSet {
            name: name.to_string(),
            words: kept,
            indices,
        }
    }

    fn sets(&mut self, kind: SetKind, sets: &[NamedSet]) -> Vec<ResolvedSet> {
        sets.iter().map(|s| self.set(kind, &s.name, &s.words)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RELIGION: &str = r#"{
        "defining_sets": [{"name": "religion", "words": ["jew", "christian", "muslim"]}],
        "eval": {
            "targets": [{"name": "places", "words": ["church", "synagogue", "mosque"]}],
            "attributes": [{"name": "politics", "words": ["violent", "liberal", "conservative"]}]
        },
        "analogy_seeds": [["jew", "muslim"]]
    }"#;

    fn store(words: &[&str]) -> EmbeddingStore {
        EmbeddingStore::from_rows(
            words
                .iter()
                .enumerate()
                .map(|(i, w)| (*w, vec![1.0, i as f64])),
        )
        .unwrap()
    }

    #[test]
    fn parses_religion_sample_and_defaults_equality_sets() {
        let lex = Lexicon::from_json(RELIGION).unwrap();
        assert_eq!(lex.defining_sets[0].words, ["jew", "christian", "muslim"]);
        assert_eq!(lex.eval.targets[0].words, ["church", "synagogue", "mosque"]);
        assert_eq!(lex.equality_sets(), &lex.defining_sets[..]);
        assert_eq!(lex.neutral, NeutralPolicy::AllButEquality);
    }

    #[test]
    fn serialize_parse_is_a_fixed_point() {
        let lex = Lexicon::from_json(RELIGION).unwrap();
        let again = Lexicon::from_json(&lex.to_json()).unwrap();
        assert_eq!(again, lex);
        assert_eq!(again.to_json(), lex.to_json());
    }

    #[test]
    fn explicit_neutral_list_round_trips() {
        let text = r#"{"defining_sets": [{"name": "g", "words": ["he", "she"]}], "neutral": ["doctor", "nurse"]}"#;
        let lex = Lexicon::from_json(text).unwrap();
        assert_eq!(
            lex.neutral,
            NeutralPolicy::Explicit(vec!["doctor".into(), "nurse".into()])
        );
        assert_eq!(Lexicon::from_json(&lex.to_json()).unwrap(), lex);
    }

    #[test]
    fn rejects_invalid_lexicons() {
        let empty = r#"{"defining_sets": [{"name": "g", "words": []}]}"#;
        assert!(matches!(
            Lexicon::from_json(empty),
            Err(LexiconError::EmptySet { kind: SetKind::Defining, .. })
        ));
        let dup = r#"{"defining_sets": [{"name": "g", "words": ["he", "he"]}]}"#;
        assert!(matches!(
            Lexicon::from_json(dup),
            Err(LexiconError::DuplicateToken { .. })
        ));
        let keyword = r#"{"defining_sets": [{"name": "g", "words": ["he"]}], "neutral": "everything"}"#;
        assert!(matches!(Lexicon::from_json(keyword), Err(LexiconError::Schema(_))));
        let unknown = r#"{"defining_sets": [{"name": "g", "words": ["he"]}], "extra": 1}"#;
        assert!(matches!(Lexicon::from_json(unknown), Err(LexiconError::Schema(_))));
        assert!(matches!(
            Lexicon::from_json(r#"{"defining_sets": []}"#),
            Err(LexiconError::NoDefiningSets)
        ));
    }

    #[test]
    fn resolve_keeps_set_order() {
        let lex = Lexicon::from_json(RELIGION).unwrap();
        let s = store(&[
            "mosque", "church", "synagogue", "muslim", "jew", "christian", "violent", "liberal",
            "conservative",
        ]);
        let r = lex.resolve(&s, MissingPolicy::Error).unwrap();
        assert_eq!(r.defining_sets[0].indices, [4, 5, 3]);
        assert_eq!(r.targets[0].indices, [1, 2, 0]);
        assert_eq!(r.analogy_seeds, [(4, 3)]);
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn resolve_missing_token_policies() {
        let lex = Lexicon::from_json(RELIGION).unwrap();
        let s = store(&[
            "church", "synagogue", "muslim", "jew", "christian", "violent", "liberal",
            "conservative",
        ]);
        let err = lex.resolve(&s, MissingPolicy::Error).unwrap_err();
        assert!(err.to_string().contains("\"mosque\""));
        let r = lex.resolve(&s, MissingPolicy::Skip).unwrap();
        assert_eq!(r.targets[0].words, ["church", "synagogue"]);
        assert_eq!(r.warnings.len(), 1);
        assert!(r.warnings[0].contains("mosque"));
    }

    #[test]
    fn fully_missing_set_is_an_error_even_when_skipping() {
        let lex = Lexicon::from_json(RELIGION).unwrap();
        let s = store(&["church", "synagogue", "mosque", "violent", "liberal", "conservative"]);
        assert!(matches!(
            lex.resolve(&s, MissingPolicy::Skip),
            Err(LexiconError::EmptyAfterSkip { kind: SetKind::Defining, .. })
        ));
    }

    #[test]
    fn lowercasing_revalidates() {
        let text = r#"{"defining_sets": [{"name": "g", "words": ["He", "he"]}]}"#;
        let lex = Lexicon::from_json(text).unwrap();
        assert!(matches!(lex.lowercased(), Err(LexiconError::DuplicateToken { .. })));
    }
}
