//! Vocabulary-indexed embedding matrix: loading, querying and persistence.
//!
//! Rows are held as a flat row-major `Vec<f64>` regardless of the on-disk
//! precision. A store is immutable once built; every transforming operation
//! returns a new store.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::linalg;

/// Tolerance on row norms for a store to count as unit-normalized.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed header, expected \"<vocab-size> <dimension>\"")]
    BadHeader { line: usize },
    #[error("line {line}: dimension mismatch, expected {expected} values but found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: duplicate token {token:?}")]
    DuplicateToken { line: usize, token: String },
    #[error("line {line}: cannot parse {value:?} as a number")]
    BadNumber { line: usize, value: String },
    #[error("line {line}: non-finite value in the vector of {token:?}")]
    NonFinite { line: usize, token: String },
    #[error("header declares {declared} words but the file contains {found}")]
    CountMismatch { declared: usize, found: usize },
    #[error("embedding file contains no vectors")]
    Empty,
    #[error("word {word:?} has a zero-norm vector")]
    ZeroNorm { word: String },
    #[error("query vector has zero norm")]
    ZeroQuery,
    #[error("expected vectors of dimension {expected}, got {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("duplicate token {0:?}")]
    Duplicate(String),
    #[error("non-finite value in the vector of {0:?}")]
    NonFiniteRow(String),
}

/// On-disk text layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextFormat {
    /// word2vec text: a `"<V> <D>"` header line followed by V vector lines.
    Word2VecHeader,
    /// Vector lines only; the dimension is taken from the first line.
    Headerless,
}

/// A token together with its embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVector {
    pub word: String,
    pub vector: Vec<f64>,
}

/// One result of a nearest-neighbour query.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub word: String,
    pub similarity: f64,
}

#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
    dim: usize,
    norms: Vec<f64>,
    normalized: bool,
}

impl PartialEq for EmbeddingStore {
    /// Bit-exact comparison of vocabulary and matrix.
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.vocab == other.vocab
            && self.data.len() == other.data.len()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl EmbeddingStore {
    /// Builds a store from `(token, vector)` pairs, keeping their order.
    pub fn from_rows<I, S>(rows: I) -> Result<Self, StoreError>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        let mut vocab = Vec::new();
        let mut data = Vec::new();
        let mut dim = None;
        for (word, vector) in rows {
            let word = word.into();
            let expected = *dim.get_or_insert(vector.len());
            if vector.len() != expected {
                return Err(StoreError::ShapeMismatch {
                    expected,
                    found: vector.len(),
                });
            }
            if vector.iter().any(|x| !x.is_finite()) {
                return Err(StoreError::NonFiniteRow(word));
            }
            vocab.push(word);
            data.extend_from_slice(&vector);
        }
        Self::from_parts(vocab, data, dim.unwrap_or(0))
    }

    /// Builds a store from a vocabulary and a row-major matrix.
    pub fn from_parts(vocab: Vec<String>, data: Vec<f64>, dim: usize) -> Result<Self, StoreError> {
        if data.len() != vocab.len() * dim {
            return Err(StoreError::ShapeMismatch {
                expected: vocab.len() * dim,
                found: data.len(),
            });
        }
        let mut index = HashMap::with_capacity(vocab.len());
        for (i, word) in vocab.iter().enumerate() {
            if index.insert(word.clone(), i).is_some() {
                return Err(StoreError::Duplicate(word.clone()));
            }
        }
        if dim > 0 {
            if let Some(i) = data
                .chunks_exact(dim)
                .position(|row| row.iter().any(|x| !x.is_finite()))
            {
                return Err(StoreError::NonFiniteRow(vocab[i].clone()));
            }
        }
        Ok(Self::assemble(vocab, index, data, dim))
    }

    fn assemble(vocab: Vec<String>, index: HashMap<String, usize>, data: Vec<f64>, dim: usize) -> Self {
        let norms: Vec<f64> = if dim == 0 {
            vec![0.0; vocab.len()]
        } else {
            data.chunks_exact(dim).map(linalg::norm).collect()
        };
        let normalized = !vocab.is_empty()
            && norms
                .iter()
                .all(|n| (n - 1.0).abs() <= UNIT_NORM_TOLERANCE);
        Self {
            vocab,
            index,
            data,
            dim,
            norms,
            normalized,
        }
    }

    /// Same vocabulary, new matrix. The caller guarantees shape and finiteness.
    pub(crate) fn with_data(&self, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        debug_assert!(data.iter().all(|x| x.is_finite()));
        Self::assemble(self.vocab.clone(), self.index.clone(), data, self.dim)
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Whether every row has unit Euclidean norm (within [`UNIT_NORM_TOLERANCE`]).
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn word(&self, i: usize) -> &str {
        &self.vocab[i]
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        // chunks_exact panics on a zero chunk size
        self.data.chunks_exact(self.dim.max(1)).take(self.vocab.len())
    }

    pub fn norm(&self, i: usize) -> f64 {
        self.norms[i]
    }

    pub fn vector(&self, word: &str) -> Option<&[f64]> {
        self.index_of(word).map(|i| self.row(i))
    }

    pub fn get(&self, word: &str) -> Option<WordVector> {
        self.vector(word).map(|v| WordVector {
            word: word.to_string(),
            vector: v.to_vec(),
        })
    }

    /// Row-major matrix, `len() * dim()` values.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Divides every row by its Euclidean norm.
    pub fn normalize_all(&self) -> Result<Self, StoreError> {
        if let Some(i) = self.norms.iter().position(|&n| n == 0.0) {
            return Err(StoreError::ZeroNorm {
                word: self.vocab[i].clone(),
            });
        }
        let mut data = self.data.clone();
        for (row, &n) in data.chunks_exact_mut(self.dim).zip(&self.norms) {
            row.iter_mut().for_each(|x| *x /= n);
        }
        Ok(self.with_data(data))
    }

    /// Top-`m` words by cosine similarity to `query`, descending.
    ///
    /// Ties are broken by ascending token order. Words in `exclude` and
    /// zero-norm rows are never returned.
    pub fn nearest_neighbors(
        &self,
        query: &[f64],
        m: usize,
        exclude: &HashSet<String>,
    ) -> Result<Vec<Neighbor>, StoreError> {
        if query.len() != self.dim {
            return Err(StoreError::ShapeMismatch {
                expected: self.dim,
                found: query.len(),
            });
        }
        let qn = linalg::norm(query);
        if qn == 0.0 {
            return Err(StoreError::ZeroQuery);
        }
        let mut scored: Vec<(usize, f64)> = (0..self.len())
            .into_par_iter()
            .filter(|&i| self.norms[i] > 0.0 && !exclude.contains(&self.vocab[i]))
            .map(|i| {
                let sim = linalg::dot(self.row(i), query) / (self.norms[i] * qn);
                (i, sim.clamp(-1.0, 1.0))
            })
            .collect();
        let by_rank = |a: &(usize, f64), b: &(usize, f64)| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.vocab[a.0].cmp(&self.vocab[b.0]))
        };
        if m < scored.len() {
            scored.select_nth_unstable_by(m, by_rank);
            scored.truncate(m);
        }
        scored.sort_by(by_rank);
        Ok(scored
            .into_iter()
            .map(|(i, similarity)| Neighbor {
                word: self.vocab[i].clone(),
                similarity,
            })
            .collect())
    }

    /// Parses embeddings from text.
    pub fn parse_text(text: &str, format: TextFormat) -> Result<Self, StoreError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| !l.trim().is_empty());

        let declared = match format {
            TextFormat::Word2VecHeader => {
                let (line, header) = lines.next().ok_or(StoreError::Empty)?;
                let fields: Vec<&str> = header.split_ascii_whitespace().collect();
                let parse = |s: &str| s.parse::<usize>().map_err(|_| StoreError::BadHeader { line });
                if fields.len() != 2 {
                    return Err(StoreError::BadHeader { line });
                }
                Some((parse(fields[0])?, parse(fields[1])?))
            }
            TextFormat::Headerless => None,
        };

        let mut dim = declared.map(|(_, d)| d);
        let mut vocab = Vec::with_capacity(declared.map_or(0, |(v, _)| v));
        let mut index = HashMap::with_capacity(vocab.capacity());
        let mut data = Vec::new();
        for (line, content) in lines {
            let mut fields = content.split_ascii_whitespace();
            let token = fields.next().unwrap_or_default();
            let start = data.len();
            for value in fields {
                let x: f64 = value.parse().map_err(|_| StoreError::BadNumber {
                    line,
                    value: value.to_string(),
                })?;
                if !x.is_finite() {
                    return Err(StoreError::NonFinite {
                        line,
                        token: token.to_string(),
                    });
                }
                data.push(x);
            }
            let found = data.len() - start;
            let expected = *dim.get_or_insert(found);
            if found != expected || found == 0 {
                return Err(StoreError::DimensionMismatch {
                    line,
                    expected,
                    found,
                });
            }
            if index.insert(token.to_string(), vocab.len()).is_some() {
                return Err(StoreError::DuplicateToken {
                    line,
                    token: token.to_string(),
                });
            }
            vocab.push(token.to_string());
        }

        if let Some((declared, _)) = declared {
            if declared != vocab.len() {
                return Err(StoreError::CountMismatch {
                    declared,
                    found: vocab.len(),
                });
            }
        }
        if vocab.is_empty() {
            return Err(StoreError::Empty);
        }
        Ok(Self::assemble(vocab, index, data, dim.unwrap_or(0)))
    }

    pub fn load_text(path: impl AsRef<Path>, format: TextFormat) -> Result<Self, StoreError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_text(&text, format)
    }

    /// Serializes with 17 significant digits per value, which reloads bit-exactly.
    pub fn to_text(&self, format: TextFormat) -> String {
        let mut out = String::with_capacity(self.data.len() * 25);
        if format == TextFormat::Word2VecHeader {
            let _ = writeln!(out, "{} {}", self.len(), self.dim);
        }
        for (word, row) in self.vocab.iter().zip(self.rows()) {
            out.push_str(word);
            for x in row {
                let _ = write!(out, " {x:.16e}");
            }
            out.push('\n');
        }
        out
    }

    /// Atomically writes the store to `path`.
    pub fn save_text(&self, path: impl AsRef<Path>, format: TextFormat) -> std::io::Result<()> {
        crate::report::write_atomic(path.as_ref(), self.to_text(format).as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> EmbeddingStore {
        EmbeddingStore::from_rows([
            ("a", vec![1.0, 0.0]),
            ("b", vec![0.9, 0.1]),
            ("c", vec![0.0, 1.0]),
        ])
        .unwrap()
    }

    #[test]
    fn parses_header_format() {
        let s = EmbeddingStore::parse_text("2 3\na 1 0 0\nb 0 1 0", TextFormat::Word2VecHeader).unwrap();
        assert_eq!(s.dim(), 3);
        assert_eq!(s.len(), 2);
        assert_eq!(s.vocab(), ["a", "b"]);
        assert_eq!(s.vector("b").unwrap(), [0.0, 1.0, 0.0]);
    }

    #[test]
    fn headerless_infers_dimension() {
        let s = EmbeddingStore::parse_text("x 1 2\ny 3 4\n", TextFormat::Headerless).unwrap();
        assert_eq!((s.len(), s.dim()), (2, 2));
    }

    #[test]
    fn dimension_mismatch_names_line() {
        let err = EmbeddingStore::parse_text("1 2\na 1 0 0", TextFormat::Word2VecHeader).unwrap_err();
        assert!(matches!(
            err,
            StoreError::DimensionMismatch { line: 2, expected: 2, found: 3 }
        ));
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn malformed_inputs_have_distinct_errors() {
        let dup = EmbeddingStore::parse_text("2 1\na 1\na 2", TextFormat::Word2VecHeader).unwrap_err();
        assert!(matches!(dup, StoreError::DuplicateToken { line: 3, .. }));
        let nan = EmbeddingStore::parse_text("a 1 NaN", TextFormat::Headerless).unwrap_err();
        assert!(matches!(nan, StoreError::NonFinite { line: 1, .. }));
        let inf = EmbeddingStore::parse_text("a 1 inf", TextFormat::Headerless).unwrap_err();
        assert!(matches!(inf, StoreError::NonFinite { line: 1, .. }));
        let count = EmbeddingStore::parse_text("3 1\na 1\nb 2", TextFormat::Word2VecHeader).unwrap_err();
        assert!(matches!(count, StoreError::CountMismatch { declared: 3, found: 2 }));
        let bad = EmbeddingStore::parse_text("a 1 x", TextFormat::Headerless).unwrap_err();
        assert!(matches!(bad, StoreError::BadNumber { line: 1, .. }));
        let header = EmbeddingStore::parse_text("a 1 2\n", TextFormat::Word2VecHeader).unwrap_err();
        assert!(matches!(header, StoreError::BadHeader { line: 1 }));
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let s = EmbeddingStore::from_rows([
            ("α", vec![0.1, -0.0, 1.0 / 3.0]),
            ("b", vec![1e-300, -2.5e17, std::f64::consts::PI]),
        ])
        .unwrap();
        for format in [TextFormat::Word2VecHeader, TextFormat::Headerless] {
            let back = EmbeddingStore::parse_text(&s.to_text(format), format).unwrap();
            assert_eq!(back, s);
        }
    }

    #[test]
    fn normalize_three_four_five() {
        let s = EmbeddingStore::from_rows([("w", vec![3.0, 4.0])]).unwrap();
        assert!(!s.is_normalized());
        let n = s.normalize_all().unwrap();
        assert!(n.is_normalized());
        assert!((n.row(0)[0] - 0.6).abs() < 1e-15);
        assert!((n.row(0)[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn normalize_keeps_unit_rows_and_is_idempotent() {
        let s = EmbeddingStore::from_rows([("u", vec![0.6, 0.8]), ("v", vec![1.0, 0.0])]).unwrap();
        let n = s.normalize_all().unwrap();
        let nn = n.normalize_all().unwrap();
        for (a, b) in s.as_slice().iter().zip(nn.as_slice()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn normalize_rejects_zero_row() {
        let s = EmbeddingStore::from_rows([("ok", vec![1.0, 0.0]), ("zero", vec![0.0, 0.0])]).unwrap();
        match s.normalize_all() {
            Err(StoreError::ZeroNorm { word }) => assert_eq!(word, "zero"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nearest_neighbors_hand_cosines() {
        let s = toy();
        let exclude = HashSet::from(["a".to_string()]);
        let nn = s.nearest_neighbors(s.vector("a").unwrap(), 2, &exclude).unwrap();
        assert_eq!(nn.len(), 2);
        assert_eq!(nn[0].word, "b");
        // 0.9 / sqrt(0.82)
        assert!((nn[0].similarity - 0.993_883_734_673_619_6).abs() < 1e-12);
        assert_eq!(nn[1].word, "c");
        assert_eq!(nn[1].similarity, 0.0);
    }

    #[test]
    fn nearest_neighbors_boundaries() {
        let s = toy();
        let all = s.nearest_neighbors(&[1.0, 1.0], 50, &HashSet::new()).unwrap();
        assert_eq!(all.len(), 3);
        let ties = EmbeddingStore::from_rows([("zz", vec![1.0, 0.0]), ("aa", vec![1.0, 0.0])]).unwrap();
        let nn = ties.nearest_neighbors(&[1.0, 0.0], 2, &HashSet::new()).unwrap();
        assert_eq!(nn[0].word, "aa");
        assert!(matches!(
            s.nearest_neighbors(&[0.0, 0.0], 1, &HashSet::new()),
            Err(StoreError::ZeroQuery)
        ));
    }

    #[test]
    fn nearest_neighbors_is_deterministic() {
        let s = toy();
        let q = [0.3, 0.7];
        let first = s.nearest_neighbors(&q, 2, &HashSet::new()).unwrap();
        for _ in 0..5 {
            assert_eq!(s.nearest_neighbors(&q, 2, &HashSet::new()).unwrap(), first);
        }
    }

    #[test]
    fn construction_rejects_duplicates_and_nan() {
        assert!(matches!(
            EmbeddingStore::from_rows([("a", vec![1.0]), ("a", vec![2.0])]),
            Err(StoreError::Duplicate(_))
        ));
        assert!(matches!(
            EmbeddingStore::from_rows([("a", vec![f64::NAN])]),
            Err(StoreError::NonFiniteRow(_))
        ));
    }
}
