//! Mean average cosine distance (MAC) between bias targets and attribute sets.
//!
//! For target set `T_i` and attribute set `A_j` the cell value is the mean,
//! over target words `t`, of `S(t, A_j) = mean_{a in A_j} (1 - cos(t, a))`.
//! MAC is the plain mean over all `|T| * |A|` cells. Values near 1 mean the
//! targets are, on average, orthogonal to the attributes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::ResolvedSet;
use crate::linalg;
use crate::stats::{self, StatsError, TTestResult};
use crate::store::EmbeddingStore;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("cosine distance is undefined for a zero vector")]
    ZeroVector,
    #[error("vectors have different dimensions ({0} and {1})")]
    DimensionMismatch(usize, usize),
    #[error("attribute set {0:?} is empty")]
    EmptyAttributes(String),
    #[error("target set {0:?} is empty")]
    EmptyTargets(String),
    #[error("MAC needs at least one target set and one attribute set")]
    NoCells,
    #[error("reports have different target/attribute structure")]
    StructureMismatch,
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// `1 - cos(u, v)`, in `[0, 2]`.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64, EvalError> {
    if u.len() != v.len() {
        return Err(EvalError::DimensionMismatch(u.len(), v.len()));
    }
    let cos = linalg::cosine_similarity(u, v).ok_or(EvalError::ZeroVector)?;
    Ok((1.0 - cos).clamp(0.0, 2.0))
}

/// Mean cosine distance from `target` to each attribute vector.
pub fn s_value(target: &[f64], attributes: &[&[f64]]) -> Result<f64, EvalError> {
    if attributes.is_empty() {
        return Err(EvalError::EmptyAttributes(String::new()));
    }
    let mut sum = 0.0;
    for a in attributes {
        sum += cosine_distance(target, a)?;
    }
    Ok(sum / attributes.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacCell {
    pub target: String,
    pub attributes: String,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "MacReportWire", into = "MacReportWire")]
pub struct MacReport {
    /// Row-major over (target set, attribute set).
    pub cells: Vec<MacCell>,
    pub mac: f64,
    pub comparison: Option<TTestResult>,
    pub metadata: BTreeMap<String, String>,
}

impl MacReport {
    /// Cell values as a `|T| x |A|` matrix.
    pub fn s_values(&self) -> Vec<Vec<f64>> {
        let width = self
            .cells
            .iter()
            .take_while(|c| c.target == self.cells[0].target)
            .count()
            .max(1);
        self.cells
            .chunks(width)
            .map(|row| row.iter().map(|c| c.s).collect())
            .collect()
    }

    fn structure(&self) -> Vec<(&str, &str)> {
        self.cells
            .iter()
            .map(|c| (c.target.as_str(), c.attributes.as_str()))
            .collect()
    }

    /// Copy carrying the paired test against `baseline`.
    pub fn with_comparison(mut self, baseline: &MacReport) -> Result<Self, EvalError> {
        self.comparison = Some(compare(baseline, &self)?);
        Ok(self)
    }
}

#[derive(Serialize, Deserialize)]
struct MacReportWire {
    mac: f64,
    cells: Vec<MacCell>,
    #[serde(default, with = "optional_extended_float")]
    t: Option<f64>,
    #[serde(default)]
    p: Option<f64>,
    #[serde(default)]
    df: Option<usize>,
    #[serde(default)]
    n: Option<usize>,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
}

impl From<MacReportWire> for MacReport {
    fn from(w: MacReportWire) -> Self {
        let comparison = match (w.t, w.p, w.df, w.n) {
            (Some(t), Some(p_two_sided), Some(df), Some(n)) => Some(TTestResult {
                t,
                df,
                p_two_sided,
                n,
            }),
            _ => None,
        };
        MacReport {
            cells: w.cells,
            mac: w.mac,
            comparison,
            metadata: w.metadata,
        }
    }
}

impl From<MacReport> for MacReportWire {
    fn from(r: MacReport) -> Self {
        let c = r.comparison;
        MacReportWire {
            mac: r.mac,
            cells: r.cells,
            t: c.map(|c| c.t),
            p: c.map(|c| c.p_two_sided),
            df: c.map(|c| c.df),
            n: c.map(|c| c.n),
            metadata: r.metadata,
        }
    }
}

mod optional_extended_float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match x {
            Some(x) => crate::stats::extended_float::serialize(x, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        #[derive(Deserialize)]
        struct Wrap(#[serde(with = "crate::stats::extended_float")] f64);
        Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
    }
}

/// MAC over resolved target and attribute sets.
pub fn mac(
    store: &EmbeddingStore,
    targets: &[ResolvedSet],
    attributes: &[ResolvedSet],
) -> Result<MacReport, EvalError> {
    if targets.is_empty() || attributes.is_empty() {
        return Err(EvalError::NoCells);
    }
    if let Some(t) = targets.iter().find(|t| t.is_empty()) {
        return Err(EvalError::EmptyTargets(t.name.clone()));
    }
    if let Some(a) = attributes.iter().find(|a| a.is_empty()) {
        return Err(EvalError::EmptyAttributes(a.name.clone()));
    }
    let mut cells = Vec::with_capacity(targets.len() * attributes.len());
    for target in targets {
        for attr in attributes {
            let attr_vectors: Vec<&[f64]> = attr.indices.iter().map(|&i| store.row(i)).collect();
            let mut sum = 0.0;
            for &t in &target.indices {
                sum += s_value(store.row(t), &attr_vectors)?;
            }
            cells.push(MacCell {
                target: target.name.clone(),
                attributes: attr.name.clone(),
                s: sum / target.len() as f64,
            });
        }
    }
    let mac = cells.iter().map(|c| c.s).sum::<f64>() / cells.len() as f64;
    let metadata = BTreeMap::from([
        (
            "cell".to_string(),
            "mean over target words t of S(t, A_j)".to_string(),
        ),
        ("s_divisor".to_string(), "|A_j|".to_string()),
        (
            "pairing".to_string(),
            "paired t-test over (target set, attribute set) cells, after minus before".to_string(),
        ),
    ]);
    Ok(MacReport {
        cells,
        mac,
        comparison: None,
        metadata,
    })
}

/// Paired two-sided t-test of `after` against `before`, cell by cell.
///
/// `t > 0` means the cell distances grew.
pub fn compare(before: &MacReport, after: &MacReport) -> Result<TTestResult, EvalError> {
    if before.structure() != after.structure() {
        return Err(EvalError::StructureMismatch);
    }
    let x: Vec<f64> = after.cells.iter().map(|c| c.s).collect();
    let y: Vec<f64> = before.cells.iter().map(|c| c.s).collect();
    Ok(stats::paired_t_test(&x, &y)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::ResolvedSet;

    fn set(name: &str, store: &EmbeddingStore, words: &[&str]) -> ResolvedSet {
        ResolvedSet {
            name: name.into(),
            words: words.iter().map(|w| w.to_string()).collect(),
            indices: words.iter().map(|w| store.index_of(w).unwrap()).collect(),
        }
    }

    #[test]
    fn cosine_distance_examples() {
        let u = [0.3, -1.2, 2.0];
        assert!(cosine_distance(&u, &u).unwrap().abs() < 1e-15);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 5.0]).unwrap(), 1.0);
        let neg: Vec<f64> = u.iter().map(|x| -x).collect();
        assert!((cosine_distance(&u, &neg).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(cosine_distance(&[0.0, 0.0], &[1.0, 0.0]), Err(EvalError::ZeroVector));
    }

    #[test]
    fn s_value_examples() {
        let t = [1.0, 0.0];
        assert_eq!(s_value(&t, &[&[0.0, 1.0], &[1.0, 0.0]]).unwrap(), 0.5);
        assert_eq!(s_value(&t, &[&t]).unwrap(), 0.0);
        assert_eq!(s_value(&t, &[&[0.0, 1.0], &[0.0, -3.0]]).unwrap(), 1.0);
        assert!(matches!(s_value(&t, &[]), Err(EvalError::EmptyAttributes(_))));
    }

    fn axes() -> EmbeddingStore {
        EmbeddingStore::from_rows([
            ("x", vec![1.0, 0.0, 0.0]),
            ("y", vec![0.0, 1.0, 0.0]),
            ("z", vec![0.0, 0.0, 1.0]),
            ("x2", vec![2.0, 0.0, 0.0]),
        ])
        .unwrap()
    }

    #[test]
    fn orthogonal_words_give_mac_one() {
        let s = axes();
        let r = mac(&s, &[set("t", &s, &["x"])], &[set("a", &s, &["y", "z"]), set("b", &s, &["z"])]).unwrap();
        assert_eq!(r.mac, 1.0);
        assert_eq!(r.s_values(), vec![vec![1.0, 1.0]]);
    }

    #[test]
    fn identical_target_and_attribute_give_zero() {
        let s = axes();
        let r = mac(&s, &[set("t", &s, &["x"])], &[set("a", &s, &["x2"])]).unwrap();
        assert_eq!(r.mac, 0.0);
    }

    #[test]
    fn mac_is_mean_of_cells() {
        let s = EmbeddingStore::from_rows([
            ("t1", vec![1.0, 0.2]),
            ("t2", vec![0.3, 0.9]),
            ("t3", vec![-0.4, 0.5]),
            ("a1", vec![0.7, 0.7]),
            ("a2", vec![-1.0, 0.1]),
            ("a3", vec![0.2, -0.6]),
        ])
        .unwrap();
        let targets = [set("T1", &s, &["t1"]), set("T2", &s, &["t2", "t3"])];
        let attrs = [set("A1", &s, &["a1", "a2"]), set("A2", &s, &["a3"])];
        let r = mac(&s, &targets, &attrs).unwrap();
        let values: Vec<f64> = r.s_values().concat();
        assert_eq!(values.len(), 4);
        assert_eq!(r.mac, values.iter().sum::<f64>() / 4.0);
        assert!(values.iter().all(|v| (0.0..=2.0).contains(v)));
        // T2 x A2 averages over both target words
        let expected = (cosine_distance(s.row(1), s.row(5)).unwrap() + cosine_distance(s.row(2), s.row(5)).unwrap()) / 2.0;
        assert_eq!(r.cells[3].s, expected);
    }

    #[test]
    fn comparison_of_identical_reports() {
        let s = axes();
        let r = mac(&s, &[set("t", &s, &["x", "y"])], &[set("a", &s, &["y"]), set("b", &s, &["z"])]).unwrap();
        let c = compare(&r, &r).unwrap();
        assert_eq!((c.t, c.p_two_sided, c.df), (0.0, 1.0, 1));
        let other = mac(&s, &[set("t", &s, &["x", "y"])], &[set("a", &s, &["y"])]).unwrap();
        assert_eq!(compare(&r, &other), Err(EvalError::StructureMismatch));
    }

    #[test]
    fn report_json_schema() {
        let s = axes();
        let r = mac(&s, &[set("t", &s, &["x", "y"])], &[set("a", &s, &["y"]), set("b", &s, &["z"])]).unwrap();
        let r = r.clone().with_comparison(&r).unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        for key in ["mac", "cells", "t", "p", "df"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["cells"][0]["target"], "t");
        assert_eq!(v["cells"][1]["attributes"], "b");
        let back: MacReport = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }
}
