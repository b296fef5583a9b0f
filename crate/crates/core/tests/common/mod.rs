//! Shared fixtures and reference implementations for the integration tests.
#![allow(dead_code)]

use debias::lexicon::{EvalSets, Lexicon, MissingPolicy, NamedSet, NeutralPolicy, ResolvedLexicon};
use debias::EmbeddingStore;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn unit_vec(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    loop {
        let v = uniform_vec(rng, d);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Store of `n` random rows named `w00, w01, ...`.
pub fn random_store(rng: &mut impl Rng, n: usize, d: usize, normalized: bool) -> EmbeddingStore {
    EmbeddingStore::from_rows((0..n).map(|i| {
        let v = if normalized { unit_vec(rng, d) } else { uniform_vec(rng, d) };
        (format!("w{i:02}"), v)
    }))
    .unwrap()
}

/// Lexicon whose defining sets are `sets` (also the equality sets), every
/// other word neutral.
pub fn lexicon_with_sets(store: &EmbeddingStore, sets: &[Vec<usize>]) -> ResolvedLexicon {
    lexicon_with_eval(store, sets, EvalSets::default())
}

pub fn lexicon_with_eval(store: &EmbeddingStore, sets: &[Vec<usize>], eval: EvalSets) -> ResolvedLexicon {
    let named: Vec<NamedSet> = sets
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let words: Vec<&str> = s.iter().map(|&w| store.word(w)).collect();
            NamedSet::new(format!("d{i}"), &words)
        })
        .collect();
    Lexicon::new(named, None, NeutralPolicy::AllButEquality, eval, vec![])
        .unwrap()
        .resolve(store, MissingPolicy::Error)
        .unwrap()
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order with matching unit eigenvectors.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut a: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in a.iter_mut() {
                    let (akp, akq) = (row[p], row[q]);
                    row[p] = c * akp - s * akq;
                    row[q] = s * akp + c * akq;
                }
                let (rp, rq) = (a[p].clone(), a[q].clone());
                for k in 0..n {
                    a[p][k] = c * rp[k] - s * rq[k];
                    a[q][k] = s * rp[k] + c * rq[k];
                }
                for row in v.iter_mut() {
                    let (vkp, vkq) = (row[p], row[q]);
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order.iter().map(|&i| (0..n).map(|k| v[k][i]).collect()).collect();
    (values, vectors)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (norm(a) * norm(b))
}
