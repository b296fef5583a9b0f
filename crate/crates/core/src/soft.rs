//! Soft debiasing: learn a linear map `A` that keeps inner products while
//! shrinking the bias components of neutral words.
//!
//! The objective is
//!
//! ```text
//! |(AW)^T (AW) - W^T W|_F^2  +  lambda * |(AN)^T (AB)|_F^2
//! ```
//!
//! with `W` the `d x |V|` vocabulary matrix, `N` the neutral-word columns and
//! `B` the subspace basis. With `P = A^T A`, `M = P - I`, `C = W W^T`,
//! `Q = N N^T` and `R = B B^T` both terms reduce to `d x d` traces:
//!
//! ```text
//! fidelity = tr(M C M C)            grad = 4 A C M C
//! bias     = tr(P Q P R)            grad = 2 A (Q P R + R P Q)
//! ```
//!
//! so after forming `C` and `Q` once, each iteration costs `O(d^3)`
//! independent of the vocabulary size.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hard::{self, DebiasMethod, DebiasResult};
use crate::lexicon::ResolvedLexicon;
use crate::store::EmbeddingStore;
use crate::subspace::BiasSubspace;

/// Sufficient-decrease constant of the backtracking line search.
pub const ARMIJO: f64 = 1e-4;
/// Step halvings tried before the search declares no further progress possible.
pub const MAX_HALVINGS: usize = 60;

#[derive(Debug, Error, PartialEq)]
pub enum SoftDebiasError {
    #[error("embeddings must be unit-normalized before soft debiasing")]
    NotNormalized,
    #[error("{what}: expected {expected} rows, got {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("objective became non-finite at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("word {word:?} maps to the zero vector and cannot be renormalized")]
    ZeroRow { word: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftDebiasConfig {
    pub lambda: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub step_init: f64,
    /// Recorded in provenance; descent from the identity involves no randomness.
    pub seed: u64,
}

impl Default for SoftDebiasConfig {
    fn default() -> Self {
        Self {
            lambda: 0.2,
            max_iters: 10_000,
            rel_tol: 1e-6,
            step_init: 1e-2,
            seed: 0,
        }
    }
}

impl SoftDebiasConfig {
    pub fn validate(&self) -> Result<(), SoftDebiasError> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(SoftDebiasError::BadConfig(format!(
                "lambda must be a finite non-negative number, got {}",
                self.lambda
            )));
        }
        if self.rel_tol.is_nan() || self.rel_tol <= 0.0 {
            return Err(SoftDebiasError::BadConfig(format!(
                "rel_tol must be positive, got {}",
                self.rel_tol
            )));
        }
        if !(self.step_init > 0.0 && self.step_init.is_finite()) {
            return Err(SoftDebiasError::BadConfig(format!(
                "step_init must be positive, got {}",
                self.step_init
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub total: f64,
    pub fidelity_term: f64,
    pub bias_term: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// One accepted iterate (iteration 0 is the identity).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub total: f64,
    pub fidelity: f64,
    pub bias: f64,
    pub step: f64,
}

/// Gram-matrix form of the objective.
#[derive(Debug, Clone)]
pub struct SoftDebiasProblem {
    gram: DMatrix<f64>,
    neutral_gram: DMatrix<f64>,
    bias_projector: DMatrix<f64>,
    lambda: f64,
}

impl SoftDebiasProblem {
    /// `w`: `d x |V|`, `n`: `d x |N|`, `b`: `d x k`; vectors are columns.
    pub fn new(w: &DMatrix<f64>, n: &DMatrix<f64>, b: &DMatrix<f64>, lambda: f64) -> Result<Self, SoftDebiasError> {
        let d = w.nrows();
        for (what, m) in [("neutral matrix", n), ("bias basis", b)] {
            if m.nrows() != d {
                return Err(SoftDebiasError::DimensionMismatch {
                    what,
                    expected: d,
                    found: m.nrows(),
                });
            }
        }
        Self::from_grams(w * w.transpose(), n * n.transpose(), b * b.transpose(), lambda)
    }

    /// Builds from precomputed `C = W W^T`, `Q = N N^T` and `R = B B^T`.
    pub fn from_grams(
        gram: DMatrix<f64>,
        neutral_gram: DMatrix<f64>,
        bias_projector: DMatrix<f64>,
        lambda: f64,
    ) -> Result<Self, SoftDebiasError> {
        let d = gram.nrows();
        for (what, m) in [
            ("vocabulary gram", &gram),
            ("neutral gram", &neutral_gram),
            ("bias projector", &bias_projector),
        ] {
            if m.nrows() != d || m.ncols() != d {
                return Err(SoftDebiasError::DimensionMismatch {
                    what,
                    expected: d,
                    found: m.nrows().max(m.ncols()),
                });
            }
        }
        Ok(Self {
            gram,
            neutral_gram,
            bias_projector,
            lambda,
        })
    }

    /// Accumulates the Gram matrices straight from store rows.
    pub fn from_store(
        store: &EmbeddingStore,
        neutral: &[usize],
        subspace: &BiasSubspace,
        lambda: f64,
    ) -> Result<Self, SoftDebiasError> {
        if subspace.dim() != store.dim() {
            return Err(SoftDebiasError::DimensionMismatch {
                what: "bias basis",
                expected: store.dim(),
                found: subspace.dim(),
            });
        }
        let d = store.dim();
        let outer_sum = |rows: &mut dyn Iterator<Item = &[f64]>| {
            let mut g = DMatrix::<f64>::zeros(d, d);
            for row in rows {
                for r in 0..d {
                    let x = row[r];
                    for c in r..d {
                        g[(r, c)] += x * row[c];
                    }
                }
            }
            g.fill_lower_triangle_with_upper_triangle();
            g
        };
        let gram = outer_sum(&mut store.rows());
        let neutral_gram = outer_sum(&mut neutral.iter().map(|&i| store.row(i)));
        let b = subspace.basis_matrix();
        Self::from_grams(gram, neutral_gram, &b * b.transpose(), lambda)
    }

    pub fn dim(&self) -> usize {
        self.gram.nrows()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    fn check(&self, a: &DMatrix<f64>) -> Result<(), SoftDebiasError> {
        let d = self.dim();
        if a.nrows() != d || a.ncols() != d {
            return Err(SoftDebiasError::DimensionMismatch {
                what: "transform",
                expected: d,
                found: a.nrows().max(a.ncols()),
            });
        }
        Ok(())
    }

    /// Objective terms at `a`; `iterations` is 0 and `converged` false.
    pub fn objective(&self, a: &DMatrix<f64>) -> Result<ObjectiveBreakdown, SoftDebiasError> {
        self.check(a)?;
        let p = a.transpose() * a;
        let m = &p - DMatrix::identity(self.dim(), self.dim());
        let mc = &m * &self.gram;
        let fidelity = trace_of_product(&mc, &mc);
        let pq = &p * &self.neutral_gram;
        let pr = &p * &self.bias_projector;
        let bias = trace_of_product(&pq, &pr);
        Ok(ObjectiveBreakdown {
            total: fidelity + self.lambda * bias,
            fidelity_term: fidelity,
            bias_term: bias,
            iterations: 0,
            converged: false,
        })
    }

    pub fn gradient(&self, a: &DMatrix<f64>) -> Result<DMatrix<f64>, SoftDebiasError> {
        self.check(a)?;
        let d = self.dim();
        let p = a.transpose() * a;
        let m = &p - DMatrix::identity(d, d);
        let cmc = &self.gram * (&m * &self.gram);
        let qpr = &self.neutral_gram * (&p * &self.bias_projector);
        let h = &qpr + qpr.transpose();
        Ok(a * (cmc * 4.0 + h * (2.0 * self.lambda)))
    }

    /// Gradient descent from `A = I` with Armijo backtracking.
    ///
    /// The step doubles after every accepted iterate and halves while the
    /// sufficient-decrease test fails. Descent stops once the relative decrease
    /// drops below `rel_tol`, the gradient vanishes, no step within
    /// [`MAX_HALVINGS`] halvings decreases the objective, or `max_iters` runs out.
    pub fn optimize(&self, config: &SoftDebiasConfig) -> Result<Optimized, SoftDebiasError> {
        config.validate()?;
        let d = self.dim();
        let mut a = DMatrix::<f64>::identity(d, d);
        let mut current = self.objective(&a)?;
        if !current.total.is_finite() {
            return Err(SoftDebiasError::NonFinite { iteration: 0 });
        }
        let mut log = vec![IterationRecord {
            iteration: 0,
            total: current.total,
            fidelity: current.fidelity_term,
            bias: current.bias_term,
            step: 0.0,
        }];
        let mut step = config.step_init;
        let mut converged = false;
        let mut iterations = 0;

        'descent: while iterations < config.max_iters {
            let g = self.gradient(&a)?;
            let g_sq = g.norm_squared();
            if !g_sq.is_finite() {
                return Err(SoftDebiasError::NonFinite {
                    iteration: iterations + 1,
                });
            }
            if g_sq == 0.0 {
                converged = true;
                break;
            }
            let mut halvings = 0;
            let (candidate, value) = loop {
                let candidate = &a - &g * step;
                let value = self.objective(&candidate)?;
                if value.total.is_finite() && value.total <= current.total - ARMIJO * step * g_sq {
                    break (candidate, value);
                }
                halvings += 1;
                if halvings > MAX_HALVINGS {
                    if !value.total.is_finite() {
                        return Err(SoftDebiasError::NonFinite {
                            iteration: iterations + 1,
                        });
                    }
                    converged = true;
                    break 'descent;
                }
                step *= 0.5;
            };
            iterations += 1;
            let decrease = (current.total - value.total) / current.total.max(f64::MIN_POSITIVE);
            a = candidate;
            current = value;
            log.push(IterationRecord {
                iteration: iterations,
                total: current.total,
                fidelity: current.fidelity_term,
                bias: current.bias_term,
                step,
            });
            if decrease < config.rel_tol {
                converged = true;
                break;
            }
            step *= 2.0;
        }

        current.iterations = iterations;
        current.converged = converged;
        Ok(Optimized {
            transform: a,
            breakdown: current,
            log,
        })
    }
}

/// `tr(X Y)` without forming the product.
fn trace_of_product(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let mut acc = 0.0;
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            acc += x[(i, j)] * y[(j, i)];
        }
    }
    acc
}

#[derive(Debug, Clone)]
pub struct Optimized {
    pub transform: DMatrix<f64>,
    pub breakdown: ObjectiveBreakdown,
    pub log: Vec<IterationRecord>,
}

/// Objective at `a` for explicit matrices (columns are vectors).
pub fn objective(
    a: &DMatrix<f64>,
    w: &DMatrix<f64>,
    n: &DMatrix<f64>,
    b: &DMatrix<f64>,
    lambda: f64,
) -> Result<ObjectiveBreakdown, SoftDebiasError> {
    SoftDebiasProblem::new(w, n, b, lambda)?.objective(a)
}

pub fn gradient(
    a: &DMatrix<f64>,
    w: &DMatrix<f64>,
    n: &DMatrix<f64>,
    b: &DMatrix<f64>,
    lambda: f64,
) -> Result<DMatrix<f64>, SoftDebiasError> {
    SoftDebiasProblem::new(w, n, b, lambda)?.gradient(a)
}

/// Learns `A` for a store, its neutral words and a subspace.
pub fn optimize(
    store: &EmbeddingStore,
    lexicon: &ResolvedLexicon,
    subspace: &BiasSubspace,
    config: &SoftDebiasConfig,
) -> Result<Optimized, SoftDebiasError> {
    if !store.is_normalized() {
        return Err(SoftDebiasError::NotNormalized);
    }
    let neutral = hard::neutral_indices(store, lexicon);
    SoftDebiasProblem::from_store(store, &neutral, subspace, config.lambda)?.optimize(config)
}

/// Replaces every row `w` by `A w`, optionally rescaling rows to unit length.
pub fn apply(a: &DMatrix<f64>, store: &EmbeddingStore, renormalize: bool) -> Result<EmbeddingStore, SoftDebiasError> {
    let d = store.dim();
    if a.nrows() != d || a.ncols() != d {
        return Err(SoftDebiasError::DimensionMismatch {
            what: "transform",
            expected: d,
            found: a.nrows().max(a.ncols()),
        });
    }
    let mut data = Vec::with_capacity(store.as_slice().len());
    let mut out = vec![0.0; d];
    for (i, row) in store.rows().enumerate() {
        for (r, o) in out.iter_mut().enumerate() {
            *o = (0..d).map(|c| a[(r, c)] * row[c]).sum();
        }
        if renormalize {
            let n = crate::linalg::norm(&out);
            if n == 0.0 {
                return Err(SoftDebiasError::ZeroRow {
                    word: store.word(i).to_string(),
                });
            }
            out.iter_mut().for_each(|x| *x /= n);
        }
        if out.iter().any(|x| !x.is_finite()) {
            return Err(SoftDebiasError::NonFinite { iteration: 0 });
        }
        data.extend_from_slice(&out);
    }
    Ok(store.with_data(data))
}

/// Ratio of the largest to the smallest singular value (infinite when singular).
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Outcome of [`soft_debias`].
#[derive(Debug, Clone)]
pub struct SoftDebiasOutcome {
    pub result: DebiasResult,
    pub transform: DMatrix<f64>,
    pub breakdown: ObjectiveBreakdown,
    pub log: Vec<IterationRecord>,
    pub condition_number: f64,
}

/// Optimize, then apply the learned transform to every row.
pub fn soft_debias(
    store: &EmbeddingStore,
    lexicon: &ResolvedLexicon,
    subspace: &BiasSubspace,
    config: &SoftDebiasConfig,
    renormalize: bool,
) -> Result<SoftDebiasOutcome, SoftDebiasError> {
    let optimized = optimize(store, lexicon, subspace, config)?;
    let transformed = apply(&optimized.transform, store, renormalize)?;
    let neutralized = hard::neutral_indices(store, lexicon)
        .into_iter()
        .map(|i| store.word(i).to_string())
        .collect();
    let extra = serde_json::json!({ "config": config, "renormalize": renormalize });
    let provenance = hard::provenance(DebiasMethod::Soft, lexicon, subspace, Some(extra));
    let mut warnings = Vec::new();
    if !optimized.breakdown.converged {
        warnings.push(format!(
            "optimizer stopped after {} iterations without meeting rel_tol {}",
            optimized.breakdown.iterations, config.rel_tol
        ));
    }
    Ok(SoftDebiasOutcome {
        result: DebiasResult {
            store: transformed,
            method: DebiasMethod::Soft,
            k: subspace.k(),
            lambda: Some(config.lambda),
            neutralized,
            equalized: Vec::new(),
            skipped: Vec::new(),
            warnings,
            provenance,
        },
        condition_number: condition_number(&optimized.transform),
        transform: optimized.transform,
        breakdown: optimized.breakdown,
        log: optimized.log,
    })
}
