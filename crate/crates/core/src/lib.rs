//! Multiclass bias-subspace identification, hard and soft debiasing, and
//! bias evaluation for word embeddings.
//!
//! ```no_run
//! use debias::{EmbeddingStore, Lexicon, MissingPolicy, TextFormat};
//! use debias::subspace::{identify_bias_subspace, ComponentSelection};
//!
//! let store = EmbeddingStore::load_text("vectors.txt", TextFormat::Word2VecHeader)?
//!     .normalize_all()?;
//! let lexicon = Lexicon::parse_file("religion.json")?.resolve(&store, MissingPolicy::Error)?;
//! let subspace = identify_bias_subspace(&store, &lexicon.defining_sets, ComponentSelection::Count(2))?;
//! let debiased = debias::hard::hard_debias(&store, &lexicon, &subspace)?;
//! let before = debias::eval::mac(&store, &lexicon.targets, &lexicon.attributes)?;
//! let after = debias::eval::mac(&debiased.store, &lexicon.targets, &lexicon.attributes)?;
//! println!("MAC {} -> {}", before.mac, after.mac);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod cli;
pub mod diagnostics;
pub mod eval;
pub mod hard;
pub mod lexicon;
pub mod linalg;
pub mod report;
pub mod soft;
pub mod stats;
pub mod store;
pub mod subspace;

pub use eval::{mac, MacReport};
pub use hard::{hard_debias, DebiasResult};
pub use lexicon::{Lexicon, MissingPolicy, ResolvedLexicon};
pub use soft::{soft_debias, SoftDebiasConfig};
pub use store::{EmbeddingStore, TextFormat};
pub use subspace::{identify_bias_subspace, BiasSubspace, ComponentSelection};
