//! Load word2vec text embeddings and list nearest neighbors.
//!
//! ```text
//! cargo run --example load_and_query -- [embeddings.vec] [word...]
//! ```

use std::collections::HashSet;

use debias::{EmbeddingStore, TextFormat};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/toy.vec").to_string());
    let mut words: Vec<String> = args.collect();
    if words.is_empty() {
        words = vec!["muslim".into(), "doctor".into()];
    }

    let store = EmbeddingStore::load_text(&path, TextFormat::Word2VecHeader)?.normalize_all()?;
    println!("{} words, dimension {}", store.len(), store.dim());

    for word in &words {
        let Some(v) = store.vector(word) else {
            println!("{word}: not in vocabulary");
            continue;
        };
        let exclude = HashSet::from([word.clone()]);
        println!("{word}:");
        for n in store.nearest_neighbors(v, 5, &exclude)? {
            println!("  {:<16} {:.4}", n.word, n.similarity);
        }
    }
    Ok(())
}
