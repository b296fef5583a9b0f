//! Analogy pairs x : y completing a : b, intersected across stores.

use debias::diagnostics::generate_analogies;
use debias::subspace::{identify_bias_subspace, ComponentSelection};
use debias::{hard_debias, EmbeddingStore, Lexicon, MissingPolicy, TextFormat};

const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let store = EmbeddingStore::load_text(format!("{DATA}/toy.vec"), TextFormat::Word2VecHeader)?.normalize_all()?;
    let lexicon = Lexicon::parse_file(format!("{DATA}/lexicons/religion.json"))?.resolve(&store, MissingPolicy::Error)?;
    let subspace = identify_bias_subspace(&store, &lexicon.defining_sets, ComponentSelection::Count(2))?;
    let debiased = hard_debias(&store, &lexicon, &subspace)?.store;

    for (a, b) in [("muslim", "christian"), ("jew", "christian")] {
        println!("{a} : {b}");
        for c in generate_analogies(&[&store], (a, b), 5, 1.0)? {
            println!("  biased    {} : {}  {:.3}", c.x, c.y, c.score);
        }
        for c in generate_analogies(&[&debiased], (a, b), 5, 1.0)? {
            println!("  debiased  {} : {}  {:.3}", c.x, c.y, c.score);
        }
        let shared = generate_analogies(&[&store, &debiased], (a, b), 20, 1.0)?;
        println!("  {} pairs in both top-20 lists", shared.len());
    }
    Ok(())
}
