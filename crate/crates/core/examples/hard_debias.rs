//! Hard debiasing: neutralize every non-equality word, equalize the defining sets.

use debias::linalg::dot;
use debias::subspace::{identify_bias_subspace, ComponentSelection};
use debias::{hard_debias, EmbeddingStore, Lexicon, MissingPolicy, TextFormat};

const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let store = EmbeddingStore::load_text(format!("{DATA}/toy.vec"), TextFormat::Word2VecHeader)?.normalize_all()?;
    let lexicon = Lexicon::parse_file(format!("{DATA}/lexicons/religion.json"))?.resolve(&store, MissingPolicy::Error)?;
    let subspace = identify_bias_subspace(&store, &lexicon.defining_sets, ComponentSelection::Count(2))?;

    let result = hard_debias(&store, &lexicon, &subspace)?;
    println!(
        "neutralized {} words, equalized {} sets, {} warnings",
        result.neutralized.len(),
        result.equalized.len(),
        result.warnings.len()
    );

    let b = &subspace.basis()[0];
    for word in ["terrorist", "greedy", "doctor"] {
        let before = dot(store.vector(word).unwrap(), b);
        let after = dot(result.store.vector(word).unwrap(), b);
        println!("<{word}, b1>: {before:+.4} -> {after:+.2e}");
    }

    // neutral words end up equidistant from every member of an equality set
    let n = result.store.vector("doctor").unwrap();
    for set in &result.equalized {
        let sims: Vec<String> = set
            .iter()
            .map(|w| format!("{w} {:.6}", dot(n, result.store.vector(w).unwrap())))
            .collect();
        println!("doctor vs {}", sims.join(", "));
    }
    println!("provenance: {:?}", result.provenance);
    Ok(())
}
