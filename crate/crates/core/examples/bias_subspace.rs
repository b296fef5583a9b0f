//! Identify a multiclass bias subspace from defining sets and print its spectrum.

use debias::subspace::{identify_bias_subspace, spectrum_report, ComponentSelection};
use debias::{EmbeddingStore, Lexicon, MissingPolicy, TextFormat};

const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let store = EmbeddingStore::load_text(format!("{DATA}/toy.vec"), TextFormat::Word2VecHeader)?.normalize_all()?;
    let lexicon = Lexicon::parse_file(format!("{DATA}/lexicons/religion.json"))?.resolve(&store, MissingPolicy::Error)?;

    // keep as many components as needed for 90% of the deviation variance
    let subspace = identify_bias_subspace(&store, &lexicon.defining_sets, ComponentSelection::VarianceThreshold(0.9))?;
    let spectrum = subspace.spectrum().expect("identified subspaces carry a spectrum");
    println!("rank {} from {} deviation rows, keeping k = {}", spectrum.rank, spectrum.rows, subspace.k());
    for (i, (ev, ratio)) in spectrum.eigenvalues.iter().zip(&spectrum.explained_variance_ratio).enumerate() {
        println!("  component {}: eigenvalue {ev:.5}, ratio {ratio:.3}", i + 1);
    }

    let report = spectrum_report(&store, &subspace, 4);
    for c in &report.components {
        let pos: Vec<&str> = c.top_positive.iter().map(|l| l.word.as_str()).collect();
        let neg: Vec<&str> = c.top_negative.iter().map(|l| l.word.as_str()).collect();
        println!("b{}: + {:?}  - {:?}", c.component, pos, neg);
    }
    Ok(())
}
