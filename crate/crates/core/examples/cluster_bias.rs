//! Cluster bias: do professions keep neighbors on their original side after debiasing?

use debias::diagnostics::cluster_bias_report;
use debias::subspace::{identify_bias_subspace, ComponentSelection};
use debias::{hard_debias, EmbeddingStore, Lexicon, MissingPolicy, TextFormat};

const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let store = EmbeddingStore::load_text(format!("{DATA}/toy.vec"), TextFormat::Word2VecHeader)?.normalize_all()?;
    let lexicon = Lexicon::parse_file(format!("{DATA}/lexicons/gender.json"))?.resolve(&store, MissingPolicy::Error)?;
    let professions: Vec<String> = std::fs::read_to_string(format!("{DATA}/professions.txt"))?
        .lines()
        .map(String::from)
        .collect();

    for k in [1, 2] {
        let subspace = identify_bias_subspace(&store, &lexicon.defining_sets, ComponentSelection::Count(k))?;
        let debiased = hard_debias(&store, &lexicon, &subspace)?.store;
        let report = cluster_bias_report(&store, &debiased, &lexicon.defining_sets[0].words, &professions, 10, 5)?;
        for class in &report.classes {
            for s in &class.stores {
                println!(
                    "k={k} class {:<4} {:<9} pearson {:>7}  spearman {:>7}",
                    class.class,
                    s.store,
                    fmt(s.pearson),
                    fmt(s.spearman)
                );
            }
        }
    }
    Ok(())
}

fn fmt(x: Option<f64>) -> String {
    x.map_or("n/a".into(), |v| format!("{v:+.3}"))
}
