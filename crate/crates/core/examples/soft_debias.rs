//! Soft debiasing: learn a linear map trading inner-product fidelity against residual bias.

use debias::soft::{soft_debias, SoftDebiasConfig};
use debias::subspace::{identify_bias_subspace, ComponentSelection};
use debias::{EmbeddingStore, Lexicon, MissingPolicy, TextFormat};

const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let store = EmbeddingStore::load_text(format!("{DATA}/toy.vec"), TextFormat::Word2VecHeader)?.normalize_all()?;
    let lexicon = Lexicon::parse_file(format!("{DATA}/lexicons/religion.json"))?.resolve(&store, MissingPolicy::Error)?;
    let subspace = identify_bias_subspace(&store, &lexicon.defining_sets, ComponentSelection::Count(2))?;

    for lambda in [0.05, 0.2, 1.0] {
        let config = SoftDebiasConfig {
            lambda,
            ..SoftDebiasConfig::default()
        };
        let out = soft_debias(&store, &lexicon, &subspace, &config, false)?;
        let start = out.log.first().unwrap();
        let b = &out.breakdown;
        println!(
            "lambda {lambda:<4}: bias {:.4} -> {:.4}, fidelity {:.2e}, {} iterations{}, cond(A) {:.2}",
            start.bias,
            b.bias_term,
            b.fidelity_term,
            b.iterations,
            if b.converged { "" } else { " (not converged)" },
            out.condition_number
        );
    }
    Ok(())
}
