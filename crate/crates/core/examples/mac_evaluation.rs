//! MAC before and after hard and soft debiasing, with paired t-tests.

use debias::eval::{compare, mac};
use debias::soft::{soft_debias, SoftDebiasConfig};
use debias::subspace::{identify_bias_subspace, ComponentSelection};
use debias::{hard_debias, EmbeddingStore, Lexicon, MissingPolicy, TextFormat};

const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let store = EmbeddingStore::load_text(format!("{DATA}/toy.vec"), TextFormat::Word2VecHeader)?.normalize_all()?;
    for name in ["gender", "race", "religion"] {
        let lexicon = Lexicon::parse_file(format!("{DATA}/lexicons/{name}.json"))?.resolve(&store, MissingPolicy::Error)?;
        let subspace = identify_bias_subspace(&store, &lexicon.defining_sets, ComponentSelection::Count(2))?;
        let hard = hard_debias(&store, &lexicon, &subspace)?;
        let soft = soft_debias(&store, &lexicon, &subspace, &SoftDebiasConfig::default(), false)?;

        let before = mac(&store, &lexicon.targets, &lexicon.attributes)?;
        println!("{name}: biased MAC {:.3}", before.mac);
        for (label, s) in [("hard", &hard.store), ("soft", &soft.result.store)] {
            let after = mac(s, &lexicon.targets, &lexicon.attributes)?;
            let t = compare(&before, &after)?;
            println!("  {label}: MAC {:.3}  t {:+.3}  p {:.3}", after.mac, t.t, t.p_two_sided);
        }
    }
    Ok(())
}
