//! Write a MAC report with its run manifest and read it back.

use debias::report::{Format, Report, ReportKind, RunManifest};
use debias::{mac, EmbeddingStore, Lexicon, MissingPolicy, TextFormat};
use serde_json::json;

const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let vectors = format!("{DATA}/toy.vec");
    let lexicon_path = format!("{DATA}/lexicons/race.json");
    let store = EmbeddingStore::load_text(&vectors, TextFormat::Word2VecHeader)?.normalize_all()?;
    let lexicon = Lexicon::parse_file(&lexicon_path)?.resolve(&store, MissingPolicy::Error)?;
    let result = mac(&store, &lexicon.targets, &lexicon.attributes)?;

    let mut manifest = RunManifest::new("eval-mac", json!({"normalize": true}));
    manifest.add_input("embeddings", vectors.as_ref())?;
    manifest.add_input("lexicon", lexicon_path.as_ref())?;

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("mac.json");
    let report = Report::new(ReportKind::Mac, &result, &manifest, lexicon.warnings.clone())?;
    report.write(&path, Format::Json)?;
    manifest.write(dir.path().join("mac.json.manifest.json"))?;

    assert_eq!(Report::read(&path)?, report);
    println!("{}", std::fs::read_to_string(&path)?);
    println!("{}", report.to_tsv()?);
    Ok(())
}
