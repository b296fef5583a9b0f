//! The `debias` command line.
//!
//! Every run writes its main artifact to `--out` and a manifest next to it
//! (`<out>.manifest.json`). Exit status is 0 on success, 1 for usage errors
//! and 2 for data errors.

use std::ffi::OsString;
use std::fmt::Display;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::diagnostics::{self, AnalogyCandidate};
use crate::eval::{self, MacReport};
use crate::hard::{self, DebiasResult};
use crate::lexicon::{Lexicon, MissingPolicy, ResolvedLexicon};
use crate::report::{self, Format, Report, ReportKind, RunManifest};
use crate::soft::{self, SoftDebiasConfig};
use crate::store::{EmbeddingStore, TextFormat};
use crate::subspace::{self, BiasSubspace, ComponentSelection};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
        }
    }
}

fn data<E: Display>(context: impl Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Data(format!("{context}: {e}"))
}

#[derive(Debug, Parser)]
#[command(name = "debias", version, about = "Identify, remove and measure multiclass bias in word embeddings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Summarize a store, list nearest neighbors and check lexicon coverage.
    Inspect(InspectArgs),
    /// Identify the bias subspace and report its spectrum.
    Subspace(SubspaceArgs),
    /// Neutralize and equalize; writes word2vec text.
    DebiasHard(HardArgs),
    /// Learn a linear debiasing transform; writes word2vec text.
    DebiasSoft(SoftArgs),
    /// Mean average cosine distance between targets and attributes.
    EvalMac(EvalMacArgs),
    /// Paired t-test between two MAC reports.
    Compare(CompareArgs),
    /// Generate analogy pairs shared by one or more stores.
    Analogies(AnalogyArgs),
    /// Count positively biased neighbors of professions before and after debiasing.
    ClusterBias(ClusterArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Inspect(_) => "inspect",
            Command::Subspace(_) => "subspace",
            Command::DebiasHard(_) => "debias-hard",
            Command::DebiasSoft(_) => "debias-soft",
            Command::EvalMac(_) => "eval-mac",
            Command::Compare(_) => "compare",
            Command::Analogies(_) => "analogies",
            Command::ClusterBias(_) => "cluster-bias",
        }
    }

    fn run_args(&self) -> &RunArgs {
        match self {
            Command::Inspect(a) => &a.run,
            Command::Subspace(a) => &a.run,
            Command::DebiasHard(a) => &a.run,
            Command::DebiasSoft(a) => &a.run,
            Command::EvalMac(a) => &a.run,
            Command::Compare(a) => &a.run,
            Command::Analogies(a) => &a.run,
            Command::ClusterBias(a) => &a.run,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Tsv,
}

impl From<OutputFormat> for Format {
    fn from(f: OutputFormat) -> Self {
        match f {
            OutputFormat::Json => Format::Json,
            OutputFormat::Tsv => Format::Tsv,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Missing {
    #[default]
    Error,
    Skip,
}

#[derive(Debug, Args, Serialize)]
pub struct InputArgs {
    /// Embeddings in word2vec text format.
    #[arg(long = "embeddings", value_name = "PATH", required = true)]
    #[serde(skip)]
    pub embeddings: Vec<PathBuf>,
    /// Lexicon JSON.
    #[arg(long, value_name = "PATH")]
    #[serde(skip)]
    pub lexicon: Option<PathBuf>,
    /// Keep vectors as stored instead of scaling them to unit length.
    #[arg(long)]
    pub no_normalize: bool,
    /// What to do with lexicon tokens missing from the vocabulary.
    #[arg(long, value_enum, default_value_t)]
    pub missing: Missing,
    /// Lowercase lexicon tokens before lookup.
    #[arg(long)]
    pub lowercase: bool,
    /// Embedding files have no "<count> <dim>" header line.
    #[arg(long)]
    pub headerless: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct RunArgs {
    #[arg(long, value_name = "PATH")]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON object of flag values; flags given on the command line win.
    #[arg(long, value_name = "PATH")]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct FormatArgs {
    #[arg(long, value_enum, default_value_t)]
    pub format: OutputFormat,
}

#[derive(Debug, Args, Serialize)]
pub struct SelectionArgs {
    /// Number of principal components.
    #[arg(long, conflicts_with = "variance_threshold")]
    pub k: Option<usize>,
    /// Keep the fewest components explaining at least this variance fraction.
    #[arg(long)]
    pub variance_threshold: Option<f64>,
}

impl SelectionArgs {
    fn selection(&self) -> ComponentSelection {
        match (self.k, self.variance_threshold) {
            (_, Some(t)) => ComponentSelection::VarianceThreshold(t),
            (Some(k), None) => ComponentSelection::Count(k),
            (None, None) => ComponentSelection::default(),
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct InspectArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub format: FormatArgs,
    /// Word to list neighbors for (repeatable).
    #[arg(long = "word")]
    pub words: Vec<String>,
    #[arg(long, default_value_t = 10)]
    pub neighbors: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct SubspaceArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub format: FormatArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub selection: SelectionArgs,
    /// Loadings listed per component and sign.
    #[arg(long, default_value_t = 10)]
    pub top: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct HardArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub selection: SelectionArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct SoftArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub selection: SelectionArgs,
    #[arg(long, default_value_t = 0.2)]
    pub lambda: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub rel_tol: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub step_init: f64,
    /// Rescale transformed rows to unit length.
    #[arg(long)]
    pub renormalize: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalMacArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub format: FormatArgs,
    /// Earlier MAC report to test against.
    #[arg(long, value_name = "PATH")]
    #[serde(skip)]
    pub baseline: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct CompareArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub format: FormatArgs,
    #[arg(long, value_name = "PATH")]
    #[serde(skip)]
    pub before: PathBuf,
    #[arg(long, value_name = "PATH")]
    #[serde(skip)]
    pub after: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct AnalogyArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub format: FormatArgs,
    /// Seed pair "a:b" (repeatable); defaults to the lexicon's analogy seeds.
    #[arg(long = "pair", value_name = "A:B")]
    pub pairs: Vec<String>,
    #[arg(long, default_value_t = 100)]
    pub top: usize,
    /// Upper bound on ‖x - y‖; negative disables it.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub delta: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct ClusterArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub format: FormatArgs,
    /// Debiased store to compare with the first --embeddings.
    #[arg(long, value_name = "PATH")]
    #[serde(skip)]
    pub debiased: PathBuf,
    /// Profession words, one per line or a JSON list.
    #[arg(long, value_name = "PATH")]
    #[serde(skip)]
    pub professions: PathBuf,
    /// Defining set whose classes give the bias directions (default: the first).
    #[arg(long)]
    pub defining_set: Option<String>,
    #[arg(long, default_value_t = 100)]
    pub neighbors: usize,
    #[arg(long, default_value_t = 500)]
    pub top_biased: usize,
}

/// Parses `argv` (program name first), runs the subcommand and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match inject_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Appends `--key value` for every config entry whose flag is absent from `argv`.
fn inject_config(mut argv: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let mut path = None;
    for (i, arg) in argv.iter().enumerate() {
        let s = arg.to_string_lossy();
        if s == "--config" {
            path = argv.get(i + 1).map(PathBuf::from);
            break;
        }
        if let Some(p) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
            break;
        }
    }
    let Some(path) = path else { return Ok(argv) };
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let config: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: invalid JSON: {e}", path.display())))?;
    let Value::Object(entries) = config else {
        return Err(CliError::Usage(format!("{}: expected a JSON object", path.display())));
    };
    let given: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    for (key, value) in entries {
        let flag = format!("--{}", key.replace('_', "-"));
        if given.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}="))) {
            continue;
        }
        let scalar = |v: &Value| -> Result<String, CliError> {
            match v {
                Value::String(s) => Ok(s.clone()),
                Value::Number(n) => Ok(n.to_string()),
                _ => Err(CliError::Usage(format!("{}: unsupported value for {key:?}", path.display()))),
            }
        };
        match &value {
            Value::Null | Value::Bool(false) => {}
            Value::Bool(true) => argv.push(flag.into()),
            Value::Array(items) => {
                for item in items {
                    argv.push(format!("{flag}={}", scalar(item)?).into());
                }
            }
            v => argv.push(format!("{flag}={}", scalar(v)?).into()),
        }
    }
    Ok(argv)
}

/// Runs an already-parsed command.
pub fn execute(command: &Command) -> Result<(), CliError> {
    let parameters = serde_json::to_value(command).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut manifest = RunManifest::new(command.name(), parameters);
    match command {
        Command::Inspect(a) => inspect(a, &mut manifest),
        Command::Subspace(a) => subspace_cmd(a, &mut manifest),
        Command::DebiasHard(a) => debias_hard(a, &mut manifest),
        Command::DebiasSoft(a) => debias_soft(a, &mut manifest),
        Command::EvalMac(a) => eval_mac(a, &mut manifest),
        Command::Compare(a) => compare(a, &mut manifest),
        Command::Analogies(a) => analogies(a, &mut manifest),
        Command::ClusterBias(a) => cluster_bias(a, &mut manifest),
    }?;
    let out = &command.run_args().out;
    let path = report::sidecar_path(out, "manifest.json");
    manifest.outputs.push(path.display().to_string());
    manifest.write(&path).map_err(data("writing manifest"))
}

fn record_input(manifest: &mut RunManifest, role: &str, path: &Path) -> Result<(), CliError> {
    manifest.add_input(role, path).map_err(data(path.display()))
}

fn load_store(input: &InputArgs, path: &Path, manifest: &mut RunManifest) -> Result<EmbeddingStore, CliError> {
    let format = if input.headerless {
        TextFormat::Headerless
    } else {
        TextFormat::Word2VecHeader
    };
    let store = EmbeddingStore::load_text(path, format).map_err(data(path.display()))?;
    record_input(manifest, "embeddings", path)?;
    if input.no_normalize {
        Ok(store)
    } else {
        store.normalize_all().map_err(data(path.display()))
    }
}

fn first_store(input: &InputArgs, manifest: &mut RunManifest) -> Result<EmbeddingStore, CliError> {
    if input.embeddings.len() > 1 {
        return Err(CliError::Usage("this subcommand takes a single --embeddings".into()));
    }
    load_store(input, &input.embeddings[0], manifest)
}

fn load_lexicon(input: &InputArgs, store: &EmbeddingStore, manifest: &mut RunManifest) -> Result<ResolvedLexicon, CliError> {
    let path = input
        .lexicon
        .as_ref()
        .ok_or_else(|| CliError::Usage("--lexicon is required".into()))?;
    let mut lexicon = Lexicon::parse_file(path).map_err(data(path.display()))?;
    record_input(manifest, "lexicon", path)?;
    if input.lowercase {
        lexicon = lexicon.lowercased().map_err(data(path.display()))?;
    }
    let policy = match input.missing {
        Missing::Error => MissingPolicy::Error,
        Missing::Skip => MissingPolicy::Skip,
    };
    let resolved = lexicon.resolve(store, policy).map_err(data(path.display()))?;
    for w in &resolved.warnings {
        log::warn!("{w}");
    }
    Ok(resolved)
}

fn emit(
    kind: ReportKind,
    payload: &impl Serialize,
    warnings: Vec<String>,
    out: &Path,
    format: OutputFormat,
    manifest: &mut RunManifest,
) -> Result<(), CliError> {
    let report = Report::new(kind, payload, manifest, warnings).map_err(data("building report"))?;
    report.write(out, format.into()).map_err(data("writing report"))?;
    manifest.outputs.push(out.display().to_string());
    Ok(())
}

fn identify(store: &EmbeddingStore, lexicon: &ResolvedLexicon, selection: &SelectionArgs) -> Result<BiasSubspace, CliError> {
    subspace::identify_bias_subspace(store, &lexicon.defining_sets, selection.selection()).map_err(data("bias subspace"))
}

fn inspect(a: &InspectArgs, manifest: &mut RunManifest) -> Result<(), CliError> {
    let store = first_store(&a.input, manifest)?;
    let mut neighbors = Vec::new();
    for word in &a.words {
        let query = store
            .vector(word)
            .ok_or_else(|| CliError::Data(format!("word {word:?} is not in the vocabulary")))?;
        let exclude = std::collections::HashSet::from([word.clone()]);
        for n in store.nearest_neighbors(query, a.neighbors, &exclude).map_err(data(word))? {
            neighbors.push(json!({"query": word, "word": n.word, "similarity": n.similarity}));
        }
    }
    let mut warnings = Vec::new();
    let coverage = match &a.input.lexicon {
        None => Value::Null,
        Some(path) => {
            let lexicon = Lexicon::parse_file(path).map_err(data(path.display()))?;
            record_input(manifest, "lexicon", path)?;
            let lexicon = if a.input.lowercase {
                lexicon.lowercased().map_err(data(path.display()))?
            } else {
                lexicon
            };
            match lexicon.resolve(&store, MissingPolicy::Skip) {
                Ok(r) => {
                    warnings = r.warnings.clone();
                    json!({
                        "defining_sets": r.defining_sets.iter().map(|s| json!({"name": s.name, "found": s.words})).collect::<Vec<_>>(),
                        "targets": r.targets.iter().map(|s| json!({"name": s.name, "found": s.words})).collect::<Vec<_>>(),
                        "attributes": r.attributes.iter().map(|s| json!({"name": s.name, "found": s.words})).collect::<Vec<_>>(),
                    })
                }
                Err(e) => {
                    warnings.push(e.to_string());
                    Value::Null
                }
            }
        }
    };
    let payload = json!({
        "vocab_size": store.len(),
        "dim": store.dim(),
        "normalized": store.is_normalized(),
        "normalized_on_load": !a.input.no_normalize,
        "neighbors": neighbors,
        "lexicon_coverage": coverage,
    });
    emit(ReportKind::Inspect, &payload, warnings, &a.run.out, a.format.format, manifest)
}

fn subspace_cmd(a: &SubspaceArgs, manifest: &mut RunManifest) -> Result<(), CliError> {
    let store = first_store(&a.input, manifest)?;
    let lexicon = load_lexicon(&a.input, &store, manifest)?;
    let sub = identify(&store, &lexicon, &a.selection)?;
    let payload = subspace::spectrum_report(&store, &sub, a.top);
    emit(ReportKind::Spectrum, &payload, lexicon.warnings, &a.run.out, a.format.format, manifest)
}

fn provenance_payload(result: &DebiasResult, sub: &BiasSubspace, extra: Value) -> Value {
    let mut v = json!({
        "method": result.method,
        "k": result.k,
        "lambda": result.lambda,
        "basis": sub.basis(),
        "eigenvalues": sub.eigenvalues(),
        "explained_variance_ratio": sub.explained_variance_ratio(),
        "neutralized_count": result.neutralized.len(),
        "equalized": result.equalized,
        "skipped": result.skipped,
        "provenance": result.provenance,
        "vocab_size": result.store.len(),
    });
    if let (Value::Object(m), Value::Object(e)) = (&mut v, extra) {
        m.extend(e);
    }
    v
}

fn write_store(store: &EmbeddingStore, out: &Path, manifest: &mut RunManifest) -> Result<(), CliError> {
    store
        .save_text(out, TextFormat::Word2VecHeader)
        .map_err(data(out.display()))?;
    manifest.outputs.push(out.display().to_string());
    Ok(())
}

fn debias_hard(a: &HardArgs, manifest: &mut RunManifest) -> Result<(), CliError> {
    let store = first_store(&a.input, manifest)?;
    let lexicon = load_lexicon(&a.input, &store, manifest)?;
    let sub = identify(&store, &lexicon, &a.selection)?;
    let result = hard::hard_debias(&store, &lexicon, &sub).map_err(data("hard debias"))?;
    for w in &result.warnings {
        log::warn!("{w}");
    }
    write_store(&result.store, &a.run.out, manifest)?;
    let payload = provenance_payload(&result, &sub, json!({}));
    let mut warnings = lexicon.warnings.clone();
    warnings.extend(result.warnings.iter().cloned());
    let path = report::sidecar_path(&a.run.out, "provenance.json");
    emit(ReportKind::DebiasProvenance, &payload, warnings, &path, OutputFormat::Json, manifest)
}

fn debias_soft(a: &SoftArgs, manifest: &mut RunManifest) -> Result<(), CliError> {
    let config = SoftDebiasConfig {
        lambda: a.lambda,
        max_iters: a.max_iters,
        rel_tol: a.rel_tol,
        step_init: a.step_init,
        seed: a.run.seed,
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let store = first_store(&a.input, manifest)?;
    let lexicon = load_lexicon(&a.input, &store, manifest)?;
    let sub = identify(&store, &lexicon, &a.selection)?;
    let outcome = soft::soft_debias(&store, &lexicon, &sub, &config, a.renormalize).map_err(data("soft debias"))?;
    for w in &outcome.result.warnings {
        log::warn!("{w}");
    }
    write_store(&outcome.result.store, &a.run.out, manifest)?;

    let mut log_tsv = String::from("iteration\ttotal\tfidelity\tbias\tstep\n");
    for r in &outcome.log {
        log_tsv.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            r.iteration,
            report::format_float(r.total),
            report::format_float(r.fidelity),
            report::format_float(r.bias),
            report::format_float(r.step)
        ));
    }
    let log_path = report::sidecar_path(&a.run.out, "objective.tsv");
    report::write_atomic(&log_path, log_tsv.as_bytes()).map_err(data(log_path.display()))?;
    manifest.outputs.push(log_path.display().to_string());

    let transform: Vec<Vec<f64>> = outcome
        .transform
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect();
    let payload = provenance_payload(
        &outcome.result,
        &sub,
        json!({
            "objective": outcome.breakdown,
            "condition_number": outcome.condition_number,
            "transform": transform,
            "config": config,
            "renormalize": a.renormalize,
        }),
    );
    let mut warnings = lexicon.warnings.clone();
    warnings.extend(outcome.result.warnings.iter().cloned());
    let path = report::sidecar_path(&a.run.out, "provenance.json");
    emit(ReportKind::DebiasProvenance, &payload, warnings, &path, OutputFormat::Json, manifest)
}

fn read_mac(path: &Path, manifest: &mut RunManifest, role: &str) -> Result<MacReport, CliError> {
    let report = Report::read(path).map_err(data(path.display()))?;
    if report.kind != ReportKind::Mac {
        return Err(CliError::Data(format!("{}: expected a mac report, found {}", path.display(), report.kind)));
    }
    record_input(manifest, role, path)?;
    serde_json::from_value(report.payload).map_err(data(path.display()))
}

fn eval_mac(a: &EvalMacArgs, manifest: &mut RunManifest) -> Result<(), CliError> {
    let store = first_store(&a.input, manifest)?;
    let lexicon = load_lexicon(&a.input, &store, manifest)?;
    let mut result = eval::mac(&store, &lexicon.targets, &lexicon.attributes).map_err(data("MAC"))?;
    if let Some(path) = &a.baseline {
        let baseline = read_mac(path, manifest, "baseline")?;
        result = result.with_comparison(&baseline).map_err(data(path.display()))?;
    }
    emit(ReportKind::Mac, &result, lexicon.warnings, &a.run.out, a.format.format, manifest)
}

fn compare(a: &CompareArgs, manifest: &mut RunManifest) -> Result<(), CliError> {
    let before = read_mac(&a.before, manifest, "before")?;
    let after = read_mac(&a.after, manifest, "after")?;
    let test = eval::compare(&before, &after).map_err(data("compare"))?;
    let mut payload = serde_json::to_value(test).map_err(data("compare"))?;
    let m = payload.as_object_mut().unwrap();
    m.insert("mac_before".into(), json!(before.mac));
    m.insert("mac_after".into(), json!(after.mac));
    emit(ReportKind::Comparison, &payload, Vec::new(), &a.run.out, a.format.format, manifest)
}

fn parse_pair(s: &str) -> Result<(String, String), CliError> {
    match s.split_once(':') {
        Some((a, b)) if !a.is_empty() && !b.is_empty() => Ok((a.to_string(), b.to_string())),
        _ => Err(CliError::Usage(format!("--pair expects A:B, got {s:?}"))),
    }
}

fn analogies(a: &AnalogyArgs, manifest: &mut RunManifest) -> Result<(), CliError> {
    let stores = a
        .input
        .embeddings
        .iter()
        .map(|p| load_store(&a.input, p, manifest))
        .collect::<Result<Vec<_>, _>>()?;
    let mut warnings = Vec::new();
    let seeds: Vec<(String, String)> = if !a.pairs.is_empty() {
        a.pairs.iter().map(|p| parse_pair(p)).collect::<Result<_, _>>()?
    } else if a.input.lexicon.is_some() {
        let lexicon = load_lexicon(&a.input, &stores[0], manifest)?;
        warnings = lexicon.warnings.clone();
        lexicon
            .analogy_seeds
            .iter()
            .map(|&(x, y)| (stores[0].word(x).to_string(), stores[0].word(y).to_string()))
            .collect()
    } else {
        return Err(CliError::Usage("give --pair or a --lexicon with analogy_seeds".into()));
    };
    let delta = if a.delta < 0.0 { f64::INFINITY } else { a.delta };
    let refs: Vec<&EmbeddingStore> = stores.iter().collect();
    let mut candidates: Vec<AnalogyCandidate> = Vec::new();
    for (x, y) in &seeds {
        let found = diagnostics::generate_analogies(&refs, (x, y), a.top, delta).map_err(data(format!("seed {x}:{y}")))?;
        candidates.extend(found);
    }
    emit(ReportKind::Analogy, &candidates, warnings, &a.run.out, a.format.format, manifest)
}

fn read_professions(path: &Path) -> Result<Vec<String>, CliError> {
    let text = std::fs::read_to_string(path).map_err(data(path.display()))?;
    if text.trim_start().starts_with('[') {
        return serde_json::from_str(&text).map_err(data(path.display()));
    }
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

fn cluster_bias(a: &ClusterArgs, manifest: &mut RunManifest) -> Result<(), CliError> {
    let biased = first_store(&a.input, manifest)?;
    let debiased = load_store(&a.input, &a.debiased, manifest)?;
    let lexicon = load_lexicon(&a.input, &biased, manifest)?;
    let mut warnings = lexicon.warnings.clone();
    let defining = match &a.defining_set {
        None => &lexicon.defining_sets[0],
        Some(name) => lexicon
            .defining_sets
            .iter()
            .find(|s| &s.name == name)
            .ok_or_else(|| CliError::Usage(format!("no defining set named {name:?}")))?,
    };
    let mut professions = read_professions(&a.professions)?;
    record_input(manifest, "professions", &a.professions)?;
    if a.input.lowercase {
        professions.iter_mut().for_each(|p| *p = p.to_lowercase());
    }
    let (present, absent): (Vec<String>, Vec<String>) = professions
        .into_iter()
        .partition(|p| biased.contains(p) && debiased.contains(p));
    if !absent.is_empty() {
        let msg = format!("professions missing from a store: {}", absent.join(", "));
        match a.input.missing {
            Missing::Error => return Err(CliError::Data(msg)),
            Missing::Skip => {
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
    }
    let result = diagnostics::cluster_bias_report(&biased, &debiased, &defining.words, &present, a.neighbors, a.top_biased)
        .map_err(data("cluster bias"))?;
    emit(ReportKind::Cluster, &result, warnings, &a.run.out, a.format.format, manifest)
}
