//! `ngramlm`: train, prune, evaluate, and compare backoff n-gram models.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or model error. Reports go
//! to standard output; models go to files, each accompanied by a
//! `<output>.manifest.json` recording the full flag set and input digests.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use ngram_lm::arpa::{document_to_model_unvalidated, read_arpa, read_arpa_document, write_arpa};
use ngram_lm::counts::{count_ngrams, CountOptions, CountTable, VocabPolicy};
use ngram_lm::estimate::{estimate_model, EstimateOptions};
use ngram_lm::eval::{perplexity, OovPolicy, PerplexityReport};
use ngram_lm::model::BackoffModel;
use ngram_lm::prune::{
    prune_by_threshold_with, prune_top_k_scored, score_candidates, selection_overlap,
    top_k_keys, write_candidates_tsv, Criterion, PruneReport, ThresholdOn,
};

#[derive(Parser)]
#[command(
    name = "ngramlm",
    version,
    about = "Backoff n-gram language models: train, prune, evaluate, compare"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Count a corpus and estimate a Good-Turing backoff model (ARPA output).
    Train(TrainArgs),
    /// Remove n-grams by score threshold or ranked retention.
    Prune(PruneArgs),
    /// Evaluate test-set perplexity.
    Ppl(PplArgs),
    /// Prune by both criteria at several sizes and compare perplexities.
    Compare(CompareArgs),
    /// Check the closure and normalization invariants of a model file.
    Validate(ValidateArgs),
}

#[derive(Args, Serialize)]
struct TrainArgs {
    /// Training corpus: UTF-8 text, one sentence per line.
    corpus: PathBuf,
    /// Output ARPA file.
    #[arg(short, long)]
    output: PathBuf,
    /// Model order.
    #[arg(long, default_value_t = 3)]
    order: usize,
    /// Good-Turing cutoff: counts above it are not discounted.
    #[arg(long, default_value_t = 7)]
    cutoff: u64,
    /// Disable discounting (maximum-likelihood estimates).
    #[arg(long)]
    no_discount: bool,
    /// Per-order minimum counts, comma separated (unigram minimum must be 1).
    #[arg(long, value_delimiter = ',')]
    min_counts: Vec<u64>,
    /// Vocabulary policy.
    #[arg(long, value_enum, default_value_t = VocabMode::Closed)]
    vocab: VocabMode,
    /// Reject corpus lines with more tokens than this.
    #[arg(long, default_value_t = 50_000)]
    max_line_tokens: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum VocabMode {
    Closed,
    OpenUnk,
}

#[derive(Args, Serialize)]
struct PruneArgs {
    /// Input ARPA model.
    #[arg(long)]
    model: PathBuf,
    /// Output ARPA file.
    #[arg(short, long)]
    output: PathBuf,
    /// Remove all n-grams whose relative perplexity increase is below this.
    #[arg(long)]
    theta: Option<f64>,
    /// Interpret --theta as a bound on the entropy change in nats instead of
    /// the relative perplexity increase (the two nearly coincide for small
    /// thresholds).
    #[arg(long)]
    theta_on_entropy: bool,
    /// Keep this many of the highest-scoring n-grams instead of thresholding.
    #[arg(long)]
    top_k: Option<usize>,
    /// Ranking criterion for --top-k.
    #[arg(long, value_enum, default_value_t = CriterionMode::Re)]
    criterion: CriterionMode,
    /// Orders to prune, comma separated (default: all orders from 2 up).
    #[arg(long, value_delimiter = ',')]
    orders: Vec<usize>,
    /// Write all candidate scores as TSV before pruning.
    #[arg(long)]
    dump_candidates: Option<PathBuf>,
    /// Write the prune report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum CriterionMode {
    Re,
    Sr,
}

impl From<CriterionMode> for Criterion {
    fn from(mode: CriterionMode) -> Criterion {
        match mode {
            CriterionMode::Re => Criterion::RelativeEntropy,
            CriterionMode::Sr => Criterion::WeightedDifference,
        }
    }
}

#[derive(Args, Serialize)]
struct PplArgs {
    /// ARPA model.
    #[arg(long)]
    model: PathBuf,
    /// Evaluation corpus: one sentence per line.
    corpus: PathBuf,
    /// Out-of-vocabulary policy.
    #[arg(long, value_enum, default_value_t = OovMode::Skip)]
    oov: OovMode,
    /// Emit the report as a single JSON object.
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum OovMode {
    Skip,
    Unk,
}

#[derive(Args, Serialize)]
struct CompareArgs {
    /// ARPA model.
    #[arg(long)]
    model: PathBuf,
    /// Corpus on which the pruned models' perplexities are measured.
    #[arg(long)]
    corpus: PathBuf,
    /// Retention sizes, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    k: Vec<usize>,
    /// Orders to prune (default: the top order only).
    #[arg(long, value_delimiter = ',')]
    orders: Vec<usize>,
    /// Emit rows as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Serialize)]
struct ValidateArgs {
    /// ARPA model.
    #[arg(long)]
    model: PathBuf,
    /// Normalization tolerance on probability sums.
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f64,
}

enum CliError {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(err: anyhow::Error) -> Self {
        CliError::Data(err)
    }
}

impl From<ngram_lm::Error> for CliError {
    fn from(err: ngram_lm::Error) -> Self {
        CliError::Data(err.into())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return ExitCode::from(if err.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(message)) => {
            eprintln!("usage error: {message}");
            ExitCode::from(1)
        }
        Err(CliError::Data(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Prune(args) => cmd_prune(args),
        Command::Ppl(args) => cmd_ppl(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Validate(args) => cmd_validate(args),
    }
}

fn open_reader(path: &Path) -> Result<BufReader<File>, CliError> {
    let file = File::open(path)
        .with_context(|| format!("opening {}", path.display()))
        .map_err(CliError::Data)?;
    Ok(BufReader::new(file))
}

fn load_model(path: &Path) -> Result<BackoffModel, CliError> {
    let reader = open_reader(path)?;
    read_arpa(reader)
        .with_context(|| format!("reading model {}", path.display()))
        .map_err(CliError::Data)
}

fn write_model(model: &BackoffModel, path: &Path) -> Result<(), CliError> {
    let file = File::create(path)
        .with_context(|| format!("creating {}", path.display()))
        .map_err(CliError::Data)?;
    let mut writer = BufWriter::new(file);
    write_arpa(model, &mut writer)?;
    writer.flush().context("flushing model file").map_err(CliError::Data)?;
    Ok(())
}

fn sha256_file(path: &Path) -> Result<String, CliError> {
    let mut reader = open_reader(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 65536];
    loop {
        let n = reader
            .read(&mut buf)
            .with_context(|| format!("hashing {}", path.display()))
            .map_err(CliError::Data)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

#[derive(Serialize)]
struct Manifest<'a, F: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    flags: &'a F,
    /// input path -> sha256 of its bytes
    inputs: BTreeMap<String, String>,
}

fn write_manifest<F: Serialize>(
    output: &Path,
    command: &str,
    flags: &F,
    input_paths: &[&Path],
) -> Result<(), CliError> {
    let mut inputs = BTreeMap::new();
    for path in input_paths {
        inputs.insert(path.display().to_string(), sha256_file(path)?);
    }
    let manifest = Manifest {
        tool: "ngramlm",
        version: env!("CARGO_PKG_VERSION"),
        command,
        flags,
        inputs,
    };
    let path = manifest_path(output);
    let text = serde_json::to_string_pretty(&manifest)
        .context("serializing manifest")
        .map_err(CliError::Data)?;
    std::fs::write(&path, text + "\n")
        .with_context(|| format!("writing {}", path.display()))
        .map_err(CliError::Data)?;
    Ok(())
}

fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    if args.order < 1 {
        return Err(CliError::Usage("--order must be at least 1".to_string()));
    }
    if args.min_counts.first().copied().unwrap_or(1) > 1 {
        return Err(CliError::Usage(
            "the unigram minimum count must stay 1".to_string(),
        ));
    }
    let policy = match args.vocab {
        VocabMode::Closed => VocabPolicy::Closed,
        VocabMode::OpenUnk => VocabPolicy::OpenUnk,
    };
    let options = CountOptions {
        max_line_tokens: args.max_line_tokens,
    };
    let counts = count_ngrams(open_reader(&args.corpus)?, args.order, policy, &options)?;
    let estimate_options = EstimateOptions {
        cutoff: args.cutoff,
        discounting: !args.no_discount,
        min_counts: args.min_counts.clone(),
    };
    let estimated = estimate_model(&counts, &estimate_options)?;
    for warning in &estimated.warnings {
        eprintln!("warning: {warning}");
    }
    write_model(&estimated.model, &args.output)?;
    write_manifest(&args.output, "train", &args, &[&args.corpus])?;
    println!("trained order-{} model from {}", args.order, args.corpus.display());
    for order in 1..=estimated.model.order() {
        println!("  {order}-grams: {}", estimated.model.ngram_count(order));
    }
    println!("model written to {}", args.output.display());
    Ok(())
}

fn default_prune_orders(model: &BackoffModel) -> Vec<usize> {
    (2..=model.order()).collect()
}

fn cmd_prune(args: PruneArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let orders = if args.orders.is_empty() {
        default_prune_orders(&model)
    } else {
        args.orders.clone()
    };
    if model.order() < 2 {
        return Err(CliError::Usage(
            "a unigram model has nothing to prune".to_string(),
        ));
    }

    if let Some(path) = &args.dump_candidates {
        let candidates = score_candidates(&model, &orders, None)?;
        let file = File::create(path)
            .with_context(|| format!("creating {}", path.display()))
            .map_err(CliError::Data)?;
        write_candidates_tsv(&model, &candidates, args.criterion.into(), BufWriter::new(file))?;
    }

    let (pruned, report) = match (args.theta, args.top_k) {
        (Some(theta), None) => {
            if args.criterion == CriterionMode::Sr {
                return Err(CliError::Usage(
                    "the sr criterion ranks n-grams; use it with --top-k".to_string(),
                ));
            }
            let on = if args.theta_on_entropy {
                ThresholdOn::DeltaEntropy
            } else {
                ThresholdOn::RelPplIncrease
            };
            prune_by_threshold_with(&model, theta, on, &orders)?
        }
        (None, Some(k)) => {
            let candidates = score_candidates(&model, &orders, None)?;
            prune_top_k_scored(&model, &candidates, args.criterion.into(), k, &orders)?
        }
        _ => {
            return Err(CliError::Usage(
                "exactly one of --theta or --top-k is required".to_string(),
            ))
        }
    };

    write_model(&pruned, &args.output)?;
    write_manifest(&args.output, "prune", &args, &[&args.model])?;
    print!("{}", render_prune_report(&report));
    if let Some(path) = &args.report {
        let text = serde_json::to_string_pretty(&report)
            .context("serializing prune report")
            .map_err(CliError::Data)?;
        std::fs::write(path, text + "\n")
            .with_context(|| format!("writing {}", path.display()))
            .map_err(CliError::Data)?;
    }
    println!("model written to {}", args.output.display());
    Ok(())
}

fn render_prune_report(report: &PruneReport) -> String {
    let mut out = String::new();
    let mode = match &report.mode {
        ngram_lm::prune::PruneMode::Threshold { theta, on } => format!(
            "theta {theta} on {}",
            match on {
                ThresholdOn::RelPplIncrease => "relative perplexity increase",
                ThresholdOn::DeltaEntropy => "entropy (nats)",
            }
        ),
        ngram_lm::prune::PruneMode::TopK { k } => format!("top-{k}"),
    };
    out.push_str(&format!(
        "pruned with criterion {} ({mode})\n",
        report.criterion.as_str()
    ));
    out.push_str("order  original  retained  removed  protected\n");
    for row in &report.per_order {
        out.push_str(&format!(
            "{:>5}  {:>8}  {:>8}  {:>7}  {:>9}\n",
            row.order, row.original, row.retained, row.removed, row.protected_retained
        ));
    }
    out.push_str(&format!(
        "summed delta entropy of removed n-grams: {:.6e} nats\n",
        report.removed_delta_entropy
    ));
    out.push_str(&format!(
        "scoring and rebuild took {:.3}s\n",
        report.duration.as_secs_f64()
    ));
    out
}

fn cmd_ppl(args: PplArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let policy = match args.oov {
        OovMode::Skip => OovPolicy::Skip,
        OovMode::Unk => OovPolicy::MapToUnk,
    };
    let report: PerplexityReport = perplexity(&model, open_reader(&args.corpus)?, policy)?;
    if args.json {
        let text = serde_json::to_string_pretty(&report)
            .context("serializing report")
            .map_err(CliError::Data)?;
        println!("{text}");
    } else {
        print!("{}", report.render_text());
    }
    Ok(())
}

#[derive(Serialize)]
struct CompareRow {
    k: usize,
    ppl_re: f64,
    ppl_sr: f64,
    overlap_count: usize,
    overlap_fraction: f64,
}

fn cmd_compare(args: CompareArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    if model.order() < 2 {
        return Err(CliError::Usage(
            "a unigram model has nothing to prune".to_string(),
        ));
    }
    let orders = if args.orders.is_empty() {
        vec![model.order()]
    } else {
        args.orders.clone()
    };
    if args.k.is_empty() {
        return Err(CliError::Usage("--k needs at least one size".to_string()));
    }
    // One scoring pass serves every row: scores are defined against the
    // original model.
    let candidates = score_candidates(&model, &orders, None)?;
    let mut rows = Vec::new();
    for &k in &args.k {
        let (re_model, _) = prune_top_k_scored(
            &model,
            &candidates,
            Criterion::RelativeEntropy,
            k,
            &orders,
        )?;
        let (sr_model, _) = prune_top_k_scored(
            &model,
            &candidates,
            Criterion::WeightedDifference,
            k,
            &orders,
        )?;
        let ppl_re = perplexity(&re_model, open_reader(&args.corpus)?, OovPolicy::Skip)?;
        let ppl_sr = perplexity(&sr_model, open_reader(&args.corpus)?, OovPolicy::Skip)?;
        let re_keys = top_k_keys(&candidates, Criterion::RelativeEntropy, k);
        let sr_keys = top_k_keys(&candidates, Criterion::WeightedDifference, k);
        let (overlap_count, overlap_fraction) = selection_overlap(&re_keys, &sr_keys);
        rows.push(CompareRow {
            k,
            ppl_re: ppl_re.perplexity,
            ppl_sr: ppl_sr.perplexity,
            overlap_count,
            overlap_fraction,
        });
    }
    if args.json {
        let text = serde_json::to_string_pretty(&rows)
            .context("serializing comparison")
            .map_err(CliError::Data)?;
        println!("{text}");
    } else {
        println!("{:>10}  {:>12}  {:>12}  {:>10}  {:>8}", "k", "ppl_re", "ppl_sr", "overlap", "fraction");
        for row in &rows {
            println!(
                "{:>10}  {:>12.4}  {:>12.4}  {:>10}  {:>8.4}",
                row.k, row.ppl_re, row.ppl_sr, row.overlap_count, row.overlap_fraction
            );
        }
    }
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<(), CliError> {
    let doc = read_arpa_document(open_reader(&args.model)?)?;
    let model = document_to_model_unvalidated(&doc)?;
    let report = model.validate_with_tolerance(args.tolerance);
    if report.is_clean() {
        println!("ok: {} n-grams, order {}", model.total_ngrams(), model.order());
        Ok(())
    } else {
        for violation in &report.closure_violations {
            println!("closure: {violation}");
        }
        for (history, defect) in &report.normalization_violations {
            println!("normalization: history \"{history}\" sum defect {defect:+e}");
        }
        for violation in &report.entry_violations {
            println!("entry: {violation}");
        }
        Err(CliError::Data(anyhow!(
            "{} violations",
            report.closure_violations.len()
                + report.normalization_violations.len()
                + report.entry_violations.len()
        )))
    }
}

// Keep CountTable in the public signature surface referenced (SR weights are
// exercised through the library API and the acceptance suite).
#[allow(dead_code)]
fn _count_table_marker(_: &CountTable) {}
