//! Command-line interface.
//!
//! Every subcommand maps onto one library entry point; the binary in
//! `src/bin/synperf.rs` is a thin wrapper around [`run`]. Exit codes separate
//! caller mistakes from our own: 0 success, 1 usage, 2 bad input data,
//! 3 internal failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use crate::datagen::{
    self, generate_dataset, load_jsonl, write_jsonl, OracleProfile, ParamRanges, SyntheticOracle,
};
use crate::decompose::{KernelCategory, KernelParams};
use crate::e2e::{
    generate_trace, load_trace, predict_e2e, write_trace, CommModel, EstimatorSet, ModelConfig,
    ParallelConfig, PhaseTag, Request,
};
use crate::error::{Error, Result};
use crate::estimator::{
    build_features, gap_report, prepare_samples, Estimator, Sample, PERF_GAP_THRESHOLD,
};
use crate::features::FeatureVector;
use crate::hwspec::{HardwareSpec, Precision, SpecRegistry};
use crate::nn::{Loss, TrainConfig};
use crate::tiling::TilingTable;

/// Environment variable holding the default hardware spec directory.
pub const SPEC_DIR_ENV: &str = "SYNPERF_SPEC_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "synperf",
    version,
    about = "Kernel and end-to-end GPU latency prediction",
    max_term_width = 100
)]
pub struct Cli {
    /// Emit machine-readable JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    /// Directory of hardware spec files (default: $SYNPERF_SPEC_DIR).
    #[arg(long, global = true, value_name = "DIR")]
    pub spec_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Inspect hardware spec files.
    Spec(SpecArgs),
    /// Decompose one kernel and print its feature vector.
    Features(FeaturesArgs),
    /// Generate a synthetic labeled dataset.
    Synth(SynthArgs),
    /// Train a per-category efficiency estimator.
    Train(TrainArgs),
    /// Score a trained estimator on labeled data.
    Evaluate(EvaluateArgs),
    /// Predict the latency of one kernel invocation.
    PredictKernel(PredictKernelArgs),
    /// Expand a model and request into a kernel/collective trace.
    GenTrace(GenTraceArgs),
    /// Price a trace end to end on one GPU.
    PredictE2e(PredictE2eArgs),
    /// Find hardware running below its expected efficiency band.
    Gap(GapArgs),
}

#[derive(Debug, Args)]
pub struct SpecArgs {
    #[command(subcommand)]
    pub action: SpecAction,
}

#[derive(Debug, Subcommand)]
pub enum SpecAction {
    /// Parse specs, check invariants, and print plausibility warnings.
    Validate(SpecValidateArgs),
}

#[derive(Debug, Args)]
pub struct SpecValidateArgs {
    /// Spec file or name; omit to validate every spec in the directory.
    #[arg(long, value_name = "REF")]
    pub hw: Option<String>,
    /// Treat plausibility warnings as errors.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    /// Hardware spec file or name.
    #[arg(long, value_name = "REF")]
    pub hw: String,
    /// Kernel category.
    #[arg(long)]
    pub category: KernelCategory,
    /// Kernel parameters as a JSON object, e.g. '{"M":4096,"N":4096,"K":4096}'.
    #[arg(long, value_name = "JSON")]
    pub params: String,
    /// Element type (default: the category's usual precision).
    #[arg(long)]
    pub precision: Option<Precision>,
    /// Kernel tiling table file (default: built-in table).
    #[arg(long, value_name = "FILE")]
    pub tiling: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Hardware spec files or names (repeat or comma-separate).
    #[arg(long = "hw", value_name = "REF", value_delimiter = ',', required = true)]
    pub hw: Vec<String>,
    /// Kernel categories to draw (default: all).
    #[arg(long, value_delimiter = ',')]
    pub categories: Vec<KernelCategory>,
    /// Samples per (category, hardware) pair.
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    /// RNG seed; reruns with the same seed reproduce the dataset exactly.
    #[arg(long)]
    pub seed: u64,
    /// Synthetic response profile file (default: one built-in profile).
    #[arg(long, value_name = "FILE")]
    pub oracle: Option<PathBuf>,
    /// Kernel tiling table file (default: built-in table).
    #[arg(long, value_name = "FILE")]
    pub tiling: Option<PathBuf>,
    /// Output JSONL path.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labeled dataset (JSONL).
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    /// Kernel category to train on.
    #[arg(long)]
    pub category: KernelCategory,
    /// Training loss: "mape" or "quantile".
    #[arg(long, default_value = "mape")]
    pub loss: String,
    /// Target quantile when --loss quantile.
    #[arg(long, default_value_t = 0.8)]
    pub quantile: f64,
    /// RNG seed for initialization, shuffling, and dropout.
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    /// Fraction of samples held out for early stopping.
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
    /// Epochs without validation improvement tolerated before stopping.
    #[arg(long, default_value_t = 20)]
    pub patience: usize,
    #[arg(long, default_value_t = 0.01)]
    pub weight_decay: f64,
    /// Kernel tiling table file (default: built-in table).
    #[arg(long, value_name = "FILE")]
    pub tiling: Option<PathBuf>,
    /// Output model path.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Labeled dataset (JSONL).
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    /// Trained estimator file.
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Kernel tiling table file (default: built-in table).
    #[arg(long, value_name = "FILE")]
    pub tiling: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictKernelArgs {
    /// Trained estimator file; fixes the kernel category.
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Hardware spec file or name.
    #[arg(long, value_name = "REF")]
    pub hw: String,
    /// Kernel parameters as a JSON object.
    #[arg(long, value_name = "JSON")]
    pub params: String,
    /// Element type (default: the category's usual precision).
    #[arg(long)]
    pub precision: Option<Precision>,
    /// Kernel tiling table file (default: built-in table).
    #[arg(long, value_name = "FILE")]
    pub tiling: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenTraceArgs {
    /// Transformer shape file.
    #[arg(long, value_name = "FILE")]
    pub model_config: PathBuf,
    /// Prompt length per sequence (comma-separated).
    #[arg(long, value_delimiter = ',', required = true)]
    pub prompts: Vec<u64>,
    /// Tokens generated per sequence after prefill.
    #[arg(long, default_value_t = 0)]
    pub decode_steps: u64,
    /// Tensor-parallel degree.
    #[arg(long, default_value_t = 1)]
    pub tp: u32,
    /// Pipeline-parallel degree.
    #[arg(long, default_value_t = 1)]
    pub pp: u32,
    /// Output trace path (JSONL).
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictE2eArgs {
    /// Trace file (JSONL) from gen-trace.
    #[arg(long, value_name = "FILE")]
    pub trace: PathBuf,
    /// Hardware spec file or name.
    #[arg(long, value_name = "REF")]
    pub hw: String,
    /// Directory of trained <category>.json estimators.
    #[arg(long, value_name = "DIR")]
    pub models: PathBuf,
    /// Collective latency table; required when the trace has collectives.
    #[arg(long, value_name = "FILE")]
    pub comm: Option<PathBuf>,
    /// Kernel tiling table file (default: built-in table).
    #[arg(long, value_name = "FILE")]
    pub tiling: Option<PathBuf>,
    /// Print one CSV row per trace entry instead of the summary.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Debug, Args)]
pub struct GapArgs {
    /// Labeled dataset (JSONL) of fleet measurements.
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    /// Trained quantile estimator file.
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Efficiency shortfall that counts as underperforming.
    #[arg(long, default_value_t = PERF_GAP_THRESHOLD)]
    pub threshold: f64,
    /// Kernel tiling table file (default: built-in table).
    #[arg(long, value_name = "FILE")]
    pub tiling: Option<PathBuf>,
}

/// Exit code for a library error: bad input data is the caller's problem (2),
/// anything else is ours (3).
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } | Error::Parse { .. } | Error::Validation(_) | Error::Unsupported(_) => 2,
        Error::Training(_) | Error::Internal(_) => 3,
    }
}

/// Parse and dispatch; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("synperf: error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Spec(args) => match &args.action {
            SpecAction::Validate(v) => cmd_spec_validate(cli, v),
        },
        Command::Features(args) => cmd_features(cli, args),
        Command::Synth(args) => cmd_synth(cli, args),
        Command::Train(args) => cmd_train(cli, args),
        Command::Evaluate(args) => cmd_evaluate(cli, args),
        Command::PredictKernel(args) => cmd_predict_kernel(cli, args),
        Command::GenTrace(args) => cmd_gen_trace(cli, args),
        Command::PredictE2e(args) => cmd_predict_e2e(cli, args),
        Command::Gap(args) => cmd_gap(cli, args),
    }
}

/// The spec directory: the flag wins, then the environment.
fn spec_dir(cli: &Cli) -> Result<PathBuf> {
    if let Some(dir) = &cli.spec_dir {
        return Ok(dir.clone());
    }
    match std::env::var_os(SPEC_DIR_ENV) {
        Some(v) if !v.is_empty() => Ok(PathBuf::from(v)),
        _ => Err(Error::validation(format!(
            "no spec directory: pass --spec-dir or set {SPEC_DIR_ENV}"
        ))),
    }
}

/// A hardware reference is either a spec file path or a name resolved against
/// the spec directory.
fn resolve_spec(cli: &Cli, hw: &str) -> Result<HardwareSpec> {
    let as_path = Path::new(hw);
    if as_path.is_file() {
        return HardwareSpec::from_path(as_path);
    }
    if hw.contains(std::path::MAIN_SEPARATOR) || hw.ends_with(".json") {
        return Err(Error::validation(format!(
            "hardware spec file not found: {hw}"
        )));
    }
    let dir = spec_dir(cli)?;
    let candidate = dir.join(format!("{hw}.json"));
    if candidate.is_file() {
        return HardwareSpec::from_path(&candidate);
    }
    Err(Error::validation(format!(
        "unknown hardware '{hw}': no file {}",
        candidate.display()
    )))
}

fn load_registry(cli: &Cli) -> Result<SpecRegistry> {
    let dir = spec_dir(cli)?;
    let mut warnings = Vec::new();
    let registry = SpecRegistry::load_dir(&dir, &mut warnings)?;
    for w in warnings {
        eprintln!("synperf: warning: {w}");
    }
    Ok(registry)
}

fn load_tiling(path: &Option<PathBuf>) -> Result<TilingTable> {
    match path {
        Some(p) => TilingTable::from_path(p),
        None => Ok(TilingTable::builtin()),
    }
}

fn parse_params(category: KernelCategory, text: &str) -> Result<KernelParams> {
    let map: Map<String, Value> = serde_json::from_str(text)
        .map_err(|e| Error::validation(format!("--params is not a JSON object: {e}")))?;
    KernelParams::from_json_map(category, &map)
}

fn print_json(value: &Value) {
    // Pretty output is stable: maps are ordered, floats round-trip.
    println!("{}", serde_json::to_string_pretty(value).unwrap());
}

fn cmd_spec_validate(cli: &Cli, args: &SpecValidateArgs) -> Result<()> {
    let specs: Vec<HardwareSpec> = match &args.hw {
        Some(hw) => vec![resolve_spec(cli, hw)?],
        None => {
            let registry = load_registry(cli)?;
            registry.iter().cloned().collect()
        }
    };
    let mut total_warnings = 0usize;
    if cli.json {
        let rows: Vec<Value> = specs
            .iter()
            .map(|s| {
                let warnings = s.range_warnings();
                total_warnings += warnings.len();
                json!({
                    "name": s.name,
                    "compute_capability": s.compute_capability,
                    "num_sms": s.num_sms,
                    "warnings": warnings,
                })
            })
            .collect();
        print_json(&Value::Array(rows));
    } else {
        for spec in &specs {
            let warnings = spec.range_warnings();
            println!(
                "{}: ok (cc {}, {} SMs, {} warnings)",
                spec.name,
                spec.compute_capability,
                spec.num_sms,
                warnings.len()
            );
            for w in &warnings {
                println!("  warning: {w}");
            }
            total_warnings += warnings.len();
        }
    }
    if args.strict && total_warnings > 0 {
        return Err(Error::validation(format!(
            "{total_warnings} plausibility warning(s) with --strict"
        )));
    }
    Ok(())
}

fn cmd_features(cli: &Cli, args: &FeaturesArgs) -> Result<()> {
    let spec = resolve_spec(cli, &args.hw)?;
    let tiling = load_tiling(&args.tiling)?;
    let params = parse_params(args.category, &args.params)?;
    let precision = args
        .precision
        .unwrap_or_else(|| datagen::default_precision(args.category));
    let analysis = build_features(&params, precision, &spec, &tiling)?;
    let names = FeatureVector::names(args.category);
    let values = analysis.features.flatten();
    if cli.json {
        print_json(&json!({
            "category": args.category.as_str(),
            "hardware": spec.name,
            "precision": precision.to_string(),
            "names": names,
            "values": values,
            "theoretical_time_us": analysis.features.theoretical_time_us,
            "imbalance_ratio": analysis.imbalance_ratio,
        }));
        return Ok(());
    }
    println!("category            {}", args.category);
    println!("hardware            {}", spec.name);
    println!("precision           {precision}");
    for (name, value) in names.iter().zip(&values) {
        println!("{name:<22} {value:.6}");
    }
    println!("theoretical_time_us {:.6}", analysis.features.theoretical_time_us);
    println!("imbalance_ratio     {:.6}", analysis.imbalance_ratio);
    Ok(())
}

fn cmd_synth(cli: &Cli, args: &SynthArgs) -> Result<()> {
    let specs: Vec<HardwareSpec> = args
        .hw
        .iter()
        .map(|hw| resolve_spec(cli, hw))
        .collect::<Result<_>>()?;
    let spec_refs: Vec<&HardwareSpec> = specs.iter().collect();
    let categories: Vec<KernelCategory> = if args.categories.is_empty() {
        KernelCategory::ALL.to_vec()
    } else {
        args.categories.clone()
    };
    let oracle = match &args.oracle {
        Some(path) => SyntheticOracle::from_path(path)?,
        None => {
            let names: Vec<&str> = specs.iter().map(|s| s.name.as_str()).collect();
            SyntheticOracle::uniform(&names, OracleProfile::default())
        }
    };
    let tiling = load_tiling(&args.tiling)?;
    let records = generate_dataset(
        &categories,
        &spec_refs,
        args.count,
        &ParamRanges::default(),
        &oracle,
        &tiling,
        args.seed,
    )?;
    write_jsonl(&args.out, &records)?;
    if cli.json {
        print_json(&json!({
            "records": records.len(),
            "categories": categories.iter().map(|c| c.as_str()).collect::<Vec<_>>(),
            "hardware": specs.iter().map(|s| s.name.as_str()).collect::<Vec<_>>(),
            "seed": args.seed,
            "path": args.out,
        }));
        return Ok(());
    }
    println!(
        "wrote {} records to {} (seed {})",
        records.len(),
        args.out.display(),
        args.seed
    );
    Ok(())
}

fn make_loss(name: &str, quantile: f64) -> Result<Loss> {
    match name {
        "mape" => Ok(Loss::Mape),
        "quantile" => Ok(Loss::Quantile { q: quantile }),
        other => Err(Error::validation(format!(
            "unknown loss '{other}' (expected mape or quantile)"
        ))),
    }
}

fn cmd_train(cli: &Cli, args: &TrainArgs) -> Result<()> {
    let records = load_jsonl(&args.data)?;
    let registry = load_registry(cli)?;
    let tiling = load_tiling(&args.tiling)?;
    let (labeled, clamped) = prepare_samples(&records, args.category, &registry, &tiling)?;
    let samples: Vec<Sample> = labeled.into_iter().map(|(_, s)| s).collect();
    let cfg = TrainConfig {
        loss: make_loss(&args.loss, args.quantile)?,
        lr: args.lr,
        batch_size: args.batch_size,
        max_epochs: args.epochs,
        patience: args.patience,
        val_fraction: args.val_fraction,
        weight_decay: args.weight_decay,
        seed: args.seed,
    };
    let (estimator, report) = Estimator::fit(args.category, &samples, &cfg)?;
    estimator.save(&args.out)?;
    if cli.json {
        print_json(&json!({
            "category": args.category.as_str(),
            "samples": samples.len(),
            "clamped": clamped,
            "epochs_run": report.history.len(),
            "best_epoch": report.best_epoch,
            "best_val_loss": report.best_val_loss,
            "stopped_early": report.stopped_early,
            "path": args.out,
        }));
        return Ok(());
    }
    println!(
        "trained {} on {} samples ({} clamped): best val loss {:.6} at epoch {} ({} epochs run{})",
        args.category,
        samples.len(),
        clamped,
        report.best_val_loss,
        report.best_epoch,
        report.history.len(),
        if report.stopped_early {
            ", stopped early"
        } else {
            ""
        }
    );
    println!("wrote model to {}", args.out.display());
    Ok(())
}

/// Mean absolute percentage error of latency and the fraction of samples whose
/// measured efficiency fell at or below the prediction.
fn score(estimator: &Estimator, samples: &[Sample]) -> Result<(f64, f64)> {
    let mut ape_sum = 0.0;
    let mut covered = 0usize;
    for s in samples {
        let eff = estimator.efficiency_from_raw(&s.features)?;
        let pred_latency = s.theoretical_time_us / eff;
        let measured = s.theoretical_time_us / s.efficiency;
        ape_sum += (pred_latency - measured).abs() / measured;
        if s.efficiency <= eff {
            covered += 1;
        }
    }
    let n = samples.len() as f64;
    Ok((ape_sum / n, covered as f64 / n))
}

fn cmd_evaluate(cli: &Cli, args: &EvaluateArgs) -> Result<()> {
    let estimator = Estimator::load(&args.model)?;
    let records = load_jsonl(&args.data)?;
    let registry = load_registry(cli)?;
    let tiling = load_tiling(&args.tiling)?;
    let (labeled, clamped) = prepare_samples(&records, estimator.category, &registry, &tiling)?;
    if labeled.is_empty() {
        return Err(Error::validation(format!(
            "dataset has no {} records",
            estimator.category
        )));
    }
    let samples: Vec<Sample> = labeled.into_iter().map(|(_, s)| s).collect();
    let (mape, coverage) = score(&estimator, &samples)?;
    if cli.json {
        print_json(&json!({
            "category": estimator.category.as_str(),
            "samples": samples.len(),
            "clamped": clamped,
            "latency_mape": mape,
            "efficiency_coverage": coverage,
        }));
        return Ok(());
    }
    println!("category             {}", estimator.category);
    println!("samples              {} ({clamped} clamped)", samples.len());
    println!("latency MAPE         {mape:.4}");
    println!("efficiency coverage  {coverage:.4}");
    Ok(())
}

fn cmd_predict_kernel(cli: &Cli, args: &PredictKernelArgs) -> Result<()> {
    let estimator = Estimator::load(&args.model)?;
    let spec = resolve_spec(cli, &args.hw)?;
    let tiling = load_tiling(&args.tiling)?;
    let params = parse_params(estimator.category, &args.params)?;
    let precision = args
        .precision
        .unwrap_or_else(|| datagen::default_precision(estimator.category));
    let analysis = build_features(&params, precision, &spec, &tiling)?;
    let prediction = estimator.predict_latency(&analysis.features)?;
    if cli.json {
        print_json(&json!({
            "category": estimator.category.as_str(),
            "hardware": spec.name,
            "latency_us": prediction.latency_us,
            "efficiency": prediction.efficiency,
            "theoretical_time_us": prediction.theoretical_time_us,
        }));
        return Ok(());
    }
    println!("latency_us           {:.6}", prediction.latency_us);
    println!("efficiency           {:.6}", prediction.efficiency);
    println!("theoretical_time_us  {:.6}", prediction.theoretical_time_us);
    Ok(())
}

fn cmd_gen_trace(cli: &Cli, args: &GenTraceArgs) -> Result<()> {
    let model = ModelConfig::from_path(&args.model_config)?;
    let par = ParallelConfig {
        tensor_parallel: args.tp,
        pipeline_parallel: args.pp,
    };
    let request = Request {
        prompt_lens: args.prompts.clone(),
        decode_steps: args.decode_steps,
    };
    let trace = generate_trace(&model, &par, &request)?;
    write_trace(&args.out, &trace)?;
    let kernels = trace
        .iter()
        .filter(|e| matches!(e.op, crate::e2e::TraceOp::Kernel { .. }))
        .count();
    if cli.json {
        print_json(&json!({
            "model": model.name,
            "entries": trace.len(),
            "kernels": kernels,
            "collectives": trace.len() - kernels,
            "path": args.out,
        }));
        return Ok(());
    }
    println!(
        "wrote {} trace entries ({} kernels, {} collectives) to {}",
        trace.len(),
        kernels,
        trace.len() - kernels,
        args.out.display()
    );
    Ok(())
}

fn phase_label(phase: PhaseTag) -> String {
    match phase {
        PhaseTag::Prefill => "prefill".to_string(),
        PhaseTag::Decode { step } => format!("decode:{step}"),
    }
}

fn cmd_predict_e2e(cli: &Cli, args: &PredictE2eArgs) -> Result<()> {
    let trace = load_trace(&args.trace)?;
    let spec = resolve_spec(cli, &args.hw)?;
    let tiling = load_tiling(&args.tiling)?;
    let estimators = EstimatorSet::load_dir(&args.models)?;
    let comm = match &args.comm {
        Some(path) => Some(CommModel::from_path(path)?),
        None => None,
    };
    let prediction = predict_e2e(&trace, &spec, &tiling, &estimators, comm.as_ref())?;
    if args.csv {
        println!("index,phase,stage,layer,label,latency_us");
        for e in &prediction.entries {
            let layer = e.layer.map(|l| l.to_string()).unwrap_or_default();
            println!(
                "{},{},{},{},{},{:.6}",
                e.index,
                phase_label(e.phase),
                e.stage,
                layer,
                e.label,
                e.latency_us
            );
        }
        return Ok(());
    }
    if cli.json {
        print_json(
            &serde_json::to_value(&prediction)
                .map_err(|e| Error::internal(format!("serializing prediction: {e}")))?,
        );
        return Ok(());
    }
    println!("total_us {:.6}", prediction.total_us);
    for (kind, agg) in &prediction.by_kind {
        println!("  {kind:<12} {:>6} entries  {:>14.6} us", agg.count, agg.total_us);
    }
    Ok(())
}

fn cmd_gap(cli: &Cli, args: &GapArgs) -> Result<()> {
    let estimator = Estimator::load(&args.model)?;
    let records = load_jsonl(&args.data)?;
    let registry = load_registry(cli)?;
    let tiling = load_tiling(&args.tiling)?;
    let (labeled, _) = prepare_samples(&records, estimator.category, &registry, &tiling)?;
    let report = gap_report(&estimator, &labeled, args.threshold)?;
    if cli.json {
        print_json(
            &serde_json::to_value(&report)
                .map_err(|e| Error::internal(format!("serializing report: {e}")))?,
        );
        return Ok(());
    }
    println!(
        "threshold {:.3}: {} of {} samples underperforming",
        report.threshold,
        report.total_underperforming(),
        report.rows.iter().map(|r| r.samples).sum::<usize>()
    );
    for row in &report.rows {
        println!(
            "  {:<16} {:>6}/{:<6} mean gap {:>8.4}  max gap {:>8.4}",
            row.hardware, row.underperforming, row.samples, row.mean_gap, row.max_gap
        );
    }
    println!("gap CDF:");
    for p in &report.cdf {
        println!("  p{:<4.0} {:>8.4}", p.fraction * 100.0, p.gap);
    }
    Ok(())
}
