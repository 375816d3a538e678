//! Command-line front end. Exit codes: 0 ok, 1 runtime failure, 2 invalid input.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::dag::DagFile;
use crate::error::{Error, Result};
use crate::harness::{aggregate, inject_bias_rows, run_experiment, AggregateSpec, BiasRule, ExperimentConfig, ExperimentReport};
use crate::metrics::{assess, check_same_variables, ml_efficacy, MetricsReport};
use crate::sampler::{complete_csv_file, sample_chunked, sample_unconditional, DEFAULT_CHUNK_SIZE};
use crate::schema::{infer_schema, ingest_csv, write_csv, DataTable, TableSchema};
use crate::trainer::{load_checkpoint, Trainer, TrainingConfig};

#[derive(Debug, Parser)]
#[command(name = "dagsynth", version, about = "DAG-structured conditional tabular GAN")]
pub struct Cli {
    /// Print a machine-readable summary on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write its checkpoint directory.
    Fit(FitArgs),
    /// Generate rows, copying conditional inputs from a CSV.
    Sample(SampleArgs),
    /// Stream a distributor CSV through a model in chunks.
    Complete(CompleteArgs),
    /// SRMSE of a synthetic table against the original.
    Evaluate(EvaluateArgs),
    /// Train-on-synthetic, test-on-original losses.
    MlEfficacy(MlEfficacyArgs),
    /// Remove shares of rows matching JSON rules.
    Bias(BiasArgs),
    /// Per-stratum totals, optionally household-weighted.
    Aggregate(AggregateArgs),
    /// Run an experiment described by a JSON config.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Inferred from the data when absent.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub dag: PathBuf,
    /// Training config JSON; missing fields take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Conditional-input source; one output row per input row.
    #[arg(long)]
    pub ci: Option<PathBuf>,
    /// Row count for models without conditional inputs.
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_CHUNK_SIZE)]
    pub chunk_size: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompleteArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub distributor: PathBuf,
    #[arg(long, default_value_t = DEFAULT_CHUNK_SIZE)]
    pub chunk_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub original: PathBuf,
    #[arg(long)]
    pub synthetic: PathBuf,
    /// Used for both tables; otherwise each is inferred.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub level: u8,
    /// Skip conditional inputs: a comma-separated list, or with no value the
    /// conditional inputs of `--model`.
    #[arg(long, num_args = 0..=1, value_delimiter = ',')]
    pub exclude_ci: Option<Vec<String>>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// JSON, or long-format CSV when the name ends in `.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MlEfficacyArgs {
    #[arg(long)]
    pub original: PathBuf,
    #[arg(long)]
    pub synthetic: PathBuf,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Repeatable; every variable when absent.
    #[arg(long)]
    pub target: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BiasArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// JSON array of rules, applied in order.
    #[arg(long)]
    pub rules: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Trainings run concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_json(value: &impl serde::Serialize, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_table(data: &Path, schema: Option<&Path>) -> Result<DataTable> {
    let schema = match schema {
        Some(path) => TableSchema::from_json_file(path)?,
        None => infer_schema(data)?,
    };
    ingest_csv(data, &schema)
}

fn write_report(report: &MetricsReport, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) if path.extension().is_some_and(|e| e == "csv") => {
            let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
            report.write_csv(file)
        }
        Some(path) => report.write_json(path),
        None => Ok(()),
    }
}

fn fit(args: &FitArgs) -> Result<Value> {
    let table = load_table(&args.data, args.schema.as_deref())?;
    let dag_file = DagFile::from_json_file(&args.dag)?;
    let mut config: TrainingConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => TrainingConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let mut trainer = Trainer::new(&table, &dag_file.dag(), &dag_file.conditional_inputs, config)?;
    trainer.run(Some(&args.out))?;
    let trace_path = args.out.join("loss_trace.csv");
    trainer.trace().write_csv_file(&trace_path)?;
    Ok(json!({
        "model": args.out,
        "epochs": trainer.epoch(),
        "steps": trainer.trace().len(),
        "loss_trace": trace_path,
    }))
}

fn sample_cmd(args: &SampleArgs) -> Result<Value> {
    let model = load_checkpoint(&args.model)?;
    let ci = model.conditional_inputs();
    let table = match (&args.ci, args.rows) {
        (Some(path), _) if !ci.is_empty() => {
            let source = ingest_csv(path, &model.schema.select(&ci)?)?;
            sample_chunked(&model, &source, args.seed, args.chunk_size)?
        }
        (None, Some(rows)) if ci.is_empty() => sample_unconditional(&model, rows, args.seed)?,
        _ if ci.is_empty() => {
            return Err(Error::InvalidConfig("model has no conditional inputs; pass --rows".into()))
        }
        _ => {
            return Err(Error::InvalidConfig(format!(
                "model is conditioned on {ci:?}; pass --ci"
            )))
        }
    };
    write_csv(&args.out, &table)?;
    Ok(json!({ "rows": table.n_rows(), "out": args.out }))
}

fn complete_cmd(args: &CompleteArgs) -> Result<Value> {
    let model = load_checkpoint(&args.model)?;
    let stats = complete_csv_file(&model, &args.distributor, &args.out, args.seed, args.chunk_size)?;
    Ok(serde_json::to_value(stats)?)
}

fn evaluate(args: &EvaluateArgs) -> Result<Value> {
    let original = load_table(&args.original, args.schema.as_deref())?;
    let synthetic = load_table(&args.synthetic, args.schema.as_deref())?;
    check_same_variables(original.schema(), &synthetic.schema().clone())?;
    let exclude: Vec<String> = match (&args.exclude_ci, &args.model) {
        (None, _) => vec![],
        (Some(names), _) if !names.is_empty() => names.clone(),
        (Some(_), Some(model)) => load_checkpoint(model)?
            .conditional_inputs()
            .into_iter()
            .map(str::to_owned)
            .collect(),
        (Some(_), None) => {
            return Err(Error::InvalidConfig(
                "--exclude-ci without names needs --model".into(),
            ))
        }
    };
    let exclude: Vec<&str> = exclude.iter().map(String::as_str).collect();
    let report = assess(&original, &synthetic, args.level, &exclude)?;
    write_report(&report, args.out.as_deref())?;
    Ok(serde_json::to_value(report)?)
}

fn ml_efficacy_cmd(args: &MlEfficacyArgs) -> Result<Value> {
    let original = load_table(&args.original, args.schema.as_deref())?;
    let synthetic = load_table(&args.synthetic, args.schema.as_deref())?;
    let targets: Vec<String> = if args.target.is_empty() {
        original.schema().names().map(str::to_owned).collect()
    } else {
        args.target.clone()
    };
    let mut report = MetricsReport::default();
    for target in &targets {
        report.ml_efficacy.push(ml_efficacy(&original, &synthetic, target, args.seed)?);
    }
    report.refresh_means();
    write_report(&report, args.out.as_deref())?;
    Ok(serde_json::to_value(report)?)
}

fn bias(args: &BiasArgs) -> Result<Value> {
    let table = load_table(&args.data, args.schema.as_deref())?;
    let rules: Vec<BiasRule> = read_json(&args.rules)?;
    let outcome = inject_bias_rows(&table, &rules, args.seed)?;
    write_csv(&args.out, &table.select_rows(&outcome.kept))?;
    Ok(json!({
        "rows_in": table.n_rows(),
        "rows_out": outcome.kept.len(),
        "matched": outcome.matched,
        "removed": outcome.removed,
    }))
}

fn aggregate_cmd(args: &AggregateArgs) -> Result<Value> {
    let table = load_table(&args.data, args.schema.as_deref())?;
    let spec: AggregateSpec = read_json(&args.spec)?;
    let totals = aggregate(&table, &spec)?;
    write_json(&totals, &args.out)?;
    Ok(serde_json::to_value(totals)?)
}

fn experiment(args: &ExperimentArgs) -> Result<Value> {
    let config = ExperimentConfig::from_json_file(&args.config)?;
    let report = run_experiment(&config, &args.out, args.jobs)?;
    Ok(match report {
        ExperimentReport::Debias(b) => json!({
            "kind": "debias",
            "datasets": b.runs.len(),
            "mean_srmse": b.mean_srmse,
            "reference_mean_srmse": b.reference.mean_srmse,
            "out": args.out,
        }),
        ExperimentReport::Population(p) => json!({
            "kind": "population",
            "mean_js_synthetic": p.mean_js_synthetic,
            "mean_js_baseline": p.mean_js_baseline,
            "out": args.out,
        }),
    })
}

/// Runs one parsed command and returns its summary.
pub fn execute(cli: &Cli) -> Result<Value> {
    match &cli.command {
        Command::Fit(a) => fit(a),
        Command::Sample(a) => sample_cmd(a),
        Command::Complete(a) => complete_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::MlEfficacy(a) => ml_efficacy_cmd(a),
        Command::Bias(a) => bias(a),
        Command::Aggregate(a) => aggregate_cmd(a),
        Command::Experiment(a) => experiment(a),
    }
}

pub fn exit_code(err: &Error) -> i32 {
    if err.is_validation() {
        2
    } else {
        1
    }
}

/// Parses `args`, runs the command and reports; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(summary) => {
            if cli.json {
                println!("{summary}");
            } else if let Some(obj) = summary.as_object() {
                let line: Vec<String> = obj
                    .iter()
                    .filter(|(_, v)| !v.is_object() && !v.is_array())
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect();
                println!("{}", line.join(" "));
            }
            0
        }
        Err(err) => {
            if cli.json {
                println!("{}", json!({ "error": err.to_string() }));
            }
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_subcommand() {
        let cases: [&[&str]; 8] = [
            &["fit", "--data", "d.csv", "--dag", "g.json", "--out", "m"],
            &["sample", "--model", "m", "--ci", "c.csv", "--seed", "7", "--out", "o.csv"],
            &["complete", "--model", "m", "--distributor", "d.csv", "--chunk-size", "10", "--out", "o.csv"],
            &["evaluate", "--original", "o.csv", "--synthetic", "s.csv", "--level", "2", "--exclude-ci", "x,y"],
            &["ml-efficacy", "--original", "o.csv", "--synthetic", "s.csv", "--target", "y"],
            &["bias", "--data", "d.csv", "--rules", "r.json", "--seed", "1", "--out", "b.csv"],
            &["aggregate", "--data", "p.csv", "--spec", "a.json", "--out", "t.json"],
            &["experiment", "--config", "e.json", "--out", "runs", "--jobs", "2", "--json"],
        ];
        for case in cases {
            let cli = Cli::try_parse_from(std::iter::once("dagsynth").chain(case.iter().copied()));
            assert!(cli.is_ok(), "{case:?}: {:?}", cli.err());
        }
        let cli = Cli::try_parse_from(["dagsynth", "evaluate", "--original", "a", "--synthetic", "b", "--exclude-ci", "x,y"]).unwrap();
        let Command::Evaluate(args) = cli.command else { unreachable!() };
        assert_eq!(args.exclude_ci, Some(vec!["x".to_owned(), "y".to_owned()]));
        assert!(Cli::try_parse_from(["dagsynth", "evaluate", "--original", "a", "--synthetic", "b", "--level", "3"]).is_err());
    }

    #[test]
    fn missing_input_is_a_runtime_failure() {
        let code = main_with_args(["dagsynth", "bias", "--data", "/nonexistent.csv", "--rules", "r.json", "--out", "b.csv"]);
        assert_eq!(code, 1);
    }
}
