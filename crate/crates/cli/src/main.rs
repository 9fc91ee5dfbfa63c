//! `credsim` — run credibility-scored multi-agent experiments, sweep
//! parameters, verify record streams, and summarize results.
//!
//! Exit codes: 0 success, 1 config error, 2 dataset error, 3 replay
//! divergence, 4 judge-channel failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use credsim_core::{
    load_dataset, parse_records, records_to_jsonl, replay_file, run_experiment, sweep,
    validate_config, AggregatorKind, Error, ExperimentConfig, ExperimentMetrics, JudgeChannel,
    RemoteJudge, RoundRecord, SweepParameter, SweepValue, SyntheticJudge,
};

const JUDGE_URL_ENV: &str = "CREDSIM_JUDGE_URL";
const JUDGE_TOKEN_ENV: &str = "CREDSIM_JUDGE_TOKEN";

#[derive(Parser)]
#[command(
    name = "credsim",
    version,
    about = "Credibility-scored multi-agent coordination experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment: metrics CSV and a round-record JSONL stream.
    Run {
        /// Experiment config (strict JSON).
        #[arg(long)]
        config: PathBuf,
        /// Dataset file (JSONL, one query+rubric per line).
        #[arg(long)]
        dataset: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Master seed; overrides the config's rng_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker-thread cap for intra-round parallelism.
        #[arg(long)]
        jobs: Option<usize>,
        /// Config override, repeatable: --set key=value (applied after the file).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Run one experiment per sweep value with fresh ledgers.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Parameter to sweep: adversary-count | edge-count | aggregator-kind.
        #[arg(long)]
        param: String,
        /// Comma-separated sweep values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Re-derive and verify every transition in a record stream.
    Replay {
        /// Record JSONL file to verify.
        #[arg(long)]
        records: PathBuf,
    },
    /// Read-only summary of existing record files.
    Report {
        /// Record files or directories containing *.jsonl files.
        #[arg(long, num_args = 1.., value_name = "PATH")]
        records: Vec<PathBuf>,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Dataset(_) => 2,
        Error::ReplayDivergence { .. } => 3,
        Error::JudgeUnavailable(_) | Error::MalformedJudgeReply(_) => 4,
        _ => 1,
    }
}

/// Loads the config file, applies --seed and --set overrides, then parses
/// strictly and validates.
fn load_config(
    path: &Path,
    seed: Option<u64>,
    overrides: &[String],
) -> Result<ExperimentConfig, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::invalid_field("config", format!("{}: {e}", path.display())))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::invalid_field("config", e.to_string()))?;
    let object = value
        .as_object_mut()
        .ok_or_else(|| Error::invalid_field("config", "top level must be an object"))?;
    for entry in overrides {
        let (key, raw) = entry.split_once('=').ok_or_else(|| {
            Error::invalid_field("config", format!("override `{entry}` is not key=value"))
        })?;
        let parsed = serde_json::from_str::<serde_json::Value>(raw)
            .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        object.insert(key.to_string(), parsed);
    }
    if let Some(seed) = seed {
        object.insert("rng_seed".into(), serde_json::json!(seed));
    }
    let config: ExperimentConfig =
        serde_json::from_value(value).map_err(|e| Error::invalid_field("config", e.to_string()))?;
    validate_config(config)
}

fn configure_jobs(jobs: Option<usize>) {
    if let Some(jobs) = jobs {
        // ignore failure: the global pool can only be installed once
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global();
    }
}

fn judge_from_env() -> Box<dyn JudgeChannel + Sync> {
    match std::env::var(JUDGE_URL_ENV) {
        Ok(url) if !url.trim().is_empty() => {
            let token = std::env::var(JUDGE_TOKEN_ENV).ok();
            Box::new(RemoteJudge::new(url, token))
        }
        _ => Box::new(SyntheticJudge),
    }
}

fn final_crs_line(record: &RoundRecord) -> String {
    record
        .ledger_after
        .iter()
        .map(|(agent, crs)| format!("{agent}:{crs:.4}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn cmd_run(
    config: &Path,
    dataset: &Path,
    out: &Path,
    seed: Option<u64>,
    jobs: Option<usize>,
    overrides: &[String],
) -> Result<(), Error> {
    configure_jobs(jobs);
    let config = load_config(config, seed, overrides)?;
    let entries = load_dataset(dataset)?;
    let judge = judge_from_env();
    let run = run_experiment(&config, &entries, judge.as_ref())?;

    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("records.jsonl"), records_to_jsonl(&run.records))?;
    std::fs::write(out.join("metrics.csv"), run.metrics.to_csv())?;

    println!(
        "run: {} rounds, accuracy {:.4}, post-warmup {:.4}",
        run.metrics.rounds(),
        run.metrics.accuracy(),
        run.metrics.accuracy_after(config.warmup_rounds)
    );
    if let Some(last) = run.records.last() {
        println!("final CrS: {}", final_crs_line(last));
    }
    println!(
        "wrote {} and {}",
        out.join("records.jsonl").display(),
        out.join("metrics.csv").display()
    );
    Ok(())
}

fn parse_sweep_param(param: &str) -> Result<SweepParameter, Error> {
    match param {
        "adversary-count" => Ok(SweepParameter::AdversaryCount),
        "edge-count" => Ok(SweepParameter::EdgeCount),
        "aggregator-kind" => Ok(SweepParameter::AggregatorKind),
        other => Err(Error::invalid_field(
            "sweep",
            format!("unknown parameter `{other}`"),
        )),
    }
}

fn parse_sweep_values(param: SweepParameter, raw: &[String]) -> Result<Vec<SweepValue>, Error> {
    if raw.is_empty() {
        return Err(Error::invalid_field("sweep", "no values given"));
    }
    raw.iter()
        .map(|v| match param {
            SweepParameter::AdversaryCount | SweepParameter::EdgeCount => v
                .parse::<usize>()
                .map(SweepValue::Count)
                .map_err(|_| Error::invalid_field("sweep", format!("`{v}` is not a count"))),
            SweepParameter::AggregatorKind => {
                serde_json::from_value::<AggregatorKind>(serde_json::json!(v))
                    .map(SweepValue::Aggregator)
                    .map_err(|_| {
                        Error::invalid_field("sweep", format!("`{v}` is not an aggregator kind"))
                    })
            }
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    config: &Path,
    dataset: &Path,
    out: &Path,
    param: &str,
    values: &[String],
    seed: Option<u64>,
    jobs: Option<usize>,
    overrides: &[String],
) -> Result<(), Error> {
    configure_jobs(jobs);
    let config = load_config(config, seed, overrides)?;
    let parameter = parse_sweep_param(param)?;
    let values = parse_sweep_values(parameter, values)?;
    let entries = load_dataset(dataset)?;
    let judge = judge_from_env();
    let outcome = sweep(parameter, &values, &config, &entries, judge.as_ref())?;

    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("sweep.csv"), outcome.to_csv())?;
    for (value, run) in values.iter().zip(&outcome.runs) {
        let point_dir = out.join(format!("point_{value}"));
        std::fs::create_dir_all(&point_dir)?;
        std::fs::write(
            point_dir.join("records.jsonl"),
            records_to_jsonl(&run.records),
        )?;
        std::fs::write(point_dir.join("metrics.csv"), run.metrics.to_csv())?;
    }
    for row in &outcome.rows {
        println!(
            "{}={}: accuracy {:.4}, post-warmup {:.4}, mean edges {:.2}",
            row.parameter,
            row.value,
            row.accuracy,
            row.accuracy_post_warmup,
            row.mean_realized_edges
        );
    }
    println!("wrote {}", out.join("sweep.csv").display());
    Ok(())
}

fn cmd_replay(records: &Path) -> Result<(), Error> {
    let report = replay_file(records)?;
    match report.divergence {
        None => {
            println!(
                "replay: {} rounds verified, no divergence",
                report.rounds_verified
            );
            Ok(())
        }
        Some(d) => Err(Error::ReplayDivergence {
            round: d.round,
            field: d.field,
            detail: d.detail,
        }),
    }
}

fn record_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>, Error> {
    let mut files = Vec::new();
    for path in paths {
        if path.is_dir() {
            let mut inside: Vec<PathBuf> = std::fs::read_dir(path)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|ext| ext == "jsonl"))
                .collect();
            inside.sort();
            files.extend(inside);
        } else {
            files.push(path.clone());
        }
    }
    if files.is_empty() {
        return Err(Error::Dataset("no record files found".into()));
    }
    Ok(files)
}

fn cmd_report(paths: &[PathBuf]) -> Result<(), Error> {
    let files = record_files(paths)?;
    let mut accuracy_by_aggregator: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for file in &files {
        let text = std::fs::read_to_string(file)
            .map_err(|e| Error::Dataset(format!("{}: {e}", file.display())))?;
        let records = parse_records(&text)?;
        if records.is_empty() {
            println!("{}: empty record stream", file.display());
            continue;
        }
        let metrics = ExperimentMetrics::from_records(&records);
        let config = &records[0].config;
        let aggregator = config.aggregator_kind.to_string();
        println!(
            "{}: aggregator={} seed={} rounds={} accuracy={:.4} post-warmup={:.4}",
            file.display(),
            aggregator,
            config.rng_seed,
            metrics.rounds(),
            metrics.accuracy(),
            metrics.accuracy_after(config.warmup_rounds)
        );
        println!("  final CrS: {}", final_crs_line(records.last().unwrap()));
        accuracy_by_aggregator
            .entry(aggregator)
            .or_default()
            .push(metrics.accuracy());
    }

    if accuracy_by_aggregator.len() > 1 {
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        let baseline = accuracy_by_aggregator
            .get("majority")
            .map(|xs| mean(xs))
            .unwrap_or_else(|| mean(accuracy_by_aggregator.values().next().expect("nonempty")));
        println!("accuracy deltas vs majority baseline ({baseline:.4}):");
        for (aggregator, accuracies) in &accuracy_by_aggregator {
            println!(
                "  {aggregator}: {:+.4} (mean {:.4} over {} run(s))",
                mean(accuracies) - baseline,
                mean(accuracies),
                accuracies.len()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run {
            config,
            dataset,
            out,
            seed,
            jobs,
            set,
        } => cmd_run(config, dataset, out, *seed, *jobs, set),
        Command::Sweep {
            config,
            dataset,
            out,
            param,
            values,
            seed,
            jobs,
            set,
        } => cmd_sweep(config, dataset, out, param, values, *seed, *jobs, set),
        Command::Replay { records } => cmd_replay(records),
        Command::Report { records } => cmd_report(records),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
