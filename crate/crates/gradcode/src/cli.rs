//! Config-driven experiment runner.
//!
//! `run` executes every scheme in a TOML experiment file against the shared
//! parameter block and writes three artifacts into the output directory:
//! a per-trial CSV (`trials.csv`), a per-scheme summary (`summary.json`) and
//! plot-ready per-scheme rows (`figure_data.csv`). `verify` certifies a
//! single scheme's code and sweeps gradient round trips through it.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::coding::CertificateReport;
use crate::error::{Error, Result};
use crate::gradcheck::round_trip_sweep;
use crate::model::{MetricsSummary, SchemeConfig, SchemeKind, TrialRecord};
use crate::simulator::{
    build_scheme, certify, check_shared_params, run_trials, verify_scheme_code, SchemeInstance,
};

#[derive(Parser, Debug)]
#[command(name = "gradcode", version, about = "Gradient-coding straggler simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run every configured scheme and write CSV/JSON results
    Run(RunArgs),
    /// Certify one scheme: threshold certificate plus a round-trip sweep
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Experiment config file (TOML)
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides the config file's choice)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Master seed override
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trial-count override
    #[arg(long)]
    pub trials: Option<usize>,
    /// Count distinct rows toward the communication load instead of every
    /// received message
    #[arg(long)]
    pub distinct_comm_load: bool,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Experiment config file with exactly one scheme
    #[arg(long)]
    pub config: PathBuf,
    /// Number of round-trip straggler patterns to sweep
    #[arg(long, default_value_t = 100)]
    pub sweeps: usize,
    /// Seed override for the sweep
    #[arg(long)]
    pub seed: Option<u64>,
}

// --- config file schema -----------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentFile {
    shared: SharedSection,
    #[serde(default)]
    scheme: Vec<SchemeSection>,
    #[serde(default)]
    output: OutputSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SharedSection {
    workers: usize,
    load: usize,
    mu: f64,
    alpha: f64,
    iterations: usize,
    seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemeSection {
    name: String,
    kind: SchemeKind,
    clusters: Option<usize>,
    order: Option<usize>,
    order_vector: Option<Vec<usize>>,
    baseline_threshold: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    dir: Option<PathBuf>,
}

/// A scheme entry with its display name.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedConfig {
    pub name: String,
    pub config: SchemeConfig,
}

/// Parsed experiment: named schemes plus the configured output directory.
#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub schemes: Vec<NamedConfig>,
    pub output_dir: Option<PathBuf>,
}

/// Parses the TOML experiment format and validates every entry.
pub fn parse_config(text: &str) -> Result<Experiment> {
    let file: ExperimentFile = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
    if file.scheme.is_empty() {
        return Err(Error::NoSchemes);
    }
    let mut schemes = Vec::with_capacity(file.scheme.len());
    for entry in file.scheme {
        if schemes.iter().any(|n: &NamedConfig| n.name == entry.name) {
            return Err(Error::DuplicateSchemeName(entry.name));
        }
        let clusters = entry.clusters.unwrap_or_else(|| {
            // fractional repetition pins the cluster size to the load
            if entry.kind == SchemeKind::FractionalRepetition && file.shared.load > 0 {
                file.shared.workers / file.shared.load
            } else {
                1
            }
        });
        let config = SchemeConfig {
            scheme: entry.kind,
            workers: file.shared.workers,
            load: file.shared.load,
            clusters,
            order: entry.order,
            order_vector: entry.order_vector,
            baseline_threshold: entry.baseline_threshold,
            mu: file.shared.mu,
            alpha: file.shared.alpha,
            iterations: file.shared.iterations,
            seed: file.shared.seed,
        }
        .validated()
        .map_err(|e| Error::InvalidConfig(format!("scheme {:?}: {e}", entry.name)))?;
        schemes.push(NamedConfig {
            name: entry.name,
            config,
        });
    }
    Ok(Experiment {
        schemes,
        output_dir: file.output.dir,
    })
}

pub fn load_config(path: &Path) -> Result<Experiment> {
    parse_config(&fs::read_to_string(path)?)
}

// --- run ---------------------------------------------------------------

/// Everything `run` produced, for callers that want to inspect it.
#[derive(Debug)]
pub struct RunArtifacts {
    pub trials_csv: PathBuf,
    pub summary_json: PathBuf,
    pub figure_csv: PathBuf,
    pub summaries: Vec<(String, MetricsSummary)>,
}

#[derive(Serialize)]
struct SummaryFile {
    distinct_comm_load: bool,
    schemes: Vec<SummaryEntry>,
}

#[derive(Serialize)]
struct SummaryEntry {
    name: String,
    summary: MetricsSummary,
}

pub fn run_command(args: &RunArgs) -> Result<RunArtifacts> {
    let mut experiment = load_config(&args.config)?;
    for named in &mut experiment.schemes {
        if let Some(seed) = args.seed {
            named.config.seed = seed;
        }
        if let Some(trials) = args.trials {
            named.config.iterations = trials;
        }
    }
    let configs: Vec<SchemeConfig> = experiment.schemes.iter().map(|n| n.config.clone()).collect();
    check_shared_params(&configs)?;

    let out_dir = args
        .out
        .clone()
        .or(experiment.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("results"));
    fs::create_dir_all(&out_dir)?;

    let mut results: Vec<(String, Vec<TrialRecord>, MetricsSummary)> = Vec::new();
    for named in &experiment.schemes {
        let inst = build_scheme(&named.config)?;
        certify(&inst)?;
        let records = run_trials(&inst)?;
        let summary =
            MetricsSummary::from_trials(named.config.clone(), &records, args.distinct_comm_load);
        println!(
            "{}: completion {:.4} ± {:.4}, comm load {:.2} ± {:.2}, {} undecodable of {} trials",
            named.name,
            summary.mean_completion_time,
            summary.stderr_completion_time,
            summary.mean_comm_load,
            summary.stderr_comm_load,
            summary.undecodable_trials,
            summary.trials,
        );
        results.push((named.name.clone(), records, summary));
    }

    let trials_csv = out_dir.join("trials.csv");
    fs::write(&trials_csv, render_trials_csv(&results, args.distinct_comm_load))?;

    let summary_json = out_dir.join("summary.json");
    let file = SummaryFile {
        distinct_comm_load: args.distinct_comm_load,
        schemes: results
            .iter()
            .map(|(name, _, summary)| SummaryEntry {
                name: name.clone(),
                summary: summary.clone(),
            })
            .collect(),
    };
    let mut json = serde_json::to_string_pretty(&file).map_err(|e| Error::ConfigParse(e.to_string()))?;
    json.push('\n');
    fs::write(&summary_json, json)?;

    let figure_csv = out_dir.join("figure_data.csv");
    fs::write(&figure_csv, render_figure_csv(&results))?;

    Ok(RunArtifacts {
        trials_csv,
        summary_json,
        figure_csv,
        summaries: results
            .into_iter()
            .map(|(name, _, summary)| (name, summary))
            .collect(),
    })
}

fn render_trials_csv(
    results: &[(String, Vec<TrialRecord>, MetricsSummary)],
    distinct: bool,
) -> String {
    let mut csv = String::from("trial_id,scheme,completion_time,comm_load\n");
    for (name, records, _) in results {
        for rec in records {
            let load = if distinct {
                rec.distinct_comm_load
            } else {
                rec.comm_load
            };
            csv.push_str(&format!(
                "{},{},{},{}\n",
                rec.trial, name, rec.completion_time, load
            ));
        }
    }
    csv
}

fn render_figure_csv(results: &[(String, Vec<TrialRecord>, MetricsSummary)]) -> String {
    let mut csv = String::from(
        "scheme,mean_completion_time,stderr_completion_time,mean_comm_load,stderr_comm_load\n",
    );
    for (name, _, s) in results {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            name, s.mean_completion_time, s.stderr_completion_time, s.mean_comm_load, s.stderr_comm_load
        ));
    }
    csv
}

// --- verify ------------------------------------------------------------

/// Outcome of `verify`: the threshold certificate plus the worst round-trip
/// error seen over the sweep (absent for schemes that cannot round-trip).
#[derive(Debug)]
pub struct VerificationOutcome {
    pub certificate: CertificateReport,
    pub round_trip_worst: Option<f64>,
    pub passed: bool,
}

pub fn verify_instance(
    inst: &SchemeInstance,
    sweeps: usize,
    seed: u64,
) -> Result<VerificationOutcome> {
    if !inst.has_certifiable_code() {
        return Err(Error::Unsupported(
            "threshold baselines have no certifiable code".into(),
        ));
    }
    let certificate = verify_scheme_code(inst)?;
    let round_trip_worst = if inst.supports_round_trip() && sweeps > 0 {
        Some(round_trip_sweep(inst, sweeps, seed)?.0)
    } else {
        None
    };
    let passed = certificate.passed() && round_trip_worst.is_none_or(|w| w < 1e-8);
    Ok(VerificationOutcome {
        certificate,
        round_trip_worst,
        passed,
    })
}

pub fn verify_command(args: &VerifyArgs) -> Result<bool> {
    let experiment = load_config(&args.config)?;
    let [named] = experiment.schemes.as_slice() else {
        return Err(Error::InvalidConfig(format!(
            "verify expects exactly one scheme, found {}",
            experiment.schemes.len()
        )));
    };
    let mut config = named.config.clone();
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let inst = build_scheme(&config)?;
    let outcome = verify_instance(&inst, args.sweeps, config.seed)?;

    let report = &outcome.certificate;
    println!("scheme {}: decode threshold {}", named.name, report.threshold);
    println!(
        "certificate: {} of {} {} subsets decode (worst residual {:.3e})",
        report.subsets_checked - report.failing_subsets.len(),
        report.subsets_checked,
        if report.exhaustive { "exhaustive" } else { "sampled" },
        report.worst_residual,
    );
    for subset in &report.failing_subsets {
        println!("  infeasible subset: {subset:?}");
    }
    if let Some(worst) = outcome.round_trip_worst {
        println!(
            "round trip: worst relative error {:.3e} over {} straggler patterns",
            worst, args.sweeps
        );
    }
    println!("{}", if outcome.passed { "PASS" } else { "FAIL" });
    Ok(outcome.passed)
}
