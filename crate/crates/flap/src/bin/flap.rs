//! Command-line front end: simulation, preprocessing, training, scoring,
//! fairness metrics, fairness tests, experiment reproduction, and audits.

use clap::{Args, Parser, Subcommand};
use flap::citest::CiTestMethod;
use flap::data::{load_csv, DatasetSchema};
use flap::experiments::{
    audit, run_experiment, run_from_manifest, AuditOptions, ExperimentConfig, ExperimentId,
    Overrides,
};
use flap::learners::{fit_method, load_predictor, save_predictor, Method, Predictor, Scorer};
use flap::metrics::{accuracy, cf_bound, cf_metric, drawn_accuracy, MetricConfig};
use flap::pipeline::FlapModel;
use flap::preprocess::{fit_marginal_mapping, fit_orthogonalization, PrepKind, Preprocessor};
use flap::scm::{save_exogenous_csv, Scm};
use flap::{FlapError, Result};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "flap",
    version,
    about = "Counterfactually fair decision learning, metrics, and fairness tests"
)]
struct Cli {
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true, env = "FLAP_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic decision dataset from one of the built-in
    /// structural models (ex1 loan, ex2 three-group, ex3 admission).
    Simulate(SimulateArgs),
    /// Fit or apply a preprocessing map.
    Preprocess(PreprocessArgs),
    /// Fit a predictor (ml, ftu, aml, fl, aa, flap-1-o, flap-2-o,
    /// flap-1-m, flap-2-m).
    Fit(FitArgs),
    /// Score a dataset with a fitted predictor.
    Score(ScoreArgs),
    /// Evaluate CF-metric, CF-bound, and accuracy of a fitted predictor.
    Metrics(MetricsArgs),
    /// Test decisions for counterfactual fairness via conditional
    /// independence given processed attributes.
    Test(TestArgs),
    /// Re-run a packaged experiment (figures and tables) at desk scale.
    Reproduce(ReproduceArgs),
    /// One-shot fairness audit of a decision CSV.
    Audit(AuditArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Model id: ex1, ex2, or ex3.
    #[arg(long)]
    example: String,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Optional sidecar CSV of exogenous draws.
    #[arg(long)]
    exo: Option<PathBuf>,
    /// Optional schema file to write next to the CSV.
    #[arg(long)]
    schema_out: Option<PathBuf>,
    /// Model parameter overrides, e.g. --set sigma_a=2 --set beta_s=0.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct PreprocessArgs {
    /// fit | apply
    #[arg(value_name = "MODE")]
    mode: String,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    /// Preprocessor kind for fitting: orthogonalization | marginal-mapping.
    #[arg(long)]
    kind: Option<String>,
    /// Fitted preprocessor file (output of fit, input of apply).
    #[arg(long)]
    prep: PathBuf,
    /// Processed CSV output (apply mode).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    method: String,
    /// Output path: a JSON file for plain predictors, a directory for
    /// pipeline models.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional JSON report output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TestArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    /// orthogonalization | marginal-mapping
    #[arg(long, default_value = "marginal-mapping")]
    prep: String,
    /// lr | kernel
    #[arg(long, default_value = "lr")]
    method: String,
    #[arg(long, default_value_t = 199)]
    bootstrap: usize,
    /// Kernel bandwidth multiplier of each coordinate's sd (default:
    /// rule-of-thumb).
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ReproduceArgs {
    /// Experiment id (fig2a, fig2b, fig3a, fig3b, fig4-ex1, fig4-ex2,
    /// fig4-ex3, table-adult, table-compas, table-delta-adult,
    /// table-delta-compas).
    #[arg(long, conflicts_with = "manifest")]
    experiment: Option<String>,
    /// Re-run the configuration recorded in a manifest file.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    outdir: PathBuf,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated CF-bound deltas.
    #[arg(long)]
    deltas: Option<String>,
    /// Comma-separated method list.
    #[arg(long)]
    methods: Option<String>,
    /// Fairness test for power studies: lr | kernel.
    #[arg(long)]
    test: Option<String>,
    /// Preprocessor kind for power studies.
    #[arg(long)]
    prep: Option<String>,
    /// Directory holding the public dataset CSVs and schemas.
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    #[arg(long, default_value = "marginal-mapping")]
    prep: String,
    #[arg(long, default_value = "lr")]
    test: String,
    #[arg(long, default_value_t = 199)]
    bootstrap: usize,
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Also fit the fair pipeline on a split and report its metrics.
    #[arg(long)]
    with_flap: bool,
    /// JSON report output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let usage = matches!(
                e,
                FlapError::Schema(_) | FlapError::Config(_) | FlapError::Io(_)
            );
            if usage {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn load_dataset(data: &PathBuf, schema: &PathBuf) -> Result<flap::Dataset> {
    let schema = DatasetSchema::from_path(schema)?;
    let (dataset, report) = load_csv(data, &schema)?;
    if report.dropped() > 0 {
        eprintln!(
            "note: dropped {} of {} rows ({} missing, {} outside declared levels)",
            report.dropped(),
            report.rows_read,
            report.rows_dropped_missing,
            report.rows_dropped_unknown_level
        );
    }
    Ok(dataset)
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate(args) => {
            let mut scm = Scm::from_name(&args.example)?;
            for kv in &args.set {
                let (key, value) = kv.split_once('=').ok_or_else(|| {
                    FlapError::Config(format!("--set expects KEY=VALUE, got '{kv}'"))
                })?;
                let value: f64 = value
                    .parse()
                    .map_err(|_| FlapError::Config(format!("non-numeric value in '{kv}'")))?;
                scm.set_param(key.trim(), value)?;
            }
            let (data, records) = scm.simulate(args.n, args.seed)?;
            data.save_csv(&args.out)?;
            if let Some(exo) = &args.exo {
                save_exogenous_csv(&records, exo)?;
            }
            if let Some(schema_out) = &args.schema_out {
                std::fs::write(schema_out, data.canonical_schema().render())?;
            }
            println!(
                "wrote {} rows ({} groups) to {}",
                data.n(),
                data.num_groups(),
                args.out.display()
            );
            Ok(())
        }
        Command::Preprocess(args) => match args.mode.as_str() {
            "fit" => {
                let kind = PrepKind::parse(args.kind.as_deref().ok_or_else(|| {
                    FlapError::Config("--kind is required in fit mode".into())
                })?)?;
                let data = load_dataset(&args.data, &args.schema)?;
                let prep = match kind {
                    PrepKind::Orthogonalization => fit_orthogonalization(&data)?,
                    PrepKind::MarginalMapping => fit_marginal_mapping(&data)?,
                };
                prep.save(&args.prep)?;
                println!("fitted {} preprocessor -> {}", kind.label(), args.prep.display());
                Ok(())
            }
            "apply" => {
                let out = args.out.ok_or_else(|| {
                    FlapError::Config("--out is required in apply mode".into())
                })?;
                let data = load_dataset(&args.data, &args.schema)?;
                let prep = Preprocessor::load(&args.prep)?;
                let processed = prep.apply_dataset(&data);
                let mut w = csv::Writer::from_path(&out)?;
                let mut header = vec!["group".to_string()];
                header.extend(prep.column_names().iter().cloned());
                header.push("decision".to_string());
                w.write_record(&header)?;
                for (row, attrs) in data.rows().iter().zip(&processed) {
                    let mut rec = vec![data.group_labels()[row.group].clone()];
                    rec.extend(attrs.iter().map(|a| a.to_string()));
                    rec.push(row.decision.to_string());
                    w.write_record(&rec)?;
                }
                w.flush()?;
                println!("wrote processed data to {}", out.display());
                Ok(())
            }
            other => Err(FlapError::Config(format!(
                "unknown preprocess mode '{other}' (expected 'fit' or 'apply')"
            ))),
        },
        Command::Fit(args) => {
            let method = Method::parse(&args.method)?;
            let data = load_dataset(&args.data, &args.schema)?;
            let pred = fit_method(method, &data)?;
            match &pred {
                Predictor::Flap(model) => model.save(&args.out)?,
                _ => save_predictor(&pred, &args.out)?,
            }
            println!("fitted {} -> {}", method.label(), args.out.display());
            Ok(())
        }
        Command::Score(args) => {
            let data = load_dataset(&args.data, &args.schema)?;
            let pred = load_any_predictor(&args.model)?;
            let mut w = csv::Writer::from_path(&args.out)?;
            w.write_record(["group", "score"])?;
            for row in data.rows() {
                w.write_record(&[
                    data.group_labels()[row.group].clone(),
                    pred.score(row.group, &row.attrs).to_string(),
                ])?;
            }
            w.flush()?;
            println!("wrote scores to {}", args.out.display());
            Ok(())
        }
        Command::Metrics(args) => {
            let schema = DatasetSchema::from_path(&args.schema)?;
            let (train, _) = load_csv(&args.train, &schema)?;
            let (test, _) = load_csv(&args.test, &schema)?;
            let pred = load_any_predictor(&args.model)?;
            let prep_m = fit_marginal_mapping(&train)?;
            let cfg = MetricConfig {
                delta: args.delta,
                neighborhood_cap: 50,
                seed: args.seed,
            };
            let report = flap::experiments::FairnessReport {
                dataset: args.test.display().to_string(),
                method: pred.method_label().to_string(),
                cf_metric: cf_metric(&pred, &test, &prep_m)?,
                cf_bound: cf_bound(&pred, &test, &cfg)?,
                accuracy: accuracy(&pred, &test),
                accuracy_drawn: drawn_accuracy(&pred, &test, args.seed ^ 13),
                p_value: None,
                delta: args.delta,
                seed: args.seed,
            };
            let json = serde_json::to_string_pretty(&report)?;
            if let Some(out) = &args.out {
                std::fs::write(out, &json)?;
            }
            println!("{json}");
            Ok(())
        }
        Command::Test(args) => {
            let data = load_dataset(&args.data, &args.schema)?;
            let result = flap::citest::run_ci_test(
                &data,
                PrepKind::parse(&args.prep)?,
                CiTestMethod::parse(&args.method)?,
                args.bootstrap,
                args.bandwidth,
                args.seed,
            )?;
            println!("{}", serde_json::to_string_pretty(&result)?);
            Ok(())
        }
        Command::Reproduce(args) => {
            let files = if let Some(manifest) = &args.manifest {
                run_from_manifest(manifest, &args.outdir)?
            } else {
                let id = ExperimentId::parse(args.experiment.as_deref().ok_or_else(|| {
                    FlapError::Config("either --experiment or --manifest is required".into())
                })?)?;
                let deltas = match &args.deltas {
                    Some(list) => Some(
                        list.split(',')
                            .map(|d| {
                                d.trim().parse::<f64>().map_err(|_| {
                                    FlapError::Config(format!("bad delta '{d}'"))
                                })
                            })
                            .collect::<Result<Vec<f64>>>()?,
                    ),
                    None => None,
                };
                let methods = match &args.methods {
                    Some(list) => Some(
                        list.split(',')
                            .map(|m| Method::parse(m.trim()))
                            .collect::<Result<Vec<Method>>>()?,
                    ),
                    None => None,
                };
                let cfg = ExperimentConfig {
                    id,
                    overrides: Overrides {
                        n: args.n,
                        replications: args.reps,
                        seed: args.seed,
                        deltas,
                        methods,
                        test: args.test.as_deref().map(CiTestMethod::parse).transpose()?,
                        prep: args.prep.as_deref().map(PrepKind::parse).transpose()?,
                        data_dir: args.data_dir.clone(),
                    },
                    outdir: args.outdir.clone(),
                };
                run_experiment(&cfg)?
            };
            for f in files {
                println!("wrote {}", f.display());
            }
            Ok(())
        }
        Command::Audit(args) => {
            let opts = AuditOptions {
                prep: PrepKind::parse(&args.prep)?,
                test: CiTestMethod::parse(&args.test)?,
                bootstrap: args.bootstrap,
                bandwidth: args.bandwidth,
                seed: args.seed,
                with_flap: args.with_flap,
                alpha: args.alpha,
            };
            let report = audit(&args.data, &args.schema, &opts)?;
            let json = serde_json::to_string_pretty(&report)?;
            if let Some(out) = &args.out {
                std::fs::write(out, &json)?;
            }
            println!("{json}");
            Ok(())
        }
    }
}

/// Loads either a plain predictor JSON file or a pipeline model directory.
fn load_any_predictor(path: &PathBuf) -> Result<Predictor> {
    if path.is_dir() {
        Ok(Predictor::Flap(FlapModel::load(path)?))
    } else {
        load_predictor(path)
    }
}
