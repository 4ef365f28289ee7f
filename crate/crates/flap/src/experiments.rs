//! Batch experiment drivers: metric curves and power studies on simulated
//! data, table reproductions on the public datasets, manifest-driven
//! reruns, and the end-user audit path.
//!
//! Every experiment is deterministic given its master seed: replication
//! work is dispatched to a worker pool but gathered in replication order,
//! and all reductions are order-independent. Each run writes a manifest
//! recording the exact configuration; re-running from the manifest
//! reproduces every output byte for byte.

use crate::citest::{run_ci_test, CiTestMethod, PowerCell, PowerStudyGrid, TestResult};
use crate::data::{load_csv, split, Dataset, DatasetSchema};
use crate::error::{FlapError, Result};
use crate::learners::{fit_method, Method, Predictor};
use crate::metrics::{accuracy, cf_bound, cf_metric, drawn_accuracy, MetricConfig};
use crate::numerics::{mean_and_sd, mix_seed};
use crate::pipeline::{flap_fit, FlapLearner};
use crate::plot::{line_chart_svg, Series};
use crate::preprocess::{fit_marginal_mapping, PrepKind, Preprocessor};
use crate::scm::{Scm, Scm1Params, Scm2Params, Scm3Params};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Identifiers of the reproducible experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentId {
    Fig2a,
    Fig2b,
    Fig3a,
    Fig3b,
    Fig4Ex1,
    Fig4Ex2,
    Fig4Ex3,
    TableAdult,
    TableCompas,
    TableDeltaAdult,
    TableDeltaCompas,
}

impl ExperimentId {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fig2a" => Ok(Self::Fig2a),
            "fig2b" => Ok(Self::Fig2b),
            "fig3a" => Ok(Self::Fig3a),
            "fig3b" => Ok(Self::Fig3b),
            "fig4-ex1" => Ok(Self::Fig4Ex1),
            "fig4-ex2" => Ok(Self::Fig4Ex2),
            "fig4-ex3" => Ok(Self::Fig4Ex3),
            "table-adult" => Ok(Self::TableAdult),
            "table-compas" => Ok(Self::TableCompas),
            "table-delta-adult" => Ok(Self::TableDeltaAdult),
            "table-delta-compas" => Ok(Self::TableDeltaCompas),
            other => Err(FlapError::Config(format!(
                "unknown experiment '{other}'; known ids: {}",
                Self::all_labels().join(", ")
            ))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Fig2a => "fig2a",
            Self::Fig2b => "fig2b",
            Self::Fig3a => "fig3a",
            Self::Fig3b => "fig3b",
            Self::Fig4Ex1 => "fig4-ex1",
            Self::Fig4Ex2 => "fig4-ex2",
            Self::Fig4Ex3 => "fig4-ex3",
            Self::TableAdult => "table-adult",
            Self::TableCompas => "table-compas",
            Self::TableDeltaAdult => "table-delta-adult",
            Self::TableDeltaCompas => "table-delta-compas",
        }
    }

    pub fn all_labels() -> Vec<&'static str> {
        vec![
            "fig2a",
            "fig2b",
            "fig3a",
            "fig3b",
            "fig4-ex1",
            "fig4-ex2",
            "fig4-ex3",
            "table-adult",
            "table-compas",
            "table-delta-adult",
            "table-delta-compas",
        ]
    }
}

/// Optional knobs; `None` means the experiment's desk-scale default.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub n: Option<usize>,
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    pub deltas: Option<Vec<f64>>,
    pub methods: Option<Vec<Method>>,
    pub test: Option<CiTestMethod>,
    pub prep: Option<PrepKind>,
    pub data_dir: Option<PathBuf>,
}

/// A fully specified experiment run.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub id: ExperimentId,
    pub overrides: Overrides,
    pub outdir: PathBuf,
}

const DEFAULT_SEED: u64 = 20220924;
const METRIC_NAMES: [&str; 4] = ["cf_metric", "cf_bound", "accuracy", "accuracy_drawn"];

fn write_csv_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the experiment and returns the written files (manifest last).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(&cfg.outdir)?;
    match cfg.id {
        ExperimentId::Fig2a | ExperimentId::Fig2b | ExperimentId::Fig3a | ExperimentId::Fig3b => {
            run_metric_curves(cfg)
        }
        ExperimentId::Fig4Ex1 | ExperimentId::Fig4Ex2 | ExperimentId::Fig4Ex3 => {
            run_power_figure(cfg)
        }
        ExperimentId::TableAdult
        | ExperimentId::TableCompas
        | ExperimentId::TableDeltaAdult
        | ExperimentId::TableDeltaCompas => run_table(cfg),
    }
}

/// Loads the manifest written by a previous run and re-executes its
/// configuration into `outdir`.
pub fn run_from_manifest(manifest_path: &Path, outdir: &Path) -> Result<Vec<PathBuf>> {
    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(manifest_path)?)?;
    let cfg = manifest.to_config(outdir)?;
    run_experiment(&cfg)
}

// ---------------------------------------------------------------------------
// metric-curve experiments (loan and admission grids)

struct CurveSpec {
    x_name: &'static str,
    title: &'static str,
    grid: Vec<(f64, Scm)>,
}

fn curve_spec(id: ExperimentId) -> CurveSpec {
    match id {
        ExperimentId::Fig2a => CurveSpec {
            x_name: "sigma_a",
            title: "loan model, increasing log-income spread ratio",
            grid: [1.0, 1.3, 1.6, 1.9, 2.2, 2.5, 2.8]
                .iter()
                .map(|&sigma_a| {
                    (
                        sigma_a,
                        Scm::Ex1(Scm1Params {
                            sigma_a,
                            ..Scm1Params::default()
                        }),
                    )
                })
                .collect(),
        },
        ExperimentId::Fig2b => CurveSpec {
            x_name: "lambda",
            title: "admission model, increasing score shift",
            grid: [0.0, 0.2, 0.4, 0.6, 0.8]
                .iter()
                .map(|&lambda| {
                    (
                        lambda,
                        Scm::Ex3(Scm3Params {
                            lambda,
                            ..Scm3Params::default()
                        }),
                    )
                })
                .collect(),
        },
        ExperimentId::Fig3a => CurveSpec {
            x_name: "income_shift",
            title: "three-group model, increasing income gap",
            grid: [0.0, 0.25, 0.5, 0.75, 1.0]
                .iter()
                .map(|&t| {
                    (
                        t,
                        Scm::Ex2(Scm2Params {
                            lambda_a: [0.58, -0.15 * t, -0.25 * t],
                            ..Scm2Params::default()
                        }),
                    )
                })
                .collect(),
        },
        ExperimentId::Fig3b => CurveSpec {
            x_name: "education_shift",
            title: "three-group model, increasing education gap",
            grid: [0.0, 0.25, 0.3, 0.4, 0.5]
                .iter()
                .map(|&t| {
                    (
                        t,
                        Scm::Ex2(Scm2Params {
                            lambda_e: [1.07, -t, -1.6 * t],
                            ..Scm2Params::default()
                        }),
                    )
                })
                .collect(),
        },
        _ => unreachable!("not a curve experiment"),
    }
}

/// Per-method metric bundle on one (train, test) draw.
fn method_metrics(
    method: Method,
    train: &Dataset,
    test: &Dataset,
    prep_m: &Preprocessor,
    delta: f64,
    seed: u64,
) -> Result<[f64; 4]> {
    let pred = fit_method(method, train)?;
    let m = cf_metric(&pred, test, prep_m)?;
    let b = cf_bound(
        &pred,
        test,
        &MetricConfig {
            delta,
            neighborhood_cap: 50,
            seed,
        },
    )?;
    let a = accuracy(&pred, test);
    let ad = drawn_accuracy(&pred, test, mix_seed(seed, &[13]));
    Ok([m, b, a, ad])
}

fn run_metric_curves(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let spec = curve_spec(cfg.id);
    let n = cfg.overrides.n.unwrap_or(2_000);
    let reps = cfg.overrides.replications.unwrap_or(100);
    let seed = cfg.overrides.seed.unwrap_or(DEFAULT_SEED);
    let methods = cfg
        .overrides
        .methods
        .clone()
        .unwrap_or_else(Method::table_methods);
    let delta = cfg
        .overrides
        .deltas
        .as_ref()
        .and_then(|d| d.first().copied())
        .unwrap_or(0.05);

    // [rep][x][method] -> metric bundle
    let all: Vec<Vec<Vec<[f64; 4]>>> = (0..reps)
        .into_par_iter()
        .map(|rep| -> Result<Vec<Vec<[f64; 4]>>> {
            let mut per_x = Vec::with_capacity(spec.grid.len());
            for (xi, (_, scm)) in spec.grid.iter().enumerate() {
                let train_seed = mix_seed(seed, &[xi as u64, rep as u64, 0]);
                let test_seed = mix_seed(seed, &[xi as u64, rep as u64, 1]);
                let (train, _) = scm.simulate(n, train_seed)?;
                let (test, _) = scm.simulate(n, test_seed)?;
                let prep_m = fit_marginal_mapping(&train)?;
                let mut per_method = Vec::with_capacity(methods.len());
                for (mi, &method) in methods.iter().enumerate() {
                    let metric_seed = mix_seed(seed, &[xi as u64, rep as u64, 2 + mi as u64]);
                    per_method.push(method_metrics(
                        method,
                        &train,
                        &test,
                        &prep_m,
                        delta,
                        metric_seed,
                    )?);
                }
                per_x.push(per_method);
            }
            Ok(per_x)
        })
        .collect::<Result<Vec<_>>>()?;

    // tidy rows
    let mut tidy: Vec<Vec<String>> = Vec::new();
    for (rep, per_x) in all.iter().enumerate() {
        for (xi, per_method) in per_x.iter().enumerate() {
            let x = spec.grid[xi].0;
            for (mi, bundle) in per_method.iter().enumerate() {
                for (metric_idx, name) in METRIC_NAMES.iter().enumerate() {
                    tidy.push(vec![
                        rep.to_string(),
                        x.to_string(),
                        methods[mi].label().to_string(),
                        (*name).to_string(),
                        bundle[metric_idx].to_string(),
                    ]);
                }
            }
        }
    }
    let tidy_path = cfg.outdir.join("tidy.csv");
    write_csv_rows(
        &tidy_path,
        &["replication", "x", "method", "metric", "value"],
        &tidy,
    )?;

    // summary rows
    let mut summary: Vec<Vec<String>> = Vec::new();
    let mut summary_values: Vec<(usize, usize, usize, f64, f64)> = Vec::new();
    for (xi, (x, _)) in spec.grid.iter().enumerate() {
        for (mi, method) in methods.iter().enumerate() {
            for (metric_idx, name) in METRIC_NAMES.iter().enumerate() {
                let vals: Vec<f64> = all.iter().map(|per_x| per_x[xi][mi][metric_idx]).collect();
                let (mean, _) = mean_and_sd(&vals);
                let sd = if vals.len() < 2 {
                    0.0
                } else {
                    let m = mean;
                    (vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
                        / (vals.len() - 1) as f64)
                        .sqrt()
                };
                summary.push(vec![
                    x.to_string(),
                    method.label().to_string(),
                    (*name).to_string(),
                    mean.to_string(),
                    sd.to_string(),
                ]);
                summary_values.push((xi, mi, metric_idx, mean, sd));
            }
        }
    }
    let summary_path = cfg.outdir.join("summary.csv");
    write_csv_rows(&summary_path, &["x", "method", "metric", "mean", "sd"], &summary)?;

    // one panel per paper metric, derived from the summary values
    let mut outputs = vec![tidy_path, summary_path];
    for (metric_idx, name) in METRIC_NAMES.iter().enumerate().take(3) {
        let series: Vec<Series> = methods
            .iter()
            .enumerate()
            .map(|(mi, method)| Series {
                name: method.label().to_string(),
                points: summary_values
                    .iter()
                    .filter(|&&(_, smi, smetric, _, _)| smi == mi && smetric == metric_idx)
                    .map(|&(xi, _, _, mean, sd)| (spec.grid[xi].0, mean, sd))
                    .collect(),
            })
            .collect();
        let svg = line_chart_svg(spec.title, spec.x_name, name, &series);
        let path = cfg.outdir.join(format!("plot-{name}.svg"));
        std::fs::write(&path, svg)?;
        outputs.push(path);
    }

    let manifest = Manifest::new(cfg, n, reps, seed, &outputs);
    outputs.push(manifest.write(&cfg.outdir)?);
    Ok(outputs)
}

// ---------------------------------------------------------------------------
// power-study figures

fn power_cells(id: ExperimentId) -> Vec<PowerCell> {
    let direct_effects = [0.0, 0.25, 0.5, 1.0];
    match id {
        ExperimentId::Fig4Ex1 => direct_effects
            .iter()
            .map(|&beta_s| PowerCell {
                label: format!("beta_s={beta_s}"),
                scm: Scm::Ex1(Scm1Params {
                    sigma_a: 1.0,
                    lambda_a: 0.0,
                    beta_s,
                    ..Scm1Params::default()
                }),
            })
            .collect(),
        // the direct effect only reaches the two minority groups (24% of
        // rows), so larger shifts are needed for a usable power range
        ExperimentId::Fig4Ex2 => [0.0, 1.0, 2.0, 3.0]
            .iter()
            .map(|&b| PowerCell {
                label: format!("beta_1=beta_2={b}"),
                scm: Scm::Ex2(Scm2Params {
                    beta1: b,
                    beta2: b,
                    ..Scm2Params::default()
                }),
            })
            .collect(),
        ExperimentId::Fig4Ex3 => direct_effects
            .iter()
            .map(|&beta_s| PowerCell {
                label: format!("beta_s={beta_s}"),
                scm: Scm::Ex3(Scm3Params {
                    lambda: 0.0,
                    beta_s,
                    ..Scm3Params::default()
                }),
            })
            .collect(),
        _ => unreachable!("not a power experiment"),
    }
}

fn run_power_figure(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let seed = cfg.overrides.seed.unwrap_or(DEFAULT_SEED);
    let reps = cfg.overrides.replications.unwrap_or(200);
    let sample_sizes = match cfg.overrides.n {
        Some(n) => vec![n],
        None => vec![200, 500],
    };
    let test = cfg.overrides.test.unwrap_or(CiTestMethod::LikelihoodRatio);
    let prep = cfg.overrides.prep.unwrap_or(PrepKind::MarginalMapping);
    let grid = PowerStudyGrid {
        cells: power_cells(cfg.id),
        sample_sizes: sample_sizes.clone(),
        replications: reps,
        alpha: 0.05,
        bootstrap: 199,
        seed,
    };
    let rows = crate::citest::power_study(&grid, test, prep)?;

    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.example.clone(),
                r.params.clone(),
                r.n.to_string(),
                r.cf_metric.to_string(),
                r.power.to_string(),
                r.replications.to_string(),
                r.alpha.to_string(),
                r.test.clone(),
                r.prep.clone(),
            ]
        })
        .collect();
    let power_path = cfg.outdir.join("power.csv");
    write_csv_rows(
        &power_path,
        &[
            "example", "params", "n", "cf_metric", "power", "replications", "alpha", "test",
            "prep",
        ],
        &csv_rows,
    )?;

    // power against the CF-metric of the generating rule, one series per n
    let series: Vec<Series> = sample_sizes
        .iter()
        .map(|&n| {
            let mut points: Vec<(f64, f64, f64)> = rows
                .iter()
                .filter(|r| r.n == n)
                .map(|r| (r.cf_metric, r.power, 0.0))
                .collect();
            points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            Series {
                name: format!("n={n}"),
                points,
            }
        })
        .collect();
    let svg = line_chart_svg(
        &format!("fairness test power ({})", rows[0].example),
        "CF-metric of the generating rule",
        "rejection rate",
        &series,
    );
    let plot_path = cfg.outdir.join("plot-power.svg");
    std::fs::write(&plot_path, svg)?;

    let mut outputs = vec![power_path, plot_path];
    let manifest = Manifest::new(cfg, 0, reps, seed, &outputs);
    outputs.push(manifest.write(&cfg.outdir)?);
    Ok(outputs)
}

// ---------------------------------------------------------------------------
// public-data tables

/// Resolves the directory holding the public dataset CSVs and schemas.
pub fn resolve_data_dir(overrides: &Overrides) -> PathBuf {
    overrides
        .data_dir
        .clone()
        .or_else(|| std::env::var_os("FLAP_DATA_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data"))
}

fn require_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        return Err(FlapError::Config(format!(
            "required data file '{}' not found; see the README section \
             'Obtaining the public datasets' for download instructions",
            path.display()
        )));
    }
    Ok(())
}

/// Loads the adult income train/test pair from `dir`.
pub fn load_adult(dir: &Path) -> Result<(Dataset, Dataset)> {
    let schema_path = dir.join("adult.schema");
    let train_path = dir.join("adult_train.csv");
    let test_path = dir.join("adult_test.csv");
    require_file(&schema_path)?;
    require_file(&train_path)?;
    require_file(&test_path)?;
    let schema = DatasetSchema::from_path(&schema_path)?;
    let (train, _) = load_csv(&train_path, &schema)?;
    let (test, _) = load_csv(&test_path, &schema)?;
    if train.group_labels() != test.group_labels() {
        return Err(FlapError::Value(
            "adult train/test group tables disagree".into(),
        ));
    }
    Ok((train, test))
}

/// Loads the COMPAS dataset from `dir` and splits off `test_n` rows.
pub fn load_compas(dir: &Path, test_n: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    let schema_path = dir.join("compas.schema");
    let data_path = dir.join("compas.csv");
    require_file(&schema_path)?;
    require_file(&data_path)?;
    let schema = DatasetSchema::from_path(&schema_path)?;
    let (data, _) = load_csv(&data_path, &schema)?;
    split(&data, test_n, seed)
}

fn run_table(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let seed = cfg.overrides.seed.unwrap_or(DEFAULT_SEED);
    let dir = resolve_data_dir(&cfg.overrides);
    let methods = cfg
        .overrides
        .methods
        .clone()
        .unwrap_or_else(Method::table_methods);
    let (train, test) = match cfg.id {
        ExperimentId::TableAdult | ExperimentId::TableDeltaAdult => load_adult(&dir)?,
        ExperimentId::TableCompas | ExperimentId::TableDeltaCompas => {
            load_compas(&dir, 1_697, seed)?
        }
        _ => unreachable!("not a table experiment"),
    };
    let deltas = cfg.overrides.deltas.clone().unwrap_or_else(|| match cfg.id {
        ExperimentId::TableDeltaAdult | ExperimentId::TableDeltaCompas => {
            vec![0.0, 0.025, 0.05, 0.1, 1.0]
        }
        _ => vec![0.05],
    });

    let rows = table_rows(&train, &test, &methods, &deltas, seed)?;
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.method.clone(),
                r.delta.to_string(),
                r.cf_metric.to_string(),
                r.cf_bound.to_string(),
                r.accuracy.to_string(),
                r.accuracy_drawn.to_string(),
            ]
        })
        .collect();
    let table_path = cfg.outdir.join("table.csv");
    write_csv_rows(
        &table_path,
        &[
            "method",
            "delta",
            "cf_metric",
            "cf_bound",
            "accuracy",
            "accuracy_drawn",
        ],
        &csv_rows,
    )?;
    let mut outputs = vec![table_path];
    let manifest = Manifest::new(cfg, train.n(), 1, seed, &outputs);
    outputs.push(manifest.write(&cfg.outdir)?);
    Ok(outputs)
}

/// One method's metric row at one delta.
#[derive(Debug, Clone, Serialize)]
pub struct TableRow {
    pub method: String,
    pub delta: f64,
    pub cf_metric: f64,
    pub cf_bound: f64,
    pub accuracy: f64,
    pub accuracy_drawn: f64,
}

/// Fits every method on `train` and evaluates the metric bundle on `test`
/// at each delta.
pub fn table_rows(
    train: &Dataset,
    test: &Dataset,
    methods: &[Method],
    deltas: &[f64],
    seed: u64,
) -> Result<Vec<TableRow>> {
    let prep_m = fit_marginal_mapping(train)?;
    let fitted: Vec<(Method, Predictor)> = methods
        .iter()
        .map(|&m| fit_method(m, train).map(|p| (m, p)))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (mi, (method, pred)) in fitted.iter().enumerate() {
        let metric = cf_metric(pred, test, &prep_m)?;
        let acc = accuracy(pred, test);
        let acc_drawn = drawn_accuracy(pred, test, mix_seed(seed, &[mi as u64, 13]));
        for &delta in deltas {
            let bound = cf_bound(
                pred,
                test,
                &MetricConfig {
                    delta,
                    neighborhood_cap: 50,
                    seed: mix_seed(seed, &[mi as u64]),
                },
            )?;
            rows.push(TableRow {
                method: method.label().to_string(),
                delta,
                cf_metric: metric,
                cf_bound: bound,
                accuracy: acc,
                accuracy_drawn: acc_drawn,
            });
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// manifests

/// Exact configuration of a finished run; reruns reproduce outputs
/// byte-identically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub seed: u64,
    pub n: usize,
    pub replications: usize,
    pub deltas: Option<Vec<f64>>,
    pub methods: Option<Vec<String>>,
    pub test: Option<String>,
    pub prep: Option<String>,
    pub data_dir: Option<String>,
    pub package_version: String,
    pub outputs: Vec<String>,
}

impl Manifest {
    fn new(cfg: &ExperimentConfig, n: usize, reps: usize, seed: u64, outputs: &[PathBuf]) -> Self {
        Manifest {
            experiment: cfg.id.label().to_string(),
            seed,
            n: cfg.overrides.n.unwrap_or(n),
            replications: cfg.overrides.replications.unwrap_or(reps),
            deltas: cfg.overrides.deltas.clone(),
            methods: cfg
                .overrides
                .methods
                .as_ref()
                .map(|ms| ms.iter().map(|m| m.label().to_string()).collect()),
            test: cfg.overrides.test.map(|t| t.label().to_string()),
            prep: cfg.overrides.prep.map(|p| p.label().to_string()),
            data_dir: cfg
                .overrides
                .data_dir
                .as_ref()
                .map(|p| p.display().to_string()),
            package_version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: outputs
                .iter()
                .map(|p| {
                    p.file_name()
                        .map(|f| f.to_string_lossy().into_owned())
                        .unwrap_or_default()
                })
                .collect(),
        }
    }

    fn write(&self, outdir: &Path) -> Result<PathBuf> {
        let path = outdir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }

    /// Reconstructs the experiment configuration recorded in the manifest.
    pub fn to_config(&self, outdir: &Path) -> Result<ExperimentConfig> {
        let id = ExperimentId::parse(&self.experiment)?;
        let methods = match &self.methods {
            Some(labels) => Some(
                labels
                    .iter()
                    .map(|l| Method::parse(l))
                    .collect::<Result<Vec<_>>>()?,
            ),
            None => None,
        };
        Ok(ExperimentConfig {
            id,
            overrides: Overrides {
                n: Some(self.n),
                replications: Some(self.replications),
                seed: Some(self.seed),
                deltas: self.deltas.clone(),
                methods,
                test: self.test.as_deref().map(CiTestMethod::parse).transpose()?,
                prep: self.prep.as_deref().map(PrepKind::parse).transpose()?,
                data_dir: self.data_dir.as_ref().map(PathBuf::from),
            },
            outdir: outdir.to_path_buf(),
        })
    }
}

// ---------------------------------------------------------------------------
// audit

/// Options for the end-user audit path.
#[derive(Debug, Clone)]
pub struct AuditOptions {
    pub prep: PrepKind,
    pub test: CiTestMethod,
    pub bootstrap: usize,
    pub bandwidth: Option<f64>,
    pub seed: u64,
    /// Also fit the preprocess-then-learn pipeline and report its metrics.
    pub with_flap: bool,
    pub alpha: f64,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            prep: PrepKind::MarginalMapping,
            test: CiTestMethod::LikelihoodRatio,
            bootstrap: 199,
            bandwidth: None,
            seed: DEFAULT_SEED,
            with_flap: false,
            alpha: 0.05,
        }
    }
}

/// Metric bundle for one method on one dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FairnessReport {
    pub dataset: String,
    pub method: String,
    pub cf_metric: f64,
    pub cf_bound: f64,
    pub accuracy: f64,
    pub accuracy_drawn: f64,
    pub p_value: Option<f64>,
    pub delta: f64,
    pub seed: u64,
}

/// Outcome of [`audit`].
#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub dataset: String,
    pub rows: usize,
    pub rows_dropped: usize,
    pub groups: Vec<String>,
    pub test: TestResult,
    pub alpha: f64,
    /// True when the observed decisions' conditional independence is
    /// rejected at `alpha` (the original decisions look biased).
    pub reject_fairness: bool,
    pub flap: Option<FairnessReport>,
}

/// Loads a dataset, tests its decisions for counterfactual fairness, and
/// optionally fits the fair pipeline and reports its metrics.
pub fn audit(data_path: &Path, schema_path: &Path, opts: &AuditOptions) -> Result<AuditReport> {
    let schema = DatasetSchema::from_path(schema_path)?;
    let (data, ingest) = load_csv(data_path, &schema)?;
    let test_result = run_ci_test(
        &data,
        opts.prep,
        opts.test,
        opts.bootstrap,
        opts.bandwidth,
        opts.seed,
    )?;
    let reject = test_result.p_value < opts.alpha;

    let flap = if opts.with_flap {
        let held_out = (data.n() / 4).max(1);
        let (train, test) = split(&data, held_out, opts.seed)?;
        let model = flap_fit(&train, opts.prep, FlapLearner::Aml)?;
        let prep_m = fit_marginal_mapping(&train)?;
        let pred = Predictor::Flap(model);
        let delta = 0.05;
        Some(FairnessReport {
            dataset: data_path.display().to_string(),
            method: pred.method_label().to_string(),
            cf_metric: cf_metric(&pred, &test, &prep_m)?,
            cf_bound: cf_bound(
                &pred,
                &test,
                &MetricConfig {
                    delta,
                    neighborhood_cap: 50,
                    seed: opts.seed,
                },
            )?,
            accuracy: accuracy(&pred, &test),
            accuracy_drawn: drawn_accuracy(&pred, &test, mix_seed(opts.seed, &[13])),
            p_value: Some(test_result.p_value),
            delta,
            seed: opts.seed,
        })
    } else {
        None
    };

    Ok(AuditReport {
        dataset: data_path.display().to_string(),
        rows: data.n(),
        rows_dropped: ingest.dropped(),
        groups: data.group_labels().to_vec(),
        test: test_result,
        alpha: opts.alpha,
        reject_fairness: reject,
        flap,
    })
}
