//! Conditional-independence tests of decisions and groups given processed
//! attributes, plus the power-study driver.
//!
//! Two tests are provided. The parametric test fits nested logistic models
//! of the decision on the processed attributes with and without group
//! contrasts and refers the likelihood-ratio statistic to chi-square with
//! K-1 degrees of freedom. The nonparametric test computes a
//! kernel-weighted conditional-dependence statistic between the decision
//! and the group, calibrated by a local bootstrap that resamples groups
//! within kernel neighborhoods of the conditioning variable.

use crate::data::Dataset;
use crate::error::{FlapError, Result};
use crate::learners::{build_design, fit_logistic, log_likelihood, Design, DEFAULT_RIDGE};
use crate::metrics::cf_metric;
use crate::numerics::{mean_and_sd, mix_seed};
use crate::preprocess::{fit_marginal_mapping, fit_orthogonalization, PrepKind, Preprocessor};
use crate::scm::Scm;
use crate::stats::chi_square_sf;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Which conditional-independence test to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CiTestMethod {
    /// Likelihood-ratio chi-square on nested logistic models.
    LikelihoodRatio,
    /// Kernel-weighted dependence statistic with local bootstrap.
    KernelLocalBootstrap,
}

impl CiTestMethod {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lr" | "logistic" | "lr-chi2" => Ok(CiTestMethod::LikelihoodRatio),
            "kernel" | "kernel-local-bootstrap" => Ok(CiTestMethod::KernelLocalBootstrap),
            other => Err(FlapError::Config(format!(
                "unknown test '{other}' (expected 'lr' or 'kernel')"
            ))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            CiTestMethod::LikelihoodRatio => "lr-chi2",
            CiTestMethod::KernelLocalBootstrap => "kernel-local-bootstrap",
        }
    }
}

/// Outcome of one conditional-independence test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: String,
    /// Chi-square degrees of freedom (parametric test).
    pub df: Option<usize>,
    /// Per-coordinate kernel bandwidths (kernel test).
    pub bandwidth: Option<Vec<f64>>,
    /// Bootstrap replicate count (kernel test).
    pub bootstrap: Option<usize>,
    /// Set when a degraded code path was taken (ridge fallback,
    /// unconditional permutation fallback).
    pub fallback: Option<String>,
}

/// Parametric fairness test: decision regressed on processed attributes
/// with and without group contrasts; likelihood-ratio against chi-square
/// with K-1 degrees of freedom.
pub fn logistic_cf_test(data: &Dataset, prep: &Preprocessor) -> Result<TestResult> {
    let k = data.num_groups();
    if k < 2 {
        return Err(FlapError::Test(
            "the fairness test needs at least two groups (zero degrees of freedom)".into(),
        ));
    }
    let processed = prep.apply_dataset(data);
    let labels: Vec<u8> = data.rows().iter().map(|r| r.decision).collect();

    let null_design = Design {
        groups: 0,
        num_attrs: data.dim(),
    };
    let full_design = Design {
        groups: k,
        num_attrs: data.dim(),
    };
    let x0 = build_design(data, null_design, Some(&processed));
    let x1 = build_design(data, full_design, Some(&processed));
    let (c0, d0) = fit_logistic(&x0, &labels, DEFAULT_RIDGE)
        .map_err(|e| FlapError::Test(format!("null model fit failed: {e}")))?;
    let (c1, d1) = fit_logistic(&x1, &labels, DEFAULT_RIDGE)
        .map_err(|e| FlapError::Test(format!("full model fit failed: {e}")))?;

    let ll0 = log_likelihood(&x0, &labels, &DVector::from_vec(c0));
    let ll1 = log_likelihood(&x1, &labels, &DVector::from_vec(c1));
    let stat = (2.0 * (ll1 - ll0)).max(0.0);
    let df = k - 1;
    let p_value = chi_square_sf(stat, df);
    let fallback = if d0.separation_fallback || d1.separation_fallback {
        Some("ridge fallback engaged during fitting".to_string())
    } else {
        None
    };
    Ok(TestResult {
        statistic: stat,
        p_value,
        method: CiTestMethod::LikelihoodRatio.label().to_string(),
        df: Some(df),
        bandwidth: None,
        bootstrap: None,
        fallback,
    })
}

/// Bootstrap p-value `(1 + #{replicates >= observed}) / (B + 1)`.
pub fn bootstrap_pvalue(observed: f64, replicates: &[f64]) -> f64 {
    let exceed = replicates.iter().filter(|&&t| t >= observed).count();
    (1.0 + exceed as f64) / (replicates.len() as f64 + 1.0)
}

/// Kernel-weighted conditional-dependence statistic between `y` and `s`
/// given `z`, with a local bootstrap null.
///
/// At each evaluation point i, the statistic accumulates the squared
/// kernel-weighted covariance between the decision and each group
/// indicator; the null distribution resamples each unit's group from the
/// kernel-smoothed conditional law of S given Z. `bandwidth` multiplies
/// each coordinate's standard deviation (`None` uses the rule-of-thumb
/// factor `n^(-1/(4+q))`).
pub fn kernel_ci_test(
    y: &[u8],
    s: &[usize],
    z: &[Vec<f64>],
    num_groups: usize,
    bandwidth: Option<f64>,
    b: usize,
    seed: u64,
) -> Result<TestResult> {
    let n = y.len();
    if s.len() != n || z.len() != n {
        return Err(FlapError::Test("input length mismatch".into()));
    }
    if n == 0 {
        return Err(FlapError::Test("empty input".into()));
    }
    if b < 99 {
        return Err(FlapError::Test(format!(
            "at least 99 bootstrap replicates required, got {b}"
        )));
    }
    if s.iter().any(|&g| g >= num_groups) {
        return Err(FlapError::Test("group id out of range".into()));
    }
    let q = z[0].len();

    // per-coordinate bandwidths on the sd scale
    let factor = bandwidth.unwrap_or_else(|| (n as f64).powf(-1.0 / (4.0 + q as f64)));
    let mut scales = Vec::with_capacity(q);
    for j in 0..q {
        let col: Vec<f64> = z.iter().map(|row| row[j]).collect();
        let (_, sd) = mean_and_sd(&col);
        scales.push(sd * factor);
    }
    let informative: Vec<usize> = (0..q).filter(|&j| scales[j] > 0.0).collect();
    let degenerate = informative.is_empty();

    // row-normalized kernel weights at a given bandwidth multiple
    // (uniform when z is degenerate)
    let weights_at = |mult: f64| -> Vec<Vec<f64>> {
        let mut weights = vec![vec![0.0f64; n]; n];
        if degenerate {
            for row in weights.iter_mut() {
                for w in row.iter_mut() {
                    *w = 1.0 / n as f64;
                }
            }
            return weights;
        }
        for i in 0..n {
            let mut total = 0.0;
            for l in 0..n {
                let mut d2 = 0.0;
                for &j in &informative {
                    let t = (z[i][j] - z[l][j]) / (scales[j] * mult);
                    d2 += t * t;
                }
                let w = (-0.5 * d2).exp();
                weights[i][l] = w;
                total += w;
            }
            for l in 0..n {
                weights[i][l] /= total;
            }
        }
        weights
    };
    let weights = weights_at(1.0);

    // conditional pmf of S given Z for resampling and studentization;
    // oversmoothed (double bandwidth) so its sampling noise does not
    // deflate the bootstrap null variance
    let smooth = weights_at(2.0);
    let mut cond = vec![vec![0.0f64; num_groups]; n];
    for (l_outer, row) in smooth.iter().enumerate() {
        for (l, &w) in row.iter().enumerate() {
            cond[l_outer][s[l]] += w;
        }
    }

    // residual coefficients c[i][l] = w[i][l] * (y_l - ybar_i); their row
    // sums vanish, so group sums equal centered covariances
    let mut coeff = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        let ybar: f64 = (0..n).map(|l| weights[i][l] * f64::from(y[l])).sum();
        for l in 0..n {
            coeff[i][l] = weights[i][l] * (f64::from(y[l]) - ybar);
        }
    }

    // studentizers: the variance of each group sum under independent
    // resampling from the conditional pmf; using the same denominator for
    // the observed and bootstrap statistics cancels first-order bias
    let mut variance = vec![vec![0.0f64; num_groups]; n];
    for i in 0..n {
        for l in 0..n {
            let c2 = coeff[i][l] * coeff[i][l];
            for g in 0..num_groups {
                variance[i][g] += c2 * cond[l][g] * (1.0 - cond[l][g]);
            }
        }
    }

    let statistic_of = |groups: &[usize]| -> f64 {
        let mut total = 0.0;
        for (i, row) in coeff.iter().enumerate() {
            let mut acc = vec![0.0f64; num_groups];
            for (l, &c) in row.iter().enumerate() {
                acc[groups[l]] += c;
            }
            for g in 0..num_groups {
                if variance[i][g] > 1e-300 {
                    total += acc[g] * acc[g] / variance[i][g];
                }
            }
        }
        total / n as f64
    };

    let observed = statistic_of(s);

    let replicates: Vec<f64> = (0..b)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[rep as u64]));
            let resampled: Vec<usize> = if degenerate {
                // unconditional permutation
                let mut idx: Vec<usize> = (0..n).collect();
                use rand::seq::SliceRandom;
                idx.shuffle(&mut rng);
                idx.iter().map(|&i| s[i]).collect()
            } else {
                (0..n)
                    .map(|i| {
                        let u: f64 = rng.random();
                        let mut acc = 0.0;
                        for g in 0..num_groups {
                            acc += cond[i][g];
                            if u < acc {
                                return g;
                            }
                        }
                        num_groups - 1
                    })
                    .collect()
            };
            statistic_of(&resampled)
        })
        .collect();

    Ok(TestResult {
        statistic: observed,
        p_value: bootstrap_pvalue(observed, &replicates),
        method: CiTestMethod::KernelLocalBootstrap.label().to_string(),
        df: None,
        bandwidth: Some(scales),
        bootstrap: Some(b),
        fallback: degenerate
            .then(|| "degenerate conditioning variable: unconditional permutation".to_string()),
    })
}

/// Runs the selected test on a dataset after fitting the given
/// preprocessor kind on it.
pub fn run_ci_test(
    data: &Dataset,
    prep_kind: PrepKind,
    method: CiTestMethod,
    bootstrap: usize,
    bandwidth: Option<f64>,
    seed: u64,
) -> Result<TestResult> {
    let prep = match prep_kind {
        PrepKind::Orthogonalization => fit_orthogonalization(data)?,
        PrepKind::MarginalMapping => fit_marginal_mapping(data)?,
    };
    match method {
        CiTestMethod::LikelihoodRatio => logistic_cf_test(data, &prep),
        CiTestMethod::KernelLocalBootstrap => {
            let z = prep.apply_dataset(data);
            let y: Vec<u8> = data.rows().iter().map(|r| r.decision).collect();
            let s: Vec<usize> = data.rows().iter().map(|r| r.group).collect();
            kernel_ci_test(&y, &s, &z, data.num_groups(), bandwidth, bootstrap, seed)
        }
    }
}

/// One parameter cell of a power study.
#[derive(Debug, Clone)]
pub struct PowerCell {
    pub label: String,
    pub scm: Scm,
}

/// Replication grid for estimating test power.
#[derive(Debug, Clone)]
pub struct PowerStudyGrid {
    pub cells: Vec<PowerCell>,
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    pub alpha: f64,
    pub bootstrap: usize,
    pub seed: u64,
}

impl PowerStudyGrid {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(FlapError::Config("replications must be >= 1".into()));
        }
        if !(0.0 < self.alpha && self.alpha < 1.0) {
            return Err(FlapError::Config("alpha must lie in (0, 1)".into()));
        }
        if self.cells.is_empty() || self.sample_sizes.is_empty() {
            return Err(FlapError::Config("empty power grid".into()));
        }
        Ok(())
    }
}

/// One output row of [`power_study`].
#[derive(Debug, Clone, Serialize)]
pub struct PowerRow {
    pub example: String,
    pub params: String,
    pub n: usize,
    /// CF-metric of the generating decision rule, the study's x-axis.
    pub cf_metric: f64,
    pub power: f64,
    pub replications: usize,
    pub alpha: f64,
    pub test: String,
    pub prep: String,
}

/// Estimates rejection rates over the grid; deterministic given the seed.
pub fn power_study(
    grid: &PowerStudyGrid,
    method: CiTestMethod,
    prep_kind: PrepKind,
) -> Result<Vec<PowerRow>> {
    grid.validate()?;
    let mut rows = Vec::new();
    for (cell_idx, cell) in grid.cells.iter().enumerate() {
        // x-axis: CF-metric of the true rule on a fixed reference draw
        let ref_seed = mix_seed(grid.seed, &[cell_idx as u64, u64::MAX]);
        let (ref_train, _) = cell.scm.simulate(2_000, ref_seed)?;
        let (ref_test, _) = cell.scm.simulate(2_000, mix_seed(ref_seed, &[1]))?;
        let ref_prep = fit_marginal_mapping(&ref_train)?;
        let oracle = crate::learners::Predictor::ScmOracle(cell.scm);
        let truth_metric = cf_metric(&oracle, &ref_test, &ref_prep)?;

        for &n in &grid.sample_sizes {
            let rejections: usize = (0..grid.replications)
                .into_par_iter()
                .map(|rep| {
                    let rep_seed =
                        mix_seed(grid.seed, &[cell_idx as u64, n as u64, rep as u64]);
                    let (data, _) = cell
                        .scm
                        .simulate(n, rep_seed)
                        .expect("valid grid parameters");
                    let result = run_ci_test(
                        &data,
                        prep_kind,
                        method,
                        grid.bootstrap,
                        None,
                        mix_seed(rep_seed, &[7]),
                    )
                    .expect("test runs on simulated data");
                    usize::from(result.p_value < grid.alpha)
                })
                .sum();
            rows.push(PowerRow {
                example: cell.scm.name().to_string(),
                params: cell.label.clone(),
                n,
                cf_metric: truth_metric,
                power: rejections as f64 / grid.replications as f64,
                replications: grid.replications,
                alpha: grid.alpha,
                test: method.label().to_string(),
                prep: prep_kind.label().to_string(),
            });
        }
    }
    Ok(rows)
}
