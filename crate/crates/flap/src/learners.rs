//! Logistic maximum-likelihood fitting and the predictor family.
//!
//! All shipped learners are penalized logistic regressions fitted by
//! Newton/IRLS with step halving. The predictor family covers:
//!
//! * ML   — logistic regression on group contrasts and raw attributes,
//! * FTU  — attributes only ("fairness through unawareness"),
//! * AML  — the ML score averaged over groups with empirical weights,
//! * FL   — a deterministic-abduction stand-in for latent-variable fair
//!   learning: per-group standardization, then a logistic model on the
//!   standardized latents (labeled "FL-lite" in outputs),
//! * AA   — group-mean counterfactual imputation averaging,
//! * FLAP — any learner composed with a fitted preprocessor
//!   (see [`crate::pipeline`]).
//!
//! [`Predictor::score`] always returns a probability in [0, 1]; anything
//! implementing a score function `(group, attrs) -> [0, 1]` can join the
//! metric computations through the [`Scorer`] trait.

use crate::data::Dataset;
use crate::error::{FlapError, Result};
use crate::numerics::expit;
use crate::pipeline::FlapModel;
use crate::scm::Scm;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Default ridge stabilizer; keeps one-hot blocks and separated data
/// fittable without materially moving coefficients at study sample sizes.
pub const DEFAULT_RIDGE: f64 = 1e-6;

const GRAD_TOL: f64 = 1e-8;
const MAX_ITER: usize = 100;

/// Which inputs enter the design matrix, beyond an always-present intercept.
///
/// Groups enter as K-1 contrast indicators against group 0, which spans the
/// same model space as a full one-hot block next to an intercept and keeps
/// likelihood-ratio degrees of freedom exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Design {
    /// Number of groups contributing contrasts; 0 disables the group block.
    pub groups: usize,
    pub num_attrs: usize,
}

impl Design {
    pub fn dimension(&self) -> usize {
        1 + self.groups.saturating_sub(1) + self.num_attrs
    }

    /// Builds one design row.
    pub fn row(&self, s: Option<usize>, attrs: &[f64]) -> Vec<f64> {
        assert_eq!(attrs.len(), self.num_attrs, "attribute dimension mismatch");
        let mut x = Vec::with_capacity(self.dimension());
        x.push(1.0);
        if self.groups > 0 {
            let s = s.expect("design includes group contrasts");
            assert!(s < self.groups, "group id out of range");
            for g in 1..self.groups {
                x.push(if s == g { 1.0 } else { 0.0 });
            }
        }
        x.extend_from_slice(attrs);
        x
    }
}

/// Convergence bookkeeping for one fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub log_likelihood: f64,
    pub converged: bool,
    pub ridge: f64,
    /// The ridge fallback was engaged after a failed unpenalized fit.
    pub separation_fallback: bool,
}

/// A fitted logistic model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub design: Design,
    pub coefs: Vec<f64>,
    pub diagnostics: FitDiagnostics,
}

impl LogisticModel {
    pub fn linear_predictor(&self, s: Option<usize>, attrs: &[f64]) -> f64 {
        let x = self.design.row(s, attrs);
        x.iter().zip(&self.coefs).map(|(a, b)| a * b).sum()
    }

    pub fn score(&self, s: Option<usize>, attrs: &[f64]) -> f64 {
        expit(self.linear_predictor(s, attrs))
    }
}

/// Unpenalized Bernoulli log-likelihood at `beta` for rows of `x`.
pub fn log_likelihood(x: &DMatrix<f64>, y: &[u8], beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    let mut ll = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let e = eta[i];
        // log(1 + exp(e)) without overflow
        let log1p_exp = if e > 0.0 {
            e + (-e).exp().ln_1p()
        } else {
            e.exp().ln_1p()
        };
        ll += f64::from(yi) * e - log1p_exp;
    }
    ll
}

/// Analytic gradient of the penalized log-likelihood
/// `l(beta) - (ridge/2) * ||beta_non-intercept||^2`.
pub fn penalized_gradient(
    x: &DMatrix<f64>,
    y: &[u8],
    beta: &DVector<f64>,
    ridge: f64,
) -> DVector<f64> {
    let eta = x * beta;
    let resid = DVector::from_iterator(
        y.len(),
        y.iter()
            .enumerate()
            .map(|(i, &yi)| f64::from(yi) - expit(eta[i])),
    );
    let mut grad = x.transpose() * resid;
    for j in 1..beta.len() {
        grad[j] -= ridge * beta[j];
    }
    grad
}

/// Penalized log-likelihood matching [`penalized_gradient`].
pub fn penalized_ll(x: &DMatrix<f64>, y: &[u8], beta: &DVector<f64>, ridge: f64) -> f64 {
    let mut pll = log_likelihood(x, y, beta);
    for j in 1..beta.len() {
        pll -= 0.5 * ridge * beta[j] * beta[j];
    }
    pll
}

/// Fits a penalized logistic regression by Newton/IRLS with step halving.
///
/// Columns are rescaled internally to unit max-absolute-value; the penalty
/// is applied on the original scale, so the optimum is unchanged and the
/// reported coefficients are on the original scale. Convergence requires
/// the scaled gradient's infinity norm below 1e-8 within 100 iterations.
pub fn fit_logistic(x: &DMatrix<f64>, y: &[u8], ridge: f64) -> Result<(Vec<f64>, FitDiagnostics)> {
    if x.nrows() == 0 {
        return Err(FlapError::Fit("no rows to fit".into()));
    }
    if x.nrows() != y.len() {
        return Err(FlapError::Fit("label/row count mismatch".into()));
    }
    match fit_logistic_inner(x, y, ridge) {
        Ok((coefs, diag)) => Ok((coefs, diag)),
        Err(_) if ridge == 0.0 => {
            let (coefs, diag) = fit_logistic_inner(x, y, DEFAULT_RIDGE).map_err(|e| {
                FlapError::Fit(format!("fit failed even with ridge fallback: {e}"))
            })?;
            Ok((
                coefs,
                FitDiagnostics {
                    separation_fallback: true,
                    ..diag
                },
            ))
        }
        Err(e) => Err(e),
    }
}

fn fit_logistic_inner(
    x: &DMatrix<f64>,
    y: &[u8],
    ridge: f64,
) -> Result<(Vec<f64>, FitDiagnostics)> {
    let (n, p) = (x.nrows(), x.ncols());

    // column scaling for conditioning; scale[0] stays 1 for the intercept
    let mut scale = vec![1.0f64; p];
    for j in 1..p {
        let m = (0..n).fold(0.0f64, |acc, i| acc.max(x[(i, j)].abs()));
        scale[j] = if m > 0.0 { m } else { 1.0 };
    }
    let mut xs = x.clone();
    for j in 1..p {
        for i in 0..n {
            xs[(i, j)] /= scale[j];
        }
    }
    // penalty on original-scale coefficients: beta_orig_j = beta_scaled_j / scale_j
    let ridge_j: Vec<f64> = scale.iter().map(|s| ridge / (s * s)).collect();

    let pll = |beta: &DVector<f64>| -> f64 {
        let mut v = log_likelihood(&xs, y, beta);
        for j in 1..p {
            v -= 0.5 * ridge_j[j] * beta[j] * beta[j];
        }
        v
    };

    let mut beta = DVector::zeros(p);
    let mut ll = pll(&beta);
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=MAX_ITER {
        iterations = iter;
        let eta = &xs * &beta;
        let probs: Vec<f64> = (0..n).map(|i| expit(eta[i])).collect();

        let mut grad = DVector::zeros(p);
        for i in 0..n {
            let r = f64::from(y[i]) - probs[i];
            for j in 0..p {
                grad[j] += xs[(i, j)] * r;
            }
        }
        for j in 1..p {
            grad[j] -= ridge_j[j] * beta[j];
        }
        if grad.amax() < GRAD_TOL {
            converged = true;
            iterations = iter - 1;
            break;
        }

        // information matrix X^T W X + penalty
        let mut info = DMatrix::zeros(p, p);
        for i in 0..n {
            let w = probs[i] * (1.0 - probs[i]);
            if w == 0.0 {
                continue;
            }
            for j in 0..p {
                let xw = xs[(i, j)] * w;
                for l in j..p {
                    info[(j, l)] += xw * xs[(i, l)];
                }
            }
        }
        for j in 0..p {
            for l in 0..j {
                info[(j, l)] = info[(l, j)];
            }
        }
        for j in 1..p {
            info[(j, j)] += ridge_j[j];
        }

        let delta = info
            .lu()
            .solve(&grad)
            .ok_or_else(|| FlapError::Fit("singular information matrix".into()))?;

        // step halving keeps the penalized likelihood non-decreasing up to
        // the summation noise floor; near the optimum true improvements
        // fall below the float resolution of the likelihood, so the slack
        // must scale with its magnitude or full Newton steps get rejected
        let slack = 1e-9 * ll.abs().max(1.0);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &beta + &delta * step;
            let cand_ll = pll(&cand);
            if cand_ll.is_finite() && cand_ll >= ll - slack {
                beta = cand;
                ll = cand_ll;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(FlapError::Fit(
                "step halving failed to improve the likelihood".into(),
            ));
        }
    }

    if !converged {
        return Err(FlapError::Fit(format!(
            "no convergence after {MAX_ITER} iterations (ridge {ridge})"
        )));
    }

    // report coefficients on the original scale and the unpenalized
    // log-likelihood at the optimum
    let coefs: Vec<f64> = (0..p).map(|j| beta[j] / scale[j]).collect();
    let final_ll = log_likelihood(&xs, y, &beta);
    Ok((
        coefs,
        FitDiagnostics {
            iterations,
            log_likelihood: final_ll,
            converged,
            ridge,
            separation_fallback: false,
        },
    ))
}

/// Builds the design matrix for a dataset under `design`, optionally
/// substituting processed attribute rows.
pub fn build_design(data: &Dataset, design: Design, attrs: Option<&[Vec<f64>]>) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = data
        .rows()
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let a: &[f64] = match attrs {
                Some(m) => &m[i],
                None => &r.attrs,
            };
            design.row(if design.groups > 0 { Some(r.group) } else { None }, a)
        })
        .collect();
    DMatrix::from_row_iterator(rows.len(), design.dimension(), rows.into_iter().flatten())
}

fn labels(data: &Dataset) -> Vec<u8> {
    data.rows().iter().map(|r| r.decision).collect()
}

/// Fits the ML model: logistic regression of the decision on group
/// contrasts and attributes.
pub fn fit_ml_model(data: &Dataset, ridge: f64) -> Result<LogisticModel> {
    let design = Design {
        groups: data.num_groups(),
        num_attrs: data.dim(),
    };
    let x = build_design(data, design, None);
    let (coefs, diagnostics) = fit_logistic(&x, &labels(data), ridge)?;
    Ok(LogisticModel {
        design,
        coefs,
        diagnostics,
    })
}

/// Fits the FTU model: logistic regression on attributes alone.
pub fn fit_ftu_model(data: &Dataset, ridge: f64) -> Result<LogisticModel> {
    let design = Design {
        groups: 0,
        num_attrs: data.dim(),
    };
    let x = build_design(data, design, None);
    let (coefs, diagnostics) = fit_logistic(&x, &labels(data), ridge)?;
    Ok(LogisticModel {
        design,
        coefs,
        diagnostics,
    })
}

/// Per-group standardization tables backing the FL-lite predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlPredictor {
    pub model: LogisticModel,
    pub group_means: Vec<Vec<f64>>,
    pub group_sds: Vec<Vec<f64>>,
    /// Coordinates whose within-group variance vanished; their latent is 0.
    pub degenerate: Vec<(usize, usize)>,
}

impl FlPredictor {
    /// Deterministic abduction: standardize each coordinate within the
    /// observed group.
    pub fn latent(&self, s: usize, attrs: &[f64]) -> Vec<f64> {
        attrs
            .iter()
            .enumerate()
            .map(|(j, &a)| {
                let sd = self.group_sds[s][j];
                if sd == 0.0 {
                    0.0
                } else {
                    (a - self.group_means[s][j]) / sd
                }
            })
            .collect()
    }
}

/// Group-mean imputation averaging backing the AA predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AaPredictor {
    /// Learner over mean-centered attributes.
    pub model: LogisticModel,
    pub group_means: Vec<Vec<f64>>,
    pub group_probs: Vec<f64>,
}

/// Method tags for the predictor family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash)]
pub enum Method {
    Ml,
    Ftu,
    Aml,
    Fl,
    Aa,
    FlapO1,
    FlapO2,
    FlapM1,
    FlapM2,
}

impl Method {
    /// Output label; FL is the deterministic-abduction variant, hence
    /// "FL-lite".
    pub fn label(&self) -> &'static str {
        match self {
            Method::Ml => "ML",
            Method::Ftu => "FTU",
            Method::Aml => "AML",
            Method::Fl => "FL-lite",
            Method::Aa => "AA",
            Method::FlapO1 => "FLAP-1(O)",
            Method::FlapO2 => "FLAP-2(O)",
            Method::FlapM1 => "FLAP-1(M)",
            Method::FlapM2 => "FLAP-2(M)",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        match s.to_ascii_lowercase().as_str() {
            "ml" => Ok(Method::Ml),
            "ftu" => Ok(Method::Ftu),
            "aml" => Ok(Method::Aml),
            "fl" | "fl-lite" => Ok(Method::Fl),
            "aa" => Ok(Method::Aa),
            "flap-1-o" | "flap-o-1" | "flap-1(o)" => Ok(Method::FlapO1),
            "flap-2-o" | "flap-o-2" | "flap-2(o)" => Ok(Method::FlapO2),
            "flap-1-m" | "flap-m-1" | "flap-1(m)" => Ok(Method::FlapM1),
            "flap-2-m" | "flap-m-2" | "flap-2(m)" => Ok(Method::FlapM2),
            other => Err(FlapError::Config(format!("unknown method '{other}'"))),
        }
    }

    /// All nine methods in the canonical reporting order.
    pub fn all() -> Vec<Method> {
        vec![
            Method::Ml,
            Method::Ftu,
            Method::Aml,
            Method::Fl,
            Method::Aa,
            Method::FlapO1,
            Method::FlapO2,
            Method::FlapM1,
            Method::FlapM2,
        ]
    }

    /// The eight methods compared in the experiment tables (AML enters the
    /// comparisons only through FLAP-1).
    pub fn table_methods() -> Vec<Method> {
        vec![
            Method::Ml,
            Method::Ftu,
            Method::Fl,
            Method::Aa,
            Method::FlapO1,
            Method::FlapO2,
            Method::FlapM1,
            Method::FlapM2,
        ]
    }
}

/// Anything that turns `(group, attributes)` into a probability.
pub trait Scorer: Sync {
    fn score(&self, s: usize, attrs: &[f64]) -> f64;
}

/// A fitted predictor of one of the family's methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Predictor {
    Ml(LogisticModel),
    Ftu(LogisticModel),
    Aml {
        model: LogisticModel,
        group_probs: Vec<f64>,
    },
    Fl(FlPredictor),
    Aa(AaPredictor),
    Flap(FlapModel),
    /// Ground-truth score of a simulated decision rule; used as the
    /// reference predictor on power-study axes.
    ScmOracle(Scm),
}

impl Predictor {
    pub fn method_label(&self) -> &'static str {
        match self {
            Predictor::Ml(_) => Method::Ml.label(),
            Predictor::Ftu(_) => Method::Ftu.label(),
            Predictor::Aml { .. } => Method::Aml.label(),
            Predictor::Fl(_) => Method::Fl.label(),
            Predictor::Aa(_) => Method::Aa.label(),
            Predictor::Flap(m) => m.method().label(),
            Predictor::ScmOracle(_) => "oracle",
        }
    }
}

impl Scorer for Predictor {
    fn score(&self, s: usize, attrs: &[f64]) -> f64 {
        match self {
            Predictor::Ml(m) => m.score(Some(s), attrs),
            Predictor::Ftu(m) => m.score(None, attrs),
            Predictor::Aml { model, group_probs } => {
                predict_aml(model, group_probs, attrs).expect("probabilities fitted to sum to 1")
            }
            Predictor::Fl(fl) => fl.model.score(None, &fl.latent(s, attrs)),
            Predictor::Aa(aa) => {
                // imputations shifted to each group's mean re-center to the
                // same residual, so the average over groups is exact
                let k = aa.group_probs.len();
                let mut acc = 0.0;
                for s_prime in 0..k {
                    let imputed: Vec<f64> = attrs
                        .iter()
                        .enumerate()
                        .map(|(j, &a)| a - aa.group_means[s][j] + aa.group_means[s_prime][j])
                        .collect();
                    let centered: Vec<f64> = imputed
                        .iter()
                        .enumerate()
                        .map(|(j, &v)| v - aa.group_means[s_prime][j])
                        .collect();
                    acc += aa.group_probs[s_prime] * aa.model.score(None, &centered);
                }
                acc
            }
            Predictor::Flap(m) => m.score(s, attrs),
            Predictor::ScmOracle(scm) => scm.decision_prob(s, attrs),
        }
    }
}

/// Probability-weighted average of the ML score over all groups; the
/// result depends on the attributes alone.
pub fn predict_aml(model: &LogisticModel, group_probs: &[f64], attrs: &[f64]) -> Result<f64> {
    let total: f64 = group_probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(FlapError::Value(format!(
            "group probabilities sum to {total}, expected 1"
        )));
    }
    Ok(group_probs
        .iter()
        .enumerate()
        .map(|(s, &p)| p * model.score(Some(s), attrs))
        .sum())
}

/// Fits the ML predictor.
pub fn fit_ml(data: &Dataset) -> Result<Predictor> {
    Ok(Predictor::Ml(fit_ml_model(data, DEFAULT_RIDGE)?))
}

/// Fits the FTU predictor.
pub fn fit_ftu(data: &Dataset) -> Result<Predictor> {
    Ok(Predictor::Ftu(fit_ftu_model(data, DEFAULT_RIDGE)?))
}

/// Fits the AML predictor (an ML fit whose predictions average over groups).
pub fn fit_aml(data: &Dataset) -> Result<Predictor> {
    Ok(Predictor::Aml {
        model: fit_ml_model(data, DEFAULT_RIDGE)?,
        group_probs: data.group_probs(),
    })
}

/// Fits the FL-lite predictor: logistic regression on per-group
/// standardized attributes.
pub fn fit_fl(data: &Dataset) -> Result<Predictor> {
    let k = data.num_groups();
    let d = data.dim();
    let mut group_means = vec![vec![0.0; d]; k];
    let mut group_sds = vec![vec![0.0; d]; k];
    let mut degenerate = Vec::new();
    for s in 0..k {
        for j in 0..d {
            let col: Vec<f64> = data
                .rows()
                .iter()
                .filter(|r| r.group == s)
                .map(|r| r.attrs[j])
                .collect();
            let (m, sd) = crate::numerics::mean_and_sd(&col);
            group_means[s][j] = m;
            group_sds[s][j] = sd;
            if sd == 0.0 {
                degenerate.push((s, j));
            }
        }
    }
    let table = FlPredictor {
        model: LogisticModel {
            design: Design {
                groups: 0,
                num_attrs: d,
            },
            coefs: vec![0.0; d + 1],
            diagnostics: FitDiagnostics {
                iterations: 0,
                log_likelihood: 0.0,
                converged: false,
                ridge: DEFAULT_RIDGE,
                separation_fallback: false,
            },
        },
        group_means,
        group_sds,
        degenerate,
    };
    let latents: Vec<Vec<f64>> = data
        .rows()
        .iter()
        .map(|r| table.latent(r.group, &r.attrs))
        .collect();
    let design = Design {
        groups: 0,
        num_attrs: d,
    };
    let x = build_design(data, design, Some(&latents));
    let (coefs, diagnostics) = fit_logistic(&x, &labels(data), DEFAULT_RIDGE)?;
    Ok(Predictor::Fl(FlPredictor {
        model: LogisticModel {
            design,
            coefs,
            diagnostics,
        },
        ..table
    }))
}

/// Fits the AA predictor: learner on mean-centered attributes, scored by
/// averaging over group-mean counterfactual imputations.
pub fn fit_aa(data: &Dataset) -> Result<Predictor> {
    let orth = crate::preprocess::fit_orthogonalization(data)?;
    let moments = orth.moments()?.clone();
    let centered: Vec<Vec<f64>> = data
        .rows()
        .iter()
        .map(|r| {
            r.attrs
                .iter()
                .enumerate()
                .map(|(j, &a)| a - moments.group_means[r.group][j])
                .collect()
        })
        .collect();
    let design = Design {
        groups: 0,
        num_attrs: data.dim(),
    };
    let x = build_design(data, design, Some(&centered));
    let (coefs, diagnostics) = fit_logistic(&x, &labels(data), DEFAULT_RIDGE)?;
    Ok(Predictor::Aa(AaPredictor {
        model: LogisticModel {
            design,
            coefs,
            diagnostics,
        },
        group_means: moments.group_means,
        group_probs: moments.group_probs,
    }))
}

/// Fits a predictor by method tag.
pub fn fit_method(method: Method, data: &Dataset) -> Result<Predictor> {
    match method {
        Method::Ml => fit_ml(data),
        Method::Ftu => fit_ftu(data),
        Method::Aml => fit_aml(data),
        Method::Fl => fit_fl(data),
        Method::Aa => fit_aa(data),
        Method::FlapO1 => crate::pipeline::flap_fit(
            data,
            crate::preprocess::PrepKind::Orthogonalization,
            crate::pipeline::FlapLearner::Aml,
        )
        .map(Predictor::Flap),
        Method::FlapO2 => crate::pipeline::flap_fit(
            data,
            crate::preprocess::PrepKind::Orthogonalization,
            crate::pipeline::FlapLearner::Ftu,
        )
        .map(Predictor::Flap),
        Method::FlapM1 => crate::pipeline::flap_fit(
            data,
            crate::preprocess::PrepKind::MarginalMapping,
            crate::pipeline::FlapLearner::Aml,
        )
        .map(Predictor::Flap),
        Method::FlapM2 => crate::pipeline::flap_fit(
            data,
            crate::preprocess::PrepKind::MarginalMapping,
            crate::pipeline::FlapLearner::Ftu,
        )
        .map(Predictor::Flap),
    }
}

/// Serializes a predictor with a version header.
pub fn save_predictor(pred: &Predictor, path: &std::path::Path) -> Result<()> {
    #[derive(Serialize)]
    struct File<'a> {
        version: u32,
        predictor: &'a Predictor,
    }
    std::fs::write(
        path,
        serde_json::to_string_pretty(&File {
            version: 1,
            predictor: pred,
        })?,
    )?;
    Ok(())
}

/// Loads a predictor written by [`save_predictor`].
pub fn load_predictor(path: &std::path::Path) -> Result<Predictor> {
    #[derive(Deserialize)]
    struct File {
        version: u32,
        predictor: Predictor,
    }
    let file: File = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if file.version != 1 {
        return Err(FlapError::Value(format!(
            "predictor file version {} unsupported",
            file.version
        )));
    }
    Ok(file.predictor)
}
