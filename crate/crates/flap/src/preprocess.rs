//! Fitted preprocessing maps that remove the attribute distribution's
//! dependence on the sensitive group.
//!
//! Two procedures are provided. Orthogonalization recenters by group means:
//! `apply(s*, a*) = a* - E_n(A | S=s*) + E_n(A)`. Marginal distribution
//! mapping replaces each coordinate by the group-probability-weighted
//! average of quantile-matched values, `sum_s P_n(S=s) * F_{js}^{-1}(
//! F_{js*}([a*]_j))`, using right-continuous empirical CDFs and the
//! generalized inverse `F^{-1}(z) = inf{x : F(x) >= z}`.
//!
//! A fitted [`Preprocessor`] is immutable; `apply` is pure and thread-safe.

use crate::data::Dataset;
use crate::error::{FlapError, Result};
use crate::numerics::{kahan_mean, KahanSum};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Which preprocessing procedure a fitted map implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrepKind {
    Orthogonalization,
    MarginalMapping,
}

impl PrepKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "orthogonalization" | "orth" | "o" => Ok(PrepKind::Orthogonalization),
            "marginal-mapping" | "marginal" | "m" => Ok(PrepKind::MarginalMapping),
            other => Err(FlapError::Config(format!(
                "unknown preprocessor kind '{other}' (expected 'orthogonalization' or 'marginal-mapping')"
            ))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            PrepKind::Orthogonalization => "orthogonalization",
            PrepKind::MarginalMapping => "marginal-mapping",
        }
    }
}

/// Behavior of the marginal map at points outside the fitted support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum TailPolicy {
    /// Below the group minimum evaluates at the first ECDF step; above the
    /// maximum evaluates at 1. Keeps mapped values inside the observed range.
    #[default]
    Clamp,
    /// Panic instead; for callers that must not silently extrapolate.
    Strict,
}

/// Per-group attribute means and the overall mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMoments {
    pub group_means: Vec<Vec<f64>>,
    pub overall_mean: Vec<f64>,
    pub group_probs: Vec<f64>,
}

/// Per-group, per-coordinate empirical CDFs stored as sorted unique values
/// with cumulative weights ending at exactly 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEcdf {
    /// `values[s][j]` sorted ascending, duplicates collapsed.
    pub values: Vec<Vec<Vec<f64>>>,
    /// `cum[s][j][i]` = fraction of group-s rows with `A_j <= values[s][j][i]`.
    pub cum: Vec<Vec<Vec<f64>>>,
    pub group_counts: Vec<usize>,
    pub group_probs: Vec<f64>,
}

impl GroupEcdf {
    /// Right-continuous ECDF value `P_n(A_j <= x | S = s)`.
    pub fn eval(&self, s: usize, j: usize, x: f64) -> f64 {
        let vals = &self.values[s][j];
        let idx = vals.partition_point(|&v| v <= x);
        if idx == 0 {
            0.0
        } else {
            self.cum[s][j][idx - 1]
        }
    }

    /// Generalized inverse: smallest observed value whose ECDF is >= z.
    pub fn inverse(&self, s: usize, j: usize, z: f64) -> Result<f64> {
        if !(z > 0.0 && z <= 1.0) {
            return Err(FlapError::Domain(format!(
                "ECDF inverse needs z in (0, 1], got {z}"
            )));
        }
        let cum = &self.cum[s][j];
        let idx = cum.partition_point(|&c| c < z);
        Ok(self.values[s][j][idx])
    }

    /// First attained ECDF level of coordinate `j` in group `s`.
    fn first_step(&self, s: usize, j: usize) -> f64 {
        self.cum[s][j][0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum PrepModel {
    Moments(GroupMoments),
    Ecdf(GroupEcdf),
}

/// A fitted preprocessing map `(s, a) -> a'`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    model: PrepModel,
    group_labels: Vec<String>,
    column_names: Vec<String>,
    tail: TailPolicy,
}

/// Fits the orthogonalization procedure on a training set.
pub fn fit_orthogonalization(train: &Dataset) -> Result<Preprocessor> {
    let k = train.num_groups();
    let d = train.dim();
    let mut group_means = Vec::with_capacity(k);
    for s in 0..k {
        let mut means = Vec::with_capacity(d);
        for j in 0..d {
            let col: Vec<f64> = train
                .rows()
                .iter()
                .filter(|r| r.group == s)
                .map(|r| r.attrs[j])
                .collect();
            if col.is_empty() {
                return Err(FlapError::EmptyGroup(format!(
                    "group '{}' has no rows",
                    train.group_labels()[s]
                )));
            }
            means.push(kahan_mean(&col));
        }
        group_means.push(means);
    }
    let probs = train.group_probs();
    // overall mean as the probability mixture of group means, so the
    // mixture identity holds to rounding error by construction
    let overall_mean: Vec<f64> = (0..d)
        .map(|j| {
            let mut acc = KahanSum::new();
            for s in 0..k {
                acc.add(probs[s] * group_means[s][j]);
            }
            acc.value()
        })
        .collect();
    Ok(Preprocessor {
        model: PrepModel::Moments(GroupMoments {
            group_means,
            overall_mean,
            group_probs: probs,
        }),
        group_labels: train.group_labels().to_vec(),
        column_names: train.columns().iter().map(|c| c.name.clone()).collect(),
        tail: TailPolicy::Clamp,
    })
}

/// Fits the marginal distribution mapping procedure on a training set.
pub fn fit_marginal_mapping(train: &Dataset) -> Result<Preprocessor> {
    fit_marginal_mapping_with(train, TailPolicy::Clamp)
}

/// As [`fit_marginal_mapping`] with an explicit out-of-support policy.
pub fn fit_marginal_mapping_with(train: &Dataset, tail: TailPolicy) -> Result<Preprocessor> {
    let k = train.num_groups();
    let d = train.dim();
    let mut values = Vec::with_capacity(k);
    let mut cum = Vec::with_capacity(k);
    let mut counts = Vec::with_capacity(k);
    for s in 0..k {
        let rows: Vec<&crate::data::Row> = train.rows().iter().filter(|r| r.group == s).collect();
        if rows.is_empty() {
            return Err(FlapError::EmptyGroup(format!(
                "group '{}' has no rows",
                train.group_labels()[s]
            )));
        }
        let n_s = rows.len();
        counts.push(n_s);
        let mut vals_s = Vec::with_capacity(d);
        let mut cum_s = Vec::with_capacity(d);
        for j in 0..d {
            let mut col: Vec<f64> = rows.iter().map(|r| r.attrs[j]).collect();
            col.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut uniq = Vec::new();
            let mut levels = Vec::new();
            let mut seen = 0usize;
            let mut i = 0;
            while i < col.len() {
                let mut j2 = i;
                while j2 + 1 < col.len() && col[j2 + 1] == col[i] {
                    j2 += 1;
                }
                seen += j2 - i + 1;
                uniq.push(col[i]);
                levels.push(seen as f64 / n_s as f64);
                i = j2 + 1;
            }
            vals_s.push(uniq);
            cum_s.push(levels);
        }
        values.push(vals_s);
        cum.push(cum_s);
    }
    Ok(Preprocessor {
        model: PrepModel::Ecdf(GroupEcdf {
            values,
            cum,
            group_counts: counts,
            group_probs: train.group_probs(),
        }),
        group_labels: train.group_labels().to_vec(),
        column_names: train.columns().iter().map(|c| c.name.clone()).collect(),
        tail,
    })
}

impl Preprocessor {
    pub fn kind(&self) -> PrepKind {
        match self.model {
            PrepModel::Moments(_) => PrepKind::Orthogonalization,
            PrepModel::Ecdf(_) => PrepKind::MarginalMapping,
        }
    }

    pub fn num_groups(&self) -> usize {
        self.group_labels.len()
    }

    pub fn dim(&self) -> usize {
        self.column_names.len()
    }

    pub fn group_labels(&self) -> &[String] {
        &self.group_labels
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn group_probs(&self) -> &[f64] {
        match &self.model {
            PrepModel::Moments(m) => &m.group_probs,
            PrepModel::Ecdf(e) => &e.group_probs,
        }
    }

    /// The fitted ECDF table (marginal-mapping kind only).
    pub fn ecdf(&self) -> Result<&GroupEcdf> {
        match &self.model {
            PrepModel::Ecdf(e) => Ok(e),
            PrepModel::Moments(_) => Err(FlapError::PrepKind(
                "ECDF table requested from an orthogonalization preprocessor".into(),
            )),
        }
    }

    /// The fitted moment table (orthogonalization kind only).
    pub fn moments(&self) -> Result<&GroupMoments> {
        match &self.model {
            PrepModel::Moments(m) => Ok(m),
            PrepModel::Ecdf(_) => Err(FlapError::PrepKind(
                "moment table requested from a marginal-mapping preprocessor".into(),
            )),
        }
    }

    /// Processed attributes `a' = P(s*, a*)`.
    ///
    /// Panics if `a` has the wrong dimension or `s` is out of range; both
    /// indicate a programming error rather than a data condition.
    pub fn apply(&self, s: usize, a: &[f64]) -> Vec<f64> {
        assert_eq!(a.len(), self.dim(), "attribute dimension mismatch");
        assert!(s < self.num_groups(), "group id out of range");
        match &self.model {
            PrepModel::Moments(m) => a
                .iter()
                .enumerate()
                .map(|(j, &x)| x - m.group_means[s][j] + m.overall_mean[j])
                .collect(),
            PrepModel::Ecdf(e) => {
                let d = self.dim();
                let k = self.num_groups();
                let mut out = vec![0.0; d];
                for j in 0..d {
                    let z = self.source_level(e, s, j, a[j]);
                    let mut acc = KahanSum::new();
                    for t in 0..k {
                        let mapped = e
                            .inverse(t, j, z)
                            .expect("attained level is a valid inverse argument");
                        acc.add(e.group_probs[t] * mapped);
                    }
                    out[j] = acc.value();
                }
                out
            }
        }
    }

    /// ECDF level of `x` in source group `s`, with the tail policy applied.
    fn source_level(&self, e: &GroupEcdf, s: usize, j: usize, x: f64) -> f64 {
        let z = e.eval(s, j, x);
        if z == 0.0 {
            match self.tail {
                TailPolicy::Clamp => e.first_step(s, j),
                TailPolicy::Strict => panic!(
                    "value {x} below the fitted support of group {s}, coordinate {j} \
                     (strict tail policy)"
                ),
            }
        } else {
            z
        }
    }

    /// Quantile-matched counterfactual attributes `a(target)` for a unit
    /// observed as `(s_star, a)`; marginal-mapping kind only.
    pub fn counterfactual_attr(&self, target: usize, s_star: usize, a: &[f64]) -> Result<Vec<f64>> {
        let e = match &self.model {
            PrepModel::Ecdf(e) => e,
            PrepModel::Moments(_) => {
                return Err(FlapError::PrepKind(
                    "counterfactual_attr needs a marginal-mapping preprocessor \
                     (use counterfactual_attr_orth for group-mean imputation)"
                        .into(),
                ))
            }
        };
        if target >= self.num_groups() || s_star >= self.num_groups() {
            return Err(FlapError::Domain("group id out of range".into()));
        }
        assert_eq!(a.len(), self.dim(), "attribute dimension mismatch");
        let mut out = vec![0.0; self.dim()];
        for j in 0..self.dim() {
            let z = self.source_level(e, s_star, j, a[j]);
            out[j] = e.inverse(target, j, z)?;
        }
        Ok(out)
    }

    /// Group-mean counterfactual imputation `a - E_n(A|s*) + E_n(A|target)`;
    /// orthogonalization kind only.
    pub fn counterfactual_attr_orth(
        &self,
        target: usize,
        s_star: usize,
        a: &[f64],
    ) -> Result<Vec<f64>> {
        let m = self.moments()?;
        if target >= self.num_groups() || s_star >= self.num_groups() {
            return Err(FlapError::Domain("group id out of range".into()));
        }
        assert_eq!(a.len(), self.dim(), "attribute dimension mismatch");
        Ok(a.iter()
            .enumerate()
            .map(|(j, &x)| x - m.group_means[s_star][j] + m.group_means[target][j])
            .collect())
    }

    /// Applies the map to a whole dataset, returning processed attribute rows.
    pub fn apply_dataset(&self, data: &Dataset) -> Vec<Vec<f64>> {
        data.rows()
            .iter()
            .map(|r| self.apply(r.group, &r.attrs))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = PreprocessorFile {
            version: FILE_VERSION,
            preprocessor: self.clone(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: PreprocessorFile = serde_json::from_str(&text)?;
        if file.version != FILE_VERSION {
            return Err(FlapError::Value(format!(
                "preprocessor file version {} unsupported (expected {FILE_VERSION})",
                file.version
            )));
        }
        Ok(file.preprocessor)
    }
}

const FILE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct PreprocessorFile {
    version: u32,
    preprocessor: Preprocessor,
}
