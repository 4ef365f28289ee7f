//! Synthetic decision data from three structural causal models, with a
//! ground-truth counterfactual oracle.
//!
//! Each model draws exogenous variables per unit, pushes them through fixed
//! structural equations to produce (group, attributes, decision), and keeps
//! the exogenous record so unit-level counterfactuals ("what would the
//! decision probability have been had the group been s'?") can be computed
//! exactly by substituting the group and replaying the equations.
//!
//! Random streams are counter-based: every unit and every exogenous
//! variable gets its own ChaCha stream derived from the master seed, so
//! growing `n` never perturbs earlier units and simulation parallelizes
//! without coordination.

use crate::data::{ColumnKind, ColumnMeta, Dataset, Row};
use crate::error::{FlapError, Result};
use crate::numerics::expit;
use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Loan model: two groups, log-normal income, logistic decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scm1Params {
    /// Income scale factor (> 0).
    pub c1: f64,
    /// Log-income location.
    pub c2: f64,
    /// Log-income spread (> 0).
    pub c3: f64,
    /// Group shift of mean log income.
    pub lambda_a: f64,
    /// Ratio of log-income standard deviations between groups (> 0).
    pub sigma_a: f64,
    pub beta0: f64,
    pub beta_a: f64,
    pub beta_s: f64,
    /// Probability of the advantaged group (S = 1).
    pub p_s: f64,
}

impl Default for Scm1Params {
    fn default() -> Self {
        Self {
            c1: 0.01,
            c2: 4.0,
            c3: 0.2,
            lambda_a: 0.5,
            sigma_a: 1.0,
            beta0: -1.0,
            beta_a: 2.0,
            beta_s: 1.0,
            p_s: 0.7,
        }
    }
}

/// Three-group model with education years and income sharing a latent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scm2Params {
    /// Group probabilities; positive, summing to one.
    pub probs: [f64; 3],
    /// Mean education years per group (base + shifts).
    pub lambda_e: [f64; 3],
    /// Median incomes per group (base + shifts); sums must stay positive.
    pub lambda_a: [f64; 3],
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta_a: f64,
    pub beta_e: f64,
}

impl Default for Scm2Params {
    fn default() -> Self {
        Self {
            probs: [0.76, 0.16, 0.08],
            lambda_e: [1.07, 0.0, 0.0],
            lambda_a: [0.58, 0.0, 0.0],
            beta0: -1.0,
            beta1: 0.0,
            beta2: 0.0,
            beta_a: 1.0,
            beta_e: 2.0,
        }
    }
}

/// Admission model: uniform test score clamped to [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scm3Params {
    /// Male score shift in [0, 1).
    pub lambda: f64,
    pub beta0: f64,
    pub beta_t: f64,
    pub beta_s: f64,
}

impl Default for Scm3Params {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            beta0: -1.0,
            beta_t: 2.0,
            beta_s: 1.0,
        }
    }
}

/// Exogenous draws for one unit.
///
/// `u_a` is standard normal for the loan models and the uniform score noise
/// for the admission model; `u_e` exists only in the three-group model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExogenousRecord {
    pub u_s: f64,
    pub u_a: f64,
    pub u_e: Option<f64>,
    pub u_y: f64,
}

/// One of the three structural causal models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Scm {
    Ex1(Scm1Params),
    Ex2(Scm2Params),
    Ex3(Scm3Params),
}

const VAR_S: u64 = 0;
const VAR_A: u64 = 1;
const VAR_E: u64 = 2;
const VAR_Y: u64 = 3;
const VAR_SLOTS: u64 = 4;

fn substream(seed: u64, unit: u64, var: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(unit * VAR_SLOTS + var);
    rng
}

fn open01(seed: u64, unit: u64, var: u64) -> f64 {
    substream(seed, unit, var).sample(Open01)
}

fn std_normal(seed: u64, unit: u64, var: u64) -> f64 {
    substream(seed, unit, var).sample(StandardNormal)
}

impl Scm {
    pub fn validate(&self) -> Result<()> {
        match self {
            Scm::Ex1(p) => {
                if p.c1 <= 0.0 || p.c3 <= 0.0 || p.sigma_a <= 0.0 {
                    return Err(FlapError::Config(
                        "c1, c3, sigma_a must be positive".into(),
                    ));
                }
                if !(0.0 < p.p_s && p.p_s < 1.0) {
                    return Err(FlapError::Config("p_s must lie in (0, 1)".into()));
                }
            }
            Scm::Ex2(p) => {
                if p.probs.iter().any(|&q| q <= 0.0) {
                    return Err(FlapError::Config("group probabilities must be positive".into()));
                }
                if (p.probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(FlapError::Config("group probabilities must sum to 1".into()));
                }
                for s in 0..3 {
                    if Self::ex2_median_income(p, s) <= 0.0 {
                        return Err(FlapError::Config(format!(
                            "median income for group {s} must be positive"
                        )));
                    }
                }
            }
            Scm::Ex3(p) => {
                if !(0.0..1.0).contains(&p.lambda) {
                    return Err(FlapError::Config("lambda must lie in [0, 1)".into()));
                }
            }
        }
        Ok(())
    }

    pub fn num_groups(&self) -> usize {
        match self {
            Scm::Ex1(_) | Scm::Ex3(_) => 2,
            Scm::Ex2(_) => 3,
        }
    }

    /// Attribute dimension d.
    pub fn dim(&self) -> usize {
        match self {
            Scm::Ex1(_) | Scm::Ex3(_) => 1,
            Scm::Ex2(_) => 2,
        }
    }

    pub fn attr_names(&self) -> Vec<&'static str> {
        match self {
            Scm::Ex1(_) => vec!["income"],
            Scm::Ex2(_) => vec!["education", "income"],
            Scm::Ex3(_) => vec!["score"],
        }
    }

    /// Dimension of the exogenous input to the attribute equations.
    pub fn exo_dim(&self) -> usize {
        match self {
            Scm::Ex1(_) | Scm::Ex3(_) => 1,
            Scm::Ex2(_) => 2,
        }
    }

    fn ex2_median_income(p: &Scm2Params, s: usize) -> f64 {
        p.lambda_a[0]
            + if s == 1 { p.lambda_a[1] } else { 0.0 }
            + if s == 2 { p.lambda_a[2] } else { 0.0 }
    }

    fn ex2_mu_e(p: &Scm2Params, s: usize) -> f64 {
        p.lambda_e[0]
            + if s == 1 { p.lambda_e[1] } else { 0.0 }
            + if s == 2 { p.lambda_e[2] } else { 0.0 }
    }

    fn group_from_us(&self, u_s: f64) -> usize {
        match self {
            Scm::Ex1(p) => usize::from(u_s < p.p_s),
            Scm::Ex2(p) => {
                let t1 = p.probs[0];
                let t2 = p.probs[0] + p.probs[1];
                usize::from(u_s > t1) + usize::from(u_s > t2)
            }
            Scm::Ex3(_) => usize::from(u_s < 0.5),
        }
    }

    /// Attribute structural equations `f_A(s, u)`.
    ///
    /// `u` holds the attribute-level exogenous draws: `[u_a]` for the loan
    /// and admission models, `[u_e, u_a]` for the three-group model.
    pub fn attrs_from_exo(&self, s: usize, u: &[f64]) -> Vec<f64> {
        match self {
            Scm::Ex1(p) => {
                let sig = p.sigma_a.powi(s as i32);
                vec![p.c1 * (p.c2 + p.lambda_a * s as f64 + p.c3 * sig * u[0]).exp()]
            }
            Scm::Ex2(p) => {
                let (u_e, u_a) = (u[0], u[1]);
                let mu_e = Self::ex2_mu_e(p, s);
                let e = (mu_e + 0.4 * mu_e * u_e).max(0.0);
                let mu_a = Self::ex2_median_income(p, s).ln();
                let a = (mu_a + 0.4 * mu_e * u_e + 0.1 * u_a).exp();
                vec![e, a]
            }
            Scm::Ex3(p) => {
                vec![(p.lambda * s as f64 + u[0]).clamp(0.0, 1.0)]
            }
        }
    }

    fn exo_slice(&self, u: &ExogenousRecord) -> Vec<f64> {
        match self {
            Scm::Ex1(_) | Scm::Ex3(_) => vec![u.u_a],
            Scm::Ex2(_) => vec![u.u_e.expect("three-group record carries u_e"), u.u_a],
        }
    }

    /// Structural decision probability `P(Y = 1 | S = s, A = attrs)`.
    pub fn decision_prob(&self, s: usize, attrs: &[f64]) -> f64 {
        match self {
            Scm::Ex1(p) => expit(p.beta0 + p.beta_a * attrs[0] + p.beta_s * s as f64),
            Scm::Ex2(p) => {
                let b1 = if s == 1 { p.beta1 } else { 0.0 };
                let b2 = if s == 2 { p.beta2 } else { 0.0 };
                expit(p.beta0 + b1 + b2 + p.beta_a * attrs[1] + p.beta_e * attrs[0])
            }
            Scm::Ex3(p) => expit(p.beta0 + p.beta_t * attrs[0] + p.beta_s * s as f64),
        }
    }

    /// Draws unit `i` of the stream identified by `seed`.
    pub fn draw_unit(&self, seed: u64, i: u64) -> (usize, Vec<f64>, u8, ExogenousRecord) {
        let u_s = open01(seed, i, VAR_S);
        let u_y = open01(seed, i, VAR_Y);
        let (u_a, u_e) = match self {
            Scm::Ex1(_) => (std_normal(seed, i, VAR_A), None),
            Scm::Ex2(_) => (std_normal(seed, i, VAR_A), Some(std_normal(seed, i, VAR_E))),
            Scm::Ex3(_) => (open01(seed, i, VAR_A), None),
        };
        let record = ExogenousRecord { u_s, u_a, u_e, u_y };
        let s = self.group_from_us(u_s);
        let attrs = self.attrs_from_exo(s, &self.exo_slice(&record));
        let y = u8::from(u_y < self.decision_prob(s, &attrs));
        (s, attrs, y, record)
    }

    /// Simulates `n` units; deterministic given `seed`.
    pub fn simulate(&self, n: usize, seed: u64) -> Result<(Dataset, Vec<ExogenousRecord>)> {
        self.validate()?;
        if n == 0 {
            return Err(FlapError::Value("n must be at least 1".into()));
        }
        let mut rows = Vec::with_capacity(n);
        let mut records = Vec::with_capacity(n);
        for i in 0..n {
            let (group, attrs, decision, record) = self.draw_unit(seed, i as u64);
            rows.push(Row {
                group,
                attrs,
                decision,
            });
            records.push(record);
        }
        let labels: Vec<String> = (0..self.num_groups()).map(|g| g.to_string()).collect();
        let columns: Vec<ColumnMeta> = self
            .attr_names()
            .into_iter()
            .map(|name| ColumnMeta {
                name: name.to_string(),
                kind: ColumnKind::Continuous,
            })
            .collect();
        let data = Dataset::new(labels, columns, rows)?;
        Ok((data, records))
    }

    /// Counterfactual attributes `f_A(s', u)` for a stored exogenous record.
    pub fn counterfactual_attrs(&self, u: &ExogenousRecord, s_prime: usize) -> Result<Vec<f64>> {
        if s_prime >= self.num_groups() {
            return Err(FlapError::Domain(format!(
                "group {s_prime} outside the {}-group space",
                self.num_groups()
            )));
        }
        Ok(self.attrs_from_exo(s_prime, &self.exo_slice(u)))
    }

    /// `P(Y_{s'}(u) = 1)`: substitute `S = s'`, replay the attribute
    /// equations with the stored exogenous draws, and evaluate the decision
    /// equation (its own noise `U_Y` stays uniform, so the probability is
    /// the logistic mean).
    pub fn counterfactual_decision_prob(&self, u: &ExogenousRecord, s_prime: usize) -> Result<f64> {
        let attrs = self.counterfactual_attrs(u, s_prime)?;
        Ok(self.decision_prob(s_prime, &attrs))
    }

    /// Numeric check of the non-sensitive conditions on the attribute
    /// equations: the strong form needs `d f_A / d u` identical across
    /// groups; the weak form only needs its sign to match.
    pub fn diagnose_conditions(&self) -> ConditionDiagnosis {
        let grid: Vec<f64> = match self {
            Scm::Ex1(_) | Scm::Ex2(_) => (0..61).map(|i| -3.0 + i as f64 * 0.1).collect(),
            Scm::Ex3(_) => (0..61).map(|i| 0.005 + i as f64 * 0.0165).collect(),
        };
        let h = 1e-5;
        let k = self.num_groups();
        let q = self.exo_dim();
        let d = self.dim();
        let mut max_spread: f64 = 0.0;
        let mut scale: f64 = 0.0;
        let mut sign_change = false;
        for m in 0..q {
            for &u0 in &grid {
                for j in 0..d {
                    let mut derivs = Vec::with_capacity(k);
                    for s in 0..k {
                        let mut up = vec![0.0; q];
                        let mut dn = vec![0.0; q];
                        up[m] = u0 + h;
                        dn[m] = u0 - h;
                        let fu = self.attrs_from_exo(s, &up)[j];
                        let fd = self.attrs_from_exo(s, &dn)[j];
                        derivs.push((fu - fd) / (2.0 * h));
                    }
                    let hi = derivs.iter().cloned().fold(f64::MIN, f64::max);
                    let lo = derivs.iter().cloned().fold(f64::MAX, f64::min);
                    max_spread = max_spread.max(hi - lo);
                    scale = scale.max(derivs.iter().fold(0.0f64, |a, &x| a.max(x.abs())));
                    let signs: Vec<i8> = derivs
                        .iter()
                        .map(|&x| {
                            if x.abs() < 1e-9 * scale.max(1e-12) {
                                0
                            } else if x > 0.0 {
                                1
                            } else {
                                -1
                            }
                        })
                        .collect();
                    if signs.windows(2).any(|w| w[0] != w[1]) {
                        sign_change = true;
                    }
                }
            }
        }
        let rel_spread = if scale > 0.0 { max_spread / scale } else { 0.0 };
        ConditionDiagnosis {
            strong: rel_spread < 1e-6,
            weak: !sign_change,
            max_relative_spread: rel_spread,
        }
    }

    /// Updates one named parameter; used by the CLI `--set key=value` flags.
    pub fn set_param(&mut self, key: &str, value: f64) -> Result<()> {
        let unknown = || FlapError::Config(format!("unknown parameter '{key}' for this model"));
        match self {
            Scm::Ex1(p) => match key {
                "c1" => p.c1 = value,
                "c2" => p.c2 = value,
                "c3" => p.c3 = value,
                "lambda_a" => p.lambda_a = value,
                "sigma_a" => p.sigma_a = value,
                "beta0" => p.beta0 = value,
                "beta_a" => p.beta_a = value,
                "beta_s" => p.beta_s = value,
                "p_s" => p.p_s = value,
                _ => return Err(unknown()),
            },
            Scm::Ex2(p) => match key {
                "p0" => p.probs[0] = value,
                "p1" => p.probs[1] = value,
                "p2" => p.probs[2] = value,
                "lambda_e0" => p.lambda_e[0] = value,
                "lambda_e1" => p.lambda_e[1] = value,
                "lambda_e2" => p.lambda_e[2] = value,
                "lambda_a0" => p.lambda_a[0] = value,
                "lambda_a1" => p.lambda_a[1] = value,
                "lambda_a2" => p.lambda_a[2] = value,
                "beta0" => p.beta0 = value,
                "beta1" => p.beta1 = value,
                "beta2" => p.beta2 = value,
                "beta_a" => p.beta_a = value,
                "beta_e" => p.beta_e = value,
                _ => return Err(unknown()),
            },
            Scm::Ex3(p) => match key {
                "lambda" => p.lambda = value,
                "beta0" => p.beta0 = value,
                "beta_t" => p.beta_t = value,
                "beta_s" => p.beta_s = value,
                _ => return Err(unknown()),
            },
        }
        Ok(())
    }

    pub fn from_name(name: &str) -> Result<Scm> {
        match name {
            "ex1" => Ok(Scm::Ex1(Scm1Params::default())),
            "ex2" => Ok(Scm::Ex2(Scm2Params::default())),
            "ex3" => Ok(Scm::Ex3(Scm3Params::default())),
            other => Err(FlapError::Config(format!(
                "unknown model '{other}' (expected ex1, ex2, ex3)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scm::Ex1(_) => "ex1",
            Scm::Ex2(_) => "ex2",
            Scm::Ex3(_) => "ex3",
        }
    }
}

/// Result of [`Scm::diagnose_conditions`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionDiagnosis {
    /// Attribute derivatives identical across groups (strong condition).
    pub strong: bool,
    /// Derivative signs identical across groups (weak condition).
    pub weak: bool,
    pub max_relative_spread: f64,
}

/// Writes exogenous records as a CSV sidecar (`u_s,u_a,u_e,u_y`).
pub fn save_exogenous_csv(records: &[ExogenousRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["u_s", "u_a", "u_e", "u_y"])?;
    for r in records {
        w.write_record(&[
            r.u_s.to_string(),
            r.u_a.to_string(),
            r.u_e.map(|v| v.to_string()).unwrap_or_default(),
            r.u_y.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a sidecar written by [`save_exogenous_csv`].
pub fn load_exogenous_csv(path: &Path) -> Result<Vec<ExogenousRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let get = |i: usize| -> Result<f64> {
            record
                .get(i)
                .unwrap_or("")
                .parse()
                .map_err(|_| FlapError::Value(format!("bad exogenous cell in {}", path.display())))
        };
        let u_e_cell = record.get(2).unwrap_or("");
        out.push(ExogenousRecord {
            u_s: get(0)?,
            u_a: get(1)?,
            u_e: if u_e_cell.is_empty() {
                None
            } else {
                Some(get(2)?)
            },
            u_y: get(3)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::expit;
    use approx::assert_relative_eq;

    #[test]
    fn loan_model_group_frequency_matches_p_s() {
        let scm = Scm::Ex1(Scm1Params::default());
        let (data, _) = scm.simulate(100_000, 11).unwrap();
        let p1 = data.group_counts()[1] as f64 / data.n() as f64;
        // binomial 4-sigma band around 0.7
        assert!((p1 - 0.7).abs() < 4.0 * (0.7f64 * 0.3 / 100_000.0).sqrt());
    }

    #[test]
    fn simulation_is_deterministic() {
        let scm = Scm::Ex1(Scm1Params::default());
        let (d1, r1) = scm.simulate(500, 42).unwrap();
        let (d2, r2) = scm.simulate(500, 42).unwrap();
        assert_eq!(d1, d2);
        assert_eq!(r1, r2);
    }

    #[test]
    fn growing_n_preserves_earlier_units() {
        let scm = Scm::Ex2(Scm2Params::default());
        let (d1, _) = scm.simulate(100, 9).unwrap();
        let (d2, _) = scm.simulate(200, 9).unwrap();
        assert_eq!(&d1.rows()[..100], &d2.rows()[..100]);
    }

    #[test]
    fn loan_log_income_moments_match_structural_equation() {
        // log(A/c1) - c2 - lambda_a*S | S=s is Normal(0, (c3 sigma_a^s)^2)
        let params = Scm1Params {
            sigma_a: 2.0,
            ..Scm1Params::default()
        };
        let scm = Scm::Ex1(params);
        let (data, _) = scm.simulate(100_000, 5).unwrap();
        for s in 0..2 {
            let zs: Vec<f64> = data
                .rows()
                .iter()
                .filter(|r| r.group == s)
                .map(|r| (r.attrs[0] / params.c1).ln() - params.c2 - params.lambda_a * s as f64)
                .collect();
            let n = zs.len() as f64;
            let (mean, sd) = crate::numerics::mean_and_sd(&zs);
            let true_sd = params.c3 * params.sigma_a.powi(s as i32);
            assert!(mean.abs() < 4.0 * true_sd / n.sqrt(), "mean off in group {s}");
            let sd_se = true_sd / (2.0 * n).sqrt();
            assert!((sd - true_sd).abs() < 4.0 * sd_se, "sd off in group {s}");
        }
    }

    #[test]
    fn three_group_frequencies_match_thresholds() {
        let scm = Scm::Ex2(Scm2Params::default());
        let (data, _) = scm.simulate(100_000, 3).unwrap();
        let probs = data.group_probs();
        for (emp, tru) in probs.iter().zip([0.76, 0.16, 0.08]) {
            assert!((emp - tru).abs() < 3.0 * (tru * (1.0 - tru) / 100_000.0f64).sqrt());
        }
    }

    #[test]
    fn education_is_nonnegative() {
        let scm = Scm::Ex2(Scm2Params {
            lambda_e: [0.5, -0.2, -0.3],
            ..Scm2Params::default()
        });
        let (data, _) = scm.simulate(20_000, 17).unwrap();
        assert!(data.rows().iter().all(|r| r.attrs[0] >= 0.0));
    }

    #[test]
    fn admission_score_mass_at_one_equals_lambda() {
        let scm = Scm::Ex3(Scm3Params {
            lambda: 0.4,
            ..Scm3Params::default()
        });
        let (data, _) = scm.simulate(100_000, 23).unwrap();
        let males: Vec<&Row> = data.rows().iter().filter(|r| r.group == 1).collect();
        let at_one = males.iter().filter(|r| r.attrs[0] == 1.0).count() as f64;
        let frac = at_one / males.len() as f64;
        assert!((frac - 0.4).abs() < 4.0 * (0.4f64 * 0.6 / males.len() as f64).sqrt());
        assert!(data
            .rows()
            .iter()
            .all(|r| (0.0..=1.0).contains(&r.attrs[0])));
    }

    #[test]
    fn admission_score_uniform_when_lambda_zero() {
        let scm = Scm::Ex3(Scm3Params::default());
        let (data, _) = scm.simulate(20_000, 29).unwrap();
        for s in 0..2 {
            let ts: Vec<f64> = data
                .rows()
                .iter()
                .filter(|r| r.group == s)
                .map(|r| r.attrs[0])
                .collect();
            let d = crate::stats::ks_distance_uniform(&ts);
            let p = crate::stats::kolmogorov_sf(d * (ts.len() as f64).sqrt());
            assert!(p > 0.01, "group {s}: KS p = {p}");
        }
    }

    #[test]
    fn counterfactual_prob_direct_expit_values() {
        // beta_a = 0, beta_s = 1, beta0 = 0: probabilities depend on s' only
        let scm = Scm::Ex1(Scm1Params {
            beta0: 0.0,
            beta_a: 0.0,
            beta_s: 1.0,
            ..Scm1Params::default()
        });
        let u = ExogenousRecord {
            u_s: 0.3,
            u_a: 0.7,
            u_e: None,
            u_y: 0.5,
        };
        assert_relative_eq!(scm.counterfactual_decision_prob(&u, 0).unwrap(), 0.5);
        assert_relative_eq!(
            scm.counterfactual_decision_prob(&u, 1).unwrap(),
            expit(1.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn counterfactual_invariant_under_fair_loan_parameters() {
        let scm = Scm::Ex1(Scm1Params {
            sigma_a: 1.0,
            lambda_a: 0.0,
            beta_s: 0.0,
            ..Scm1Params::default()
        });
        let (_, records) = scm.simulate(500, 31).unwrap();
        for u in &records {
            let p0 = scm.counterfactual_decision_prob(u, 0).unwrap();
            let p1 = scm.counterfactual_decision_prob(u, 1).unwrap();
            assert_relative_eq!(p0, p1, epsilon = 1e-12);
        }
    }

    #[test]
    fn three_group_identical_equations_are_fair() {
        let scm = Scm::Ex2(Scm2Params::default()); // shifts and direct effects zero
        let (_, records) = scm.simulate(500, 37).unwrap();
        for u in &records {
            let p0 = scm.counterfactual_decision_prob(u, 0).unwrap();
            for s in 1..3 {
                assert_relative_eq!(
                    scm.counterfactual_decision_prob(u, s).unwrap(),
                    p0,
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn admission_counterfactual_clamps_score() {
        let scm = Scm::Ex3(Scm3Params {
            lambda: 0.5,
            ..Scm3Params::default()
        });
        let u = ExogenousRecord {
            u_s: 0.9,
            u_a: 0.8,
            u_e: None,
            u_y: 0.1,
        };
        let a0 = scm.counterfactual_attrs(&u, 0).unwrap();
        let a1 = scm.counterfactual_attrs(&u, 1).unwrap();
        assert_relative_eq!(a0[0], 0.8);
        assert_relative_eq!(a1[0], 1.0);
        let p = Scm3Params {
            lambda: 0.5,
            ..Scm3Params::default()
        };
        assert_relative_eq!(
            scm.counterfactual_decision_prob(&u, 0).unwrap(),
            expit(p.beta0 + 0.8 * p.beta_t),
            epsilon = 1e-12
        );
        assert_relative_eq!(
            scm.counterfactual_decision_prob(&u, 1).unwrap(),
            expit(p.beta0 + p.beta_t + p.beta_s),
            epsilon = 1e-12
        );
    }

    #[test]
    fn counterfactual_at_factual_group_reproduces_generation_probability() {
        let scm = Scm::Ex2(Scm2Params {
            lambda_e: [1.07, -0.2, -0.4],
            lambda_a: [0.58, -0.1, -0.2],
            beta1: 0.3,
            beta2: 0.6,
            ..Scm2Params::default()
        });
        let (data, records) = scm.simulate(300, 41).unwrap();
        for (row, u) in data.rows().iter().zip(&records) {
            let factual = scm.decision_prob(row.group, &row.attrs);
            let replayed = scm.counterfactual_decision_prob(u, row.group).unwrap();
            assert_relative_eq!(factual, replayed, epsilon = 1e-12);
        }
    }

    #[test]
    fn out_of_range_group_is_domain_error() {
        let scm = Scm::Ex1(Scm1Params::default());
        let u = ExogenousRecord {
            u_s: 0.5,
            u_a: 0.0,
            u_e: None,
            u_y: 0.5,
        };
        assert!(scm.counterfactual_decision_prob(&u, 2).is_err());
    }

    #[test]
    fn condition_diagnosis_loan_model() {
        // scale shift only: weak holds, strong fails
        let unequal = Scm::Ex1(Scm1Params {
            sigma_a: 2.0,
            lambda_a: 0.0,
            ..Scm1Params::default()
        });
        let d = unequal.diagnose_conditions();
        assert!(d.weak && !d.strong);
        // identical equations: both hold
        let equal = Scm::Ex1(Scm1Params {
            sigma_a: 1.0,
            lambda_a: 0.0,
            ..Scm1Params::default()
        });
        let d = equal.diagnose_conditions();
        assert!(d.weak && d.strong);
        // log-location shift alone already breaks the strong condition
        let shifted = Scm::Ex1(Scm1Params {
            sigma_a: 1.0,
            lambda_a: 0.5,
            ..Scm1Params::default()
        });
        let d = shifted.diagnose_conditions();
        assert!(d.weak && !d.strong);
    }

    #[test]
    fn condition_diagnosis_admission_model() {
        // the clamp flips the derivative sign between groups on (1-lambda, 1)
        let scm = Scm::Ex3(Scm3Params {
            lambda: 0.4,
            ..Scm3Params::default()
        });
        let d = scm.diagnose_conditions();
        assert!(!d.weak && !d.strong);
        let fair = Scm::Ex3(Scm3Params::default());
        let d = fair.diagnose_conditions();
        assert!(d.weak && d.strong);
    }

    #[test]
    fn exogenous_csv_round_trip() {
        let scm = Scm::Ex2(Scm2Params::default());
        let (_, records) = scm.simulate(50, 43).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        save_exogenous_csv(&records, f.path()).unwrap();
        let back = load_exogenous_csv(f.path()).unwrap();
        assert_eq!(records, back);
    }
}
