//! Fair decision learning through data preprocessing.
//!
//! This crate learns counterfactually fair binary decisions from biased
//! training data. The core pipeline preprocesses non-sensitive attributes so
//! that their dependence on the sensitive group is removed (by group-mean
//! orthogonalization or by per-coordinate quantile mapping across groups),
//! fits a logistic learner on the processed attributes, and draws Bernoulli
//! decisions from the predicted scores. Around that core it provides:
//!
//! * synthetic data generators with a ground-truth counterfactual oracle
//!   ([`scm`]),
//! * a family of baseline predictors (ML, FTU, AML, FL-lite, AA) next to the
//!   preprocessing pipeline ([`learners`], [`pipeline`]),
//! * counterfactual fairness metrics: CF-metric, CF-bound, accuracy
//!   ([`metrics`]),
//! * statistical fairness tests via conditional independence of the decision
//!   and the group given the processed attributes ([`citest`]),
//! * batch experiment drivers and an audit entry point ([`experiments`]).
//!
//! The `flap` binary exposes all of it on the command line; see the README
//! for the subcommand tour and the experiment reproduction guide.

pub mod citest;
pub mod data;
pub mod error;
pub mod experiments;
pub mod learners;
pub mod metrics;
pub mod numerics;
pub mod pipeline;
pub mod plot;
pub mod preprocess;
pub mod scm;
pub mod stats;

pub use data::{load_csv, split, Dataset, DatasetSchema, IngestReport};
pub use error::{FlapError, Result};
pub use learners::{fit_logistic, LogisticModel, Method, Predictor};
pub use metrics::{accuracy, cf_bound, cf_metric, MetricConfig, RankTable};
pub use pipeline::{flap_fit, FlapLearner, FlapModel};
pub use preprocess::{fit_marginal_mapping, fit_orthogonalization, PrepKind, Preprocessor};
pub use scm::{ExogenousRecord, Scm, Scm1Params, Scm2Params, Scm3Params};
