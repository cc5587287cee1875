//! Parameter sensitivity analysis and assessment fitting for discrete
//! Bayesian networks.
//!
//! Exact inference runs on a junction tree. Sensitivities of a target
//! posterior come from conditional expectations of the log-parameter
//! derivative `U`, either exactly or by sampling. Fitting moves parameters
//! toward directly assessed conditional distributions by gradient descent
//! on a proper scoring rule.

pub mod error;
pub mod model;

mod dsep;
mod factor;

pub mod fitting;
pub mod formats;
pub mod inference;
pub mod montecarlo;
pub mod sensitivity;

#[cfg(feature = "cli")]
pub mod cli;
#[cfg(feature = "service")]
pub mod service;

pub use error::{Error, Result};
pub use fitting::{Assessment, AssessmentKind, FitConfig, FitResult, ScoringRule};
pub use formats::{parse_document, serialize_document, Document};
pub use inference::{compile, Evidence, InferenceContext};
pub use model::{Network, NodeDef, ParamIndex, ParamKey, Parameterization, Variable};
pub use montecarlo::{estimate_sensitivities, EstimatedReport, SamplerConfig, SamplingMethod};
pub use sensitivity::{sensitivities, Scenario, SensitivityReport};
