//! NPS estimation and bias adjustment.
//!
//! Responses are coded +100 / 0 / -100 (promoter / passive / detractor), so
//! every NPS here is a (weighted) mean of coded values in `[-100, 100]`.

mod data;
pub mod logistic;
pub mod mrp;
mod nps;
pub mod report;
pub mod selection;
mod strata;
mod weighting;

pub use data::{
    NpsClass, Population, PopulationCell, Response, ResponseSet, Schema, Variable, VariableKind,
};
pub use logistic::{fit_logistic, FitOptions, LogisticFit, LogisticProblem};
pub use mrp::{
    choose_lambda, fit_propensity, mrp_estimate, DesignSpec, LambdaChoice, MrpEstimate,
    PropensityModel,
};
pub use nps::{code_response, nonresponse_bias, nps, nps_of_scores, NonresponseDecomposition};
pub use report::{
    adjust, compare_estimates, compare_surveys, AdjustOptions, AdjustmentReport, CountryAdjustment,
    CountryComparison,
};
pub use selection::{
    select_weighting_variables, stepwise_select, Criterion, StepwiseResult, VariableChoice,
};
pub use strata::{build_strata, quantile_edges, Stratifier, Stratum, StratumKey};
pub use weighting::{unadjusted, weighting_adjust, Diagnostic, WeightedEstimate, Z_95};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimateError {
    #[error("score {0} outside 0..=10")]
    ScoreOutOfRange(u8),
    #[error("no responses")]
    EmptyInput,
    #[error("response rate {0} outside (0, 1]")]
    InvalidResponseRate(f64),
    #[error("every stratum is empty or has zero population weight")]
    AllStrataEmpty,
    #[error("unknown variable {0}")]
    UnknownVariable(String),
    #[error("expected {expected} covariates, got {got}")]
    CovariateArity { expected: usize, got: usize },
    #[error("weight {0} must be positive and finite")]
    NonPositiveWeight(f64),
    #[error("population count {0} must be non-negative")]
    NegativePopulationCount(f64),
    #[error("responses and population use different covariate columns")]
    SchemaMismatch,
    #[error("respondent index {0} out of range")]
    RespondentIndex(usize),
    #[error("country mismatch: {0}")]
    CountryMismatch(String),
    #[error("no population cells for country {0}")]
    EmptyPopulation(String),
    #[error("design and outcome dimensions disagree")]
    DimensionMismatch,
    #[error("ridge strength {0} must be finite and non-negative")]
    InvalidLambda(f64),
    #[error("logistic fit did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NonConvergence {
        iterations: usize,
        gradient_norm: f64,
    },
    #[error("outcomes are perfectly separated; use a positive ridge strength")]
    Separable,
    #[error("design matrix is singular")]
    SingularDesign,
    #[error("need at least 2 candidate variables, got {0}")]
    TooFewCandidates(usize),
}
