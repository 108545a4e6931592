//! Synthetic population, end-to-end simulation and weekly reporting.

mod config;
mod population;
mod run;
mod weekly;

pub use config::{EngineConfig, InProductConfig, NpsStep, RingConfig, RunConfig};
pub use population::{
    generate_population, ActivityLevel, CountryShare, MemberRecord, OpinionModel, PopulationSpec,
    ResponseModel, Segment, SyntheticPopulation, TriggerRate, POOLED,
};
pub use run::{run, Channel, ProgramYield, ResponseEntry, RingState, SendEntry, SurveyLog};
pub use weekly::{weekly_report, WeeklyOptions, WeeklyPoint};

use thiserror::Error;

use crate::estimators::EstimateError;
use crate::hash_alloc::MemberId;
use crate::mot::MotError;
use crate::ring::LedgerError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid population spec: {0}")]
    InvalidSpec(String),
    #[error("invalid run config: {0}")]
    InvalidConfig(String),
    #[error("member {0} is not in the population")]
    UnknownMember(MemberId),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Mot(#[from] MotError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
}
