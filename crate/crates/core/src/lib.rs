//! Survey sampling and analysis engine.
//!
//! - [`hash_alloc`]: MD5-based allocation of members onto `[0, 100)` and into buckets.
//! - [`ring`]: the pre-allocated bucket ring, cool-off ledger and send audit.
//! - [`mot`]: trigger-based sampling (SRS and first-time-triggered) with overlap resolution.
//! - [`estimators`]: NPS, nonresponse bias, post-stratification weighting, MRP,
//!   variable selection and two-survey comparison.
//! - [`sim`]: synthetic population, end-to-end simulation driver and weekly reports.
//! - [`io`]: the line-oriented file formats shared by the CLI.

pub mod draw;
pub mod estimators;
pub mod hash_alloc;
pub mod io;
pub mod mot;
pub mod ring;
pub mod sim;
