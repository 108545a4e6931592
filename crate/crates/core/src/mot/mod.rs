//! Trigger-based (moment-of-truth) survey sampling.
//!
//! Two selection modes are supported. Under simple random sampling (SRS) each
//! day draws a fixed fraction of the previous day's triggerers, so a member who
//! triggers on `n` days is selected with probability `1 - (1 - r)^n`. Under
//! first-time-triggered (FTT) sampling a member is considered only on their
//! first trigger of the month, which gives every member of the frame the same
//! selection probability `r`.
//!
//! Members picked by more than one program on the same day get exactly one
//! survey; see [`overlap`].

pub mod overlap;

pub use overlap::{
    assignment_probabilities, overlap_count, overlap_weights, overlapped_members, resolve_overlaps,
    resolved_weight, MemberResolution, OverlapResolution, SelectionCounts,
};

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::draw::{keyed_bernoulli, Stream};
use crate::hash_alloc::MemberId;
use crate::ring::{CoolOffLedger, CoolOffPolicy, Day, LedgerError, ProgramId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MotError {
    #[error("day of month {0} outside 1..=31")]
    DayOutOfRange(u32),
    #[error(
        "SRS samples from the previous day's triggers; day of month must be at least 2, got {0}"
    )]
    NoPreviousDay(u32),
    #[error("program {program}: sampling rate {rate} outside (0, 1]")]
    InvalidRate { program: ProgramId, rate: f64 },
    #[error("program {0}: desired responses must be at least 1")]
    InvalidDesiredResponses(ProgramId),
    #[error("program {0} appears twice in the sampling plan")]
    DuplicateProgram(ProgramId),
    #[error("program {0} has no sampling plan")]
    UnknownProgram(ProgramId),
    #[error("degenerate selection counts: {0}")]
    DegenerateCounts(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

pub const MAX_DAY_OF_MONTH: u32 = 31;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TriggerEvent {
    pub member: MemberId,
    pub program: ProgramId,
    /// Day of month, `1..=31`.
    pub day: u32,
}

/// One month of trigger events, indexed by day of month.
///
/// Repeat triggers of the same program by the same member on one day count once.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TriggerLog {
    /// Absolute day of day-of-month 1.
    month_start: Day,
    by_day: Vec<Vec<(MemberId, ProgramId)>>,
}

impl TriggerLog {
    pub fn new(month_start: Day) -> Self {
        TriggerLog {
            month_start,
            by_day: vec![Vec::new(); MAX_DAY_OF_MONTH as usize + 1],
        }
    }

    pub fn from_events(
        month_start: Day,
        events: impl IntoIterator<Item = TriggerEvent>,
    ) -> Result<Self, MotError> {
        let mut log = TriggerLog::new(month_start);
        for e in events {
            log.push(e)?;
        }
        log.normalize();
        Ok(log)
    }

    pub fn push(&mut self, e: TriggerEvent) -> Result<(), MotError> {
        if !(1..=MAX_DAY_OF_MONTH).contains(&e.day) {
            return Err(MotError::DayOutOfRange(e.day));
        }
        self.by_day[e.day as usize].push((e.member, e.program));
        Ok(())
    }

    /// Sorts and deduplicates each day. Called by `from_events`.
    pub fn normalize(&mut self) {
        for day in &mut self.by_day {
            day.sort_unstable();
            day.dedup();
        }
    }

    pub fn month_start(&self) -> Day {
        self.month_start
    }

    pub fn absolute_day(&self, day_of_month: u32) -> Day {
        self.month_start + day_of_month - 1
    }

    pub fn on_day(&self, day_of_month: u32) -> &[(MemberId, ProgramId)] {
        self.by_day
            .get(day_of_month as usize)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn last_day(&self) -> u32 {
        (1..=MAX_DAY_OF_MONTH)
            .rev()
            .find(|&d| !self.by_day[d as usize].is_empty())
            .unwrap_or(0)
    }

    pub fn events(&self) -> impl Iterator<Item = TriggerEvent> + '_ {
        self.by_day.iter().enumerate().flat_map(|(day, evs)| {
            evs.iter().map(move |&(member, program)| TriggerEvent {
                member,
                program,
                day: day as u32,
            })
        })
    }

    pub fn len(&self) -> usize {
        self.by_day.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    Srs,
    #[default]
    Ftt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProgramPlan {
    pub program: ProgramId,
    /// Per-day selection probability.
    pub rate: f64,
    pub desired_responses: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingPlan {
    pub programs: Vec<ProgramPlan>,
    #[serde(default)]
    pub mode: SamplingMode,
    #[serde(default)]
    pub seed: u64,
}

impl SamplingPlan {
    pub fn validate(&self) -> Result<(), MotError> {
        let mut seen = HashSet::new();
        for p in &self.programs {
            if !(p.rate > 0.0 && p.rate <= 1.0) {
                return Err(MotError::InvalidRate {
                    program: p.program,
                    rate: p.rate,
                });
            }
            if p.desired_responses == 0 {
                return Err(MotError::InvalidDesiredResponses(p.program));
            }
            if !seen.insert(p.program) {
                return Err(MotError::DuplicateProgram(p.program));
            }
        }
        Ok(())
    }

    pub fn rate(&self, program: ProgramId) -> Option<f64> {
        self.programs
            .iter()
            .find(|p| p.program == program)
            .map(|p| p.rate)
    }
}

/// A survey send decided by the sampler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub member: MemberId,
    pub program: ProgramId,
    pub day: Day,
    pub weight: f64,
    pub seed: u64,
}

/// Probability that a member triggering on `n` days is picked at least once
/// when each day samples at rate `r`: `1 - (1 - r)^n`.
pub fn srs_selection_probability(n: u32, r: f64) -> f64 {
    if n == 0 || r <= 0.0 {
        return 0.0;
    }
    if r >= 1.0 {
        return 1.0;
    }
    -(f64::from(n) * (-r).ln_1p()).exp_m1()
}

/// Per-program selections for one send day.
pub type DaySelections = BTreeMap<ProgramId, BTreeSet<MemberId>>;

fn draw_selected(seed: u64, member: MemberId, program: ProgramId, day: Day, rate: f64) -> bool {
    keyed_bernoulli(
        seed,
        Stream::Selection,
        &[member.0, u64::from(program.0), u64::from(day)],
        rate,
    )
}

/// SRS draws for `send_day` from the given triggers. Programs without a plan are ignored.
pub fn srs_candidates<'a, E>(
    triggers: impl IntoIterator<Item = &'a (MemberId, ProgramId)>,
    send_day: Day,
    plan: &SamplingPlan,
    mut eligible: E,
) -> DaySelections
where
    E: FnMut(MemberId, ProgramId, Day) -> bool,
{
    let mut out = DaySelections::new();
    for &(member, program) in triggers {
        let Some(rate) = plan.rate(program) else {
            continue;
        };
        if eligible(member, program, send_day)
            && draw_selected(plan.seed, member, program, send_day, rate)
        {
            out.entry(program).or_default().insert(member);
        }
    }
    out
}

/// FTT draws for `day`. `seen` holds the (member, program) pairs that already
/// had their first trigger this month; it is updated whether or not the member
/// is eligible, so a member in cool-off on their first trigger is skipped for
/// the rest of the month.
pub fn ftt_candidates<'a, E>(
    triggers: impl IntoIterator<Item = &'a (MemberId, ProgramId)>,
    day: Day,
    plan: &SamplingPlan,
    seen: &mut HashSet<(MemberId, ProgramId)>,
    mut eligible: E,
) -> DaySelections
where
    E: FnMut(MemberId, ProgramId, Day) -> bool,
{
    let mut out = DaySelections::new();
    for &(member, program) in triggers {
        let Some(rate) = plan.rate(program) else {
            continue;
        };
        if !seen.insert((member, program)) {
            continue;
        }
        if eligible(member, program, day) && draw_selected(plan.seed, member, program, day, rate) {
            out.entry(program).or_default().insert(member);
        }
    }
    out
}

/// SRS selection for day-of-month `day` (sampling the triggers of `day - 1`)
/// against a fixed ledger snapshot.
pub fn srs_sample(
    log: &TriggerLog,
    plan: &SamplingPlan,
    ledger: &CoolOffLedger,
    policy: &CoolOffPolicy,
    day: u32,
) -> Result<BTreeSet<(MemberId, ProgramId)>, MotError> {
    plan.validate()?;
    if day < 2 {
        return Err(MotError::NoPreviousDay(day));
    }
    if day > MAX_DAY_OF_MONTH + 1 {
        return Err(MotError::DayOutOfRange(day));
    }
    let send_day = log.absolute_day(day);
    let picked = srs_candidates(log.on_day(day - 1), send_day, plan, |m, p, d| {
        ledger.is_clear(m, p, d, policy)
    });
    Ok(picked
        .into_iter()
        .flat_map(|(p, members)| members.into_iter().map(move |m| (m, p)))
        .collect())
}

/// Runs a whole month day by day: draws, overlap resolution, ledger updates.
///
/// SRS send days run `2..=last_day + 1` so the last trigger day is sampled too.
pub fn sample_month(
    log: &TriggerLog,
    plan: &SamplingPlan,
    ledger: &mut CoolOffLedger,
    policy: &CoolOffPolicy,
) -> Result<Vec<Selection>, MotError> {
    plan.validate()?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let last = log.last_day();
    let days: Vec<u32> = match plan.mode {
        SamplingMode::Ftt => (1..=last).collect(),
        SamplingMode::Srs => (2..=last + 1).collect(),
    };
    for dom in days {
        let day = log.absolute_day(dom);
        let eligible = |m, p, d| ledger.is_clear(m, p, d, policy);
        let picked = match plan.mode {
            SamplingMode::Ftt => ftt_candidates(log.on_day(dom), day, plan, &mut seen, eligible),
            SamplingMode::Srs => srs_candidates(log.on_day(dom - 1), day, plan, eligible),
        };
        if picked.values().all(BTreeSet::is_empty) {
            continue;
        }
        let counts = SelectionCounts::from_selections(&picked);
        let resolution = resolve_overlaps(&picked, &counts, plan.seed, u64::from(day))?;
        for (&member, r) in &resolution.members {
            ledger.record_sent(member, r.assigned, day)?;
            out.push(Selection {
                member,
                program: r.assigned,
                day,
                weight: r.weight,
                seed: plan.seed,
            });
        }
    }
    Ok(out)
}

/// FTT sampling over a full month. Each (member, program) pair is considered
/// only on its first trigger day; sends are recorded in `ledger` as they happen.
pub fn ftt_sample(
    log: &TriggerLog,
    plan: &SamplingPlan,
    ledger: &mut CoolOffLedger,
    policy: &CoolOffPolicy,
) -> Result<Vec<Selection>, MotError> {
    let plan = SamplingPlan {
        mode: SamplingMode::Ftt,
        ..plan.clone()
    };
    sample_month(log, &plan, ledger, policy)
}
