//! Cool-off ledger and post-hoc send audit.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash_alloc::MemberId;

/// Day offset from the run epoch.
pub type Day = u32;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct ProgramId(pub u32);

impl fmt::Display for ProgramId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("send to member {member} for program {program} on day {day} precedes recorded day {recorded}")]
    OutOfOrder {
        member: MemberId,
        program: ProgramId,
        day: Day,
        recorded: Day,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoolOffPolicy {
    #[serde(default = "default_any")]
    pub any_program_days: u32,
    #[serde(default = "default_same")]
    pub same_program_days: u32,
}

fn default_any() -> u32 {
    30
}
fn default_same() -> u32 {
    90
}

impl Default for CoolOffPolicy {
    fn default() -> Self {
        CoolOffPolicy {
            any_program_days: 30,
            same_program_days: 90,
        }
    }
}

impl CoolOffPolicy {
    pub fn is_valid(&self) -> bool {
        self.any_program_days <= self.same_program_days
    }
}

/// Last-sent day per (member, program), plus last-sent day per member.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CoolOffLedger {
    by_program: HashMap<(MemberId, ProgramId), Day>,
    last_any: HashMap<MemberId, Day>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub member: MemberId,
    pub program: ProgramId,
    pub day: Day,
}

impl CoolOffLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_sent(
        &mut self,
        member: MemberId,
        program: ProgramId,
        day: Day,
    ) -> Result<(), LedgerError> {
        let slot = self.by_program.entry((member, program)).or_insert(day);
        if day < *slot {
            return Err(LedgerError::OutOfOrder {
                member,
                program,
                day,
                recorded: *slot,
            });
        }
        *slot = day;
        let any = self.last_any.entry(member).or_insert(day);
        *any = (*any).max(day);
        Ok(())
    }

    pub fn last_sent(&self, member: MemberId, program: ProgramId) -> Option<Day> {
        self.by_program.get(&(member, program)).copied()
    }

    pub fn last_sent_any(&self, member: MemberId) -> Option<Day> {
        self.last_any.get(&member).copied()
    }

    /// True when a send on `day` respects both cool-off windows.
    pub fn is_clear(
        &self,
        member: MemberId,
        program: ProgramId,
        day: Day,
        policy: &CoolOffPolicy,
    ) -> bool {
        let gap_ok = |last: Option<Day>, window: u32| match last {
            None => true,
            Some(last) => u64::from(day) >= u64::from(last) + u64::from(window),
        };
        gap_ok(self.last_sent_any(member), policy.any_program_days)
            && gap_ok(self.last_sent(member, program), policy.same_program_days)
    }

    pub fn len(&self) -> usize {
        self.by_program.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_program.is_empty()
    }

    /// Entries sorted by member, then program.
    pub fn entries(&self) -> Vec<LedgerEntry> {
        let mut out: Vec<LedgerEntry> = self
            .by_program
            .iter()
            .map(|(&(member, program), &day)| LedgerEntry {
                member,
                program,
                day,
            })
            .collect();
        out.sort();
        out
    }

    pub fn from_entries(
        entries: impl IntoIterator<Item = LedgerEntry>,
    ) -> Result<Self, LedgerError> {
        let mut entries: Vec<LedgerEntry> = entries.into_iter().collect();
        entries.sort_by_key(|e| e.day);
        let mut ledger = CoolOffLedger::new();
        for e in entries {
            ledger.record_sent(e.member, e.program, e.day)?;
        }
        Ok(ledger)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SendRecord {
    pub member: MemberId,
    pub program: ProgramId,
    pub day: Day,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    AnyProgram,
    SameProgram,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub first: SendRecord,
    pub second: SendRecord,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub sends_checked: usize,
    pub members_checked: usize,
    pub any_program_violations: usize,
    pub same_program_violations: usize,
    /// Up to the first 100 offending pairs.
    pub examples: Vec<Violation>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.any_program_violations == 0 && self.same_program_violations == 0
    }
}

/// Counts every pair of sends to one member that falls inside a cool-off window.
///
/// A pair closer than `any_program_days` is an any-program violation; a
/// same-program pair closer than `same_program_days` is a same-program
/// violation. A pair can count as both.
pub fn audit_sends(
    sends: impl IntoIterator<Item = SendRecord>,
    policy: &CoolOffPolicy,
) -> AuditReport {
    let mut per_member: BTreeMap<MemberId, Vec<SendRecord>> = BTreeMap::new();
    let mut report = AuditReport::default();
    for s in sends {
        report.sends_checked += 1;
        per_member.entry(s.member).or_default().push(s);
    }
    report.members_checked = per_member.len();
    let window = policy.any_program_days.max(policy.same_program_days);
    for list in per_member.values_mut() {
        list.sort_by_key(|s| (s.day, s.program));
        for (i, first) in list.iter().enumerate() {
            for second in &list[i + 1..] {
                let gap = second.day - first.day;
                if gap >= window {
                    break;
                }
                let mut push = |kind| {
                    if report.examples.len() < 100 {
                        report.examples.push(Violation {
                            kind,
                            first: *first,
                            second: *second,
                        });
                    }
                };
                if gap < policy.any_program_days {
                    report.any_program_violations += 1;
                    push(ViolationKind::AnyProgram);
                }
                if first.program == second.program && gap < policy.same_program_days {
                    report.same_program_violations += 1;
                    push(ViolationKind::SameProgram);
                }
            }
        }
    }
    report
}
