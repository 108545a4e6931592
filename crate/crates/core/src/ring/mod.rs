//! Pre-allocated bucket ring.
//!
//! Buckets `1..=b` sit on a ring split into four contiguous arcs, in clockwise
//! (increasing index) order starting at the rNPS arc:
//!
//! ```text
//!   RNPS | RNPS_COOLOFF | MOT ... | MOT_COOLOFF
//! ```
//!
//! Every tick the whole pattern advances by one bucket, so on tick `t` the rNPS
//! arc starts at bucket `(t mod b) + 1`. A given bucket therefore moves from
//! the rNPS arc into the MoT cool-off arc, then through the MoT pool, then
//! through the rNPS cool-off arc, and reaches rNPS again `b` ticks later.

mod ledger;

pub use ledger::{
    audit_sends, AuditReport, CoolOffLedger, CoolOffPolicy, Day, LedgerEntry, LedgerError,
    ProgramId, SendRecord, Violation, ViolationKind,
};

use std::collections::BTreeSet;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash_alloc::{bucket_of, BucketIndex, HashId, MemberId};

/// Smallest daily ring for which an rNPS revisit clears the 90-day same-program window.
pub const MIN_DAILY_BUCKETS: u32 = 91;
/// Floor on the MoT cool-off arc for a daily ring.
pub const MIN_DAILY_MOT_COOLOFF: u32 = 30;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RingError {
    #[error("arcs use {used} of {buckets} buckets; the MoT pool would be empty")]
    EmptyMotPool { used: u32, buckets: u32 },
    #[error("rNPS arc must span at least one bucket")]
    EmptyRnpsArc,
    #[error("daily ring needs at least {MIN_DAILY_BUCKETS} buckets, got {0}")]
    TooFewDailyBuckets(u32),
    #[error(
        "daily ring needs a MoT cool-off arc of at least {MIN_DAILY_MOT_COOLOFF} buckets, got {0}"
    )]
    MotCoolOffTooShort(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Cadence {
    #[default]
    Daily,
    Weekly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Group {
    Rnps,
    RnpsCoolOff,
    Mot,
    MotCoolOff,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RingLayoutRaw", into = "RingLayoutRaw")]
pub struct RingLayout {
    buckets: u32,
    rnps_span: u32,
    rnps_cooloff_span: u32,
    mot_cooloff_span: u32,
    cadence: Cadence,
    epoch: NaiveDate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RingLayoutRaw {
    buckets: u32,
    #[serde(default = "one")]
    rnps_span: u32,
    #[serde(default = "thirty")]
    rnps_cooloff_span: u32,
    #[serde(default = "thirty")]
    mot_cooloff_span: u32,
    #[serde(default)]
    cadence: Cadence,
    #[serde(default = "default_epoch")]
    epoch: NaiveDate,
}

fn one() -> u32 {
    1
}
fn thirty() -> u32 {
    30
}

/// 2024-01-01, a Monday, so weekly ticks line up with ISO weeks from day 0.
pub fn default_epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date")
}

impl TryFrom<RingLayoutRaw> for RingLayout {
    type Error = RingError;
    fn try_from(r: RingLayoutRaw) -> Result<Self, Self::Error> {
        RingLayout::new(
            r.buckets,
            r.rnps_span,
            r.rnps_cooloff_span,
            r.mot_cooloff_span,
            r.cadence,
        )
        .map(|l| l.with_epoch(r.epoch))
    }
}

impl From<RingLayout> for RingLayoutRaw {
    fn from(l: RingLayout) -> Self {
        RingLayoutRaw {
            buckets: l.buckets,
            rnps_span: l.rnps_span,
            rnps_cooloff_span: l.rnps_cooloff_span,
            mot_cooloff_span: l.mot_cooloff_span,
            cadence: l.cadence,
            epoch: l.epoch,
        }
    }
}

impl RingLayout {
    pub fn new(
        buckets: u32,
        rnps_span: u32,
        rnps_cooloff_span: u32,
        mot_cooloff_span: u32,
        cadence: Cadence,
    ) -> Result<Self, RingError> {
        if rnps_span == 0 {
            return Err(RingError::EmptyRnpsArc);
        }
        let used = rnps_span as u64 + rnps_cooloff_span as u64 + mot_cooloff_span as u64;
        if used >= buckets as u64 {
            return Err(RingError::EmptyMotPool {
                used: used.min(u32::MAX as u64) as u32,
                buckets,
            });
        }
        if cadence == Cadence::Daily {
            if buckets < MIN_DAILY_BUCKETS {
                return Err(RingError::TooFewDailyBuckets(buckets));
            }
            if mot_cooloff_span < MIN_DAILY_MOT_COOLOFF {
                return Err(RingError::MotCoolOffTooShort(mot_cooloff_span));
            }
        }
        Ok(RingLayout {
            buckets,
            rnps_span,
            rnps_cooloff_span,
            mot_cooloff_span,
            cadence,
            epoch: default_epoch(),
        })
    }

    /// 120 buckets, one rNPS bucket, 30-bucket cool-off arcs, daily rotation.
    pub fn daily_default() -> Self {
        RingLayout::new(120, 1, 30, 30, Cadence::Daily).expect("default layout is valid")
    }

    /// Weekly ring with a single survey-eligible bucket and no cool-off arcs.
    pub fn weekly(buckets: u32) -> Result<Self, RingError> {
        RingLayout::new(buckets, 1, 0, 0, Cadence::Weekly)
    }

    pub fn with_epoch(mut self, epoch: NaiveDate) -> Self {
        self.epoch = epoch;
        self
    }

    pub fn buckets(&self) -> u32 {
        self.buckets
    }
    pub fn rnps_span(&self) -> u32 {
        self.rnps_span
    }
    pub fn rnps_cooloff_span(&self) -> u32 {
        self.rnps_cooloff_span
    }
    pub fn mot_cooloff_span(&self) -> u32 {
        self.mot_cooloff_span
    }
    pub fn mot_span(&self) -> u32 {
        self.buckets - self.rnps_span - self.rnps_cooloff_span - self.mot_cooloff_span
    }
    pub fn cadence(&self) -> Cadence {
        self.cadence
    }
    pub fn epoch(&self) -> NaiveDate {
        self.epoch
    }

    /// Tick index for a day offset from the epoch. Weekly ticks roll over on Mondays.
    pub fn tick_of_day(&self, day: Day) -> u64 {
        match self.cadence {
            Cadence::Daily => u64::from(day),
            Cadence::Weekly => {
                (u64::from(self.epoch.weekday().num_days_from_monday()) + u64::from(day)) / 7
            }
        }
    }
}

/// Group membership of every bucket on one tick.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupAssignment {
    pub tick: u64,
    buckets: u32,
    /// Zero-based offset of the first rNPS bucket.
    start: u32,
    spans: [u32; 4],
}

const GROUP_ORDER: [Group; 4] = [
    Group::Rnps,
    Group::RnpsCoolOff,
    Group::Mot,
    Group::MotCoolOff,
];

impl GroupAssignment {
    pub fn group_of(&self, bucket: BucketIndex) -> Group {
        let zero_based = bucket.get().saturating_sub(1) % self.buckets;
        let mut pos = (zero_based + self.buckets - self.start) % self.buckets;
        for (group, span) in GROUP_ORDER.iter().zip(self.spans) {
            if pos < span {
                return *group;
            }
            pos -= span;
        }
        unreachable!("spans cover the ring")
    }

    /// Buckets of one arc in clockwise order.
    pub fn arc(&self, group: Group) -> Vec<BucketIndex> {
        let idx = GROUP_ORDER
            .iter()
            .position(|g| *g == group)
            .expect("known group");
        let offset: u32 = self.spans[..idx].iter().sum();
        (0..self.spans[idx])
            .map(|k| BucketIndex((self.start + offset + k) % self.buckets + 1))
            .collect()
    }

    /// First bucket of the rNPS arc.
    pub fn rnps_bucket(&self) -> BucketIndex {
        BucketIndex(self.start + 1)
    }

    /// Group of each bucket, indexed by `bucket - 1`.
    pub fn to_vec(&self) -> Vec<Group> {
        (1..=self.buckets)
            .map(|j| self.group_of(BucketIndex(j)))
            .collect()
    }
}

/// Arc assignment for tick `t`.
pub fn groups_on_tick(layout: &RingLayout, t: u64) -> GroupAssignment {
    GroupAssignment {
        tick: t,
        buckets: layout.buckets,
        start: (t % u64::from(layout.buckets)) as u32,
        spans: [
            layout.rnps_span,
            layout.rnps_cooloff_span,
            layout.mot_span(),
            layout.mot_cooloff_span,
        ],
    }
}

/// The MoT sampling pool on tick `t`.
pub fn mot_pool(layout: &RingLayout, t: u64) -> BTreeSet<BucketIndex> {
    groups_on_tick(layout, t)
        .arc(Group::Mot)
        .into_iter()
        .collect()
}

/// A ring bound to its randomization domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ring {
    pub hash_id: HashId,
    pub layout: RingLayout,
}

impl Ring {
    pub fn new(hash_id: HashId, layout: RingLayout) -> Self {
        Ring { hash_id, layout }
    }

    pub fn bucket(&self, member: MemberId) -> BucketIndex {
        bucket_of(&self.hash_id, member, self.layout.buckets).expect("layout has buckets")
    }

    pub fn assignment_on_day(&self, day: Day) -> GroupAssignment {
        groups_on_tick(&self.layout, self.layout.tick_of_day(day))
    }
}

/// Eligibility for an rNPS send on `day`.
///
/// All of the following must hold: the member's bucket is in the current rNPS
/// arc, the member was active in the last 180 days, and the ledger shows no
/// send from any program within `any_program_days` and no rNPS send within
/// `same_program_days`.
#[allow(clippy::too_many_arguments)]
pub fn rnps_eligible(
    member: MemberId,
    bucket: BucketIndex,
    day: Day,
    layout: &RingLayout,
    ledger: &CoolOffLedger,
    policy: &CoolOffPolicy,
    rnps_program: ProgramId,
    active_last_180_days: bool,
) -> bool {
    active_last_180_days
        && groups_on_tick(layout, layout.tick_of_day(day)).group_of(bucket) == Group::Rnps
        && ledger.is_clear(member, rnps_program, day, policy)
}
