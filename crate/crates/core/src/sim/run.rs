//! Day-by-day simulation driver.

use std::collections::{BTreeMap, HashSet};

use chrono::{Datelike, Days};
use serde::{Deserialize, Serialize};

use super::{RunConfig, SimError, SyntheticPopulation};
use crate::draw::{keyed_bernoulli, keyed_u64, Stream};
use crate::estimators::{NpsClass, Response, ResponseSet};
use crate::hash_alloc::{BucketIndex, MemberId};
use crate::mot::{ftt_candidates, resolve_overlaps, srs_candidates, SamplingMode, SelectionCounts};
use crate::ring::{
    audit_sends, mot_pool, AuditReport, CoolOffLedger, CoolOffPolicy, Day, ProgramId, SendRecord,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Email,
    InProduct,
}

impl Channel {
    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Email => "email",
            Channel::InProduct => "in_product",
        }
    }

    fn key(self) -> u64 {
        match self {
            Channel::Email => 1,
            Channel::InProduct => 2,
        }
    }
}

impl std::str::FromStr for Channel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "email" => Ok(Channel::Email),
            "in_product" => Ok(Channel::InProduct),
            other => Err(format!("unknown channel {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SendEntry {
    pub day: Day,
    pub member: MemberId,
    pub program: ProgramId,
    pub channel: Channel,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseEntry {
    pub day: Day,
    pub member: MemberId,
    pub program: ProgramId,
    pub channel: Channel,
    pub score: u8,
    pub weight: f64,
}

/// Which bucket a ring pointed at on a given day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RingState {
    pub day: Day,
    pub channel: Channel,
    pub tick: u64,
    /// rNPS bucket for the email ring, survey-eligible bucket for in-product.
    pub bucket: BucketIndex,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SurveyLog {
    pub horizon_days: u32,
    pub sends: Vec<SendEntry>,
    pub responses: Vec<ResponseEntry>,
    pub ring_states: Vec<RingState>,
}

/// Realized MoT volume against the plan. The sampling rate is an input, so
/// the plan's desired response count is not enforced; this shows the gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramYield {
    pub program: ProgramId,
    pub rate: f64,
    pub desired_responses_per_month: u32,
    pub sends: usize,
    pub responses: usize,
    pub responses_per_month: f64,
    /// `responses_per_month - desired_responses_per_month`.
    pub gap: f64,
}

impl SurveyLog {
    /// Per-program MoT yield, with months of 365.25 / 12 days.
    pub fn mot_yield(&self, config: &RunConfig) -> Vec<ProgramYield> {
        let months = f64::from(self.horizon_days) * 12.0 / 365.25;
        config
            .mot
            .programs
            .iter()
            .map(|p| {
                let sends = self.sends.iter().filter(|s| s.program == p.program).count();
                let responses = self
                    .responses
                    .iter()
                    .filter(|r| r.program == p.program)
                    .count();
                let per_month = if months > 0.0 {
                    responses as f64 / months
                } else {
                    0.0
                };
                ProgramYield {
                    program: p.program,
                    rate: p.rate,
                    desired_responses_per_month: p.desired_responses,
                    sends,
                    responses,
                    responses_per_month: per_month,
                    gap: per_month - f64::from(p.desired_responses),
                }
            })
            .collect()
    }

    pub fn sends_on(&self, channel: Channel) -> impl Iterator<Item = &SendEntry> {
        self.sends.iter().filter(move |s| s.channel == channel)
    }

    /// Exhaustive cool-off audit, one report per channel. Each channel keeps
    /// its own ledger, so pairs across channels are not checked.
    pub fn audit(&self, policy: &CoolOffPolicy) -> BTreeMap<Channel, AuditReport> {
        [Channel::Email, Channel::InProduct]
            .into_iter()
            .map(|c| {
                let sends = self.sends_on(c).map(|s| SendRecord {
                    member: s.member,
                    program: s.program,
                    day: s.day,
                });
                (c, audit_sends(sends, policy))
            })
            .collect()
    }

    /// Responses without a send to the same member, program and day on the same channel.
    pub fn orphan_responses(&self) -> Vec<&ResponseEntry> {
        let sends: HashSet<(Day, MemberId, ProgramId, Channel)> = self
            .sends
            .iter()
            .map(|s| (s.day, s.member, s.program, s.channel))
            .collect();
        self.responses
            .iter()
            .filter(|r| !sends.contains(&(r.day, r.member, r.program, r.channel)))
            .collect()
    }

    /// Responses matching `keep`, joined to member covariates. With `pooled`
    /// every response is filed under the single country `ALL`.
    pub fn response_set(
        &self,
        population: &SyntheticPopulation,
        pooled: bool,
        mut keep: impl FnMut(&ResponseEntry) -> bool,
    ) -> Result<ResponseSet, SimError> {
        let mut out = Vec::new();
        for r in self.responses.iter().filter(|r| keep(r)) {
            let m = population
                .member(r.member)
                .ok_or(SimError::UnknownMember(r.member))?;
            let country = if pooled {
                super::POOLED
            } else {
                population.country_name(m)
            };
            out.push(
                Response::new(r.member, r.score, country, m.covariates())?.with_weight(r.weight),
            );
        }
        Ok(ResponseSet::new(SyntheticPopulation::schema(), out)?)
    }
}

fn bucket_index(
    population: &SyntheticPopulation,
    ring: &crate::ring::Ring,
) -> (Vec<u32>, Vec<Vec<usize>>) {
    let b = ring.layout.buckets() as usize;
    let mut of = Vec::with_capacity(population.len());
    let mut members = vec![Vec::new(); b + 1];
    for (i, m) in population.members.iter().enumerate() {
        let k = m.bucket(ring).get();
        of.push(k);
        members[k as usize].push(i);
    }
    (of, members)
}

struct Recorder<'a> {
    config: &'a RunConfig,
    population: &'a SyntheticPopulation,
    log: SurveyLog,
}

impl Recorder<'_> {
    fn send(
        &mut self,
        ledger: &mut CoolOffLedger,
        member: MemberId,
        program: ProgramId,
        channel: Channel,
        day: Day,
        weight: f64,
    ) -> Result<(), SimError> {
        if !ledger.is_clear(member, program, day, &self.config.cool_off) {
            return Err(SimError::Invariant(format!(
                "send to member {member} for program {program} on day {day} ({}) breaks cool-off",
                channel.as_str()
            )));
        }
        ledger.record_sent(member, program, day)?;
        self.log.sends.push(SendEntry {
            day,
            member,
            program,
            channel,
            weight,
        });
        if let Some(score) = self.simulate_response(member, program, channel, day) {
            self.log.responses.push(ResponseEntry {
                day,
                member,
                program,
                channel,
                score,
                weight,
            });
        }
        Ok(())
    }

    /// Latent answer first, then whether the member responds at all.
    fn simulate_response(
        &self,
        member: MemberId,
        program: ProgramId,
        channel: Channel,
        day: Day,
    ) -> Option<u8> {
        let m = self.population.member(member)?;
        let spec = &self.population.spec;
        let keys = [
            self.config.seed,
            u64::from(program.0),
            u64::from(day),
            channel.key(),
        ];
        let class = self
            .population
            .latent_class(m, &keys, self.config.shift_on(day));
        let mut propensity = spec.response_propensity(&m.segment);
        if class == NpsClass::Detractor {
            propensity *= spec.response.detractor_multiplier;
        }
        let mut rk = vec![member.0];
        rk.extend_from_slice(&keys);
        if !keyed_bernoulli(spec.seed, Stream::Response, &rk, propensity) {
            return None;
        }
        let (low, span) = match class {
            NpsClass::Promoter => (9, 2),
            NpsClass::Passive => (7, 2),
            NpsClass::Detractor => (0, 7),
        };
        rk.push(0x5C0E);
        Some(low + (keyed_u64(spec.seed, Stream::Score, &rk) % span) as u8)
    }
}

/// Simulates `config.horizon_days` days.
///
/// Each day, in order: the email ring rotates and the rNPS bucket's eligible
/// members are surveyed; MoT programs sample their triggerers from the MoT
/// pool and overlaps are resolved; the in-product ring (weekly) shows its
/// survey to active members of the eligible bucket. Email and in-product keep
/// separate cool-off ledgers.
pub fn run(config: &RunConfig, population: &SyntheticPopulation) -> Result<SurveyLog, SimError> {
    config.validate(&population.spec)?;
    let spec = &population.spec;
    let email = config.email_ring.ring();
    let in_product = config.in_product_ring.ring();
    let (email_bucket, email_members) = bucket_index(population, &email);
    let (_, in_product_members) = bucket_index(population, &in_product);
    let plan = {
        let mut p = config.mot.clone();
        p.seed ^= config.seed;
        p
    };
    let programs: Vec<ProgramId> = plan.programs.iter().map(|p| p.program).collect();

    let mut email_ledger = CoolOffLedger::new();
    let mut in_product_ledger = CoolOffLedger::new();
    let mut rec = Recorder {
        config,
        population,
        log: SurveyLog {
            horizon_days: config.horizon_days,
            ..SurveyLog::default()
        },
    };
    let mut seen = HashSet::new();
    let mut month = None;
    let mut previous_triggers: Vec<(MemberId, ProgramId)> = Vec::new();
    let mut last_in_product_tick = None;

    for day in 0..config.horizon_days {
        let date = email.layout.epoch() + Days::new(u64::from(day));
        if month != Some((date.year(), date.month())) {
            month = Some((date.year(), date.month()));
            seen.clear();
        }

        let assignment = email.assignment_on_day(day);
        let rnps_bucket = assignment.rnps_bucket();
        rec.log.ring_states.push(RingState {
            day,
            channel: Channel::Email,
            tick: assignment.tick,
            bucket: rnps_bucket,
        });
        for &i in &email_members[rnps_bucket.get() as usize] {
            let m = &population.members[i];
            if !m.active_within(
                spec,
                i64::from(day),
                i64::from(config.rnps_activity_lookback_days),
            ) {
                continue;
            }
            if email_ledger.is_clear(m.id, config.rnps_program, day, &config.cool_off) {
                rec.send(
                    &mut email_ledger,
                    m.id,
                    config.rnps_program,
                    Channel::Email,
                    day,
                    1.0,
                )?;
            }
        }

        let mut pool = vec![false; email.layout.buckets() as usize + 1];
        for b in mot_pool(&email.layout, assignment.tick) {
            pool[b.get() as usize] = true;
        }
        let triggers: Vec<(MemberId, ProgramId)> = population
            .members
            .iter()
            .filter(|m| m.is_active(spec, i64::from(day)))
            .flat_map(|m| {
                programs
                    .iter()
                    .filter(|&&p| m.triggered(spec, p, i64::from(day)))
                    .map(move |&p| (m.id, p))
            })
            .collect();
        let picked = {
            let eligible = |m: MemberId, p: ProgramId, d: Day| {
                pool[email_bucket[(m.0 - 1) as usize] as usize]
                    && email_ledger.is_clear(m, p, d, &config.cool_off)
            };
            match plan.mode {
                SamplingMode::Ftt => ftt_candidates(&triggers, day, &plan, &mut seen, eligible),
                SamplingMode::Srs => srs_candidates(&previous_triggers, day, &plan, eligible),
            }
        };
        if picked.values().any(|s| !s.is_empty()) {
            let counts = SelectionCounts::from_selections(&picked);
            let resolution = resolve_overlaps(&picked, &counts, plan.seed, u64::from(day))?;
            for (&member, r) in &resolution.members {
                rec.send(
                    &mut email_ledger,
                    member,
                    r.assigned,
                    Channel::Email,
                    day,
                    r.weight,
                )?;
            }
        }
        previous_triggers = triggers;

        let ia = in_product.assignment_on_day(day);
        let eligible_bucket = ia.rnps_bucket();
        if last_in_product_tick != Some(ia.tick) {
            last_in_product_tick = Some(ia.tick);
            rec.log.ring_states.push(RingState {
                day,
                channel: Channel::InProduct,
                tick: ia.tick,
                bucket: eligible_bucket,
            });
        }
        let program = config.in_product.program;
        for &i in &in_product_members[eligible_bucket.get() as usize] {
            let m = &population.members[i];
            if m.is_active(spec, i64::from(day))
                && in_product_ledger.is_clear(m.id, program, day, &config.cool_off)
                && keyed_bernoulli(
                    config.seed,
                    Stream::Selection,
                    &[m.id.0, u64::from(program.0), u64::from(day)],
                    config.in_product.show_probability,
                )
            {
                rec.send(
                    &mut in_product_ledger,
                    m.id,
                    program,
                    Channel::InProduct,
                    day,
                    1.0,
                )?;
            }
        }
    }
    Ok(rec.log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_population, PopulationSpec};

    fn small_run(days: u32) -> (RunConfig, SyntheticPopulation, SurveyLog) {
        let pop = generate_population(&PopulationSpec {
            size: 3000,
            ..PopulationSpec::default()
        })
        .unwrap();
        let cfg = RunConfig {
            horizon_days: days,
            ..RunConfig::default()
        };
        let log = run(&cfg, &pop).unwrap();
        (cfg, pop, log)
    }

    #[test]
    fn rnps_sends_come_from_the_day_bucket() {
        let (cfg, pop, log) = small_run(60);
        let ring = cfg.email_ring.ring();
        for s in log.sends.iter().filter(|s| s.program == cfg.rnps_program) {
            let expected = (s.day % ring.layout.buckets()) + 1;
            assert_eq!(pop.member(s.member).unwrap().bucket(&ring).get(), expected);
        }
        assert!(log.sends.iter().any(|s| s.program == cfg.rnps_program));
    }

    #[test]
    fn reproducible_and_clean() {
        let (cfg, pop, log) = small_run(120);
        assert_eq!(run(&cfg, &pop).unwrap(), log);
        assert!(log.audit(&cfg.cool_off).values().all(AuditReport::is_clean));
        assert!(log.orphan_responses().is_empty());
        assert!(!log.responses.is_empty());
    }

    #[test]
    fn in_product_bucket_rotates_weekly() {
        let (_, _, log) = small_run(70);
        let states: Vec<&RingState> = log
            .ring_states
            .iter()
            .filter(|s| s.channel == Channel::InProduct)
            .collect();
        assert_eq!(states.len(), 10);
        for pair in states.windows(2) {
            assert_eq!(pair[1].day - pair[0].day, 7);
            assert_ne!(pair[1].bucket, pair[0].bucket);
        }
    }

    #[test]
    fn mot_yield_counts_program_volume() {
        let (cfg, _, log) = small_run(365);
        let yields = log.mot_yield(&cfg);
        assert_eq!(yields.len(), cfg.mot.programs.len());
        for y in &yields {
            let responses = log
                .responses
                .iter()
                .filter(|r| r.program == y.program)
                .count();
            assert_eq!(y.responses, responses);
            let months = 365.0 * 12.0 / 365.25;
            assert!((y.responses_per_month - responses as f64 / months).abs() < 1e-9);
            assert!(
                (y.gap - (y.responses_per_month - f64::from(y.desired_responses_per_month))).abs()
                    < 1e-12
            );
        }
    }
}
