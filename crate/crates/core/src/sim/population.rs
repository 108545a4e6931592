//! Synthetic member population.
//!
//! Attributes are drawn once per member. Activity and trigger calendars are not
//! stored: `is_active` and `triggered` recompute them from keyed draws, so a
//! member's calendar is a pure function of (spec seed, member id, day).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::draw::{keyed_bernoulli, keyed_u64, keyed_unit, Stream};
use crate::estimators::{NpsClass, Population, PopulationCell, Schema, Variable, VariableKind};
use crate::hash_alloc::{BucketIndex, HashId, MemberId};
use crate::ring::{ProgramId, Ring};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountryShare {
    pub name: String,
    pub fraction: f64,
    /// Added to the segment NPS, in points.
    #[serde(default)]
    pub nps_shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivityLevel {
    pub name: String,
    pub fraction: f64,
    pub daily_active_probability: f64,
    #[serde(default = "unit")]
    pub response_multiplier: f64,
    #[serde(default)]
    pub nps_shift: f64,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerRate {
    pub program: ProgramId,
    /// Probability of at least one trigger on a day the member is active.
    pub probability_per_active_day: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResponseModel {
    pub base: f64,
    pub job_seeking_multiplier: f64,
    pub premium_multiplier: f64,
    /// Extra factor for members whose latent answer is a detractor score.
    /// Anything other than 1 makes nonresponse depend on the outcome itself.
    pub detractor_multiplier: f64,
}

impl Default for ResponseModel {
    fn default() -> Self {
        ResponseModel {
            base: 0.08,
            job_seeking_multiplier: 3.0,
            premium_multiplier: 1.0,
            detractor_multiplier: 1.0,
        }
    }
}

/// Latent trinomial over promoter / passive / detractor. Shifts are in NPS
/// points and move promoter and detractor probabilities by half a shift each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpinionModel {
    pub promoter: f64,
    pub detractor: f64,
    pub job_seeking_shift: f64,
    pub premium_shift: f64,
    pub tenure_shift_per_year: f64,
}

impl Default for OpinionModel {
    fn default() -> Self {
        OpinionModel {
            promoter: 0.45,
            detractor: 0.25,
            job_seeking_shift: -20.0,
            premium_shift: 8.0,
            tenure_shift_per_year: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationSpec {
    pub size: u64,
    pub seed: u64,
    pub countries: Vec<CountryShare>,
    pub job_seeking_fraction: f64,
    pub premium_fraction: f64,
    pub activity_levels: Vec<ActivityLevel>,
    /// Tenure is uniform on whole years `0..=max_tenure_years`.
    pub max_tenure_years: u32,
    pub trigger_rates: Vec<TriggerRate>,
    pub response: ResponseModel,
    pub opinion: OpinionModel,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        let country = |name: &str, fraction, nps_shift| CountryShare {
            name: name.into(),
            fraction,
            nps_shift,
        };
        let level = |name: &str, fraction, p, response_multiplier, nps_shift| ActivityLevel {
            name: name.into(),
            fraction,
            daily_active_probability: p,
            response_multiplier,
            nps_shift,
        };
        PopulationSpec {
            size: 100_000,
            seed: 20240101,
            countries: vec![
                country("BR", 0.2, -5.0),
                country("IN", 0.3, 10.0),
                country("US", 0.5, 0.0),
            ],
            job_seeking_fraction: 0.4,
            premium_fraction: 0.15,
            activity_levels: vec![
                level("dormant", 0.3, 0.004, 0.5, 8.0),
                level("casual", 0.5, 0.15, 1.0, 0.0),
                level("power", 0.2, 0.7, 1.6, -8.0),
            ],
            max_tenure_years: 10,
            trigger_rates: vec![
                TriggerRate {
                    program: ProgramId(1),
                    probability_per_active_day: 0.3,
                },
                TriggerRate {
                    program: ProgramId(2),
                    probability_per_active_day: 0.1,
                },
            ],
            response: ResponseModel::default(),
            opinion: OpinionModel::default(),
        }
    }
}

/// Covariates other than country that jointly determine a member's behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Segment {
    pub country: usize,
    pub job_seeking: bool,
    pub premium: bool,
    pub activity: usize,
    pub tenure_years: u32,
}

fn check_probability(what: &str, p: f64) -> Result<(), SimError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(SimError::InvalidSpec(format!(
            "{what} = {p} is not a probability"
        )))
    }
}

fn check_fractions(what: &str, fractions: impl Iterator<Item = f64>) -> Result<(), SimError> {
    let mut total = 0.0;
    for f in fractions {
        check_probability(what, f)?;
        total += f;
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(SimError::InvalidSpec(format!(
            "{what} fractions sum to {total}, not 1"
        )));
    }
    Ok(())
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.size == 0 {
            return Err(SimError::InvalidSpec("size must be at least 1".into()));
        }
        if self.countries.is_empty() || self.activity_levels.is_empty() {
            return Err(SimError::InvalidSpec(
                "need at least one country and one activity level".into(),
            ));
        }
        check_fractions("country", self.countries.iter().map(|c| c.fraction))?;
        check_fractions(
            "activity level",
            self.activity_levels.iter().map(|a| a.fraction),
        )?;
        check_probability("job_seeking_fraction", self.job_seeking_fraction)?;
        check_probability("premium_fraction", self.premium_fraction)?;
        for a in &self.activity_levels {
            check_probability(
                &format!("{} daily_active_probability", a.name),
                a.daily_active_probability,
            )?;
        }
        let mut programs = std::collections::BTreeSet::new();
        for t in &self.trigger_rates {
            check_probability(
                &format!("program {} trigger rate", t.program),
                t.probability_per_active_day,
            )?;
            if !programs.insert(t.program) {
                return Err(SimError::InvalidSpec(format!(
                    "program {} has two trigger rates",
                    t.program
                )));
            }
        }
        for seg in self.segments() {
            self.check_segment(&seg, 0.0)?;
        }
        Ok(())
    }

    /// Checks that every segment stays a valid trinomial after adding `shift` NPS points.
    pub fn validate_shift(&self, shift: f64) -> Result<(), SimError> {
        self.segments()
            .iter()
            .try_for_each(|s| self.check_segment(s, shift))
    }

    fn check_segment(&self, seg: &Segment, shift: f64) -> Result<(), SimError> {
        let (p, q) = self.opinion_probabilities(seg, shift);
        let label = format!("segment {seg:?}");
        check_probability(&format!("{label} promoter probability"), p)?;
        check_probability(&format!("{label} detractor probability"), q)?;
        if p + q > 1.0 + 1e-12 {
            return Err(SimError::InvalidSpec(format!(
                "{label}: promoter + detractor probability {} > 1",
                p + q
            )));
        }
        let r = self.response_propensity(seg);
        check_probability(&format!("{label} response propensity"), r)?;
        check_probability(
            &format!("{label} detractor response propensity"),
            r * self.response.detractor_multiplier,
        )
    }

    /// Every combination of attribute levels.
    pub fn segments(&self) -> Vec<Segment> {
        let mut out = Vec::new();
        for country in 0..self.countries.len() {
            for job_seeking in [false, true] {
                for premium in [false, true] {
                    for activity in 0..self.activity_levels.len() {
                        for tenure_years in 0..=self.max_tenure_years {
                            out.push(Segment {
                                country,
                                job_seeking,
                                premium,
                                activity,
                                tenure_years,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    /// NPS shift of a segment relative to the base trinomial.
    pub fn segment_shift(&self, seg: &Segment) -> f64 {
        let o = &self.opinion;
        self.countries[seg.country].nps_shift
            + self.activity_levels[seg.activity].nps_shift
            + if seg.job_seeking {
                o.job_seeking_shift
            } else {
                0.0
            }
            + if seg.premium { o.premium_shift } else { 0.0 }
            + o.tenure_shift_per_year * f64::from(seg.tenure_years)
    }

    /// `(promoter, detractor)` probabilities with an extra NPS shift applied.
    pub fn opinion_probabilities(&self, seg: &Segment, extra_shift: f64) -> (f64, f64) {
        let half = (self.segment_shift(seg) + extra_shift) / 200.0;
        (self.opinion.promoter + half, self.opinion.detractor - half)
    }

    /// Expected NPS of a segment.
    pub fn segment_nps(&self, seg: &Segment, extra_shift: f64) -> f64 {
        let (p, q) = self.opinion_probabilities(seg, extra_shift);
        100.0 * (p - q)
    }

    pub fn response_propensity(&self, seg: &Segment) -> f64 {
        let r = &self.response;
        r.base
            * self.activity_levels[seg.activity].response_multiplier
            * if seg.job_seeking {
                r.job_seeking_multiplier
            } else {
                1.0
            }
            * if seg.premium {
                r.premium_multiplier
            } else {
                1.0
            }
    }

    pub fn trigger_rate(&self, program: ProgramId) -> Option<f64> {
        self.trigger_rates
            .iter()
            .find(|t| t.program == program)
            .map(|t| t.probability_per_active_day)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberRecord {
    pub id: MemberId,
    pub segment: Segment,
    /// Bucket per randomization domain, filled by [`SyntheticPopulation::cache_buckets`].
    #[serde(default)]
    pub buckets: BTreeMap<HashId, BucketIndex>,
}

impl MemberRecord {
    /// Whether the member used the product on `day`. Days before the start of
    /// a run are negative.
    pub fn is_active(&self, spec: &PopulationSpec, day: i64) -> bool {
        let p = spec.activity_levels[self.segment.activity].daily_active_probability;
        keyed_bernoulli(spec.seed, Stream::Activity, &[self.id.0, day as u64], p)
    }

    pub fn active_within(&self, spec: &PopulationSpec, day: i64, lookback_days: i64) -> bool {
        (day - lookback_days..day)
            .rev()
            .any(|d| self.is_active(spec, d))
    }

    /// Whether the member triggered `program` on `day`.
    pub fn triggered(&self, spec: &PopulationSpec, program: ProgramId, day: i64) -> bool {
        let Some(rate) = spec.trigger_rate(program) else {
            return false;
        };
        self.is_active(spec, day)
            && keyed_bernoulli(
                spec.seed,
                Stream::Trigger,
                &[self.id.0, u64::from(program.0), day as u64],
                rate,
            )
    }

    pub fn bucket(&self, ring: &Ring) -> BucketIndex {
        self.buckets
            .get(&ring.hash_id)
            .copied()
            .unwrap_or_else(|| ring.bucket(self.id))
    }

    /// Covariates in [`SyntheticPopulation::schema`] order.
    pub fn covariates(&self) -> Vec<f64> {
        let s = &self.segment;
        vec![
            f64::from(u8::from(s.job_seeking)),
            f64::from(u8::from(s.premium)),
            s.activity as f64,
            f64::from(s.tenure_years),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPopulation {
    pub spec: PopulationSpec,
    /// Member `i` has id `i + 1`.
    pub members: Vec<MemberRecord>,
}

fn pick(u: f64, fractions: impl Iterator<Item = f64>) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, f) in fractions.enumerate() {
        acc += f;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Draws `spec.size` members. Deterministic in `spec.seed`.
pub fn generate_population(spec: &PopulationSpec) -> Result<SyntheticPopulation, SimError> {
    spec.validate()?;
    let members = (1..=spec.size)
        .map(|id| {
            let draw = |tag: u64| keyed_unit(spec.seed, Stream::Generic, &[id, tag]);
            let segment = Segment {
                country: pick(draw(1), spec.countries.iter().map(|c| c.fraction)),
                job_seeking: draw(2) < spec.job_seeking_fraction,
                premium: draw(3) < spec.premium_fraction,
                activity: pick(draw(4), spec.activity_levels.iter().map(|a| a.fraction)),
                tenure_years: (keyed_u64(spec.seed, Stream::Generic, &[id, 5])
                    % (u64::from(spec.max_tenure_years) + 1)) as u32,
            };
            MemberRecord {
                id: MemberId(id),
                segment,
                buckets: BTreeMap::new(),
            }
        })
        .collect();
    Ok(SyntheticPopulation {
        spec: spec.clone(),
        members,
    })
}

impl SyntheticPopulation {
    pub const COVARIATES: [&'static str; 4] = ["job_seeking", "premium", "activity", "tenure"];

    pub fn schema() -> Schema {
        Schema::new(vec![
            Variable {
                name: "job_seeking".into(),
                kind: VariableKind::Categorical,
            },
            Variable {
                name: "premium".into(),
                kind: VariableKind::Categorical,
            },
            Variable {
                name: "activity".into(),
                kind: VariableKind::Categorical,
            },
            Variable {
                name: "tenure".into(),
                kind: VariableKind::Continuous,
            },
        ])
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn member(&self, id: MemberId) -> Option<&MemberRecord> {
        let idx = usize::try_from(id.0.checked_sub(1)?).ok()?;
        self.members.get(idx)
    }

    pub fn country_name(&self, member: &MemberRecord) -> &str {
        &self.spec.countries[member.segment.country].name
    }

    /// Stores each member's bucket on `ring` so later lookups skip the digest.
    pub fn cache_buckets(&mut self, ring: &Ring) {
        for m in &mut self.members {
            let b = ring.bucket(m.id);
            m.buckets.insert(ring.hash_id.clone(), b);
        }
    }

    /// Member counts per (country, covariate cell). With `pooled` every member
    /// is reported under the single country `ALL`.
    pub fn population_table(&self, pooled: bool) -> Population {
        let mut cells: BTreeMap<(String, Vec<i64>), f64> = BTreeMap::new();
        for m in &self.members {
            let country = if pooled {
                POOLED.to_string()
            } else {
                self.country_name(m).to_string()
            };
            let key: Vec<i64> = m.covariates().iter().map(|&v| v as i64).collect();
            *cells.entry((country, key)).or_default() += 1.0;
        }
        let cells = cells
            .into_iter()
            .map(|((country, key), count)| PopulationCell {
                country,
                covariates: key.into_iter().map(|v| v as f64).collect(),
                count,
            })
            .collect();
        Population::new(Self::schema(), cells).expect("cells match the schema")
    }

    /// Expected population NPS per country (or pooled) implied by the `PopulationSpec`,
    /// with `extra_shift` NPS points added to every segment.
    pub fn true_nps(&self, country: Option<&str>, extra_shift: f64) -> f64 {
        let mut total = 0.0;
        let mut n = 0.0;
        for m in &self.members {
            if country.is_some_and(|c| c != self.country_name(m)) {
                continue;
            }
            total += self.spec.segment_nps(&m.segment, extra_shift);
            n += 1.0;
        }
        total / n
    }

    /// Latent class of a member's answer to one survey.
    pub fn latent_class(&self, member: &MemberRecord, keys: &[u64], extra_shift: f64) -> NpsClass {
        let (p, q) = self
            .spec
            .opinion_probabilities(&member.segment, extra_shift);
        let mut k = vec![member.id.0];
        k.extend_from_slice(keys);
        let u = keyed_unit(self.spec.seed, Stream::Score, &k);
        if u < p {
            NpsClass::Promoter
        } else if u < p + q {
            NpsClass::Detractor
        } else {
            NpsClass::Passive
        }
    }
}

/// Country label used when all countries are pooled.
pub const POOLED: &str = "ALL";

#[cfg(test)]
mod tests {
    use super::*;

    fn small(size: u64) -> PopulationSpec {
        PopulationSpec {
            size,
            ..PopulationSpec::default()
        }
    }

    #[test]
    fn deterministic() {
        let a = generate_population(&small(500)).unwrap();
        let b = generate_population(&small(500)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn default_spec_is_valid() {
        PopulationSpec::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_fractions_and_trinomials() {
        let mut s = small(10);
        s.countries[0].fraction = 0.5;
        assert!(matches!(s.validate(), Err(SimError::InvalidSpec(_))));
        let mut s = small(10);
        s.opinion.promoter = 0.8;
        assert!(matches!(s.validate(), Err(SimError::InvalidSpec(_))));
        let s = small(10);
        assert!(s.validate_shift(200.0).is_err());
    }

    #[test]
    fn single_segment_population_is_uniform() {
        let spec = PopulationSpec {
            size: 200,
            countries: vec![CountryShare {
                name: "US".into(),
                fraction: 1.0,
                nps_shift: 0.0,
            }],
            job_seeking_fraction: 0.0,
            premium_fraction: 1.0,
            activity_levels: vec![ActivityLevel {
                name: "only".into(),
                fraction: 1.0,
                daily_active_probability: 0.5,
                response_multiplier: 1.0,
                nps_shift: 0.0,
            }],
            max_tenure_years: 0,
            ..PopulationSpec::default()
        };
        let pop = generate_population(&spec).unwrap();
        let first = pop.members[0].segment;
        assert!(pop.members.iter().all(|m| m.segment == first));
    }

    #[test]
    fn segment_nps_adds_shifts() {
        let spec = PopulationSpec::default();
        let seg = Segment {
            country: 2,
            job_seeking: true,
            premium: false,
            activity: 1,
            tenure_years: 4,
        };
        // base 100 * (0.45 - 0.25) = 20, job seeking -20, tenure 4 * 0.5
        assert!((spec.segment_nps(&seg, 0.0) - 2.0).abs() < 1e-12);
        assert!((spec.segment_nps(&seg, 5.0) - 7.0).abs() < 1e-12);
    }

    #[test]
    fn population_table_counts_every_member() {
        let pop = generate_population(&small(2000)).unwrap();
        let table = pop.population_table(false);
        let total: f64 = table.cells.iter().map(|c| c.count).sum();
        assert_eq!(total, 2000.0);
        assert_eq!(pop.population_table(true).countries().len(), 1);
    }
}
