//! Run configuration.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{PopulationSpec, SimError};
use crate::hash_alloc::HashId;
use crate::mot::{ProgramPlan, SamplingMode, SamplingPlan};
use crate::ring::{Cadence, CoolOffPolicy, ProgramId, Ring, RingLayout};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingConfig {
    pub hash_id: HashId,
    pub layout: RingLayout,
}

impl RingConfig {
    pub fn ring(&self) -> Ring {
        Ring::new(self.hash_id.clone(), self.layout.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InProductConfig {
    pub program: ProgramId,
    /// Chance that an active member of the eligible bucket is shown the survey on a given day.
    pub show_probability: f64,
}

/// NPS shift applied to every segment from `day` onwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NpsStep {
    pub day: u32,
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub horizon_days: u32,
    pub seed: u64,
    pub email_ring: RingConfig,
    pub in_product_ring: RingConfig,
    pub rnps_program: ProgramId,
    /// Members must have been active within this many days to get rNPS.
    pub rnps_activity_lookback_days: u32,
    pub mot: SamplingPlan,
    pub in_product: InProductConfig,
    pub cool_off: CoolOffPolicy,
    pub nps_step: Option<NpsStep>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            horizon_days: 365,
            seed: 7,
            email_ring: RingConfig {
                hash_id: HashId::new("email-ring").expect("non-empty"),
                layout: RingLayout::daily_default(),
            },
            in_product_ring: RingConfig {
                hash_id: HashId::new("in-product-ring").expect("non-empty"),
                layout: RingLayout::weekly(13).expect("valid weekly layout"),
            },
            rnps_program: ProgramId(0),
            rnps_activity_lookback_days: 180,
            mot: SamplingPlan {
                programs: vec![
                    ProgramPlan {
                        program: ProgramId(1),
                        rate: 0.05,
                        desired_responses: 1000,
                    },
                    ProgramPlan {
                        program: ProgramId(2),
                        rate: 0.1,
                        desired_responses: 500,
                    },
                ],
                mode: SamplingMode::Ftt,
                seed: 0,
            },
            in_product: InProductConfig {
                program: ProgramId(100),
                show_probability: 0.3,
            },
            cool_off: CoolOffPolicy::default(),
            nps_step: None,
        }
    }
}

impl RunConfig {
    /// Checks the configuration against the population it will run on.
    pub fn validate(&self, spec: &PopulationSpec) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidConfig(msg));
        if self.horizon_days == 0 {
            return bad("horizon_days must be at least 1".into());
        }
        if !self.cool_off.is_valid() {
            return bad(format!("invalid cool-off policy {:?}", self.cool_off));
        }
        if self.email_ring.layout.cadence() != Cadence::Daily {
            return bad("the email ring must rotate daily".into());
        }
        if self.in_product_ring.layout.cadence() != Cadence::Weekly {
            return bad("the in-product ring must rotate weekly".into());
        }
        if self.email_ring.hash_id == self.in_product_ring.hash_id {
            return bad("email and in-product rings need distinct hash ids".into());
        }
        self.mot.validate()?;
        let mut ids = BTreeSet::from([self.rnps_program]);
        if !ids.insert(self.in_product.program) {
            return bad(format!("program {} is used twice", self.in_product.program));
        }
        for p in &self.mot.programs {
            if !ids.insert(p.program) {
                return bad(format!("program {} is used twice", p.program));
            }
            if spec.trigger_rate(p.program).is_none() {
                return bad(format!(
                    "MoT program {} has no trigger rate in the population spec",
                    p.program
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.in_product.show_probability) {
            return bad(format!(
                "in-product show_probability {} is not a probability",
                self.in_product.show_probability
            ));
        }
        if let Some(step) = self.nps_step {
            spec.validate_shift(step.shift)?;
        }
        Ok(())
    }

    /// NPS shift in effect on `day`.
    pub fn shift_on(&self, day: u32) -> f64 {
        match self.nps_step {
            Some(s) if day >= s.day => s.shift,
            _ => 0.0,
        }
    }
}

/// Everything `simulate` needs, as one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub population: PopulationSpec,
    pub run: RunConfig,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default()
            .validate(&PopulationSpec::default())
            .unwrap();
    }

    #[test]
    fn partial_json_fills_defaults() {
        let cfg: EngineConfig =
            serde_json::from_str(r#"{"run": {"horizon_days": 30}, "population": {"size": 10}}"#)
                .unwrap();
        assert_eq!(cfg.run.horizon_days, 30);
        assert_eq!(cfg.population.size, 10);
        assert_eq!(cfg.run.email_ring.layout, RingLayout::daily_default());
    }

    #[test]
    fn unknown_program_is_rejected() {
        let mut cfg = RunConfig::default();
        cfg.mot.programs[0].program = ProgramId(9);
        assert!(matches!(
            cfg.validate(&PopulationSpec::default()),
            Err(SimError::InvalidConfig(_))
        ));
        let cfg = RunConfig {
            horizon_days: 0,
            ..RunConfig::default()
        };
        assert!(cfg.validate(&PopulationSpec::default()).is_err());
    }
}
