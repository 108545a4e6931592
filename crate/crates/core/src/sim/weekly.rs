//! Weekly weighting-adjusted NPS series.

use serde::{Deserialize, Serialize};

use super::{Channel, SimError, SurveyLog, SyntheticPopulation};
use crate::estimators::{build_strata, weighting_adjust, EstimateError};
use crate::ring::Day;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeeklyOptions {
    pub channel: Channel,
    pub variables: Vec<String>,
    /// Report one series over all countries instead of one per country.
    pub pooled: bool,
    /// Strata with fewer respondents in a week are left out of that week's
    /// estimate and counted in `dropped_fraction`. A stratum holding one or
    /// two respondents has no usable variance estimate, so keeping it makes
    /// the margin too narrow.
    pub min_stratum_respondents: usize,
}

impl Default for WeeklyOptions {
    fn default() -> Self {
        WeeklyOptions {
            channel: Channel::InProduct,
            variables: vec!["activity".into(), "job_seeking".into()],
            pooled: true,
            min_stratum_respondents: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeeklyPoint {
    pub week: u32,
    pub first_day: Day,
    pub country: String,
    pub respondents: usize,
    /// `None` for a week with no usable responses.
    pub nps: Option<f64>,
    pub margin: Option<f64>,
    /// Population share of the strata left out this week.
    pub dropped_fraction: f64,
}

/// Weighting-adjusted NPS for every full week of the log.
pub fn weekly_report(
    log: &SurveyLog,
    population: &SyntheticPopulation,
    options: &WeeklyOptions,
) -> Result<Vec<WeeklyPoint>, SimError> {
    let weeks = log.horizon_days / 7;
    if weeks == 0 {
        return Err(SimError::InvalidConfig(format!(
            "log covers {} days, less than one week",
            log.horizon_days
        )));
    }
    let table = population.population_table(options.pooled);
    let vars: Vec<&str> = options.variables.iter().map(String::as_str).collect();
    let mut out = Vec::new();
    for week in 0..weeks {
        let first_day = week * 7;
        let set = log.response_set(population, options.pooled, |r| {
            r.channel == options.channel && r.day >= first_day && r.day < first_day + 7
        })?;
        for country in table.countries() {
            let respondents = set.for_country(&country).count();
            let mut strata = build_strata(&set, &table, &vars, &country)?;
            for s in &mut strata {
                if s.respondents.len() < options.min_stratum_respondents {
                    s.respondents.clear();
                }
            }
            let (nps, margin, dropped_fraction) = match weighting_adjust(&set, &strata, &country) {
                Ok(e) => (Some(e.nps), Some(e.margin), e.dropped_fraction),
                Err(EstimateError::EmptyInput | EstimateError::AllStrataEmpty) => (None, None, 1.0),
                Err(e) => return Err(e.into()),
            };
            out.push(WeeklyPoint {
                week,
                first_day,
                country,
                respondents,
                nps,
                margin,
                dropped_fraction,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_population, run, PopulationSpec, RunConfig};

    #[test]
    fn single_week_matches_weighting_adjust() {
        let pop = generate_population(&PopulationSpec {
            size: 20_000,
            ..PopulationSpec::default()
        })
        .unwrap();
        let log = run(
            &RunConfig {
                horizon_days: 9,
                ..RunConfig::default()
            },
            &pop,
        )
        .unwrap();
        let options = WeeklyOptions {
            min_stratum_respondents: 0,
            ..WeeklyOptions::default()
        };
        let series = weekly_report(&log, &pop, &options).unwrap();
        assert_eq!(series.len(), 1);

        let set = log
            .response_set(&pop, true, |r| r.channel == Channel::InProduct && r.day < 7)
            .unwrap();
        let table = pop.population_table(true);
        let strata = build_strata(
            &set,
            &table,
            &["activity", "job_seeking"],
            &series[0].country,
        )
        .unwrap();
        let direct = weighting_adjust(&set, &strata, &series[0].country).unwrap();
        assert_eq!(series[0].nps, Some(direct.nps));
        assert_eq!(series[0].margin, Some(direct.margin));
    }

    #[test]
    fn short_log_is_rejected() {
        let pop = generate_population(&PopulationSpec {
            size: 500,
            ..PopulationSpec::default()
        })
        .unwrap();
        let log = run(
            &RunConfig {
                horizon_days: 6,
                ..RunConfig::default()
            },
            &pop,
        )
        .unwrap();
        assert!(weekly_report(&log, &pop, &WeeklyOptions::default()).is_err());
    }
}
