//! Post-stratification cells.
//!
//! Categorical variables use their integer level directly. Continuous variables
//! are cut at the population quintiles of the country being adjusted, so the
//! cut points never depend on who responded.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{EstimateError, Population, ResponseSet, VariableKind};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StratumKey(pub Vec<i64>);

impl fmt::Display for StratumKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(i64::to_string).collect();
        write!(f, "({})", parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub key: StratumKey,
    /// `w_{k,c}`: population count of the stratum.
    pub population_weight: f64,
    /// Indices into the response set.
    pub respondents: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
enum Cut {
    Level,
    /// Ascending, deduplicated interior cut points.
    Edges(Vec<f64>),
}

/// Maps a covariate vector to its stratum key for a chosen set of variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Stratifier {
    columns: Vec<(usize, Cut)>,
    pub variables: Vec<String>,
}

/// Weighted quantile edges at `1/q, 2/q, ..., (q-1)/q`.
pub fn quantile_edges(values: &[(f64, f64)], q: usize) -> Vec<f64> {
    let mut sorted: Vec<(f64, f64)> = values.iter().copied().filter(|(_, w)| *w > 0.0).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = sorted.iter().map(|(_, w)| w).sum();
    if sorted.is_empty() || total <= 0.0 {
        return Vec::new();
    }
    let mut edges = Vec::with_capacity(q.saturating_sub(1));
    let mut acc = 0.0;
    let mut i = 0;
    for k in 1..q {
        let target = total * k as f64 / q as f64;
        while i < sorted.len() && acc + sorted[i].1 < target {
            acc += sorted[i].1;
            i += 1;
        }
        let edge = sorted[i.min(sorted.len() - 1)].0;
        edges.push(edge);
    }
    edges.dedup();
    edges
}

impl Stratifier {
    pub fn new(
        population: &Population,
        variables: &[&str],
        country: &str,
    ) -> Result<Self, EstimateError> {
        let mut columns = Vec::with_capacity(variables.len());
        for name in variables {
            let idx = population.schema.index_of(name)?;
            let cut = match population.schema.kind(idx) {
                VariableKind::Categorical => Cut::Level,
                VariableKind::Continuous => {
                    let values: Vec<(f64, f64)> = population
                        .for_country(country)
                        .map(|c| (c.covariates[idx], c.count))
                        .collect();
                    Cut::Edges(quantile_edges(&values, 5))
                }
            };
            columns.push((idx, cut));
        }
        Ok(Stratifier {
            columns,
            variables: variables.iter().map(|s| s.to_string()).collect(),
        })
    }

    pub fn key(&self, covariates: &[f64]) -> StratumKey {
        StratumKey(
            self.columns
                .iter()
                .map(|(idx, cut)| {
                    let v = covariates[*idx];
                    match cut {
                        Cut::Level => v.round() as i64,
                        // values equal to an edge fall in the lower bucket
                        Cut::Edges(edges) => edges.iter().filter(|&&e| v > e).count() as i64,
                    }
                })
                .collect(),
        )
    }
}

/// Strata of one country, keyed on `variables`, with population weights from
/// `population` and respondents from `responses`.
///
/// Responses from other countries are ignored. Respondents whose stratum has
/// no population cell are placed in a stratum with weight 0.
pub fn build_strata(
    responses: &ResponseSet,
    population: &Population,
    variables: &[&str],
    country: &str,
) -> Result<Vec<Stratum>, EstimateError> {
    if responses.schema.names() != population.schema.names() {
        return Err(EstimateError::SchemaMismatch);
    }
    let stratifier = Stratifier::new(population, variables, country)?;
    let mut strata: BTreeMap<StratumKey, Stratum> = BTreeMap::new();
    for cell in population.for_country(country) {
        let key = stratifier.key(&cell.covariates);
        strata
            .entry(key.clone())
            .or_insert_with(|| Stratum {
                key,
                population_weight: 0.0,
                respondents: Vec::new(),
            })
            .population_weight += cell.count;
    }
    for (i, r) in responses.responses.iter().enumerate() {
        if r.country != country {
            continue;
        }
        let key = stratifier.key(&r.covariates);
        strata
            .entry(key.clone())
            .or_insert_with(|| Stratum {
                key,
                population_weight: 0.0,
                respondents: Vec::new(),
            })
            .respondents
            .push(i);
    }
    Ok(strata.into_values().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{PopulationCell, Response, Schema, Variable};
    use crate::hash_alloc::MemberId;

    #[test]
    fn quintiles_of_uniform_grid() {
        let values: Vec<(f64, f64)> = (1..=100).map(|v| (f64::from(v), 1.0)).collect();
        assert_eq!(quantile_edges(&values, 5), vec![20.0, 40.0, 60.0, 80.0]);
        // weights count
        let values = vec![(1.0, 80.0), (2.0, 10.0), (3.0, 10.0)];
        assert_eq!(quantile_edges(&values, 5), vec![1.0]);
    }

    #[test]
    fn strata_collect_weights_and_respondents() {
        let schema = Schema::new(vec![
            Variable {
                name: "seeker".into(),
                kind: VariableKind::Categorical,
            },
            Variable {
                name: "tenure".into(),
                kind: VariableKind::Continuous,
            },
        ]);
        let cells = (0..100)
            .map(|i| PopulationCell {
                country: "US".into(),
                covariates: vec![f64::from(i % 2), f64::from(i)],
                count: 10.0,
            })
            .collect();
        let pop = Population::new(schema.clone(), cells).unwrap();
        let rs = ResponseSet::new(
            schema,
            vec![
                Response::new(MemberId(1), 9, "US", vec![1.0, 3.0]).unwrap(),
                Response::new(MemberId(2), 3, "US", vec![0.0, 95.0]).unwrap(),
                Response::new(MemberId(3), 3, "DE", vec![0.0, 95.0]).unwrap(),
            ],
        )
        .unwrap();
        let strata = build_strata(&rs, &pop, &["seeker"], "US").unwrap();
        assert_eq!(strata.len(), 2);
        assert_eq!(strata[0].population_weight, 500.0);
        assert_eq!(strata[0].respondents, vec![1]);
        let strata = build_strata(&rs, &pop, &["seeker", "tenure"], "US").unwrap();
        assert_eq!(strata.len(), 10);
        let total: f64 = strata.iter().map(|s| s.population_weight).sum();
        assert_eq!(total, 1000.0);
        assert!(build_strata(&rs, &pop, &["nope"], "US").is_err());
    }
}
