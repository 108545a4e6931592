use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::EstimateError;
use crate::hash_alloc::MemberId;

/// Promoter / passive / detractor class of a 0–10 answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NpsClass {
    Promoter,
    Passive,
    Detractor,
}

impl NpsClass {
    pub fn of(score: u8) -> Result<Self, EstimateError> {
        match score {
            9 | 10 => Ok(NpsClass::Promoter),
            7 | 8 => Ok(NpsClass::Passive),
            0..=6 => Ok(NpsClass::Detractor),
            _ => Err(EstimateError::ScoreOutOfRange(score)),
        }
    }

    /// +100, 0 or -100.
    pub fn coded(self) -> i32 {
        match self {
            NpsClass::Promoter => 100,
            NpsClass::Passive => 0,
            NpsClass::Detractor => -100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableKind {
    /// Integer-coded levels; each level is its own stratum / indicator.
    Categorical,
    /// Bucketized by population quintiles for weighting; used as-is by MRP.
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VariableKind,
}

/// Covariate columns shared by responses and population cells.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Schema {
    pub variables: Vec<Variable>,
}

impl Schema {
    pub fn new(variables: Vec<Variable>) -> Self {
        Schema { variables }
    }

    pub fn categorical(names: &[&str]) -> Self {
        Schema::new(
            names
                .iter()
                .map(|n| Variable {
                    name: (*n).to_string(),
                    kind: VariableKind::Categorical,
                })
                .collect(),
        )
    }

    pub fn index_of(&self, name: &str) -> Result<usize, EstimateError> {
        self.variables
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| EstimateError::UnknownVariable(name.to_string()))
    }

    pub fn kind(&self, index: usize) -> VariableKind {
        self.variables[index].kind
    }

    pub fn names(&self) -> Vec<&str> {
        self.variables.iter().map(|v| v.name.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub member: MemberId,
    pub score: u8,
    pub country: String,
    /// Values in schema order.
    pub covariates: Vec<f64>,
    /// Sampling weight, positive.
    pub weight: f64,
}

impl Response {
    pub fn new(
        member: MemberId,
        score: u8,
        country: impl Into<String>,
        covariates: Vec<f64>,
    ) -> Result<Self, EstimateError> {
        NpsClass::of(score)?;
        Ok(Response {
            member,
            score,
            country: country.into(),
            covariates,
            weight: 1.0,
        })
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    pub fn class(&self) -> NpsClass {
        NpsClass::of(self.score).expect("score validated on construction")
    }

    pub fn coded(&self) -> f64 {
        f64::from(self.class().coded())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResponseSet {
    pub schema: Schema,
    pub responses: Vec<Response>,
}

impl ResponseSet {
    pub fn new(schema: Schema, responses: Vec<Response>) -> Result<Self, EstimateError> {
        for r in &responses {
            if r.covariates.len() != schema.len() {
                return Err(EstimateError::CovariateArity {
                    expected: schema.len(),
                    got: r.covariates.len(),
                });
            }
            if !(r.weight > 0.0 && r.weight.is_finite()) {
                return Err(EstimateError::NonPositiveWeight(r.weight));
            }
            NpsClass::of(r.score)?;
        }
        Ok(ResponseSet { schema, responses })
    }

    pub fn countries(&self) -> BTreeSet<String> {
        self.responses.iter().map(|r| r.country.clone()).collect()
    }

    pub fn for_country<'a>(&'a self, country: &'a str) -> impl Iterator<Item = &'a Response> + 'a {
        self.responses.iter().filter(move |r| r.country == country)
    }

    pub fn subset(&self, country: &str) -> ResponseSet {
        ResponseSet {
            schema: self.schema.clone(),
            responses: self.for_country(country).cloned().collect(),
        }
    }
}

/// A population cell: a covariate combination and how many members share it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationCell {
    pub country: String,
    pub covariates: Vec<f64>,
    pub count: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Population {
    pub schema: Schema,
    pub cells: Vec<PopulationCell>,
}

impl Population {
    pub fn new(schema: Schema, cells: Vec<PopulationCell>) -> Result<Self, EstimateError> {
        for c in &cells {
            if c.covariates.len() != schema.len() {
                return Err(EstimateError::CovariateArity {
                    expected: schema.len(),
                    got: c.covariates.len(),
                });
            }
            if !(c.count >= 0.0 && c.count.is_finite()) {
                return Err(EstimateError::NegativePopulationCount(c.count));
            }
        }
        Ok(Population { schema, cells })
    }

    pub fn countries(&self) -> BTreeSet<String> {
        self.cells.iter().map(|c| c.country.clone()).collect()
    }

    pub fn for_country<'a>(
        &'a self,
        country: &'a str,
    ) -> impl Iterator<Item = &'a PopulationCell> + 'a {
        self.cells.iter().filter(move |c| c.country == country)
    }

    pub fn total(&self, country: &str) -> f64 {
        self.for_country(country).map(|c| c.count).sum()
    }

    /// Merges cells with identical (country, covariates).
    pub fn compacted(&self) -> Population {
        let mut map: std::collections::BTreeMap<(String, Vec<u64>), f64> = Default::default();
        for c in &self.cells {
            let key = (
                c.country.clone(),
                c.covariates.iter().map(|x| x.to_bits()).collect(),
            );
            *map.entry(key).or_insert(0.0) += c.count;
        }
        Population {
            schema: self.schema.clone(),
            cells: map
                .into_iter()
                .map(|((country, bits), count)| PopulationCell {
                    country,
                    covariates: bits.into_iter().map(f64::from_bits).collect(),
                    count,
                })
                .collect(),
        }
    }
}
