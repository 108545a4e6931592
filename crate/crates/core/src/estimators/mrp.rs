//! Propensity models and post-stratified MRP estimates.
//!
//! Two independent binary logits are fitted on the respondents: promoter vs.
//! rest (`p(z)`) and detractor vs. rest (`q(z)`). The estimate for a country
//! averages `p(z) - q(z)` over the population cells, weighted by cell count, and
//! scales it to the NPS range. The hierarchical normal prior on the slopes is
//! realized as a ridge penalty with a shared strength chosen by cross-validated
//! deviance.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::logistic::{sigmoid, FitOptions, LogisticFit, LogisticProblem};
use super::{EstimateError, NpsClass, Population, ResponseSet, Schema, VariableKind};
use crate::draw::{keyed_u64, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Term {
    Intercept,
    /// Standardized continuous column.
    Numeric {
        column: usize,
        name: String,
        center: f64,
        scale: f64,
    },
    /// 1 when the categorical column equals `level`.
    Indicator {
        column: usize,
        name: String,
        level: i64,
    },
}

impl Term {
    pub fn label(&self) -> String {
        match self {
            Term::Intercept => "(intercept)".to_string(),
            Term::Numeric { name, .. } => name.clone(),
            Term::Indicator { name, level, .. } => format!("{name}={level}"),
        }
    }
}

/// How covariate vectors become model rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub variables: Vec<String>,
    pub terms: Vec<Term>,
}

impl DesignSpec {
    /// Intercept plus one block per variable: a standardized column for a
    /// continuous variable, treatment-coded indicators (first level as
    /// reference) for a categorical one. Levels and scaling come from the
    /// population so every cell can be predicted.
    pub fn main_effects(
        population: &Population,
        variables: &[&str],
    ) -> Result<Self, EstimateError> {
        let schema = &population.schema;
        let mut terms = vec![Term::Intercept];
        for name in variables {
            let column = schema.index_of(name)?;
            match schema.kind(column) {
                VariableKind::Categorical => {
                    let levels: BTreeSet<i64> = population
                        .cells
                        .iter()
                        .map(|c| c.covariates[column].round() as i64)
                        .collect();
                    for &level in levels.iter().skip(1) {
                        terms.push(Term::Indicator {
                            column,
                            name: name.to_string(),
                            level,
                        });
                    }
                }
                VariableKind::Continuous => {
                    let (mut sw, mut swx, mut swxx) = (0.0, 0.0, 0.0);
                    for c in &population.cells {
                        let x = c.covariates[column];
                        sw += c.count;
                        swx += c.count * x;
                        swxx += c.count * x * x;
                    }
                    let center = if sw > 0.0 { swx / sw } else { 0.0 };
                    let var = if sw > 0.0 {
                        swxx / sw - center * center
                    } else {
                        0.0
                    };
                    let scale = if var > 1e-12 { var.sqrt() } else { 1.0 };
                    terms.push(Term::Numeric {
                        column,
                        name: name.to_string(),
                        center,
                        scale,
                    });
                }
            }
        }
        Ok(DesignSpec {
            variables: variables.iter().map(|s| s.to_string()).collect(),
            terms,
        })
    }

    pub fn row(&self, covariates: &[f64]) -> Vec<f64> {
        self.terms
            .iter()
            .map(|t| match t {
                Term::Intercept => 1.0,
                Term::Numeric {
                    column,
                    center,
                    scale,
                    ..
                } => (covariates[*column] - center) / scale,
                Term::Indicator { column, level, .. } => {
                    if covariates[*column].round() as i64 == *level {
                        1.0
                    } else {
                        0.0
                    }
                }
            })
            .collect()
    }

    pub fn labels(&self) -> Vec<String> {
        self.terms.iter().map(Term::label).collect()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Range of covariate values seen while fitting.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Support {
    pub levels: BTreeMap<usize, BTreeSet<i64>>,
    pub ranges: BTreeMap<usize, (f64, f64)>,
}

impl Support {
    fn observe(design: &DesignSpec, schema: &Schema, covariates: &[f64], support: &mut Support) {
        for name in &design.variables {
            let Ok(col) = schema.index_of(name) else {
                continue;
            };
            let v = covariates[col];
            match schema.kind(col) {
                VariableKind::Categorical => {
                    support
                        .levels
                        .entry(col)
                        .or_default()
                        .insert(v.round() as i64);
                }
                VariableKind::Continuous => {
                    let r = support.ranges.entry(col).or_insert((v, v));
                    r.0 = r.0.min(v);
                    r.1 = r.1.max(v);
                }
            }
        }
    }

    pub fn contains(&self, covariates: &[f64]) -> bool {
        self.levels
            .iter()
            .all(|(&c, levels)| levels.contains(&(covariates[c].round() as i64)))
            && self
                .ranges
                .iter()
                .all(|(&c, &(lo, hi))| covariates[c] >= lo && covariates[c] <= hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    pub design: DesignSpec,
    pub promoter: LogisticFit,
    pub detractor: LogisticFit,
    pub lambda: f64,
    pub support: Support,
    pub respondents: usize,
}

impl PropensityModel {
    /// `p(z)`: promoter propensity.
    pub fn promoter_propensity(&self, covariates: &[f64]) -> f64 {
        self.promoter.predict(&self.design.row(covariates))
    }

    /// `q(z)`: detractor propensity.
    pub fn detractor_propensity(&self, covariates: &[f64]) -> f64 {
        self.detractor.predict(&self.design.row(covariates))
    }
}

fn training_data(
    responses: &ResponseSet,
    design: &DesignSpec,
) -> (Vec<Vec<f64>>, Vec<bool>, Vec<bool>, Vec<f64>) {
    let rows = responses
        .responses
        .iter()
        .map(|r| design.row(&r.covariates))
        .collect();
    let promoters = responses
        .responses
        .iter()
        .map(|r| r.class() == NpsClass::Promoter)
        .collect();
    let detractors = responses
        .responses
        .iter()
        .map(|r| r.class() == NpsClass::Detractor)
        .collect();
    let weights = responses.responses.iter().map(|r| r.weight).collect();
    (rows, promoters, detractors, weights)
}

/// Fits the promoter and detractor models on `responses` (one country).
pub fn fit_propensity(
    responses: &ResponseSet,
    design: &DesignSpec,
    lambda: f64,
) -> Result<PropensityModel, EstimateError> {
    let (rows, promoters, detractors, weights) = training_data(responses, design);
    let opts = FitOptions::default();
    let promoter = LogisticProblem::new(&rows, &promoters, Some(&weights), lambda)?.fit(&opts)?;
    let detractor = LogisticProblem::new(&rows, &detractors, Some(&weights), lambda)?.fit(&opts)?;
    let mut support = Support::default();
    for r in &responses.responses {
        Support::observe(design, &responses.schema, &r.covariates, &mut support);
    }
    Ok(PropensityModel {
        design: design.clone(),
        promoter,
        detractor,
        lambda,
        support,
        respondents: responses.responses.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrpEstimate {
    pub nps: f64,
    pub population: f64,
    pub cells: usize,
    /// Cells whose covariates were never seen among the respondents.
    pub out_of_support_cells: usize,
    /// Cells where `p(z) + q(z) > 1`.
    pub incoherent_cells: usize,
}

/// `(100 / N_c) Σ_cells count · (p(z) - q(z))` over the country's population cells.
pub fn mrp_estimate(
    model: &PropensityModel,
    population: &Population,
    country: &str,
) -> Result<MrpEstimate, EstimateError> {
    let mut total = 0.0;
    let mut acc = 0.0;
    let (mut cells, mut out_of_support, mut incoherent) = (0, 0, 0);
    for cell in population.for_country(country) {
        if cell.count <= 0.0 {
            continue;
        }
        let row = model.design.row(&cell.covariates);
        let p = model.promoter.predict(&row);
        let q = model.detractor.predict(&row);
        if p + q > 1.0 {
            incoherent += 1;
        }
        if !model.support.contains(&cell.covariates) {
            out_of_support += 1;
        }
        acc += cell.count * (p - q).clamp(-1.0, 1.0);
        total += cell.count;
        cells += 1;
    }
    if total <= 0.0 {
        return Err(EstimateError::EmptyPopulation(country.to_string()));
    }
    Ok(MrpEstimate {
        nps: 100.0 * acc / total,
        population: total,
        cells,
        out_of_support_cells: out_of_support,
        incoherent_cells: incoherent,
    })
}

pub const DEFAULT_LAMBDA_GRID: [f64; 6] = [1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaChoice {
    pub lambda: f64,
    /// (lambda, summed held-out deviance of both models over all datasets).
    pub path: Vec<(f64, f64)>,
}

fn fold_of(member: u64, folds: usize) -> usize {
    (keyed_u64(0x5EED, Stream::Generic, &[member]) % folds as u64) as usize
}

fn held_out_deviance(fit: &LogisticFit, rows: &[Vec<f64>], y: &[bool], w: &[f64]) -> f64 {
    rows.iter()
        .zip(y)
        .zip(w)
        .map(|((row, &yi), &wi)| {
            let p = sigmoid(fit.linear_predictor(row)).clamp(1e-15, 1.0 - 1e-15);
            -2.0 * wi * if yi { p.ln() } else { (1.0 - p).ln() }
        })
        .sum()
}

/// Shared ridge strength for several datasets (typically one per country),
/// chosen by `folds`-fold cross-validated deviance of both models.
pub fn choose_lambda(
    datasets: &[&ResponseSet],
    design: &DesignSpec,
    grid: &[f64],
    folds: usize,
) -> Result<LambdaChoice, EstimateError> {
    if grid.is_empty() || folds < 2 {
        return Err(EstimateError::InvalidLambda(f64::NAN));
    }
    let opts = FitOptions::default();
    let prepared: Vec<_> = datasets
        .iter()
        .map(|d| {
            let (rows, pro, det, w) = training_data(d, design);
            let fold: Vec<usize> = d
                .responses
                .iter()
                .map(|r| fold_of(r.member.0, folds))
                .collect();
            (rows, pro, det, w, fold)
        })
        .collect();
    let mut path = Vec::with_capacity(grid.len());
    let mut last_error = None;
    for &lambda in grid {
        let mut deviance = 0.0;
        'outer: for (rows, pro, det, w, fold) in &prepared {
            for k in 0..folds {
                let pick = |train: bool| -> (Vec<Vec<f64>>, Vec<bool>, Vec<bool>, Vec<f64>) {
                    let mut out = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
                    for i in 0..rows.len() {
                        if (fold[i] != k) == train {
                            out.0.push(rows[i].clone());
                            out.1.push(pro[i]);
                            out.2.push(det[i]);
                            out.3.push(w[i]);
                        }
                    }
                    out
                };
                let (tr_rows, tr_pro, tr_det, tr_w) = pick(true);
                let (te_rows, te_pro, te_det, te_w) = pick(false);
                if tr_rows.is_empty() || te_rows.is_empty() {
                    continue;
                }
                let fits = LogisticProblem::new(&tr_rows, &tr_pro, Some(&tr_w), lambda)
                    .and_then(|p| p.fit(&opts))
                    .and_then(|fp| {
                        let fd = LogisticProblem::new(&tr_rows, &tr_det, Some(&tr_w), lambda)?
                            .fit(&opts)?;
                        Ok((fp, fd))
                    });
                match fits {
                    Ok((fp, fd)) => {
                        deviance += held_out_deviance(&fp, &te_rows, &te_pro, &te_w)
                            + held_out_deviance(&fd, &te_rows, &te_det, &te_w);
                    }
                    Err(e) => {
                        last_error = Some(e);
                        deviance = f64::INFINITY;
                        break 'outer;
                    }
                }
            }
        }
        path.push((lambda, deviance));
    }
    let best = path
        .iter()
        .copied()
        .filter(|(_, d)| d.is_finite())
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| last_error.unwrap_or(EstimateError::EmptyInput))?;
    Ok(LambdaChoice {
        lambda: best.0,
        path,
    })
}
