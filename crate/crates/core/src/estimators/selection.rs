//! Choosing adjustment variables.

use serde::{Deserialize, Serialize};

use super::logistic::{FitOptions, LogisticProblem};
use super::mrp::DesignSpec;
use super::{
    build_strata, unadjusted, weighting_adjust, EstimateError, NpsClass, Population, ResponseSet,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinationScore {
    pub variables: Vec<String>,
    pub adjusted: f64,
    pub margin: f64,
    /// `|adjusted - unadjusted|`.
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableChoice {
    pub variables: Vec<String>,
    pub unadjusted: f64,
    pub best: CombinationScore,
    /// False when the winning shift is smaller than its own error margin.
    pub material: bool,
    /// Every evaluated combination, in evaluation (lexicographic) order.
    pub evaluated: Vec<CombinationScore>,
}

fn combinations(items: &[String], k: usize) -> Vec<Vec<String>> {
    fn rec(
        items: &[String],
        k: usize,
        start: usize,
        cur: &mut Vec<String>,
        out: &mut Vec<Vec<String>>,
    ) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            cur.push(items[i].clone());
            rec(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(items, k, 0, &mut Vec::new(), &mut out);
    out
}

/// Evaluates every combination of `max_vars` candidates by weighting
/// adjustment for `country` and keeps the one that moves the estimate most.
/// Ties go to the lexicographically first combination.
pub fn select_weighting_variables(
    candidates: &[&str],
    responses: &ResponseSet,
    population: &Population,
    country: &str,
    max_vars: usize,
) -> Result<VariableChoice, EstimateError> {
    if candidates.len() < 2 || max_vars == 0 {
        return Err(EstimateError::TooFewCandidates(candidates.len()));
    }
    let mut names: Vec<String> = candidates.iter().map(|s| s.to_string()).collect();
    names.sort();
    names.dedup();
    let k = max_vars.min(names.len());
    let base = unadjusted(responses.for_country(country))?.nps;
    let mut evaluated = Vec::new();
    let mut best: Option<CombinationScore> = None;
    for combo in combinations(&names, k) {
        let refs: Vec<&str> = combo.iter().map(String::as_str).collect();
        let strata = build_strata(responses, population, &refs, country)?;
        let est = match weighting_adjust(responses, &strata, country) {
            Ok(e) => e,
            Err(EstimateError::AllStrataEmpty) => continue,
            Err(e) => return Err(e),
        };
        let score = CombinationScore {
            variables: combo,
            adjusted: est.nps,
            margin: est.margin,
            shift: (est.nps - base).abs(),
        };
        if best.as_ref().is_none_or(|b| score.shift > b.shift) {
            best = Some(score.clone());
        }
        evaluated.push(score);
    }
    let best = best.ok_or(EstimateError::AllStrataEmpty)?;
    Ok(VariableChoice {
        variables: best.variables.clone(),
        unadjusted: base,
        material: best.shift >= best.margin,
        best,
        evaluated,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    #[default]
    Aic,
    Bic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepwiseResult {
    pub selected: Vec<String>,
    /// Criterion value after each accepted step, starting from intercept only.
    pub path: Vec<f64>,
}

/// Joint criterion of the promoter and detractor models on `variables`.
/// `None` when either fit fails (separation, singular design).
fn joint_criterion(
    responses: &ResponseSet,
    population: &Population,
    variables: &[&str],
    criterion: Criterion,
) -> Result<Option<f64>, EstimateError> {
    let design = DesignSpec::main_effects(population, variables)?;
    let rows: Vec<Vec<f64>> = responses
        .responses
        .iter()
        .map(|r| design.row(&r.covariates))
        .collect();
    let weights: Vec<f64> = responses.responses.iter().map(|r| r.weight).collect();
    let n = rows.len() as f64;
    let k = design.len() as f64;
    let mut total = 0.0;
    for class in [NpsClass::Promoter, NpsClass::Detractor] {
        let y: Vec<bool> = responses
            .responses
            .iter()
            .map(|r| r.class() == class)
            .collect();
        let problem = LogisticProblem::new(&rows, &y, Some(&weights), 0.0)?;
        let fit = match problem.fit(&FitOptions::default()) {
            Ok(f) => f,
            Err(
                EstimateError::Separable
                | EstimateError::SingularDesign
                | EstimateError::NonConvergence { .. },
            ) => return Ok(None),
            Err(e) => return Err(e),
        };
        let nll = problem.neg_log_likelihood(&fit.coefficients);
        total += 2.0 * nll
            + match criterion {
                Criterion::Aic => 2.0 * k,
                Criterion::Bic => k * n.ln(),
            };
    }
    Ok(Some(total))
}

/// Forward stepwise selection over the promoter and detractor models jointly.
///
/// Starting from the intercept-only models, adds the candidate that lowers the
/// summed criterion the most, until no addition lowers it.
pub fn stepwise_select(
    candidates: &[&str],
    responses: &ResponseSet,
    population: &Population,
    criterion: Criterion,
) -> Result<StepwiseResult, EstimateError> {
    if candidates.is_empty() {
        return Err(EstimateError::TooFewCandidates(0));
    }
    if responses.responses.is_empty() {
        return Err(EstimateError::EmptyInput);
    }
    let mut selected: Vec<&str> = Vec::new();
    let mut remaining: Vec<&str> = candidates.to_vec();
    remaining.sort();
    remaining.dedup();
    let mut current =
        joint_criterion(responses, population, &[], criterion)?.ok_or(EstimateError::Separable)?;
    let mut path = vec![current];
    while !remaining.is_empty() {
        let mut best: Option<(usize, f64)> = None;
        for (i, cand) in remaining.iter().enumerate() {
            let mut trial = selected.clone();
            trial.push(cand);
            if let Some(value) = joint_criterion(responses, population, &trial, criterion)? {
                if best.is_none_or(|(_, b)| value < b) {
                    best = Some((i, value));
                }
            }
        }
        match best {
            Some((i, value)) if value < current => {
                selected.push(remaining.remove(i));
                current = value;
                path.push(value);
            }
            _ => break,
        }
    }
    Ok(StepwiseResult {
        selected: selected.into_iter().map(str::to_string).collect(),
        path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combinations_are_lexicographic() {
        let items: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let combos = combinations(&items, 2);
        assert_eq!(combos, vec![vec!["a", "b"], vec!["a", "c"], vec!["b", "c"]]);
    }
}
