//! Per-country adjustment reports and two-survey comparison.

use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::mrp::{choose_lambda, fit_propensity, mrp_estimate, DesignSpec, DEFAULT_LAMBDA_GRID};
use super::selection::{select_weighting_variables, stepwise_select, Criterion};
use super::weighting::Z_95;
use super::{
    build_strata, unadjusted, weighting_adjust, Diagnostic, EstimateError, Population, ResponseSet,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdjustOptions {
    /// Fixed weighting variables; when absent they are chosen from `candidates`.
    pub weighting_variables: Option<Vec<String>>,
    /// Candidate pool for variable selection; empty means every covariate.
    pub candidates: Vec<String>,
    pub max_weighting_variables: usize,
    pub mrp: bool,
    /// Fixed MRP variables; when absent they come from forward stepwise selection.
    pub mrp_variables: Option<Vec<String>>,
    /// Fixed ridge strength; when absent it is chosen by 5-fold cross-validation.
    pub lambda: Option<f64>,
    pub criterion: Criterion,
}

impl Default for AdjustOptions {
    fn default() -> Self {
        AdjustOptions {
            weighting_variables: None,
            candidates: Vec::new(),
            max_weighting_variables: 2,
            mrp: true,
            mrp_variables: None,
            lambda: None,
            criterion: Criterion::Aic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryAdjustment {
    pub country: String,
    pub respondents: usize,
    pub unadjusted: f64,
    pub unadjusted_margin: f64,
    pub weighting: f64,
    pub weighting_se: f64,
    pub weighting_margin: f64,
    pub weighting_variables: Vec<String>,
    /// False when the chosen weighting shift is within its own margin.
    pub weighting_material: bool,
    pub mrp: Option<f64>,
    pub mrp_variables: Vec<String>,
    pub dropped_population_fraction: f64,
    pub mrp_out_of_support_cells: usize,
    pub mrp_incoherent_cells: usize,
    pub diagnostics: Vec<Diagnostic>,
}

impl CountryAdjustment {
    /// Weighting-adjusted minus unadjusted.
    pub fn weighting_adjustment(&self) -> f64 {
        self.weighting - self.unadjusted
    }

    pub fn mrp_adjustment(&self) -> Option<f64> {
        self.mrp.map(|m| m - self.unadjusted)
    }

    /// MRP minus weighting.
    pub fn diff(&self) -> Option<f64> {
        self.mrp.map(|m| m - self.weighting)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentReport {
    pub countries: Vec<CountryAdjustment>,
    pub lambda: Option<f64>,
    pub notes: Vec<String>,
}

impl AdjustmentReport {
    pub fn country(&self, c: &str) -> Option<&CountryAdjustment> {
        self.countries.iter().find(|x| x.country == c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Flat table, one row per country.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "country",
            "respondents",
            "unadjusted",
            "mrp_adjusted",
            "weighting_adjusted",
            "mrp_adjustment",
            "weighting_adjustment",
            "diff",
            "error_margin",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for c in &self.countries {
            w.write_record([
                c.country.clone(),
                c.respondents.to_string(),
                c.unadjusted.to_string(),
                opt(c.mrp),
                c.weighting.to_string(),
                opt(c.mrp_adjustment()),
                c.weighting_adjustment().to_string(),
                opt(c.diff()),
                c.weighting_margin.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs unadjusted, weighting and (optionally) MRP estimates for every country
/// present in both the responses and the population.
pub fn adjust(
    responses: &ResponseSet,
    population: &Population,
    options: &AdjustOptions,
) -> Result<AdjustmentReport, EstimateError> {
    if responses.schema.names() != population.schema.names() {
        return Err(EstimateError::SchemaMismatch);
    }
    let countries: Vec<String> = responses
        .countries()
        .intersection(&population.countries())
        .cloned()
        .collect();
    if countries.is_empty() {
        return Err(EstimateError::CountryMismatch(
            "no country has both responses and population cells".into(),
        ));
    }
    let mut notes = Vec::new();
    let all_names: Vec<String> = responses
        .schema
        .names()
        .iter()
        .map(|s| s.to_string())
        .collect();
    let candidates: Vec<&str> = if options.candidates.is_empty() {
        all_names.iter().map(String::as_str).collect()
    } else {
        options.candidates.iter().map(String::as_str).collect()
    };

    let mut mrp_setup = None;
    if options.mrp {
        let mrp_vars: Vec<String> = match &options.mrp_variables {
            Some(v) => v.clone(),
            None => {
                stepwise_select(&candidates, responses, population, options.criterion)?.selected
            }
        };
        let refs: Vec<&str> = mrp_vars.iter().map(String::as_str).collect();
        let design = DesignSpec::main_effects(population, &refs)?;
        let subsets: Vec<ResponseSet> = countries.iter().map(|c| responses.subset(c)).collect();
        let lambda = match options.lambda {
            Some(l) => l,
            None => {
                let sets: Vec<&ResponseSet> = subsets.iter().collect();
                let choice = choose_lambda(&sets, &design, &DEFAULT_LAMBDA_GRID, 5)?;
                notes.push(format!(
                    "ridge strength {} chosen by 5-fold cross-validated deviance",
                    choice.lambda
                ));
                choice.lambda
            }
        };
        mrp_setup = Some((mrp_vars, design, subsets, lambda));
    }

    let mut out = Vec::with_capacity(countries.len());
    for (ci, country) in countries.iter().enumerate() {
        let base = unadjusted(responses.for_country(country))?;
        let (vars, material) = match &options.weighting_variables {
            Some(v) => (v.clone(), true),
            None if candidates.len() >= 2 => {
                let choice = select_weighting_variables(
                    &candidates,
                    responses,
                    population,
                    country,
                    options.max_weighting_variables,
                )?;
                (choice.variables, choice.material)
            }
            None => (candidates.iter().map(|s| s.to_string()).collect(), true),
        };
        let refs: Vec<&str> = vars.iter().map(String::as_str).collect();
        let strata = build_strata(responses, population, &refs, country)?;
        let est = weighting_adjust(responses, &strata, country)?;
        let (mut mrp, mut mrp_vars, mut oos, mut incoherent) = (None, Vec::new(), 0, 0);
        if let Some((vars, design, subsets, lambda)) = &mrp_setup {
            let model = fit_propensity(&subsets[ci], design, *lambda)?;
            let m = mrp_estimate(&model, population, country)?;
            mrp = Some(m.nps);
            mrp_vars = vars.clone();
            oos = m.out_of_support_cells;
            incoherent = m.incoherent_cells;
        }
        out.push(CountryAdjustment {
            country: country.clone(),
            respondents: base.respondents,
            unadjusted: base.nps,
            unadjusted_margin: base.margin,
            weighting: est.nps,
            weighting_se: est.se,
            weighting_margin: est.margin,
            weighting_variables: vars,
            weighting_material: material,
            mrp,
            mrp_variables: mrp_vars,
            dropped_population_fraction: est.dropped_fraction,
            mrp_out_of_support_cells: oos,
            mrp_incoherent_cells: incoherent,
            diagnostics: est.diagnostics,
        });
    }
    Ok(AdjustmentReport {
        countries: out,
        lambda: mrp_setup.map(|s| s.3),
        notes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryComparison {
    pub country: String,
    /// `Ŷ_v - Ŷ_t` on the weighting-adjusted estimates.
    pub delta: f64,
    pub se: f64,
    pub t: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub significant: bool,
}

/// Difference of two adjusted estimates with its normal-approximation t statistic.
pub fn compare_estimates(
    country: &str,
    y_t: f64,
    se_t: f64,
    y_v: f64,
    se_v: f64,
) -> CountryComparison {
    let delta = y_v - y_t;
    let se = (se_t * se_t + se_v * se_v).sqrt();
    let t = if delta == 0.0 {
        0.0
    } else if se > 0.0 {
        delta / se
    } else {
        delta.signum() * f64::INFINITY
    };
    CountryComparison {
        country: country.to_string(),
        delta,
        se,
        t,
        ci_low: delta - Z_95 * se,
        ci_high: delta + Z_95 * se,
        significant: t.abs() > Z_95,
    }
}

/// Per-country `Δ̂_c = Ŷ_c(v) - Ŷ_c(t)`. Both reports must cover the same countries.
pub fn compare_surveys(
    report_t: &AdjustmentReport,
    report_v: &AdjustmentReport,
) -> Result<Vec<CountryComparison>, EstimateError> {
    let ct: BTreeSet<&str> = report_t
        .countries
        .iter()
        .map(|c| c.country.as_str())
        .collect();
    let cv: BTreeSet<&str> = report_v
        .countries
        .iter()
        .map(|c| c.country.as_str())
        .collect();
    if ct != cv {
        let only: Vec<&str> = ct.symmetric_difference(&cv).copied().collect();
        return Err(EstimateError::CountryMismatch(format!(
            "countries in only one report: {}",
            only.join(", ")
        )));
    }
    Ok(report_t
        .countries
        .iter()
        .map(|t| {
            let v = report_v.country(&t.country).expect("same country set");
            compare_estimates(
                &t.country,
                t.weighting,
                t.weighting_se,
                v.weighting,
                v.weighting_se,
            )
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comparison_arithmetic() {
        let c = compare_estimates("US", 20.0, 2.0, 30.0, 2.0);
        assert_eq!(c.delta, 10.0);
        assert!((c.t - 10.0 / 8f64.sqrt()).abs() < 1e-12);
        assert!((c.t - 3.5355).abs() < 1e-4);
        assert!(c.significant);
        let same = compare_estimates("US", 20.0, 2.0, 20.0, 2.0);
        assert_eq!((same.delta, same.t, same.significant), (0.0, 0.0, false));
    }
}
