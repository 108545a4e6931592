//! Post-stratification weighting adjustment.
//!
//! `Ŷ_c = Σ_k w_k Ŷ_k / Σ_k w_k` over non-empty strata, with the stratified
//! variance `Σ_k (w_k / Σw)² s_k² / m_k` and a 1.96 × SE margin.

use serde::{Deserialize, Serialize};

use super::{EstimateError, Response, ResponseSet, Stratum, StratumKey};

pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    /// Stratum with population weight but no respondents; dropped from both sums.
    EmptyStratum {
        key: StratumKey,
        population_weight: f64,
    },
    /// Respondents fell in a stratum with no population weight; they get weight 0.
    ZeroPopulationWeight { key: StratumKey, respondents: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedEstimate {
    pub nps: f64,
    pub se: f64,
    pub margin: f64,
    pub respondents: usize,
    pub strata_used: usize,
    /// Population weight of strata dropped for having no respondents.
    pub dropped_population_weight: f64,
    /// Fraction of the total population weight that was dropped.
    pub dropped_fraction: f64,
    pub diagnostics: Vec<Diagnostic>,
}

struct StratumMoments {
    mean: f64,
    variance: f64,
    m: usize,
}

fn moments<'a>(responses: impl Iterator<Item = &'a Response>) -> Option<StratumMoments> {
    let mut sw = 0.0;
    let mut swx = 0.0;
    let mut items = Vec::new();
    for r in responses {
        let x = r.coded();
        sw += r.weight;
        swx += r.weight * x;
        items.push((r.weight, x));
    }
    let m = items.len();
    if m == 0 || sw <= 0.0 {
        return None;
    }
    let mean = swx / sw;
    let variance = if m >= 2 {
        let ss: f64 = items.iter().map(|(w, x)| w * (x - mean).powi(2)).sum();
        ss / sw * m as f64 / (m as f64 - 1.0)
    } else {
        0.0
    };
    Some(StratumMoments { mean, variance, m })
}

/// Weighting-adjusted NPS for `country` from prebuilt strata.
pub fn weighting_adjust(
    responses: &ResponseSet,
    strata: &[Stratum],
    country: &str,
) -> Result<WeightedEstimate, EstimateError> {
    let mut diagnostics = Vec::new();
    let mut used: Vec<(f64, StratumMoments)> = Vec::new();
    let mut dropped = 0.0;
    let mut total_weight = 0.0;
    let mut respondents = 0;
    for s in strata {
        total_weight += s.population_weight;
        let members = s.respondents.iter().map(|&i| {
            responses
                .responses
                .get(i)
                .ok_or(EstimateError::RespondentIndex(i))
        });
        let members: Vec<&Response> = members.collect::<Result<_, _>>()?;
        if let Some(r) = members.iter().find(|r| r.country != country) {
            return Err(EstimateError::CountryMismatch(format!(
                "stratum {} holds a response from {} while adjusting {}",
                s.key, r.country, country
            )));
        }
        match moments(members.iter().copied()) {
            None => {
                if s.population_weight > 0.0 {
                    dropped += s.population_weight;
                    diagnostics.push(Diagnostic::EmptyStratum {
                        key: s.key.clone(),
                        population_weight: s.population_weight,
                    });
                }
            }
            Some(mo) => {
                respondents += mo.m;
                if s.population_weight <= 0.0 {
                    diagnostics.push(Diagnostic::ZeroPopulationWeight {
                        key: s.key.clone(),
                        respondents: mo.m,
                    });
                }
                used.push((s.population_weight.max(0.0), mo));
            }
        }
    }
    let w_sum: f64 = used.iter().map(|(w, _)| w).sum();
    if used.is_empty() || w_sum <= 0.0 {
        return Err(EstimateError::AllStrataEmpty);
    }
    let nps: f64 = used.iter().map(|(w, mo)| w * mo.mean).sum::<f64>() / w_sum;
    let var: f64 = used
        .iter()
        .map(|(w, mo)| (w / w_sum).powi(2) * mo.variance / mo.m as f64)
        .sum();
    let se = var.sqrt();
    Ok(WeightedEstimate {
        nps,
        se,
        margin: Z_95 * se,
        respondents,
        strata_used: used.iter().filter(|(w, _)| *w > 0.0).count(),
        dropped_population_weight: dropped,
        dropped_fraction: if total_weight > 0.0 {
            dropped / total_weight
        } else {
            0.0
        },
        diagnostics,
    })
}

/// Sampling-weighted NPS with no post-stratification (one stratum).
pub fn unadjusted<'a>(
    responses: impl IntoIterator<Item = &'a Response>,
) -> Result<WeightedEstimate, EstimateError> {
    let mo = moments(responses.into_iter()).ok_or(EstimateError::EmptyInput)?;
    let se = (mo.variance / mo.m as f64).sqrt();
    Ok(WeightedEstimate {
        nps: mo.mean,
        se,
        margin: Z_95 * se,
        respondents: mo.m,
        strata_used: 1,
        dropped_population_weight: 0.0,
        dropped_fraction: 0.0,
        diagnostics: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{nps_of_scores, Schema};
    use crate::hash_alloc::MemberId;

    fn set(groups: &[(i64, &[u8])]) -> (ResponseSet, Vec<Vec<usize>>) {
        let mut responses = Vec::new();
        let mut idx = Vec::new();
        for (g, scores) in groups {
            let mut members = Vec::new();
            for &s in *scores {
                members.push(responses.len());
                responses.push(
                    Response::new(MemberId(responses.len() as u64), s, "US", vec![*g as f64])
                        .unwrap(),
                );
            }
            idx.push(members);
        }
        (
            ResponseSet::new(Schema::categorical(&["g"]), responses).unwrap(),
            idx,
        )
    }

    #[test]
    fn single_stratum_equals_plain_nps() {
        let scores = [10, 9, 7, 3, 0, 8, 9];
        let (rs, idx) = set(&[(0, &scores)]);
        let strata = vec![Stratum {
            key: StratumKey(vec![0]),
            population_weight: 1.0,
            respondents: idx[0].clone(),
        }];
        let est = weighting_adjust(&rs, &strata, "US").unwrap();
        assert!((est.nps - nps_of_scores(scores).unwrap()).abs() < 1e-12);
        assert!((est.nps - unadjusted(&rs.responses).unwrap().nps).abs() < 1e-12);
    }

    #[test]
    fn empty_strata_are_dropped_and_reported() {
        let (rs, idx) = set(&[(0, &[10, 10]), (1, &[0, 0])]);
        let strata = vec![
            Stratum {
                key: StratumKey(vec![0]),
                population_weight: 1.0,
                respondents: idx[0].clone(),
            },
            Stratum {
                key: StratumKey(vec![1]),
                population_weight: 3.0,
                respondents: idx[1].clone(),
            },
            Stratum {
                key: StratumKey(vec![2]),
                population_weight: 4.0,
                respondents: vec![],
            },
        ];
        let est = weighting_adjust(&rs, &strata, "US").unwrap();
        assert!((est.nps - (100.0 - 300.0) / 4.0).abs() < 1e-12);
        assert_eq!(est.dropped_population_weight, 4.0);
        assert_eq!(est.dropped_fraction, 0.5);
        assert_eq!(est.diagnostics.len(), 1);
        // zero within-stratum variance
        assert_eq!(est.se, 0.0);
    }

    #[test]
    fn zero_weight_stratum_warns() {
        let (rs, idx) = set(&[(0, &[10, 3]), (1, &[0, 0])]);
        let strata = vec![
            Stratum {
                key: StratumKey(vec![0]),
                population_weight: 2.0,
                respondents: idx[0].clone(),
            },
            Stratum {
                key: StratumKey(vec![1]),
                population_weight: 0.0,
                respondents: idx[1].clone(),
            },
        ];
        let est = weighting_adjust(&rs, &strata, "US").unwrap();
        assert_eq!(est.nps, 0.0);
        assert!(matches!(
            est.diagnostics[0],
            Diagnostic::ZeroPopulationWeight { respondents: 2, .. }
        ));
    }

    #[test]
    fn all_empty_is_an_error() {
        let (rs, _) = set(&[(0, &[10])]);
        let strata = vec![Stratum {
            key: StratumKey(vec![0]),
            population_weight: 1.0,
            respondents: vec![],
        }];
        assert_eq!(
            weighting_adjust(&rs, &strata, "US"),
            Err(EstimateError::AllStrataEmpty)
        );
    }

    #[test]
    fn variance_formula() {
        // stratum A: {100, -100}, s^2 = 20000, m = 2; stratum B: {100, 100, 0}, mean 200/3
        let (rs, idx) = set(&[(0, &[10, 0]), (1, &[10, 10, 7])]);
        let strata = vec![
            Stratum {
                key: StratumKey(vec![0]),
                population_weight: 1.0,
                respondents: idx[0].clone(),
            },
            Stratum {
                key: StratumKey(vec![1]),
                population_weight: 3.0,
                respondents: idx[1].clone(),
            },
        ];
        let est = weighting_adjust(&rs, &strata, "US").unwrap();
        let mean_b: f64 = 200.0 / 3.0;
        let s2_b = (2.0 * (100.0 - mean_b).powi(2) + mean_b.powi(2)) / 2.0;
        let var = (0.25f64).powi(2) * 20000.0 / 2.0 + (0.75f64).powi(2) * s2_b / 3.0;
        assert!((est.nps - 0.75 * mean_b).abs() < 1e-12);
        assert!((est.se - var.sqrt()).abs() < 1e-12);
        assert!((est.margin - 1.96 * var.sqrt()).abs() < 1e-12);
    }
}
