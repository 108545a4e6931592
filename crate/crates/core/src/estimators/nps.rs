use serde::{Deserialize, Serialize};

use super::{EstimateError, NpsClass, Response};

/// +100 for 9–10, 0 for 7–8, -100 for 0–6.
pub fn code_response(score: u8) -> Result<i32, EstimateError> {
    NpsClass::of(score).map(NpsClass::coded)
}

/// Percentage of promoters minus percentage of detractors.
pub fn nps(responses: &[Response]) -> Result<f64, EstimateError> {
    nps_of_scores(responses.iter().map(|r| r.score))
}

pub fn nps_of_scores(scores: impl IntoIterator<Item = u8>) -> Result<f64, EstimateError> {
    let (mut promoters, mut detractors, mut n) = (0u64, 0u64, 0u64);
    for s in scores {
        match NpsClass::of(s)? {
            NpsClass::Promoter => promoters += 1,
            NpsClass::Detractor => detractors += 1,
            NpsClass::Passive => {}
        }
        n += 1;
    }
    if n == 0 {
        return Err(EstimateError::EmptyInput);
    }
    Ok(100.0 * (promoters as f64 - detractors as f64) / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonresponseDecomposition {
    pub response_rate: f64,
    pub respondent_mean: f64,
    pub nonrespondent_mean: f64,
    pub population_mean: f64,
    /// `(1 - r)(mu_n - mu_r)`: population mean minus respondent mean.
    pub bias: f64,
}

pub fn nonresponse_bias(
    r: f64,
    mu_r: f64,
    mu_n: f64,
) -> Result<NonresponseDecomposition, EstimateError> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(EstimateError::InvalidResponseRate(r));
    }
    Ok(NonresponseDecomposition {
        response_rate: r,
        respondent_mean: mu_r,
        nonrespondent_mean: mu_n,
        population_mean: r * mu_r + (1.0 - r) * mu_n,
        bias: (1.0 - r) * (mu_n - mu_r),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coding() {
        assert_eq!(code_response(9).unwrap(), 100);
        assert_eq!(code_response(10).unwrap(), 100);
        assert_eq!(code_response(7).unwrap(), 0);
        assert_eq!(code_response(8).unwrap(), 0);
        assert_eq!(code_response(6).unwrap(), -100);
        assert_eq!(code_response(0).unwrap(), -100);
        assert_eq!(code_response(11), Err(EstimateError::ScoreOutOfRange(11)));
    }

    #[test]
    fn nps_examples() {
        assert_eq!(nps_of_scores([9, 10, 10]).unwrap(), 100.0);
        assert_eq!(nps_of_scores([10, 7, 3, 9]).unwrap(), 25.0);
        assert_eq!(nps_of_scores([10, 0]).unwrap(), 0.0);
        assert_eq!(nps_of_scores([]), Err(EstimateError::EmptyInput));
    }

    #[test]
    fn bias_examples() {
        assert_eq!(nonresponse_bias(1.0, 12.0, -40.0).unwrap().bias, 0.0);
        let d = nonresponse_bias(0.5, 20.0, -20.0).unwrap();
        assert_eq!(d.bias, -20.0);
        assert_eq!(d.population_mean, 0.0);
        assert!(nonresponse_bias(0.0, 1.0, 1.0).is_err());
        assert!(nonresponse_bias(1.5, 1.0, 1.0).is_err());
    }
}
