// =============================================================================
// Ridge-penalized binary logistic regression by damped Newton iterations.
// =============================================================================
//
// Objective (weights normalized to mean-per-observation scale):
//
//     f(β) = (1/W) Σ_i w_i [ log(1 + e^{η_i}) - y_i η_i ] + (λ/2) Σ_{j≥1} β_j²
//
// with η = Xβ and W = Σ w_i. The intercept (column 0) is not penalized.
//
//     ∇f = (1/W) Xᵀ diag(w) (μ - y) + λ β̃
//     ∇²f = (1/W) Xᵀ diag(w μ(1-μ)) X + λ Ĩ
//
// Each iteration solves ∇²f · δ = -∇f by Cholesky and halves the step until
// the objective does not increase, so f is non-increasing across iterations.
// Stops once ‖∇f‖ < tolerance, or when the Newton decrement is already below
// rounding noise in f (large n can leave ‖∇f‖ just above a tight tolerance
// with no representable decrease left), or after max_iterations.
// =============================================================================

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::EstimateError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 100,
            gradient_tolerance: 1e-8,
        }
    }
}

/// Row-major design matrix plus 0/1 outcomes and observation weights.
#[derive(Debug, Clone)]
pub struct LogisticProblem {
    x: DMatrix<f64>,
    y: DVector<f64>,
    w: DVector<f64>,
    total_weight: f64,
    lambda: f64,
}

#[inline]
fn log1pexp(eta: f64) -> f64 {
    if eta > 35.0 {
        eta
    } else if eta < -35.0 {
        eta.exp()
    } else {
        eta.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

impl LogisticProblem {
    /// `rows` must all have the same length; column 0 is treated as the intercept.
    pub fn new(
        rows: &[Vec<f64>],
        y: &[bool],
        weights: Option<&[f64]>,
        lambda: f64,
    ) -> Result<Self, EstimateError> {
        let n = rows.len();
        if n == 0 {
            return Err(EstimateError::EmptyInput);
        }
        if y.len() != n || weights.is_some_and(|w| w.len() != n) {
            return Err(EstimateError::DimensionMismatch);
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(EstimateError::InvalidLambda(lambda));
        }
        let p = rows[0].len();
        if p == 0 || rows.iter().any(|r| r.len() != p) {
            return Err(EstimateError::DimensionMismatch);
        }
        let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
        let y = DVector::from_iterator(n, y.iter().map(|&b| if b { 1.0 } else { 0.0 }));
        let w = match weights {
            Some(w) => DVector::from_column_slice(w),
            None => DVector::from_element(n, 1.0),
        };
        if w.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(EstimateError::NonPositiveWeight(
                w.iter()
                    .copied()
                    .find(|v| v.is_nan() || *v < 0.0)
                    .unwrap_or(f64::NAN),
            ));
        }
        let total_weight = w.sum();
        if total_weight <= 0.0 {
            return Err(EstimateError::EmptyInput);
        }
        Ok(LogisticProblem {
            x,
            y,
            w,
            total_weight,
            lambda,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    fn penalty(&self, beta: &DVector<f64>) -> f64 {
        0.5 * self.lambda * beta.iter().skip(1).map(|b| b * b).sum::<f64>()
    }

    /// Weighted negative log-likelihood, summed (not averaged), without penalty.
    pub fn neg_log_likelihood(&self, beta: &[f64]) -> f64 {
        let beta = DVector::from_column_slice(beta);
        let eta = &self.x * &beta;
        eta.iter()
            .zip(self.y.iter())
            .zip(self.w.iter())
            .map(|((&e, &y), &w)| w * (log1pexp(e) - y * e))
            .sum()
    }

    pub fn objective(&self, beta: &[f64]) -> f64 {
        let b = DVector::from_column_slice(beta);
        self.neg_log_likelihood(beta) / self.total_weight + self.penalty(&b)
    }

    pub fn gradient(&self, beta: &[f64]) -> Vec<f64> {
        let b = DVector::from_column_slice(beta);
        self.gradient_vec(&b).iter().copied().collect()
    }

    fn gradient_vec(&self, beta: &DVector<f64>) -> DVector<f64> {
        let eta = &self.x * beta;
        let resid = DVector::from_iterator(
            self.n(),
            eta.iter()
                .zip(self.y.iter())
                .zip(self.w.iter())
                .map(|((&e, &y), &w)| w * (sigmoid(e) - y)),
        );
        let mut g = self.x.tr_mul(&resid) / self.total_weight;
        for j in 1..g.len() {
            g[j] += self.lambda * beta[j];
        }
        g
    }

    fn hessian(&self, beta: &DVector<f64>) -> DMatrix<f64> {
        let eta = &self.x * beta;
        let mut weighted = self.x.clone();
        for (i, &e) in eta.iter().enumerate() {
            let mu = sigmoid(e);
            let s = (self.w[i] * mu * (1.0 - mu) / self.total_weight).sqrt();
            weighted.row_mut(i).scale_mut(s);
        }
        let mut h = weighted.tr_mul(&weighted);
        for j in 1..h.ncols() {
            h[(j, j)] += self.lambda;
        }
        h
    }

    /// Asymptotic covariance of the coefficients on the summed-likelihood scale.
    pub fn covariance(&self, beta: &[f64]) -> Result<Vec<Vec<f64>>, EstimateError> {
        let b = DVector::from_column_slice(beta);
        let h = self.hessian(&b) * self.total_weight;
        let inv = h.try_inverse().ok_or(EstimateError::SingularDesign)?;
        Ok((0..inv.nrows())
            .map(|i| inv.row(i).iter().copied().collect())
            .collect())
    }

    pub fn fit(&self, options: &FitOptions) -> Result<LogisticFit, EstimateError> {
        let p = self.p();
        let mut beta = DVector::zeros(p);
        // start the intercept at the weighted log-odds
        let ybar = self.y.dot(&self.w) / self.total_weight;
        if ybar > 0.0 && ybar < 1.0 {
            beta[0] = (ybar / (1.0 - ybar)).ln();
        }
        let mut f = self.objective(beta.as_slice());
        let mut trace = vec![f];
        let mut g = self.gradient_vec(&beta);
        let mut iterations = 0;
        let mut stalled_at_precision = false;
        while g.norm() >= options.gradient_tolerance && iterations < options.max_iterations {
            iterations += 1;
            let h = self.hessian(&beta);
            let chol = h.cholesky().ok_or(EstimateError::SingularDesign)?;
            let step = chol.solve(&(-&g));
            // Newton decrement: the decrease a full step would give on the quadratic model.
            let decrement = -g.dot(&step) / 2.0;
            let mut t = 1.0;
            let mut improved = false;
            for _ in 0..60 {
                let cand = &beta + &step * t;
                let fc = self.objective(cand.as_slice());
                if fc < f {
                    beta = cand;
                    f = fc;
                    improved = true;
                    break;
                }
                t *= 0.5;
            }
            if !improved {
                // No representable decrease left. If the model predicts a decrease
                // below rounding noise in f, the current point is the optimum.
                stalled_at_precision = decrement <= 1e-12 * (1.0 + f.abs());
                break;
            }
            trace.push(f);
            g = self.gradient_vec(&beta);
        }
        let gradient_norm = g.norm();
        let converged = gradient_norm < options.gradient_tolerance || stalled_at_precision;
        if self.lambda == 0.0 && f < 1e-6 {
            return Err(EstimateError::Separable);
        }
        if !converged {
            return Err(EstimateError::NonConvergence {
                iterations,
                gradient_norm,
            });
        }
        Ok(LogisticFit {
            coefficients: beta.iter().copied().collect(),
            iterations,
            gradient_norm,
            objective_trace: trace,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
    /// Objective after each iteration, starting with the initial point.
    pub objective_trace: Vec<f64>,
}

impl LogisticFit {
    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        self.coefficients.iter().zip(row).map(|(b, x)| b * x).sum()
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        sigmoid(self.linear_predictor(row))
    }
}

/// Convenience wrapper: build the problem and fit it with default options.
pub fn fit_logistic(
    rows: &[Vec<f64>],
    y: &[bool],
    weights: Option<&[f64]>,
    lambda: f64,
) -> Result<LogisticFit, EstimateError> {
    LogisticProblem::new(rows, y, weights, lambda)?.fit(&FitOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intercept_only_recovers_proportion() {
        let rows = vec![vec![1.0]; 1000];
        let y: Vec<bool> = (0..1000).map(|i| i % 10 < 3).collect();
        let fit = fit_logistic(&rows, &y, None, 0.0).unwrap();
        assert!((fit.predict(&[1.0]) - 0.30).abs() < 1e-6);
    }

    #[test]
    fn separable_without_ridge_is_an_error() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![1.0, f64::from(i)]).collect();
        let y: Vec<bool> = (0..40).map(|i| i >= 20).collect();
        assert_eq!(
            fit_logistic(&rows, &y, None, 0.0),
            Err(EstimateError::Separable)
        );
        let fit = fit_logistic(&rows, &y, None, 1e-3).unwrap();
        assert!(fit.coefficients.iter().all(|b| b.is_finite()));
    }

    #[test]
    fn collinear_design_without_ridge_is_singular() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![1.0, f64::from(i % 3), 2.0 * f64::from(i % 3)])
            .collect();
        let y: Vec<bool> = (0..40).map(|i| i % 4 == 0).collect();
        assert_eq!(
            fit_logistic(&rows, &y, None, 0.0),
            Err(EstimateError::SingularDesign)
        );
    }

    #[test]
    fn objective_never_increases() {
        let rows: Vec<Vec<f64>> = (0..500)
            .map(|i| vec![1.0, f64::from(i % 17) / 4.0, f64::from(i % 5)])
            .collect();
        let y: Vec<bool> = (0..500).map(|i| (i * 7919) % 13 < 5 + (i % 5)).collect();
        let fit = fit_logistic(&rows, &y, None, 0.01).unwrap();
        for pair in fit.objective_trace.windows(2) {
            assert!(pair[1] <= pair[0]);
        }
    }

    #[test]
    fn input_validation() {
        assert_eq!(
            fit_logistic(&[], &[], None, 0.0),
            Err(EstimateError::EmptyInput)
        );
        assert_eq!(
            fit_logistic(&[vec![1.0]], &[true, false], None, 0.0),
            Err(EstimateError::DimensionMismatch)
        );
        assert_eq!(
            fit_logistic(&[vec![1.0]], &[true], None, -1.0),
            Err(EstimateError::InvalidLambda(-1.0))
        );
    }
}
