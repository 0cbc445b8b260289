//! Closed-form algebra for the multinomial covariance kernel
//! `Sigma_p = diag(p) - p p^T`.
//!
//! The inverse has entries `1(i = j) / p_i + 1 / p_(d+1)` and the determinant
//! is `p_1 ... p_d p_(d+1)`, so nothing here is ever inverted numerically.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::ProbabilityWeights;

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceStructure {
    weights: ProbabilityWeights,
    inv_p: Vec<f64>,
    inv_last: f64,
    log_det: f64,
}

impl CovarianceStructure {
    pub fn new(weights: &ProbabilityWeights) -> Self {
        let inv_p = weights.p().iter().map(|pi| 1.0 / pi).collect();
        let log_det = weights.full().map(f64::ln).sum();
        Self {
            weights: weights.clone(),
            inv_p,
            inv_last: 1.0 / weights.last(),
            log_det,
        }
    }

    pub fn weights(&self) -> &ProbabilityWeights {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.weights.dim()
    }

    /// `ln det Sigma_p = sum of ln p_i over all d + 1 cells`.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Entry `(i, j)` of `Sigma_p`.
    pub fn sigma_entry(&self, i: usize, j: usize) -> Result<f64> {
        self.check_index(i)?;
        self.check_index(j)?;
        let p = self.weights.p();
        let diag = if i == j { p[i] } else { 0.0 };
        Ok(diag - p[i] * p[j])
    }

    /// Dense row-major copy of `Sigma_p`.
    pub fn sigma(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        (0..d)
            .map(|i| (0..d).map(|j| self.sigma_entry(i, j).unwrap()).collect())
            .collect()
    }

    /// Entry `(i, j)` of `Sigma_p^{-1}`.
    pub fn inverse_entry(&self, i: usize, j: usize) -> Result<f64> {
        self.check_index(i)?;
        self.check_index(j)?;
        let diag = if i == j { self.inv_p[i] } else { 0.0 };
        Ok(diag + self.inv_last)
    }

    /// `x^T Sigma_p^{-1} y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.weights.check_len("x", x.len())?;
        self.weights.check_len("y", y.len())?;
        Ok(self.bilinear_unchecked(x, y))
    }

    /// `x^T Sigma_p^{-1} x = sum x_i^2 / p_i + (sum x_i)^2 / p_(d+1)`.
    pub fn quad_form(&self, x: &[f64]) -> Result<f64> {
        self.bilinear(x, x)
    }

    /// Log-density of the centered normal with covariance `Sigma_p`.
    pub fn log_mvn_density(&self, x: &[f64]) -> Result<f64> {
        let q = self.quad_form(x)?;
        Ok(-0.5 * q + self.log_normalizer())
    }

    /// `-(d ln(2 pi) + ln det Sigma_p) / 2`.
    pub fn log_normalizer(&self) -> f64 {
        -0.5 * (self.dim() as f64 * (2.0 * PI).ln() + self.log_det)
    }

    pub(crate) fn bilinear_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut diag = 0.0;
        let mut sx = 0.0;
        let mut sy = 0.0;
        for ((xi, yi), inv) in x.iter().zip(y).zip(&self.inv_p) {
            diag += xi * yi * inv;
            sx += xi;
            sy += yi;
        }
        diag + sx * sy * self.inv_last
    }

    fn check_index(&self, index: usize) -> Result<()> {
        if index >= self.dim() {
            return Err(Error::IndexOutOfRange {
                index,
                dim: self.dim(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cov(p: &[f64]) -> CovarianceStructure {
        CovarianceStructure::new(&ProbabilityWeights::new(p.to_vec()).unwrap())
    }

    #[test]
    fn inverse_entries() {
        let c = cov(&[0.5]);
        assert_relative_eq!(c.inverse_entry(0, 0).unwrap(), 4.0);

        let c = cov(&[0.3, 0.3]);
        assert_relative_eq!(c.inverse_entry(0, 0).unwrap(), 35.0 / 6.0, epsilon = 1e-14);
        assert_relative_eq!(c.inverse_entry(0, 1).unwrap(), 2.5, epsilon = 1e-14);
        assert_eq!(c.inverse_entry(0, 1), c.inverse_entry(1, 0));
        assert!(c.inverse_entry(2, 0).is_err());

        // 2x2 product with Sigma is the identity
        for i in 0..2 {
            for j in 0..2 {
                let prod: f64 = (0..2)
                    .map(|k| c.sigma_entry(i, k).unwrap() * c.inverse_entry(k, j).unwrap())
                    .sum();
                let id = if i == j { 1.0 } else { 0.0 };
                assert!((prod - id).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn quadratic_form_examples() {
        assert_eq!(cov(&[0.3, 0.3]).quad_form(&[0.0, 0.0]).unwrap(), 0.0);
        assert_relative_eq!(cov(&[0.5]).quad_form(&[0.1]).unwrap(), 0.04, epsilon = 1e-15);
        assert_relative_eq!(
            cov(&[0.3, 0.3]).quad_form(&[0.1, -0.1]).unwrap(),
            1.0 / 15.0,
            epsilon = 1e-15
        );
        assert!(cov(&[0.3, 0.3]).quad_form(&[0.1]).is_err());
    }

    #[test]
    fn log_density_examples() {
        // scalar normal with variance 0.25
        let expected = -0.5 * (2.0 * PI * 0.25).ln();
        assert_relative_eq!(cov(&[0.5]).log_mvn_density(&[0.0]).unwrap(), expected, epsilon = 1e-15);
        assert_relative_eq!(expected, -0.2257913526447274, epsilon = 1e-15);

        let expected = -0.5 * (2.0 * (2.0 * PI).ln() + (0.3f64 * 0.3 * 0.4).ln());
        assert_relative_eq!(
            cov(&[0.3, 0.3]).log_mvn_density(&[0.0, 0.0]).unwrap(),
            expected,
            epsilon = 1e-14
        );
    }

    #[test]
    fn log_det_matches_product() {
        let c = cov(&[0.3, 0.3]);
        assert_relative_eq!(c.log_det().exp(), 0.036, max_relative = 1e-14);
    }
}
