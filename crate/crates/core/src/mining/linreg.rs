use serde::{Deserialize, Serialize};

use super::{MiningError, Result};
use crate::matrix::{dot, solve_linear, FeatureMatrix};

/// Smallest pivot magnitude accepted while solving the normal equations.
pub const PIVOT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinRegModel {
    /// Bias first, then one weight per feature.
    pub weights: Vec<f64>,
    #[serde(default)]
    pub lambda: f64,
}

impl LinRegModel {
    pub fn dim(&self) -> usize {
        self.weights.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty() {
            return Err(MiningError::BadModel("regression model has no weights".into()));
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(MiningError::BadModel("non-finite weight".into()));
        }
        Ok(())
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.validate()?;
        if x.len() != self.dim() {
            return Err(MiningError::DimMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(self.weights[0] + dot(&self.weights[1..], x))
    }
}

/// Least squares with optional ridge penalty on every weight except the bias.
pub fn linreg_fit(x: &FeatureMatrix, y: &[f64], lambda: f64) -> Result<LinRegModel> {
    let n = x.rows();
    if y.len() != n {
        return Err(MiningError::ShapeMismatch(format!("{n} rows but {} targets", y.len())));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(MiningError::ShapeMismatch(format!("lambda must be >= 0, got {lambda}")));
    }
    if n == 0 {
        return Err(MiningError::TooFewPoints { needed: 1, got: 0 });
    }
    let p = x.cols() + 1;
    let mut ata = vec![vec![0.0; p]; p];
    let mut aty = vec![0.0; p];
    let mut a = vec![1.0; p];
    for (row, &target) in x.iter_rows().zip(y) {
        a[1..].copy_from_slice(row);
        for i in 0..p {
            aty[i] += a[i] * target;
            for j in 0..p {
                ata[i][j] += a[i] * a[j];
            }
        }
    }
    for (i, r) in ata.iter_mut().enumerate().skip(1) {
        r[i] += lambda;
    }
    let weights = solve_linear(ata, aty, PIVOT_EPS).ok_or(MiningError::SingularMatrix)?;
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(MiningError::SingularMatrix);
    }
    Ok(LinRegModel { weights, lambda })
}
