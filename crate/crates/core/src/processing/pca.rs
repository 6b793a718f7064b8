//! Principal component analysis by power iteration with deflation.
//!
//! Each eigenpair of the sample covariance is found by iterating on the
//! deflated matrix. The iteration matrix is squared (and rescaled) after every
//! step, so step j applies C^(2^j) and closely spaced eigenvalues still
//! separate within a few dozen steps. Iterates are re-orthogonalised against
//! the components already found.

use serde::{Deserialize, Serialize};

use super::{ProcessingError, Result};
use crate::matrix::{dot, norm, FeatureMatrix};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 1000;

/// Entries below this magnitude are ignored when fixing component signs.
const SIGN_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// k rows of length d, orthonormal.
    pub components: Vec<Vec<f64>>,
    /// Non-increasing, non-negative.
    pub eigenvalues: Vec<f64>,
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    /// Keeps the leading `k` components.
    pub fn truncated(&self, k: usize) -> Result<PcaModel> {
        if k == 0 || k > self.k() {
            return Err(ProcessingError::BadK { k, d: self.k() });
        }
        Ok(PcaModel {
            mean: self.mean.clone(),
            components: self.components[..k].to_vec(),
            eigenvalues: self.eigenvalues[..k].to_vec(),
        })
    }

    /// Projects one row onto the components.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(ProcessingError::DimMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        Ok(self.components.iter().map(|c| dot(&centered, c)).collect())
    }

    /// Maps projected rows back to the input space: y · components + mean.
    pub fn reconstruct(&self, y: &FeatureMatrix) -> Result<FeatureMatrix> {
        if y.cols() != self.k() {
            return Err(ProcessingError::DimMismatch {
                expected: self.k(),
                got: y.cols(),
            });
        }
        let d = self.dim();
        let mut data = Vec::with_capacity(y.rows() * d);
        for row in y.iter_rows() {
            for j in 0..d {
                data.push(self.mean[j] + row.iter().zip(&self.components).map(|(a, c)| a * c[j]).sum::<f64>());
            }
        }
        Ok(FeatureMatrix::new(y.rows(), d, data).expect("finite reconstruction"))
    }
}

pub fn pca_fit(x: &FeatureMatrix, k: usize) -> Result<PcaModel> {
    pca_fit_with(x, k, DEFAULT_TOL, DEFAULT_MAX_ITER)
}

pub fn pca_fit_with(x: &FeatureMatrix, k: usize, tol: f64, max_iter: usize) -> Result<PcaModel> {
    let (n, d) = (x.rows(), x.cols());
    if n < 2 {
        return Err(ProcessingError::TooFewRows { needed: 2, got: n });
    }
    if k == 0 || k > d {
        return Err(ProcessingError::BadK { k, d });
    }

    let mean: Vec<f64> = (0..d)
        .map(|j| x.iter_rows().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let mut cov = vec![vec![0.0; d]; d];
    for row in x.iter_rows() {
        let c: Vec<f64> = row.iter().zip(&mean).map(|(a, m)| a - m).collect();
        for i in 0..d {
            for j in i..d {
                cov[i][j] += c[i] * c[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i][j] /= (n - 1) as f64;
            cov[j][i] = cov[i][j];
        }
    }

    let cov_scale = max_abs(&cov);
    let mut deflated = cov.clone();
    let mut components: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut eigenvalues = Vec::with_capacity(k);

    for c in 0..k {
        let v = dominant_eigenvector(&deflated, &components, cov_scale, tol, max_iter)
            .ok_or(ProcessingError::DidNotConverge { component: c })?;
        let cv = mat_vec(&cov, &v);
        let lambda = dot(&v, &cv).max(0.0);
        for i in 0..d {
            for j in 0..d {
                deflated[i][j] -= lambda * v[i] * v[j];
            }
        }
        eigenvalues.push(lambda);
        components.push(v);
    }

    // Nearly tied eigenvalues may come out in the wrong order by a rounding error.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eigenvalues[b].total_cmp(&eigenvalues[a]));
    let components = order
        .iter()
        .map(|&i| with_sign_convention(components[i].clone()))
        .collect();
    let eigenvalues = order.iter().map(|&i| eigenvalues[i]).collect();

    Ok(PcaModel {
        mean,
        components,
        eigenvalues,
    })
}

/// (X − mean) · componentsᵀ.
pub fn pca_transform(m: &PcaModel, x: &FeatureMatrix) -> Result<FeatureMatrix> {
    if x.cols() != m.dim() {
        return Err(ProcessingError::DimMismatch {
            expected: m.dim(),
            got: x.cols(),
        });
    }
    let mut data = Vec::with_capacity(x.rows() * m.k());
    for row in x.iter_rows() {
        data.extend(m.project(row)?);
    }
    Ok(FeatureMatrix::new(x.rows(), m.k(), data).expect("finite projection"))
}

fn max_abs(m: &[Vec<f64>]) -> f64 {
    m.iter().flatten().fold(0.0, |a, &b| a.max(b.abs()))
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, v)).collect()
}

fn mat_square(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = m.len();
    let mut out = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in i..d {
            let s: f64 = (0..d).map(|t| m[i][t] * m[t][j]).sum();
            out[i][j] = s;
            out[j][i] = s;
        }
    }
    out
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    // Two passes of classical Gram-Schmidt keep the result orthogonal to
    // machine precision.
    for _ in 0..2 {
        for b in basis {
            let p = dot(v, b);
            for (x, y) in v.iter_mut().zip(b) {
                *x -= p * y;
            }
        }
    }
}

fn normalized(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let n = norm(&v);
    if !(n > 1e-12) {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= n);
    Some(v)
}

/// Start vector: normalised all-ones orthogonalised against `prev`; if that
/// vanishes, the first coordinate is perturbed by 1e-3; failing that, the
/// first standard basis vector that survives orthogonalisation.
fn start_vectors(d: usize, prev: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut cands = Vec::with_capacity(d + 2);
    let ones = vec![1.0 / (d as f64).sqrt(); d];
    cands.push(ones.clone());
    let mut perturbed = ones;
    perturbed[0] += 1e-3;
    cands.push(perturbed);
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        cands.push(e);
    }
    cands
        .into_iter()
        .filter_map(|mut v| {
            orthogonalize(&mut v, prev);
            normalized(v)
        })
        .collect()
}

fn dominant_eigenvector(
    m: &[Vec<f64>],
    prev: &[Vec<f64>],
    cov_scale: f64,
    tol: f64,
    max_iter: usize,
) -> Option<Vec<f64>> {
    let d = m.len();
    let starts = start_vectors(d, prev);
    let first = starts.first()?.clone();

    let scale = max_abs(m);
    // Nothing left but rounding noise: every remaining direction has eigenvalue 0.
    if !(scale > 1e-12 * cov_scale) || cov_scale == 0.0 {
        return Some(first);
    }

    'starts: for start in starts {
        let mut p: Vec<Vec<f64>> = m.iter().map(|r| r.iter().map(|x| x / scale).collect()).collect();
        let mut v = start;
        for _ in 0..max_iter {
            let mut w = mat_vec(&p, &v);
            orthogonalize(&mut w, prev);
            // The residual stalls when the start is orthogonal to every
            // remaining eigenvector with a non-zero eigenvalue.
            let Some(mut w) = normalized(w) else {
                continue 'starts;
            };
            if dot(&w, &v) < 0.0 {
                w.iter_mut().for_each(|x| *x = -*x);
            }
            let diff = w.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            v = w;
            if diff < tol {
                return Some(v);
            }
            p = mat_square(&p);
            let s = max_abs(&p);
            if !(s > 0.0) || !s.is_finite() {
                return Some(v);
            }
            p.iter_mut().flatten().for_each(|x| *x /= s);
        }
        return None;
    }
    Some(first)
}

fn with_sign_convention(mut v: Vec<f64>) -> Vec<f64> {
    if let Some(&first) = v.iter().find(|x| x.abs() > SIGN_EPS) {
        if first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_line() {
        let x = FeatureMatrix::from_rows(&[[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]).unwrap();
        let m = pca_fit(&x, 1).unwrap();
        // Covariance [[1,1],[1,1]] has eigenvalues 2 and 0.
        assert!((m.eigenvalues[0] - 2.0).abs() < 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((m.components[0][0] - h).abs() < 1e-12);
        assert!((m.components[0][1] - h).abs() < 1e-12);
    }

    #[test]
    fn constant_column_has_zero_eigenvalue() {
        let x = FeatureMatrix::from_rows(&[[1.0, 7.0], [2.0, 7.0], [4.0, 7.0]]).unwrap();
        let m = pca_fit(&x, 2).unwrap();
        assert!(m.eigenvalues[1].abs() < 1e-12);
        assert!((m.components[1][1].abs() - 1.0).abs() < 1e-9);
        assert!(m.components[0][1].abs() < 1e-9);
    }

    #[test]
    fn equal_eigenvalues_still_orthonormal() {
        // Isotropic square: covariance is a multiple of the identity.
        let x = FeatureMatrix::from_rows(&[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]).unwrap();
        let m = pca_fit(&x, 2).unwrap();
        assert!((m.eigenvalues[0] - m.eigenvalues[1]).abs() < 1e-12);
        assert!(dot(&m.components[0], &m.components[1]).abs() < 1e-12);
        for c in &m.components {
            assert!((norm(c) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn transform_and_errors() {
        let x = FeatureMatrix::from_rows(&[[1.0, 2.0, 0.0], [3.0, 1.0, 1.0], [0.0, 0.0, 5.0]]).unwrap();
        let m = pca_fit(&x, 3).unwrap();
        let mean_row = FeatureMatrix::from_rows(std::slice::from_ref(&m.mean)).unwrap();
        let t = pca_transform(&m, &mean_row).unwrap();
        assert!(t.data().iter().all(|v| v.abs() < 1e-12));

        let y = pca_transform(&m, &x).unwrap();
        let back = m.reconstruct(&y).unwrap();
        for (a, b) in back.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-8);
        }

        let wrong = FeatureMatrix::from_rows(&[[1.0, 2.0]]).unwrap();
        assert!(matches!(pca_transform(&m, &wrong), Err(ProcessingError::DimMismatch { .. })));
        assert!(matches!(pca_fit(&x, 0), Err(ProcessingError::BadK { .. })));
        assert!(matches!(pca_fit(&x, 4), Err(ProcessingError::BadK { .. })));
        let one = FeatureMatrix::from_rows(&[[1.0, 2.0]]).unwrap();
        assert!(matches!(pca_fit(&one, 1), Err(ProcessingError::TooFewRows { .. })));
    }

    #[test]
    fn sign_convention_first_entry_positive() {
        let x = FeatureMatrix::from_rows(&[[0.0, 3.0], [0.0, -3.0], [1.0, 0.0], [-1.0, 0.0]]).unwrap();
        let m = pca_fit(&x, 2).unwrap();
        for c in &m.components {
            let first = c.iter().find(|v| v.abs() > SIGN_EPS).unwrap();
            assert!(*first > 0.0);
        }
    }

    #[test]
    fn model_json_fields() {
        let x = FeatureMatrix::from_rows(&[[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]).unwrap();
        let m = pca_fit(&x, 1).unwrap();
        let v = serde_json::to_value(&m).unwrap();
        for key in ["mean", "components", "eigenvalues"] {
            assert!(v.get(key).is_some());
        }
    }
}
