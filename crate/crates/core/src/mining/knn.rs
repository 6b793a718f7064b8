use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{MiningError, Result};
use crate::matrix::squared_distance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<String>,
}

impl KnnModel {
    pub fn new(points: Vec<Vec<f64>>, labels: Vec<String>) -> Result<Self> {
        let m = Self { points, labels };
        m.validate()?;
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map(Vec::len).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(MiningError::BadModel("kNN model has no points".into()));
        }
        if self.points.len() != self.labels.len() {
            return Err(MiningError::ShapeMismatch(format!(
                "{} points but {} labels",
                self.points.len(),
                self.labels.len()
            )));
        }
        let d = self.dim();
        if self.points.iter().any(|p| p.len() != d) {
            return Err(MiningError::BadModel("points have different lengths".into()));
        }
        Ok(())
    }
}

/// Majority label among the `k` nearest training points and its vote share.
/// Equal distances rank the lower training index first; equal vote counts go
/// to the lexicographically smallest label.
pub fn knn_predict(m: &KnnModel, x: &[f64], k: usize) -> Result<(String, f64)> {
    m.validate()?;
    let n = m.len();
    if k == 0 || k > n {
        return Err(MiningError::BadK { k, n });
    }
    if x.len() != m.dim() {
        return Err(MiningError::DimMismatch {
            expected: m.dim(),
            got: x.len(),
        });
    }
    let mut order: Vec<(f64, usize)> = m
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| (squared_distance(p, x), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut votes: BTreeMap<&str, usize> = BTreeMap::new();
    for &(_, i) in &order[..k] {
        *votes.entry(m.labels[i].as_str()).or_default() += 1;
    }
    // BTreeMap iterates in label order, so keeping only strictly larger
    // counts leaves the smallest label among the tied maxima.
    let mut best: Option<(&str, usize)> = None;
    for (label, count) in votes {
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((label, count));
        }
    }
    let (label, count) = best.expect("k >= 1");
    Ok((label.to_string(), count as f64 / k as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(points: &[f64], labels: &[&str]) -> KnnModel {
        KnnModel::new(
            points.iter().map(|&p| vec![p]).collect(),
            labels.iter().map(|s| s.to_string()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn own_label_at_k1() {
        let m = model(&[0.0, 5.0, 9.0], &["a", "b", "c"]);
        assert_eq!(knn_predict(&m, &[5.0], 1).unwrap(), ("b".to_string(), 1.0));
    }

    #[test]
    fn vote_tie_goes_to_smaller_label() {
        let m = model(&[-1.0, 1.0], &["zebra", "apple"]);
        assert_eq!(knn_predict(&m, &[0.0], 2).unwrap(), ("apple".to_string(), 0.5));
    }

    #[test]
    fn distance_tie_prefers_lower_index() {
        let m = model(&[1.0, -1.0, 7.0], &["y", "x", "x"]);
        assert_eq!(knn_predict(&m, &[0.0], 1).unwrap().0, "y");
    }

    #[test]
    fn k_equal_n_gives_most_frequent() {
        let m = model(&[0.0, 1.0, 2.0, 100.0, 101.0], &["b", "a", "b", "a", "b"]);
        assert_eq!(knn_predict(&m, &[100.0], 5).unwrap(), ("b".to_string(), 0.6));
    }

    #[test]
    fn errors() {
        let m = model(&[0.0, 1.0], &["a", "b"]);
        assert_eq!(knn_predict(&m, &[0.0], 3), Err(MiningError::BadK { k: 3, n: 2 }));
        assert_eq!(knn_predict(&m, &[0.0], 0), Err(MiningError::BadK { k: 0, n: 2 }));
        assert!(matches!(knn_predict(&m, &[0.0, 1.0], 1), Err(MiningError::DimMismatch { .. })));
        assert!(KnnModel::new(vec![vec![1.0]], vec![]).is_err());
    }
}
