use super::{ProcessingError, Result};
use crate::framewire::{Frame, PixelFormat};
use crate::matrix::FeatureMatrix;

/// L1-normalised intensity histogram with `bins` equal-width bins; bin index
/// is floor(p · bins / 256). An empty frame yields the zero vector.
pub fn histogram_feature(f: &Frame, bins: usize) -> Result<Vec<f64>> {
    if bins == 0 || bins > 256 || 256 % bins != 0 {
        return Err(ProcessingError::BadBins(bins));
    }
    if f.format() != PixelFormat::Gray8 {
        return Err(ProcessingError::NotGray("histogram_feature"));
    }
    let mut counts = vec![0u64; bins];
    for &p in f.pixels() {
        counts[p as usize * bins / 256] += 1;
    }
    let n = f.pixels().len();
    if n == 0 {
        return Ok(vec![0.0; bins]);
    }
    Ok(counts.into_iter().map(|c| c as f64 / n as f64).collect())
}

/// Columns whose sample variance (divisor n−1) exceeds `tau`, ascending.
pub fn variance_select(x: &FeatureMatrix, tau: f64) -> Result<Vec<usize>> {
    let n = x.rows();
    if n < 2 {
        return Err(ProcessingError::TooFewRows { needed: 2, got: n });
    }
    Ok((0..x.cols())
        .filter(|&j| {
            let mean = (0..n).map(|i| x.get(i, j)).sum::<f64>() / n as f64;
            let var = (0..n).map(|i| (x.get(i, j) - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            var > tau
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_cases() {
        let f = Frame::filled(3, 3, PixelFormat::Gray8, 128);
        assert_eq!(histogram_feature(&f, 8).unwrap(), vec![0., 0., 0., 0., 1., 0., 0., 0.]);
        assert_eq!(histogram_feature(&f, 1).unwrap(), vec![1.0]);
        let two = Frame::gray(2, 1, vec![0, 255]).unwrap();
        assert_eq!(histogram_feature(&two, 2).unwrap(), vec![0.5, 0.5]);
        let empty = Frame::gray(0, 0, vec![]).unwrap();
        assert_eq!(histogram_feature(&empty, 4).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn histogram_bad_bins() {
        let f = Frame::filled(1, 1, PixelFormat::Gray8, 0);
        for b in [0, 3, 512] {
            assert_eq!(histogram_feature(&f, b), Err(ProcessingError::BadBins(b)));
        }
        assert!(histogram_feature(&f, 256).is_ok());
    }

    #[test]
    fn variance_cases() {
        let x = FeatureMatrix::from_rows(&[[5.0, 0.0], [5.0, 2.0]]).unwrap();
        assert_eq!(variance_select(&x, 0.0).unwrap(), vec![1]);
        assert_eq!(variance_select(&x, 1.0).unwrap(), vec![1]);
        assert_eq!(variance_select(&x, 2.0).unwrap(), Vec::<usize>::new());
        assert_eq!(variance_select(&x, -1.0).unwrap(), vec![0, 1]);
        let one = FeatureMatrix::from_rows(&[[1.0]]).unwrap();
        assert!(variance_select(&one, 0.0).is_err());
    }
}
