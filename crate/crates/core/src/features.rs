//! Per-scan feature vectors (stand-ins for image-derived features).

use std::collections::BTreeMap;

use crate::cohort::ScanId;

/// Scan id → feature vector, all of one dimension with finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    dim: usize,
    rows: BTreeMap<ScanId, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("feature vector for {scan} has dimension {found}, expected {expected}")]
    DimensionMismatch { scan: ScanId, expected: usize, found: usize },
    #[error("feature vector for {0} has a non-finite entry")]
    NonFinite(ScanId),
    #[error("duplicate feature row for {0}")]
    Duplicate(ScanId),
    #[error("feature dimension must be at least 1")]
    ZeroDimension,
}

impl FeatureMatrix {
    pub fn new(dim: usize) -> Result<Self, FeatureError> {
        if dim == 0 {
            return Err(FeatureError::ZeroDimension);
        }
        Ok(Self { dim, rows: BTreeMap::new() })
    }

    pub fn insert(&mut self, scan: ScanId, row: Vec<f64>) -> Result<(), FeatureError> {
        if row.len() != self.dim {
            return Err(FeatureError::DimensionMismatch { scan, expected: self.dim, found: row.len() });
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(FeatureError::NonFinite(scan));
        }
        if self.rows.contains_key(&scan) {
            return Err(FeatureError::Duplicate(scan));
        }
        self.rows.insert(scan, row);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, scan: &str) -> Option<&[f64]> {
        self.rows.get(scan).map(Vec::as_slice)
    }

    /// Rows in scan-id order.
    pub fn rows(&self) -> impl Iterator<Item = (&ScanId, &[f64])> {
        self.rows.iter().map(|(k, v)| (k, v.as_slice()))
    }
}

/// Squared Euclidean distance.
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_rows() {
        let mut m = FeatureMatrix::new(2).unwrap();
        m.insert("a".into(), vec![1.0, 2.0]).unwrap();
        assert!(matches!(m.insert("b".into(), vec![1.0]), Err(FeatureError::DimensionMismatch { .. })));
        assert!(matches!(m.insert("c".into(), vec![f64::NAN, 0.0]), Err(FeatureError::NonFinite(_))));
        assert!(matches!(m.insert("a".into(), vec![0.0, 0.0]), Err(FeatureError::Duplicate(_))));
        assert_eq!(FeatureMatrix::new(0), Err(FeatureError::ZeroDimension));
        assert_eq!(m.get("a"), Some(&[1.0, 2.0][..]));
    }

    #[test]
    fn distance() {
        assert_eq!(squared_distance(&[0.0, 0.0], &[3.0, 4.0]), 25.0);
    }
}
