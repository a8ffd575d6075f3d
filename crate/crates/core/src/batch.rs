//! Labelled feature matrices, the universal input of the engine.

use std::collections::BTreeMap;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use crate::error::{KldaError, Result};

/// Integer class label. Labels are non-negative by construction.
pub type ClassId = u32;

/// An `n x k` matrix of feature rows with one label per row.
///
/// Construction validates that every value is finite and that the label
/// count matches the row count.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBatch {
    values: Array2<f64>,
    labels: Vec<ClassId>,
}

impl FeatureBatch {
    pub fn new(values: Array2<f64>, labels: Vec<ClassId>) -> Result<Self> {
        if values.nrows() != labels.len() {
            return Err(KldaError::Input(format!(
                "{} rows but {} labels",
                values.nrows(),
                labels.len()
            )));
        }
        if let Some(((row, col), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(KldaError::NonFinite { row, col });
        }
        Ok(Self { values, labels })
    }

    /// Builds a batch whose rows all carry `class_id`.
    pub fn single_class(values: Array2<f64>, class_id: ClassId) -> Result<Self> {
        let n = values.nrows();
        Self::new(values, vec![class_id; n])
    }

    /// Internal constructor for values produced by the engine itself
    /// (already known to be finite).
    pub(crate) fn from_parts_unchecked(values: Array2<f64>, labels: Vec<ClassId>) -> Self {
        debug_assert_eq!(values.nrows(), labels.len());
        Self { values, labels }
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn into_parts(self) -> (Array2<f64>, Vec<ClassId>) {
        (self.values, self.labels)
    }

    pub fn row(&self, i: usize) -> ndarray::ArrayView1<'_, f64> {
        self.values.row(i)
    }

    /// Returns a batch containing only the rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> FeatureBatch {
        let values = self.values.select(Axis(0), indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        FeatureBatch { values, labels }
    }

    /// Returns the rows whose label satisfies `keep`.
    pub fn filter_labels(&self, mut keep: impl FnMut(ClassId) -> bool) -> FeatureBatch {
        let idx: Vec<usize> = (0..self.nrows())
            .filter(|&i| keep(self.labels[i]))
            .collect();
        self.select(&idx)
    }

    /// Splits the batch into one batch per label, keyed by class id.
    /// Row order within each class is preserved.
    pub fn split_by_class(&self) -> BTreeMap<ClassId, FeatureBatch> {
        let mut rows: BTreeMap<ClassId, Vec<usize>> = BTreeMap::new();
        for (i, &l) in self.labels.iter().enumerate() {
            rows.entry(l).or_default().push(i);
        }
        rows.into_iter()
            .map(|(c, idx)| (c, self.select(&idx)))
            .collect()
    }

    /// Stacks batches of equal width vertically.
    pub fn concat(batches: &[&FeatureBatch]) -> Result<FeatureBatch> {
        let Some(first) = batches.first() else {
            return Err(KldaError::Input("no batches to concatenate".into()));
        };
        let width = first.width();
        let total: usize = batches.iter().map(|b| b.nrows()).sum();
        let mut values = Array2::zeros((total, width));
        let mut labels = Vec::with_capacity(total);
        let mut at = 0;
        for b in batches {
            if b.width() != width {
                return Err(KldaError::Dimension {
                    expected: width,
                    found: b.width(),
                });
            }
            values
                .slice_mut(s![at..at + b.nrows(), ..])
                .assign(&b.values);
            labels.extend_from_slice(&b.labels);
            at += b.nrows();
        }
        Ok(FeatureBatch { values, labels })
    }

    /// Scales each row to unit Euclidean norm. Zero rows are left as-is.
    pub fn l2_normalized(&self) -> FeatureBatch {
        let mut values = self.values.clone();
        for mut row in values.rows_mut() {
            let norm = row.dot(&row).sqrt();
            if norm > 0.0 {
                row /= norm;
            }
        }
        FeatureBatch {
            values,
            labels: self.labels.clone(),
        }
    }

    /// Column-wise mean of all rows.
    pub fn mean_row(&self) -> Option<Array1<f64>> {
        self.values.mean_axis(Axis(0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_non_finite() {
        let err = FeatureBatch::new(array![[1.0, f64::NAN]], vec![0]).unwrap_err();
        assert!(matches!(err, KldaError::NonFinite { row: 0, col: 1 }));
    }

    #[test]
    fn rejects_label_count_mismatch() {
        assert!(FeatureBatch::new(array![[1.0], [2.0]], vec![0]).is_err());
    }

    #[test]
    fn split_preserves_row_order() {
        let b = FeatureBatch::new(array![[1.0], [2.0], [3.0], [4.0]], vec![1, 0, 1, 0]).unwrap();
        let parts = b.split_by_class();
        assert_eq!(parts[&0].values(), array![[2.0], [4.0]]);
        assert_eq!(parts[&1].values(), array![[1.0], [3.0]]);
    }

    #[test]
    fn concat_rejects_width_mismatch() {
        let a = FeatureBatch::new(array![[1.0, 2.0]], vec![0]).unwrap();
        let b = FeatureBatch::new(array![[1.0]], vec![0]).unwrap();
        assert!(matches!(
            FeatureBatch::concat(&[&a, &b]),
            Err(KldaError::Dimension {
                expected: 2,
                found: 1
            })
        ));
    }
}
