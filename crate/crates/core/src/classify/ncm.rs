use std::collections::BTreeMap;

use ndarray::Array1;

use crate::batch::{ClassId, FeatureBatch};
use crate::error::{KldaError, Result};

/// Nearest class mean under cosine similarity.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NcmModel {
    means: BTreeMap<ClassId, Array1<f64>>,
}

impl NcmModel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds the model from one batch per class.
    pub fn fit<'a>(classes: impl IntoIterator<Item = (ClassId, &'a FeatureBatch)>) -> Result<Self> {
        let mut model = Self::new();
        for (id, batch) in classes {
            model.add_class(id, batch)?;
        }
        Ok(model)
    }

    pub fn add_class(&mut self, class_id: ClassId, batch: &FeatureBatch) -> Result<()> {
        if self.means.contains_key(&class_id) {
            return Err(KldaError::DuplicateClass(class_id));
        }
        if let Some(width) = self.width() {
            if batch.width() != width {
                return Err(KldaError::Dimension {
                    expected: width,
                    found: batch.width(),
                });
            }
        }
        let mean = batch
            .mean_row()
            .ok_or_else(|| KldaError::Input(format!("empty batch for class {class_id}")))?;
        if mean.dot(&mean) == 0.0 {
            return Err(KldaError::Input(format!(
                "class {class_id} has a zero mean vector"
            )));
        }
        self.means.insert(class_id, mean);
        Ok(())
    }

    pub fn means(&self) -> &BTreeMap<ClassId, Array1<f64>> {
        &self.means
    }

    pub fn width(&self) -> Option<usize> {
        self.means.values().next().map(|m| m.len())
    }

    pub fn num_classes(&self) -> usize {
        self.means.len()
    }

    pub fn predict(&self, features: &FeatureBatch) -> Result<Vec<ClassId>> {
        let width = self
            .width()
            .ok_or_else(|| KldaError::Protocol("NCM model has no classes".into()))?;
        if features.width() != width {
            return Err(KldaError::Dimension {
                expected: width,
                found: features.width(),
            });
        }
        let unit: Vec<(ClassId, Array1<f64>)> = self
            .means
            .iter()
            .map(|(&id, m)| (id, m / m.dot(m).sqrt()))
            .collect();
        features
            .values()
            .rows()
            .into_iter()
            .enumerate()
            .map(|(i, x)| {
                let norm = x.dot(&x).sqrt();
                if norm == 0.0 {
                    return Err(KldaError::UndefinedSimilarity(i));
                }
                let mut best = (unit[0].0, f64::NEG_INFINITY);
                for (id, u) in &unit {
                    let cos = x.dot(u) / norm;
                    if cos > best.1 {
                        best = (*id, cos);
                    }
                }
                Ok(best.0)
            })
            .collect()
    }
}
