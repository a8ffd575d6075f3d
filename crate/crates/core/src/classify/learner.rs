//! Stateful classifiers fed one class at a time.
//!
//! Discriminant models are solved lazily: the first prediction after any
//! statistics update triggers one factorization, later predictions reuse it.

use super::argmax_first;
use super::ensemble::{averaged_probabilities, member_seed, EnsembleModel};
use super::lda::{solve_lda, DiscriminantModel, Ridge};
use super::ncm::NcmModel;
use crate::batch::{ClassId, FeatureBatch};
use crate::error::{KldaError, Result};
use crate::rff::{RffConfig, RffProjector};
use crate::stats::GaussianAccumulator;

pub trait IncrementalClassifier: Send {
    /// Learns every training sample of a class not seen before.
    fn learn_class(&mut self, class_id: ClassId, raw: &FeatureBatch) -> Result<()>;

    /// Predicts labels for raw feature rows among the classes learned so far.
    fn predict(&mut self, raw: &FeatureBatch) -> Result<Vec<ClassId>>;

    fn num_classes(&self) -> usize;
}

fn check_batch_labels(class_id: ClassId, raw: &FeatureBatch) -> Result<()> {
    match raw.labels().iter().find(|&&l| l != class_id) {
        Some(other) => Err(KldaError::Protocol(format!(
            "batch for class {class_id} contains a row labelled {other}"
        ))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Default)]
pub struct NcmLearner {
    model: NcmModel,
}

impl NcmLearner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn model(&self) -> &NcmModel {
        &self.model
    }
}

impl IncrementalClassifier for NcmLearner {
    fn learn_class(&mut self, class_id: ClassId, raw: &FeatureBatch) -> Result<()> {
        check_batch_labels(class_id, raw)?;
        self.model.add_class(class_id, raw)
    }

    fn predict(&mut self, raw: &FeatureBatch) -> Result<Vec<ClassId>> {
        self.model.predict(raw)
    }

    fn num_classes(&self) -> usize {
        self.model.num_classes()
    }
}

/// Accumulator plus a lazily refreshed discriminant model.
#[derive(Debug, Clone)]
struct LazyDiscriminant {
    acc: GaussianAccumulator,
    ridge: Ridge,
    solved: Option<DiscriminantModel>,
}

impl LazyDiscriminant {
    fn new(dim: usize, ridge: Ridge) -> Result<Self> {
        Ok(Self {
            acc: GaussianAccumulator::new(dim)?,
            ridge,
            solved: None,
        })
    }

    fn update(&mut self, class_id: ClassId, features: &FeatureBatch) -> Result<()> {
        self.acc.update_class(features, class_id)?;
        self.solved = None;
        Ok(())
    }

    fn model(&mut self) -> Result<&DiscriminantModel> {
        if self.solved.is_none() {
            self.solved = Some(solve_lda(&self.acc, self.ridge)?);
        }
        Ok(self.solved.as_ref().expect("just solved"))
    }

    /// With a single class every row is assigned to it; otherwise `None`.
    fn trivial_prediction(&self, rows: usize) -> Result<Option<Vec<ClassId>>> {
        match self.acc.num_classes() {
            0 => Err(KldaError::Protocol("no classes learned yet".into())),
            1 => {
                let only = self.acc.class_ids().next().expect("one class");
                Ok(Some(vec![only; rows]))
            }
            _ => Ok(None),
        }
    }
}

/// Linear discriminant on raw features.
#[derive(Debug, Clone)]
pub struct LdaLearner {
    inner: LazyDiscriminant,
}

impl LdaLearner {
    pub fn new(dim: usize, ridge: Ridge) -> Result<Self> {
        Ok(Self {
            inner: LazyDiscriminant::new(dim, ridge)?,
        })
    }

    pub fn accumulator(&self) -> &GaussianAccumulator {
        &self.inner.acc
    }

    pub fn model(&mut self) -> Result<&DiscriminantModel> {
        self.inner.model()
    }
}

impl IncrementalClassifier for LdaLearner {
    fn learn_class(&mut self, class_id: ClassId, raw: &FeatureBatch) -> Result<()> {
        self.inner.update(class_id, raw)
    }

    fn predict(&mut self, raw: &FeatureBatch) -> Result<Vec<ClassId>> {
        if raw.width() != self.inner.acc.dim() {
            return Err(KldaError::Dimension {
                expected: self.inner.acc.dim(),
                found: raw.width(),
            });
        }
        if let Some(p) = self.inner.trivial_prediction(raw.nrows())? {
            return Ok(p);
        }
        self.inner.model()?.predict(raw)
    }

    fn num_classes(&self) -> usize {
        self.inner.acc.num_classes()
    }
}

/// Linear discriminant on random Fourier features of the raw input.
#[derive(Debug, Clone)]
pub struct KldaLearner {
    projector: RffProjector,
    normalize_input: bool,
    inner: LazyDiscriminant,
}

impl KldaLearner {
    pub fn new(config: RffConfig, ridge: Ridge, normalize_input: bool) -> Result<Self> {
        let projector = RffProjector::build(config)?;
        let inner = LazyDiscriminant::new(projector.transform_dim(), ridge)?;
        Ok(Self {
            projector,
            normalize_input,
            inner,
        })
    }

    pub fn projector(&self) -> &RffProjector {
        &self.projector
    }

    pub fn accumulator(&self) -> &GaussianAccumulator {
        &self.inner.acc
    }

    pub fn model(&mut self) -> Result<&DiscriminantModel> {
        self.inner.model()
    }

    pub fn kernelize(&self, raw: &FeatureBatch) -> Result<FeatureBatch> {
        if self.normalize_input {
            self.projector.transform(&raw.l2_normalized())
        } else {
            self.projector.transform(raw)
        }
    }

    /// Solved `(projector, model)` pair for export.
    pub fn export(&mut self) -> Result<(RffProjector, DiscriminantModel)> {
        let model = self.inner.model()?.clone();
        Ok((self.projector.clone(), model))
    }
}

impl IncrementalClassifier for KldaLearner {
    fn learn_class(&mut self, class_id: ClassId, raw: &FeatureBatch) -> Result<()> {
        if self.inner.acc.contains(class_id) {
            return Err(KldaError::DuplicateClass(class_id));
        }
        let z = self.kernelize(raw)?;
        self.inner.update(class_id, &z)
    }

    fn predict(&mut self, raw: &FeatureBatch) -> Result<Vec<ClassId>> {
        if raw.width() != self.projector.input_dim() {
            return Err(KldaError::Dimension {
                expected: self.projector.input_dim(),
                found: raw.width(),
            });
        }
        if let Some(p) = self.inner.trivial_prediction(raw.nrows())? {
            return Ok(p);
        }
        let z = self.kernelize(raw)?;
        self.inner.model()?.predict(&z)
    }

    fn num_classes(&self) -> usize {
        self.inner.acc.num_classes()
    }
}

/// KLDA members with seeds `base.seed + i`, combined by probability averaging.
#[derive(Debug, Clone)]
pub struct KldaEnsembleLearner {
    members: Vec<KldaLearner>,
}

impl KldaEnsembleLearner {
    pub fn new(base: RffConfig, size: usize, ridge: Ridge, normalize_input: bool) -> Result<Self> {
        if size == 0 {
            return Err(KldaError::Config("ensemble size must be at least 1".into()));
        }
        let members = (0..size)
            .map(|i| {
                KldaLearner::new(
                    base.with_seed(member_seed(base.seed, i)),
                    ridge,
                    normalize_input,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { members })
    }

    pub fn members(&self) -> &[KldaLearner] {
        &self.members
    }

    pub fn export(&mut self) -> Result<EnsembleModel> {
        let members = self
            .members
            .iter_mut()
            .map(|m| m.export())
            .collect::<Result<Vec<_>>>()?;
        EnsembleModel::new(members)
    }
}

impl IncrementalClassifier for KldaEnsembleLearner {
    fn learn_class(&mut self, class_id: ClassId, raw: &FeatureBatch) -> Result<()> {
        if self.members[0].accumulator().contains(class_id) {
            return Err(KldaError::DuplicateClass(class_id));
        }
        for m in &mut self.members {
            m.learn_class(class_id, raw)?;
        }
        Ok(())
    }

    fn predict(&mut self, raw: &FeatureBatch) -> Result<Vec<ClassId>> {
        let first = &self.members[0];
        if raw.width() != first.projector.input_dim() {
            return Err(KldaError::Dimension {
                expected: first.projector.input_dim(),
                found: raw.width(),
            });
        }
        if let Some(p) = first.inner.trivial_prediction(raw.nrows())? {
            return Ok(p);
        }
        for m in &mut self.members {
            m.inner.model()?;
        }
        let normalized;
        let input = if self.members[0].normalize_input {
            normalized = raw.l2_normalized();
            &normalized
        } else {
            raw
        };
        let pairs = self
            .members
            .iter()
            .map(|m| (&m.projector, m.inner.solved.as_ref().expect("solved above")));
        let probs = averaged_probabilities(pairs, input)?;
        let ids = self.members[0]
            .inner
            .solved
            .as_ref()
            .expect("solved above")
            .class_ids();
        Ok(probs
            .rows()
            .into_iter()
            .map(|r| ids[argmax_first(r)])
            .collect())
    }

    fn num_classes(&self) -> usize {
        self.members[0].num_classes()
    }
}
