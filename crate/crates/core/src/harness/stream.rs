use std::collections::{BTreeMap, BTreeSet};

use crate::batch::{ClassId, FeatureBatch};
use crate::error::{KldaError, Result};
use crate::featstore::{DatasetManifest, TEST_SPLIT, TRAIN_SPLIT};
use crate::rng::SeededStream;

/// One task: a group of classes, each with all of its training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub classes: Vec<(ClassId, FeatureBatch)>,
}

impl Task {
    pub fn class_ids(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.classes.iter().map(|(c, _)| *c)
    }
}

/// Ordered tasks over pairwise disjoint class groups plus a test set
/// spanning every class.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskStream {
    pub dataset: String,
    pub tasks: Vec<Task>,
    pub shuffle_seed: u64,
    pub test_set: FeatureBatch,
}

/// Sizes of `num_tasks` near-equal groups over `num_classes` classes; the
/// first `num_classes % num_tasks` groups get one extra class.
pub fn partition_sizes(num_classes: usize, num_tasks: usize) -> Vec<usize> {
    let base = num_classes / num_tasks;
    let extra = num_classes % num_tasks;
    (0..num_tasks)
        .map(|t| base + usize::from(t < extra))
        .collect()
}

impl TaskStream {
    /// Permutes the training classes with `shuffle_seed` and cuts the
    /// permutation into `num_tasks` consecutive groups.
    pub fn from_batches(
        dataset: impl Into<String>,
        train: &FeatureBatch,
        test_set: FeatureBatch,
        num_tasks: usize,
        shuffle_seed: u64,
    ) -> Result<Self> {
        if num_tasks == 0 {
            return Err(KldaError::Config("task count must be at least 1".into()));
        }
        let mut by_class: BTreeMap<ClassId, FeatureBatch> = train.split_by_class();
        if by_class.len() < num_tasks {
            return Err(KldaError::Config(format!(
                "{num_tasks} tasks requested but only {} classes available",
                by_class.len()
            )));
        }
        if test_set.width() != train.width() {
            return Err(KldaError::Dimension {
                expected: train.width(),
                found: test_set.width(),
            });
        }
        if let Some(l) = test_set.labels().iter().find(|l| !by_class.contains_key(l)) {
            return Err(KldaError::Config(format!(
                "test label {l} has no training data"
            )));
        }

        let mut order: Vec<ClassId> = by_class.keys().copied().collect();
        SeededStream::new(shuffle_seed).shuffle(&mut order);

        let mut cursor = order.into_iter();
        let tasks = partition_sizes(by_class.len(), num_tasks)
            .into_iter()
            .map(|size| Task {
                classes: cursor
                    .by_ref()
                    .take(size)
                    .map(|c| (c, by_class.remove(&c).expect("class present")))
                    .collect(),
            })
            .collect();
        Ok(Self {
            dataset: dataset.into(),
            tasks,
            shuffle_seed,
            test_set,
        })
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    /// Class ids in arrival order.
    pub fn class_order(&self) -> Vec<ClassId> {
        self.tasks.iter().flat_map(|t| t.class_ids()).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.test_set.width()
    }

    /// Checks the stream invariants: disjoint tasks, every test label learned.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for c in self.class_order() {
            if !seen.insert(c) {
                return Err(KldaError::Protocol(format!(
                    "class {c} appears in two tasks"
                )));
            }
        }
        if let Some(l) = self.test_set.labels().iter().find(|l| !seen.contains(l)) {
            return Err(KldaError::Protocol(format!(
                "test label {l} appears in no task"
            )));
        }
        Ok(())
    }
}

/// Loads the train and test splits named by `manifest` and builds a stream.
pub fn build_stream(
    manifest: &DatasetManifest,
    num_tasks: usize,
    shuffle_seed: u64,
) -> Result<TaskStream> {
    if num_tasks == 0 {
        return Err(KldaError::Config("task count must be at least 1".into()));
    }
    if (manifest.num_classes as usize) < num_tasks {
        return Err(KldaError::Config(format!(
            "{num_tasks} tasks requested but the dataset has {} classes",
            manifest.num_classes
        )));
    }
    let train = manifest.load_split(TRAIN_SPLIT)?;
    let test = manifest.load_split(TEST_SPLIT)?;
    TaskStream::from_batches(
        manifest.dataset.clone(),
        &train,
        test,
        num_tasks,
        shuffle_seed,
    )
}
