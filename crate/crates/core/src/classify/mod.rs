//! Discriminant models and prototype classifiers.
//!
//! * [`ncm`]: nearest class mean under cosine similarity.
//! * [`lda`]: linear discriminant solved from a [`GaussianAccumulator`],
//!   applied to raw features (LDA) or random features (KLDA).
//! * [`ensemble`]: several KLDA members with independent projectors whose
//!   softmax probabilities are averaged.
//! * [`learner`]: stateful incremental wrappers used by the task harness.
//!
//! Every argmax in this module breaks exact ties towards the lowest class id.
//!
//! [`GaussianAccumulator`]: crate::stats::GaussianAccumulator

pub mod ensemble;
pub mod lda;
pub mod learner;
pub mod ncm;

pub use ensemble::{ensemble_fit, EnsembleModel};
pub use lda::{solve_lda, DiscriminantModel, Ridge, DEFAULT_RELATIVE_RIDGE};
pub use learner::{
    IncrementalClassifier, KldaEnsembleLearner, KldaLearner, LdaLearner, NcmLearner,
};
pub use ncm::NcmModel;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

/// Index of the largest entry; the first one wins on exact ties.
pub fn argmax_first(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Row-wise softmax with the row maximum subtracted before exponentiation.
pub fn softmax_rows(scores: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = scores.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}
