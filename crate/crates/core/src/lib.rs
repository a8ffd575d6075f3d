//! Class-incremental classification over frozen feature extractors.
//!
//! Raw feature rows are lifted with random Fourier features approximating an
//! RBF kernel, per-class means and one shared covariance are accumulated one
//! class at a time, and a linear discriminant is solved from those statistics
//! whenever predictions are needed. Nearest-class-mean and plain LDA
//! baselines and a probability-averaging ensemble share the same machinery.
//!
//! ```no_run
//! use klda::harness::{run_cil, synth_rings, Method, MethodConfig, RingSpec, TaskStream};
//!
//! let data = synth_rings(&RingSpec::default())?;
//! let stream = TaskStream::from_batches("rings", &data.train, data.test, 2, 0)?;
//! let config = MethodConfig::new(Method::Klda).with_rff(1024, 1.0);
//! let report = run_cil(&stream, &config)?;
//! println!("{:?}", report.final_accuracy);
//! # Ok::<(), klda::KldaError>(())
//! ```

pub mod batch;
pub mod classify;
pub mod cli;
pub mod codec;
pub mod error;
pub mod featstore;
pub mod harness;
pub mod linalg;
pub mod rff;
pub mod rng;
pub mod stats;

pub use batch::{ClassId, FeatureBatch};
pub use error::{KldaError, Result};
pub use rff::{exact_rbf_kernel, RffConfig, RffProjector};
pub use stats::GaussianAccumulator;
