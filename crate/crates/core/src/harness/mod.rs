//! Class-incremental replay, evaluation, synthetic data and sweeps.

pub mod run;
pub mod stream;
pub mod sweep;
pub mod synth;

pub use run::{
    accuracy, average_runs, run_cil, Hyperparameters, Method, MethodConfig, RunReport, RunSummary,
    Seeds, WallTime,
};
pub use stream::{build_stream, partition_sizes, Task, TaskStream};
pub use sweep::{sweep, SweepCell, SweepGrid, SweepRow, SweepTable};
pub use synth::{synth_gaussians, synth_rings, GaussianSpec, RingSpec, SynthDataset};
