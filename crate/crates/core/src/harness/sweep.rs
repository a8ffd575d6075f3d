use std::fmt::Write as _;

use rayon::prelude::*;

use super::run::{run_cil, MethodConfig};
use super::stream::TaskStream;
use crate::error::{KldaError, Result};

/// Grid over transform dimension and bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub transform_dims: Vec<usize>,
    pub sigmas: Vec<f64>,
}

impl SweepGrid {
    pub fn cells(&self) -> Vec<(usize, f64)> {
        self.transform_dims
            .iter()
            .flat_map(|&d| self.sigmas.iter().map(move |&s| (d, s)))
            .collect()
    }
}

/// One run in the sweep. `final_accuracy` is `None` when the run failed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub transform_dim: usize,
    pub sigma: f64,
    pub seed: u64,
    pub final_accuracy: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub transform_dim: usize,
    pub sigma: f64,
    /// Mean over the successful repeats, `None` if all failed.
    pub mean_accuracy: Option<f64>,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// CSV with header `D,sigma,seed,final_accuracy`; failed runs carry `NaN`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("D,sigma,seed,final_accuracy\n");
        for r in &self.rows {
            let acc = r
                .final_accuracy
                .map_or_else(|| "NaN".to_string(), |a| a.to_string());
            writeln!(out, "{},{:e},{},{}", r.transform_dim, r.sigma, r.seed, acc)
                .expect("writing to a String");
        }
        out
    }

    /// Per grid point mean accuracy, in grid order.
    pub fn cells(&self) -> Vec<SweepCell> {
        let mut cells: Vec<SweepCell> = Vec::new();
        let mut sums: Vec<(f64, usize)> = Vec::new();
        for r in &self.rows {
            let idx = match cells
                .iter()
                .position(|c| c.transform_dim == r.transform_dim && c.sigma == r.sigma)
            {
                Some(i) => i,
                None => {
                    cells.push(SweepCell {
                        transform_dim: r.transform_dim,
                        sigma: r.sigma,
                        mean_accuracy: None,
                        failures: 0,
                    });
                    sums.push((0.0, 0));
                    cells.len() - 1
                }
            };
            match r.final_accuracy {
                Some(a) => {
                    sums[idx].0 += a;
                    sums[idx].1 += 1;
                }
                None => cells[idx].failures += 1,
            }
        }
        for (c, (sum, n)) in cells.iter_mut().zip(sums) {
            c.mean_accuracy = (n > 0).then(|| sum / n as f64);
        }
        cells
    }
}

/// Runs every grid point `repeats` times with projector seeds
/// `base.seed + r`. Cells run on a pool of `jobs` threads; a failed run is
/// recorded in its row and does not stop the sweep.
pub fn sweep(
    grid: &SweepGrid,
    stream: &TaskStream,
    base: &MethodConfig,
    repeats: usize,
    jobs: usize,
) -> Result<SweepTable> {
    if grid.transform_dims.is_empty() || grid.sigmas.is_empty() {
        return Err(KldaError::Config("sweep grid is empty".into()));
    }
    if repeats == 0 {
        return Err(KldaError::Config("repeats must be at least 1".into()));
    }
    let jobs = jobs.max(1);
    let runs: Vec<(usize, f64, u64)> = grid
        .cells()
        .into_iter()
        .flat_map(|(d, s)| (0..repeats as u64).map(move |r| (d, s, r)))
        .map(|(d, s, r)| (d, s, base.seed.wrapping_add(r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| KldaError::Config(format!("cannot start {jobs} workers: {e}")))?;
    let rows = pool.install(|| {
        runs.par_iter()
            .map(|&(transform_dim, sigma, seed)| {
                let config = MethodConfig {
                    transform_dim,
                    sigma,
                    seed,
                    ..base.clone()
                };
                let (final_accuracy, error) = match run_cil(stream, &config) {
                    Ok(rep) if rep.complete => (rep.final_accuracy, None),
                    Ok(rep) => (None, rep.error),
                    Err(e) => (None, Some(e.to_string())),
                };
                SweepRow {
                    transform_dim,
                    sigma,
                    seed,
                    final_accuracy,
                    error,
                }
            })
            .collect()
    });
    Ok(SweepTable { rows })
}
