//! Monte Carlo experiment runner, diagnostics battery and file output.
//!
//! The per-path pipeline is pure: fBM sample → Euler integration →
//! Stratonovich lift → Itô correction → discrete estimator. Paths are
//! independent ChaCha streams keyed by (experiment seed, path index,
//! component index), so the runner parallelizes over paths and aggregates
//! into the path-indexed vector; means and standard deviations are reduced
//! by pairwise summation, making the result independent of thread count and
//! scheduling order.

pub mod config;
mod diag;
mod io;

use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

pub use config::{Cell, ExperimentConfig, Mode, ResolvedExperiment};
pub use diag::{holder_exponent, DiagCheck, DiagnosticsReport};
pub use io::{emit_outputs, write_diagnostics_csv};

use crate::estimate::{estimate_discrete, EstimateError};
use crate::fbm::{sample_fbm_with, FbmError, FgnSampler, PathSeed, SampleGrid};
use crate::fou::{euler_simulate, FouError, ModelSpec};
use crate::linalg::SquareMatrix;
use crate::rough::{strat_lift, to_ito_lift, CorrectionTable, RoughError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("cell (H = {hurst}, T = {horizon}, n = {steps}): {failures} of {paths} paths failed (limit 1%); first error: {first}")]
    CellFailed { hurst: f64, horizon: f64, steps: usize, failures: usize, paths: usize, first: String },
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error(transparent)]
    Fou(#[from] FouError),
    #[error(transparent)]
    Fbm(#[from] FbmError),
    #[error(transparent)]
    Rough(#[from] RoughError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
}

/// Aggregated Monte Carlo statistics of one cell.
#[derive(Debug, Clone)]
pub struct MCReport {
    pub cell: Cell,
    pub mean: SquareMatrix<f64>,
    pub std_dev: SquareMatrix<f64>,
    pub mc_paths: usize,
    pub seed: u64,
    /// Paths excluded for singular Gram matrices (excluded, not retried:
    /// retrying would bias the estimator distribution).
    pub failures: usize,
    pub wall_seconds: f64,
    /// Raw estimates, kept only in boxplot mode.
    pub samples: Option<Vec<SquareMatrix<f64>>>,
}

/// One full estimator sample: the per-path pipeline.
pub fn run_single_path(
    model: &ModelSpec<f64>,
    sampler: &FgnSampler<f64>,
    table: &CorrectionTable<f64>,
    substeps: usize,
    seed: PathSeed,
) -> Result<SquareMatrix<f64>, HarnessError> {
    let fine_grid = sampler.grid();
    let driver = sample_fbm_with(sampler, model.dim(), seed)?;
    let path = euler_simulate(model, fine_grid, &driver)?;
    let lift = strat_lift(&path, substeps)?;
    let coarse = if substeps > 1 { path.subsample(substeps)? } else { path };
    let ito = to_ito_lift(&lift, table, model.sigma())?;
    let result = estimate_discrete(&ito, &coarse)?;
    Ok(result.gamma_hat)
}

/// Entrywise pairwise (tree) sum; order-independent up to association depth,
/// identical for serial and parallel callers.
fn pairwise_sum(items: &[SquareMatrix<f64>], dim: usize) -> SquareMatrix<f64> {
    match items.len() {
        0 => SquareMatrix::zeros(dim),
        1 => items[0].clone(),
        len => {
            let (a, b) = items.split_at(len / 2);
            pairwise_sum(a, dim).add(&pairwise_sum(b, dim))
        }
    }
}

fn aggregate(samples: &[SquareMatrix<f64>], dim: usize) -> (SquareMatrix<f64>, SquareMatrix<f64>) {
    let count = samples.len().max(1) as f64;
    let mean = pairwise_sum(samples, dim).scale(1.0 / count);
    let centered: Vec<SquareMatrix<f64>> = samples
        .iter()
        .map(|s| {
            let d = s.sub(&mean);
            SquareMatrix::from_fn(dim, |i, j| d.get(i, j) * d.get(i, j))
        })
        .collect();
    let denom = if samples.len() > 1 { samples.len() as f64 - 1.0 } else { 1.0 };
    let var = pairwise_sum(&centered, dim).scale(1.0 / denom);
    let std_dev = SquareMatrix::from_fn(dim, |i, j| var.get(i, j).sqrt());
    (mean, std_dev)
}

/// Runs one cell: `mc_paths` independent pipelines, aggregated entrywise.
pub fn run_cell(
    model: &ModelSpec<f64>,
    cell: Cell,
    mc_paths: usize,
    seed: u64,
    substeps: usize,
    keep_samples: bool,
) -> Result<MCReport, HarnessError> {
    let start = Instant::now();
    let model = model.with_hurst(cell.hurst)?;
    let coarse_grid = SampleGrid::new(cell.horizon, cell.steps)?;
    let fine_grid = coarse_grid.refine(substeps);
    let sampler = FgnSampler::new(cell.hurst, fine_grid)?;
    let table = CorrectionTable::new(model.gamma(), cell.hurst, coarse_grid)?;

    let outcomes: Vec<Result<SquareMatrix<f64>, HarnessError>> = (0..mc_paths)
        .into_par_iter()
        .map(|path_idx| {
            run_single_path(&model, &sampler, &table, substeps, PathSeed::new(seed, path_idx as u64))
        })
        .collect();

    let mut samples = Vec::with_capacity(mc_paths);
    let mut failures = 0usize;
    let mut first_error = None;
    for outcome in outcomes {
        match outcome {
            Ok(g) => samples.push(g),
            Err(e) => {
                failures += 1;
                first_error.get_or_insert_with(|| e.to_string());
            }
        }
    }
    if failures * 100 > mc_paths {
        return Err(HarnessError::CellFailed {
            hurst: cell.hurst,
            horizon: cell.horizon,
            steps: cell.steps,
            failures,
            paths: mc_paths,
            first: first_error.unwrap_or_default(),
        });
    }

    let (mean, std_dev) = aggregate(&samples, model.dim());
    Ok(MCReport {
        cell,
        mean,
        std_dev,
        mc_paths,
        seed,
        failures,
        wall_seconds: start.elapsed().as_secs_f64(),
        samples: keep_samples.then_some(samples),
    })
}

/// Runs every cell of the experiment. Schedule warnings go to stderr; a cell
/// with more than 1% failed paths aborts the run.
pub fn run_mc(experiment: &ResolvedExperiment) -> Result<Vec<MCReport>, HarnessError> {
    for (cell, value) in &experiment.schedule_warnings {
        eprintln!(
            "warning: cell (H = {}, T = {}, n = {}) violates the high-frequency schedule condition (n h^p = {value:.3} >= 1)",
            cell.hurst, cell.horizon, cell.steps
        );
    }
    let keep_samples = experiment.config.mode == Mode::Boxplot;
    experiment
        .cells
        .iter()
        .map(|&cell| {
            let report = run_cell(
                &experiment.model,
                cell,
                experiment.config.mc_paths,
                experiment.config.seed,
                experiment.config.substeps,
                keep_samples,
            )?;
            eprintln!(
                "cell H = {:.2}, T = {}, n = {}: mean[0][0] = {:.4}, std[0][0] = {:.4}, {} paths, {:.2}s",
                cell.hurst,
                cell.horizon,
                cell.steps,
                report.mean.get(0, 0),
                report.std_dev.get(0, 0),
                report.mc_paths,
                report.wall_seconds
            );
            Ok(report)
        })
        .collect()
}

/// Runs the diagnostics battery at the configured path count.
pub fn diagnostics(experiment: &ResolvedExperiment) -> Result<DiagnosticsReport, HarnessError> {
    diag::run_battery(experiment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SymMatrix;

    #[test]
    fn table1_preset_has_36_cells() {
        let cfg = ExperimentConfig::table1_default();
        let resolved = cfg.resolve().unwrap();
        assert_eq!(resolved.cells.len(), 36, "3 T x 3 n x 4 H");
        assert_eq!(resolved.model.dim(), 1);
        // Every cell combination appears exactly once.
        let distinct: std::collections::BTreeSet<String> = resolved
            .cells
            .iter()
            .map(|c| format!("{}|{}|{}", c.hurst, c.horizon, c.steps))
            .collect();
        assert_eq!(distinct.len(), 36);
    }

    #[test]
    fn table2_preset_has_12_cells() {
        let cfg = ExperimentConfig::table2_default();
        let resolved = cfg.resolve().unwrap();
        assert_eq!(resolved.cells.len(), 12, "4 H x 3 n");
        assert_eq!(resolved.model.dim(), 2);
        assert!(resolved
            .cells
            .iter()
            .any(|c| c.hurst == 0.45 && c.horizon == 40.0 && c.steps == 1 << 13));
    }

    #[test]
    fn config_json_round_trip_and_defaults() {
        let text = r#"{
            "model": {"d": 1, "gamma": [[2.0]], "sigma": 1.0, "hurst": 0.5},
            "mode": "table1",
            "schedule": [[20.0, 1024]],
            "hursts": [0.5],
            "seed": 42
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(cfg.mc_paths, 200, "desk-scale default");
        assert_eq!(cfg.substeps, 1);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.beta, 0.5);
        let resolved = cfg.resolve().unwrap();
        assert_eq!(resolved.cells.len(), 1);
        let echoed = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(echoed.seed, 42);
    }

    #[test]
    fn config_rejects_bad_cells() {
        let mut cfg = ExperimentConfig::table1_default();
        cfg.hursts = vec![0.7];
        assert!(cfg.resolve().is_err());
        let mut cfg = ExperimentConfig::table1_default();
        cfg.mc_paths = 0;
        assert!(cfg.resolve().is_err());
    }

    #[test]
    fn schedule_warnings_flag_finite_cells() {
        // The printed-table cells themselves violate the asymptotic schedule
        // condition; they must warn, not error.
        let resolved = ExperimentConfig::table1_default().resolve().unwrap();
        assert!(!resolved.schedule_warnings.is_empty());
    }

    #[test]
    fn aggregation_is_order_deterministic() {
        let model = crate::fou::ModelSpec::new(
            SymMatrix::from_rows(&[vec![2.0]]).unwrap(),
            1.0,
            0.45,
            None,
        )
        .unwrap();
        let cell = Cell { hurst: 0.45, horizon: 2.0, steps: 128 };
        let serial = {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
            pool.install(|| run_cell(&model, cell, 16, 3, 1, false)).unwrap()
        };
        let parallel = {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
            pool.install(|| run_cell(&model, cell, 16, 3, 1, false)).unwrap()
        };
        assert_eq!(serial.mean, parallel.mean, "bitwise identical aggregates");
        assert_eq!(serial.std_dev, parallel.std_dev);
    }

    #[test]
    fn degenerate_noise_free_cell_recovers_drift() {
        // mc_paths = 1, sigma = 0, nonzero start: the estimator returns the
        // effective Euler decay rate.
        let model = crate::fou::ModelSpec::new(
            SymMatrix::from_rows(&[vec![2.0]]).unwrap(),
            0.0,
            0.45,
            Some(vec![1.0]),
        )
        .unwrap();
        let cell = Cell { hurst: 0.45, horizon: 40.0, steps: 1 << 12 };
        let report = run_cell(&model, cell, 1, 0, 1, false).unwrap();
        // On a noiseless Euler path the trapezoid areas give
        // gamma_hat = gamma (1 - gamma h / 2) + O(h^2): first-order-in-h
        // recovery, bias gamma^2 h / 2 ~ 0.02 here.
        let h = cell.horizon / cell.steps as f64;
        assert!(
            (report.mean.get(0, 0) - 2.0).abs() < 2.0 * 2.0 * h,
            "noiseless recovery: {}",
            report.mean.get(0, 0)
        );
        assert_eq!(report.std_dev.get(0, 0), 0.0);
        assert_eq!(report.failures, 0);
    }
}
