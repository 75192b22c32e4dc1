//! Experiment configuration: JSON schema, validation and the built-in
//! experiment grids for each mode.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::estimate::schedule_check;
use crate::fou::{ModelSpec, ModelSpecJson};
use crate::harness::HarnessError;

/// What the runner produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// d = 1 mean/std grid over (T, n, H) cells.
    Table1,
    /// d = 2 mean/std cells with per-H horizons.
    Table2,
    /// Raw estimator samples per H at a fixed (T, n).
    Boxplot,
    /// Mean of the (1,2) entry against n at fixed T.
    FreqSweep,
    /// Invariant battery.
    Diagnostics,
}

fn default_mc_paths() -> usize {
    200
}
fn default_substeps() -> usize {
    1
}
fn default_outputs() -> PathBuf {
    PathBuf::from("out")
}
fn default_beta() -> f64 {
    0.5
}

/// JSON experiment description.
///
/// `schedule` holds (T, n) pairs and `hursts` the H values; cells are their
/// product (mode `table2` pairs them per H instead). Empty lists pull in the
/// built-in grid of the selected mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelSpecJson,
    #[serde(default)]
    pub schedule: Vec<(f64, usize)>,
    #[serde(default)]
    pub hursts: Vec<f64>,
    #[serde(default = "default_mc_paths")]
    pub mc_paths: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default = "default_outputs")]
    pub outputs: PathBuf,
    pub mode: Mode,
    #[serde(default = "default_beta")]
    pub beta: f64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// The reference one-dimensional experiment: γ = 2, σ = 1.
    pub fn table1_default() -> Self {
        Self {
            model: ModelSpecJson {
                d: 1,
                gamma: vec![vec![2.0]],
                sigma: 1.0,
                hurst: 0.5,
                x0: None,
            },
            schedule: Vec::new(),
            hursts: Vec::new(),
            mc_paths: default_mc_paths(),
            seed: 0,
            substeps: 1,
            outputs: default_outputs(),
            mode: Mode::Table1,
            beta: default_beta(),
        }
    }

    /// The two-dimensional experiment: Γ = [[1, 2], [2, 5]], σ = 1.
    pub fn table2_default() -> Self {
        Self {
            model: ModelSpecJson {
                d: 2,
                gamma: vec![vec![1.0, 2.0], vec![2.0, 5.0]],
                sigma: 1.0,
                hurst: 0.45,
                x0: None,
            },
            schedule: Vec::new(),
            hursts: Vec::new(),
            mc_paths: 100,
            seed: 0,
            substeps: 1,
            outputs: default_outputs(),
            mode: Mode::Table2,
            beta: default_beta(),
        }
    }
}

/// One experiment cell: fixed Hurst parameter, horizon and step count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cell {
    pub hurst: f64,
    pub horizon: f64,
    pub steps: usize,
}

/// Config with validated model and the mode's cell list materialized.
#[derive(Debug, Clone)]
pub struct ResolvedExperiment {
    pub config: ExperimentConfig,
    pub model: ModelSpec<f64>,
    pub cells: Vec<Cell>,
    /// Cells whose (T, n, H) fall outside the high-frequency schedule
    /// condition (reported, not rejected: any single finite cell is).
    pub schedule_warnings: Vec<(Cell, f64)>,
}

const TABLE1_HORIZONS: [f64; 3] = [20.0, 30.0, 40.0];
const TABLE1_STEPS: [usize; 3] = [1 << 10, 1 << 11, 1 << 12];
const HURST_GRID: [f64; 4] = [0.35, 0.40, 0.45, 0.50];

/// The exact (H, T, n) triples of the two-dimensional experiment; the
/// horizon shrinks with H so that the sampling-frequency condition stays
/// balanced, and no closed-form rule generates them.
pub const TABLE2_CELLS: [(f64, f64, usize); 12] = [
    (0.50, 20.0, 1 << 11),
    (0.50, 30.0, 1 << 12),
    (0.50, 40.0, 1 << 13),
    (0.45, 13.0, 1 << 11),
    (0.45, 22.0, 1 << 12),
    (0.45, 40.0, 1 << 13),
    (0.40, 14.0, 1 << 11),
    (0.40, 20.0, 1 << 12),
    (0.40, 35.0, 1 << 13),
    (0.35, 14.0, 1 << 11),
    (0.35, 20.0, 1 << 12),
    (0.35, 30.0, 1 << 13),
];

impl ExperimentConfig {
    pub fn resolve(&self) -> Result<ResolvedExperiment, HarnessError> {
        if self.mc_paths == 0 {
            return Err(HarnessError::Config("mc_paths must be at least 1".into()));
        }
        if self.substeps == 0 {
            return Err(HarnessError::Config("substeps must be at least 1".into()));
        }
        let model = ModelSpec::from_repr(&self.model)?;

        let hursts: Vec<f64> = if self.hursts.is_empty() {
            match self.mode {
                Mode::Table1 | Mode::Table2 | Mode::Boxplot | Mode::FreqSweep => {
                    HURST_GRID.to_vec()
                }
                Mode::Diagnostics => vec![self.model.hurst],
            }
        } else {
            self.hursts.clone()
        };

        let mut cells = Vec::new();
        match self.mode {
            Mode::Table1 | Mode::Diagnostics => {
                let schedule: Vec<(f64, usize)> = if self.schedule.is_empty() {
                    TABLE1_HORIZONS
                        .iter()
                        .flat_map(|&t| TABLE1_STEPS.iter().map(move |&n| (t, n)))
                        .collect()
                } else {
                    self.schedule.clone()
                };
                for &hurst in &hursts {
                    for &(horizon, steps) in &schedule {
                        cells.push(Cell { hurst, horizon, steps });
                    }
                }
            }
            Mode::Table2 => {
                if self.schedule.is_empty() {
                    for &(hurst, horizon, steps) in &TABLE2_CELLS {
                        if self.hursts.is_empty() || self.hursts.contains(&hurst) {
                            cells.push(Cell { hurst, horizon, steps });
                        }
                    }
                } else {
                    for &hurst in &hursts {
                        for &(horizon, steps) in &self.schedule {
                            cells.push(Cell { hurst, horizon, steps });
                        }
                    }
                }
            }
            Mode::Boxplot => {
                let schedule = if self.schedule.is_empty() {
                    vec![(80.0, 1usize << 13)]
                } else {
                    self.schedule.clone()
                };
                for &hurst in &hursts {
                    for &(horizon, steps) in &schedule {
                        cells.push(Cell { hurst, horizon, steps });
                    }
                }
            }
            Mode::FreqSweep => {
                let schedule: Vec<(f64, usize)> = if self.schedule.is_empty() {
                    (8..=14).map(|k| (40.0, 1usize << k)).collect()
                } else {
                    self.schedule.clone()
                };
                for &hurst in &hursts {
                    for &(horizon, steps) in &schedule {
                        cells.push(Cell { hurst, horizon, steps });
                    }
                }
            }
        }

        for cell in &cells {
            if cell.horizon <= 0.0 || cell.steps == 0 {
                return Err(HarnessError::Config(format!(
                    "invalid schedule cell (T = {}, n = {})",
                    cell.horizon, cell.steps
                )));
            }
            if !(cell.hurst > crate::fbm::HURST_MIN && cell.hurst <= crate::fbm::HURST_MAX) {
                return Err(HarnessError::Config(format!(
                    "Hurst value {} outside ({:.6}, {}]",
                    cell.hurst,
                    crate::fbm::HURST_MIN,
                    crate::fbm::HURST_MAX
                )));
            }
        }

        let schedule_warnings = cells
            .iter()
            .filter_map(|&cell| {
                let check = schedule_check(cell.horizon, cell.steps, cell.hurst, self.beta);
                (!check.ok).then_some((cell, check.value))
            })
            .collect();

        Ok(ResolvedExperiment { config: self.clone(), model, cells, schedule_warnings })
    }
}
