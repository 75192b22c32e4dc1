//! File output: report CSVs and the run manifest. All numbers print with 17
//! significant digits and every collection is emitted in a fixed order, so a
//! given (config, seed, build) produces byte-identical files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::harness::{DiagnosticsReport, HarnessError, MCReport, Mode, ResolvedExperiment};

fn io_err(context: &str, source: std::io::Error) -> HarnessError {
    HarnessError::Io { context: context.to_string(), source }
}

fn create(path: &Path) -> Result<fs::File, HarnessError> {
    fs::File::create(path).map_err(|e| io_err(&format!("creating {}", path.display()), e))
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes the outputs of a run into the configured directory and returns the
/// file list. Modes map to: `table.csv` (per-entry mean/std rows),
/// `boxplot_H*.csv` (raw samples), `freq_sweep.csv` (mean of the (1,2)
/// entry), plus `manifest.json` always.
pub fn emit_outputs(
    experiment: &ResolvedExperiment,
    reports: &[MCReport],
) -> Result<Vec<PathBuf>, HarnessError> {
    let dir = &experiment.config.outputs;
    fs::create_dir_all(dir).map_err(|e| io_err(&format!("creating {}", dir.display()), e))?;
    let mut written = Vec::new();

    match experiment.config.mode {
        Mode::Table1 | Mode::Table2 | Mode::Diagnostics => {
            written.push(write_table_csv(dir, reports)?);
        }
        Mode::Boxplot => {
            written.push(write_table_csv(dir, reports)?);
            written.extend(write_boxplot_csvs(dir, reports)?);
        }
        Mode::FreqSweep => {
            written.push(write_table_csv(dir, reports)?);
            written.push(write_freq_sweep_csv(dir, reports)?);
        }
    }
    written.push(write_manifest(experiment, reports)?);
    Ok(written)
}

/// `H,T,n,h,entry_i,entry_j,mean,std` with one row per cell and matrix entry.
fn write_table_csv(dir: &Path, reports: &[MCReport]) -> Result<PathBuf, HarnessError> {
    let path = dir.join("table.csv");
    let mut f = create(&path)?;
    let mut w = |s: String| f.write_all(s.as_bytes()).map_err(|e| io_err("writing table.csv", e));
    w("H,T,n,h,entry_i,entry_j,mean,std\n".to_string())?;
    for r in reports {
        let d = r.mean.dim();
        let h = r.cell.horizon / r.cell.steps as f64;
        for i in 0..d {
            for j in 0..d {
                w(format!(
                    "{},{},{},{},{},{},{},{}\n",
                    r.cell.hurst,
                    r.cell.horizon,
                    r.cell.steps,
                    fmt(h),
                    i + 1,
                    j + 1,
                    fmt(r.mean.get(i, j)),
                    fmt(r.std_dev.get(i, j)),
                ))?;
            }
        }
    }
    Ok(path)
}

/// One file per H with the raw estimator samples:
/// `H,T,n,path,entry_i,entry_j,gamma_hat`.
fn write_boxplot_csvs(dir: &Path, reports: &[MCReport]) -> Result<Vec<PathBuf>, HarnessError> {
    let mut out = Vec::new();
    for r in reports {
        let Some(samples) = &r.samples else { continue };
        let path = dir.join(format!("boxplot_H{:.2}.csv", r.cell.hurst));
        let mut f = create(&path)?;
        let mut w =
            |s: String| f.write_all(s.as_bytes()).map_err(|e| io_err("writing boxplot csv", e));
        w("H,T,n,path,entry_i,entry_j,gamma_hat\n".to_string())?;
        for (p, g) in samples.iter().enumerate() {
            for i in 0..g.dim() {
                for j in 0..g.dim() {
                    w(format!(
                        "{},{},{},{},{},{},{}\n",
                        r.cell.hurst,
                        r.cell.horizon,
                        r.cell.steps,
                        p,
                        i + 1,
                        j + 1,
                        fmt(g.get(i, j)),
                    ))?;
                }
            }
        }
        out.push(path);
    }
    Ok(out)
}

/// `H,T,n,h,mean_gamma12`: the off-diagonal mean against sample size.
fn write_freq_sweep_csv(dir: &Path, reports: &[MCReport]) -> Result<PathBuf, HarnessError> {
    let path = dir.join("freq_sweep.csv");
    let mut f = create(&path)?;
    let mut w =
        |s: String| f.write_all(s.as_bytes()).map_err(|e| io_err("writing freq_sweep.csv", e));
    w("H,T,n,h,mean_gamma12\n".to_string())?;
    for r in reports {
        if r.mean.dim() < 2 {
            continue;
        }
        let h = r.cell.horizon / r.cell.steps as f64;
        w(format!(
            "{},{},{},{},{}\n",
            r.cell.hurst,
            r.cell.horizon,
            r.cell.steps,
            fmt(h),
            fmt(r.mean.get(0, 1)),
        ))?;
    }
    Ok(path)
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'static str,
    seed: u64,
    config: &'a crate::harness::ExperimentConfig,
    cells: Vec<ManifestCell>,
}

#[derive(Serialize)]
struct ManifestCell {
    hurst: f64,
    horizon: f64,
    steps: usize,
    mc_paths: usize,
    failures: usize,
    wall_seconds: f64,
}

/// Run manifest (seed, echoed config, package version, wall times). Timing
/// varies between runs, so the manifest is the one output excluded from the
/// byte-for-byte reproducibility guarantee.
fn write_manifest(
    experiment: &ResolvedExperiment,
    reports: &[MCReport],
) -> Result<PathBuf, HarnessError> {
    let path = experiment.config.outputs.join("manifest.json");
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        seed: experiment.config.seed,
        config: &experiment.config,
        cells: reports
            .iter()
            .map(|r| ManifestCell {
                hurst: r.cell.hurst,
                horizon: r.cell.horizon,
                steps: r.cell.steps,
                mc_paths: r.mc_paths,
                failures: r.failures,
                wall_seconds: r.wall_seconds,
            })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    fs::write(&path, text).map_err(|e| io_err(&format!("writing {}", path.display()), e))?;
    Ok(path)
}

/// `check,measured,threshold,pass` rows for a diagnostics report.
pub fn write_diagnostics_csv(dir: &Path, report: &DiagnosticsReport) -> Result<PathBuf, HarnessError> {
    fs::create_dir_all(dir).map_err(|e| io_err(&format!("creating {}", dir.display()), e))?;
    let path = dir.join("diagnostics.csv");
    let mut f = create(&path)?;
    let mut w =
        |s: String| f.write_all(s.as_bytes()).map_err(|e| io_err("writing diagnostics.csv", e));
    w("check,measured,threshold,pass,detail\n".to_string())?;
    for c in &report.checks {
        w(format!(
            "{},{},{},{},\"{}\"\n",
            c.name,
            fmt(c.measured),
            fmt(c.threshold),
            c.pass,
            c.detail.replace('"', "'"),
        ))?;
    }
    Ok(path)
}
