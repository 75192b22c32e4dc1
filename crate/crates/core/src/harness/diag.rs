//! Diagnostics battery: empirical checks of the structural invariants
//! (Chen identity, centered Itô integrals, ergodic limits, Lévy-area decay,
//! path regularity) at configurable Monte Carlo scale.

use rayon::prelude::*;
use serde::Serialize;

use crate::fbm::{sample_fbm_with, FgnSampler, PathMatrix, PathSeed, SampleGrid};
use crate::fou::{c1_limit, euler_simulate, ModelSpec};
use crate::harness::{HarnessError, ResolvedExperiment};
use crate::linalg::{SquareMatrix, SymMatrix};
use crate::rough::{
    check_chen, chen_scale, cross_strat, cross_to_ito, strat_lift, to_ito_lift, CorrectionTable,
};

/// One check: `measured` compared against `threshold` with `pass` the
/// verdict (all checks are of the form measured < threshold).
#[derive(Debug, Clone, Serialize)]
pub struct DiagCheck {
    pub name: &'static str,
    pub measured: f64,
    pub threshold: f64,
    pub pass: bool,
    pub detail: String,
}

impl DiagCheck {
    fn bounded(name: &'static str, measured: f64, threshold: f64, detail: String) -> Self {
        Self { name, measured, threshold, pass: measured < threshold, detail }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    pub checks: Vec<DiagCheck>,
}

impl DiagnosticsReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn scalar_model(gamma: f64, sigma: f64, hurst: f64) -> Result<ModelSpec<f64>, HarnessError> {
    Ok(ModelSpec::new(
        SymMatrix::from_rows(&[vec![gamma]]).map_err(crate::fou::FouError::from)?,
        sigma,
        hurst,
        None,
    )?)
}

fn diag_model(rates: &[f64], sigma: f64, hurst: f64) -> Result<ModelSpec<f64>, HarnessError> {
    Ok(ModelSpec::new(SymMatrix::diagonal(rates), sigma, hurst, None)?)
}

/// Fitted Hölder exponent of a sampled path: least-squares slope of
/// ln max_ℓ |X_{ℓ+k} − X_ℓ| against ln(k h) over dyadic lags k.
pub fn holder_exponent(path: &PathMatrix<f64>, max_lag_exp: u32) -> f64 {
    let n = path.grid().steps();
    let h = path.grid().mesh();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for e in 0..=max_lag_exp {
        let k = 1usize << e;
        if k >= n {
            break;
        }
        let mut sup: f64 = 0.0;
        for c in 0..path.dim() {
            let comp = path.component(c);
            for l in 0..(n + 1 - k) {
                sup = sup.max((comp[l + k] - comp[l]).abs());
            }
        }
        xs.push((k as f64 * h).ln());
        ys.push(sup.ln());
    }
    linear_slope(&xs, &ys)
}

fn linear_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

pub(crate) fn run_battery(
    experiment: &ResolvedExperiment,
) -> Result<DiagnosticsReport, HarnessError> {
    let seed = experiment.config.seed;
    let paths = experiment.config.mc_paths;
    let mut checks = Vec::new();

    checks.push(chen_defect_check(seed)?);
    checks.push(zero_expectation_check(seed, paths.max(200))?);
    checks.push(c1_convergence_check(seed)?);
    checks.push(c2_long_run_check(seed)?);
    checks.push(strat_area_decay_check(seed)?);
    checks.extend(holder_slope_checks(seed)?);

    Ok(DiagnosticsReport { checks })
}

/// Chen defect of a freshly built two-dimensional Itô lift.
fn chen_defect_check(seed: u64) -> Result<DiagCheck, HarnessError> {
    let model = diag_model(&[1.0, 2.0], 1.0, 0.45)?;
    let substeps = 4usize;
    let coarse = SampleGrid::new(10.0, 1 << 10)?;
    let fine = coarse.refine(substeps);
    let sampler = FgnSampler::new(0.45, fine)?;
    let driver = sample_fbm_with(&sampler, 2, PathSeed::new(seed, 0))?;
    let path = euler_simulate(&model, fine, &driver)?;
    let lift = strat_lift(&path, substeps)?;
    let table = CorrectionTable::new(model.gamma(), 0.45, coarse)?;
    let ito = to_ito_lift(&lift, &table, model.sigma())?;
    let defect = check_chen(&ito).max(check_chen(&lift));
    let scale = chen_scale(&ito);
    Ok(DiagCheck::bounded(
        "chen_defect",
        defect,
        1e-12 * scale,
        format!("max defect {defect:.3e} over d = 2, n = 1024, substeps {substeps}"),
    ))
}

/// |MC mean| of the centered integral σ ∫ X ⊗ dB^γ against 3 standard errors.
fn zero_expectation_check(seed: u64, paths: usize) -> Result<DiagCheck, HarnessError> {
    let (hurst, gamma, sigma) = (0.4, 2.0, 1.0);
    let model = scalar_model(gamma, sigma, hurst)?;
    let grid = SampleGrid::new(10.0, 1 << 11)?;
    let sampler = FgnSampler::new(hurst, grid)?;
    let table = CorrectionTable::new(model.gamma(), hurst, grid)?;

    let values: Vec<f64> = (0..paths)
        .into_par_iter()
        .map(|p| -> Result<f64, HarnessError> {
            let b = sample_fbm_with(&sampler, 1, PathSeed::new(seed, p as u64))?;
            let x = euler_simulate(&model, grid, &b)?;
            let cross = cross_to_ito(&cross_strat(&x, &b, 1)?, &table, sigma)?;
            let mut total = 0.0;
            for l in 0..grid.steps() {
                let db = b.value(0, l + 1) - b.value(0, l);
                total += x.value(0, l) * db + cross.area(l).get(0, 0);
            }
            Ok(sigma * total)
        })
        .collect::<Result<_, _>>()?;

    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let stderr = (var / n).sqrt();
    Ok(DiagCheck::bounded(
        "zero_expectation",
        mean.abs(),
        3.0 * stderr,
        format!("mean {mean:.4e}, stderr {stderr:.4e}, {paths} paths"),
    ))
}

/// (1/T) ∫ X² dt against C₁ = σ²/(2γ) = 0.25 for H = 1/2, γ = 2, σ = 1.
fn c1_convergence_check(seed: u64) -> Result<DiagCheck, HarnessError> {
    let model = scalar_model(2.0, 1.0, 0.5)?;
    let grid = SampleGrid::new(200.0, 1 << 13)?;
    let sampler = FgnSampler::new(0.5, grid)?;
    let paths = 20usize;
    let h = grid.mesh();
    let averages: Vec<f64> = (0..paths)
        .into_par_iter()
        .map(|p| -> Result<f64, HarnessError> {
            let b = sample_fbm_with(&sampler, 1, PathSeed::new(seed, p as u64))?;
            let x = euler_simulate(&model, grid, &b)?;
            let sum: f64 = (0..=grid.steps()).map(|l| x.value(0, l) * x.value(0, l)).sum();
            Ok(sum * h / grid.horizon())
        })
        .collect::<Result<_, _>>()?;
    let mean = averages.iter().sum::<f64>() / paths as f64;
    let c1 = c1_limit(&model).get(0, 0);
    Ok(DiagCheck::bounded(
        "c1_convergence",
        (mean - c1).abs() / c1,
        0.10,
        format!("time-average {mean:.4}, limit {c1:.4}, T = 200, {paths} paths"),
    ))
}

/// (1/T) Σ (X ΔX + 𝕏^Itô) against C₂ = −γ C₁ = −0.5 on long single paths.
fn c2_long_run_check(seed: u64) -> Result<DiagCheck, HarnessError> {
    let model = scalar_model(2.0, 1.0, 0.5)?;
    let grid = SampleGrid::new(200.0, 1 << 13)?;
    let sampler = FgnSampler::new(0.5, grid)?;
    let table = CorrectionTable::new(model.gamma(), 0.5, grid)?;
    let paths = 8usize;
    let averages: Vec<f64> = (0..paths)
        .into_par_iter()
        .map(|p| -> Result<f64, HarnessError> {
            let b = sample_fbm_with(&sampler, 1, PathSeed::new(seed, p as u64))?;
            let x = euler_simulate(&model, grid, &b)?;
            let ito = to_ito_lift(&strat_lift(&x, 1)?, &table, model.sigma())?;
            let mut total = 0.0;
            for l in 0..grid.steps() {
                total += x.value(0, l) * ito.increment(l)[0] + ito.area(l).get(0, 0);
            }
            Ok(total / grid.horizon())
        })
        .collect::<Result<_, _>>()?;
    let mean = averages.iter().sum::<f64>() / paths as f64;
    let c2 = -2.0 * 0.25;
    Ok(DiagCheck::bounded(
        "c2_long_run",
        (mean - c2).abs() / c2.abs(),
        0.15,
        format!("long-run average {mean:.4}, limit {c2:.4}, T = 200, {paths} paths"),
    ))
}

/// Decay of the normalized Stratonovich Lévy area: max entry of the
/// 20-path mean of A(T)/T below 0.1 · max |C₁| at T = 400.
fn strat_area_decay_check(seed: u64) -> Result<DiagCheck, HarnessError> {
    let hurst = 0.45;
    let model = diag_model(&[1.0, 2.0], 1.0, hurst)?;
    let grid = SampleGrid::new(400.0, 1 << 13)?;
    let sampler = FgnSampler::new(hurst, grid)?;
    let paths = 20usize;
    let totals: Vec<SquareMatrix<f64>> = (0..paths)
        .into_par_iter()
        .map(|p| -> Result<SquareMatrix<f64>, HarnessError> {
            let b = sample_fbm_with(&sampler, 2, PathSeed::new(seed, p as u64))?;
            let x = euler_simulate(&model, grid, &b)?;
            let lift = strat_lift(&x, 1)?;
            Ok(lift.total_area().scale(1.0 / grid.horizon()))
        })
        .collect::<Result<_, _>>()?;
    let mut mean = SquareMatrix::zeros(2);
    for t in &totals {
        mean.add_assign(t);
    }
    let mean = mean.scale(1.0 / paths as f64);
    let c1_norm = c1_limit(&model).max_abs();
    Ok(DiagCheck::bounded(
        "strat_area_decay",
        mean.max_abs(),
        0.1 * c1_norm,
        format!("max |mean A(T)/T| = {:.4e}, 0.1 |C1| = {:.4e}, T = 400", mean.max_abs(), 0.1 * c1_norm),
    ))
}

/// Fitted Hölder exponents of simulated fOU paths against their H.
fn holder_slope_checks(seed: u64) -> Result<Vec<DiagCheck>, HarnessError> {
    let mut out = Vec::new();
    for (name, hurst) in [("holder_slope_h40", 0.40), ("holder_slope_h45", 0.45)] {
        let model = scalar_model(2.0, 1.0, hurst)?;
        let grid = SampleGrid::new(40.0, 1 << 14)?;
        let sampler = FgnSampler::new(hurst, grid)?;
        let reps = 5usize;
        let slopes: Vec<f64> = (0..reps)
            .into_par_iter()
            .map(|p| -> Result<f64, HarnessError> {
                let b = sample_fbm_with(&sampler, 1, PathSeed::new(seed, p as u64))?;
                let x = euler_simulate(&model, grid, &b)?;
                Ok(holder_exponent(&x, 6))
            })
            .collect::<Result<_, _>>()?;
        let slope = slopes.iter().sum::<f64>() / reps as f64;
        out.push(DiagCheck::bounded(
            name,
            (slope - hurst).abs(),
            0.05,
            format!("fitted exponent {slope:.4}, target {hurst}, {reps} paths of n = 2^14"),
        ));
    }
    Ok(out)
}
