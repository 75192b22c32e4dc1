//! d-dimensional fractional Brownian motion on a uniform grid.
//!
//! Two samplers with exact finite-dimensional law are provided:
//! a Cholesky factorization of the fractional Gaussian noise covariance
//! (slow, the test oracle) and circulant embedding of the stationary
//! increment process (the production path, O(n log n)). For H ≤ 1/2 the
//! circulant embedding is nonnegative definite, so both sample the same law.

use std::io::{self, BufRead, Write};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::scalar::Scalar;

/// Hurst range supported by the rough-path machinery: 1/3 < H ≤ 1/2.
pub const HURST_MIN: f64 = 1.0 / 3.0;
pub const HURST_MAX: f64 = 0.5;

/// Size guard for the dense Cholesky sampler.
pub const CHOLESKY_MAX_STEPS: usize = 4096;

/// Relative tolerance on negative circulant eigenvalues (they must not occur
/// for H ≤ 1/2; anything beyond rounding noise is an error).
const EMBEDDING_EIG_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum FbmError {
    #[error("Hurst parameter {hurst} outside supported range ({HURST_MIN:.6}, {HURST_MAX}]")]
    HurstOutOfRange { hurst: f64 },
    #[error("grid must have positive finite horizon and at least one step (got T = {horizon}, n = {steps})")]
    BadGrid { horizon: f64, steps: usize },
    #[error("n = {steps} exceeds the Cholesky sampler guard ({CHOLESKY_MAX_STEPS}); use the circulant sampler `sample_fbm` instead")]
    CholeskySizeGuard { steps: usize },
    #[error("circulant embedding is indefinite: min eigenvalue {min_eig:.3e} (must not occur for H <= 1/2)")]
    IndefiniteEmbedding { min_eig: f64 },
    #[error("covariance matrix is not positive definite (pivot {pivot:.3e} at index {index})")]
    NotPositiveDefinite { pivot: f64, index: usize },
    #[error("component count {dim} out of range 1..={max}")]
    BadDimension { dim: usize, max: usize },
    #[error("path values must be finite (component {component}, index {index})")]
    NonFinite { component: usize, index: usize },
    #[error("component length {got} does not match grid ({want} points)")]
    BadLength { got: usize, want: usize },
    #[error("steps {steps} not divisible by {divisor}")]
    NotDivisible { steps: usize, divisor: usize },
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Uniform time grid t_ℓ = ℓ·h, ℓ = 0..n, with h = T/n.
///
/// The pair (T, n) is the stored representation; the mesh is always derived
/// from it, so refining and coarsening are exact on the stored data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleGrid<T> {
    horizon: T,
    steps: usize,
}

impl<T: Scalar> SampleGrid<T> {
    pub fn new(horizon: T, steps: usize) -> Result<Self, FbmError> {
        if !(horizon > T::zero()) || !horizon.is_finite() || steps == 0 {
            return Err(FbmError::BadGrid { horizon: horizon.as_f64(), steps });
        }
        Ok(Self { horizon, steps })
    }

    #[inline]
    pub fn horizon(&self) -> T {
        self.horizon
    }

    #[inline]
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Mesh h = T/n.
    #[inline]
    pub fn mesh(&self) -> T {
        self.horizon / T::lit(self.steps as f64)
    }

    /// Grid point t_ℓ = ℓ·h.
    #[inline]
    pub fn time(&self, index: usize) -> T {
        self.mesh() * T::lit(index as f64)
    }

    /// Same horizon, `factor` times as many steps.
    pub fn refine(&self, factor: usize) -> Self {
        Self { horizon: self.horizon, steps: self.steps * factor.max(1) }
    }

    /// Same horizon, `factor` times fewer steps; `factor` must divide n.
    pub fn coarsen(&self, factor: usize) -> Result<Self, FbmError> {
        if factor == 0 || self.steps % factor != 0 {
            return Err(FbmError::NotDivisible { steps: self.steps, divisor: factor });
        }
        Ok(Self { horizon: self.horizon, steps: self.steps / factor })
    }

    /// Truncation to the first `steps` intervals (same mesh, shorter horizon).
    pub fn prefix(&self, steps: usize) -> Result<Self, FbmError> {
        if steps == 0 || steps > self.steps {
            return Err(FbmError::BadGrid { horizon: self.horizon.as_f64(), steps });
        }
        Ok(Self { horizon: self.mesh() * T::lit(steps as f64), steps })
    }
}

/// What a path matrix holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathKind {
    Fbm,
    Fou,
}

/// d × (n+1) array of path values on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathMatrix<T> {
    grid: SampleGrid<T>,
    kind: PathKind,
    components: Vec<Vec<T>>,
}

impl<T: Scalar> PathMatrix<T> {
    pub fn from_components(
        grid: SampleGrid<T>,
        kind: PathKind,
        components: Vec<Vec<T>>,
    ) -> Result<Self, FbmError> {
        if components.is_empty() {
            return Err(FbmError::BadDimension { dim: 0, max: usize::MAX });
        }
        for (c, comp) in components.iter().enumerate() {
            if comp.len() != grid.steps() + 1 {
                return Err(FbmError::BadLength { got: comp.len(), want: grid.steps() + 1 });
            }
            if let Some(idx) = comp.iter().position(|v| !v.is_finite()) {
                return Err(FbmError::NonFinite { component: c, index: idx });
            }
        }
        Ok(Self { grid, kind, components })
    }

    #[inline]
    pub fn grid(&self) -> SampleGrid<T> {
        self.grid
    }

    #[inline]
    pub fn kind(&self) -> PathKind {
        self.kind
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.components.len()
    }

    #[inline]
    pub fn value(&self, component: usize, index: usize) -> T {
        self.components[component][index]
    }

    #[inline]
    pub fn component(&self, component: usize) -> &[T] {
        &self.components[component]
    }

    /// State vector at grid index ℓ.
    pub fn state_at(&self, index: usize) -> Vec<T> {
        self.components.iter().map(|c| c[index]).collect()
    }

    pub fn initial_state(&self) -> Vec<T> {
        self.state_at(0)
    }

    /// Keeps every `stride`-th point, producing the path on the coarse grid.
    pub fn subsample(&self, stride: usize) -> Result<Self, FbmError> {
        let grid = self.grid.coarsen(stride)?;
        let components = self
            .components
            .iter()
            .map(|c| c.iter().copied().step_by(stride).collect())
            .collect();
        Ok(Self { grid, kind: self.kind, components })
    }

    /// Truncation to the first `steps` intervals.
    pub fn prefix(&self, steps: usize) -> Result<Self, FbmError> {
        let grid = self.grid.prefix(steps)?;
        let components =
            self.components.iter().map(|c| c[..=steps].to_vec()).collect();
        Ok(Self { grid, kind: self.kind, components })
    }

    /// CSV export: header `t,x1,...,xd`, one row per grid point, 17
    /// significant digits.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        write!(out, "t")?;
        for c in 1..=self.dim() {
            write!(out, ",x{c}")?;
        }
        writeln!(out)?;
        for l in 0..=self.grid.steps() {
            write!(out, "{:.16e}", self.grid.time(l).as_f64())?;
            for comp in &self.components {
                write!(out, ",{:.16e}", comp[l].as_f64())?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

impl PathMatrix<f64> {
    /// Reads a path back from the CSV layout produced by [`Self::write_csv`].
    /// The grid is reconstructed from the last time stamp and the row count.
    pub fn read_csv<R: BufRead>(reader: R, kind: PathKind) -> Result<Self, FbmError> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| FbmError::Csv("empty file".into()))?
            .map_err(FbmError::Io)?;
        let dim = header.split(',').count().saturating_sub(1);
        if dim == 0 {
            return Err(FbmError::Csv(format!("header `{header}` has no value columns")));
        }
        let mut times = Vec::new();
        let mut components: Vec<Vec<f64>> = vec![Vec::new(); dim];
        for (row, line) in lines.enumerate() {
            let line = line.map_err(FbmError::Io)?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != dim + 1 {
                return Err(FbmError::Csv(format!("row {row}: expected {} fields", dim + 1)));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| FbmError::Csv(format!("row {row}: `{s}`: {e}")))
            };
            times.push(parse(fields[0])?);
            for (c, f) in fields[1..].iter().enumerate() {
                components[c].push(parse(f)?);
            }
        }
        if times.len() < 2 {
            return Err(FbmError::Csv("need at least two grid points".into()));
        }
        let steps = times.len() - 1;
        let grid = SampleGrid::new(times[steps], steps)?;
        Self::from_components(grid, kind, components)
    }
}

/// Covariance of fractional Brownian motion,
/// R_H(s, t) = ½ (s^{2H} + t^{2H} − |t − s|^{2H}).
pub fn fbm_cov<T: Scalar>(hurst: T, s: T, t: T) -> Result<T, FbmError> {
    validate_hurst(hurst)?;
    if s < T::zero() || t < T::zero() {
        return Err(FbmError::BadGrid { horizon: s.min(t).as_f64(), steps: 0 });
    }
    let two_h = T::lit(2.0) * hurst;
    Ok(T::lit(0.5) * (s.powf(two_h) + t.powf(two_h) - (t - s).abs().powf(two_h)))
}

/// Autocovariance of fractional Gaussian noise increments on mesh `h` at
/// integer lag `k`: ½ h^{2H} (|k+1|^{2H} − 2|k|^{2H} + |k−1|^{2H}).
pub fn fgn_autocov<T: Scalar>(hurst: T, mesh: T, lag: usize) -> T {
    let two_h = (T::lit(2.0) * hurst).as_f64();
    let k = lag as f64;
    let unit = 0.5 * ((k + 1.0).powf(two_h) - 2.0 * k.powf(two_h) + (k - 1.0).abs().powf(two_h));
    mesh.powf(T::lit(2.0) * hurst) * T::lit(unit)
}

pub(crate) fn validate_hurst<T: Scalar>(hurst: T) -> Result<(), FbmError> {
    let h = hurst.as_f64();
    if !(h > HURST_MIN && h <= HURST_MAX) {
        return Err(FbmError::HurstOutOfRange { hurst: h });
    }
    Ok(())
}

/// Seed coordinates of one Monte Carlo path: the per-component RNG streams
/// are derived from (experiment, path, component), so paths and components
/// can be generated concurrently in any order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathSeed {
    pub experiment: u64,
    pub path: u64,
}

impl PathSeed {
    pub fn new(experiment: u64, path: u64) -> Self {
        Self { experiment, path }
    }
}

/// Maximum number of components addressable by one path seed.
pub const MAX_COMPONENTS: usize = 256;

/// ChaCha8 stream for (experiment seed, path index, component index).
/// The path index occupies the high 56 bits of the stream id, the component
/// the low 8, giving disjoint streams for up to 2^56 paths of 256 components.
pub fn component_rng(seed: PathSeed, component: usize) -> ChaCha8Rng {
    assert!(component < MAX_COMPONENTS, "component index {component} out of range");
    assert!(seed.path < (1u64 << 56), "path index out of range");
    let mut rng = ChaCha8Rng::seed_from_u64(seed.experiment);
    rng.set_stream((seed.path << 8) | component as u64);
    rng
}

/// Circulant-embedding sampler for fractional Gaussian noise (Davies-Harte).
///
/// Precomputes the circulant eigenvalues once per (H, grid); sampling costs
/// one FFT of length 2n. Exact in law whenever the embedding is nonnegative
/// definite, which holds for every H ≤ 1/2.
pub struct FgnSampler<T> {
    hurst: T,
    grid: SampleGrid<T>,
    /// √(λ_j / M) for j = 0..M, scaled by h^H.
    weights: Vec<T>,
    fft: Arc<dyn Fft<T>>,
}

impl<T: Scalar> FgnSampler<T> {
    pub fn new(hurst: T, grid: SampleGrid<T>) -> Result<Self, FbmError> {
        validate_hurst(hurst)?;
        let n = grid.steps();
        let m = 2 * n;
        let unit = T::one();
        let mut row: Vec<Complex<T>> = vec![Complex::new(T::zero(), T::zero()); m];
        for k in 0..=n {
            let c = fgn_autocov(hurst, unit, k);
            row[k] = Complex::new(c, T::zero());
            if k > 0 && k < n {
                row[m - k] = Complex::new(c, T::zero());
            }
        }
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(m);
        fft.process(&mut row);

        let max_eig = row.iter().fold(T::zero(), |acc, c| acc.max(c.re));
        let floor = -T::lit(EMBEDDING_EIG_TOL) * max_eig;
        let mut weights = Vec::with_capacity(m);
        let scale = grid.mesh().powf(hurst);
        for c in &row {
            if c.re < floor {
                return Err(FbmError::IndefiniteEmbedding { min_eig: c.re.as_f64() });
            }
            let lam = c.re.max(T::zero());
            weights.push((lam / T::lit(m as f64)).sqrt() * scale);
        }
        Ok(Self { hurst, grid, weights, fft })
    }

    #[inline]
    pub fn hurst(&self) -> T {
        self.hurst
    }

    #[inline]
    pub fn grid(&self) -> SampleGrid<T> {
        self.grid
    }

    /// One fGn vector of length n on the sampler's grid. Consumes exactly
    /// 2n normal draws from `rng`.
    pub fn sample_fgn<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        let n = self.grid.steps();
        let m = 2 * n;
        let mut spectrum = vec![Complex::new(T::zero(), T::zero()); m];
        spectrum[0] = Complex::new(self.weights[0] * T::standard_normal(rng), T::zero());
        spectrum[n] = Complex::new(self.weights[n] * T::standard_normal(rng), T::zero());
        let inv_sqrt2 = T::lit(std::f64::consts::FRAC_1_SQRT_2);
        for j in 1..n {
            let w = self.weights[j] * inv_sqrt2;
            let re = w * T::standard_normal(rng);
            let im = w * T::standard_normal(rng);
            spectrum[j] = Complex::new(re, im);
            spectrum[m - j] = Complex::new(re, -im);
        }
        self.fft.process(&mut spectrum);
        spectrum[..n].iter().map(|c| c.re).collect()
    }
}

fn cumsum_path<T: Scalar>(increments: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(increments.len() + 1);
    let mut acc = T::zero();
    out.push(acc);
    for &dx in increments {
        acc += dx;
        out.push(acc);
    }
    out
}

/// d-dimensional fBM path from a shared [`FgnSampler`]; component streams
/// derive from the path seed.
pub fn sample_fbm_with<T: Scalar>(
    sampler: &FgnSampler<T>,
    dim: usize,
    seed: PathSeed,
) -> Result<PathMatrix<T>, FbmError> {
    if dim == 0 || dim > MAX_COMPONENTS {
        return Err(FbmError::BadDimension { dim, max: MAX_COMPONENTS });
    }
    let components = (0..dim)
        .map(|c| {
            let mut rng = component_rng(seed, c);
            cumsum_path(&sampler.sample_fgn(&mut rng))
        })
        .collect();
    PathMatrix::from_components(sampler.grid(), PathKind::Fbm, components)
}

/// d-dimensional fBM on `grid` by circulant embedding. B₀ = 0, components
/// independent, deterministic for a fixed seed.
pub fn sample_fbm<T: Scalar>(
    hurst: T,
    grid: SampleGrid<T>,
    dim: usize,
    seed: PathSeed,
) -> Result<PathMatrix<T>, FbmError> {
    let sampler = FgnSampler::new(hurst, grid)?;
    sample_fbm_with(&sampler, dim, seed)
}

/// Exact-law oracle sampler backed by a dense Cholesky factor of the fGn
/// covariance. Guarded to n ≤ 4096; the factorization is cached so repeated
/// draws are O(n²).
pub struct CholeskyFbmSampler<T> {
    hurst: T,
    grid: SampleGrid<T>,
    /// Lower-triangular factor, row-major packed (row ℓ has ℓ+1 entries).
    factor: Vec<T>,
}

impl<T: Scalar> CholeskyFbmSampler<T> {
    pub fn new(hurst: T, grid: SampleGrid<T>) -> Result<Self, FbmError> {
        validate_hurst(hurst)?;
        let n = grid.steps();
        if n > CHOLESKY_MAX_STEPS {
            return Err(FbmError::CholeskySizeGuard { steps: n });
        }
        let mesh = grid.mesh();
        let cov: Vec<T> = (0..n).map(|k| fgn_autocov(hurst, mesh, k)).collect();

        // In-place Cholesky of the symmetric Toeplitz matrix C[i][j] = cov[|i-j|].
        let mut factor = vec![T::zero(); n * (n + 1) / 2];
        let row_start = |i: usize| i * (i + 1) / 2;
        for i in 0..n {
            for j in 0..=i {
                let mut sum = cov[i - j];
                for k in 0..j {
                    sum -= factor[row_start(i) + k] * factor[row_start(j) + k];
                }
                if i == j {
                    if sum <= T::zero() {
                        return Err(FbmError::NotPositiveDefinite {
                            pivot: sum.as_f64(),
                            index: i,
                        });
                    }
                    factor[row_start(i) + j] = sum.sqrt();
                } else {
                    factor[row_start(i) + j] = sum / factor[row_start(j) + j];
                }
            }
        }
        Ok(Self { hurst, grid, factor })
    }

    #[inline]
    pub fn hurst(&self) -> T {
        self.hurst
    }

    #[inline]
    pub fn grid(&self) -> SampleGrid<T> {
        self.grid
    }

    /// One fGn vector; consumes exactly n normal draws.
    pub fn sample_fgn<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        let n = self.grid.steps();
        let z: Vec<T> = (0..n).map(|_| T::standard_normal(rng)).collect();
        let row_start = |i: usize| i * (i + 1) / 2;
        (0..n)
            .map(|i| (0..=i).map(|k| self.factor[row_start(i) + k] * z[k]).sum())
            .collect()
    }

    pub fn sample_path(&self, dim: usize, seed: PathSeed) -> Result<PathMatrix<T>, FbmError> {
        if dim == 0 || dim > MAX_COMPONENTS {
            return Err(FbmError::BadDimension { dim, max: MAX_COMPONENTS });
        }
        let components = (0..dim)
            .map(|c| {
                let mut rng = component_rng(seed, c);
                cumsum_path(&self.sample_fgn(&mut rng))
            })
            .collect();
        PathMatrix::from_components(self.grid, PathKind::Fbm, components)
    }
}

/// d-dimensional fBM with exact covariance by dense Cholesky; the slow
/// oracle counterpart of [`sample_fbm`].
pub fn sample_fbm_cholesky<T: Scalar>(
    hurst: T,
    grid: SampleGrid<T>,
    dim: usize,
    seed: PathSeed,
) -> Result<PathMatrix<T>, FbmError> {
    CholeskyFbmSampler::new(hurst, grid)?.sample_path(dim, seed)
}
