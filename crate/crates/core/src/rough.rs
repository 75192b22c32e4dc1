//! Level-2 rough path lifts of sampled paths.
//!
//! A lifted path stores per-interval increments `X_{t_ℓ, t_{ℓ+1}}` and
//! second-level tensors `𝕏_{t_ℓ, t_{ℓ+1}}` (entry (i, j) is ∫ X^i dX^j over
//! the interval, relative to the interval's left endpoint). The Stratonovich
//! second level comes from the one-step trapezoid `½ ΔX ⊗ ΔX` on a refined
//! grid, assembled back to the observation grid through Chen's identity
//!
//! `𝕏_{s,t} = 𝕏_{s,u} + 𝕏_{u,t} + X_{s,u} ⊗ X_{u,t}`.
//!
//! The Itô lift subtracts increments of the deterministic correction
//! `φ^γ(t) = ½ I t^{2H} − U^γ(t)` scaled by σ²; for the raw driving fBM the
//! scale is 1, and for the mixed areas ∫ X ⊗ dB it is σ.

use std::fmt;
use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::fbm::{FbmError, PathMatrix, SampleGrid};
use crate::linalg::{sym_eig, LinAlgError, SquareMatrix, SymMatrix};
use crate::scalar::Scalar;
use crate::special::{lower_inc_gamma, SpecialError};

#[derive(Debug, Error)]
pub enum RoughError {
    #[error("path has {steps} steps, not divisible into {substeps} substeps per interval")]
    BadRefinement { steps: usize, substeps: usize },
    #[error("grids do not match")]
    GridMismatch,
    #[error("dimensions do not match: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("lift has flavor {got}, expected {want}")]
    FlavorMismatch { want: Flavor, got: Flavor },
    #[error("drift matrix must be positive definite (min eigenvalue {min_eigenvalue:.6e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },
    #[error("Hurst parameter {hurst} outside ({lo:.6}, {hi}]")]
    BadHurst { hurst: f64, lo: f64, hi: f64 },
    #[error("time must be nonnegative, got {t}")]
    BadTime { t: f64 },
    #[error("p = {p} outside the admissible range (2, 3)")]
    BadVariationOrder { p: f64 },
    #[error("lift shape invalid: {0}")]
    BadShape(String),
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error(transparent)]
    Special(#[from] SpecialError),
    #[error(transparent)]
    LinAlg(#[from] LinAlgError),
    #[error(transparent)]
    Fbm(#[from] FbmError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Which second level the lift carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flavor {
    Stratonovich,
    Ito,
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Flavor::Stratonovich => write!(f, "stratonovich"),
            Flavor::Ito => write!(f, "ito"),
        }
    }
}

impl Flavor {
    pub fn parse(s: &str) -> Result<Self, RoughError> {
        match s.trim() {
            "stratonovich" => Ok(Flavor::Stratonovich),
            "ito" => Ok(Flavor::Ito),
            other => Err(RoughError::Csv(format!("unknown flavor `{other}`"))),
        }
    }
}

/// Level-2 lift of a sampled path on a uniform grid.
///
/// Besides the per-interval data the lift keeps the anchored areas
/// `𝕏_{0, t_ℓ}`, composed once at construction time. The redundancy is what
/// makes [`check_chen`] a real check: mutating a single interval area (see
/// [`LiftedPath::perturb_area`]) leaves the anchored tensors stale and shows
/// up as a Chen defect of the same size.
#[derive(Debug, Clone)]
pub struct LiftedPath<T> {
    grid: SampleGrid<T>,
    flavor: Flavor,
    base_point: Vec<T>,
    increments: Vec<Vec<T>>,
    areas: Vec<SquareMatrix<T>>,
    anchored: Vec<SquareMatrix<T>>,
}

impl<T: Scalar> LiftedPath<T> {
    pub fn from_parts(
        grid: SampleGrid<T>,
        flavor: Flavor,
        base_point: Vec<T>,
        increments: Vec<Vec<T>>,
        areas: Vec<SquareMatrix<T>>,
    ) -> Result<Self, RoughError> {
        let n = grid.steps();
        let d = base_point.len();
        if increments.len() != n || areas.len() != n {
            return Err(RoughError::BadShape(format!(
                "expected {n} increments and areas, got {} and {}",
                increments.len(),
                areas.len()
            )));
        }
        if increments.iter().any(|v| v.len() != d) || areas.iter().any(|a| a.dim() != d) {
            return Err(RoughError::BadShape(format!("entries must have dimension {d}")));
        }
        let anchored = compose_anchored(&increments, &areas, d);
        Ok(Self { grid, flavor, base_point, increments, areas, anchored })
    }

    #[inline]
    pub fn grid(&self) -> SampleGrid<T> {
        self.grid
    }

    #[inline]
    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.base_point.len()
    }

    #[inline]
    pub fn base_point(&self) -> &[T] {
        &self.base_point
    }

    /// Increment X_{t_ℓ, t_{ℓ+1}}.
    #[inline]
    pub fn increment(&self, interval: usize) -> &[T] {
        &self.increments[interval]
    }

    /// Second-level tensor 𝕏_{t_ℓ, t_{ℓ+1}}.
    #[inline]
    pub fn area(&self, interval: usize) -> &SquareMatrix<T> {
        &self.areas[interval]
    }

    /// Anchored second level 𝕏_{0, t_ℓ} (Chen-composed at construction).
    #[inline]
    pub fn anchored_area(&self, index: usize) -> &SquareMatrix<T> {
        &self.anchored[index]
    }

    /// 𝕏_{0, T}, the second level over the whole window.
    pub fn total_area(&self) -> &SquareMatrix<T> {
        &self.anchored[self.anchored.len() - 1]
    }

    /// Total increment X_{0, T} by telescoping.
    pub fn total_increment(&self) -> Vec<T> {
        let d = self.dim();
        let mut acc = vec![T::zero(); d];
        for inc in &self.increments {
            for c in 0..d {
                acc[c] += inc[c];
            }
        }
        acc
    }

    /// Adds ε to one entry of one interval area *without* recomposing the
    /// anchored tensors. Diagnostic helper for Chen-defect sensitivity and
    /// perturbation studies.
    pub fn perturb_area(&mut self, interval: usize, i: usize, j: usize, eps: T) {
        let cur = self.areas[interval].get(i, j);
        self.areas[interval].set(i, j, cur + eps);
    }

    /// Truncation to the first `steps` intervals.
    pub fn prefix(&self, steps: usize) -> Result<Self, RoughError> {
        let grid = self.grid.prefix(steps)?;
        Ok(Self {
            grid,
            flavor: self.flavor,
            base_point: self.base_point.clone(),
            increments: self.increments[..steps].to_vec(),
            areas: self.areas[..steps].to_vec(),
            anchored: self.anchored[..=steps].to_vec(),
        })
    }

    /// CSV export: rows `ℓ, t_ℓ, dX_1..dX_d, A_11..A_dd, flavor` (areas in
    /// row-major order), 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        let d = self.dim();
        write!(out, "l,t")?;
        for c in 1..=d {
            write!(out, ",dx{c}")?;
        }
        for i in 1..=d {
            for j in 1..=d {
                write!(out, ",a{i}{j}")?;
            }
        }
        writeln!(out, ",flavor")?;
        for l in 0..self.grid.steps() {
            write!(out, "{l},{:.16e}", self.grid.time(l).as_f64())?;
            for c in 0..d {
                write!(out, ",{:.16e}", self.increments[l][c].as_f64())?;
            }
            for i in 0..d {
                for j in 0..d {
                    write!(out, ",{:.16e}", self.areas[l].get(i, j).as_f64())?;
                }
            }
            writeln!(out, ",{}", self.flavor)?;
        }
        Ok(())
    }
}

impl LiftedPath<f64> {
    /// Reads a lift from the layout of [`Self::write_csv`]. The base point
    /// must be supplied by the caller (the CSV stores only increments).
    pub fn read_csv<R: BufRead>(
        reader: R,
        horizon_hint: Option<f64>,
        base_point: Vec<f64>,
    ) -> Result<Self, RoughError> {
        let mut lines = reader.lines();
        let header =
            lines.next().ok_or_else(|| RoughError::Csv("empty file".into()))?.map_err(RoughError::Io)?;
        let cols = header.split(',').count();
        // Columns: l, t, d increments, d² areas, flavor.
        let d = base_point.len();
        if cols != 3 + d + d * d {
            return Err(RoughError::Csv(format!(
                "header has {cols} columns, expected {} for dimension {d}",
                3 + d + d * d
            )));
        }
        let mut increments = Vec::new();
        let mut areas = Vec::new();
        let mut times = Vec::new();
        let mut flavor = None;
        for (row, line) in lines.enumerate() {
            let line = line.map_err(RoughError::Io)?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != cols {
                return Err(RoughError::Csv(format!("row {row}: expected {cols} fields")));
            }
            let parse = |s: &str| {
                s.trim().parse::<f64>().map_err(|e| RoughError::Csv(format!("row {row}: `{s}`: {e}")))
            };
            times.push(parse(fields[1])?);
            let inc: Result<Vec<f64>, _> = fields[2..2 + d].iter().map(|s| parse(s)).collect();
            increments.push(inc?);
            let mut a = SquareMatrix::zeros(d);
            for i in 0..d {
                for j in 0..d {
                    a.set(i, j, parse(fields[2 + d + i * d + j])?);
                }
            }
            areas.push(a);
            let f = Flavor::parse(fields[cols - 1])?;
            if *flavor.get_or_insert(f) != f {
                return Err(RoughError::Csv(format!("row {row}: mixed flavors")));
            }
        }
        let n = increments.len();
        if n == 0 {
            return Err(RoughError::Csv("no intervals".into()));
        }
        // t column holds left endpoints ℓh; the horizon is n·h.
        let mesh = if n > 1 { times[1] - times[0] } else { horizon_hint.unwrap_or(times[0] + 1.0) };
        let horizon = horizon_hint.unwrap_or(mesh * n as f64);
        let grid = SampleGrid::new(horizon, n)?;
        Self::from_parts(grid, flavor.unwrap(), base_point, increments, areas)
    }
}

fn compose_anchored<T: Scalar>(
    increments: &[Vec<T>],
    areas: &[SquareMatrix<T>],
    d: usize,
) -> Vec<SquareMatrix<T>> {
    let mut anchored = Vec::with_capacity(increments.len() + 1);
    anchored.push(SquareMatrix::zeros(d));
    let mut running_inc = vec![T::zero(); d];
    let mut acc = SquareMatrix::zeros(d);
    for (inc, area) in increments.iter().zip(areas) {
        // Chen: 𝕏_{0,ℓ+1} = 𝕏_{0,ℓ} + 𝕏_{ℓ,ℓ+1} + X_{0,ℓ} ⊗ X_{ℓ,ℓ+1}.
        acc.add_assign(area);
        acc.add_assign(&SquareMatrix::outer(&running_inc, inc));
        anchored.push(acc.clone());
        for c in 0..d {
            running_inc[c] += inc[c];
        }
    }
    anchored
}

/// Stratonovich lift by the one-step trapezoid rule.
///
/// With `substeps` = 1 the supplied grid *is* the observation grid and each
/// area is `½ ΔX ⊗ ΔX`. With `substeps` = m the path must live on the
/// m-fold refined grid; per-substep trapezoid areas are Chen-composed back
/// to the coarse observation grid.
pub fn strat_lift<T: Scalar>(
    path: &PathMatrix<T>,
    substeps: usize,
) -> Result<LiftedPath<T>, RoughError> {
    let substeps = substeps.max(1);
    let fine_n = path.grid().steps();
    if fine_n % substeps != 0 {
        return Err(RoughError::BadRefinement { steps: fine_n, substeps });
    }
    let coarse_n = fine_n / substeps;
    let coarse_grid = path.grid().coarsen(substeps)?;
    let d = path.dim();
    let half = T::lit(0.5);

    let mut increments = Vec::with_capacity(coarse_n);
    let mut areas = Vec::with_capacity(coarse_n);
    for l in 0..coarse_n {
        let start = l * substeps;
        let mut area = SquareMatrix::zeros(d);
        let mut inc = vec![T::zero(); d];
        for k in 0..substeps {
            let fine: Vec<T> = (0..d)
                .map(|c| path.value(c, start + k + 1) - path.value(c, start + k))
                .collect();
            for i in 0..d {
                for j in 0..d {
                    // ½ ΔX ⊗ ΔX on the substep plus the Chen cross term.
                    area.add_to(i, j, half * fine[i] * fine[j] + inc[i] * fine[j]);
                }
            }
            for c in 0..d {
                inc[c] += fine[c];
            }
        }
        // Store the observed increment (endpoint difference), not the
        // accumulated substep sum; the two agree up to rounding.
        let observed: Vec<T> =
            (0..d).map(|c| path.value(c, start + substeps) - path.value(c, start)).collect();
        increments.push(observed);
        areas.push(area);
    }
    LiftedPath::from_parts(
        coarse_grid,
        Flavor::Stratonovich,
        path.initial_state(),
        increments,
        areas,
    )
}

/// φ^γ(t) table on a grid: deterministic, smooth in t, one d×d matrix per
/// grid point, φ(0) = 0. Interval increments come from subtraction, so they
/// are additive by construction.
#[derive(Debug, Clone)]
pub struct CorrectionTable<T> {
    grid: SampleGrid<T>,
    phi: Vec<SquareMatrix<T>>,
    gamma_used: SymMatrix<T>,
    hurst: T,
}

impl<T: Scalar> CorrectionTable<T> {
    pub fn new(
        gamma: &SymMatrix<T>,
        hurst: T,
        grid: SampleGrid<T>,
    ) -> Result<Self, RoughError> {
        let eig = validated_eig(gamma)?;
        validate_phi_hurst(hurst)?;
        let phi = (0..=grid.steps())
            .map(|l| phi_from_eig(&eig, hurst, grid.time(l)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { grid, phi, gamma_used: gamma.clone(), hurst })
    }

    #[inline]
    pub fn grid(&self) -> SampleGrid<T> {
        self.grid
    }

    /// φ^γ(t_ℓ).
    #[inline]
    pub fn at(&self, index: usize) -> &SquareMatrix<T> {
        &self.phi[index]
    }

    /// φ^γ(t_{ℓ+1}) − φ^γ(t_ℓ).
    pub fn increment(&self, interval: usize) -> SquareMatrix<T> {
        self.phi[interval + 1].sub(&self.phi[interval])
    }

    /// The drift matrix the table was built with. The correction is only
    /// computable from the true Γ; estimation consumes lifts whose second
    /// level already embeds it.
    #[inline]
    pub fn gamma_used(&self) -> &SymMatrix<T> {
        &self.gamma_used
    }

    #[inline]
    pub fn hurst(&self) -> T {
        self.hurst
    }
}

fn validated_eig<T: Scalar>(
    gamma: &SymMatrix<T>,
) -> Result<crate::linalg::EigDecomp<T>, RoughError> {
    let eig = sym_eig(gamma);
    if eig.min_eigenvalue() <= T::zero() {
        return Err(RoughError::NotPositiveDefinite {
            min_eigenvalue: eig.min_eigenvalue().as_f64(),
        });
    }
    Ok(eig)
}

fn validate_phi_hurst<T: Scalar>(hurst: T) -> Result<(), RoughError> {
    let h = hurst.as_f64();
    if !(h > crate::fbm::HURST_MIN && h <= crate::fbm::HURST_MAX) {
        return Err(RoughError::BadHurst {
            hurst: h,
            lo: crate::fbm::HURST_MIN,
            hi: crate::fbm::HURST_MAX,
        });
    }
    Ok(())
}

/// Itô correction matrix
///
/// φ^γ(t) = H ∫₀ᵗ e^{−Γs} s^{2H−1} ds + H Γ t ∫₀ᵗ e^{−Γs} s^{2H−1} ds
///          − H Γ ∫₀ᵗ e^{−Γs} s^{2H} ds,
///
/// evaluated through the spectral calculus: for each eigenvalue λ the scalar
/// value is H λ^{−2H} [(1 + λt) γ(2H, λt) − γ(2H+1, λt)] with γ the lower
/// incomplete gamma function. At H = 1/2 this collapses to (t/2)·I exactly,
/// consistent with the classical Itô correction, and the implementation
/// returns that closed form.
pub fn ito_correction_phi<T: Scalar>(
    gamma: &SymMatrix<T>,
    hurst: T,
    t: T,
) -> Result<SquareMatrix<T>, RoughError> {
    let eig = validated_eig(gamma)?;
    validate_phi_hurst(hurst)?;
    phi_from_eig(&eig, hurst, t)
}

fn phi_from_eig<T: Scalar>(
    eig: &crate::linalg::EigDecomp<T>,
    hurst: T,
    t: T,
) -> Result<SquareMatrix<T>, RoughError> {
    if t < T::zero() {
        return Err(RoughError::BadTime { t: t.as_f64() });
    }
    let d = eig.eigenvalues.len();
    if t == T::zero() {
        return Ok(SquareMatrix::zeros(d));
    }
    if hurst == T::lit(0.5) {
        return Ok(SquareMatrix::identity(d).scale(t * T::lit(0.5)));
    }
    let two_h = T::lit(2.0) * hurst;
    let mut scalars = Vec::with_capacity(d);
    for &lam in &eig.eigenvalues {
        let x = lam * t;
        let g1 = lower_inc_gamma(two_h, x)?;
        let g2 = lower_inc_gamma(two_h + T::one(), x)?;
        scalars.push(hurst * lam.powf(-two_h) * ((T::one() + x) * g1 - g2));
    }
    Ok(eig.apply_values(&scalars))
}

/// The t → ∞ slope of φ^γ: lim (1/t) φ^γ(t) = H Γ(2H) · Q diag(λᵢ^{1−2H}) Qᵀ.
pub fn phi_long_time_slope<T: Scalar>(
    gamma: &SymMatrix<T>,
    hurst: T,
) -> Result<SquareMatrix<T>, RoughError> {
    let eig = validated_eig(gamma)?;
    validate_phi_hurst(hurst)?;
    let two_h = T::lit(2.0) * hurst;
    let scale = hurst * crate::special::gamma(two_h);
    Ok(eig.apply(|l| scale * l.powf(T::one() - two_h)))
}

/// Itô lift: areas become `𝕏° − σ² φ_{t_ℓ, t_{ℓ+1}}`; increments are
/// untouched. Pass σ = 1 to convert a lift of the raw driving fBM.
pub fn to_ito_lift<T: Scalar>(
    lift: &LiftedPath<T>,
    table: &CorrectionTable<T>,
    sigma: T,
) -> Result<LiftedPath<T>, RoughError> {
    convert_flavor(lift, table, sigma, Flavor::Stratonovich, Flavor::Ito)
}

/// Inverse of [`to_ito_lift`]: restores the Stratonovich areas.
pub fn to_strat_lift<T: Scalar>(
    lift: &LiftedPath<T>,
    table: &CorrectionTable<T>,
    sigma: T,
) -> Result<LiftedPath<T>, RoughError> {
    convert_flavor(lift, table, sigma, Flavor::Ito, Flavor::Stratonovich)
}

fn convert_flavor<T: Scalar>(
    lift: &LiftedPath<T>,
    table: &CorrectionTable<T>,
    sigma: T,
    want: Flavor,
    to: Flavor,
) -> Result<LiftedPath<T>, RoughError> {
    if lift.flavor() != want {
        return Err(RoughError::FlavorMismatch { want, got: lift.flavor() });
    }
    if lift.grid() != table.grid() {
        return Err(RoughError::GridMismatch);
    }
    if lift.dim() != table.gamma_used().dim() {
        return Err(RoughError::DimensionMismatch {
            left: lift.dim(),
            right: table.gamma_used().dim(),
        });
    }
    let s2 = sigma * sigma;
    let sign = if to == Flavor::Ito { -T::one() } else { T::one() };
    let areas = (0..lift.grid().steps())
        .map(|l| lift.area(l).add(&table.increment(l).scale(sign * s2)))
        .collect();
    LiftedPath::from_parts(
        lift.grid(),
        to,
        lift.base_point().to_vec(),
        (0..lift.grid().steps()).map(|l| lift.increment(l).to_vec()).collect(),
        areas,
    )
}

/// Maximum Chen defect over all adjacent grid triples (t_ℓ, t_{ℓ+1}, t_{ℓ+2}):
/// the double-interval area derived from the anchored tensors is compared
/// with the Chen composition of the two stored interval areas. Lifts built by
/// this module return rounding noise (≤ 1e-12 relative to the squared path
/// scale); a perturbed interval area surfaces at its own magnitude.
pub fn check_chen<T: Scalar>(lift: &LiftedPath<T>) -> T {
    let n = lift.grid().steps();
    let d = lift.dim();
    if n < 2 {
        return T::zero();
    }
    let mut worst = T::zero();
    let mut running = vec![T::zero(); d];
    for l in 0..(n - 1) {
        let inc_a = lift.increment(l);
        let inc_b = lift.increment(l + 1);
        let pair: Vec<T> = (0..d).map(|c| inc_a[c] + inc_b[c]).collect();
        // Route 1: from the anchored representation,
        // 𝕏_{ℓ,ℓ+2} = 𝕏_{0,ℓ+2} − 𝕏_{0,ℓ} − X_{0,ℓ} ⊗ X_{ℓ,ℓ+2}.
        let via_anchored = lift
            .anchored_area(l + 2)
            .sub(lift.anchored_area(l))
            .sub(&SquareMatrix::outer(&running, &pair));
        // Route 2: Chen composition of the stored interval tensors.
        let via_intervals =
            lift.area(l).add(lift.area(l + 1)).add(&SquareMatrix::outer(inc_a, inc_b));
        worst = worst.max(via_anchored.sub(&via_intervals).max_abs());
        for c in 0..d {
            running[c] += inc_a[c];
        }
    }
    worst
}

/// Scale reference for Chen-defect tolerances: (max |X_t − X_0| over the
/// grid)², floored at one.
pub fn chen_scale<T: Scalar>(lift: &LiftedPath<T>) -> T {
    let d = lift.dim();
    let mut running = vec![T::zero(); d];
    let mut sup = T::zero();
    for l in 0..lift.grid().steps() {
        for c in 0..d {
            running[c] += lift.increment(l)[c];
            sup = sup.max(running[c].abs());
        }
    }
    (sup * sup).max(T::one())
}

/// Mixed per-interval second level ∫ X_{t_ℓ, u} ⊗ dB_u for a pair of paths
/// on the same grid, built like [`strat_lift`] (one-step trapezoid plus Chen
/// composition over substeps).
#[derive(Debug, Clone)]
pub struct CrossAreas<T> {
    grid: SampleGrid<T>,
    flavor: Flavor,
    areas: Vec<SquareMatrix<T>>,
}

impl<T: Scalar> CrossAreas<T> {
    #[inline]
    pub fn grid(&self) -> SampleGrid<T> {
        self.grid
    }

    #[inline]
    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    #[inline]
    pub fn area(&self, interval: usize) -> &SquareMatrix<T> {
        &self.areas[interval]
    }
}

/// Stratonovich cross areas of (X, B): per coarse interval,
/// `∫ X_{s,u} ⊗ dB_u ≈ ½ ΔX ⊗ ΔB` on each substep, composed by the mixed
/// Chen identity `𝔸_{s,t} = 𝔸_{s,u} + 𝔸_{u,t} + X_{s,u} ⊗ B_{u,t}`.
pub fn cross_strat<T: Scalar>(
    x: &PathMatrix<T>,
    b: &PathMatrix<T>,
    substeps: usize,
) -> Result<CrossAreas<T>, RoughError> {
    let substeps = substeps.max(1);
    if x.grid() != b.grid() {
        return Err(RoughError::GridMismatch);
    }
    if x.dim() != b.dim() {
        return Err(RoughError::DimensionMismatch { left: x.dim(), right: b.dim() });
    }
    let fine_n = x.grid().steps();
    if fine_n % substeps != 0 {
        return Err(RoughError::BadRefinement { steps: fine_n, substeps });
    }
    let d = x.dim();
    let half = T::lit(0.5);
    let coarse_grid = x.grid().coarsen(substeps)?;
    let mut areas = Vec::with_capacity(fine_n / substeps);
    for l in 0..fine_n / substeps {
        let start = l * substeps;
        let mut area = SquareMatrix::zeros(d);
        let mut inc_x = vec![T::zero(); d];
        for k in 0..substeps {
            let fx: Vec<T> =
                (0..d).map(|c| x.value(c, start + k + 1) - x.value(c, start + k)).collect();
            let fb: Vec<T> =
                (0..d).map(|c| b.value(c, start + k + 1) - b.value(c, start + k)).collect();
            for i in 0..d {
                for j in 0..d {
                    area.add_to(i, j, half * fx[i] * fb[j] + inc_x[i] * fb[j]);
                }
            }
            for c in 0..d {
                inc_x[c] += fx[c];
            }
        }
        areas.push(area);
    }
    Ok(CrossAreas { grid: coarse_grid, flavor: Flavor::Stratonovich, areas })
}

/// Itô cross areas: `∫ X ⊗ dB^γ = ∫ X ⊗ ∘dB − σ φ` — a single power of σ,
/// because only the X factor carries the noise scale.
pub fn cross_to_ito<T: Scalar>(
    cross: &CrossAreas<T>,
    table: &CorrectionTable<T>,
    sigma: T,
) -> Result<CrossAreas<T>, RoughError> {
    if cross.flavor != Flavor::Stratonovich {
        return Err(RoughError::FlavorMismatch {
            want: Flavor::Stratonovich,
            got: cross.flavor,
        });
    }
    if cross.grid != table.grid() {
        return Err(RoughError::GridMismatch);
    }
    let areas = (0..cross.grid.steps())
        .map(|l| cross.areas[l].sub(&table.increment(l).scale(sigma)))
        .collect();
    Ok(CrossAreas { grid: cross.grid, flavor: Flavor::Ito, areas })
}

/// Default variation order for Hurst H: p = 1/H + 0.1 clipped into (2, 3),
/// honoring 2 < 1/H < p < 3.
pub fn default_variation_order<T: Scalar>(hurst: T) -> T {
    let p = 1.0 / hurst.as_f64() + 0.1;
    T::lit(p.clamp(2.0 + 1e-9, 3.0 - 1e-9))
}

/// p-variation rough path distance restricted to grid partitions:
///
/// d_p(𝐗, 𝐘) = max_{i=1,2} sup_𝒫 ( Σ |𝐗^i − 𝐘^i|^{p/i} )^{i/p},
///
/// the supremum taken over partitions with nodes on the common grid and made
/// exact there by dynamic programming (O(n²) per level). The true supremum
/// over all real partitions is not available from discrete data.
pub fn p_var_distance<T: Scalar>(
    a: &LiftedPath<T>,
    b: &LiftedPath<T>,
    p: T,
) -> Result<T, RoughError> {
    let (l1, l2) = p_var_distance_levels(a, b, p)?;
    Ok(l1.max(l2))
}

/// The two level contributions of [`p_var_distance`], (level 1, level 2).
pub fn p_var_distance_levels<T: Scalar>(
    a: &LiftedPath<T>,
    b: &LiftedPath<T>,
    p: T,
) -> Result<(T, T), RoughError> {
    let pf = p.as_f64();
    if !(pf > 2.0 && pf < 3.0) {
        return Err(RoughError::BadVariationOrder { p: pf });
    }
    if a.grid() != b.grid() {
        return Err(RoughError::GridMismatch);
    }
    if a.dim() != b.dim() {
        return Err(RoughError::DimensionMismatch { left: a.dim(), right: b.dim() });
    }
    let n = a.grid().steps();
    let d = a.dim();

    // Cumulative increments X_{0,ℓ} of both lifts.
    let cumulative = |l: &LiftedPath<T>| -> Vec<Vec<T>> {
        let mut out = Vec::with_capacity(n + 1);
        out.push(vec![T::zero(); d]);
        let mut acc = vec![T::zero(); d];
        for i in 0..n {
            for c in 0..d {
                acc[c] += l.increment(i)[c];
            }
            out.push(acc.clone());
        }
        out
    };
    let xa = cumulative(a);
    let xb = cumulative(b);

    // Level-1 member |(X_a − X_b)_{t_i, t_j}| in the Euclidean norm.
    let level1 = |i: usize, j: usize| -> T {
        (0..d)
            .map(|c| {
                let v = (xa[j][c] - xa[i][c]) - (xb[j][c] - xb[i][c]);
                v * v
            })
            .sum::<T>()
            .sqrt()
    };
    // Level-2 member |𝕏_a − 𝕏_b|_{t_i,t_j} (Frobenius), areas reconstructed
    // from the anchored representation.
    let window = |l: &LiftedPath<T>, x: &[Vec<T>], i: usize, j: usize| -> SquareMatrix<T> {
        let inc: Vec<T> = (0..d).map(|c| x[j][c] - x[i][c]).collect();
        l.anchored_area(j).sub(l.anchored_area(i)).sub(&SquareMatrix::outer(&x[i], &inc))
    };
    let level2 = |i: usize, j: usize| -> T {
        window(a, &xa, i, j).sub(&window(b, &xb, i, j)).frobenius_norm()
    };

    let sup_dp = |q: f64, member: &dyn Fn(usize, usize) -> T| -> T {
        // best[j] = max over partitions of [0, t_j] of Σ member^q.
        let mut best = vec![T::zero(); n + 1];
        for j in 1..=n {
            let mut b_j = T::zero();
            for i in 0..j {
                let w = member(i, j).powf(T::lit(q));
                b_j = b_j.max(best[i] + w);
            }
            best[j] = b_j;
        }
        best[n]
    };

    let v1 = sup_dp(pf, &level1).powf(T::lit(1.0 / pf));
    let v2 = sup_dp(pf / 2.0, &level2).powf(T::lit(2.0 / pf));
    Ok((v1, v2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::{sample_fbm, PathKind, PathMatrix, PathSeed};
    use crate::quad::adaptive_simpson;

    fn grid(t: f64, n: usize) -> SampleGrid<f64> {
        SampleGrid::new(t, n).unwrap()
    }

    fn sym(rows: &[Vec<f64>]) -> SymMatrix<f64> {
        SymMatrix::from_rows(rows).unwrap()
    }

    fn sample_path(h: f64, g: SampleGrid<f64>, d: usize, seed: u64) -> PathMatrix<f64> {
        sample_fbm(h, g, d, PathSeed::new(seed, 0)).unwrap()
    }

    #[test]
    fn one_dimensional_total_area_telescopes_to_half_square() {
        let g = grid(2.0, 512);
        let path = sample_path(0.4, g, 1, 3);
        for substeps in [1usize, 4] {
            let fine = sample_path(0.4, grid(2.0, 512 * substeps), 1, 3);
            let lift = strat_lift(if substeps == 1 { &path } else { &fine }, substeps).unwrap();
            let total = lift.total_area().get(0, 0);
            let dx = lift.total_increment()[0];
            let want = 0.5 * dx * dx;
            assert!(
                (total - want).abs() <= 1e-12 * want.abs().max(1.0),
                "substeps {substeps}: {total} vs {want}"
            );
        }
    }

    #[test]
    fn constant_path_lifts_to_zero() {
        let g = grid(1.0, 8);
        let path = PathMatrix::from_components(
            g,
            PathKind::Fou,
            vec![vec![1.5; 9], vec![-0.5; 9]],
        )
        .unwrap();
        let lift = strat_lift(&path, 1).unwrap();
        for l in 0..8 {
            assert_eq!(lift.increment(l), &[0.0, 0.0]);
            assert_eq!(lift.area(l).max_abs(), 0.0);
        }
        assert_eq!(check_chen(&lift), 0.0);
    }

    #[test]
    fn linear_path_single_step_area() {
        // X_t = (t, 2t) on [0, 1] in one step: area = ½ ΔX ⊗ ΔX
        // = ½ [[1, 2], [2, 4]] (the exact Young value for a linear path).
        let g = grid(1.0, 1);
        let path = PathMatrix::from_components(
            g,
            PathKind::Fou,
            vec![vec![0.0, 1.0], vec![0.0, 2.0]],
        )
        .unwrap();
        let lift = strat_lift(&path, 1).unwrap();
        let a = lift.area(0);
        assert_eq!(a.get(0, 0), 0.5);
        assert_eq!(a.get(0, 1), 1.0);
        assert_eq!(a.get(1, 0), 1.0);
        assert_eq!(a.get(1, 1), 2.0);
    }

    #[test]
    fn refinement_must_divide() {
        let g = grid(1.0, 10);
        let path = sample_path(0.4, g, 1, 0);
        assert!(matches!(strat_lift(&path, 3), Err(RoughError::BadRefinement { .. })));
    }

    #[test]
    fn chen_defect_small_for_constructed_lift_and_linear_in_perturbation() {
        let _template = grid(4.0, 256);
        let fine = sample_path(0.45, grid(4.0, 1024), 2, 11);
        let mut lift = strat_lift(&fine, 4).unwrap();
        let baseline = check_chen(&lift);
        let scale = chen_scale(&lift);
        assert!(baseline <= 1e-12 * scale, "defect {baseline:.3e} scale {scale:.3e}");
        // Perturbing one stored area by eps must surface as a defect ~ eps.
        for eps in [1e-3f64, 1e-6, 1e-9] {
            let mut bumped = lift.clone();
            bumped.perturb_area(97, 0, 1, eps);
            let defect = check_chen(&bumped);
            assert!(
                (defect - eps).abs() <= 1e-3 * eps + baseline * 2.0,
                "eps {eps:.1e}: defect {defect:.3e}"
            );
        }
        // Mutating through perturb_area leaves the original untouched.
        lift.perturb_area(0, 0, 0, 0.0);
        assert_eq!(check_chen(&lift), baseline);
    }

    #[test]
    fn phi_zero_at_origin_and_classical_at_half() {
        let gamma = sym(&[vec![1.0, 2.0], vec![2.0, 5.0]]);
        let z = ito_correction_phi(&gamma, 0.4, 0.0).unwrap();
        assert_eq!(z.max_abs(), 0.0);
        // H = 1/2: phi(t) = (t/2) I exactly, any drift.
        let p = ito_correction_phi(&gamma, 0.5, 3.7).unwrap();
        assert_eq!(p.get(0, 0), 1.85);
        assert_eq!(p.get(1, 1), 1.85);
        assert_eq!(p.get(0, 1), 0.0);
    }

    #[test]
    fn phi_rejects_bad_input() {
        let not_pd = sym(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(matches!(
            ito_correction_phi(&not_pd, 0.4, 1.0),
            Err(RoughError::NotPositiveDefinite { .. })
        ));
        let pd = sym(&[vec![2.0]]);
        assert!(matches!(
            ito_correction_phi(&pd, 0.25, 1.0),
            Err(RoughError::BadHurst { .. })
        ));
        assert!(matches!(
            ito_correction_phi(&pd, 0.4, -1.0),
            Err(RoughError::BadTime { .. })
        ));
    }

    #[test]
    fn phi_scalar_matches_double_quadrature() {
        // d = 1, H = 0.4, gamma = 2, t = 1: the incomplete-gamma evaluation
        // against brute-force quadrature of the double-integral definition
        // U(t) = H g ∫₀ᵗ ∫₀ˢ e^{-g(s-u)} (s^{2H-1} - (s-u)^{2H-1}) du ds,
        // the singular (s-u)^{2H-1} factor removed by v = w^{1/(2H)}.
        let (hurst, g, t) = (0.4f64, 2.0f64, 1.0f64);
        let inner = |s: f64| {
            if s == 0.0 {
                // Both pieces vanish like s^{2H}.
                return 0.0;
            }
            let flat = adaptive_simpson(|u| (-g * (s - u)).exp(), 0.0, s, 1e-12) * s.powf(2.0 * hurst - 1.0);
            let singular = adaptive_simpson(
                |w| (-g * w.powf(1.0 / (2.0 * hurst))).exp() / (2.0 * hurst),
                0.0,
                s.powf(2.0 * hurst),
                1e-12,
            );
            flat - singular
        };
        let u = hurst * g * adaptive_simpson(inner, 0.0, t, 1e-10);
        let oracle = 0.5 * t.powf(2.0 * hurst) - u;
        let got = ito_correction_phi(&sym(&[vec![g]]), hurst, t).unwrap().get(0, 0);
        assert!((got - oracle).abs() < 1e-8, "{got} vs {oracle}");
        // Frozen reference value for the same point.
        assert!((got - 0.587_084_176_605_779_56).abs() < 1e-12);
    }

    #[test]
    fn phi_long_time_slope_limit() {
        // (1/t) phi(t) -> H Gamma(2H) Q diag(lambda^{1-2H}) Q^T; for d = 1,
        // H = 1/2, gamma = 2 the limit is 1/2 (and phi(t)/t = 1/2 exactly).
        let g1 = sym(&[vec![2.0]]);
        let slope = phi_long_time_slope(&g1, 0.5).unwrap().get(0, 0);
        assert!((slope - 0.5).abs() < 1e-14);
        let t = 3.0e6f64;
        let traj = ito_correction_phi(&g1, 0.5, t).unwrap().get(0, 0) / t;
        assert_eq!(traj, 0.5);

        let gamma = sym(&[vec![1.0, 2.0], vec![2.0, 5.0]]);
        let hurst = 0.4;
        let want = phi_long_time_slope(&gamma, hurst).unwrap();
        let got = ito_correction_phi(&gamma, hurst, t).unwrap().scale(1.0 / t);
        assert!(got.sub(&want).max_abs() < 1e-5, "{:?}", got.sub(&want).max_abs());
    }

    #[test]
    fn correction_table_is_additive_and_anchored_at_zero() {
        let gamma = sym(&[vec![1.0, 0.5], vec![0.5, 2.0]]);
        let g = grid(2.0, 64);
        let table = CorrectionTable::new(&gamma, 0.42, g).unwrap();
        assert_eq!(table.at(0).max_abs(), 0.0);
        // Increments are differences of point values by construction, and
        // point values agree with direct evaluation.
        for l in [0usize, 7, 33, 63] {
            let direct = ito_correction_phi(&gamma, 0.42, g.time(l)).unwrap();
            assert!(table.at(l).sub(&direct).max_abs() < 1e-12);
            let inc = table.increment(l);
            let want = table.at(l + 1).sub(table.at(l));
            assert_eq!(inc, want);
        }
        assert_eq!(table.gamma_used().get(0, 1), 0.5);
    }

    #[test]
    fn ito_conversion_round_trip_is_bit_exact() {
        let g = grid(1.0, 128);
        let gamma = sym(&[vec![1.0, 0.3], vec![0.3, 2.0]]);
        let path = sample_path(0.45, g, 2, 5);
        let table = CorrectionTable::new(&gamma, 0.45, g).unwrap();
        let strat = strat_lift(&path, 1).unwrap();
        let ito = to_ito_lift(&strat, &table, 1.4).unwrap();
        assert_eq!(ito.flavor(), Flavor::Ito);
        // Increments untouched.
        for l in 0..128 {
            assert_eq!(ito.increment(l), strat.increment(l));
        }
        let back = to_strat_lift(&ito, &table, 1.4).unwrap();
        assert_eq!(back.flavor(), Flavor::Stratonovich);
        for l in 0..128 {
            // (a - c) + c can round in the last place when c dominates a,
            // so the restoration is exact up to one ulp per entry.
            let diff = back.area(l).sub(strat.area(l)).max_abs();
            let scale = strat.area(l).max_abs().max(table.increment(l).max_abs() * 1.4 * 1.4);
            assert!(diff <= f64::EPSILON * scale, "interval {l}: diff {diff:.3e}");
        }
        // sigma = 0: areas unchanged, flavor flipped.
        let noop = to_ito_lift(&strat, &table, 0.0).unwrap();
        for l in 0..128 {
            assert_eq!(noop.area(l), strat.area(l));
        }
        assert_eq!(noop.flavor(), Flavor::Ito);
        // Wrong-flavor input rejected.
        assert!(matches!(
            to_ito_lift(&ito, &table, 1.0),
            Err(RoughError::FlavorMismatch { .. })
        ));
    }

    #[test]
    fn ito_area_at_half_matches_classical_identity() {
        // d = 1, H = 1/2, sigma = 1, X0 = 0: total Itô area over [0, T]
        // equals ½ X_T² − T/2.
        let g = grid(3.0, 2048);
        let path = sample_path(0.5, g, 1, 21);
        let table = CorrectionTable::new(&sym(&[vec![2.0]]), 0.5, g).unwrap();
        let ito = to_ito_lift(&strat_lift(&path, 1).unwrap(), &table, 1.0).unwrap();
        let xt = path.value(0, 2048);
        let want = 0.5 * xt * xt - 3.0 / 2.0;
        let got = ito.total_area().get(0, 0);
        assert!((got - want).abs() < 1e-11, "{got} vs {want}");
    }

    #[test]
    fn cross_areas_match_self_lift_on_identical_paths() {
        // cross_strat(X, X) reproduces the Stratonovich lift areas.
        let g = grid(1.0, 64);
        let path = sample_path(0.4, g, 2, 8);
        let lift = strat_lift(&path, 1).unwrap();
        let cross = cross_strat(&path, &path, 1).unwrap();
        for l in 0..64 {
            assert_eq!(cross.area(l), lift.area(l));
        }
        // Itô correction on cross areas uses a single power of sigma.
        let table = CorrectionTable::new(&sym(&[vec![1.0, 0.0], vec![0.0, 2.0]]), 0.4, g).unwrap();
        let sigma = 1.7;
        let ito_cross = cross_to_ito(&cross, &table, sigma).unwrap();
        for l in 0..64 {
            let want = lift.area(l).sub(&table.increment(l).scale(sigma));
            assert!(ito_cross.area(l).sub(&want).max_abs() < 1e-15);
        }
    }

    #[test]
    fn lift_csv_round_trip() {
        let g = grid(1.0, 32);
        let path = sample_path(0.45, g, 2, 2);
        let table = CorrectionTable::new(&sym(&[vec![1.0, 0.2], vec![0.2, 1.5]]), 0.45, g).unwrap();
        let lift = to_ito_lift(&strat_lift(&path, 1).unwrap(), &table, 1.0).unwrap();
        let mut buf = Vec::new();
        lift.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("l,t,dx1,dx2,a11,a12,a21,a22,flavor\n"));
        assert!(text.lines().nth(1).unwrap().ends_with(",ito"));
        let back = LiftedPath::read_csv(
            std::io::BufReader::new(&buf[..]),
            Some(1.0),
            path.initial_state(),
        )
        .unwrap();
        assert_eq!(back.flavor(), Flavor::Ito);
        assert_eq!(back.grid(), g);
        for l in 0..32 {
            assert_eq!(back.increment(l), lift.increment(l));
            assert_eq!(back.area(l), lift.area(l));
        }
    }

    #[test]
    fn default_variation_order_respects_window() {
        let p45: f64 = default_variation_order(0.45);
        assert!((p45 - (1.0 / 0.45 + 0.1)).abs() < 1e-12);
        let p_half: f64 = default_variation_order(0.5);
        assert!((p_half - 2.1).abs() < 1e-12);
        // Near the lower Hurst boundary the order clips below 3.
        let p_low: f64 = default_variation_order(0.334);
        assert!(p_low < 3.0);
    }

    #[test]
    fn p_var_distance_basics() {
        let g = grid(1.0, 64);
        let path = sample_path(0.45, g, 2, 13);
        let lift = strat_lift(&path, 1).unwrap();
        let p = default_variation_order(0.45);
        // Identity of indiscernibles and symmetry.
        assert_eq!(p_var_distance(&lift, &lift, p).unwrap(), 0.0);
        let other = strat_lift(&sample_path(0.45, g, 2, 14), 1).unwrap();
        let ab = p_var_distance(&lift, &other, p).unwrap();
        let ba = p_var_distance(&other, &lift, p).unwrap();
        assert!((ab - ba).abs() < 1e-13 * ab.max(1.0));
        assert!(ab > 0.0);
        // Order validation.
        assert!(matches!(
            p_var_distance(&lift, &other, 3.5),
            Err(RoughError::BadVariationOrder { .. })
        ));
    }

    #[test]
    fn p_var_level1_recovers_single_interval_shift() {
        let g = grid(1.0, 32);
        let path = sample_path(0.45, g, 2, 17);
        let a = strat_lift(&path, 1).unwrap();
        let mut increments: Vec<Vec<f64>> = (0..32).map(|l| a.increment(l).to_vec()).collect();
        let shift = [3e-3, -4e-3];
        increments[10][0] += shift[0];
        increments[10][1] += shift[1];
        let b = LiftedPath::from_parts(
            g,
            a.flavor(),
            a.base_point().to_vec(),
            increments,
            (0..32).map(|l| a.area(l).clone()).collect(),
        )
        .unwrap();
        let p = default_variation_order(0.45);
        let (level1, _) = p_var_distance_levels(&a, &b, p).unwrap();
        let want = (shift[0] * shift[0] + shift[1] * shift[1]).sqrt();
        assert!(
            (level1 - want).abs() < 1e-12,
            "level-1 contribution {level1:.6e} vs |c| = {want:.6e}"
        );
    }
}
