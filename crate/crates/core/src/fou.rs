//! The fractional Ornstein-Uhlenbeck model
//! `dX_t = -Γ X_t dt + σ dB_t^H`, its Euler discretization, the stationary
//! covariance r(t) of the one-dimensional process, and the ergodic limit
//! constants C₁(H), C₂(H) used as estimation oracles.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fbm::{FbmError, PathKind, PathMatrix, SampleGrid};
use crate::linalg::{sym_eig, LinAlgError, SquareMatrix, SymMatrix};
use crate::quad::adaptive_simpson;
use crate::scalar::Scalar;
use crate::special::{gamma, hyp1f2, SpecialError};

/// λt beyond which the cosh / ₁F₂ form of r(t) is abandoned for the
/// asymptotic series (the two terms cancel catastrophically).
pub const SERIES_SWITCH: f64 = 20.0;

/// Relative precision loss at which [`stationary_cov_series`] refuses to
/// return a value.
pub const CANCELLATION_LIMIT: f64 = 1e-6;

/// Number of terms kept in the large-t asymptotic expansion of r(t).
pub const ASYMPTOTIC_TERMS: usize = 4;

#[derive(Debug, Error)]
pub enum FouError {
    #[error("Hurst parameter {hurst} outside ({lo}, {hi}]")]
    BadHurst { hurst: f64, lo: f64, hi: f64 },
    #[error("noise scale must be nonnegative, got sigma = {sigma}")]
    BadSigma { sigma: f64 },
    #[error("drift matrix is not positive definite (min eigenvalue {min_eigenvalue:.6e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },
    #[error("initial state has length {got}, model dimension is {want}")]
    BadInitialState { got: usize, want: usize },
    #[error("mean-reversion rate must be positive, got lambda = {lambda}")]
    BadLambda { lambda: f64 },
    #[error("time argument must be nonnegative, got t = {t}")]
    BadTime { t: f64 },
    #[error("driver path has kind {got:?}, expected {want:?}")]
    KindMismatch { want: PathKind, got: PathKind },
    #[error("driver grid or dimension does not match (grid match: {grid_matches}, driver d = {driver_dim}, model d = {model_dim})")]
    ShapeMismatch { grid_matches: bool, driver_dim: usize, model_dim: usize },
    #[error("catastrophic cancellation in the cosh/hypergeometric form of r(t): estimated relative error {relative_error:.3e}; use stationary_cov_asymptotic for lambda*t = {lambda_t:.3}")]
    Cancellation { relative_error: f64, lambda_t: f64 },
    #[error("no convexity change of r found in (0, {scanned}]")]
    NoConvexityChange { scanned: f64 },
    #[error("model JSON: {0}")]
    Json(String),
    #[error(transparent)]
    Special(#[from] SpecialError),
    #[error(transparent)]
    LinAlg(#[from] LinAlgError),
    #[error(transparent)]
    Fbm(#[from] FbmError),
}

/// The fOU model: symmetric positive-definite drift Γ, scalar noise Σ = σI,
/// Hurst parameter H ∈ (1/3, 1/2], initial state x₀ (default 0).
#[derive(Debug, Clone)]
pub struct ModelSpec<T> {
    dim: usize,
    gamma: SymMatrix<T>,
    sigma: T,
    hurst: T,
    x0: Vec<T>,
}

impl<T: Scalar> ModelSpec<T> {
    /// Validated constructor: Γ must be positive definite and H in range.
    /// σ = 0 is accepted for deterministic (noise-free) configurations.
    pub fn new(
        gamma: SymMatrix<T>,
        sigma: T,
        hurst: T,
        x0: Option<Vec<T>>,
    ) -> Result<Self, FouError> {
        let eig = sym_eig(&gamma);
        if eig.min_eigenvalue() <= T::zero() {
            return Err(FouError::NotPositiveDefinite {
                min_eigenvalue: eig.min_eigenvalue().as_f64(),
            });
        }
        Self::new_unchecked(gamma, sigma, hurst, x0)
    }

    /// Skips the positive-definiteness requirement on Γ (still symmetric).
    /// Degenerate drifts (for example Γ = 0) are useful in validation runs;
    /// the estimators themselves do not require PD input.
    pub fn new_unchecked(
        gamma: SymMatrix<T>,
        sigma: T,
        hurst: T,
        x0: Option<Vec<T>>,
    ) -> Result<Self, FouError> {
        let h = hurst.as_f64();
        if !(h > crate::fbm::HURST_MIN && h <= crate::fbm::HURST_MAX) {
            return Err(FouError::BadHurst {
                hurst: h,
                lo: crate::fbm::HURST_MIN,
                hi: crate::fbm::HURST_MAX,
            });
        }
        if sigma < T::zero() || !sigma.is_finite() {
            return Err(FouError::BadSigma { sigma: sigma.as_f64() });
        }
        let dim = gamma.dim();
        let x0 = x0.unwrap_or_else(|| vec![T::zero(); dim]);
        if x0.len() != dim {
            return Err(FouError::BadInitialState { got: x0.len(), want: dim });
        }
        Ok(Self { dim, gamma, sigma, hurst, x0 })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn gamma(&self) -> &SymMatrix<T> {
        &self.gamma
    }

    #[inline]
    pub fn sigma(&self) -> T {
        self.sigma
    }

    #[inline]
    pub fn hurst(&self) -> T {
        self.hurst
    }

    #[inline]
    pub fn x0(&self) -> &[T] {
        &self.x0
    }

    pub fn with_hurst(&self, hurst: T) -> Result<Self, FouError> {
        Self::new_unchecked(self.gamma.clone(), self.sigma, hurst, Some(self.x0.clone()))
    }
}

/// JSON representation: `{"d":…, "gamma":[[…]], "sigma":…, "hurst":…, "x0":[…]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpecJson {
    pub d: usize,
    pub gamma: Vec<Vec<f64>>,
    pub sigma: f64,
    pub hurst: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
}

impl ModelSpec<f64> {
    pub fn from_json(text: &str) -> Result<Self, FouError> {
        let repr: ModelSpecJson =
            serde_json::from_str(text).map_err(|e| FouError::Json(e.to_string()))?;
        Self::from_repr(&repr)
    }

    pub fn from_repr(repr: &ModelSpecJson) -> Result<Self, FouError> {
        if repr.gamma.len() != repr.d {
            return Err(FouError::Json(format!(
                "gamma has {} rows, d = {}",
                repr.gamma.len(),
                repr.d
            )));
        }
        let gamma = SymMatrix::from_rows(&repr.gamma)?;
        Self::new(gamma, repr.sigma, repr.hurst, repr.x0.clone())
    }

    pub fn to_repr(&self) -> ModelSpecJson {
        ModelSpecJson {
            d: self.dim,
            gamma: self.gamma.as_matrix().rows(),
            sigma: self.sigma,
            hurst: self.hurst,
            x0: Some(self.x0.clone()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_repr()).expect("model serializes")
    }
}

/// Euler scheme on the driver's grid:
/// `X_{(ℓ+1)h} = X_{ℓh} − Γ X_{ℓh} h + σ ΔB^H_ℓ`, `X₀ = model.x0`.
pub fn euler_simulate<T: Scalar>(
    model: &ModelSpec<T>,
    grid: SampleGrid<T>,
    driver: &PathMatrix<T>,
) -> Result<PathMatrix<T>, FouError> {
    if driver.kind() != PathKind::Fbm {
        return Err(FouError::KindMismatch { want: PathKind::Fbm, got: driver.kind() });
    }
    if driver.grid() != grid || driver.dim() != model.dim() {
        return Err(FouError::ShapeMismatch {
            grid_matches: driver.grid() == grid,
            driver_dim: driver.dim(),
            model_dim: model.dim(),
        });
    }
    let d = model.dim();
    let n = grid.steps();
    let h = grid.mesh();
    let gamma = model.gamma().as_matrix();
    let sigma = model.sigma();

    let mut components: Vec<Vec<T>> = (0..d)
        .map(|c| {
            let mut v = Vec::with_capacity(n + 1);
            v.push(model.x0()[c]);
            v
        })
        .collect();
    let mut state: Vec<T> = model.x0().to_vec();
    for l in 0..n {
        let drift = gamma.matvec(&state);
        for c in 0..d {
            let db = driver.value(c, l + 1) - driver.value(c, l);
            state[c] = state[c] - drift[c] * h + sigma * db;
            components[c].push(state[c]);
        }
    }
    Ok(PathMatrix::from_components(grid, PathKind::Fou, components)?)
}

fn validate_cov_args<T: Scalar>(hurst: T, lambda: T, t: T) -> Result<(), FouError> {
    let h = hurst.as_f64();
    // r(t) is the covariance of the stationary one-dimensional fOU process;
    // the closed form holds for every H in (0, 1/2], wider than the
    // rough-path range of the model itself.
    if !(h > 0.0 && h <= 0.5) {
        return Err(FouError::BadHurst { hurst: h, lo: 0.0, hi: 0.5 });
    }
    if lambda <= T::zero() {
        return Err(FouError::BadLambda { lambda: lambda.as_f64() });
    }
    if t < T::zero() {
        return Err(FouError::BadTime { t: t.as_f64() });
    }
    Ok(())
}

/// Stationary covariance of the one-dimensional fOU process,
///
/// r(t) = (σ²/2λ^{2H}) Γ(2H+1) cosh(λt) − (σ²/2) t^{2H} ₁F₂(1; H+½, H+1; ¼λ²t²),
///
/// with an automatic switch to the large-t asymptotic series once the two
/// terms above cancel beyond recovery (λt ≳ 20 in double precision).
pub fn stationary_cov<T: Scalar>(hurst: T, lambda: T, sigma: T, t: T) -> Result<T, FouError> {
    validate_cov_args(hurst, lambda, t)?;
    if (lambda * t).as_f64() <= SERIES_SWITCH {
        match stationary_cov_series(hurst, lambda, sigma, t) {
            Ok(v) => Ok(v),
            Err(FouError::Cancellation { .. }) => stationary_cov_asymptotic(hurst, lambda, sigma, t),
            Err(e) => Err(e),
        }
    } else {
        stationary_cov_asymptotic(hurst, lambda, sigma, t)
    }
}

/// The cosh / ₁F₂ closed form of r(t). Fails with
/// [`FouError::Cancellation`] when the estimated relative error of the
/// difference exceeds [`CANCELLATION_LIMIT`].
pub fn stationary_cov_series<T: Scalar>(
    hurst: T,
    lambda: T,
    sigma: T,
    t: T,
) -> Result<T, FouError> {
    validate_cov_args(hurst, lambda, t)?;
    let two_h = T::lit(2.0) * hurst;
    let half = T::lit(0.5);
    let lt = lambda * t;
    let term1 =
        sigma * sigma * half * lambda.powf(-two_h) * gamma(two_h + T::one()) * lt.cosh();
    let term2 = if t == T::zero() {
        T::zero()
    } else {
        let arg = T::lit(0.25) * lt * lt;
        sigma * sigma * half * t.powf(two_h) * hyp1f2(T::one(), hurst + half, hurst + T::one(), arg)?
    };
    let r = term1 - term2;
    let magnitude = term1.abs().max(term2.abs());
    if magnitude > T::zero() {
        let rel_err = (magnitude * T::epsilon() / r.abs().max(T::min_positive_value())).as_f64();
        if rel_err > CANCELLATION_LIMIT {
            return Err(FouError::Cancellation { relative_error: rel_err, lambda_t: lt.as_f64() });
        }
    }
    Ok(r)
}

/// Large-t expansion of r(t):
/// ½σ² Σ_{n=1}^{N} λ^{-2n} (∏_{k=0}^{2n-1} (2H−k)) t^{2H−2n}, N = 4.
pub fn stationary_cov_asymptotic<T: Scalar>(
    hurst: T,
    lambda: T,
    sigma: T,
    t: T,
) -> Result<T, FouError> {
    validate_cov_args(hurst, lambda, t)?;
    if t == T::zero() {
        return Err(FouError::BadTime { t: 0.0 });
    }
    let two_h = T::lit(2.0) * hurst;
    let mut sum = T::zero();
    let mut product = T::one();
    let mut k = 0usize;
    for n in 1..=ASYMPTOTIC_TERMS {
        while k < 2 * n {
            product *= two_h - T::lit(k as f64);
            k += 1;
        }
        sum += lambda.powi(-2 * n as i32) * product * t.powf(two_h - T::lit(2.0 * n as f64));
    }
    Ok(T::lit(0.5) * sigma * sigma * sum)
}

/// Value of r at the origin, σ² λ^{-2H} H Γ(2H).
pub fn stationary_var<T: Scalar>(hurst: T, lambda: T, sigma: T) -> Result<T, FouError> {
    validate_cov_args(hurst, lambda, T::zero())?;
    let two_h = T::lit(2.0) * hurst;
    Ok(sigma * sigma * lambda.powf(-two_h) * hurst * gamma(two_h))
}

/// Independent spectral-integral oracle for r(t):
///
/// r(t) = (σ²/λ^{2H}) (Γ(2H+1) sin(πH)/π) ∫₀^∞ cos(λtx) x^{1−2H}/(1+x²) dx.
///
/// The finite part is integrated after the substitution x = u^{1/(2−2H)}
/// (which removes the x^{1−2H} kink at the origin); the oscillatory tail is
/// summed by the repeated integration-by-parts expansion. Arithmetic runs in
/// double precision; accuracy is ~1e-10 absolute for λt ≤ 35.
pub fn stationary_cov_spectral<T: Scalar>(
    hurst: T,
    lambda: T,
    sigma: T,
    t: T,
) -> Result<T, FouError> {
    validate_cov_args(hurst, lambda, t)?;
    let h = hurst.as_f64();
    let lam = lambda.as_f64();
    let sig = sigma.as_f64();
    let w = lam * t.as_f64();
    let integral = spectral_integral(w, h);
    let pre = sig * sig * lam.powf(-2.0 * h) * gamma(2.0 * h + 1.0) * (std::f64::consts::PI * h).sin()
        / std::f64::consts::PI;
    Ok(T::lit(pre * integral))
}

/// ∫₀^∞ cos(w x) x^{1−2H}/(1+x²) dx.
fn spectral_integral(w: f64, h: f64) -> f64 {
    if w == 0.0 {
        // Closed form of the Mellin-type integral at zero frequency.
        return std::f64::consts::FRAC_PI_2 / (std::f64::consts::PI * h).sin();
    }
    let cut = (35.0 / w).max(10.0);
    // Finite part on [0, cut] after x = u^p with p = 1/(2-2H).
    let p = 1.0 / (2.0 - 2.0 * h);
    let u_max = cut.powf(1.0 / p);
    let main = adaptive_simpson(
        |u| {
            let x = u.powf(p);
            p * (w * x).cos() / (1.0 + x * x)
        },
        0.0,
        u_max,
        1e-12,
    );
    main + spectral_tail(w, h, cut)
}

/// Tail ∫_X^∞ cos(wx) x^{1−2H}/(1+x²) dx via the geometric expansion
/// 1/(1+x²) = Σ (−1)^{m−1} x^{−2m} and the integration-by-parts asymptotic
/// series for each ∫_X^∞ cos(wx) x^{−ν} dx.
fn spectral_tail(w: f64, h: f64, x: f64) -> f64 {
    fn cos_tail(w: f64, x: f64, nu: f64, depth: u32) -> f64 {
        let lead = -(w * x).sin() * x.powf(-nu) / w;
        if depth == 0 || x.powf(-nu - 1.0) * nu / (w * w) < 1e-22 {
            return lead;
        }
        lead + nu / w * sin_tail(w, x, nu + 1.0, depth - 1)
    }
    fn sin_tail(w: f64, x: f64, nu: f64, depth: u32) -> f64 {
        let lead = (w * x).cos() * x.powf(-nu) / w;
        if depth == 0 || x.powf(-nu - 1.0) * nu / (w * w) < 1e-22 {
            return lead;
        }
        lead - nu / w * cos_tail(w, x, nu + 1.0, depth - 1)
    }
    let mut tail = 0.0;
    for m in 1..40 {
        let nu = 2.0 * m as f64 - 1.0 + 2.0 * h;
        if x.powf(1.0 - 2.0 * h - 2.0 * m as f64) / w < 1e-20 {
            break;
        }
        let sign = if m % 2 == 1 { 1.0 } else { -1.0 };
        tail += sign * cos_tail(w, x, nu, 60);
    }
    tail
}

/// Convexity structure of r: returns (T₀, T₁) where the central-difference
/// second derivative on a 1e-3 grid changes sign for the first and the last
/// time inside (0, `SERIES_SWITCH`·0.9/λ). r is convex on (0, T₀) and
/// concave beyond T₁.
pub fn stationary_cov_convexity_change<T: Scalar>(
    hurst: T,
    lambda: T,
    sigma: T,
) -> Result<(T, T), FouError> {
    validate_cov_args(hurst, lambda, T::zero())?;
    let delta = 1e-3f64;
    let t_max = SERIES_SWITCH * 0.9 / lambda.as_f64();
    let steps = (t_max / delta) as usize;
    let r = |t: f64| -> Result<f64, FouError> {
        Ok(stationary_cov(hurst, lambda, sigma, T::lit(t))?.as_f64())
    };
    let mut values = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        values.push(r(i as f64 * delta)?);
    }
    let second = |i: usize| (values[i + 1] - 2.0 * values[i] + values[i - 1]) / (delta * delta);
    let mut first_cross: Option<f64> = None;
    let mut last_cross: Option<f64> = None;
    let mut prev = second(1);
    for i in 2..steps {
        let cur = second(i);
        if prev > 0.0 && cur <= 0.0 {
            // Linear interpolation of the crossing inside the cell.
            let frac = prev / (prev - cur);
            let t = ((i - 1) as f64 + frac) * delta;
            if first_cross.is_none() {
                first_cross = Some(t);
            }
            last_cross = Some(t);
        }
        prev = cur;
    }
    match (first_cross, last_cross) {
        (Some(t0), Some(t1)) => Ok((T::lit(t0), T::lit(t1))),
        _ => Err(FouError::NoConvexityChange { scanned: t_max }),
    }
}

/// Ergodic limit of the normalized Gram matrix:
/// C₁(H) = σ² H ∫₀^∞ x^{2H−1} e^{−Γx} dx = σ² H Γ(2H) · Q diag(λᵢ^{−2H}) Qᵀ.
pub fn c1_limit<T: Scalar>(model: &ModelSpec<T>) -> SquareMatrix<T> {
    let eig = sym_eig(model.gamma());
    let two_h = T::lit(2.0) * model.hurst();
    let scale = model.sigma() * model.sigma() * model.hurst() * gamma(two_h);
    eig.apply(|l| scale * l.powf(-two_h))
}

/// Ergodic limit of the normalized Itô integral matrix: C₂(H) = −Γ C₁(H).
pub fn c2_limit<T: Scalar>(model: &ModelSpec<T>) -> SquareMatrix<T> {
    model.gamma().as_matrix().matmul(&c1_limit(model)).scale(-T::one())
}

/// The pair (C₁, C₂) with C₂ = −Γ C₁ by construction.
#[derive(Debug, Clone)]
pub struct LimitConstants<T> {
    pub c1: SquareMatrix<T>,
    pub c2: SquareMatrix<T>,
}

pub fn limit_constants<T: Scalar>(model: &ModelSpec<T>) -> LimitConstants<T> {
    let c1 = c1_limit(model);
    let c2 = model.gamma().as_matrix().matmul(&c1).scale(-T::one());
    LimitConstants { c1, c2 }
}

/// Orthogonal reduction of the drift: returns (Λ, Σ̄) with Λ diagonal
/// ascending and Σ̄ Γ Σ̄ᵀ = Λ.
pub fn orthogonalize<T: Scalar>(gamma: &SymMatrix<T>) -> (SquareMatrix<T>, SquareMatrix<T>) {
    let eig = sym_eig(gamma);
    let lambda = SquareMatrix::diagonal(&eig.eigenvalues);
    let sbar = eig.basis.transpose();
    (lambda, sbar)
}
