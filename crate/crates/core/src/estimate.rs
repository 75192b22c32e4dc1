//! Rough-path drift estimators.
//!
//! The high-frequency estimator consumes Itô-lifted observations
//! `(X_{t_ℓ,t_{ℓ+1}}, 𝕏_{t_ℓ,t_{ℓ+1}})` together with the sampled states and
//! evaluates
//!
//! `Γ̃ₙᵀ = −( Σ_{ℓ=0}^{n} (X_{ℓh} ⊗ X_{ℓh}) h )⁻¹
//!         ( Σ_{ℓ=0}^{n−1} X_{ℓh} ⊗ X_{ℓh,(ℓ+1)h} + 𝕏_{ℓh,(ℓ+1)h} )`,
//!
//! exactly as displayed (the Gram sum runs one index further than the
//! numerator; the extra term is O(h)). Stratonovich input is rejected: with
//! Stratonovich areas the same formula degenerates to zero instead of the
//! drift, so silently accepting it would return garbage.

use serde::Serialize;
use thiserror::Error;

use crate::fbm::{PathMatrix, SampleGrid};
use crate::fou::ModelSpec;
use crate::linalg::{sym_eig, LinAlgError, SquareMatrix, SymMatrix};
use crate::rough::{CrossAreas, Flavor, LiftedPath, RoughError};
use crate::scalar::Scalar;

/// Condition-number ceiling on the Gram matrix.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Relative determinant floor for the explicit 2×2 route.
pub const DET_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error("lift has flavor {got}, but the estimator is defined on the Ito lift (Stratonovich areas drive the estimate to zero)")]
    FlavorRejected { got: Flavor },
    #[error("lift and path grids or dimensions do not match")]
    ShapeMismatch,
    #[error("Gram matrix is singular or ill-conditioned: condition number {condition:.3e} (limit {CONDITION_LIMIT:.0e})")]
    SingularGram { condition: f64 },
    #[error("Gram determinant {det:.3e} below {DET_FLOOR:.0e} x scale ({scale:.3e})")]
    SingularDeterminant { det: f64, scale: f64 },
    #[error("operation requires dimension {want}, got {got}")]
    WrongDimension { want: usize, got: usize },
    #[error("refined path has {got} steps, expected lift steps x refine = {want}")]
    BadRefine { got: usize, want: usize },
    #[error(transparent)]
    Rough(#[from] RoughError),
    #[error(transparent)]
    LinAlg(#[from] LinAlgError),
}

/// Output of one estimation: the drift estimate with its building blocks.
#[derive(Debug, Clone)]
pub struct EstimationResult<T> {
    /// The estimate Γ̂ (transpose relation: Γ̂ᵀ = −𝓛⁻¹·numerator, bit-exact
    /// with the stored pieces).
    pub gamma_hat: SquareMatrix<T>,
    /// Empirical Gram matrix 𝓛 (quadrature of ∫ X ⊗ X ds).
    pub denominator: SquareMatrix<T>,
    /// The Itô-integral matrix Σ X ⊗ ΔX + 𝕏.
    pub numerator: SquareMatrix<T>,
    /// Condition number of 𝓛.
    pub condition: T,
    pub grid: SampleGrid<T>,
}

#[derive(Serialize)]
struct ResultJson {
    gamma_hat: Vec<Vec<f64>>,
    condition: f64,
    #[serde(rename = "T")]
    horizon: f64,
    n: usize,
    h: f64,
    flavor: &'static str,
}

impl EstimationResult<f64> {
    /// JSON per the result schema:
    /// `{"gamma_hat":[[…]], "condition":…, "T":…, "n":…, "h":…, "flavor":"ito"}`.
    pub fn to_json(&self) -> String {
        let repr = ResultJson {
            gamma_hat: self.gamma_hat.rows(),
            condition: self.condition,
            horizon: self.grid.horizon(),
            n: self.grid.steps(),
            h: self.grid.mesh(),
            flavor: "ito",
        };
        serde_json::to_string_pretty(&repr).expect("result serializes")
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum GramRule {
    /// h · Σ_{ℓ=0}^{n} X_ℓ ⊗ X_ℓ, the literal discrete-theorem sum.
    LeftEndpoint,
    /// Trapezoid in time.
    Trapezoid,
}

fn gram<T: Scalar>(path: &PathMatrix<T>, rule: GramRule) -> SquareMatrix<T> {
    let d = path.dim();
    let n = path.grid().steps();
    let h = path.grid().mesh();
    let half = T::lit(0.5);
    let mut acc = SquareMatrix::zeros(d);
    for l in 0..=n {
        let w = match rule {
            GramRule::LeftEndpoint => T::one(),
            GramRule::Trapezoid => {
                if l == 0 || l == n {
                    half
                } else {
                    T::one()
                }
            }
        };
        for i in 0..d {
            let xi = path.value(i, l) * w;
            for j in 0..d {
                acc.add_to(i, j, xi * path.value(j, l));
            }
        }
    }
    acc.scale(h)
}

fn rough_integral_sum<T: Scalar>(lift: &LiftedPath<T>, path: &PathMatrix<T>) -> SquareMatrix<T> {
    let d = path.dim();
    let n = lift.grid().steps();
    let mut acc = SquareMatrix::zeros(d);
    for l in 0..n {
        let inc = lift.increment(l);
        for i in 0..d {
            let xi = path.value(i, l);
            for j in 0..d {
                acc.add_to(i, j, xi * inc[j]);
            }
        }
        acc.add_assign(lift.area(l));
    }
    acc
}

fn check_shapes<T: Scalar>(
    lift: &LiftedPath<T>,
    path: &PathMatrix<T>,
) -> Result<(), EstimateError> {
    if lift.grid() != path.grid() || lift.dim() != path.dim() {
        return Err(EstimateError::ShapeMismatch);
    }
    Ok(())
}

fn solve<T: Scalar>(
    denominator: SquareMatrix<T>,
    numerator: SquareMatrix<T>,
    grid: SampleGrid<T>,
) -> Result<EstimationResult<T>, EstimateError> {
    let sym = SymMatrix::new(denominator.clone())?;
    let eig = sym_eig(&sym);
    let min = eig.min_eigenvalue();
    let max = eig.max_eigenvalue();
    let condition = if min <= T::zero() {
        T::infinity()
    } else {
        max / min
    };
    if !(condition.as_f64() < CONDITION_LIMIT) {
        return Err(EstimateError::SingularGram { condition: condition.as_f64() });
    }
    let inverse = eig.apply(|l| T::one() / l);
    // Γ̂ᵀ = −𝓛⁻¹ N, stored transposed.
    let gamma_hat = inverse.matmul(&numerator).scale(-T::one()).transpose();
    Ok(EstimationResult { gamma_hat, denominator, numerator, condition, grid })
}

/// High-frequency discrete estimator on Itô-lifted observations.
pub fn estimate_discrete<T: Scalar>(
    lift: &LiftedPath<T>,
    path: &PathMatrix<T>,
) -> Result<EstimationResult<T>, EstimateError> {
    if lift.flavor() != Flavor::Ito {
        return Err(EstimateError::FlavorRejected { got: lift.flavor() });
    }
    estimate_discrete_any_flavor(lift, path)
}

/// The estimator formula without the flavor guard. Exists so validation
/// suites can demonstrate the Stratonovich degeneracy; production callers
/// should use [`estimate_discrete`].
#[doc(hidden)]
pub fn estimate_discrete_any_flavor<T: Scalar>(
    lift: &LiftedPath<T>,
    path: &PathMatrix<T>,
) -> Result<EstimationResult<T>, EstimateError> {
    check_shapes(lift, path)?;
    let denominator = gram(path, GramRule::LeftEndpoint);
    let numerator = rough_integral_sum(lift, path);
    solve(denominator, numerator, lift.grid())
}

/// Discretization of the continuous-time estimator: same numerator, Gram
/// matrix by the trapezoid rule on a `refine`-times finer path. With
/// refine = 1 it differs from [`estimate_discrete`] only through the Gram
/// quadrature rule (trapezoid vs left endpoint), an O(h) difference.
pub fn estimate_continuous<T: Scalar>(
    lift: &LiftedPath<T>,
    path: &PathMatrix<T>,
    refine: usize,
) -> Result<EstimationResult<T>, EstimateError> {
    if lift.flavor() != Flavor::Ito {
        return Err(EstimateError::FlavorRejected { got: lift.flavor() });
    }
    let refine = refine.max(1);
    let want = lift.grid().steps() * refine;
    if path.grid().steps() != want {
        return Err(EstimateError::BadRefine { got: path.grid().steps(), want });
    }
    if path.dim() != lift.dim() {
        return Err(EstimateError::ShapeMismatch);
    }
    let coarse = path.subsample(refine).map_err(RoughError::from)?;
    if coarse.grid() != lift.grid() {
        return Err(EstimateError::ShapeMismatch);
    }
    let denominator = gram(path, GramRule::Trapezoid);
    let numerator = rough_integral_sum(lift, &coarse);
    solve(denominator, numerator, lift.grid())
}

#[cfg(test)]
pub(crate) fn gram_for_tests<T: Scalar>(
    path: &PathMatrix<T>,
    trapezoid: bool,
) -> SquareMatrix<T> {
    gram(path, if trapezoid { GramRule::Trapezoid } else { GramRule::LeftEndpoint })
}

/// Explicit 2×2 inverse route: the estimator written out through
/// det(𝓛) and the window integrals ∫ X^i d𝐗^j = 𝕏^{ij}_{0,T} + X₀^i X^j_{0,T}.
/// Agrees with [`estimate_discrete`] to rounding; the summation routes differ.
pub fn closed_form_2d<T: Scalar>(
    lift: &LiftedPath<T>,
    path: &PathMatrix<T>,
) -> Result<EstimationResult<T>, EstimateError> {
    if lift.flavor() != Flavor::Ito {
        return Err(EstimateError::FlavorRejected { got: lift.flavor() });
    }
    check_shapes(lift, path)?;
    if lift.dim() != 2 {
        return Err(EstimateError::WrongDimension { want: 2, got: lift.dim() });
    }
    let gramm = gram(path, GramRule::LeftEndpoint);
    let l11 = gramm.get(0, 0);
    let l12 = gramm.get(0, 1);
    let l22 = gramm.get(1, 1);
    let det = l11 * l22 - l12 * l12;
    let scale = (l11 * l22).abs().max(T::min_positive_value());
    if det <= T::lit(DET_FLOOR) * scale {
        return Err(EstimateError::SingularDeterminant { det: det.as_f64(), scale: scale.as_f64() });
    }

    // Window integrals from the anchored total area plus the base-point term.
    let total = lift.total_area();
    let total_inc = lift.total_increment();
    let x0 = lift.base_point();
    let numerator = SquareMatrix::from_fn(2, |i, j| total.get(i, j) + x0[i] * total_inc[j]);

    // Γ̂ᵀ = −(1/det) [[L22, −L12], [−L12, L11]] · numerator.
    let inv = SquareMatrix::from_rows(&[vec![l22, -l12], vec![-l12, l11]])?.scale(T::one() / det);
    let gamma_hat = inv.matmul(&numerator).scale(-T::one()).transpose();

    // Condition number of the symmetric 2×2 Gram from its eigenvalues.
    let half_tr = (l11 + l22) * T::lit(0.5);
    let disc = (half_tr * half_tr - det).max(T::zero()).sqrt();
    let (lo, hi) = (half_tr - disc, half_tr + disc);
    let condition = if lo <= T::zero() { T::infinity() } else { hi / lo };

    Ok(EstimationResult { gamma_hat, denominator: gramm, numerator, condition, grid: lift.grid() })
}

/// Residual of the chain-rule identity
///
/// `∫ X ⊗ d𝐗 = −(∫ X ⊗ X ds) Γᵀ + σ ∫ X ⊗ d𝐁^H`
///
/// at the discretization level, with all three integrals in the same flavor.
/// The Gram term uses the left-endpoint rule over ℓ = 0..n−1 (the identity's
/// own ranges). Returns the max-abs entry of the residual matrix.
pub fn chain_rule_check<T: Scalar>(
    lift_x: &LiftedPath<T>,
    lift_b: &LiftedPath<T>,
    model: &ModelSpec<T>,
    cross: &CrossAreas<T>,
    path_x: &PathMatrix<T>,
    path_b: &PathMatrix<T>,
) -> Result<T, EstimateError> {
    if lift_x.flavor() != lift_b.flavor() || lift_x.flavor() != cross.flavor() {
        return Err(EstimateError::FlavorRejected { got: lift_b.flavor() });
    }
    if lift_x.grid() != lift_b.grid()
        || lift_x.grid() != cross.grid()
        || path_x.grid() != lift_x.grid()
        || path_b.grid() != lift_x.grid()
    {
        return Err(EstimateError::ShapeMismatch);
    }
    let d = lift_x.dim();
    let n = lift_x.grid().steps();
    let h = lift_x.grid().mesh();
    let sigma = model.sigma();
    let gamma_t = model.gamma().as_matrix().transpose();

    let mut residual = SquareMatrix::zeros(d);
    let mut gram_sum = SquareMatrix::zeros(d);
    for l in 0..n {
        let xs = path_x.state_at(l);
        let inc_x = lift_x.increment(l);
        let inc_b = lift_b.increment(l);
        for i in 0..d {
            for j in 0..d {
                residual.add_to(i, j, xs[i] * inc_x[j] - sigma * xs[i] * inc_b[j]);
            }
        }
        residual.add_assign(lift_x.area(l));
        residual.add_assign(&cross.area(l).scale(-sigma));
        for i in 0..d {
            for j in 0..d {
                gram_sum.add_to(i, j, xs[i] * xs[j]);
            }
        }
    }
    residual.add_assign(&gram_sum.scale(h).matmul(&gamma_t));
    Ok(residual.max_abs())
}

/// High-frequency schedule validation for the discrete estimator: the
/// consistency regime needs nh → ∞, h → 0 and n·h^p → 0 for some
/// p ∈ (1, (1+H+β)/(1+β)). A finite cell is flagged (not rejected) when
/// n·h^p ≥ 1 at the midpoint exponent p = (1 + (1+H+β)/(1+β))/2.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScheduleCheck {
    pub exponent: f64,
    pub value: f64,
    pub ok: bool,
}

pub fn schedule_check(horizon: f64, steps: usize, hurst: f64, beta: f64) -> ScheduleCheck {
    let upper = (1.0 + hurst + beta) / (1.0 + beta);
    let exponent = 0.5 * (1.0 + upper);
    let h = horizon / steps as f64;
    let value = steps as f64 * h.powf(exponent);
    ScheduleCheck { exponent, value, ok: value < 1.0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::{sample_fbm, PathKind, PathSeed};
    use crate::rough::{strat_lift, to_ito_lift, CorrectionTable};

    fn grid(t: f64, n: usize) -> SampleGrid<f64> {
        SampleGrid::new(t, n).unwrap()
    }

    fn zero_area_lift(path: &PathMatrix<f64>, flavor: Flavor) -> LiftedPath<f64> {
        let n = path.grid().steps();
        let d = path.dim();
        let increments = (0..n)
            .map(|l| (0..d).map(|c| path.value(c, l + 1) - path.value(c, l)).collect())
            .collect();
        let areas = (0..n).map(|_| SquareMatrix::zeros(d)).collect();
        LiftedPath::from_parts(path.grid(), flavor, path.initial_state(), increments, areas)
            .unwrap()
    }

    #[test]
    fn sums_follow_the_displayed_index_ranges() {
        // n = 2 by hand: Gram runs l = 0..=n, numerator l = 0..n-1.
        let g = grid(1.0, 2);
        let path = PathMatrix::from_components(
            g,
            PathKind::Fou,
            vec![vec![1.0, 2.0, -1.0]],
        )
        .unwrap();
        let lift = LiftedPath::from_parts(
            g,
            Flavor::Ito,
            vec![1.0],
            vec![vec![1.0], vec![-3.0]],
            vec![
                SquareMatrix::from_rows(&[vec![0.25]]).unwrap(),
                SquareMatrix::from_rows(&[vec![-0.5]]).unwrap(),
            ],
        )
        .unwrap();
        let est = estimate_discrete(&lift, &path).unwrap();
        let h = 0.5;
        let gram = h * (1.0 + 4.0 + 1.0);
        let numerator = (1.0 * 1.0 + 0.25) + (2.0 * -3.0 + -0.5);
        assert_eq!(est.denominator.get(0, 0), gram);
        assert_eq!(est.numerator.get(0, 0), numerator);
        assert_eq!(est.gamma_hat.get(0, 0), -numerator / gram);
        // Transpose relation holds bit-exactly as stored.
        assert_eq!(est.gamma_hat.transpose().get(0, 0), -(1.0 / gram) * numerator);
    }

    #[test]
    fn rejects_stratonovich_flavor() {
        let g = grid(1.0, 16);
        let b = sample_fbm(0.45, g, 1, PathSeed::new(0, 0)).unwrap();
        let lift = strat_lift(&b, 1).unwrap();
        let err = estimate_discrete(&lift, &b).unwrap_err();
        assert!(matches!(err, EstimateError::FlavorRejected { .. }));
        assert!(err.to_string().contains("Ito"), "{err}");
    }

    #[test]
    fn noiseless_decay_recovers_drift_exactly() {
        // sigma = 0, post-hoc zero-area Itô lift: the chain rule collapses to
        // numerator = -gamma * (Gram restricted to 0..n-1); once X_n has
        // decayed to nothing the index-range mismatch is below machine
        // precision and the recovery is exact.
        let gamma = 2.0;
        let g = grid(40.0, 4096);
        let h = g.mesh();
        let mut values = Vec::with_capacity(4097);
        let mut x: f64 = 1.0;
        for _ in 0..=4096 {
            values.push(x);
            x *= 1.0 - gamma * h;
        }
        let path = PathMatrix::from_components(g, PathKind::Fou, vec![values]).unwrap();
        let lift = zero_area_lift(&path, Flavor::Ito);
        let est = estimate_discrete(&lift, &path).unwrap();
        let slope = est.gamma_hat.get(0, 0);
        // X_{l+1} - X_l = -gamma h X_l exactly in this recursion, up to the
        // representation of (1 - gamma h).
        let effective = -(((1.0 - gamma * h) - 1.0) / h);
        assert!((slope - effective).abs() < 1e-12 * gamma, "{slope} vs {effective}");
    }

    #[test]
    fn singular_gram_is_reported() {
        let g = grid(1.0, 8);
        let path =
            PathMatrix::from_components(g, PathKind::Fou, vec![vec![0.0; 9]]).unwrap();
        let lift = zero_area_lift(&path, Flavor::Ito);
        let err = estimate_discrete(&lift, &path).unwrap_err();
        assert!(matches!(err, EstimateError::SingularGram { .. }), "{err}");
    }

    #[test]
    fn continuous_gram_differs_by_endpoint_halves() {
        // Trapezoid minus left-endpoint Gram is exactly -h/2 (X_0⊗X_0 + X_n⊗X_n),
        // an O(h) difference that halves exactly when the same trajectory is
        // sampled twice as finely.
        let fine = sample_fbm(0.45, grid(1.0, 512), 1, PathSeed::new(4, 0)).unwrap();
        let mut diffs = Vec::new();
        for stride in [2usize, 1] {
            let path = if stride > 1 { fine.subsample(stride).unwrap() } else { fine.clone() };
            let left = gram_for_tests(&path, false);
            let trap = gram_for_tests(&path, true);
            let h = path.grid().mesh();
            let x0 = path.value(0, 0);
            let xn = path.value(0, path.grid().steps());
            let want = -0.5 * h * (x0 * x0 + xn * xn);
            assert!((trap.get(0, 0) - left.get(0, 0) - want).abs() < 1e-15);
            diffs.push((trap.get(0, 0) - left.get(0, 0)).abs());
        }
        let ratio = diffs[0] / diffs[1];
        assert!((1.7..=2.3).contains(&ratio), "halving h should halve the gap: {ratio}");
    }

    #[test]
    fn continuous_estimator_validates_refinement() {
        let g = grid(1.0, 64);
        let b = sample_fbm(0.45, g, 1, PathSeed::new(5, 0)).unwrap();
        let table = CorrectionTable::new(
            &crate::linalg::SymMatrix::from_rows(&[vec![1.0]]).unwrap(),
            0.45,
            g,
        )
        .unwrap();
        let ito = to_ito_lift(&strat_lift(&b, 1).unwrap(), &table, 1.0).unwrap();
        assert!(matches!(
            estimate_continuous(&ito, &b, 2),
            Err(EstimateError::BadRefine { .. })
        ));
        // refine = 1 works and shares the numerator with the discrete route.
        let cont = estimate_continuous(&ito, &b, 1).unwrap();
        let disc = estimate_discrete(&ito, &b).unwrap();
        assert_eq!(cont.numerator, disc.numerator);
        assert_ne!(cont.denominator, disc.denominator);
    }

    #[test]
    fn closed_form_requires_two_dimensions() {
        let g = grid(1.0, 16);
        let b = sample_fbm(0.45, g, 1, PathSeed::new(6, 0)).unwrap();
        let lift = zero_area_lift(&b, Flavor::Ito);
        assert!(matches!(
            closed_form_2d(&lift, &b),
            Err(EstimateError::WrongDimension { want: 2, .. })
        ));
    }

    #[test]
    fn closed_form_rejects_proportional_components() {
        // Perfectly collinear components make det(L) vanish.
        let g = grid(1.0, 32);
        let base = sample_fbm(0.45, g, 1, PathSeed::new(8, 0)).unwrap();
        let comp: Vec<f64> = base.component(0).to_vec();
        let doubled: Vec<f64> = comp.iter().map(|v| 2.0 * v).collect();
        let path =
            PathMatrix::from_components(g, PathKind::Fou, vec![comp, doubled]).unwrap();
        let lift = zero_area_lift(&path, Flavor::Ito);
        let err = closed_form_2d(&lift, &path).unwrap_err();
        assert!(matches!(err, EstimateError::SingularDeterminant { .. }), "{err}");
    }

    #[test]
    fn schedule_check_algebra() {
        // H = 0.5, beta = 0.5: p = (1 + 4/3)/2 = 7/6, and n h^p < 1 needs
        // n > T^{p/(p-1)} = T^7.
        let check = schedule_check(40.0, 1 << 12, 0.5, 0.5);
        assert!((check.exponent - 7.0 / 6.0).abs() < 1e-15);
        let h: f64 = 40.0 / 4096.0;
        assert!((check.value - 4096.0 * h.powf(7.0 / 6.0)).abs() < 1e-12);
        assert!(!check.ok, "the finite table cells violate the limit condition");
        let passing = schedule_check(2.0, 256, 0.5, 0.5);
        assert!(passing.ok, "n h^p = {}", passing.value);
    }

    #[test]
    fn result_json_schema() {
        let g = grid(1.0, 16);
        let b = sample_fbm(0.45, g, 1, PathSeed::new(9, 0)).unwrap();
        let table = CorrectionTable::new(
            &crate::linalg::SymMatrix::from_rows(&[vec![1.0]]).unwrap(),
            0.45,
            g,
        )
        .unwrap();
        let ito = to_ito_lift(&strat_lift(&b, 1).unwrap(), &table, 1.0).unwrap();
        let est = estimate_discrete(&ito, &b).unwrap();
        let json = est.to_json();
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert!(parsed["gamma_hat"].is_array());
        assert_eq!(parsed["n"], 16);
        assert_eq!(parsed["flavor"], "ito");
        assert_eq!(parsed["T"], 1.0);
        assert!(parsed["condition"].is_number());
        assert!((parsed["h"].as_f64().unwrap() - 1.0 / 16.0).abs() < 1e-15);
    }
}
