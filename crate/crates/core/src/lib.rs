//! Simulation and drift estimation for multi-dimensional fractional
//! Ornstein-Uhlenbeck (fOU) processes
//!
//! $$ dX_t = -\Gamma X_t\,dt + \sigma\,dB_t^H, \qquad 1/3 < H \le 1/2, $$
//!
//! driven by fractional Brownian motion with negatively correlated
//! increments. Sample paths are enhanced to level-2 rough paths (increments
//! plus Lévy-area tensors). The Stratonovich lift is built by the trapezoidal
//! scheme; the Itô lift subtracts the deterministic correction
//! `φ^γ(t) = ½I t^{2H} − U^γ(t)`, which makes `∫ X ⊗ dB` centered. The drift
//! matrix is recovered by the least-squares functional
//!
//! $$ \hat\Gamma^T = -\Big(\int_0^T X\otimes X\,ds\Big)^{-1}
//!                     \int_0^T X\otimes d\mathbf{X}, $$
//!
//! evaluated on the Itô lift, together with its high-frequency discretization
//! on uniform grids.
//!
//! Numeric kernels are generic over the scalar type via [`scalar::Scalar`]
//! (`f32`/`f64`); the Monte Carlo harness, file formats and the CLI are fixed
//! to `f64`. Double-precision aliases for the main types live at the crate
//! root.

pub mod estimate;
pub mod fbm;
pub mod fou;
pub mod harness;
pub mod linalg;
pub mod quad;
pub mod rough;
pub mod scalar;
pub mod special;

/// Scalar type used by the harness, file formats and the CLI.
pub type Real = f64;

/// Double-precision square matrix.
pub type Mat = linalg::SquareMatrix<Real>;
/// Double-precision validated symmetric matrix.
pub type SymMat = linalg::SymMatrix<Real>;
/// Double-precision uniform time grid.
pub type Grid = fbm::SampleGrid<Real>;
/// Double-precision sample path.
pub type Path = fbm::PathMatrix<Real>;
/// Double-precision fOU model description.
pub type Model = fou::ModelSpec<Real>;
/// Double-precision level-2 lift.
pub type Lift = rough::LiftedPath<Real>;
/// Double-precision Itô-correction table.
pub type PhiTable = rough::CorrectionTable<Real>;
/// Double-precision estimation output.
pub type Estimate = estimate::EstimationResult<Real>;
