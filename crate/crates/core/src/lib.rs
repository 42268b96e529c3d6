//! Hardy martingales on discretized torus products.
//!
//! The crate models martingales adapted to the coordinate filtration of
//! `T^n`, where every circle is replaced by an `N`-point grid. On top of that
//! model it provides:
//!
//! * [`torus`]: grid functions on one circle, their Fourier data, the analytic
//!   projection and evaluation of analytic extensions inside the disk;
//! * [`martingale`]: martingale tables, levels, differences, square functions,
//!   generators and martingale transforms;
//! * [`iteration`]: the telescoping iteration principle as numerical
//!   certificates;
//! * [`decompose`]: truncation, Davis–Garsia and Hardy thin-thick
//!   decompositions;
//! * [`brownian`]: planar Brownian motion in the unit disk, stopped analytic
//!   values and the complex convexity inequality;
//! * [`inequalities`]: one checker per martingale inequality plus an
//!   adversarial ratio search;
//! * [`suite`]: deterministic batch runners used by the CLI and the
//!   acceptance tests.

pub mod brownian;
pub mod decompose;
pub mod error;
pub mod inequalities;
pub mod iteration;
pub mod martingale;
pub mod numeric;
pub mod rng;
pub mod suite;
pub mod torus;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// The complex convexity constant `α₀ = 1/√27`.
pub const ALPHA0: f64 = 0.192_450_089_729_875_25;

/// `A₀ = 4/α₀`, the previsible uniform-bound constant of the Hardy decomposition.
pub fn a0(alpha0: f64) -> f64 {
    4.0 / alpha0
}

/// `C₀ = 4·α₀⁻²·√10`, the square-function upper-bound constant.
pub fn c0(alpha0: f64) -> f64 {
    4.0 / (alpha0 * alpha0) * 10f64.sqrt()
}

/// `C₁ = 4·α₀⁻¹·√10·A₀`, the integral-bound constant of the Hardy decomposition.
pub fn c1(alpha0: f64) -> f64 {
    4.0 / alpha0 * 10f64.sqrt() * a0(alpha0)
}

/// Davis' maximal inequality constant.
pub const DAVIS_CONSTANT: f64 = 3.162_277_660_168_379_5;

/// Serialization mode of every certificate and report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Exact,
    MonteCarlo,
}
