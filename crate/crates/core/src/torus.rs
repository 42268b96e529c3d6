//! Grid functions on one circle.
//!
//! A [`GridFn`] holds the samples `f(e^{2πij/N})`, `j = 0..N`. Integration
//! against normalized Haar measure is the arithmetic mean of the samples.
//! Fourier data use the frequency window `-N/2+1 ..= N/2`; the "analytic"
//! half is the strictly positive frequencies.

use std::cell::RefCell;
use std::f64::consts::TAU;
use std::io::{BufRead, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::numeric;

/// Default tolerance for analytic-membership tests.
pub const HARDY_TOL: f64 = 1e-10;

/// Negative-frequency content tolerated by [`AnalyticPoly::from_coeffs`],
/// relative to `max(1, max |coefficient|)`.
pub const EVAL_TOL: f64 = 1e-12;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

fn check_grid_size(n: usize) -> Result<()> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::GridSize(n));
    }
    Ok(())
}

/// Grid angle `2πj/N`.
#[inline]
pub fn grid_angle(j: usize, n_points: usize) -> f64 {
    TAU * j as f64 / n_points as f64
}

/// `e^{2πij/N}`.
#[inline]
pub fn grid_point(j: usize, n_points: usize) -> Complex64 {
    Complex64::from_polar(1.0, grid_angle(j, n_points))
}

/// One complex function sampled on the `N`-point circle grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFn {
    values: Vec<Complex64>,
}

impl GridFn {
    pub fn new(values: Vec<Complex64>) -> Result<Self> {
        check_grid_size(values.len())?;
        if let Some(i) = values
            .iter()
            .position(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::NonFinite(i));
        }
        Ok(GridFn { values })
    }

    /// Samples `f(θ)` at the grid angles.
    pub fn from_angle_fn(n_points: usize, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        check_grid_size(n_points)?;
        GridFn::new((0..n_points).map(|j| f(grid_angle(j, n_points))).collect())
    }

    pub fn zeros(n_points: usize) -> Result<Self> {
        GridFn::new(vec![Complex64::new(0.0, 0.0); n_points])
    }

    /// `e^{ikθ}` sampled on the grid.
    pub fn mode(n_points: usize, k: i64) -> Result<Self> {
        GridFn::from_angle_fn(n_points, |t| Complex64::from_polar(1.0, k as f64 * t))
    }

    pub fn n_points(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// `∫ f dm`.
    pub fn integrate(&self) -> Complex64 {
        numeric::mean_c(&self.values)
    }

    /// `∫ |f| dm`.
    pub fn mean_abs(&self) -> f64 {
        numeric::mean_abs(&self.values)
    }

    /// `∫ |f|² dm`.
    pub fn mean_sq(&self) -> f64 {
        let sq: Vec<f64> = self.values.iter().map(|z| z.norm_sqr()).collect();
        numeric::mean(&sq)
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn sub(&self, other: &GridFn) -> Result<GridFn> {
        if other.n_points() != self.n_points() {
            return Err(Error::Length {
                expected: self.n_points(),
                got: other.n_points(),
            });
        }
        Ok(GridFn {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "index,re,im")?;
        for (j, z) in self.values.iter().enumerate() {
            writeln!(w, "{},{},{}", j, z.re, z.im)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut values = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with("index")) {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(Error::Parse(format!(
                    "line {}: expected index,re,im",
                    lineno + 1
                )));
            }
            let idx: usize = cols[0]
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad index", lineno + 1)))?;
            if idx != values.len() {
                return Err(Error::Parse(format!(
                    "line {}: index {} out of order",
                    lineno + 1,
                    idx
                )));
            }
            let re = parse_f64(cols[1], lineno)?;
            let im = parse_f64(cols[2], lineno)?;
            values.push(Complex64::new(re, im));
        }
        GridFn::new(values)
    }

    /// JSON array of `[re, im]` pairs.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Array(
            self.values
                .iter()
                .map(|z| serde_json::json!([z.re, z.im]))
                .collect(),
        )
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let pairs: Vec<[f64; 2]> = serde_json::from_value(v.clone())?;
        GridFn::new(
            pairs
                .into_iter()
                .map(|[re, im]| Complex64::new(re, im))
                .collect(),
        )
    }
}

pub(crate) fn parse_f64(s: &str, lineno: usize) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {}: bad number `{}`", lineno + 1, s.trim())))
}

/// Fourier coefficients of a [`GridFn`], stored in transform order.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierCoeffs {
    coeffs: Vec<Complex64>,
}

impl FourierCoeffs {
    pub fn n_points(&self) -> usize {
        self.coeffs.len()
    }

    /// Frequency window `-N/2+1 ..= N/2`.
    pub fn frequencies(&self) -> std::ops::RangeInclusive<i64> {
        let half = (self.coeffs.len() / 2) as i64;
        (-half + 1)..=half
    }

    fn index_of(&self, freq: i64) -> usize {
        let n = self.coeffs.len() as i64;
        freq.rem_euclid(n) as usize
    }

    /// Coefficient at `freq`; frequencies outside the window alias.
    pub fn coeff(&self, freq: i64) -> Complex64 {
        self.coeffs[self.index_of(freq)]
    }

    pub fn set(&mut self, freq: i64, c: Complex64) {
        let i = self.index_of(freq);
        self.coeffs[i] = c;
    }

    /// Builds coefficients from `(frequency, value)` pairs; other frequencies are zero.
    pub fn from_pairs(n_points: usize, pairs: &[(i64, Complex64)]) -> Result<Self> {
        check_grid_size(n_points)?;
        let mut c = FourierCoeffs {
            coeffs: vec![Complex64::new(0.0, 0.0); n_points],
        };
        for &(f, v) in pairs {
            c.set(f, v);
        }
        Ok(c)
    }

    /// `Σ_k |ĉ(k)|²`.
    pub fn energy(&self) -> f64 {
        let sq: Vec<f64> = self.coeffs.iter().map(|z| z.norm_sqr()).collect();
        numeric::pairwise_sum(&sq)
    }
}

/// `ĉ(k) = (1/N) Σ_j f_j e^{-2πijk/N}`.
pub fn dft(f: &GridFn) -> FourierCoeffs {
    let n = f.n_points();
    let mut buf = f.values.clone();
    plan(n, false).process(&mut buf);
    let scale = 1.0 / n as f64;
    for z in &mut buf {
        *z *= scale;
    }
    FourierCoeffs { coeffs: buf }
}

/// Inverse of [`dft`].
pub fn idft(c: &FourierCoeffs) -> GridFn {
    let n = c.n_points();
    let mut buf = c.coeffs.clone();
    plan(n, true).process(&mut buf);
    GridFn { values: buf }
}

/// Keeps strictly positive frequencies, zeroing frequency 0 and below.
pub fn analytic_project_zero_mean(f: &GridFn) -> GridFn {
    let mut c = dft(f);
    let range = c.frequencies();
    for k in range {
        if k <= 0 {
            c.set(k, Complex64::new(0.0, 0.0));
        }
    }
    idft(&c)
}

/// Result of an analytic-membership test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardyCheck {
    pub is_hardy: bool,
    /// Largest `|ĉ(k)|` over `k <= 0`.
    pub max_violation: f64,
    /// Frequency attaining `max_violation`.
    pub worst_frequency: i64,
}

/// True iff every coefficient at a frequency `<= 0` has modulus at most `tol`.
pub fn is_hardy(f: &GridFn, tol: f64) -> HardyCheck {
    hardy_check_coeffs(&dft(f), tol)
}

pub fn hardy_check_coeffs(c: &FourierCoeffs, tol: f64) -> HardyCheck {
    let mut worst = (0.0, 0);
    for k in c.frequencies() {
        if k > 0 {
            continue;
        }
        let v = c.coeff(k).norm();
        if v > worst.0 {
            worst = (v, k);
        }
    }
    HardyCheck {
        is_hardy: worst.0 <= tol,
        max_violation: worst.0,
        worst_frequency: worst.1,
    }
}

/// Polynomial `Σ_{j>=0} c_j z^j`, the analytic extension of a grid function
/// without negative frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticPoly {
    coeffs: Vec<Complex64>,
}

impl AnalyticPoly {
    /// Coefficients `c_0, c_1, ...`; trailing zeros are trimmed.
    pub fn new(mut coeffs: Vec<Complex64>) -> Self {
        while coeffs.len() > 1 && coeffs.last().is_some_and(|c| c.norm() == 0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(Complex64::new(0.0, 0.0));
        }
        AnalyticPoly { coeffs }
    }

    /// Reads the frequencies `0 ..= N/2`; rejects negative-frequency content.
    /// Coefficients below the round-off floor are dropped.
    pub fn from_coeffs(c: &FourierCoeffs) -> Result<Self> {
        let scale = c.coeffs.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let floor = EVAL_TOL * scale;
        for k in c.frequencies() {
            if k < 0 {
                let v = c.coeff(k).norm();
                if v > floor {
                    return Err(Error::NotAnalytic {
                        frequency: k,
                        violation: v,
                    });
                }
            }
        }
        let half = (c.n_points() / 2) as i64;
        let coeffs = (0..=half)
            .map(|k| {
                let v = c.coeff(k);
                if v.norm() <= floor {
                    Complex64::new(0.0, 0.0)
                } else {
                    v
                }
            })
            .collect();
        Ok(AnalyticPoly::new(coeffs))
    }

    pub fn from_grid(f: &GridFn) -> Result<Self> {
        AnalyticPoly::from_coeffs(&dft(f))
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeff(&self, j: usize) -> Complex64 {
        self.coeffs.get(j).copied().unwrap_or_default()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.norm() == 0.0)
    }

    /// Horner evaluation.
    #[inline]
    pub fn eval(&self, z: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for c in self.coeffs.iter().rev() {
            acc = acc * z + c;
        }
        acc
    }

    /// Samples on the `N`-point grid.
    pub fn to_grid(&self, n_points: usize) -> Result<GridFn> {
        GridFn::new(
            (0..n_points)
                .map(|j| self.eval(grid_point(j, n_points)))
                .collect(),
        )
    }

    /// `max |c_j|` summed bound `Σ|c_j| >= sup_{|z|<=1} |p(z)|`.
    pub fn coeff_l1(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).sum()
    }
}

/// Evaluates the analytic extension at `|z| <= 1`.
pub fn eval_disk(c: &FourierCoeffs, z: Complex64) -> Result<Complex64> {
    if z.norm() > 1.0 + 1e-12 {
        return Err(Error::Domain(format!("|z| = {} exceeds 1", z.norm())));
    }
    Ok(AnalyticPoly::from_coeffs(c)?.eval(z))
}
