//! Planar Brownian motion in the unit disk.
//!
//! Paths start at 0 and take Gaussian steps of variance `dt` per real
//! component until they leave the disk; the exit point is linearly
//! interpolated onto the circle. On top of the walker sit the stopped values
//! `h(B_ρ)` with `ρ` the first grid time at which `|h(B_t)|` exceeds a
//! threshold, the conditional-expectation projection onto the exit point, the
//! scalar thin-thick split of an analytic slice, and deterministic checks of
//! the complex convexity inequality.

use std::f64::consts::TAU;
use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric;
use crate::rng;
use crate::torus::{self, AnalyticPoly, GridFn};

/// Fraction of paths that must exit before a Monte Carlo result is trusted.
pub const MIN_EXIT_FRACTION: f64 = 0.999;

/// Monte Carlo parameters shared by all path experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BrownianConfig {
    pub dt: f64,
    pub max_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
    /// Number of contiguous path batches used for jackknife errors.
    pub batches: usize,
}

impl Default for BrownianConfig {
    fn default() -> Self {
        BrownianConfig {
            dt: 1e-4,
            max_steps: 1_000_000,
            n_paths: 10_000,
            seed: 0,
            batches: 10,
        }
    }
}

impl BrownianConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_paths(mut self, n_paths: usize) -> Self {
        self.n_paths = n_paths;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Domain(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if self.max_steps == 0 || self.batches == 0 {
            return Err(Error::Domain(
                "max_steps and batches must be positive".into(),
            ));
        }
        // P(τ > T) ≈ e^{-2.89 T}; below T = 2.4 more than 0.1% of paths stay inside.
        if self.dt * (self.max_steps as f64) < 2.4 {
            log::warn!(
                "dt·max_steps = {} is short; more than 0.1% of paths may not exit",
                self.dt * self.max_steps as f64
            );
        }
        Ok(())
    }

    fn batch_of(&self, path: usize) -> usize {
        path * self.batches / self.n_paths.max(1)
    }
}

/// Where and when a path left the disk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exit {
    pub point: Complex64,
    pub angle: f64,
    pub time: f64,
}

/// Runs one path, calling `visit(t, B_t)` at every grid time inside the disk
/// (including `t = 0`). Returns `None` if the path is still inside after
/// `max_steps` steps.
pub fn walk<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &BrownianConfig,
    mut visit: impl FnMut(f64, Complex64),
) -> Option<Exit> {
    let sd = cfg.dt.sqrt();
    let mut p = Complex64::new(0.0, 0.0);
    visit(0.0, p);
    for step in 0..cfg.max_steps {
        let dx: f64 = rng.sample(StandardNormal);
        let dy: f64 = rng.sample(StandardNormal);
        let q = Complex64::new(p.re + sd * dx, p.im + sd * dy);
        if q.norm_sqr() >= 1.0 {
            // Solve |p + s(q - p)| = 1 for s in (0, 1].
            let d = q - p;
            let a = d.norm_sqr();
            let b = 2.0 * (p.re * d.re + p.im * d.im);
            let c = p.norm_sqr() - 1.0;
            let root = (b * b - 4.0 * a * c).sqrt();
            let s = if b >= 0.0 {
                -2.0 * c / (b + root)
            } else {
                (root - b) / (2.0 * a)
            }
            .clamp(0.0, 1.0);
            let e = p + d * s;
            let point = e / e.norm();
            let mut angle = point.im.atan2(point.re).rem_euclid(TAU);
            if angle >= TAU {
                angle = 0.0;
            }
            return Some(Exit {
                point,
                angle,
                time: (step as f64 + s) * cfg.dt,
            });
        }
        p = q;
        visit((step + 1) as f64 * cfg.dt, p);
    }
    None
}

/// Exit data of `cfg.n_paths` independent paths.
#[derive(Debug, Clone, PartialEq)]
pub struct ExitSample {
    pub paths: usize,
    pub angles: Vec<f64>,
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Chi2Result {
    pub statistic: f64,
    pub dof: usize,
    /// Critical value at the requested significance.
    pub critical: f64,
    pub pass: bool,
}

impl ExitSample {
    pub fn exited(&self) -> usize {
        self.angles.len()
    }

    /// Mean exit time and its standard error.
    pub fn mean_time(&self) -> (f64, f64) {
        numeric::mean_se(&self.times)
    }

    /// Pearson χ² test of exit-angle uniformity over `bins` equal arcs.
    pub fn chi2_uniform(&self, bins: usize, significance: f64) -> Result<Chi2Result> {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        if bins < 2 || self.angles.is_empty() {
            return Err(Error::Domain(
                "χ² test needs >= 2 bins and some exits".into(),
            ));
        }
        let mut counts = vec![0usize; bins];
        for a in &self.angles {
            let b = ((a / TAU) * bins as f64) as usize;
            counts[b.min(bins - 1)] += 1;
        }
        let expected = self.angles.len() as f64 / bins as f64;
        let statistic = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        let dist = ChiSquared::new((bins - 1) as f64).map_err(|e| Error::Domain(e.to_string()))?;
        let critical = dist.inverse_cdf(1.0 - significance);
        Ok(Chi2Result {
            statistic,
            dof: bins - 1,
            critical,
            pass: statistic <= critical,
        })
    }
}

/// Simulates exits only. Paths that do not leave within `max_steps` are dropped.
pub fn sample_exits(cfg: &BrownianConfig, experiment: u64) -> Result<ExitSample> {
    cfg.validate()?;
    let exits: Vec<Option<Exit>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|p| {
            walk(
                &mut rng::path_rng(cfg.seed, experiment, p as u64),
                cfg,
                |_, _| {},
            )
        })
        .collect();
    let (angles, times) = exits.iter().flatten().map(|e| (e.angle, e.time)).unzip();
    let sample = ExitSample {
        paths: cfg.n_paths,
        angles,
        times,
    };
    warn_if_short(sample.exited(), cfg);
    Ok(sample)
}

fn warn_if_short(exited: usize, cfg: &BrownianConfig) {
    if exited < cfg.n_paths {
        log::warn!(
            "{} of {} paths did not exit within {} steps and were excluded",
            cfg.n_paths - exited,
            cfg.n_paths,
            cfg.max_steps
        );
    }
}

/// One stopped analytic value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppedSample {
    /// `h(B_ρ)`.
    pub h_at_rho: Complex64,
    /// `arg B_τ` in `[0, 2π)`.
    pub exit_angle: f64,
    /// `ρ < τ`.
    pub stopped_early: bool,
    pub rho: f64,
    pub exit_time: f64,
    /// `|h(B_ρ)| − threshold` for early stops, else 0.
    pub overshoot: f64,
}

/// Walks one path and stops `h` at the first grid time with `|h(B_t)| > threshold`.
///
/// The walk always continues to the exit to record `arg B_τ`. A zero
/// threshold stops at `t = 0`. If the level is first exceeded at the exit
/// point the sample counts as stopped there.
pub fn stopped_value<R: Rng + ?Sized>(
    h: &AnalyticPoly,
    threshold: f64,
    rng: &mut R,
    cfg: &BrownianConfig,
) -> Option<StoppedSample> {
    let mut stop: Option<(f64, Complex64)> = if threshold <= 0.0 {
        Some((0.0, h.eval(Complex64::new(0.0, 0.0))))
    } else {
        None
    };
    let exit = walk(rng, cfg, |t, p| {
        if stop.is_none() {
            let v = h.eval(p);
            if v.norm() > threshold {
                stop = Some((t, v));
            }
        }
    })?;
    let (rho, value, early) = match stop {
        Some((t, v)) => (t, v, true),
        None => {
            let v = h.eval(exit.point);
            (exit.time, v, v.norm() > threshold)
        }
    };
    Some(StoppedSample {
        h_at_rho: value,
        exit_angle: exit.angle,
        stopped_early: early,
        rho,
        exit_time: exit.time,
        overshoot: if early {
            (value.norm() - threshold.max(0.0)).max(0.0)
        } else {
            0.0
        },
    })
}

/// Stopped values for all paths of `cfg`, in path order; `None` marks non-exits.
pub fn sample_stopped(
    h: &AnalyticPoly,
    threshold: f64,
    cfg: &BrownianConfig,
    experiment: u64,
) -> Result<Vec<Option<StoppedSample>>> {
    cfg.validate()?;
    Ok((0..cfg.n_paths)
        .into_par_iter()
        .map(|p| {
            stopped_value(
                h,
                threshold,
                &mut rng::path_rng(cfg.seed, experiment, p as u64),
                cfg,
            )
        })
        .collect())
}

/// Monte Carlo estimate of `E(h(B_ρ) | B_τ)` in coefficient space.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// `ĝ(j)` for `j = 1..=d`.
    pub coeffs: Vec<Complex64>,
    /// Standard error of each `ĝ(j)`.
    pub se: Vec<f64>,
    /// Per-batch sums of `h(B_ρ) e^{-ijφ}`, indexed `[batch][j-1]`.
    pub batch_sums: Vec<Vec<Complex64>>,
    pub batch_counts: Vec<usize>,
    pub paths: usize,
    pub exited: usize,
    pub stopped_fraction: f64,
    pub max_overshoot: f64,
    pub mean_overshoot: f64,
}

impl Projection {
    fn empty(degree: usize, batches: usize, paths: usize) -> Self {
        Projection {
            coeffs: vec![Complex64::new(0.0, 0.0); degree],
            se: vec![0.0; degree],
            batch_sums: vec![vec![Complex64::new(0.0, 0.0); degree]; batches],
            batch_counts: vec![0; batches],
            paths,
            exited: paths,
            stopped_fraction: 0.0,
            max_overshoot: 0.0,
            mean_overshoot: 0.0,
        }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len()
    }

    pub fn exit_fraction(&self) -> f64 {
        if self.paths == 0 {
            0.0
        } else {
            self.exited as f64 / self.paths as f64
        }
    }

    /// Coefficients computed without batch `b`.
    pub fn leave_out(&self, b: usize) -> Vec<Complex64> {
        let n = self.exited - self.batch_counts[b];
        if n == 0 {
            return self.coeffs.clone();
        }
        let total: Vec<Complex64> = self.coeffs.iter().map(|c| c * self.exited as f64).collect();
        total
            .iter()
            .zip(&self.batch_sums[b])
            .map(|(t, s)| (t - s) / n as f64)
            .collect()
    }

    pub fn poly(&self) -> AnalyticPoly {
        poly_from(&self.coeffs)
    }

    pub fn grid(&self, n_points: usize) -> Result<GridFn> {
        self.poly().to_grid(n_points)
    }
}

fn poly_from(coeffs: &[Complex64]) -> AnalyticPoly {
    let mut c = Vec::with_capacity(coeffs.len() + 1);
    c.push(Complex64::new(0.0, 0.0));
    c.extend_from_slice(coeffs);
    AnalyticPoly::new(c)
}

/// `ĝ(j) = mean over paths of h(B_ρ) e^{-ij arg B_τ}`, `j = 1..=deg h`.
///
/// Frequencies above the degree of `h` and at or below zero are not
/// estimated, so the projection is analytic with zero mean whatever the noise.
pub fn varopoulos_projection(
    h: &AnalyticPoly,
    threshold: f64,
    cfg: &BrownianConfig,
    experiment: u64,
) -> Result<Projection> {
    if cfg.n_paths == 0 {
        return Err(Error::Domain("path budget is 0".into()));
    }
    let d = h.degree();
    let samples = sample_stopped(h, threshold, cfg, experiment)?;
    let mut proj = Projection::empty(d, cfg.batches, cfg.n_paths);
    let kept: Vec<(usize, StoppedSample)> = samples
        .iter()
        .enumerate()
        .filter_map(|(p, s)| s.map(|s| (p, s)))
        .collect();
    proj.exited = kept.len();
    warn_if_short(kept.len(), cfg);
    if kept.is_empty() {
        return Err(Error::Budget {
            exited: 0,
            paths: cfg.n_paths,
            max_steps: cfg.max_steps,
        });
    }
    let n = kept.len() as f64;
    let early: Vec<f64> = kept
        .iter()
        .map(|(_, s)| if s.stopped_early { 1.0 } else { 0.0 })
        .collect();
    proj.stopped_fraction = numeric::mean(&early);
    let over: Vec<f64> = kept.iter().map(|(_, s)| s.overshoot).collect();
    proj.max_overshoot = over.iter().copied().fold(0.0, f64::max);
    proj.mean_overshoot = numeric::mean(&over);
    for (p, _) in &kept {
        proj.batch_counts[cfg.batch_of(*p)] += 1;
    }
    for j in 1..=d {
        let x: Vec<Complex64> = kept
            .iter()
            .map(|(_, s)| s.h_at_rho * Complex64::from_polar(1.0, -(j as f64) * s.exit_angle))
            .collect();
        let mean = numeric::mean_c(&x);
        let dev: Vec<f64> = x.iter().map(|v| (v - mean).norm_sqr()).collect();
        proj.coeffs[j - 1] = mean;
        proj.se[j - 1] = if kept.len() > 1 {
            (numeric::pairwise_sum(&dev) / (n * (n - 1.0))).sqrt()
        } else {
            0.0
        };
        let mut start = 0;
        for b in 0..cfg.batches {
            let end = start + proj.batch_counts[b];
            proj.batch_sums[b][j - 1] = numeric::pairwise_sum_c(&x[start..end]);
            start = end;
        }
    }
    Ok(proj)
}

/// Diagnostics of one scalar thin-thick split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SplitDiagnostics {
    pub threshold: f64,
    pub a0: f64,
    /// `sup|g| / (A₀|z|)`; `None` when `z = 0`.
    pub uniform_ratio: Option<f64>,
    pub uniform_ratio_se: f64,
    /// `(|z|² + A₀⁻²E|g|²)^{1/2} + A₀⁻¹E|h−g| − E|z+h|`; at most 0 in theory.
    pub integral_slack: f64,
    pub integral_slack_se: f64,
    pub stopped_fraction: f64,
    pub max_overshoot: f64,
}

/// `g`, `b = h − g` and diagnostics of the thin-thick split of one slice.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceSplit {
    pub g: GridFn,
    pub b: GridFn,
    /// `None` when `z = 0` and nothing was simulated.
    pub projection: Option<Projection>,
    pub diagnostics: SplitDiagnostics,
}

fn split_measures(
    h: &GridFn,
    z: Complex64,
    a0: f64,
    coeffs: &[Complex64],
) -> Result<(GridFn, f64, f64)> {
    let g = poly_from(coeffs).to_grid(h.n_points())?;
    let sup = g.sup_abs();
    let diff = h.sub(&g)?;
    let zh: Vec<Complex64> = h.values().iter().map(|v| z + v).collect();
    let slack = (z.norm_sqr() + g.mean_sq() / (a0 * a0)).sqrt() + diff.mean_abs() / a0
        - numeric::mean_abs(&zh);
    Ok((g, sup, slack))
}

fn require_hardy_grid(h: &GridFn) -> Result<()> {
    let tol = torus::HARDY_TOL * h.sup_abs().max(1.0);
    let chk = torus::is_hardy(h, tol);
    if !chk.is_hardy {
        return Err(Error::NotAnalytic {
            frequency: chk.worst_frequency,
            violation: chk.max_violation,
        });
    }
    Ok(())
}

/// Splits an analytic mean-zero slice `h` at `z` by stopping at
/// `|h(B_t)| > 2α₀⁻¹|z|` and projecting onto the exit point.
pub fn elbrown_decompose(
    h: &GridFn,
    z: Complex64,
    alpha0: f64,
    cfg: &BrownianConfig,
    experiment: u64,
) -> Result<SliceSplit> {
    require_hardy_grid(h)?;
    let a0 = crate::a0(alpha0);
    let threshold = 2.0 * z.norm() / alpha0;
    let poly = AnalyticPoly::from_grid(h)?;
    let d = poly.degree();
    if z.norm() == 0.0 || poly.is_zero() {
        let coeffs = if z.norm() == 0.0 {
            vec![Complex64::new(0.0, 0.0); d]
        } else {
            vec![]
        };
        let (g, _, slack) = split_measures(h, z, a0, &coeffs)?;
        return Ok(SliceSplit {
            b: h.sub(&g)?,
            g,
            projection: None,
            diagnostics: SplitDiagnostics {
                threshold,
                a0,
                uniform_ratio: if z.norm() == 0.0 { None } else { Some(0.0) },
                uniform_ratio_se: 0.0,
                integral_slack: slack,
                integral_slack_se: 0.0,
                stopped_fraction: if z.norm() == 0.0 { 1.0 } else { 0.0 },
                max_overshoot: 0.0,
            },
        });
    }
    let proj = varopoulos_projection(&poly, threshold, cfg, experiment)?;
    if proj.exit_fraction() < MIN_EXIT_FRACTION {
        return Err(Error::Budget {
            exited: proj.exited,
            paths: proj.paths,
            max_steps: cfg.max_steps,
        });
    }
    let (g, sup, slack) = split_measures(h, z, a0, &proj.coeffs)?;
    let scale = a0 * z.norm();
    let mut ratio_rep = Vec::with_capacity(cfg.batches);
    let mut slack_rep = Vec::with_capacity(cfg.batches);
    for b in 0..cfg.batches {
        let (_, s, sl) = split_measures(h, z, a0, &proj.leave_out(b))?;
        ratio_rep.push(s / scale);
        slack_rep.push(sl);
    }
    Ok(SliceSplit {
        b: h.sub(&g)?,
        g,
        diagnostics: SplitDiagnostics {
            threshold,
            a0,
            uniform_ratio: Some(sup / scale),
            uniform_ratio_se: numeric::jackknife_se(&ratio_rep),
            integral_slack: slack,
            integral_slack_se: numeric::jackknife_se(&slack_rep),
            stopped_fraction: proj.stopped_fraction,
            max_overshoot: proj.max_overshoot,
        },
        projection: Some(proj),
    })
}

/// `E|z + h| − E(|z|² + α²|h|²)^{1/2}` by grid quadrature.
pub fn verify_complex_convexity(h: &GridFn, z: Complex64, alpha: f64) -> Result<f64> {
    require_hardy_grid(h)?;
    Ok(convexity_slack(h.values(), z, alpha))
}

fn convexity_slack(h: &[Complex64], z: Complex64, alpha: f64) -> f64 {
    let zz = z.norm_sqr();
    let a2 = alpha * alpha;
    let rhs: Vec<f64> = h.iter().map(|v| (z + v).norm()).collect();
    let lhs: Vec<f64> = h.iter().map(|v| (zz + a2 * v.norm_sqr()).sqrt()).collect();
    numeric::mean(&rhs) - numeric::mean(&lhs)
}

/// `(1+α²|w|²)^{3/2} − α²|1+w|(2+α²|w|²)`.
pub fn laplacian_inequality_slack(w: Complex64, alpha: f64) -> f64 {
    let a2 = alpha * alpha;
    let q = a2 * w.norm_sqr();
    (1.0 + q).powf(1.5) - a2 * (Complex64::new(1.0, 0.0) + w).norm() * (2.0 + q)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepResult {
    pub alpha: f64,
    pub min_slack: f64,
    pub argmin_re: f64,
    pub argmin_im: f64,
    pub negative_points: usize,
    pub points: usize,
}

/// Evaluates the Laplacian slack on a `points × points` grid over `[−r, r]²`.
pub fn laplacian_sweep(alpha: f64, radius: f64, points: usize) -> SweepResult {
    let axis = |i: usize| -radius + 2.0 * radius * i as f64 / (points - 1).max(1) as f64;
    let rows: Vec<(f64, usize, usize)> = (0..points)
        .into_par_iter()
        .map(|i| {
            let mut best = (f64::INFINITY, 0usize);
            let mut neg = 0;
            for j in 0..points {
                let s = laplacian_inequality_slack(Complex64::new(axis(i), axis(j)), alpha);
                if s < 0.0 {
                    neg += 1;
                }
                if s < best.0 {
                    best = (s, j);
                }
            }
            (best.0, best.1, neg)
        })
        .collect();
    let mut out = SweepResult {
        alpha,
        min_slack: f64::INFINITY,
        argmin_re: 0.0,
        argmin_im: 0.0,
        negative_points: 0,
        points: points * points,
    };
    for (i, (s, j, neg)) in rows.into_iter().enumerate() {
        out.negative_points += neg;
        if s < out.min_slack {
            out.min_slack = s;
            out.argmin_re = axis(i);
            out.argmin_im = axis(j);
        }
    }
    out
}

/// A source of `(h, z)` pairs for [`estimate_alpha`].
pub trait TrialGenerator: Sync {
    /// Analytic polynomial coefficients `c_0 = 0, c_1, ...` and the point `z`.
    fn sample(&self, seed: u64, trial: u64) -> (Vec<Complex64>, Complex64);
}

/// Random analytic polynomials of degree `1..=max_degree` with Gaussian
/// coefficients and `|z|` spread over four decades.
#[derive(Debug, Clone, Copy)]
pub struct RandomPolynomial {
    pub max_degree: usize,
}

impl Default for RandomPolynomial {
    fn default() -> Self {
        RandomPolynomial { max_degree: 8 }
    }
}

impl TrialGenerator for RandomPolynomial {
    fn sample(&self, seed: u64, trial: u64) -> (Vec<Complex64>, Complex64) {
        let d = rng::int_in(seed, &[trial, 0], 1, self.max_degree.max(1));
        let mut c = vec![Complex64::new(0.0, 0.0)];
        c.extend((1..=d).map(|j| rng::complex_normal(seed, &[trial, 1, j as u64])));
        let mag = 10f64.powf(-2.0 + 4.0 * rng::uniform(seed, &[trial, 2]));
        let z = Complex64::from_polar(mag, TAU * rng::uniform(seed, &[trial, 3]));
        (c, z)
    }
}

/// `h = c e^{iθ}`, `z = 1`, with `c` uniform in `[0, c_max]`.
#[derive(Debug, Clone, Copy)]
pub struct SingleMode {
    pub c_max: f64,
}

impl TrialGenerator for SingleMode {
    fn sample(&self, seed: u64, trial: u64) -> (Vec<Complex64>, Complex64) {
        let c = self.c_max * rng::uniform(seed, &[trial]);
        (
            vec![Complex64::new(0.0, 0.0), Complex64::new(c, 0.0)],
            Complex64::new(1.0, 0.0),
        )
    }
}

/// Always `h = 0`.
#[derive(Debug, Clone, Copy)]
pub struct ZeroGenerator;

impl TrialGenerator for ZeroGenerator {
    fn sample(&self, _seed: u64, _trial: u64) -> (Vec<Complex64>, Complex64) {
        (vec![Complex64::new(0.0, 0.0)], Complex64::new(1.0, 0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlphaConfig {
    pub trials: usize,
    pub tol: f64,
    pub n_points: usize,
    pub seed: u64,
}

impl Default for AlphaConfig {
    fn default() -> Self {
        AlphaConfig {
            trials: 10_000,
            tol: 1e-6,
            n_points: 256,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaEstimate {
    /// Smallest per-trial critical `α`.
    pub estimate: f64,
    /// True if no trial ever failed at `α = 1`.
    pub hit_upper_bound: bool,
    pub witness_trial: u64,
    pub witness_z: Complex64,
    pub witness_coeffs: Vec<Complex64>,
    pub trials: usize,
    pub n_points: usize,
    pub seed: u64,
}

/// Largest `α` in `[0, 1]` with nonnegative convexity slack for one `(h, z)`.
fn critical_alpha(h: &[Complex64], z: Complex64, tol: f64) -> (f64, bool) {
    if convexity_slack(h, z, 1.0) >= 0.0 {
        return (1.0, true);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if convexity_slack(h, z, mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, false)
}

/// Bisects the critical `α` of every sampled pair and reports the minimum.
pub fn estimate_alpha(gen: &dyn TrialGenerator, cfg: &AlphaConfig) -> Result<AlphaEstimate> {
    if cfg.trials == 0 || !(cfg.tol > 0.0) {
        return Err(Error::Domain(
            "estimate_alpha needs trials >= 1 and tol > 0".into(),
        ));
    }
    let n = cfg.n_points;
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::GridSize(n));
    }
    let results: Vec<(f64, bool)> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| {
            let (c, z) = gen.sample(cfg.seed, t);
            let p = AnalyticPoly::new(c);
            let h: Vec<Complex64> = (0..n).map(|j| p.eval(torus::grid_point(j, n))).collect();
            critical_alpha(&h, z, cfg.tol)
        })
        .collect();
    let mut best = 0;
    for (i, r) in results.iter().enumerate() {
        if r.0 < results[best].0 {
            best = i;
        }
    }
    let (coeffs, z) = gen.sample(cfg.seed, best as u64);
    Ok(AlphaEstimate {
        estimate: results[best].0,
        hit_upper_bound: results.iter().all(|r| r.1),
        witness_trial: best as u64,
        witness_z: z,
        witness_coeffs: coeffs,
        trials: cfg.trials,
        n_points: n,
        seed: cfg.seed,
    })
}

/// Writes `path,t,re,im,abs_h` rows for the first `count` paths, every
/// `stride` steps plus the exit point.
pub fn dump_paths<W: Write>(
    h: &AnalyticPoly,
    cfg: &BrownianConfig,
    experiment: u64,
    count: usize,
    stride: usize,
    mut w: W,
) -> Result<()> {
    cfg.validate()?;
    let stride = stride.max(1);
    writeln!(w, "path,t,re,im,abs_h")?;
    for p in 0..count.min(cfg.n_paths) {
        let mut rows = Vec::new();
        let mut i = 0usize;
        let exit = walk(
            &mut rng::path_rng(cfg.seed, experiment, p as u64),
            cfg,
            |t, b| {
                if i.is_multiple_of(stride) {
                    rows.push((t, b));
                }
                i += 1;
            },
        );
        if let Some(e) = exit {
            rows.push((e.time, e.point));
        }
        for (t, b) in rows {
            writeln!(w, "{},{},{},{},{}", p, t, b.re, b.im, h.eval(b).norm())?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn fast(paths: usize, seed: u64) -> BrownianConfig {
        BrownianConfig {
            dt: 1e-3,
            n_paths: paths,
            seed,
            ..BrownianConfig::default()
        }
    }

    fn identity() -> AnalyticPoly {
        AnalyticPoly::new(vec![c(0.0, 0.0), c(1.0, 0.0)])
    }

    #[test]
    fn exits_lie_on_circle_and_are_reproducible() {
        let cfg = fast(200, 3);
        let a = sample_exits(&cfg, 1).unwrap();
        let b = sample_exits(&cfg, 1).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_exits(&cfg, 2).unwrap());
        assert_eq!(a.exited(), 200);
        assert!(a.angles.iter().all(|x| (0.0..TAU).contains(x)));
        let mut rng = rng::path_rng(3, 1, 0);
        let e = walk(&mut rng, &cfg, |_, p| assert!(p.norm() < 1.0)).unwrap();
        assert!((e.point.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exit_time_matches_fine_run() {
        // Coarse run against a finer-dt run and against 1/2; the discrete
        // monitoring bias of order 0.58·√dt is added to the tolerance.
        let coarse = sample_exits(&fast(4000, 1), 0).unwrap().mean_time();
        let fine = sample_exits(&fast(4000, 2).with_dt(1e-4), 0)
            .unwrap()
            .mean_time();
        let se = coarse.1.hypot(fine.1);
        assert!((coarse.0 - fine.0).abs() < 3.0 * se + 0.6 * (1e-3f64).sqrt());
        assert!((fine.0 - 0.5).abs() < 3.0 * fine.1 + 0.6 * (1e-4f64).sqrt());
        // Var τ = 1/8, so SE ≈ 0.354/√n.
        assert!((fine.1 - (0.125f64 / 4000.0).sqrt()).abs() < 0.002);
    }

    #[test]
    fn exit_angles_uniform() {
        let s = sample_exits(&fast(20_000, 5), 0).unwrap();
        let chi = s.chi2_uniform(64, 0.001).unwrap();
        assert!((chi.critical - 103.4).abs() < 0.5, "{}", chi.critical);
        assert!(chi.pass, "{chi:?}");
    }

    #[test]
    fn chi2_detects_bias() {
        let s = ExitSample {
            paths: 1000,
            angles: (0..1000).map(|i| (i % 100) as f64 * 0.01).collect(),
            times: vec![0.5; 1000],
        };
        assert!(!s.chi2_uniform(64, 0.001).unwrap().pass);
    }

    #[test]
    fn large_threshold_never_stops() {
        let h = AnalyticPoly::new(vec![c(0.0, 0.0), c(0.5, 0.0), c(0.0, 0.25)]);
        let cfg = fast(1, 9);
        for p in 0..50 {
            let s = stopped_value(&h, 0.76, &mut rng::path_rng(9, 0, p), &cfg).unwrap();
            assert!(!s.stopped_early);
            let exit = Complex64::from_polar(1.0, s.exit_angle);
            assert!((s.h_at_rho - h.eval(exit)).norm() < 1e-12);
            assert_eq!(s.rho, s.exit_time);
        }
    }

    #[test]
    fn zero_threshold_stops_immediately() {
        let cfg = fast(1, 4);
        let s = stopped_value(&identity(), 0.0, &mut rng::path_rng(4, 0, 0), &cfg).unwrap();
        assert!(s.stopped_early);
        assert_eq!(s.rho, 0.0);
        assert_eq!(s.h_at_rho, c(0.0, 0.0));
    }

    #[test]
    fn identity_stops_at_half() {
        let cfg = fast(1, 6);
        for p in 0..200 {
            let s = stopped_value(&identity(), 0.5, &mut rng::path_rng(6, 0, p), &cfg).unwrap();
            assert!(s.stopped_early);
            assert!(s.h_at_rho.norm() > 0.5);
            // One Gaussian step has modulus far below 8√dt.
            assert!(s.overshoot < 8.0 * cfg.dt.sqrt());
            assert!(s.rho < s.exit_time);
        }
    }

    #[test]
    fn projection_without_stopping_recovers_coefficients() {
        let h = AnalyticPoly::new(vec![c(0.0, 0.0), c(0.3, -0.2), c(0.0, 0.4)]);
        let proj = varopoulos_projection(&h, 10.0, &fast(4000, 2), 0).unwrap();
        assert_eq!(proj.stopped_fraction, 0.0);
        for j in 1..=2 {
            let err = (proj.coeffs[j - 1] - h.coeff(j)).norm();
            assert!(err < 4.0 * proj.se[j - 1] + 1e-12, "j={j} err={err}");
        }
        let counts: usize = proj.batch_counts.iter().sum();
        assert_eq!(counts, proj.exited);
    }

    #[test]
    fn projection_of_identity_at_half() {
        // E(B_ρ conj B_τ) = E|B_ρ|² = 1/4 when ρ is the hitting time of |z| = 1/2.
        let proj = varopoulos_projection(&identity(), 0.5, &fast(4000, 8), 0).unwrap();
        let g1 = proj.coeffs[0];
        let bias = 0.5 * 0.6 * (1e-3f64).sqrt() * 2.0;
        assert!((g1.re - 0.25).abs() < 3.0 * proj.se[0] + bias, "{g1}");
        assert!(g1.norm() <= 0.5 + proj.max_overshoot + 3.0 * proj.se[0]);
        assert!(proj.stopped_fraction > 0.999);
    }

    #[test]
    fn projection_zero_threshold_vanishes() {
        let proj = varopoulos_projection(&identity(), 0.0, &fast(100, 1), 0).unwrap();
        assert!(proj.coeffs.iter().all(|v| v.norm() == 0.0));
        assert!(varopoulos_projection(&identity(), 1.0, &fast(0, 1), 0).is_err());
    }

    #[test]
    fn leave_out_matches_recomputation() {
        let h = AnalyticPoly::new(vec![c(0.0, 0.0), c(1.0, 0.5)]);
        let cfg = fast(500, 3);
        let proj = varopoulos_projection(&h, 1.0, &cfg, 7).unwrap();
        let samples = sample_stopped(&h, 1.0, &cfg, 7).unwrap();
        let b = 3;
        let kept: Vec<Complex64> = samples
            .iter()
            .enumerate()
            .filter(|(p, _)| cfg.batch_of(*p) != b)
            .filter_map(|(_, s)| s.map(|s| s.h_at_rho * Complex64::from_polar(1.0, -s.exit_angle)))
            .collect();
        let direct = kept.iter().sum::<Complex64>() / kept.len() as f64;
        assert!((proj.leave_out(b)[0] - direct).norm() < 1e-12);
    }

    #[test]
    fn split_at_zero_gives_b_equal_h() {
        let h = GridFn::mode(16, 2).unwrap();
        let s = elbrown_decompose(&h, c(0.0, 0.0), crate::ALPHA0, &fast(10, 0), 0).unwrap();
        assert!(s.g.values().iter().all(|v| v.norm() == 0.0));
        assert_eq!(s.b, h);
        // A₀⁻¹E|h| − E|h| < 0.
        assert!(s.diagnostics.integral_slack < 0.0);
    }

    #[test]
    fn split_without_stopping() {
        let h = AnalyticPoly::new(vec![c(0.0, 0.0), c(0.2, 0.1), c(0.0, 0.1)])
            .to_grid(16)
            .unwrap();
        let s = elbrown_decompose(&h, c(1.0, 0.0), crate::ALPHA0, &fast(2000, 5), 0).unwrap();
        let d = s.diagnostics;
        assert_eq!(d.stopped_fraction, 0.0);
        assert!(s.b.sup_abs() < 0.05);
        assert!(d.uniform_ratio.unwrap() < 0.1);
        assert!(d.integral_slack < 3.0 * d.integral_slack_se);
        assert!(torus::is_hardy(&s.g, 1e-12).is_hardy);
    }

    #[test]
    fn split_rejects_non_hardy() {
        let h = GridFn::mode(16, -1).unwrap();
        assert!(elbrown_decompose(&h, c(1.0, 0.0), crate::ALPHA0, &fast(10, 0), 0).is_err());
        assert!(verify_complex_convexity(&h, c(1.0, 0.0), 0.1).is_err());
    }

    #[test]
    fn convexity_examples() {
        let zero = GridFn::zeros(64).unwrap();
        assert!(
            verify_complex_convexity(&zero, c(2.0, 1.0), 0.5)
                .unwrap()
                .abs()
                < 1e-15
        );
        let h = AnalyticPoly::new(vec![c(0.0, 0.0), c(1.0, 1.0), c(0.0, -0.5)])
            .to_grid(64)
            .unwrap();
        let s = verify_complex_convexity(&h, c(0.0, 0.0), 0.3).unwrap();
        assert!((s - 0.7 * h.mean_abs()).abs() < 1e-14);
        // z = 1, h = r e^{iθ}: direct quadrature oracle.
        let n = 4096;
        for &r in &[0.3, 1.0, 2.5] {
            let h = GridFn::mode(n, 1).unwrap();
            let h = GridFn::new(h.values().iter().map(|v| v * r).collect()).unwrap();
            let alpha = crate::ALPHA0;
            let rhs: f64 = (0..n)
                .map(|j| (1.0 + r * torus::grid_point(j, n)).norm())
                .sum::<f64>()
                / n as f64;
            let lhs = (1.0 + alpha * alpha * r * r).sqrt();
            let s = verify_complex_convexity(&h, c(1.0, 0.0), alpha).unwrap();
            assert!((s - (rhs - lhs)).abs() < 1e-12);
            assert!(s >= 0.0);
        }
    }

    #[test]
    fn laplacian_examples() {
        let a = (1.0f64 / 6.0).sqrt();
        let s = laplacian_inequality_slack(c(-1.0, 0.0), a);
        assert!((s - (1.0 + a * a).powf(1.5)).abs() < 1e-15);
        assert!((laplacian_inequality_slack(c(0.0, 0.0), a) - 2.0 / 3.0).abs() < 1e-15);
        assert!(laplacian_inequality_slack(c(1.0, 0.0), 0.5f64.sqrt()) < 0.0);
    }

    #[test]
    fn laplacian_small_sweep() {
        let ok = laplacian_sweep((1.0f64 / 6.0).sqrt(), 100.0, 201);
        assert!(ok.min_slack >= 0.0);
        assert_eq!(ok.negative_points, 0);
        let bad = laplacian_sweep(0.5f64.sqrt(), 100.0, 201);
        assert!(bad.min_slack < 0.0);
        assert!(laplacian_inequality_slack(c(bad.argmin_re, bad.argmin_im), 0.5f64.sqrt()) < 0.0);
    }

    #[test]
    fn estimate_alpha_zero_generator_hits_upper_bound() {
        let est = estimate_alpha(
            &ZeroGenerator,
            &AlphaConfig {
                trials: 5,
                ..AlphaConfig::default()
            },
        )
        .unwrap();
        assert_eq!(est.estimate, 1.0);
        assert!(est.hit_upper_bound);
    }

    #[test]
    fn estimate_alpha_single_mode_matches_sweep() {
        let gen = SingleMode { c_max: 3.0 };
        let cfg = AlphaConfig {
            trials: 64,
            tol: 1e-9,
            n_points: 256,
            seed: 11,
        };
        let est = estimate_alpha(&gen, &cfg).unwrap();
        // Oracle: scan α on a fine grid for every sampled c.
        let mut oracle = 1.0f64;
        for t in 0..64 {
            let (cs, z) = gen.sample(11, t);
            let h: Vec<Complex64> = (0..256)
                .map(|j| cs[1] * torus::grid_point(j, 256))
                .collect();
            let mut a = 0.0;
            while a <= 1.0 && convexity_slack(&h, z, a) >= 0.0 {
                a += 1e-4;
            }
            oracle = oracle.min((a - 1e-4).min(1.0));
        }
        assert!(
            (est.estimate - oracle).abs() < 2e-4,
            "{} vs {}",
            est.estimate,
            oracle
        );
    }

    #[test]
    fn estimate_alpha_random_polynomials() {
        let cfg = AlphaConfig {
            trials: 300,
            ..AlphaConfig::default()
        };
        let est = estimate_alpha(&RandomPolynomial::default(), &cfg).unwrap();
        assert!(est.estimate >= crate::ALPHA0 - cfg.tol, "{}", est.estimate);
        assert_eq!(
            est,
            estimate_alpha(&RandomPolynomial::default(), &cfg).unwrap()
        );
    }

    #[test]
    fn dump_has_header_and_exit_rows() {
        let mut buf = Vec::new();
        dump_paths(&identity(), &fast(3, 1), 0, 2, 50, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("path,t,re,im,abs_h"));
        let last: Vec<f64> = text
            .lines()
            .last()
            .unwrap()
            .split(',')
            .map(|x| x.parse().unwrap())
            .collect();
        assert_eq!(last[0], 1.0);
        assert!((last[4] - 1.0).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn projection_is_analytic_and_mean_zero(seed in any::<u64>(), thr in 0.0f64..2.0) {
            let h = AnalyticPoly::new(vec![
                c(0.0, 0.0),
                rng::complex_normal(seed, &[1]),
                rng::complex_normal(seed, &[2]),
            ]);
            let proj = varopoulos_projection(&h, thr, &fast(50, seed), 0).unwrap();
            let g = proj.grid(32).unwrap();
            prop_assert!(torus::is_hardy(&g, 1e-12 * g.sup_abs().max(1.0)).is_hardy);
        }

        #[test]
        fn laplacian_nonnegative_below_one_sixth(re in -100.0f64..100.0, im in -100.0f64..100.0, a2 in 0.0f64..=1.0/6.0) {
            prop_assert!(laplacian_inequality_slack(c(re, im), a2.sqrt()) >= 0.0);
        }
    }
}
