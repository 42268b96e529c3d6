//! Thin-thick decompositions `F = G + B`.
//!
//! * [`truncation_split`]: the scalar split `g = 1_D h − E(1_D h)` with
//!   `D = {|h| <= 2M}`.
//! * [`davis_garsia_decompose`]: the same truncation applied per step with
//!   `M_{k−1}` the partial square function; works for every martingale.
//! * [`hardy_thin_thick`]: per slice Brownian stopping at level
//!   `2α₀⁻¹|F_{k−1}|` followed by projection on the exit point; Hardy inputs only.
//!
//! `G` starts at `F_0` and `B` at 0.

use num_complex::Complex64;
use serde::Serialize;

use crate::brownian::{self, BrownianConfig, Projection};
use crate::error::{Error, Result};
use crate::iteration::{self, IterationCertificate, IterationInput, Tolerance};
use crate::martingale::{self, LevelFn, MartingaleTable};
use crate::numeric;
use crate::rng;
use crate::torus::{AnalyticPoly, GridFn};
use crate::Mode;

fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

/// Output of [`truncation_split`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Truncation {
    #[serde(skip)]
    pub g: Vec<Complex64>,
    #[serde(skip)]
    pub b: Vec<Complex64>,
    /// `E(M²+|h|²)^{1/2} − (M² + E|g|²/12)^{1/2} − E|h−g|/4`.
    pub slack: f64,
    pub sup_g: f64,
    /// `sup|g| / 2M`; may exceed 1.
    pub ratio_2m: Option<f64>,
    /// `sup|g| / 4M`; at most 1.
    pub ratio_4m: Option<f64>,
}

/// `1_D h − E(1_D h)` with ties `|h| = 2M` inside `D`, over a uniform grid.
fn truncate(h: &[Complex64], m: f64) -> Vec<Complex64> {
    let kept: Vec<Complex64> = h
        .iter()
        .map(|&v| if v.norm() <= 2.0 * m { v } else { zero() })
        .collect();
    let mean = numeric::mean_c(&kept);
    kept.into_iter().map(|v| v - mean).collect()
}

/// Truncation split of a mean-zero `h` at level `M`.
pub fn truncation_split(h: &[Complex64], m: f64) -> Result<Truncation> {
    if !(m >= 0.0 && m.is_finite()) {
        return Err(Error::Domain(format!("M must be finite and >= 0, got {m}")));
    }
    if h.is_empty() {
        return Err(Error::Domain("empty input".into()));
    }
    let scale = h.iter().map(|v| v.norm()).fold(1.0, f64::max);
    let mean = numeric::mean_c(h).norm();
    if mean > 1e-10 * scale {
        return Err(Error::NonzeroMean(mean));
    }
    let g = truncate(h, m);
    let b: Vec<Complex64> = h.iter().zip(&g).map(|(x, y)| x - y).collect();
    let outer: Vec<f64> = h.iter().map(|v| m.hypot(v.norm())).collect();
    let g_sq: Vec<f64> = g.iter().map(|v| v.norm_sqr()).collect();
    let slack = numeric::mean(&outer)
        - (m * m + numeric::mean(&g_sq) / 12.0).sqrt()
        - numeric::mean_abs(&b) / 4.0;
    let sup_g = g.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let ratio = |c: f64| if m > 0.0 { Some(sup_g / (c * m)) } else { None };
    Ok(Truncation {
        slack,
        sup_g,
        ratio_2m: ratio(2.0),
        ratio_4m: ratio(4.0),
        g,
        b,
    })
}

/// Per-step diagnostics shared by both martingale decompositions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub step: usize,
    /// Largest `|ΔG_k| / bound_k` over the grid.
    pub uniform_ratio: f64,
    pub uniform_ratio_se: f64,
    /// Hypothesis slack of the iteration certificate at this step.
    pub integral_slack: f64,
    pub integral_slack_se: f64,
}

/// `F = G + B` with diagnostics of type `D`.
#[derive(Debug, Clone)]
pub struct Decomposition<D> {
    pub g: MartingaleTable,
    pub b: MartingaleTable,
    pub mode: Mode,
    pub steps: Vec<StepDiagnostics>,
    pub certificate: IterationCertificate,
    pub diagnostics: D,
}

impl<D: Serialize> Decomposition<D> {
    /// Diagnostics block with per-step data and the certificate.
    pub fn diagnostics_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(&self.diagnostics).expect("diagnostics serialize");
        if let Some(obj) = v.as_object_mut() {
            obj.insert(
                "steps".into(),
                serde_json::to_value(&self.steps).expect("steps"),
            );
            obj.insert("certificate".into(), self.certificate.to_json());
        }
        v
    }
}

/// Sum `E_{k-1}|ΔG_k|²` square-rooted per point plus `Σ E|ΔB_k|`.
fn thin_thick_norm(g: &MartingaleTable, b: &MartingaleTable) -> f64 {
    numeric::mean(&g.cond_square_function_values())
        + b.differences()
            .iter()
            .map(|d| d.expectation_abs())
            .sum::<f64>()
}

fn lift(values: &[f64], rep: usize) -> Vec<f64> {
    values
        .iter()
        .flat_map(|&v| std::iter::repeat_n(v, rep))
        .collect()
}

fn lift_c(values: &[Complex64], rep: usize) -> Vec<Complex64> {
    values
        .iter()
        .flat_map(|&v| std::iter::repeat_n(v, rep))
        .collect()
}

/// Iteration input with `u_k = ΔF_k` (or `|ΔF_k|`), `v_k = (E_{k−1}|ΔG_k|²)^{1/2}/c`,
/// `w_k = |ΔB_k|/c`, all on the terminal grid.
fn certificate_input(
    f: &MartingaleTable,
    dg: &[LevelFn],
    db: &[LevelFn],
    c: f64,
    modulus: bool,
) -> Result<IterationInput> {
    let n = f.n_points();
    let total = f.len();
    let mut u = Vec::with_capacity(f.n_steps());
    let mut v = Vec::with_capacity(f.n_steps());
    let mut w = Vec::with_capacity(f.n_steps());
    for k in 1..=f.n_steps() {
        let d = f.difference(k)?;
        let rep = total / d.values().len();
        let uk: Vec<Complex64> = if modulus {
            d.values()
                .iter()
                .map(|z| Complex64::new(z.norm(), 0.0))
                .collect()
        } else {
            d.values().to_vec()
        };
        u.push(lift_c(&uk, rep));
        let sq: Vec<f64> = dg[k - 1].values().iter().map(|z| z.norm_sqr()).collect();
        let cv: Vec<f64> = martingale::average_blocks_real(&sq, n)
            .into_iter()
            .map(|x| x.sqrt() / c)
            .collect();
        v.push(lift(&cv, rep * n));
        let wk: Vec<f64> = db[k - 1].values().iter().map(|z| z.norm() / c).collect();
        w.push(lift(&wk, rep));
    }
    IterationInput::new(u, v, w)
}

fn max_abs_diff(a: &[Complex64], b: &[Complex64], c: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(c)
        .map(|((x, y), z)| (x - y - z).norm())
        .fold(0.0, f64::max)
}

/// Diagnostics of [`davis_garsia_decompose`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DavisGarsiaDiagnostics {
    pub mode: Mode,
    /// `max |ΔG_k| / M_{k−1}` over points with `M_{k−1} > 0`; at most 4.
    pub uniform_ratio_max: f64,
    /// `|ΔG_k| <= 4 M_{k−1}` at every point.
    pub pointwise_bound_holds: bool,
    /// `max |ΔG_k| / 2M_{k−1}`, the truncation lemma's displayed bound.
    pub lemma_2m_ratio: f64,
    /// Smallest `c` with `|ΔG_k|² <= c Σ_{m<k} |ΔF_m|²`.
    pub squared_ratio_max: f64,
    pub thin_thick_lhs: f64,
    /// `8·E S(F)`.
    pub thin_thick_rhs: f64,
    /// `thin_thick_lhs / E S(F)`.
    pub thin_thick_ratio: Option<f64>,
    /// `E S(F)`.
    pub reciprocal_lhs: f64,
    /// `2·E s(G) + E Σ|ΔB_k|`.
    pub reciprocal_rhs: f64,
    /// `E S(F) / (E s(G) + E Σ|ΔB_k|)`; at most 2.
    pub reciprocal_ratio: Option<f64>,
    pub reconstruction_error: f64,
}

/// Davis–Garsia decomposition of an arbitrary martingale.
pub fn davis_garsia_decompose(
    f: &MartingaleTable,
) -> Result<Decomposition<DavisGarsiaDiagnostics>> {
    let n = f.n_points();
    let mut msq = vec![0.0f64];
    let mut dg = Vec::with_capacity(f.n_steps());
    let mut db = Vec::with_capacity(f.n_steps());
    let mut steps = Vec::with_capacity(f.n_steps());
    let mut pointwise = true;
    let (mut ratio_max, mut sq_ratio): (f64, f64) = (0.0, 0.0);
    for k in 1..=f.n_steps() {
        let d = f.difference(k)?;
        let mut g = Vec::with_capacity(d.values().len());
        let mut next = Vec::with_capacity(d.values().len());
        let mut step_ratio: f64 = 0.0;
        for (p, &m2) in msq.iter().enumerate() {
            let m = m2.sqrt();
            let h = d.slice(p);
            let gs = truncate(h, m);
            for (y, gv) in gs.iter().enumerate() {
                let a = gv.norm();
                if a > 4.0 * m * (1.0 + 1e-12) + 1e-14 {
                    pointwise = false;
                }
                if m > 0.0 {
                    step_ratio = step_ratio.max(a / m);
                    sq_ratio = sq_ratio.max(a * a / m2);
                }
                next.push(m2 + h[y].norm_sqr());
            }
            g.extend(gs);
        }
        ratio_max = ratio_max.max(step_ratio);
        let b: Vec<Complex64> = d.values().iter().zip(&g).map(|(x, y)| x - y).collect();
        dg.push(LevelFn::new(k, n, g)?);
        db.push(LevelFn::new(k, n, b)?);
        steps.push(StepDiagnostics {
            step: k,
            uniform_ratio: step_ratio,
            uniform_ratio_se: 0.0,
            integral_slack: 0.0,
            integral_slack_se: 0.0,
        });
        msq = next;
    }
    let g = MartingaleTable::from_differences(n, f.f0(), &dg)?;
    let b = MartingaleTable::from_differences(n, zero(), &db)?;
    let input = certificate_input(f, &dg, &db, 4.0, true)?;
    let certificate = iteration::conclude_quadratic(&input, &Tolerance::exact());
    for (s, slack) in steps.iter_mut().zip(&certificate.steps) {
        s.integral_slack = *slack;
    }
    let es = numeric::mean(&f.square_function_values());
    let lhs = thin_thick_norm(&g, &b);
    let es_g = numeric::mean(&g.cond_square_function_values());
    let sum_b: f64 = db.iter().map(|d| d.expectation_abs()).sum();
    let ratio = |num: f64, den: f64| if den >= 1e-14 { Some(num / den) } else { None };
    let diagnostics = DavisGarsiaDiagnostics {
        mode: Mode::Exact,
        uniform_ratio_max: ratio_max,
        pointwise_bound_holds: pointwise,
        lemma_2m_ratio: ratio_max / 2.0,
        squared_ratio_max: sq_ratio,
        thin_thick_lhs: lhs,
        thin_thick_rhs: 8.0 * es,
        thin_thick_ratio: ratio(lhs, es),
        reciprocal_lhs: es,
        reciprocal_rhs: 2.0 * es_g + sum_b,
        reciprocal_ratio: ratio(es, es_g + sum_b),
        reconstruction_error: max_abs_diff(f.terminal(), g.terminal(), b.terminal()),
    };
    Ok(Decomposition {
        g,
        b,
        mode: Mode::Exact,
        steps,
        certificate,
        diagnostics,
    })
}

/// Diagnostics of [`hardy_thin_thick`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HardyDiagnostics {
    #[serde(rename = "A0")]
    pub a0: f64,
    #[serde(rename = "C1")]
    pub c1: f64,
    pub alpha0: f64,
    pub integral_lhs: f64,
    pub integral_lhs_se: f64,
    /// `C₁·E|F_n|`.
    pub integral_rhs: f64,
    /// `max |ΔG_k| / (A₀|F_{k−1}|)` over points with `F_{k−1} ≠ 0`.
    pub previsible_ratio: f64,
    pub previsible_ratio_se: f64,
    pub mode: Mode,
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub slices: usize,
    pub stopped_fraction: f64,
    pub max_overshoot: f64,
    pub g_is_hardy: bool,
    pub b_is_hardy: bool,
    pub reconstruction_error: f64,
}

struct HardyMetrics {
    g: MartingaleTable,
    b: MartingaleTable,
    integral_lhs: f64,
    previsible: f64,
    step_ratio: Vec<f64>,
    input: IterationInput,
}

/// Builds `G`, `B` from per-slice coefficient vectors (`coeffs[k-1][prefix]`,
/// `ĝ(1..=d)`; empty means `g = 0`).
fn hardy_assemble(
    f: &MartingaleTable,
    coeffs: &[Vec<Vec<Complex64>>],
    a0: f64,
) -> Result<HardyMetrics> {
    let n = f.n_points();
    let mut dg = Vec::with_capacity(f.n_steps());
    let mut db = Vec::with_capacity(f.n_steps());
    let mut step_ratio = Vec::with_capacity(f.n_steps());
    let mut previsible: f64 = 0.0;
    for k in 1..=f.n_steps() {
        let d = f.difference(k)?;
        let prev = f.level_values(k - 1)?;
        let mut g = Vec::with_capacity(d.values().len());
        let mut r: f64 = 0.0;
        for (p, c) in coeffs[k - 1].iter().enumerate() {
            let mut poly = vec![zero()];
            poly.extend_from_slice(c);
            let slice = AnalyticPoly::new(poly).to_grid(n)?;
            let z = prev[p].norm();
            if z > 0.0 {
                r = r.max(slice.sup_abs() / (a0 * z));
            }
            g.extend(slice.into_values());
        }
        previsible = previsible.max(r);
        step_ratio.push(r);
        let b: Vec<Complex64> = d.values().iter().zip(&g).map(|(x, y)| x - y).collect();
        dg.push(LevelFn::new(k, n, g)?);
        db.push(LevelFn::new(k, n, b)?);
    }
    let g = MartingaleTable::from_differences(n, f.f0(), &dg)?;
    let b = MartingaleTable::from_differences(n, zero(), &db)?;
    let input = certificate_input(f, &dg, &db, a0, false)?;
    let input = input.with_initial(vec![f.f0(); f.len()])?;
    Ok(HardyMetrics {
        integral_lhs: thin_thick_norm(&g, &b),
        g,
        b,
        previsible,
        step_ratio,
        input,
    })
}

/// Hardy thin-thick decomposition driven by stopped Brownian motion.
///
/// Slice `(k, prefix)` is split with `z = F_{k−1}(prefix)` using the random
/// stream keyed on `(seed, k, prefix)`. Errors are jackknifed over the path
/// batches of `mc`.
pub fn hardy_thin_thick(
    f: &MartingaleTable,
    mc: &BrownianConfig,
    alpha0: f64,
) -> Result<Decomposition<HardyDiagnostics>> {
    martingale::require_hardy(f)?;
    mc.validate()?;
    if !(alpha0 > 0.0 && alpha0 <= 1.0) {
        return Err(Error::Domain(format!(
            "alpha0 must lie in (0, 1], got {alpha0}"
        )));
    }
    let a0 = crate::a0(alpha0);
    let mut coeffs: Vec<Vec<Vec<Complex64>>> = Vec::with_capacity(f.n_steps());
    let mut projections: Vec<Vec<Option<Projection>>> = Vec::with_capacity(f.n_steps());
    let (mut slices, mut stopped, mut weight, mut overshoot) = (0usize, 0.0, 0.0, 0.0f64);
    for k in 1..=f.n_steps() {
        let d = f.difference(k)?;
        let prev = f.level_values(k - 1)?;
        let mut ck = Vec::with_capacity(prev.len());
        let mut pk = Vec::with_capacity(prev.len());
        for (p, &z) in prev.iter().enumerate() {
            let h = GridFn::new(d.slice(p).to_vec())?;
            let experiment = rng::key(k as u64, &[p as u64]);
            let split = brownian::elbrown_decompose(&h, z, alpha0, mc, experiment)?;
            match &split.projection {
                Some(proj) => {
                    slices += 1;
                    stopped += proj.stopped_fraction;
                    weight += 1.0;
                    overshoot = overshoot.max(proj.max_overshoot);
                    ck.push(proj.coeffs.clone());
                }
                None => ck.push(Vec::new()),
            }
            pk.push(split.projection);
        }
        coeffs.push(ck);
        projections.push(pk);
    }
    let full = hardy_assemble(f, &coeffs, a0)?;
    let mut integral_rep = Vec::with_capacity(mc.batches);
    let mut previsible_rep = Vec::with_capacity(mc.batches);
    let mut lhs_rep = Vec::with_capacity(mc.batches);
    let mut step_rep: Vec<Vec<f64>> = vec![Vec::with_capacity(mc.batches); f.n_steps()];
    let mut ratio_rep: Vec<Vec<f64>> = vec![Vec::with_capacity(mc.batches); f.n_steps()];
    if slices > 0 {
        for bt in 0..mc.batches {
            let loo: Vec<Vec<Vec<Complex64>>> = projections
                .iter()
                .map(|pk| {
                    pk.iter()
                        .map(|p| p.as_ref().map_or_else(Vec::new, |p| p.leave_out(bt)))
                        .collect()
                })
                .collect();
            let m = hardy_assemble(f, &loo, a0)?;
            integral_rep.push(m.integral_lhs);
            previsible_rep.push(m.previsible);
            lhs_rep.push(m.input.lhs());
            for (k, s) in iteration::verify_hypothesis_partial_sum(&m.input)
                .into_iter()
                .enumerate()
            {
                step_rep[k].push(s);
                ratio_rep[k].push(m.step_ratio[k]);
            }
        }
    }
    let step_se: Vec<f64> = step_rep.iter().map(|r| numeric::jackknife_se(r)).collect();
    let tol = Tolerance::monte_carlo(&step_se, numeric::jackknife_se(&lhs_rep));
    let certificate = iteration::conclude_partial_sum(&full.input, &tol);
    let steps = (0..f.n_steps())
        .map(|k| StepDiagnostics {
            step: k + 1,
            uniform_ratio: full.step_ratio[k],
            uniform_ratio_se: numeric::jackknife_se(&ratio_rep[k]),
            integral_slack: certificate.steps[k],
            integral_slack_se: step_se[k],
        })
        .collect();
    let g_tol = martingale::hardy_tol(&full.g);
    let diagnostics = HardyDiagnostics {
        a0,
        c1: crate::c1(alpha0),
        alpha0,
        integral_lhs: full.integral_lhs,
        integral_lhs_se: numeric::jackknife_se(&integral_rep),
        integral_rhs: crate::c1(alpha0) * f.mean_abs_terminal(),
        previsible_ratio: full.previsible,
        previsible_ratio_se: numeric::jackknife_se(&previsible_rep),
        mode: Mode::MonteCarlo,
        paths: mc.n_paths,
        dt: mc.dt,
        seed: mc.seed,
        slices,
        stopped_fraction: if weight > 0.0 { stopped / weight } else { 0.0 },
        max_overshoot: overshoot,
        g_is_hardy: martingale::is_hardy_martingale(&full.g, g_tol).is_hardy,
        b_is_hardy: martingale::is_hardy_martingale(
            &full.b,
            martingale::hardy_tol(&full.b).max(g_tol),
        )
        .is_hardy,
        reconstruction_error: max_abs_diff(f.terminal(), full.g.terminal(), full.b.terminal()),
    };
    Ok(Decomposition {
        g: full.g,
        b: full.b,
        mode: Mode::MonteCarlo,
        steps,
        certificate,
        diagnostics,
    })
}
