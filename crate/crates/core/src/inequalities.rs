//! One checker per martingale inequality, scalar sub-suites and an
//! adversarial random-restart search for large ratios.
//!
//! Every checker returns an [`InequalityReport`] where `ratio = lhs / base`,
//! `rhs = constant·base`, and inputs with `base < 1e-14` are flagged
//! degenerate instead of producing an infinite ratio.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::brownian::BrownianConfig;
use crate::decompose;
use crate::error::{Error, Result};
use crate::iteration;
use crate::martingale::{self, Family, GeneratorParams, MartingaleTable};
use crate::numeric;
use crate::rng;
use crate::Mode;

/// Right-hand sides below this are treated as zero.
pub const DEGENERATE_RHS: f64 = 1e-14;

/// Slack floor of the scalar sub-suites.
pub const SCALAR_TOL: f64 = -1e-12;

/// Relative tolerance of exact-arithmetic comparisons.
const EXACT_REL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckId {
    SquareFunctionUpper,
    Davis,
    PrevisibleProjection,
    BurkholderGundy,
    DavisGarsia,
    HardyThinThick,
}

impl CheckId {
    pub const EXACT: [CheckId; 5] = [
        CheckId::SquareFunctionUpper,
        CheckId::Davis,
        CheckId::PrevisibleProjection,
        CheckId::BurkholderGundy,
        CheckId::DavisGarsia,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckId::SquareFunctionUpper => "square-function-upper",
            CheckId::Davis => "davis",
            CheckId::PrevisibleProjection => "previsible-projection",
            CheckId::BurkholderGundy => "burkholder-gundy",
            CheckId::DavisGarsia => "davis-garsia",
            CheckId::HardyThinThick => "hardy-thin-thick",
        }
    }

    /// The constant each check asserts.
    pub fn constant(self) -> f64 {
        match self {
            CheckId::SquareFunctionUpper => crate::c0(crate::ALPHA0),
            CheckId::Davis => crate::DAVIS_CONSTANT,
            CheckId::PrevisibleProjection | CheckId::BurkholderGundy => 2.0,
            CheckId::DavisGarsia => 8.0,
            CheckId::HardyThinThick => crate::c1(crate::ALPHA0),
        }
    }

    pub fn hardy_only(self) -> bool {
        matches!(self, CheckId::SquareFunctionUpper | CheckId::HardyThinThick)
    }

    /// Runs an exact-mode check.
    pub fn run(self, f: &MartingaleTable) -> Result<InequalityReport> {
        match self {
            CheckId::SquareFunctionUpper => check_square_function_upper(f),
            CheckId::Davis => Ok(check_davis(f)),
            CheckId::PrevisibleProjection => Ok(check_previsible_projection(f)),
            CheckId::BurkholderGundy => Ok(check_burkholder_gundy(f)),
            CheckId::DavisGarsia => check_davis_garsia(f),
            CheckId::HardyThinThick => Err(Error::Domain(
                "hardy-thin-thick needs a Monte Carlo config; use check_hardy_thin_thick".into(),
            )),
        }
    }
}

impl fmt::Display for CheckId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CheckId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "square-function-upper" | "sq-upper" => CheckId::SquareFunctionUpper,
            "davis" => CheckId::Davis,
            "previsible-projection" | "previsible" => CheckId::PrevisibleProjection,
            "burkholder-gundy" | "bg" => CheckId::BurkholderGundy,
            "davis-garsia" | "dg" => CheckId::DavisGarsia,
            "hardy-thin-thick" | "hardy" => CheckId::HardyThinThick,
            other => return Err(Error::UnknownCheck(other.to_string())),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McInfo {
    pub paths: usize,
    pub dt: f64,
}

/// One inequality evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityReport {
    pub check: String,
    pub lhs: f64,
    pub rhs: f64,
    pub constant: f64,
    pub ratio: Option<f64>,
    pub pass: bool,
    pub degenerate: bool,
    pub mode: Mode,
    pub n: usize,
    #[serde(rename = "N")]
    pub n_points: usize,
    pub degree: Option<usize>,
    pub seed: Option<u64>,
    pub mc: Option<McInfo>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<String, serde_json::Value>,
}

impl InequalityReport {
    /// `lhs` against `constant·base`; degenerate when `base < 1e-14`.
    fn new(check: &str, f: &MartingaleTable, lhs: f64, base: f64, constant: f64) -> Self {
        let degenerate = base < DEGENERATE_RHS;
        let rhs = constant * base;
        let gen = f.generator();
        InequalityReport {
            check: check.to_string(),
            lhs,
            rhs,
            constant,
            ratio: if degenerate { None } else { Some(lhs / base) },
            pass: degenerate || lhs <= rhs * (1.0 + EXACT_REL) + DEGENERATE_RHS,
            degenerate,
            mode: Mode::Exact,
            n: f.n_steps(),
            n_points: f.n_points(),
            degree: gen.filter(|g| g.family == Family::Hardy).map(|g| g.degree),
            seed: gen.map(|g| g.seed),
            mc: None,
            details: BTreeMap::new(),
        }
    }

    fn detail(mut self, key: &str, value: serde_json::Value) -> Self {
        self.details.insert(key.to_string(), value);
        self
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serializes")
    }
}

/// `E S(F) <= C₀ E|F_n|` plus the product form
/// `E S(F) <= 2α₀⁻¹ (E|F_n|)^{1/2} (E max_k |F_k|)^{1/2}`.
pub fn check_square_function_upper(f: &MartingaleTable) -> Result<InequalityReport> {
    martingale::require_hardy(f)?;
    let es = numeric::mean(&f.square_function_values());
    let e_last = f.mean_abs_terminal();
    let e_max = numeric::mean(&f.maximal_function_values());
    let product = 2.0 / crate::ALPHA0 * (e_last * e_max).sqrt();
    let product_ok = es <= product * (1.0 + EXACT_REL) + DEGENERATE_RHS;
    let mut r = InequalityReport::new(
        CheckId::SquareFunctionUpper.name(),
        f,
        es,
        e_last,
        CheckId::SquareFunctionUpper.constant(),
    )
    .detail("product_rhs", json!(product))
    .detail(
        "product_ratio",
        json!(if product >= DEGENERATE_RHS {
            Some(es / product)
        } else {
            None
        }),
    )
    .detail("product_pass", json!(product_ok));
    r.pass &= product_ok;
    Ok(r)
}

/// `E max_{k<=n} |F_k| <= √10 E S(F)`; `F_0` enters the maximum.
pub fn check_davis(f: &MartingaleTable) -> InequalityReport {
    let lhs = numeric::mean(&f.maximal_function_values());
    let es = numeric::mean(&f.square_function_values());
    let r = InequalityReport::new(CheckId::Davis.name(), f, lhs, es, crate::DAVIS_CONSTANT);
    let c = r.ratio.map(|x| 1.0 / x);
    r.detail("empirical_lower_constant", json!(c))
}

/// `E(Σ_k (E_{k−1}|ΔF_k|)²)^{1/2} <= 2 E S(F)`.
pub fn check_previsible_projection(f: &MartingaleTable) -> InequalityReport {
    let n = f.n_points();
    let mut acc = vec![0.0; f.len()];
    for k in 1..=f.n_steps() {
        let d = f.difference(k).expect("k in range");
        let abs: Vec<f64> = d.values().iter().map(|z| z.norm()).collect();
        let proj = martingale::average_blocks_real(&abs, n);
        let rep = f.len() / proj.len();
        for (t, a) in acc.iter_mut().enumerate() {
            *a += proj[t / rep] * proj[t / rep];
        }
    }
    let lhs = numeric::mean(&acc.into_iter().map(f64::sqrt).collect::<Vec<_>>());
    let es = numeric::mean(&f.square_function_values());
    InequalityReport::new(CheckId::PrevisibleProjection.name(), f, lhs, es, 2.0)
}

/// `E S(F) <= 2 E s(F)`.
pub fn check_burkholder_gundy(f: &MartingaleTable) -> InequalityReport {
    let es = numeric::mean(&f.square_function_values());
    let ecs = numeric::mean(&f.cond_square_function_values());
    InequalityReport::new(CheckId::BurkholderGundy.name(), f, es, ecs, 2.0)
}

/// Davis–Garsia lower estimate with constant 8, the reciprocal upper estimate
/// with constant 2 and the pointwise bound `|ΔG_k| <= 4 M_{k−1}`.
pub fn check_davis_garsia(f: &MartingaleTable) -> Result<InequalityReport> {
    let d = decompose::davis_garsia_decompose(f)?;
    let x = d.diagnostics;
    let reciprocal_ok = match x.reciprocal_ratio {
        Some(r) => r <= 2.0 * (1.0 + EXACT_REL),
        None => true,
    } && x.reciprocal_lhs
        <= x.reciprocal_rhs * (1.0 + EXACT_REL) + DEGENERATE_RHS;
    let mut r = InequalityReport::new(
        CheckId::DavisGarsia.name(),
        f,
        x.thin_thick_lhs,
        x.reciprocal_lhs,
        8.0,
    )
    .detail("pointwise_bound_holds", json!(x.pointwise_bound_holds))
    .detail("uniform_ratio_max", json!(x.uniform_ratio_max))
    .detail("lemma_2m_ratio", json!(x.lemma_2m_ratio))
    .detail("squared_ratio_max", json!(x.squared_ratio_max))
    .detail("reciprocal_lhs", json!(x.reciprocal_lhs))
    .detail("reciprocal_rhs", json!(x.reciprocal_rhs))
    .detail("reciprocal_ratio", json!(x.reciprocal_ratio))
    .detail("reciprocal_pass", json!(reciprocal_ok))
    .detail("certificate_pass", json!(d.certificate.pass))
    .detail("reconstruction_error", json!(x.reconstruction_error));
    r.pass &= x.pointwise_bound_holds
        && reciprocal_ok
        && d.certificate.pass
        && x.reconstruction_error < 1e-10;
    Ok(r)
}

/// Monte Carlo check of the Hardy decomposition: the integral bound with
/// `C₁`, the previsible bound `|ΔG_k| <= A₀|F_{k−1}|` and the certificate.
pub fn check_hardy_thin_thick(
    f: &MartingaleTable,
    mc: &BrownianConfig,
) -> Result<InequalityReport> {
    let d = decompose::hardy_thin_thick(f, mc, crate::ALPHA0)?;
    let x = d.diagnostics;
    let mut r = InequalityReport::new(
        CheckId::HardyThinThick.name(),
        f,
        x.integral_lhs,
        f.mean_abs_terminal(),
        x.c1,
    );
    r.mode = Mode::MonteCarlo;
    r.mc = Some(McInfo {
        paths: mc.n_paths,
        dt: mc.dt,
    });
    let integral_ok = r.degenerate || x.integral_lhs <= x.integral_rhs + 3.0 * x.integral_lhs_se;
    let previsible_ok = x.previsible_ratio <= 1.0 + 3.0 * x.previsible_ratio_se;
    r.pass = integral_ok && previsible_ok && x.g_is_hardy && d.certificate.pass;
    Ok(r.detail("integral_lhs_se", json!(x.integral_lhs_se))
        .detail("integral_pass", json!(integral_ok))
        .detail("previsible_ratio", json!(x.previsible_ratio))
        .detail("previsible_ratio_se", json!(x.previsible_ratio_se))
        .detail("previsible_pass", json!(previsible_ok))
        .detail("A0", json!(x.a0))
        .detail("g_is_hardy", json!(x.g_is_hardy))
        .detail("b_is_hardy", json!(x.b_is_hardy))
        .detail("stopped_fraction", json!(x.stopped_fraction))
        .detail("max_overshoot", json!(x.max_overshoot))
        .detail("certificate_lhs", json!(d.certificate.lhs))
        .detail("certificate_rhs", json!(d.certificate.rhs))
        .detail("certificate_pass", json!(d.certificate.pass))
        .detail("mc_seed", json!(mc.seed)))
}

/// Scalar inequalities checked by sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalarCheck {
    /// `Bs <= s²A + (A²+B²)^{1/2} − A`.
    IterationLemma,
    /// `(M² + (∫|u|)²)^{1/2} <= ∫(M² + |u|²)^{1/2}`.
    PrevisibleScalar,
    /// `∫(M² + |u|²)^{1/2} <= (M² + ∫|u|²)^{1/2}`.
    Minkowski,
    /// `(1+x)^{1/2} >= 1 + x/3` on `[0, 1]`.
    SqrtLinear,
}

impl ScalarCheck {
    pub const ALL: [ScalarCheck; 4] = [
        ScalarCheck::IterationLemma,
        ScalarCheck::PrevisibleScalar,
        ScalarCheck::Minkowski,
        ScalarCheck::SqrtLinear,
    ];

    fn tag(self) -> u64 {
        self as u64 + 1
    }

    /// Slack of sample `i`.
    pub fn slack(self, seed: u64, i: u64) -> f64 {
        let t = self.tag();
        let u = |j: u64| rng::uniform(seed, &[t, i, j]);
        match self {
            ScalarCheck::IterationLemma => {
                iteration::scalar_lemma_slack(u(0), 1e3 * u(1), 1e3 * u(2)).expect("in domain")
            }
            ScalarCheck::PrevisibleScalar | ScalarCheck::Minkowski => {
                let m = 10f64.powf(-3.0 + 5.0 * u(0));
                let len = 1 + (u(1) * 16.0) as u64;
                let spread = 10f64.powf(-2.0 + 4.0 * u(2));
                let vals: Vec<f64> = (0..len)
                    .map(|j| {
                        let z: Complex64 = rng::complex_normal(seed, &[t, i, 10 + j]);
                        z.norm() * spread
                    })
                    .collect();
                let outer: Vec<f64> = vals.iter().map(|v| m.hypot(*v)).collect();
                let e_outer = numeric::mean(&outer);
                if self == ScalarCheck::PrevisibleScalar {
                    e_outer - m.hypot(numeric::mean(&vals))
                } else {
                    let sq: Vec<f64> = vals.iter().map(|v| v * v).collect();
                    (m * m + numeric::mean(&sq)).sqrt() - e_outer
                }
            }
            ScalarCheck::SqrtLinear => {
                let x = u(0);
                (1.0 + x).sqrt() - 1.0 - x / 3.0
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalarReport {
    pub check: ScalarCheck,
    pub samples: u64,
    pub min_slack: f64,
    pub witness_index: u64,
    pub pass: bool,
    pub seed: u64,
}

/// Evaluates `samples` pseudo-random instances and reports the smallest slack.
pub fn scalar_suite(check: ScalarCheck, samples: u64, seed: u64) -> ScalarReport {
    const CHUNK: u64 = 4096;
    let chunks = samples.div_ceil(CHUNK);
    let best = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut best = (f64::INFINITY, u64::MAX);
            for i in c * CHUNK..((c + 1) * CHUNK).min(samples) {
                let s = check.slack(seed, i);
                if s < best.0 {
                    best = (s, i);
                }
            }
            best
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(
            (f64::INFINITY, u64::MAX),
            |a, b| if b.0 < a.0 { b } else { a },
        );
    ScalarReport {
        check,
        samples,
        min_slack: best.0,
        witness_index: best.1,
        pass: best.0 >= SCALAR_TOL,
        seed,
    }
}

/// Ranges explored by [`adversarial_ratio_search`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchSpace {
    pub families: Vec<Family>,
    pub n_steps: (usize, usize),
    pub grids: Vec<usize>,
    /// Upper bound on the Hardy degree; capped at `N/2 − 1`.
    pub max_degree: usize,
    pub scale: (f64, f64),
    /// Candidate starting values `F_0`.
    pub f0: Vec<Complex64>,
    /// Perturbation moves per restart.
    pub moves: usize,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            families: Family::ALL.to_vec(),
            n_steps: (1, 3),
            grids: vec![4, 8, 16],
            max_degree: 7,
            scale: (0.1, 4.0),
            f0: vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
            moves: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchReport {
    pub check: CheckId,
    pub constant: f64,
    pub best_ratio: f64,
    pub witness: Option<GeneratorParams>,
    /// Best ratio after each restart; nondecreasing.
    pub history: Vec<f64>,
    pub restarts: usize,
    pub evaluations: usize,
    pub seed: u64,
}

fn pick<T: Copy>(xs: &[T], seed: u64, parts: &[u64]) -> T {
    xs[rng::int_in(seed, parts, 0, xs.len() - 1)]
}

fn random_params(space: &SearchSpace, hardy: bool, seed: u64, r: u64, m: u64) -> GeneratorParams {
    let family = if hardy {
        Family::Hardy
    } else {
        pick(&space.families, seed, &[r, m, 0])
    };
    let n_points = pick(&space.grids, seed, &[r, m, 1]);
    let max_deg = space.max_degree.min(n_points / 2 - 1).max(1);
    let (lo, hi) = space.scale;
    GeneratorParams {
        family,
        n_steps: rng::int_in(seed, &[r, m, 2], space.n_steps.0, space.n_steps.1),
        n_points,
        degree: rng::int_in(seed, &[r, m, 3], 1, max_deg),
        scale: lo + (hi - lo) * rng::uniform(seed, &[r, m, 4]),
        f0: pick(&space.f0, seed, &[r, m, 5]),
        seed: rng::key(seed, &[r, m, 6]),
    }
}

/// Changes one coordinate of `p`.
fn perturb(
    p: &GeneratorParams,
    space: &SearchSpace,
    hardy: bool,
    seed: u64,
    r: u64,
    m: u64,
) -> GeneratorParams {
    let fresh = random_params(space, hardy, seed, r, m);
    let mut q = p.clone();
    match rng::int_in(seed, &[r, m, 7], 0, 5) {
        0 => q.family = fresh.family,
        1 => q.n_steps = fresh.n_steps,
        2 => {
            q.n_points = fresh.n_points;
            q.degree = q.degree.min(q.n_points / 2 - 1).max(1);
        }
        3 => q.degree = fresh.degree.min(q.n_points / 2 - 1).max(1),
        4 => q.scale = fresh.scale,
        _ => {
            q.seed = fresh.seed;
            q.f0 = fresh.f0;
        }
    }
    q
}

fn ratio_of(check: CheckId, p: &GeneratorParams) -> Result<f64> {
    let f = p.generate()?;
    Ok(check.run(&f)?.ratio.unwrap_or(0.0))
}

/// Random-restart coordinate search maximizing `lhs / base` of an exact check.
/// Only reports; never asserts.
pub fn adversarial_ratio_search(
    check: CheckId,
    space: &SearchSpace,
    restarts: usize,
    seed: u64,
) -> Result<SearchReport> {
    if check == CheckId::HardyThinThick {
        return Err(Error::Domain(
            "adversarial search supports exact-mode checks only".into(),
        ));
    }
    if space.families.is_empty() || space.grids.is_empty() || space.f0.is_empty() {
        return Err(Error::Domain("search space has an empty coordinate".into()));
    }
    if let Some(g) = space.grids.iter().find(|g| **g < 4 || !g.is_power_of_two()) {
        return Err(Error::GridSize(*g));
    }
    let hardy = check.hardy_only();
    // Davis compares max |F_k|, which sees F_0, against S(F), which does not;
    // it is only meaningful from F_0 = 0.
    let davis_space;
    let space = if check == CheckId::Davis {
        davis_space = SearchSpace {
            f0: vec![Complex64::new(0.0, 0.0)],
            ..space.clone()
        };
        &davis_space
    } else {
        space
    };
    let results: Vec<(f64, GeneratorParams, usize)> = (0..restarts as u64)
        .into_par_iter()
        .map(|r| -> Result<(f64, GeneratorParams, usize)> {
            let mut best_p = random_params(space, hardy, seed, r, 0);
            let mut best = ratio_of(check, &best_p)?;
            for m in 1..=space.moves as u64 {
                let q = perturb(&best_p, space, hardy, seed, r, m);
                let v = ratio_of(check, &q)?;
                if v > best {
                    best = v;
                    best_p = q;
                }
            }
            Ok((best, best_p, space.moves + 1))
        })
        .collect::<Result<_>>()?;
    let mut history = Vec::with_capacity(restarts);
    let mut best: Option<(f64, GeneratorParams)> = None;
    let mut evaluations = 0;
    for (v, p, e) in results {
        evaluations += e;
        if best.as_ref().is_none_or(|b| v > b.0) {
            best = Some((v, p));
        }
        history.push(best.as_ref().map_or(0.0, |b| b.0));
    }
    Ok(SearchReport {
        check,
        constant: check.constant(),
        best_ratio: best.as_ref().map_or(0.0, |b| b.0),
        witness: best.map(|b| b.1),
        history,
        restarts,
        evaluations,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::martingale::{random_hardy, LevelFn};
    use crate::torus::{self, GridFn};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn general(n: usize, big_n: usize, seed: u64) -> MartingaleTable {
        GeneratorParams::general(n, big_n, 1.0, seed)
            .with_f0(c(0.0))
            .generate()
            .unwrap()
    }

    fn one_mode(n_points: usize) -> MartingaleTable {
        let d = LevelFn::new(
            1,
            n_points,
            GridFn::mode(n_points, 1).unwrap().into_values(),
        )
        .unwrap();
        MartingaleTable::from_differences(n_points, c(0.0), &[d]).unwrap()
    }

    #[test]
    fn check_ids_parse() {
        for id in CheckId::EXACT {
            assert_eq!(id.name().parse::<CheckId>().unwrap(), id);
        }
        assert!(matches!(
            "nope".parse::<CheckId>(),
            Err(Error::UnknownCheck(_))
        ));
    }

    #[test]
    fn square_function_upper_examples() {
        let f = MartingaleTable::constant(2, 8, c(2.0)).unwrap();
        let r = check_square_function_upper(&f).unwrap();
        assert!(r.pass && !r.degenerate);
        assert_eq!(r.lhs, 0.0);
        let r = check_square_function_upper(&one_mode(16)).unwrap();
        assert!((r.lhs - 1.0).abs() < 1e-14);
        assert!((r.ratio.unwrap() - 1.0).abs() < 1e-14);
        assert!((r.constant - 341.53).abs() < 0.01);
        assert!(check_square_function_upper(&general(2, 8, 1)).is_err());
    }

    #[test]
    fn square_function_upper_random() {
        let mut worst: f64 = 0.0;
        for seed in 0..100 {
            let r =
                check_square_function_upper(&random_hardy(3, 16, 3, 1.0, seed).unwrap()).unwrap();
            assert!(r.pass);
            worst = worst.max(r.ratio.unwrap());
        }
        assert!(worst < 341.53);
    }

    #[test]
    fn davis_examples() {
        let r = check_davis(&one_mode(8));
        assert!((r.ratio.unwrap() - 1.0).abs() < 1e-14);
        let r = check_davis(&MartingaleTable::constant(3, 4, c(1.0)).unwrap());
        assert!(r.degenerate && r.ratio.is_none());
        for seed in 0..100 {
            assert!(check_davis(&general(3, 8, seed)).pass);
        }
    }

    #[test]
    fn previsible_examples() {
        let r = check_previsible_projection(&one_mode(8));
        assert!((r.lhs - 1.0).abs() < 1e-14);
        assert!((r.rhs - 2.0).abs() < 1e-14);
        // |ΔF_k| constant per prefix: ratio at most 1.
        let p = GeneratorParams::general(3, 8, 1.0, 2).with_family(Family::Sign);
        let r = check_previsible_projection(&p.generate().unwrap());
        assert!(r.ratio.unwrap() <= 1.0 + 1e-12);
        for seed in 0..100 {
            assert!(check_previsible_projection(&general(3, 8, seed)).pass);
        }
    }

    #[test]
    fn burkholder_gundy_examples() {
        let p = GeneratorParams::general(3, 8, 1.0, 5).with_family(Family::Sign);
        let r = check_burkholder_gundy(&p.generate().unwrap());
        assert!((r.ratio.unwrap() - 1.0).abs() < 1e-12);
        let r = check_burkholder_gundy(&MartingaleTable::constant(2, 4, c(1.0)).unwrap());
        assert!(r.degenerate && r.pass && r.lhs == 0.0);
        for seed in 0..100 {
            assert!(check_burkholder_gundy(&general(3, 8, seed)).pass);
        }
    }

    #[test]
    fn davis_garsia_examples() {
        let r = check_davis_garsia(&MartingaleTable::constant(2, 4, c(1.0)).unwrap()).unwrap();
        assert!(r.pass && r.lhs == 0.0);
        let r = check_davis_garsia(&one_mode(8)).unwrap();
        assert!((r.lhs - 1.0).abs() < 1e-12);
        assert!(r.pass);
        for seed in 0..50 {
            assert!(check_davis_garsia(&general(3, 16, seed)).unwrap().pass);
        }
    }

    #[test]
    fn report_json_schema() {
        let r = check_davis(&general(2, 8, 3));
        let j = r.to_json();
        for key in [
            "check",
            "lhs",
            "rhs",
            "constant",
            "ratio",
            "pass",
            "degenerate",
            "mode",
            "n",
            "N",
            "degree",
            "seed",
            "mc",
        ] {
            assert!(j.get(key).is_some(), "{key}");
        }
        assert_eq!(j["mc"], serde_json::Value::Null);
    }

    #[test]
    fn hardy_check_small() {
        let f = random_hardy(1, 8, 2, 0.5, 2).unwrap();
        let mc = BrownianConfig {
            dt: 1e-3,
            n_paths: 300,
            ..BrownianConfig::default()
        };
        let r = check_hardy_thin_thick(&f, &mc).unwrap();
        assert!(r.pass, "{r:?}");
        assert_eq!(r.mode, Mode::MonteCarlo);
        assert_eq!(r.mc.unwrap().paths, 300);
    }

    #[test]
    fn scalar_suites_small() {
        for check in ScalarCheck::ALL {
            let r = scalar_suite(check, 20_000, 1);
            assert!(r.pass, "{r:?}");
            assert_eq!(r, scalar_suite(check, 20_000, 1));
        }
        // Equality case of the square-root bound at x = 0 is approached.
        assert!(scalar_suite(ScalarCheck::SqrtLinear, 20_000, 1).min_slack < 1e-3);
    }

    #[test]
    fn search_constant_martingales() {
        let space = SearchSpace {
            scale: (0.0, 0.0),
            ..SearchSpace::default()
        };
        let r = adversarial_ratio_search(CheckId::Davis, &space, 4, 1).unwrap();
        assert_eq!(r.best_ratio, 0.0);
    }

    #[test]
    fn search_single_step_sign() {
        let space = SearchSpace {
            families: vec![Family::Sign],
            n_steps: (1, 1),
            f0: vec![c(0.0)],
            ..SearchSpace::default()
        };
        let r = adversarial_ratio_search(CheckId::Davis, &space, 6, 3).unwrap();
        assert!((r.best_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn search_history_is_monotone_and_prefix_stable() {
        let space = SearchSpace {
            moves: 3,
            ..SearchSpace::default()
        };
        let a = adversarial_ratio_search(CheckId::PrevisibleProjection, &space, 12, 9).unwrap();
        let b = adversarial_ratio_search(CheckId::PrevisibleProjection, &space, 6, 9).unwrap();
        assert!(a.history.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(&a.history[..6], &b.history[..]);
        assert!(a.best_ratio <= 2.0);
        let w = a.witness.unwrap();
        assert_eq!(
            ratio_of(CheckId::PrevisibleProjection, &w).unwrap(),
            a.best_ratio
        );
    }

    #[test]
    fn davis_search_starts_from_zero() {
        let r = adversarial_ratio_search(CheckId::Davis, &SearchSpace::default(), 30, 4).unwrap();
        assert_eq!(r.witness.unwrap().f0, c(0.0));
        assert!(r.best_ratio <= crate::DAVIS_CONSTANT);
    }

    #[test]
    fn previsible_search_exceeds_one() {
        let r = adversarial_ratio_search(
            CheckId::PrevisibleProjection,
            &SearchSpace::default(),
            200,
            0,
        )
        .unwrap();
        assert!(
            r.best_ratio > 1.0 && r.best_ratio <= 2.0,
            "{}",
            r.best_ratio
        );
    }

    #[test]
    fn search_rejects_monte_carlo_check() {
        assert!(
            adversarial_ratio_search(CheckId::HardyThinThick, &SearchSpace::default(), 1, 0)
                .is_err()
        );
    }

    #[test]
    fn hardy_search_stays_hardy() {
        let r = adversarial_ratio_search(
            CheckId::SquareFunctionUpper,
            &SearchSpace {
                moves: 2,
                ..SearchSpace::default()
            },
            4,
            2,
        )
        .unwrap();
        let f = r.witness.unwrap().generate().unwrap();
        assert!(martingale::is_hardy_martingale(&f, 1e-10).is_hardy);
        let _ = torus::HARDY_TOL;
    }
}
