//! Deterministic batch runners. Work is spread over the current rayon pool
//! and merged in input order, so output does not depend on thread count.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::brownian::{self, BrownianConfig};
use crate::error::Result;
use crate::inequalities::{self, CheckId, InequalityReport, McInfo};
use crate::martingale::{Family, GeneratorParams, MartingaleTable};
use crate::torus::AnalyticPoly;
use crate::{Complex64, Mode};

/// Parameters of the exact-mode suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactSuiteConfig {
    pub n: usize,
    #[serde(rename = "N")]
    pub n_points: usize,
    pub degree: usize,
    pub scale: f64,
    pub seeds: usize,
    pub seed: u64,
}

impl Default for ExactSuiteConfig {
    fn default() -> Self {
        ExactSuiteConfig {
            n: 3,
            n_points: 16,
            degree: 3,
            scale: 1.0,
            seeds: 100,
            seed: 0,
        }
    }
}

impl ExactSuiteConfig {
    /// Seed of run `i`.
    pub fn run_seed(&self, i: usize) -> u64 {
        self.seed.wrapping_add(i as u64)
    }

    fn hardy_params(&self, seed: u64) -> GeneratorParams {
        GeneratorParams::hardy(self.n, self.n_points, self.degree, self.scale, seed)
    }

    fn general_params(&self, seed: u64) -> GeneratorParams {
        GeneratorParams::general(self.n, self.n_points, self.scale, seed)
            .with_f0(Complex64::new(0.0, 0.0))
    }
}

/// Records plus a summary; serializes as NDJSON.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub records: Vec<InequalityReport>,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub suite: String,
    pub config: serde_json::Value,
    pub records: usize,
    pub passed: usize,
    pub failed: usize,
    pub degenerate: usize,
    /// Largest `lhs / base` per check.
    pub worst_ratio: BTreeMap<String, f64>,
    pub pass: bool,
}

impl SuiteReport {
    fn new(suite: &str, config: serde_json::Value, records: Vec<InequalityReport>) -> Self {
        let mut worst: BTreeMap<String, f64> = BTreeMap::new();
        for r in &records {
            if let Some(x) = r.ratio {
                let e = worst.entry(r.check.clone()).or_insert(x);
                *e = e.max(x);
            }
        }
        let passed = records.iter().filter(|r| r.pass).count();
        let summary = Summary {
            suite: suite.to_string(),
            config,
            records: records.len(),
            passed,
            failed: records.len() - passed,
            degenerate: records.iter().filter(|r| r.degenerate).count(),
            worst_ratio: worst,
            pass: passed == records.len(),
        };
        SuiteReport { records, summary }
    }

    pub fn pass(&self) -> bool {
        self.summary.pass
    }

    /// One JSON object per record, then `{"summary": ...}`.
    pub fn write_ndjson<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        serde_json::to_writer(&mut w, &json!({ "summary": self.summary }))?;
        w.write_all(b"\n")
    }

    /// Flat projection of the records.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "check,seed,n,N,degree,mode,lhs,rhs,constant,ratio,pass,degenerate"
        )?;
        for r in &self.records {
            let opt = |x: Option<String>| x.unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.check,
                opt(r.seed.map(|s| s.to_string())),
                r.n,
                r.n_points,
                opt(r.degree.map(|d| d.to_string())),
                match r.mode {
                    Mode::Exact => "exact",
                    Mode::MonteCarlo => "monte-carlo",
                },
                r.lhs,
                r.rhs,
                r.constant,
                opt(r.ratio.map(|x| x.to_string())),
                r.pass,
                r.degenerate
            )?;
        }
        Ok(())
    }
}

/// Five exact checks per seed: the square-function upper bound on a Hardy
/// martingale with `F_0 = 1`, and Davis, previsible projection,
/// Burkholder–Gundy and Davis–Garsia on a general martingale with `F_0 = 0`.
pub fn run_exact_suite(cfg: &ExactSuiteConfig) -> Result<SuiteReport> {
    let per_seed: Vec<Vec<InequalityReport>> = (0..cfg.seeds)
        .into_par_iter()
        .map(|i| -> Result<Vec<InequalityReport>> {
            let seed = cfg.run_seed(i);
            let h = cfg.hardy_params(seed).generate()?;
            let g = cfg.general_params(seed).generate()?;
            Ok(vec![
                inequalities::check_square_function_upper(&h)?,
                inequalities::check_davis(&g),
                inequalities::check_previsible_projection(&g),
                inequalities::check_burkholder_gundy(&g),
                inequalities::check_davis_garsia(&g)?,
            ])
        })
        .collect::<Result<_>>()?;
    let config = serde_json::to_value(cfg).expect("config serializes");
    Ok(SuiteReport::new(
        "exact",
        config,
        per_seed.into_iter().flatten().collect(),
    ))
}

/// Runs one exact check on a family of seeds drawn from `base`.
pub fn run_check(check: CheckId, base: &GeneratorParams, seeds: usize) -> Result<SuiteReport> {
    let records = (0..seeds)
        .into_par_iter()
        .map(|i| {
            let p = GeneratorParams {
                seed: base.seed.wrapping_add(i as u64),
                ..base.clone()
            };
            check.run(&p.generate()?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SuiteReport::new(
        check.name(),
        serde_json::to_value(base).expect("serializes"),
        records,
    ))
}

/// Parameters of the Monte Carlo suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BrownianSuiteConfig {
    pub n: usize,
    #[serde(rename = "N")]
    pub n_points: usize,
    pub degree: usize,
    pub scale: f64,
    pub seeds: usize,
    pub seed: u64,
    pub mc: BrownianConfig,
    /// Paths used by the exit-angle uniformity record.
    pub exit_paths: usize,
    pub exit_bins: usize,
}

impl Default for BrownianSuiteConfig {
    fn default() -> Self {
        BrownianSuiteConfig {
            n: 2,
            n_points: 16,
            degree: 3,
            scale: 1.0,
            seeds: 1,
            seed: 0,
            mc: BrownianConfig::default(),
            exit_paths: 100_000,
            exit_bins: 64,
        }
    }
}

fn mc_record(
    check: &str,
    lhs: f64,
    rhs: f64,
    pass: bool,
    mc: &BrownianConfig,
    f: Option<&MartingaleTable>,
) -> InequalityReport {
    InequalityReport {
        check: check.to_string(),
        lhs,
        rhs,
        constant: 1.0,
        ratio: if rhs > inequalities::DEGENERATE_RHS {
            Some(lhs / rhs)
        } else {
            None
        },
        pass,
        degenerate: false,
        mode: Mode::MonteCarlo,
        n: f.map_or(0, |f| f.n_steps()),
        n_points: f.map_or(0, |f| f.n_points()),
        degree: None,
        seed: Some(mc.seed),
        mc: Some(McInfo {
            paths: mc.n_paths,
            dt: mc.dt,
        }),
        details: BTreeMap::new(),
    }
}

/// Exit-angle uniformity at significance 0.001.
pub fn exit_uniformity_record(
    mc: &BrownianConfig,
    paths: usize,
    bins: usize,
) -> Result<InequalityReport> {
    let cfg = BrownianConfig {
        n_paths: paths,
        ..*mc
    };
    let sample = brownian::sample_exits(&cfg, 0)?;
    let chi = sample.chi2_uniform(bins, 1e-3)?;
    let mut r = mc_record(
        "exit-uniformity",
        chi.statistic,
        chi.critical,
        chi.pass,
        &cfg,
        None,
    );
    r.details.insert("dof".into(), json!(chi.dof));
    r.details.insert("exited".into(), json!(sample.exited()));
    r.details
        .insert("mean_exit_time".into(), json!(sample.mean_time()));
    Ok(r)
}

/// Projection with an unreachable threshold: every coefficient of `h` is
/// recovered within 3 standard errors.
pub fn no_stopping_record(h: &AnalyticPoly, mc: &BrownianConfig) -> Result<InequalityReport> {
    let p = brownian::varopoulos_projection(h, f64::INFINITY, mc, 1)?;
    let mut worst: f64 = 0.0;
    for j in 1..=h.degree().max(p.degree()) {
        let diff = (p.coeffs.get(j - 1).copied().unwrap_or_default() - h.coeff(j)).norm();
        let se = p.se.get(j - 1).copied().unwrap_or(0.0);
        let z = if se > 0.0 {
            diff / se
        } else if diff < 1e-12 {
            0.0
        } else {
            f64::INFINITY
        };
        worst = worst.max(z);
    }
    let mut r = mc_record("projection-recovery", worst, 3.0, worst <= 3.0, mc, None);
    r.details
        .insert("stopped_fraction".into(), json!(p.stopped_fraction));
    r.details
        .insert("exit_fraction".into(), json!(p.exit_fraction()));
    Ok(r)
}

/// Hardy thin-thick check per seed plus the two harness records.
pub fn run_brownian_suite(cfg: &BrownianSuiteConfig) -> Result<SuiteReport> {
    let mut records = Vec::new();
    records.push(exit_uniformity_record(
        &cfg.mc,
        cfg.exit_paths,
        cfg.exit_bins,
    )?);
    let h = AnalyticPoly::new(vec![
        Complex64::new(0.0, 0.0),
        Complex64::new(0.6, 0.2),
        Complex64::new(-0.3, 0.1),
    ]);
    records.push(no_stopping_record(&h, &cfg.mc)?);
    // Slices already run in parallel inside the decomposition.
    for i in 0..cfg.seeds {
        let seed = cfg.seed.wrapping_add(i as u64);
        let f =
            GeneratorParams::hardy(cfg.n, cfg.n_points, cfg.degree, cfg.scale, seed).generate()?;
        records.push(inequalities::check_hardy_thin_thick(&f, &cfg.mc)?);
    }
    let config = serde_json::to_value(cfg).expect("config serializes");
    Ok(SuiteReport::new("brownian", config, records))
}

/// Default generator used by single-check runs.
pub fn default_params(
    check: CheckId,
    n: usize,
    n_points: usize,
    degree: usize,
    seed: u64,
) -> GeneratorParams {
    if check.hardy_only() {
        GeneratorParams::hardy(n, n_points, degree, 1.0, seed)
    } else {
        GeneratorParams::general(n, n_points, 1.0, seed)
            .with_family(Family::General)
            .with_f0(Complex64::new(0.0, 0.0))
    }
}
