//! Martingales adapted to the coordinate filtration of the discretized torus
//! product `T^n`.
//!
//! A [`MartingaleTable`] stores its terminal value on the `N^n` product grid in
//! row-major order (coordinate 1 outermost) together with every level
//! `F_k = E_k F_n`, which lives on the `N^k` grid of prefixes. Averaging over
//! the last coordinate of a depth-`k` array gives the depth-`k-1` array, so the
//! tower property holds by construction.

use std::io::{BufRead, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric;
use crate::rng;
use crate::torus::{self, GridFn};

/// Largest admissible product-grid size `N^n`.
pub const MAX_ENTRIES: usize = 1 << 24;

const FORMAT_TAG: &str = "hardylab-martingale";

/// `N^depth`, guarded by [`MAX_ENTRIES`].
pub fn grid_len(n_points: usize, depth: usize) -> Result<usize> {
    let guard = Error::MemoryGuard {
        n_steps: depth,
        n_points,
        limit: MAX_ENTRIES,
    };
    let mut len: usize = 1;
    for _ in 0..depth {
        len = len.checked_mul(n_points).ok_or(Error::MemoryGuard {
            n_steps: depth,
            n_points,
            limit: MAX_ENTRIES,
        })?;
        if len > MAX_ENTRIES {
            return Err(guard);
        }
    }
    Ok(len)
}

#[cfg(test)]
fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

/// A function measurable with respect to `F_depth`, stored on the `N^depth` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelFn {
    depth: usize,
    n_points: usize,
    values: Vec<Complex64>,
}

impl LevelFn {
    pub fn new(depth: usize, n_points: usize, values: Vec<Complex64>) -> Result<Self> {
        let expected = grid_len(n_points, depth)?;
        if values.len() != expected {
            return Err(Error::Length {
                expected,
                got: values.len(),
            });
        }
        Ok(LevelFn {
            depth,
            n_points,
            values,
        })
    }

    pub fn from_real(depth: usize, n_points: usize, values: &[f64]) -> Result<Self> {
        LevelFn::new(
            depth,
            n_points,
            values.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        )
    }

    pub fn constant(n_points: usize, c: Complex64) -> Self {
        LevelFn {
            depth: 0,
            n_points,
            values: vec![c],
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// Last-coordinate slice `y -> g(prefix, y)`.
    pub fn slice(&self, prefix: usize) -> &[Complex64] {
        let n = self.n_points;
        &self.values[prefix * n..(prefix + 1) * n]
    }

    /// Constant extension to a deeper grid.
    pub fn lift(&self, depth: usize) -> Result<LevelFn> {
        if depth < self.depth {
            return Err(Error::Depth {
                expected: self.depth,
                got: depth,
            });
        }
        let rep = grid_len(self.n_points, depth - self.depth)?;
        let values = self
            .values
            .iter()
            .flat_map(|&v| std::iter::repeat_n(v, rep))
            .collect();
        LevelFn::new(depth, self.n_points, values)
    }

    pub fn expectation(&self) -> Complex64 {
        numeric::mean_c(&self.values)
    }

    pub fn expectation_abs(&self) -> f64 {
        numeric::mean_abs(&self.values)
    }
}

/// `E_{k-1}` applied to a depth-`k` function: the average over the last coordinate.
pub fn cond_expect_prev(g: &LevelFn) -> Result<LevelFn> {
    if g.depth == 0 {
        return Err(Error::OutOfRange { index: 0, max: 0 });
    }
    let values = average_blocks(&g.values, g.n_points);
    LevelFn::new(g.depth - 1, g.n_points, values)
}

pub fn expectation(g: &LevelFn) -> Complex64 {
    g.expectation()
}

pub fn expectation_abs(g: &LevelFn) -> f64 {
    g.expectation_abs()
}

pub(crate) fn average_blocks(values: &[Complex64], block: usize) -> Vec<Complex64> {
    values.chunks(block).map(numeric::mean_c).collect()
}

pub(crate) fn average_blocks_real(values: &[f64], block: usize) -> Vec<f64> {
    values.chunks(block).map(numeric::mean).collect()
}

/// Generator family of a random martingale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Differences are analytic trigonometric polynomials of degree `d` in the last coordinate.
    Hardy,
    /// Centered complex Gaussian noise in the last coordinate.
    General,
    /// Real `±a` steps with a prefix-dependent amplitude.
    Sign,
    /// One centered spike per prefix.
    Spike,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Hardy, Family::General, Family::Sign, Family::Spike];

    fn tag(self) -> u64 {
        match self {
            Family::Hardy => 1,
            Family::General => 2,
            Family::Sign => 3,
            Family::Spike => 4,
        }
    }
}

/// Parameters of a seeded random martingale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub family: Family,
    pub n_steps: usize,
    pub n_points: usize,
    pub degree: usize,
    /// Step `k` coefficients have size `scale / k`.
    pub scale: f64,
    /// Starting value `F_0`.
    pub f0: Complex64,
    pub seed: u64,
}

impl GeneratorParams {
    pub fn hardy(n_steps: usize, n_points: usize, degree: usize, scale: f64, seed: u64) -> Self {
        GeneratorParams {
            family: Family::Hardy,
            n_steps,
            n_points,
            degree,
            scale,
            f0: Complex64::new(1.0, 0.0),
            seed,
        }
    }

    pub fn general(n_steps: usize, n_points: usize, scale: f64, seed: u64) -> Self {
        GeneratorParams {
            family: Family::General,
            degree: 0,
            ..GeneratorParams::hardy(n_steps, n_points, 0, scale, seed)
        }
    }

    pub fn with_family(mut self, family: Family) -> Self {
        self.family = family;
        self
    }

    pub fn with_f0(mut self, f0: Complex64) -> Self {
        self.f0 = f0;
        self
    }

    pub fn generate(&self) -> Result<MartingaleTable> {
        generate(self)
    }
}

/// One martingale on the `N^n` product grid, with all levels precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleTable {
    n_steps: usize,
    n_points: usize,
    levels: Vec<Vec<Complex64>>,
    generator: Option<GeneratorParams>,
}

impl MartingaleTable {
    /// The martingale `F_k = E_k(terminal)`.
    pub fn from_terminal(
        n_steps: usize,
        n_points: usize,
        terminal: Vec<Complex64>,
    ) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::Domain("a martingale needs at least one step".into()));
        }
        if n_points < 2 || !n_points.is_power_of_two() {
            return Err(Error::GridSize(n_points));
        }
        let len = grid_len(n_points, n_steps)?;
        if terminal.len() != len {
            return Err(Error::Length {
                expected: len,
                got: terminal.len(),
            });
        }
        if let Some(i) = terminal
            .iter()
            .position(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::NonFinite(i));
        }
        let mut levels = vec![terminal];
        for _ in 0..n_steps {
            let next = average_blocks(levels.last().expect("nonempty"), n_points);
            levels.push(next);
        }
        levels.reverse();
        Ok(MartingaleTable {
            n_steps,
            n_points,
            levels,
            generator: None,
        })
    }

    /// Martingale with `F_0 = f0` and the given differences (`diffs[k-1]` at
    /// depth `k`). The differences are taken to be conditionally mean-zero;
    /// the table is the martingale closed by their sum.
    pub fn from_differences(n_points: usize, f0: Complex64, diffs: &[LevelFn]) -> Result<Self> {
        let n_steps = diffs.len();
        if n_steps == 0 {
            return Err(Error::Domain("a martingale needs at least one step".into()));
        }
        let len = grid_len(n_points, n_steps)?;
        let mut terminal = vec![f0; len];
        for (i, d) in diffs.iter().enumerate() {
            let k = i + 1;
            if d.depth != k || d.n_points != n_points {
                return Err(Error::Depth {
                    expected: k,
                    got: d.depth,
                });
            }
            let rep = len / d.values.len();
            for (t, v) in terminal.iter_mut().enumerate() {
                *v += d.values[t / rep];
            }
        }
        MartingaleTable::from_terminal(n_steps, n_points, terminal)
    }

    pub fn constant(n_steps: usize, n_points: usize, c: Complex64) -> Result<Self> {
        let len = grid_len(n_points, n_steps)?;
        MartingaleTable::from_terminal(n_steps, n_points, vec![c; len])
    }

    pub fn with_generator(mut self, params: GeneratorParams) -> Self {
        self.generator = Some(params);
        self
    }

    pub fn generator(&self) -> Option<&GeneratorParams> {
        self.generator.as_ref()
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn len(&self) -> usize {
        self.levels[self.n_steps].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn terminal(&self) -> &[Complex64] {
        &self.levels[self.n_steps]
    }

    pub fn f0(&self) -> Complex64 {
        self.levels[0][0]
    }

    fn check_step(&self, k: usize, min: usize) -> Result<()> {
        if k < min || k > self.n_steps {
            return Err(Error::OutOfRange {
                index: k,
                max: self.n_steps,
            });
        }
        Ok(())
    }

    /// Raw values of `F_k` on the `N^k` grid.
    pub fn level_values(&self, k: usize) -> Result<&[Complex64]> {
        self.check_step(k, 0)?;
        Ok(&self.levels[k])
    }

    pub fn level(&self, k: usize) -> Result<LevelFn> {
        Ok(LevelFn {
            depth: k,
            n_points: self.n_points,
            values: self.level_values(k)?.to_vec(),
        })
    }

    /// `ΔF_k = F_k - F_{k-1}` on the depth-`k` grid.
    pub fn difference(&self, k: usize) -> Result<LevelFn> {
        self.check_step(k, 1)?;
        let n = self.n_points;
        let prev = &self.levels[k - 1];
        let values = self.levels[k]
            .iter()
            .enumerate()
            .map(|(i, v)| v - prev[i / n])
            .collect();
        Ok(LevelFn {
            depth: k,
            n_points: n,
            values,
        })
    }

    pub fn differences(&self) -> Vec<LevelFn> {
        (1..=self.n_steps)
            .map(|k| self.difference(k).expect("k in range"))
            .collect()
    }

    /// Replication factor from depth `k` to the terminal grid.
    pub(crate) fn rep(&self, k: usize) -> usize {
        self.len() / self.levels[k].len()
    }

    /// `|ΔF_k|²` lifted to the terminal grid, summed over `k`, per point.
    fn sum_sq_differences(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.len()];
        for k in 1..=self.n_steps {
            let d = self.difference(k).expect("k in range");
            let rep = self.rep(k);
            for (t, a) in acc.iter_mut().enumerate() {
                *a += d.values[t / rep].norm_sqr();
            }
        }
        acc
    }

    /// `S(F) = (Σ_k |ΔF_k|²)^{1/2}` on the terminal grid.
    pub fn square_function_values(&self) -> Vec<f64> {
        self.sum_sq_differences()
            .into_iter()
            .map(f64::sqrt)
            .collect()
    }

    /// `E_{k-1}|ΔF_k|²` on the depth-`k-1` grid.
    pub fn cond_variance(&self, k: usize) -> Result<Vec<f64>> {
        let d = self.difference(k)?;
        let sq: Vec<f64> = d.values.iter().map(|z| z.norm_sqr()).collect();
        Ok(average_blocks_real(&sq, self.n_points))
    }

    /// `s(F) = (Σ_k E_{k-1}|ΔF_k|²)^{1/2}` on the terminal grid.
    pub fn cond_square_function_values(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.len()];
        for k in 1..=self.n_steps {
            let cv = self.cond_variance(k).expect("k in range");
            let rep = self.rep(k - 1);
            for (t, a) in acc.iter_mut().enumerate() {
                *a += cv[t / rep];
            }
        }
        acc.into_iter().map(f64::sqrt).collect()
    }

    /// `max_{0<=k<=n} |F_k|` on the terminal grid.
    pub fn maximal_function_values(&self) -> Vec<f64> {
        let mut acc = vec![0.0f64; self.len()];
        for k in 0..=self.n_steps {
            let rep = self.rep(k);
            let lvl = &self.levels[k];
            for (t, a) in acc.iter_mut().enumerate() {
                *a = a.max(lvl[t / rep].norm());
            }
        }
        acc
    }

    pub fn square_function(&self) -> LevelFn {
        self.real_level(&self.square_function_values())
    }

    pub fn cond_square_function(&self) -> LevelFn {
        self.real_level(&self.cond_square_function_values())
    }

    pub fn maximal_function(&self) -> LevelFn {
        self.real_level(&self.maximal_function_values())
    }

    fn real_level(&self, v: &[f64]) -> LevelFn {
        LevelFn::from_real(self.n_steps, self.n_points, v).expect("terminal length")
    }

    /// `E|F_n|`.
    pub fn mean_abs_terminal(&self) -> f64 {
        numeric::mean_abs(self.terminal())
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::json!({
            "format": FORMAT_TAG,
            "version": 1,
            "n_steps": self.n_steps,
            "n_points": self.n_points,
            "seed": self.generator.as_ref().map(|g| g.seed),
            "generator": self.generator,
        });
        writeln!(w, "{}", serde_json::to_string(&header)?)?;
        writeln!(w, "index,re,im")?;
        for (i, z) in self.terminal().iter().enumerate() {
            writeln!(w, "{},{},{}", i, z.re, z.im)?;
        }
        Ok(())
    }

    /// Reads the format produced by [`MartingaleTable::write`]: a one-line JSON
    /// header followed by an `index,re,im` CSV payload of terminal values.
    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| Error::Parse("empty martingale file".into()))??;
        let header: serde_json::Value = serde_json::from_str(&header_line)?;
        if header.get("format").and_then(|v| v.as_str()) != Some(FORMAT_TAG) {
            return Err(Error::Parse(format!(
                "missing `\"format\": \"{FORMAT_TAG}\"` header"
            )));
        }
        let get = |key: &str| -> Result<usize> {
            header
                .get(key)
                .and_then(|v| v.as_u64())
                .map(|v| v as usize)
                .ok_or_else(|| Error::Parse(format!("header field `{key}` missing")))
        };
        let n_steps = get("n_steps")?;
        let n_points = get("n_points")?;
        let expected = grid_len(n_points, n_steps)?;
        let generator: Option<GeneratorParams> = match header.get("generator") {
            Some(v) if !v.is_null() => Some(serde_json::from_value(v.clone())?),
            _ => None,
        };
        let mut terminal = Vec::with_capacity(expected);
        for (i, line) in lines.enumerate() {
            let line = line?;
            let line = line.trim();
            let lineno = i + 1;
            if line.is_empty() || line.starts_with("index") {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(Error::Parse(format!(
                    "payload line {lineno}: expected index,re,im"
                )));
            }
            let re = torus::parse_f64(cols[1], lineno)?;
            let im = torus::parse_f64(cols[2], lineno)?;
            terminal.push(Complex64::new(re, im));
        }
        let mut t = MartingaleTable::from_terminal(n_steps, n_points, terminal)?;
        t.generator = generator;
        Ok(t)
    }
}

/// Worst slice found by [`is_hardy_martingale`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SliceViolation {
    pub step: usize,
    pub prefix: usize,
    pub violation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardyMartingaleCheck {
    pub is_hardy: bool,
    pub worst: Option<SliceViolation>,
}

/// Checks that every last-coordinate slice of every difference is analytic
/// with zero mean.
pub fn is_hardy_martingale(f: &MartingaleTable, tol: f64) -> HardyMartingaleCheck {
    let mut worst: Option<SliceViolation> = None;
    for k in 1..=f.n_steps {
        let d = f.difference(k).expect("k in range");
        let n_prefix = d.values.len() / f.n_points;
        for p in 0..n_prefix {
            let g = GridFn::new(d.slice(p).to_vec()).expect("grid size");
            let chk = torus::is_hardy(&g, tol);
            if worst.is_none_or(|w| chk.max_violation > w.violation) {
                worst = Some(SliceViolation {
                    step: k,
                    prefix: p,
                    violation: chk.max_violation,
                });
            }
        }
    }
    HardyMartingaleCheck {
        is_hardy: worst.is_none_or(|w| w.violation <= tol),
        worst,
    }
}

/// Tolerance for Hardy membership scaled to the table's magnitude.
pub fn hardy_tol(f: &MartingaleTable) -> f64 {
    let scale = f.terminal().iter().map(|z| z.norm()).fold(1.0, f64::max);
    torus::HARDY_TOL * scale
}

/// Returns [`Error::NotHardy`] unless `f` is a Hardy martingale.
pub fn require_hardy(f: &MartingaleTable) -> Result<()> {
    let chk = is_hardy_martingale(f, hardy_tol(f));
    match (chk.is_hardy, chk.worst) {
        (false, Some(w)) => Err(Error::NotHardy {
            step: w.step,
            prefix: w.prefix,
            violation: w.violation,
        }),
        _ => Ok(()),
    }
}

/// Seeded random martingale; see [`Family`].
pub fn generate(p: &GeneratorParams) -> Result<MartingaleTable> {
    let n = p.n_points;
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::GridSize(n));
    }
    if p.family == Family::Hardy && (p.degree < 1 || p.degree >= n / 2) {
        return Err(Error::Domain(format!(
            "degree {} outside 1..{} for grid {}",
            p.degree,
            n / 2,
            n
        )));
    }
    if !(p.scale.is_finite() && p.scale >= 0.0) {
        return Err(Error::Domain(format!(
            "scale {} must be finite and >= 0",
            p.scale
        )));
    }
    grid_len(n, p.n_steps)?;
    let diffs = (1..=p.n_steps)
        .map(|k| difference_table(p, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(MartingaleTable::from_differences(n, p.f0, &diffs)?.with_generator(p.clone()))
}

fn difference_table(p: &GeneratorParams, k: usize) -> Result<LevelFn> {
    let n = p.n_points;
    let n_prefix = grid_len(n, k - 1)?;
    let amp = p.scale / k as f64;
    let tag = p.family.tag();
    let mut values = Vec::with_capacity(n_prefix * n);
    match p.family {
        Family::Hardy => {
            let modes: Vec<Vec<Complex64>> = (1..=p.degree)
                .map(|j| (0..n).map(|y| torus::grid_point((j * y) % n, n)).collect())
                .collect();
            for pre in 0..n_prefix {
                let a: Vec<Complex64> = (1..=p.degree)
                    .map(|j| {
                        rng::complex_normal(p.seed, &[tag, k as u64, j as u64, pre as u64]) * amp
                    })
                    .collect();
                for y in 0..n {
                    values.push(a.iter().zip(&modes).map(|(aj, m)| aj * m[y]).sum());
                }
            }
        }
        Family::General => {
            for pre in 0..n_prefix {
                let raw: Vec<Complex64> = (0..n)
                    .map(|y| {
                        rng::complex_normal(p.seed, &[tag, k as u64, pre as u64, y as u64]) * amp
                    })
                    .collect();
                let m = numeric::mean_c(&raw);
                values.extend(raw.into_iter().map(|v| v - m));
            }
        }
        Family::Sign => {
            for pre in 0..n_prefix {
                let a = rng::normal(p.seed, &[tag, k as u64, pre as u64]) * amp;
                values.extend((0..n).map(|y| Complex64::new(if y < n / 2 { a } else { -a }, 0.0)));
            }
        }
        Family::Spike => {
            for pre in 0..n_prefix {
                let at = rng::int_in(p.seed, &[tag, k as u64, pre as u64, 0], 0, n - 1);
                let h = rng::complex_normal(p.seed, &[tag, k as u64, pre as u64, 1]) * amp;
                let off = -h / n as f64;
                values.extend((0..n).map(|y| if y == at { h + off } else { off }));
            }
        }
    }
    LevelFn::new(k, n, values)
}

/// Hardy martingale with `F_0 = 1`; step-`k` coefficients are `scale/k` times
/// circular Gaussians.
pub fn random_hardy(
    n_steps: usize,
    n_points: usize,
    degree: usize,
    scale: f64,
    seed: u64,
) -> Result<MartingaleTable> {
    generate(&GeneratorParams::hardy(
        n_steps, n_points, degree, scale, seed,
    ))
}

/// Martingale with differences `m_{k-1}·ΔF_k`; `multipliers[k-1]` has depth `k-1`.
pub fn martingale_transform(
    f: &MartingaleTable,
    multipliers: &[LevelFn],
) -> Result<MartingaleTable> {
    if multipliers.len() != f.n_steps {
        return Err(Error::Length {
            expected: f.n_steps,
            got: multipliers.len(),
        });
    }
    let mut diffs = Vec::with_capacity(f.n_steps);
    for (i, m) in multipliers.iter().enumerate() {
        let k = i + 1;
        if m.depth != k - 1 || m.n_points != f.n_points {
            return Err(Error::Depth {
                expected: k - 1,
                got: m.depth,
            });
        }
        let mut d = f.difference(k)?;
        let n = f.n_points;
        for (t, v) in d.values.iter_mut().enumerate() {
            *v *= m.values[t / n];
        }
        diffs.push(d);
    }
    MartingaleTable::from_differences(f.n_points, f.f0(), &diffs)
}

/// Zero-valued difference at depth `k`.
#[cfg(test)]
pub(crate) fn zero_level(depth: usize, n_points: usize) -> Result<LevelFn> {
    LevelFn::new(depth, n_points, vec![zero(); grid_len(n_points, depth)?])
}
