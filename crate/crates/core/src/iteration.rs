//! The telescoping iteration principle as numerical certificates.
//!
//! Given functions `u_k` (complex), `v_k, w_k >= 0` on a common uniform
//! probability grid, the partial-sum form works with `Z_k = Z_0 + Σ_{m<=k} u_m`
//! and the quadratic form with `M_k = (Σ_{m<=k} |u_m|²)^{1/2}`. When every
//! per-step hypothesis holds, the summed square function of `v` plus the
//! absolute sum of `w` is bounded by a factor-2 right-hand side.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric;
use crate::Mode;

/// `s²A + (A²+B²)^{1/2} − A − Bs`, nonnegative for `0 <= s <= 1`, `A, B >= 0`.
pub fn scalar_lemma_slack(s: f64, a: f64, b: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&s) || !(a >= 0.0) || !(b >= 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::Domain(format!(
            "need 0 <= s <= 1, A >= 0, B >= 0; got s={s}, A={a}, B={b}"
        )));
    }
    let r = a.hypot(b);
    // (A²+B²)^{1/2} − A without cancellation.
    let excess = if r + a > 0.0 { b * b / (r + a) } else { 0.0 };
    Ok(s * s * a - b * s + excess)
}

/// The `(u, v, w)` triple, plus an optional starting value `Z_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationInput {
    z0: Vec<Complex64>,
    u: Vec<Vec<Complex64>>,
    v: Vec<Vec<f64>>,
    w: Vec<Vec<f64>>,
}

impl IterationInput {
    pub fn new(u: Vec<Vec<Complex64>>, v: Vec<Vec<f64>>, w: Vec<Vec<f64>>) -> Result<Self> {
        let n = u.len();
        if n == 0 {
            return Err(Error::Domain(
                "iteration input needs at least one step".into(),
            ));
        }
        for (name, len) in [("v", v.len()), ("w", w.len())] {
            if len != n {
                return Err(Error::Domain(format!("{name} has {len} steps, u has {n}")));
            }
        }
        let m = u[0].len();
        for k in 0..n {
            for len in [u[k].len(), v[k].len(), w[k].len()] {
                if len != m {
                    return Err(Error::Length {
                        expected: m,
                        got: len,
                    });
                }
            }
            if let Some(x) = v[k]
                .iter()
                .chain(&w[k])
                .find(|x| !(**x >= 0.0) || !x.is_finite())
            {
                return Err(Error::Domain(format!(
                    "v and w must be finite and >= 0, found {x}"
                )));
            }
        }
        Ok(IterationInput {
            z0: vec![Complex64::new(0.0, 0.0); m],
            u,
            v,
            w,
        })
    }

    /// Sets `Z_0`; the maximal function then includes `|Z_0|`.
    pub fn with_initial(mut self, z0: Vec<Complex64>) -> Result<Self> {
        if z0.len() != self.points() {
            return Err(Error::Length {
                expected: self.points(),
                got: z0.len(),
            });
        }
        self.z0 = z0;
        Ok(self)
    }

    pub fn steps(&self) -> usize {
        self.u.len()
    }

    pub fn points(&self) -> usize {
        self.z0.len()
    }

    pub fn u(&self) -> &[Vec<Complex64>] {
        &self.u
    }

    pub fn v(&self) -> &[Vec<f64>] {
        &self.v
    }

    pub fn w(&self) -> &[Vec<f64>] {
        &self.w
    }

    /// `|Z_k|` for `k = 0..=n`.
    pub fn partial_sum_moduli(&self) -> Vec<Vec<f64>> {
        let mut z = self.z0.clone();
        let mut out = vec![z.iter().map(|x| x.norm()).collect()];
        for uk in &self.u {
            for (zi, ui) in z.iter_mut().zip(uk) {
                *zi += ui;
            }
            out.push(z.iter().map(|x| x.norm()).collect());
        }
        out
    }

    /// `M_k = (Σ_{m<=k} |u_m|²)^{1/2}` for `k = 0..=n`.
    pub fn quadratic_sums(&self) -> Vec<Vec<f64>> {
        let mut acc = vec![0.0; self.points()];
        let mut out = vec![acc.clone()];
        for uk in &self.u {
            for (a, ui) in acc.iter_mut().zip(uk) {
                *a += ui.norm_sqr();
            }
            out.push(acc.iter().map(|x| x.sqrt()).collect());
        }
        out
    }

    /// `E(Σ_k v_k²)^{1/2} + Σ_k E w_k`.
    pub fn lhs(&self) -> f64 {
        let sq: Vec<f64> = (0..self.points())
            .map(|i| self.v.iter().map(|vk| vk[i] * vk[i]).sum::<f64>().sqrt())
            .collect();
        numeric::mean(&sq) + self.w.iter().map(|wk| numeric::mean(wk)).sum::<f64>()
    }
}

/// Slacks `E X_k − E(X_{k−1}² + v_k²)^{1/2} − E w_k` for a nonnegative sequence `X`.
fn hypothesis_slacks(x: &[Vec<f64>], input: &IterationInput) -> Vec<f64> {
    (1..x.len())
        .map(|k| {
            let prev = &x[k - 1];
            let vk = &input.v[k - 1];
            let inner: Vec<f64> = prev.iter().zip(vk).map(|(a, b)| a.hypot(*b)).collect();
            numeric::mean(&x[k]) - numeric::mean(&inner) - numeric::mean(&input.w[k - 1])
        })
        .collect()
}

/// `slack_k = E|Z_k| − E(|Z_{k−1}|² + v_k²)^{1/2} − E w_k`.
pub fn verify_hypothesis_partial_sum(input: &IterationInput) -> Vec<f64> {
    hypothesis_slacks(&input.partial_sum_moduli(), input)
}

/// `slack_k = E M_k − E(M_{k−1}² + v_k²)^{1/2} − E w_k`.
pub fn verify_hypothesis_quadratic(input: &IterationInput) -> Vec<f64> {
    hypothesis_slacks(&input.quadratic_sums(), input)
}

/// Tolerances applied to a certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct Tolerance {
    pub mode: Mode,
    /// Per-step hypothesis tolerance; the last entry repeats for later steps.
    pub hypothesis: Vec<f64>,
    pub conclusion: f64,
}

impl Tolerance {
    pub const EXACT_HYPOTHESIS: f64 = 1e-10;
    pub const EXACT_CONCLUSION: f64 = 1e-9;

    pub fn exact() -> Self {
        Tolerance {
            mode: Mode::Exact,
            hypothesis: vec![Self::EXACT_HYPOTHESIS],
            conclusion: Self::EXACT_CONCLUSION,
        }
    }

    /// Three standard errors per step and for the conclusion.
    pub fn monte_carlo(step_se: &[f64], conclusion_se: f64) -> Self {
        Tolerance {
            mode: Mode::MonteCarlo,
            hypothesis: step_se
                .iter()
                .map(|se| 3.0 * se + Self::EXACT_HYPOTHESIS)
                .collect(),
            conclusion: 3.0 * conclusion_se + Self::EXACT_CONCLUSION,
        }
    }

    pub fn step(&self, k: usize) -> f64 {
        self.hypothesis
            .get(k)
            .or(self.hypothesis.last())
            .copied()
            .unwrap_or(Self::EXACT_HYPOTHESIS)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Form {
    PartialSum,
    Quadratic,
}

/// Numerical witness of one application of the iteration principle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationCertificate {
    pub form: Form,
    pub mode: Mode,
    /// Hypothesis slack per step.
    pub steps: Vec<f64>,
    /// `ε` of the partial-sum form; `None` for the quadratic form.
    pub epsilon: Option<f64>,
    pub lhs: f64,
    pub rhs: f64,
    /// All hypothesis slacks are above `−tolerance`.
    pub applicable: bool,
    pub pass: bool,
    /// Dual multipliers `s_k` on the probability grid.
    #[serde(skip)]
    pub multipliers: Vec<Vec<f64>>,
}

impl IterationCertificate {
    /// `(E Σ v_k s_k, ε·E(Σ v_k²)^{1/2})`; the first never exceeds the second.
    pub fn duality(&self, input: &IterationInput) -> (f64, f64) {
        let eps = self.epsilon.unwrap_or(1.0);
        let m = input.points();
        let pair: Vec<f64> = (0..m)
            .map(|i| {
                input
                    .v
                    .iter()
                    .zip(&self.multipliers)
                    .map(|(vk, sk)| vk[i] * sk[i])
                    .sum::<f64>()
            })
            .collect();
        let norm: Vec<f64> = (0..m)
            .map(|i| input.v.iter().map(|vk| vk[i] * vk[i]).sum::<f64>().sqrt())
            .collect();
        (numeric::mean(&pair), eps * numeric::mean(&norm))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("certificate serializes")
    }
}

/// `s_k = ε v_k / (Σ_m v_m²)^{1/2}`, zero where the denominator vanishes.
fn dual_multipliers(input: &IterationInput, eps: f64) -> Vec<Vec<f64>> {
    let m = input.points();
    let norm: Vec<f64> = (0..m)
        .map(|i| input.v.iter().map(|vk| vk[i] * vk[i]).sum::<f64>().sqrt())
        .collect();
    input
        .v
        .iter()
        .map(|vk| {
            vk.iter()
                .zip(&norm)
                .map(|(v, n)| if *n > 0.0 { eps * v / n } else { 0.0 })
                .collect()
        })
        .collect()
}

fn applicable(steps: &[f64], tol: &Tolerance) -> bool {
    steps.iter().enumerate().all(|(k, s)| *s >= -tol.step(k))
}

/// Partial-sum conclusion:
/// `E(Σ v_k²)^{1/2} + Σ E w_k <= 2 (E|Z_n|)^{1/2} (E max_k |Z_k|)^{1/2}`.
pub fn conclude_partial_sum(input: &IterationInput, tol: &Tolerance) -> IterationCertificate {
    let moduli = input.partial_sum_moduli();
    let steps = hypothesis_slacks(&moduli, input);
    let e_last = numeric::mean(moduli.last().expect("n >= 1"));
    let max: Vec<f64> = (0..input.points())
        .map(|i| moduli.iter().map(|z| z[i]).fold(0.0, f64::max))
        .collect();
    let e_max = numeric::mean(&max);
    let eps = if e_max > 0.0 {
        (e_last / e_max).sqrt().clamp(1e-12, 1.0)
    } else {
        1.0
    };
    let lhs = input.lhs();
    let rhs = 2.0 * e_last.sqrt() * e_max.sqrt();
    let applicable = applicable(&steps, tol);
    IterationCertificate {
        form: Form::PartialSum,
        mode: tol.mode,
        pass: applicable && lhs <= rhs + tol.conclusion,
        applicable,
        multipliers: dual_multipliers(input, eps),
        steps,
        epsilon: Some(eps),
        lhs,
        rhs,
    }
}

/// Quadratic conclusion: `E(Σ v_k²)^{1/2} + Σ E w_k <= 2 E M_n`.
pub fn conclude_quadratic(input: &IterationInput, tol: &Tolerance) -> IterationCertificate {
    let sums = input.quadratic_sums();
    let steps = hypothesis_slacks(&sums, input);
    let lhs = input.lhs();
    let rhs = 2.0 * numeric::mean(sums.last().expect("n >= 1"));
    let applicable = applicable(&steps, tol);
    IterationCertificate {
        form: Form::Quadratic,
        mode: tol.mode,
        pass: applicable && lhs <= rhs + tol.conclusion,
        applicable,
        multipliers: dual_multipliers(input, 1.0),
        steps,
        epsilon: None,
        lhs,
        rhs,
    }
}

/// `(Σ_k (E|Z_k| − E|Z_{k−1}|), E|Z_n| − E|Z_0|)`.
pub fn telescoping(input: &IterationInput) -> (f64, f64) {
    let means: Vec<f64> = input
        .partial_sum_moduli()
        .iter()
        .map(|z| numeric::mean(z))
        .collect();
    let sum = means.windows(2).map(|w| w[1] - w[0]).sum();
    (sum, means[means.len() - 1] - means[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn scalar_lemma_examples() {
        assert!((scalar_lemma_slack(0.0, 3.0, 4.0).unwrap() - 2.0).abs() < 1e-15);
        assert!(scalar_lemma_slack(1.0, 0.0, 7.0).unwrap().abs() < 1e-15);
        // Oracle: direct evaluation of the defining expression.
        let direct = 0.25 + 2f64.sqrt() - 1.0 - 0.5;
        assert!((scalar_lemma_slack(0.5, 1.0, 1.0).unwrap() - direct).abs() < 1e-15);
        assert!((direct - 0.16421).abs() < 1e-5);
    }

    #[test]
    fn scalar_lemma_domain() {
        assert!(scalar_lemma_slack(1.5, 1.0, 1.0).is_err());
        assert!(scalar_lemma_slack(-0.1, 1.0, 1.0).is_err());
        assert!(scalar_lemma_slack(0.5, -1.0, 1.0).is_err());
        assert!(scalar_lemma_slack(0.5, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn zero_v_w_reports_increments() {
        let u = vec![vec![c(1.0), c(-1.0)], vec![c(2.0), c(0.5)]];
        let z = vec![vec![0.0; 2]; 2];
        let input = IterationInput::new(u, z.clone(), z).unwrap();
        let s = verify_hypothesis_partial_sum(&input);
        assert!((s[0] - 1.0).abs() < 1e-15);
        // |Z_2| = (3, 0.5), |Z_1| = (1, 1)
        assert!((s[1] - (1.75 - 1.0)).abs() < 1e-15);
        let cert = conclude_partial_sum(&input, &Tolerance::exact());
        assert_eq!(cert.lhs, 0.0);
        assert!(cert.pass);
    }

    #[test]
    fn one_step_equality() {
        let u = vec![vec![c(1.0), c(-3.0), Complex64::new(0.0, 2.0)]];
        let v = vec![u[0].iter().map(|z| z.norm()).collect()];
        let input = IterationInput::new(u, v, vec![vec![0.0; 3]]).unwrap();
        assert!(verify_hypothesis_partial_sum(&input)[0].abs() < 1e-15);
    }

    #[test]
    fn constant_modulus_gives_epsilon_one() {
        let u = vec![vec![c(0.0); 4], vec![c(0.0); 4]];
        let z = vec![vec![0.0; 4]; 2];
        let input = IterationInput::new(u, z.clone(), z)
            .unwrap()
            .with_initial(vec![c(2.0), c(-2.0), Complex64::new(0.0, 2.0), c(2.0)])
            .unwrap();
        let cert = conclude_partial_sum(&input, &Tolerance::exact());
        assert_eq!(cert.epsilon, Some(1.0));
        assert!((cert.rhs - 4.0).abs() < 1e-15);
        assert!(cert.pass);
    }

    #[test]
    fn quadratic_trivial_case() {
        let u = vec![vec![c(1.0), c(2.0)], vec![c(0.5), c(0.0)]];
        let z = vec![vec![0.0; 2]; 2];
        let input = IterationInput::new(u, z.clone(), z).unwrap();
        // v = 0 makes the hypothesis an equality on M.
        assert!(verify_hypothesis_quadratic(&input)
            .iter()
            .all(|s| *s >= 0.0));
        let cert = conclude_quadratic(&input, &Tolerance::exact());
        assert_eq!(cert.lhs, 0.0);
        assert!(cert.pass);
        assert_eq!(cert.epsilon, None);
    }

    #[test]
    fn quadratic_with_v_equal_u() {
        // v_k = u_k: the step-k slack is E M_k − E(M²_{k−1} + u_k²)^{1/2} = 0.
        let u: Vec<Vec<Complex64>> = (0..3)
            .map(|k| (0..16).map(|i| c(rng::normal(1, &[k, i]))).collect())
            .collect();
        let v: Vec<Vec<f64>> = u
            .iter()
            .map(|uk| uk.iter().map(|z| z.norm()).collect())
            .collect();
        let input = IterationInput::new(u, v, vec![vec![0.0; 16]; 3]).unwrap();
        for s in verify_hypothesis_quadratic(&input) {
            assert!(s.abs() < 1e-13);
        }
        let cert = conclude_quadratic(&input, &Tolerance::exact());
        assert!(cert.pass);
        assert!((cert.lhs * 2.0 - cert.rhs).abs() < 1e-12);
    }

    #[test]
    fn negative_slack_marks_inapplicable() {
        let u = vec![vec![c(0.0); 2]];
        let input = IterationInput::new(u, vec![vec![1.0, 1.0]], vec![vec![0.0; 2]]).unwrap();
        let cert = conclude_partial_sum(&input, &Tolerance::exact());
        assert!(!cert.applicable);
        assert!(!cert.pass);
        assert!(cert.lhs > 0.0);
    }

    #[test]
    fn rejects_negative_v() {
        let u = vec![vec![c(0.0); 2]];
        assert!(IterationInput::new(u.clone(), vec![vec![-1.0, 0.0]], vec![vec![0.0; 2]]).is_err());
        assert!(IterationInput::new(u, vec![vec![0.0]], vec![vec![0.0; 2]]).is_err());
    }

    #[test]
    fn certificate_json_shape() {
        let u = vec![vec![c(1.0), c(-1.0)]];
        let input = IterationInput::new(u, vec![vec![0.5, 0.5]], vec![vec![0.0; 2]]).unwrap();
        let j = conclude_partial_sum(&input, &Tolerance::exact()).to_json();
        for key in ["steps", "epsilon", "lhs", "rhs", "pass", "mode"] {
            assert!(j.get(key).is_some(), "{key}");
        }
        assert_eq!(j["mode"], "exact");
    }

    fn random_input(seed: u64, n: usize, m: usize) -> IterationInput {
        let u = (0..n)
            .map(|k| {
                (0..m)
                    .map(|i| rng::complex_normal(seed, &[0, k as u64, i as u64]))
                    .collect()
            })
            .collect();
        let v = (0..n)
            .map(|k| {
                (0..m)
                    .map(|i| rng::uniform(seed, &[1, k as u64, i as u64]))
                    .collect()
            })
            .collect();
        let w = (0..n)
            .map(|k| {
                (0..m)
                    .map(|i| 0.1 * rng::uniform(seed, &[2, k as u64, i as u64]))
                    .collect()
            })
            .collect();
        IterationInput::new(u, v, w)
            .unwrap()
            .with_initial(
                (0..m)
                    .map(|i| rng::complex_normal(seed, &[3, i as u64]))
                    .collect(),
            )
            .unwrap()
    }

    proptest! {
        #[test]
        fn scalar_lemma_nonnegative(s in 0.0f64..=1.0, a in 0.0f64..1e3, b in 0.0f64..1e3) {
            prop_assert!(scalar_lemma_slack(s, a, b).unwrap() >= -1e-12);
        }

        #[test]
        fn telescoping_identity(seed in any::<u64>()) {
            let input = random_input(seed, 4, 32);
            let (sum, diff) = telescoping(&input);
            prop_assert!((sum - diff).abs() < 1e-12);
        }

        #[test]
        fn duality_is_tight(seed in any::<u64>()) {
            let input = random_input(seed, 3, 16);
            let cert = conclude_partial_sum(&input, &Tolerance::exact());
            let (pair, bound) = cert.duality(&input);
            prop_assert!(pair <= bound + 1e-12);
            // v > 0 almost surely, so the multipliers attain the bound.
            prop_assert!((pair - bound).abs() <= 1e-10 * bound.max(1.0));
            let sum_sq: Vec<f64> = (0..16)
                .map(|i| cert.multipliers.iter().map(|s| s[i] * s[i]).sum())
                .collect();
            let eps = cert.epsilon.unwrap();
            prop_assert!(sum_sq.iter().all(|x| *x <= eps * eps * (1.0 + 1e-12)));
        }
    }
}
