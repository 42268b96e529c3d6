//! Fixed-order summation helpers.
//!
//! Every reduction in the crate goes through these so that results do not
//! depend on how work was split across threads.

use num_complex::Complex64;

const LEAF: usize = 64;

/// Pairwise (cascade) sum with a fixed split order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn pairwise_sum_c(xs: &[Complex64]) -> Complex64 {
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum_c(&xs[..mid]) + pairwise_sum_c(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    pairwise_sum(xs) / xs.len() as f64
}

pub fn mean_c(xs: &[Complex64]) -> Complex64 {
    if xs.is_empty() {
        return Complex64::new(0.0, 0.0);
    }
    pairwise_sum_c(xs) / xs.len() as f64
}

pub fn mean_abs(xs: &[Complex64]) -> f64 {
    let abs: Vec<f64> = xs.iter().map(|z| z.norm()).collect();
    mean(&abs)
}

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let m = mean(xs);
    if n == 1 {
        return (m, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    (m, (var / n as f64).sqrt())
}

/// Jackknife standard error from leave-one-out replicates.
pub fn jackknife_se(replicates: &[f64]) -> f64 {
    let k = replicates.len();
    if k < 2 {
        return 0.0;
    }
    let m = mean(replicates);
    let dev: Vec<f64> = replicates.iter().map(|x| (x - m) * (x - m)).collect();
    ((k - 1) as f64 / k as f64 * pairwise_sum(&dev)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_integers() {
        let xs: Vec<f64> = (0..10_000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 49_995_000.0);
    }

    #[test]
    fn se_of_constant_is_zero() {
        let (m, se) = mean_se(&[2.0; 10]);
        assert_eq!(m, 2.0);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn jackknife_of_mean_matches_classical_se() {
        // For the sample mean, leave-one-out jackknife reproduces s/sqrt(n).
        let xs = [1.0, 4.0, 2.0, 8.0, 5.0, 7.0];
        let n = xs.len() as f64;
        let total: f64 = xs.iter().sum();
        let reps: Vec<f64> = xs.iter().map(|x| (total - x) / (n - 1.0)).collect();
        let (_, se) = mean_se(&xs);
        assert!((jackknife_se(&reps) - se).abs() < 1e-12);
    }
}
