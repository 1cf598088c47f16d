//! Gaussian quadrature rules (Golub-Welsch) used by the integral oracles.

use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// Nodes and weights of a Gaussian rule.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

fn golub_welsch(diag: &[f64], offdiag: &[f64], mu0: f64) -> GaussRule {
    let n = diag.len();
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        jac[(i, i)] = diag[i];
    }
    for i in 0..n - 1 {
        jac[(i, i + 1)] = offdiag[i];
        jac[(i + 1, i)] = offdiag[i];
    }
    let eig = jac.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|j| {
            let v0 = eig.eigenvectors[(0, j)];
            (eig.eigenvalues[j], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    GaussRule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

/// Gauss-Hermite rule: integrates f against e^{-x^2} over the real line.
pub fn gauss_hermite(n: usize) -> Result<GaussRule> {
    if n == 0 {
        return Err(Error::Input("quadrature order must be positive".into()));
    }
    let diag = vec![0.0; n];
    let offdiag: Vec<f64> = (1..n).map(|k| (k as f64 / 2.0).sqrt()).collect();
    Ok(golub_welsch(&diag, &offdiag, std::f64::consts::PI.sqrt()))
}

/// Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> Result<GaussRule> {
    if n == 0 {
        return Err(Error::Input("quadrature order must be positive".into()));
    }
    let diag = vec![0.0; n];
    let offdiag: Vec<f64> = (1..n)
        .map(|k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        })
        .collect();
    Ok(golub_welsch(&diag, &offdiag, 2.0))
}

impl GaussRule {
    /// Integrate `f` over [a, b] after affine rescaling (Legendre rules only).
    pub fn integrate_on<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}

/// Sum of w_i * exp(log_f_i) evaluated stably: returns log of the sum.
/// Entries with non-finite log values are skipped.
pub fn log_weighted_sum_exp(log_f: &[f64], weights: &[f64]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for (&lf, &w) in log_f.iter().zip(weights) {
        if lf.is_finite() && w > 0.0 {
            let v = lf + w.ln();
            if v > max {
                max = v;
            }
        }
    }
    if !max.is_finite() {
        return f64::NEG_INFINITY;
    }
    let mut acc = 0.0;
    for (&lf, &w) in log_f.iter().zip(weights) {
        if lf.is_finite() && w > 0.0 {
            acc += (lf + w.ln() - max).exp();
        }
    }
    max + acc.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn hermite_moments() {
        let rule = gauss_hermite(24).unwrap();
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let m0: f64 = rule.weights.iter().sum();
        assert_relative_eq!(m0, sqrt_pi, max_relative = 1e-13);
        let m4: f64 = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&x, &w)| w * x.powi(4))
            .sum();
        assert_relative_eq!(m4, 0.75 * sqrt_pi, max_relative = 1e-12);
        // degree-2n-1 exactness: x^30 moment = (29)!! / 2^15 * sqrt(pi)
        let mut dfact = 1.0;
        let mut i = 29.0;
        while i > 1.0 {
            dfact *= i;
            i -= 2.0;
        }
        let m30: f64 = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&x, &w)| w * x.powi(30))
            .sum();
        assert_relative_eq!(m30, dfact / 2f64.powi(15) * sqrt_pi, max_relative = 1e-10);
    }

    #[test]
    fn legendre_polynomial_exactness() {
        let rule = gauss_legendre(16).unwrap();
        let int = rule.integrate_on(-1.0, 1.0, |x| x.powi(4));
        assert_relative_eq!(int, 0.4, max_relative = 1e-13);
        let int = rule.integrate_on(0.0, 2.0, |x| x.powi(3) - x);
        assert_relative_eq!(int, 2.0, max_relative = 1e-13);
    }

    #[test]
    fn gaussian_tail_integral() {
        // oracle for the log-space accumulator
        let rule = gauss_legendre(64).unwrap();
        let logs: Vec<f64> = rule.nodes.iter().map(|&x| -x * x).collect();
        let sum = log_weighted_sum_exp(&logs, &rule.weights);
        let direct: f64 = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&x, &w)| w * (-x * x).exp())
            .sum();
        assert_relative_eq!(sum.exp(), direct, max_relative = 1e-14);
    }
}
