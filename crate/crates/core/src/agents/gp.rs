//! Gaussian-process regression with a squared-exponential kernel.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

pub struct GaussianProcess {
    x: Vec<Vec<f64>>,
    alpha: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    length_scale: f64,
    y_mean: f64,
    y_std: f64,
    log_likelihood: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

impl GaussianProcess {
    /// Fit on standardized targets with unit signal variance. The noise is
    /// raised tenfold until the kernel matrix factors.
    pub fn fit(x: Vec<Vec<f64>>, y: &[f64], length_scale: f64, noise: f64) -> Option<GaussianProcess> {
        let n = x.len();
        if n == 0 || n != y.len() || !(length_scale > 0.0) {
            return None;
        }
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n as f64;
        let y_std = if var > 1e-24 { var.sqrt() } else { 1.0 };
        let ys = DVector::from_iterator(n, y.iter().map(|v| (v - y_mean) / y_std));
        let denom = 2.0 * length_scale * length_scale;
        let base = DMatrix::from_fn(n, n, |i, j| (-sq_dist(&x[i], &x[j]) / denom).exp());
        let mut jitter = noise.max(1e-10);
        for _ in 0..8 {
            let k = &base + DMatrix::identity(n, n) * jitter;
            if let Some(chol) = k.cholesky() {
                let alpha = chol.solve(&ys);
                let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
                let log_likelihood =
                    -0.5 * ys.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
                return Some(GaussianProcess { x, alpha, chol, length_scale, y_mean, y_std, log_likelihood });
            }
            jitter *= 10.0;
        }
        None
    }

    /// Fit once per candidate length scale and keep the most likely model.
    pub fn fit_best(x: Vec<Vec<f64>>, y: &[f64], length_scales: &[f64], noise: f64) -> Option<GaussianProcess> {
        length_scales
            .iter()
            .filter_map(|&l| GaussianProcess::fit(x.clone(), y, l, noise))
            .fold(None, |best: Option<GaussianProcess>, gp| match best {
                Some(b) if b.log_likelihood >= gp.log_likelihood => Some(b),
                _ => Some(gp),
            })
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    /// Posterior mean and standard deviation in target units.
    pub fn predict(&self, q: &[f64]) -> (f64, f64) {
        let denom = 2.0 * self.length_scale * self.length_scale;
        let k = DVector::from_iterator(self.x.len(), self.x.iter().map(|xi| (-sq_dist(xi, q) / denom).exp()));
        let mean = k.dot(&self.alpha);
        let v = self.chol.l().solve_lower_triangular(&k).unwrap_or_else(|| DVector::zeros(self.x.len()));
        let var = (1.0 - v.dot(&v)).max(0.0);
        (self.y_mean + mean * self.y_std, var.sqrt() * self.y_std)
    }
}

/// Expected improvement over `best` for a maximization problem.
pub fn expected_improvement(mean: f64, std: f64, best: f64, xi: f64) -> f64 {
    let gain = mean - best - xi;
    if std <= 1e-12 {
        return gain.max(0.0);
    }
    let z = gain / std;
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    gain * n.cdf(z) + std * n.pdf(z)
}
