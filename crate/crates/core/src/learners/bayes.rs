use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Gaussian naive Bayes with per-class diagonal variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb {
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    pub priors: Vec<f64>,
    /// Added to every variance.
    pub epsilon: f64,
}

impl GaussianNb {
    pub fn fit(rows: &[Vec<f64>], targets: &[usize], n_classes: usize, smoothing: f64) -> Self {
        let width = rows[0].len();
        let n = rows.len() as f64;

        // smoothing is relative to the largest per-feature variance of the whole set
        let mut max_var: f64 = 0.0;
        for j in 0..width {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            max_var = max_var.max(var);
        }
        let epsilon = smoothing * max_var;

        let mut counts = vec![0usize; n_classes];
        let mut means = vec![vec![0.0; width]; n_classes];
        for (r, &c) in rows.iter().zip(targets) {
            counts[c] += 1;
            means[c].iter_mut().zip(r).for_each(|(m, x)| *m += x);
        }
        for (m, &cnt) in means.iter_mut().zip(&counts) {
            m.iter_mut().for_each(|v| *v /= cnt.max(1) as f64);
        }
        let mut variances = vec![vec![0.0; width]; n_classes];
        for (r, &c) in rows.iter().zip(targets) {
            for ((v, x), m) in variances[c].iter_mut().zip(r).zip(&means[c]) {
                *v += (x - m) * (x - m);
            }
        }
        for (v, &cnt) in variances.iter_mut().zip(&counts) {
            v.iter_mut()
                .for_each(|s| *s = *s / cnt.max(1) as f64 + epsilon);
        }
        // a column constant across the whole set has zero variance everywhere
        if epsilon == 0.0 {
            for v in variances.iter_mut().flatten() {
                if *v == 0.0 {
                    *v = f64::MIN_POSITIVE.sqrt();
                }
            }
        }
        let priors = counts.iter().map(|&c| c as f64 / n).collect();
        GaussianNb {
            means,
            variances,
            priors,
            epsilon,
        }
    }

    pub fn joint_log_likelihood(&self, row: &[f64]) -> Vec<f64> {
        self.priors
            .iter()
            .zip(self.means.iter().zip(&self.variances))
            .map(|(&prior, (mean, var))| {
                let mut ll = prior.ln();
                for ((x, m), v) in row.iter().zip(mean).zip(var) {
                    ll -= 0.5 * (2.0 * PI * v).ln() + (x - m) * (x - m) / (2.0 * v);
                }
                ll
            })
            .collect()
    }

    /// Posterior probabilities via log-sum-exp.
    pub fn posteriors(&self, row: &[f64]) -> Vec<f64> {
        let jll = self.joint_log_likelihood(row);
        let max = jll.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = jll.iter().map(|l| (l - max).exp()).sum();
        jll.iter().map(|l| (l - max).exp() / denom).collect()
    }
}
