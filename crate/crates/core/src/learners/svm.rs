use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{fit_scaler, FittedScaler, ScalerKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub epochs: usize,
    pub regularization: f64,
}

/// One-vs-rest linear SVM trained by stochastic sub-gradient descent on the hinge loss.
///
/// Inputs are standardised with a z-score scaler fitted on the training rows and
/// stored with the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    pub scaler: FittedScaler,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

impl LinearSvm {
    pub fn fit(
        rows: &[Vec<f64>],
        targets: &[usize],
        n_classes: usize,
        params: &SvmParams,
        seed: u64,
    ) -> Self {
        let scaler = fit_scaler(ScalerKind::ZScore, rows).expect("non-empty training rows");
        let xs: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| scaler.transform_row(r).expect("width checked by caller"))
            .collect();
        let width = scaler.width();
        let lambda = params.regularization;

        // learning rate 1 / (λ (t0 + t)), t0 chosen so the first step is ~λ^(-1/4)
        let eta0 = lambda.powf(-0.25);
        let t0 = 1.0 / (eta0 * lambda);

        let mut weights = vec![vec![0.0; width]; n_classes];
        let mut biases = vec![0.0; n_classes];
        let mut order: Vec<usize> = (0..xs.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = 0.0;
        for _ in 0..params.epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                t += 1.0;
                let eta = 1.0 / (lambda * (t0 + t));
                let decay = 1.0 - eta * lambda;
                let x = &xs[i];
                for (c, (w, b)) in weights.iter_mut().zip(biases.iter_mut()).enumerate() {
                    let y = if targets[i] == c { 1.0 } else { -1.0 };
                    let margin = y * (dot(w, x) + *b);
                    if margin < 1.0 {
                        for (wj, xj) in w.iter_mut().zip(x) {
                            *wj = *wj * decay + eta * y * xj;
                        }
                        // bias is unregularised and takes a damped step
                        *b += 0.01 * eta * y;
                    } else {
                        w.iter_mut().for_each(|wj| *wj *= decay);
                    }
                }
            }
        }
        LinearSvm {
            scaler,
            weights,
            biases,
        }
    }

    pub fn margins(&self, row: &[f64]) -> Vec<f64> {
        let x = self
            .scaler
            .transform_row(row)
            .expect("width checked by caller");
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| dot(w, &x) + b)
            .collect()
    }

    pub fn softmax_scores(&self, row: &[f64]) -> Vec<f64> {
        let m = self.margins(row);
        let max = m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = m.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / total).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
