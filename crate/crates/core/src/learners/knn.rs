use serde::{Deserialize, Serialize};

/// Brute-force Euclidean nearest neighbours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KNearest {
    pub k: usize,
    pub points: Vec<Vec<f64>>,
    /// Class index of each stored point.
    pub targets: Vec<usize>,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl KNearest {
    /// Indices of the `k` nearest stored points, closest first; ties keep the earlier point.
    pub fn neighbours(&self, row: &[f64]) -> Vec<usize> {
        let k = self.k.min(self.points.len()).max(1);
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        for (i, p) in self.points.iter().enumerate() {
            let d = squared_distance(row, p);
            if best.len() == k && d >= best[k - 1].0 {
                continue;
            }
            let at = best.partition_point(|&(bd, _)| bd <= d);
            best.insert(at, (d, i));
            best.truncate(k);
        }
        best.into_iter().map(|(_, i)| i).collect()
    }

    /// Neighbour at rank r (1-based) contributes weight 1/r; scores sum to 1.
    pub fn scores(&self, row: &[f64], n_classes: usize) -> Vec<f64> {
        let mut scores = vec![0.0; n_classes];
        let mut total = 0.0;
        for (rank, i) in self.neighbours(row).into_iter().enumerate() {
            let w = 1.0 / (rank + 1) as f64;
            scores[self.targets[i]] += w;
            total += w;
        }
        scores.iter_mut().for_each(|s| *s /= total);
        scores
    }
}
