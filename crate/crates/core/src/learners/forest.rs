use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{normalized, DecisionTree, TrainingData, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub bootstrap: bool,
    pub tree: TreeParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
}

/// Independent generator for tree `index`; parallel and serial fits agree.
pub fn tree_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

impl RandomForest {
    pub fn fit(data: &TrainingData, params: &ForestParams, seed: u64) -> Self {
        let n = data.len();
        let trees = (0..params.n_trees.max(1))
            .into_par_iter()
            .map(|t| {
                let mut rng = tree_rng(seed, t);
                let sample = if params.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                DecisionTree::fit(data, sample, &params.tree, &mut rng)
            })
            .collect();
        RandomForest { trees }
    }

    /// Fraction of trees voting for each class.
    pub fn vote_fractions(&self, row: &[f64], n_classes: usize) -> Vec<f64> {
        let mut votes = vec![0.0; n_classes];
        for tree in &self.trees {
            votes[tree.vote(row)] += 1.0;
        }
        let total = self.trees.len() as f64;
        votes.iter_mut().for_each(|v| *v /= total);
        votes
    }

    /// Mean of the per-tree normalised importances, renormalised.
    pub fn importances(&self, width: usize) -> Option<Vec<f64>> {
        let mut acc = vec![0.0; width];
        for imp in self.trees.iter().filter_map(DecisionTree::importances) {
            acc.iter_mut().zip(imp).for_each(|(a, v)| *a += v);
        }
        normalized(&acc)
    }
}
