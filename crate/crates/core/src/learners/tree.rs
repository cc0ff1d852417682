//! CART classification tree with Gini impurity.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Column-major copy of a training matrix with labels mapped to class indices.
pub struct TrainingData {
    columns: Vec<Vec<f64>>,
    targets: Vec<usize>,
    n_classes: usize,
}

impl TrainingData {
    pub fn new(rows: &[Vec<f64>], targets: Vec<usize>, n_classes: usize) -> Self {
        let width = rows.first().map_or(0, Vec::len);
        let columns = (0..width)
            .map(|j| rows.iter().map(|r| r[j]).collect())
            .collect();
        TrainingData {
            columns,
            targets,
            n_classes,
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    Sqrt,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, width: usize) -> usize {
        let m = match self {
            MaxFeatures::All => width,
            MaxFeatures::Sqrt => (width as f64).sqrt().floor() as usize,
            MaxFeatures::Count(n) => n,
        };
        m.clamp(1, width.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub max_features: MaxFeatures,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_samples_split: 2,
            max_features: MaxFeatures::All,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        /// Class proportions of the training samples reaching this leaf.
        distribution: Vec<f64>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Impurity decrease achieved by the split.
        decrease: f64,
        samples: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
    /// Sample-weighted impurity decrease per feature, unnormalised.
    pub raw_importance: Vec<f64>,
}

/// Gini impurity of a class-count vector.
pub fn gini_from_counts(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let sq: usize = counts.iter().map(|c| c * c).sum();
    1.0 - sq as f64 / (n * n) as f64
}

#[derive(Debug, Clone, Copy)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub decrease: f64,
}

/// Midpoint threshold that keeps `lo` on the left and `hi` on the right.
pub fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m < hi {
        m
    } else {
        lo
    }
}

/// A split plus its exact purity `Σ count² / side size` as a fraction, so
/// that ties are detected without rounding.
#[derive(Clone, Copy)]
struct Candidate {
    choice: SplitChoice,
    num: u128,
    den: u128,
}

impl Candidate {
    fn beats(&self, other: &Candidate) -> bool {
        self.num * other.den > other.num * self.den
    }
}

struct Sweep<'a> {
    data: &'a TrainingData,
    pairs: Vec<(f64, usize)>,
    left: Vec<usize>,
    right: Vec<usize>,
}

impl<'a> Sweep<'a> {
    /// Best threshold on `feature` for the samples in `idx`.
    fn best_on_feature(
        &mut self,
        feature: usize,
        idx: &[usize],
        parent: &[usize],
        parent_gini: f64,
    ) -> Option<Candidate> {
        let col = &self.data.columns[feature];
        self.pairs.clear();
        self.pairs
            .extend(idx.iter().map(|&i| (col[i], self.data.targets[i])));
        self.pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        if self.pairs[0].0 == self.pairs[self.pairs.len() - 1].0 {
            return None;
        }

        let n = self.pairs.len();
        self.left.iter_mut().for_each(|c| *c = 0);
        self.right.copy_from_slice(parent);
        let mut sq_left = 0usize;
        let mut sq_right: usize = parent.iter().map(|c| c * c).sum();
        let mut best: Option<Candidate> = None;
        for i in 0..n - 1 {
            let c = self.pairs[i].1;
            sq_left += 2 * self.left[c] + 1;
            sq_right -= 2 * self.right[c] - 1;
            self.left[c] += 1;
            self.right[c] -= 1;
            let (v, next) = (self.pairs[i].0, self.pairs[i + 1].0);
            if v == next {
                continue;
            }
            let (nl, nr) = (i + 1, n - i - 1);
            let candidate = Candidate {
                choice: SplitChoice {
                    feature,
                    threshold: midpoint(v, next),
                    decrease: 0.0,
                },
                num: sq_left as u128 * nr as u128 + sq_right as u128 * nl as u128,
                den: (nl * nr) as u128,
            };
            if best.is_none_or(|b| candidate.beats(&b)) {
                best = Some(candidate);
            }
        }
        best.map(|mut b| {
            let purity = b.num as f64 / b.den as f64;
            b.choice.decrease = parent_gini - (n as f64 - purity) / n as f64;
            b
        })
    }
}

impl DecisionTree {
    /// Grows a tree on the samples in `sample_idx` (duplicates allowed).
    pub fn fit<R: Rng>(
        data: &TrainingData,
        sample_idx: Vec<usize>,
        params: &TreeParams,
        rng: &mut R,
    ) -> Self {
        let width = data.width();
        let k = data.n_classes();
        let mtry = params.max_features.resolve(width);
        let total = sample_idx.len() as f64;
        let mut tree = DecisionTree {
            nodes: Vec::new(),
            raw_importance: vec![0.0; width],
        };
        let mut sweep = Sweep {
            data,
            pairs: Vec::with_capacity(sample_idx.len()),
            left: vec![0; k],
            right: vec![0; k],
        };

        // (node slot, samples, depth)
        tree.nodes.push(Node::Leaf {
            distribution: Vec::new(),
        });
        let mut stack = vec![(0usize, sample_idx, 0usize)];
        while let Some((slot, idx, depth)) = stack.pop() {
            let mut counts = vec![0usize; k];
            for &i in &idx {
                counts[data.targets[i]] += 1;
            }
            let parent_gini = gini_from_counts(&counts);
            let can_split = parent_gini > 0.0
                && idx.len() >= params.min_samples_split.max(2)
                && params.max_depth.is_none_or(|d| depth < d);

            let choice = if can_split {
                choose_split(&mut sweep, &idx, &counts, parent_gini, width, mtry, rng)
            } else {
                None
            };

            match choice {
                None => {
                    let n = idx.len() as f64;
                    tree.nodes[slot] = Node::Leaf {
                        distribution: counts.iter().map(|&c| c as f64 / n).collect(),
                    };
                }
                Some(split) => {
                    tree.raw_importance[split.feature] += idx.len() as f64 / total * split.decrease;
                    let col = &data.columns[split.feature];
                    let (l, r): (Vec<usize>, Vec<usize>) =
                        idx.iter().partition(|&&i| col[i] <= split.threshold);
                    let left = tree.nodes.len();
                    let right = left + 1;
                    tree.nodes.push(Node::Leaf {
                        distribution: Vec::new(),
                    });
                    tree.nodes.push(Node::Leaf {
                        distribution: Vec::new(),
                    });
                    tree.nodes[slot] = Node::Split {
                        feature: split.feature,
                        threshold: split.threshold,
                        left,
                        right,
                        decrease: split.decrease,
                        samples: idx.len(),
                    };
                    stack.push((right, r, depth + 1));
                    stack.push((left, l, depth + 1));
                }
            }
        }
        tree
    }

    pub fn leaf(&self, row: &[f64]) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { distribution } => return distribution,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    at = if row[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }

    /// Class index of the majority at the reached leaf, lowest index on ties.
    pub fn vote(&self, row: &[f64]) -> usize {
        argmax(self.leaf(row))
    }

    pub fn root_split(&self) -> Option<SplitChoice> {
        match self.nodes.first()? {
            Node::Split {
                feature,
                threshold,
                decrease,
                ..
            } => Some(SplitChoice {
                feature: *feature,
                threshold: *threshold,
                decrease: *decrease,
            }),
            Node::Leaf { .. } => None,
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Importances normalised to sum 1, or `None` when the tree never split.
    pub fn importances(&self) -> Option<Vec<f64>> {
        normalized(&self.raw_importance)
    }
}

pub(crate) fn normalized(raw: &[f64]) -> Option<Vec<f64>> {
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        Some(raw.iter().map(|v| v / total).collect())
    } else {
        None
    }
}

/// First index of the maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn choose_split<R: Rng>(
    sweep: &mut Sweep<'_>,
    idx: &[usize],
    counts: &[usize],
    parent_gini: f64,
    width: usize,
    mtry: usize,
    rng: &mut R,
) -> Option<SplitChoice> {
    let evaluate = |sweep: &mut Sweep<'_>, features: &[usize]| {
        let mut best: Option<Candidate> = None;
        for &f in features {
            if let Some(c) = sweep.best_on_feature(f, idx, counts, parent_gini) {
                // ascending feature order keeps the lowest index on exact ties
                if best.is_none_or(|b| c.beats(&b)) {
                    best = Some(c);
                }
            }
        }
        best.map(|b| b.choice)
    };

    if mtry >= width {
        let all: Vec<usize> = (0..width).collect();
        return evaluate(sweep, &all);
    }
    let mut order = index::sample(rng, width, width).into_vec();
    let (head, tail) = order.split_at_mut(mtry);
    head.sort_unstable();
    if let Some(best) = evaluate(sweep, head) {
        return Some(best);
    }
    // every sampled feature was constant here; fall back to the rest
    tail.sort_unstable();
    evaluate(sweep, tail)
}
