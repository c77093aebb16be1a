use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ForestError, Result};
use crate::matrix::Matrix;
use crate::tree::Tree;

pub const FORMAT: &str = "zcp-forest/1";
pub const MIN_ROWS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn with_seed(seed: u64) -> Self {
        ForestConfig {
            seed,
            ..ForestConfig::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionForest {
    pub format: String,
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
    /// Bootstrap seed of each tree (`seed + index`).
    pub tree_seeds: Vec<u64>,
    /// Rows each tree was grown on.
    pub train_rows: usize,
    pub trees: Vec<Tree>,
}

/// Normalised Gini importances.
#[derive(Clone, Debug, PartialEq)]
pub struct GiniImportance {
    pub values: Vec<f64>,
    /// False when no tree has a split; `values` are then all zero.
    pub any_split: bool,
}

pub fn fit_forest(x: &Matrix, y: &Matrix, cfg: &ForestConfig) -> Result<RegressionForest> {
    let n = x.rows();
    if n < MIN_ROWS {
        return Err(ForestError::TooFewRows { need: MIN_ROWS, got: n });
    }
    if y.rows() != n {
        return Err(ForestError::Shape(format!("{n} feature rows, {} target rows", y.rows())));
    }
    if !(1..=2).contains(&y.cols()) {
        return Err(ForestError::Shape(format!("{} target columns, need 1 or 2", y.cols())));
    }
    let seeds: Vec<u64> = (0..cfg.n_trees).map(|i| cfg.seed.wrapping_add(i as u64)).collect();
    let trees = seeds
        .par_iter()
        .map(|&s| {
            let idx: Vec<usize> = if cfg.bootstrap {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            Tree::fit(x, y, &idx)
        })
        .collect();
    Ok(RegressionForest {
        format: FORMAT.into(),
        feature_names: x.names().to_vec(),
        target_names: y.names().to_vec(),
        tree_seeds: seeds,
        train_rows: n,
        trees,
    })
}

impl RegressionForest {
    /// Wraps explicit trees, e.g. for inspection.
    pub fn from_trees(feature_names: Vec<String>, target_names: Vec<String>, trees: Vec<Tree>) -> Self {
        RegressionForest {
            format: FORMAT.into(),
            feature_names,
            target_names,
            tree_seeds: vec![0; trees.len()],
            train_rows: 0,
            trees,
        }
    }

    /// Mean over trees of the leaf values reached by each row.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        if x.names() != self.feature_names.as_slice() {
            return Err(ForestError::Schema);
        }
        if self.trees.is_empty() {
            return Err(ForestError::Shape("forest has no trees".into()));
        }
        let outs = self.target_names.len();
        let t = self.trees.len() as f64;
        let rows: Vec<Vec<f64>> = (0..x.rows())
            .into_par_iter()
            .map(|i| {
                // Offsets from the first tree keep agreeing trees exact.
                let first = self.trees[0].predict_row(x.row(i)).to_vec();
                let mut acc = vec![0.0; outs];
                for tree in &self.trees[1..] {
                    for ((a, v), f) in acc.iter_mut().zip(tree.predict_row(x.row(i))).zip(&first) {
                        *a += v - f;
                    }
                }
                first.iter().zip(&acc).map(|(f, a)| f + a / t).collect()
            })
            .collect();
        Matrix::from_rows(self.target_names.clone(), &rows)
    }

    /// Squared-error reduction credited to each feature, averaged over trees
    /// and normalised to sum to one.
    pub fn gini_importance(&self) -> GiniImportance {
        let f = self.feature_names.len();
        let mut total = vec![0.0; f];
        for tree in &self.trees {
            let root = match tree.nodes.first() {
                Some(crate::tree::Node::Split { samples, .. }) => *samples as f64,
                _ => continue,
            };
            let scale = root * self.target_names.len() as f64;
            for (feat, _, dec) in tree.splits() {
                total[feat] += dec / scale;
            }
        }
        let n = self.trees.len().max(1) as f64;
        total.iter_mut().for_each(|v| *v /= n);
        let sum: f64 = total.iter().sum();
        let any_split = sum > 0.0;
        if any_split {
            total.iter_mut().for_each(|v| *v /= sum);
        }
        GiniImportance {
            values: total,
            any_split,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("forest serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: RegressionForest =
            serde_json::from_str(text).map_err(|e| ForestError::Format(e.to_string()))?;
        if f.format != FORMAT {
            return Err(ForestError::Format(format!("unknown format {:?}", f.format)));
        }
        Ok(f)
    }
}
