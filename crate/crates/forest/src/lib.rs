//! Random-forest regression over proxy features, with R², Kendall's tau and
//! feature importances.

pub mod error;
pub mod forest;
pub mod importance;
pub mod matrix;
pub mod metrics;
pub mod tree;

pub use error::{ForestError, Result};
pub use forest::{fit_forest, ForestConfig, GiniImportance, RegressionForest, MIN_ROWS};
pub use importance::{permutation_importance, PermutationImportance};
pub use matrix::{FeatureMatrix, Matrix, TargetMatrix};
pub use metrics::{kendall_tau, r2_per_column, r2_score};
pub use tree::{best_split, Node, SplitChoice, Tree};
