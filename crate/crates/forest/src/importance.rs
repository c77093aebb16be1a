use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::forest::RegressionForest;
use crate::matrix::Matrix;
use crate::metrics::r2_score;

#[derive(Clone, Debug, PartialEq)]
pub struct PermutationImportance {
    pub baseline_r2: f64,
    /// Mean drop in R² per feature.
    pub mean: Vec<f64>,
    /// Population standard deviation of the drop over repeats.
    pub std: Vec<f64>,
}

/// Drop in test R² when each feature column is shuffled, `repeats` times.
///
/// One generator seeded with `seed` supplies every shuffle, feature by
/// feature.
pub fn permutation_importance(
    forest: &RegressionForest,
    x: &Matrix,
    y: &Matrix,
    repeats: usize,
    seed: u64,
) -> Result<PermutationImportance> {
    let baseline = r2_score(y, &forest.predict(x)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mean = Vec::with_capacity(x.cols());
    let mut std = Vec::with_capacity(x.cols());
    for j in 0..x.cols() {
        let original = x.column(j);
        let mut drops = Vec::with_capacity(repeats);
        let mut shuffled = x.clone();
        for _ in 0..repeats {
            let mut col = original.clone();
            col.shuffle(&mut rng);
            shuffled.set_column(j, &col);
            drops.push(baseline - r2_score(y, &forest.predict(&shuffled)?)?);
        }
        let m = drops.iter().sum::<f64>() / repeats as f64;
        let v = drops.iter().map(|d| (d - m).powi(2)).sum::<f64>() / repeats as f64;
        mean.push(m);
        std.push(v.sqrt());
    }
    Ok(PermutationImportance {
        baseline_r2: baseline,
        mean,
        std,
    })
}
