use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zcp_forest::{
    fit_forest, kendall_tau, permutation_importance, r2_score, ForestConfig, ForestError, Matrix,
    Node, RegressionForest, Tree,
};

fn noise(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.0..1.0)).collect()
}

/// `cols` uniform features; target `y = 3·x_dep + 2`.
fn linear_data(n: usize, cols: usize, dep: usize, seed: u64) -> (Matrix, Matrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<Vec<f64>> = (0..cols).map(|_| noise(n, &mut rng)).collect();
    let y: Vec<f64> = xs[dep].iter().map(|v| 3.0 * v + 2.0).collect();
    (Matrix::from_columns(&xs).unwrap(), Matrix::from_named_columns(vec!["y".into()], &[y]).unwrap())
}

fn split_rows(n: usize) -> (Vec<usize>, Vec<usize>) {
    let cut = n * 4 / 5;
    ((0..cut).collect(), (cut..n).collect())
}

#[test]
fn linear_target_is_learned() {
    let (x, y) = linear_data(500, 3, 0, 1);
    let (tr, te) = split_rows(500);
    let f = fit_forest(&x.select_rows(&tr), &y.select_rows(&tr), &ForestConfig::with_seed(3)).unwrap();
    assert_eq!(f.trees.len(), 100);
    let r2 = r2_score(&y.select_rows(&te), &f.predict(&x.select_rows(&te)).unwrap()).unwrap();
    println!("test R² = {r2}");
    assert!(r2 >= 0.95, "{r2}");
}

#[test]
fn constant_target_gives_constant_predictions() {
    let (x, _) = linear_data(40, 2, 0, 2);
    let y = Matrix::from_columns(&[vec![0.4; 40]]).unwrap();
    let f = fit_forest(&x, &y, &ForestConfig::with_seed(0)).unwrap();
    assert!(f.trees.iter().all(|t| t.nodes.len() == 1));
    let p = f.predict(&x).unwrap();
    assert!(p.column(0).iter().all(|&v| v == 0.4));
    assert!(!f.gini_importance().any_split);
    assert_eq!(f.gini_importance().values, vec![0.0, 0.0]);
}

/// Preorder list of (feature, threshold) found by enumerating every split
/// and recomputing both children's squared error directly.
fn oracle(x: &Matrix, y: &[f64], rows: Vec<usize>, out: &mut Vec<Option<(usize, f64)>>) {
    let sse = |r: &[usize]| {
        let m = r.iter().map(|&i| y[i]).sum::<f64>() / r.len() as f64;
        r.iter().map(|&i| (y[i] - m).powi(2)).sum::<f64>()
    };
    let pure = rows.iter().all(|&i| y[i] == y[rows[0]]);
    if rows.len() < 2 || pure {
        out.push(None);
        return;
    }
    let mut best: Option<(f64, usize, f64)> = None;
    for f in 0..x.cols() {
        let mut vals: Vec<f64> = rows.iter().map(|&i| x.get(i, f)).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x.get(i, f) <= t);
            let c = sse(&l) + sse(&r);
            if best.is_none_or(|b| c < b.0 - 1e-12) {
                best = Some((c, f, t));
            }
        }
    }
    let Some((_, f, t)) = best else {
        out.push(None);
        return;
    };
    out.push(Some((f, t)));
    let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x.get(i, f) <= t);
    oracle(x, y, l, out);
    oracle(x, y, r, out);
}

fn preorder(t: &Tree, at: usize, out: &mut Vec<Option<(usize, f64)>>) {
    match &t.nodes[at] {
        Node::Leaf { .. } => out.push(None),
        Node::Split { feature, threshold, left, right, .. } => {
            out.push(Some((*feature, *threshold)));
            preorder(t, *left, out);
            preorder(t, *right, out);
        }
    }
}

#[test]
fn single_tree_matches_exhaustive_cart() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<Vec<f64>> = (0..3).map(|_| noise(8, &mut rng)).collect();
        let y = noise(8, &mut rng);
        let x = Matrix::from_columns(&xs).unwrap();
        let ym = Matrix::from_columns(&[y.clone()]).unwrap();
        let tree = Tree::fit(&x, &ym, &(0..8).collect::<Vec<_>>());
        let (mut got, mut want) = (Vec::new(), Vec::new());
        preorder(&tree, 0, &mut got);
        oracle(&x, &y, (0..8).collect(), &mut want);
        assert_eq!(got, want, "seed {seed}");
        for i in 0..8 {
            assert_eq!(tree.predict_row(x.row(i)), &[y[i]]);
        }
    }
}

#[test]
fn forest_prediction_is_tree_mean() {
    let (x, y) = linear_data(30, 2, 1, 4);
    let f = fit_forest(&x, &y, &ForestConfig { n_trees: 2, bootstrap: true, seed: 9 }).unwrap();
    let p = f.predict(&x).unwrap();
    for i in 0..30 {
        let a = f.trees[0].predict_row(x.row(i))[0];
        let b = f.trees[1].predict_row(x.row(i))[0];
        assert!((p.get(i, 0) - (a + b) / 2.0).abs() < 1e-15);
    }
    let leaf = Tree { nodes: vec![Node::Leaf { value: vec![0.25], samples: 1 }] };
    let c = RegressionForest::from_trees(x.names().to_vec(), vec!["y".into()], vec![leaf.clone(), leaf]);
    assert!(c.predict(&x).unwrap().column(0).iter().all(|&v| v == 0.25));
}

#[test]
fn too_few_rows_and_schema_errors() {
    let (x, y) = linear_data(9, 2, 0, 5);
    assert!(matches!(fit_forest(&x, &y, &ForestConfig::default()), Err(ForestError::TooFewRows { .. })));
    let (x, y) = linear_data(20, 2, 0, 5);
    let f = fit_forest(&x, &y, &ForestConfig { n_trees: 3, ..ForestConfig::default() }).unwrap();
    let other = x.select_columns(&[1, 0]);
    assert_eq!(f.predict(&other).unwrap_err(), ForestError::Schema);
}

#[test]
fn fitting_is_deterministic_and_round_trips() {
    let (x, y) = linear_data(60, 3, 2, 6);
    let cfg = ForestConfig { n_trees: 10, ..ForestConfig::with_seed(11) };
    let a = fit_forest(&x, &y, &cfg).unwrap();
    let b = fit_forest(&x, &y, &cfg).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    let back = RegressionForest::from_json(&a.to_json()).unwrap();
    assert_eq!(back, a);
    assert_eq!(back.predict(&x).unwrap(), a.predict(&x).unwrap());
    assert!(RegressionForest::from_json("{\"format\":\"other\"}").is_err());
}

#[test]
fn duplicated_targets_give_identical_structure() {
    let (x, y) = linear_data(80, 3, 0, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let yv: Vec<f64> = y.column(0).iter().map(|v| v + rng.random_range(-0.5..0.5)).collect();
    let one = Matrix::from_named_columns(vec!["a".into()], &[yv.clone()]).unwrap();
    let two = Matrix::from_named_columns(vec!["a".into(), "b".into()], &[yv.clone(), yv]).unwrap();
    let cfg = ForestConfig { n_trees: 5, ..ForestConfig::with_seed(2) };
    let f1 = fit_forest(&x, &one, &cfg).unwrap();
    let f2 = fit_forest(&x, &two, &cfg).unwrap();
    for (t1, t2) in f1.trees.iter().zip(&f2.trees) {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        preorder(t1, 0, &mut a);
        preorder(t2, 0, &mut b);
        assert_eq!(a, b);
    }
}

#[test]
fn gini_finds_the_relevant_feature() {
    let (x, y) = linear_data(300, 4, 2, 8);
    let f = fit_forest(&x, &y, &ForestConfig::with_seed(1)).unwrap();
    let g = f.gini_importance();
    println!("gini {:?}", g.values);
    assert!(g.any_split);
    assert!(g.values[2] >= 0.9);
    assert!(g.values.iter().all(|&v| v >= 0.0));
    assert!((g.values.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn gini_ignores_monotone_feature_transforms() {
    let (x, y) = linear_data(120, 3, 0, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let yv: Vec<f64> = y.column(0).iter().map(|v| v + rng.random_range(-1.0..1.0)).collect();
    let y = Matrix::from_columns(&[yv]).unwrap();
    let mut xt = x.clone();
    let col: Vec<f64> = x.column(1).iter().map(|v| (3.0 * v).exp() - 7.0).collect();
    xt.set_column(1, &col);
    let cfg = ForestConfig { n_trees: 20, ..ForestConfig::with_seed(4) };
    let a = fit_forest(&x, &y, &cfg).unwrap().gini_importance();
    let b = fit_forest(&xt, &y, &cfg).unwrap().gini_importance();
    assert_eq!(a, b);
}

#[test]
fn permutation_importance_cases() {
    let (x, y) = linear_data(400, 3, 0, 10);
    let (tr, te) = split_rows(400);
    let (xtr, ytr) = (x.select_rows(&tr), y.select_rows(&tr));
    let (xte, yte) = (x.select_rows(&te), y.select_rows(&te));
    let f = fit_forest(&xtr, &ytr, &ForestConfig::with_seed(5)).unwrap();
    let p = permutation_importance(&f, &xte, &yte, 10, 1).unwrap();
    println!("{p:?}");
    // Shuffling the only informative column leaves predictions independent
    // of the target with about the same spread, so permuted R² ≈ −1.
    assert!(p.mean[0] >= p.baseline_r2);
    assert!((p.mean[0] - (p.baseline_r2 + 1.0)).abs() < 0.3);
}

#[test]
fn unused_feature_has_zero_permutation_importance() {
    // Feature 1 is constant, so no tree can split on it.
    let (x, y) = linear_data(100, 1, 0, 12);
    let x = Matrix::from_columns(&[x.column(0), vec![0.5; 100]]).unwrap();
    let f = fit_forest(&x, &y, &ForestConfig::with_seed(1)).unwrap();
    let p = permutation_importance(&f, &x, &y, 10, 2).unwrap();
    assert_eq!(p.mean[1], 0.0);
    assert_eq!(p.std[1], 0.0);
}

#[test]
fn duplicated_features_share_the_single_copy_drop() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let a = noise(400, &mut rng);
    let z = noise(400, &mut rng);
    let y: Vec<f64> = a.iter().map(|v| (6.0 * v).sin()).collect();
    let y = Matrix::from_columns(&[y]).unwrap();
    let (tr, te) = split_rows(400);
    let drops = |cols: Vec<Vec<f64>>| {
        let x = Matrix::from_columns(&cols).unwrap();
        let f = fit_forest(&x.select_rows(&tr), &y.select_rows(&tr), &ForestConfig::with_seed(2)).unwrap();
        permutation_importance(&f, &x.select_rows(&te), &y.select_rows(&te), 10, 3).unwrap().mean
    };
    let single = drops(vec![a.clone(), z.clone()]);
    let double = drops(vec![a.clone(), a, z]);
    println!("single {single:?} double {double:?}");
    assert!((double[0] + double[1] - single[0]).abs() <= 0.1);
}

fn tau_oracle(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let (mut c, mut d, mut ta, mut tb) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let da = a[i] - a[j];
            let db = b[i] - b[j];
            if da == 0.0 {
                ta += 1;
            }
            if db == 0.0 {
                tb += 1;
            }
            if da * db > 0.0 {
                c += 1;
            } else if da * db < 0.0 {
                d += 1;
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    (c - d) as f64 / (((n0 - ta) * (n0 - tb)) as f64).sqrt()
}

#[test]
fn kendall_matches_pair_counting_with_ties() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..200).map(|_| rng.random_range(0..15) as f64).collect();
        let b: Vec<f64> = a.iter().map(|v| (v + rng.random_range(-6..7) as f64).round()).collect();
        let fast = kendall_tau(&a, &b).unwrap();
        assert!((fast - tau_oracle(&a, &b)).abs() < 1e-12, "seed {seed}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn kendall_is_symmetric_and_rank_based(
        a in prop::collection::vec(-5i32..5, 2..60),
        seed in 0u64..1000,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let b: Vec<f64> = a.iter().map(|_| rng.random_range(0..4) as f64).collect();
        match (kendall_tau(&a, &b), kendall_tau(&b, &a)) {
            (Ok(x), Ok(y)) => {
                prop_assert!((x - y).abs() < 1e-12);
                prop_assert!((x - tau_oracle(&a, &b)).abs() < 1e-12);
                let warped: Vec<f64> = a.iter().map(|v| v.powi(3) + 2.0 * v).collect();
                prop_assert!((kendall_tau(&warped, &b).unwrap() - x).abs() < 1e-12);
            }
            (Err(e1), Err(e2)) => prop_assert_eq!(e1, e2),
            _ => prop_assert!(false, "asymmetric failure"),
        }
    }
}
