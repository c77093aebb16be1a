use crate::error::{ForestError, Result};
use crate::matrix::Matrix;

/// `1 − SS_res / SS_tot` for each column.
pub fn r2_per_column(y_true: &Matrix, y_pred: &Matrix) -> Result<Vec<f64>> {
    if y_true.rows() != y_pred.rows() || y_true.cols() != y_pred.cols() {
        return Err(ForestError::Shape("prediction and truth differ in shape".into()));
    }
    if y_true.rows() < 2 {
        return Err(ForestError::TooFewRows { need: 2, got: y_true.rows() });
    }
    (0..y_true.cols())
        .map(|j| {
            let t = y_true.column(j);
            let p = y_pred.column(j);
            let mean = t.iter().sum::<f64>() / t.len() as f64;
            let ss_tot: f64 = t.iter().map(|v| (v - mean).powi(2)).sum();
            if ss_tot == 0.0 {
                return Err(ForestError::ConstantTarget(j));
            }
            let ss_res: f64 = t.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum();
            Ok(1.0 - ss_res / ss_tot)
        })
        .collect()
}

/// Uniform mean of the per-column scores.
pub fn r2_score(y_true: &Matrix, y_pred: &Matrix) -> Result<f64> {
    let cols = r2_per_column(y_true, y_pred)?;
    Ok(cols.iter().sum::<f64>() / cols.len() as f64)
}

/// Kendall's tau-b in `O(n log n)`.
///
/// Sorts by `(a, b)`, counts ties, then counts discordant pairs as the swaps
/// of a merge sort on `b`.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(ForestError::Shape(format!("lengths {} and {}", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(ForestError::TooFewRows { need: 2, got: n });
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(ForestError::NonFinite("kendall_tau input"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| a[i].total_cmp(&a[j]).then(b[i].total_cmp(&b[j])));

    let pairs = |t: u64| t * (t - 1) / 2;
    let n0 = pairs(n as u64);
    let (mut ties_a, mut ties_ab) = (0u64, 0u64);
    let (mut run_a, mut run_ab) = (1u64, 1u64);
    for w in idx.windows(2) {
        let (p, q) = (w[0], w[1]);
        if a[p] == a[q] {
            run_a += 1;
            if b[p] == b[q] {
                run_ab += 1;
            } else {
                ties_ab += pairs(run_ab);
                run_ab = 1;
            }
        } else {
            ties_a += pairs(run_a);
            ties_ab += pairs(run_ab);
            run_a = 1;
            run_ab = 1;
        }
    }
    ties_a += pairs(run_a);
    ties_ab += pairs(run_ab);

    let mut seq: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
    let mut buf = vec![0.0; n];
    let swaps = merge_count(&mut seq, &mut buf);

    let mut ties_b = 0u64;
    let mut run = 1u64;
    for w in seq.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            ties_b += pairs(run);
            run = 1;
        }
    }
    ties_b += pairs(run);

    if ties_a == n0 || ties_b == n0 {
        return Err(ForestError::AllTied);
    }
    let num = n0 as f64 - ties_a as f64 - ties_b as f64 + ties_ab as f64 - 2.0 * swaps as f64;
    let den = ((n0 - ties_a) as f64 * (n0 - ties_b) as f64).sqrt();
    Ok((num / den).clamp(-1.0, 1.0))
}

/// Sorts `v` ascending and returns the number of strictly inverted pairs.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (l, r) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        merge_count(l, bl) + merge_count(r, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}
