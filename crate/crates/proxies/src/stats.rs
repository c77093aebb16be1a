//! Small dense linear-algebra helpers.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{ProxyError, Result};

/// Pearson correlation between the rows of `m`.
///
/// `row_ids` names the rows in error messages.
pub fn row_correlation(m: &DMatrix<f64>, row_ids: &[usize]) -> Result<DMatrix<f64>> {
    let (n, d) = m.shape();
    let mut z = m.clone();
    for i in 0..n {
        let mut row = z.row_mut(i);
        let scale = row.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mean = row.sum() / d as f64;
        row.add_scalar_mut(-mean);
        let nrm = row.norm();
        if nrm == 0.0 || nrm <= 1e-12 * scale * (d as f64).sqrt() {
            return Err(ProxyError::ZeroVariance(row_ids.get(i).copied().unwrap_or(i)));
        }
        row /= nrm;
    }
    let mut c = &z * z.transpose();
    for i in 0..n {
        c[(i, i)] = 1.0;
        for j in 0..i {
            let v = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    Ok(c)
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}
