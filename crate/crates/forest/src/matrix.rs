use serde::{Deserialize, Serialize};

use crate::error::{ForestError, Result};

/// Row-major table of named real columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    names: Vec<String>,
    rows: usize,
    data: Vec<f64>,
}

/// Features: one row per architecture, one column per proxy.
pub type FeatureMatrix = Matrix;
/// Targets: one or two accuracy columns.
pub type TargetMatrix = Matrix;

impl Matrix {
    pub fn new(names: Vec<String>, rows: usize, data: Vec<f64>) -> Result<Self> {
        if names.is_empty() {
            return Err(ForestError::Shape("no columns".into()));
        }
        if data.len() != rows * names.len() {
            return Err(ForestError::Shape(format!(
                "{} values for {rows} rows × {} columns",
                data.len(),
                names.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(ForestError::NonFinite("matrix"));
        }
        Ok(Matrix { names, rows, data })
    }

    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let cols = names.len();
        if let Some(r) = rows.iter().find(|r| r.len() != cols) {
            return Err(ForestError::Shape(format!("row of length {} for {cols} columns", r.len())));
        }
        Matrix::new(names, rows.len(), rows.concat())
    }

    /// Columns named `x0, x1, ...`.
    pub fn from_columns(cols: &[Vec<f64>]) -> Result<Self> {
        let names = (0..cols.len()).map(|j| format!("x{j}")).collect();
        Matrix::from_named_columns(names, cols)
    }

    pub fn from_named_columns(names: Vec<String>, cols: &[Vec<f64>]) -> Result<Self> {
        let rows = cols.first().map_or(0, Vec::len);
        if cols.iter().any(|c| c.len() != rows) {
            return Err(ForestError::Shape("columns differ in length".into()));
        }
        let mut data = Vec::with_capacity(rows * cols.len());
        for i in 0..rows {
            data.extend(cols.iter().map(|c| c[i]));
        }
        Matrix::new(names, rows, data)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.names.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[f64]) {
        let c = self.cols();
        for (i, v) in values.iter().enumerate() {
            self.data[i * c + j] = *v;
        }
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols());
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            names: self.names.clone(),
            rows: idx.len(),
            data,
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> Matrix {
        let names = cols.iter().map(|&j| self.names[j].clone()).collect();
        let mut data = Vec::with_capacity(self.rows * cols.len());
        for i in 0..self.rows {
            data.extend(cols.iter().map(|&j| self.get(i, j)));
        }
        Matrix {
            names,
            rows: self.rows,
            data,
        }
    }
}
