use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-column `(mean, sd)` used to standardize a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub y: Vec<(f64, f64)>,
    pub x: Vec<(f64, f64)>,
}

impl Standardization {
    /// Maps a standardized-scale coefficient of `A[j, k]` back to the raw scale.
    pub fn a_to_raw(&self, j: usize, k: usize, value: f64) -> f64 {
        value * self.y[j].1 / self.y[k].1
    }

    /// Maps a standardized-scale coefficient of `B[j, h]` back to the raw scale.
    pub fn b_to_raw(&self, j: usize, h: usize, value: f64) -> f64 {
        value * self.y[j].1 / self.x[h].1
    }
}

/// Responses `y` (n x p), predictors `x` (n x q) and optional group labels (1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub labels: Option<Vec<usize>>,
    pub y_names: Vec<String>,
    pub x_names: Vec<String>,
    pub standardization: Option<Standardization>,
}

impl Dataset {
    pub fn new(y: DMatrix<f64>, x: DMatrix<f64>, labels: Option<Vec<usize>>) -> Result<Self> {
        let y_names = (1..=y.ncols()).map(|j| format!("y{j}")).collect();
        let x_names = (1..=x.ncols()).map(|h| format!("x{h}")).collect();
        let data = Self { y, x, labels, y_names, x_names, standardization: None };
        data.validate()?;
        Ok(data)
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn p(&self) -> usize {
        self.y.ncols()
    }

    pub fn q(&self) -> usize {
        self.x.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.nrows() != self.y.nrows() {
            return Err(Error::Dimension(format!(
                "y has {} rows but x has {}",
                self.y.nrows(),
                self.x.nrows()
            )));
        }
        if self.y_names.len() != self.p() || self.x_names.len() != self.q() {
            return Err(Error::Dimension("column names do not match the data".into()));
        }
        if self.y.iter().chain(self.x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("data contain non-finite values".into()));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.n() {
                return Err(Error::Dimension(format!("{} labels for {} rows", labels.len(), self.n())));
            }
            let k = labels.iter().copied().max().unwrap_or(0);
            let mut seen = vec![false; k + 1];
            for &l in labels {
                if l == 0 {
                    return Err(Error::InvalidParameter("labels must start at 1".into()));
                }
                seen[l] = true;
            }
            if let Some(missing) = (1..=k).find(|l| !seen[*l]) {
                return Err(Error::EmptyGroup(missing));
            }
        }
        Ok(())
    }

    /// Number of groups implied by the labels.
    pub fn n_groups(&self) -> Option<usize> {
        self.labels.as_ref().map(|l| l.iter().copied().max().unwrap_or(0))
    }

    /// Row indices of each group, in row order.
    pub fn group_rows(&self) -> Option<Vec<Vec<usize>>> {
        let labels = self.labels.as_ref()?;
        let k = self.n_groups()?;
        let mut rows = vec![Vec::new(); k];
        for (i, &l) in labels.iter().enumerate() {
            rows[l - 1].push(i);
        }
        Some(rows)
    }

    /// Rows `rows` of the dataset, labels dropped.
    pub fn subset(&self, rows: &[usize]) -> Self {
        let y = self.y.select_rows(rows);
        let x = self.x.select_rows(rows);
        Self {
            y,
            x,
            labels: None,
            y_names: self.y_names.clone(),
            x_names: self.x_names.clone(),
            standardization: self.standardization.clone(),
        }
    }

    /// Centers and scales every column to unit sample variance.
    pub fn standardize(&mut self) -> Result<()> {
        let y = standardize_columns(&mut self.y, &self.y_names)?;
        let x = standardize_columns(&mut self.x, &self.x_names)?;
        self.standardization = Some(Standardization { y, x });
        Ok(())
    }
}

fn standardize_columns(m: &mut DMatrix<f64>, names: &[String]) -> Result<Vec<(f64, f64)>> {
    let n = m.nrows();
    if n < 2 {
        return Err(Error::Degenerate("at least two rows are needed to standardize".into()));
    }
    let mut out = Vec::with_capacity(m.ncols());
    for c in 0..m.ncols() {
        let col = m.column(c);
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let sd = var.sqrt();
        if !(sd > 0.0) {
            return Err(Error::ConstantColumn { path: "<memory>".into(), column: names[c].clone() });
        }
        for v in m.column_mut(c).iter_mut() {
            *v = (*v - mean) / sd;
        }
        out.push((mean, sd));
    }
    Ok(out)
}
