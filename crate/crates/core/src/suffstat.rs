//! Group likelihood through sufficient statistics.
//!
//! For a group with stacked observations `z_i = (y_i, x_i)` the log likelihood
//! depends on the data only through `n` and the scatter `S = sum_i z_i z_i^T`:
//!
//! ```text
//! l = -n p/2 log 2pi - n/2 sum_j log sigma_j + n log|det(I - A)| - 1/2 sum_j r_j' S r_j / sigma_j
//! ```
//!
//! with `r_j` the j-th row of `[I - A, -B]`. [`GroupCache`] keeps `(I - A)^{-1}`,
//! `log|det(I - A)|`, `w_j = S r_j` and `r_j' S r_j` so that the effect of
//! changing one coefficient is available in O(1) and committed in O(p^2 + p + q).

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::sem::{inverse_i_minus, SemParams, SINGULAR_TOL};

/// Scatter matrix of stacked `(y, x)` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Scatter {
    pub n: usize,
    pub s: DMatrix<f64>,
}

impl Scatter {
    pub fn zeros(dim: usize) -> Self {
        Self { n: 0, s: DMatrix::zeros(dim, dim) }
    }

    /// Scatter over the given rows of `y` and `x`, accumulated in row order.
    pub fn from_rows(y: &DMatrix<f64>, x: &DMatrix<f64>, rows: impl IntoIterator<Item = usize>) -> Self {
        let (p, q) = (y.ncols(), x.ncols());
        let mut out = Self::zeros(p + q);
        let mut z = DVector::zeros(p + q);
        for i in rows {
            stack_row(y, x, i, &mut z);
            out.add(&z);
        }
        out
    }

    pub fn add(&mut self, z: &DVector<f64>) {
        self.s.ger(1.0, z, z, 1.0);
        self.n += 1;
    }

    pub fn remove(&mut self, z: &DVector<f64>) {
        self.s.ger(-1.0, z, z, 1.0);
        self.n -= 1;
    }
}

/// Writes `(y_i, x_i)` into `z`.
pub fn stack_row(y: &DMatrix<f64>, x: &DMatrix<f64>, i: usize, z: &mut DVector<f64>) {
    let p = y.ncols();
    for j in 0..p {
        z[j] = y[(i, j)];
    }
    for h in 0..x.ncols() {
        z[p + h] = x[(i, h)];
    }
}

/// Outcome of a proposed single-coefficient change.
#[derive(Debug, Clone, Copy)]
pub struct Proposal {
    pub delta_loglik: f64,
    rss: f64,
    det_factor: f64,
}

#[derive(Debug, Clone)]
pub struct GroupCache {
    pub scatter: Scatter,
    inv: DMatrix<f64>,
    log_det: f64,
    w: DMatrix<f64>,
    rss: DVector<f64>,
}

impl GroupCache {
    pub fn new(scatter: Scatter, params: &SemParams) -> Result<Self> {
        let p = params.p();
        let d = scatter.s.nrows();
        let mut cache = Self {
            scatter,
            inv: DMatrix::zeros(p, p),
            log_det: 0.0,
            w: DMatrix::zeros(p, d),
            rss: DVector::zeros(p),
        };
        cache.refresh(params)?;
        Ok(cache)
    }

    /// Recomputes every cached quantity from `params` and the scatter.
    pub fn refresh(&mut self, params: &SemParams) -> Result<()> {
        let (inv, log_det) = inverse_i_minus(&params.a)?;
        self.inv = inv;
        self.log_det = log_det;
        let r = residual_rows(params);
        self.w = &r * &self.scatter.s;
        for j in 0..params.p() {
            self.rss[j] = self.w.row(j).dot(&r.row(j)).max(0.0);
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.scatter.n
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `sum_i e_ij^2` for every equation `j`.
    pub fn rss(&self) -> &DVector<f64> {
        &self.rss
    }

    pub fn loglik(&self, sigma: &DVector<f64>) -> f64 {
        let n = self.n() as f64;
        let p = sigma.len();
        let mut out = -0.5 * n * p as f64 * (2.0 * PI).ln() + n * self.log_det;
        for j in 0..p {
            out -= 0.5 * (n * sigma[j].ln() + self.rss[j] / sigma[j]);
        }
        out
    }

    /// Change in log likelihood from `A[j, k] += delta`, or `None` if `I - A` would become singular.
    pub fn propose_a(&self, j: usize, k: usize, delta: f64, sigma: &DVector<f64>) -> Option<Proposal> {
        let det_factor = 1.0 - delta * self.inv[(k, j)];
        let log_factor = det_factor.abs().ln();
        if !(self.log_det + log_factor >= SINGULAR_TOL.ln()) {
            return None;
        }
        let rss = self.shifted_rss(j, k, -delta);
        let n = self.n() as f64;
        Some(Proposal {
            delta_loglik: n * log_factor - 0.5 * (rss - self.rss[j]) / sigma[j],
            rss,
            det_factor,
        })
    }

    pub fn commit_a(&mut self, j: usize, k: usize, delta: f64, proposal: Proposal) {
        self.commit_row(j, k, -delta, proposal.rss);
        // Sherman-Morrison for (I - A) - delta e_j e_k^T.
        let u = self.inv.column(j).clone_owned();
        let v = self.inv.row(k).clone_owned();
        self.inv.ger(delta / proposal.det_factor, &u, &v.transpose(), 1.0);
        self.log_det += proposal.det_factor.abs().ln();
    }

    /// Change in log likelihood from `B[j, h] += delta`.
    pub fn propose_b(&self, j: usize, h: usize, delta: f64, sigma: &DVector<f64>) -> Proposal {
        let p = self.rss.len();
        let rss = self.shifted_rss(j, p + h, -delta);
        Proposal { delta_loglik: -0.5 * (rss - self.rss[j]) / sigma[j], rss, det_factor: 1.0 }
    }

    pub fn commit_b(&mut self, j: usize, h: usize, delta: f64, proposal: Proposal) {
        let p = self.rss.len();
        self.commit_row(j, p + h, -delta, proposal.rss);
    }

    fn shifted_rss(&self, j: usize, m: usize, dr: f64) -> f64 {
        (self.rss[j] + 2.0 * dr * self.w[(j, m)] + dr * dr * self.scatter.s[(m, m)]).max(0.0)
    }

    fn commit_row(&mut self, j: usize, m: usize, dr: f64, rss: f64) {
        let d = self.w.ncols();
        for c in 0..d {
            self.w[(j, c)] += dr * self.scatter.s[(m, c)];
        }
        self.rss[j] = rss;
    }
}

/// Rows `r_j` of `[I - A, -B]`.
pub fn residual_rows(params: &SemParams) -> DMatrix<f64> {
    let (p, q) = (params.p(), params.q());
    DMatrix::from_fn(p, p + q, |j, c| {
        if c < p {
            (if c == j { 1.0 } else { 0.0 }) - params.a[(j, c)]
        } else {
            -params.b[(j, c - p)]
        }
    })
}
