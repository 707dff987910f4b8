//! Simultaneous-equation model mathematics.
//!
//! A group's expression vector `y` (length `p`) and DNA-level measurements `x`
//! (length `q`) satisfy `y = A y + B x + e`, `e ~ N(0, diag(sigma))`. The
//! nonzero entries of `A` and `B` are the directed edges of the associated
//! reciprocal graph; every edge terminates in a `y` vertex.
//!
//! Vertex indices are zero-based: `y` vertices are `0..p`, `x` vertex `h`
//! is `p + h`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `|det(I - A)|` below this is treated as singular.
pub const SINGULAR_TOL: f64 = 1e-12;

/// Thresholded coefficient: `latent` if `|latent| > threshold`, else zero.
#[inline]
pub fn apply_threshold(latent: f64, threshold: f64) -> f64 {
    debug_assert!(threshold >= 0.0);
    if latent.abs() > threshold {
        latent
    } else {
        0.0
    }
}

/// Which coefficients may be nonzero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportMask {
    pub a_support: DMatrix<bool>,
    pub b_support: DMatrix<bool>,
}

impl SupportMask {
    /// All off-diagonal `A` entries and every `B` entry.
    pub fn full(p: usize, q: usize) -> Self {
        Self {
            a_support: DMatrix::from_fn(p, p, |i, j| i != j),
            b_support: DMatrix::from_element(p, q, true),
        }
    }

    /// Block support: `x` column `h` may only affect gene `h % p`.
    ///
    /// With `q = 2p` this is the usual layout of copy number in columns
    /// `0..p` followed by methylation in columns `p..2p`.
    pub fn block(p: usize, q: usize) -> Result<Self> {
        if p == 0 || q % p != 0 {
            return Err(Error::Dimension(format!(
                "block support needs q to be a multiple of p (p = {p}, q = {q})"
            )));
        }
        Ok(Self {
            a_support: DMatrix::from_fn(p, p, |i, j| i != j),
            b_support: DMatrix::from_fn(p, q, |j, h| h % p == j),
        })
    }

    pub fn p(&self) -> usize {
        self.a_support.nrows()
    }

    pub fn q(&self) -> usize {
        self.b_support.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.p();
        if self.a_support.ncols() != p || self.b_support.nrows() != p {
            return Err(Error::Dimension("support mask shapes disagree".into()));
        }
        if (0..p).any(|j| self.a_support[(j, j)]) {
            return Err(Error::InvalidParameter("A support must exclude the diagonal".into()));
        }
        Ok(())
    }
}

/// Parameters of one group's (or cluster's) SEM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemParams {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub a_latent: DMatrix<f64>,
    pub b_latent: DMatrix<f64>,
}

impl SemParams {
    /// No edges, unit noise variances.
    pub fn zeros(p: usize, q: usize) -> Self {
        Self {
            a: DMatrix::zeros(p, p),
            b: DMatrix::zeros(p, q),
            sigma: DVector::from_element(p, 1.0),
            a_latent: DMatrix::zeros(p, p),
            b_latent: DMatrix::zeros(p, q),
        }
    }

    /// Builds parameters whose latents equal the given coefficients (no thresholding).
    pub fn from_coefficients(a: DMatrix<f64>, b: DMatrix<f64>, sigma: DVector<f64>) -> Self {
        Self { a_latent: a.clone(), b_latent: b.clone(), a, b, sigma }
    }

    pub fn p(&self) -> usize {
        self.a.nrows()
    }

    pub fn q(&self) -> usize {
        self.b.ncols()
    }

    /// Checks every structural invariant against `mask`.
    pub fn validate(&self, mask: &SupportMask) -> Result<()> {
        let (p, q) = (self.p(), self.q());
        if self.a.shape() != (p, p)
            || self.b.nrows() != p
            || self.sigma.len() != p
            || self.a_latent.shape() != (p, p)
            || self.b_latent.shape() != (p, q)
            || mask.p() != p
            || mask.q() != q
        {
            return Err(Error::Dimension(format!("inconsistent SEM parameter shapes for p = {p}, q = {q}")));
        }
        for j in 0..p {
            if self.a[(j, j)] != 0.0 {
                return Err(Error::InvalidParameter(format!("diag(A)[{j}] is nonzero")));
            }
            if !(self.sigma[j] > 0.0) || !self.sigma[j].is_finite() {
                return Err(Error::InvalidParameter(format!("sigma[{j}] = {} is not positive", self.sigma[j])));
            }
        }
        for (m, lat) in self.a.iter().zip(self.a_latent.iter()) {
            if *m != 0.0 && m != lat {
                return Err(Error::InvalidParameter("A entry disagrees with its latent".into()));
            }
        }
        for (m, lat) in self.b.iter().zip(self.b_latent.iter()) {
            if *m != 0.0 && m != lat {
                return Err(Error::InvalidParameter("B entry disagrees with its latent".into()));
            }
        }
        for j in 0..p {
            for k in 0..p {
                if self.a[(j, k)] != 0.0 && !mask.a_support[(j, k)] {
                    return Err(Error::InvalidParameter(format!("A[{j},{k}] outside support")));
                }
            }
            for h in 0..q {
                if self.b[(j, h)] != 0.0 && !mask.b_support[(j, h)] {
                    return Err(Error::InvalidParameter(format!("B[{j},{h}] outside support")));
                }
            }
        }
        log_abs_det_i_minus(&self.a)?;
        Ok(())
    }
}

/// `I - A`.
pub fn i_minus(a: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::identity(a.nrows(), a.ncols()) - a
}

/// `log |det(I - A)|`, or a singularity error.
pub fn log_abs_det_i_minus(a: &DMatrix<f64>) -> Result<f64> {
    let lu = i_minus(a).lu();
    let u = lu.u();
    let mut log_det = 0.0;
    for j in 0..u.nrows() {
        log_det += u[(j, j)].abs().ln();
    }
    if !(log_det >= SINGULAR_TOL.ln()) {
        return Err(Error::Singular { abs_det: log_det.exp(), tolerance: SINGULAR_TOL });
    }
    Ok(log_det)
}

/// `(I - A)^{-1}` together with `log |det(I - A)|`.
pub fn inverse_i_minus(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let log_det = log_abs_det_i_minus(a)?;
    let inv = i_minus(a)
        .try_inverse()
        .ok_or(Error::Singular { abs_det: 0.0, tolerance: SINGULAR_TOL })?;
    Ok((inv, log_det))
}

/// Mean and covariance of `y | x`.
pub fn conditional_moments(params: &SemParams, x: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if x.len() != params.q() {
        return Err(Error::Dimension(format!("x has length {}, expected {}", x.len(), params.q())));
    }
    let (inv, _) = inverse_i_minus(&params.a)?;
    let mean = &inv * (&params.b * x);
    let cov = &inv * DMatrix::from_diagonal(&params.sigma) * inv.transpose();
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok((mean, cov))
}

/// Structural residual `e = (I - A) y - B x`.
pub fn residual(params: &SemParams, y: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
    y - &params.a * y - &params.b * x
}

/// `log N(y; (I-A)^{-1} B x, (I-A)^{-1} Sigma (I-A)^{-T})`, evaluated through the
/// structural residual and the Jacobian `|det(I - A)|`.
pub fn log_likelihood(params: &SemParams, y: &DVector<f64>, x: &DVector<f64>) -> Result<f64> {
    if y.len() != params.p() || x.len() != params.q() {
        return Err(Error::Dimension(format!(
            "observation has (p, q) = ({}, {}), parameters have ({}, {})",
            y.len(),
            x.len(),
            params.p(),
            params.q()
        )));
    }
    let log_det = log_abs_det_i_minus(&params.a)?;
    Ok(log_likelihood_with_det(params, log_det, y, x))
}

/// Residual-form log likelihood with a precomputed `log |det(I - A)|`.
pub fn log_likelihood_with_det(params: &SemParams, log_det: f64, y: &DVector<f64>, x: &DVector<f64>) -> f64 {
    let p = params.p();
    let mut out = -0.5 * p as f64 * (2.0 * PI).ln() + log_det;
    for j in 0..p {
        let mut e = y[j];
        for k in 0..p {
            let a = params.a[(j, k)];
            if a != 0.0 {
                e -= a * y[k];
            }
        }
        for h in 0..params.q() {
            let b = params.b[(j, h)];
            if b != 0.0 {
                e -= b * x[h];
            }
        }
        let s = params.sigma[j];
        out -= 0.5 * (s.ln() + e * e / s);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeSign {
    Stimulatory,
    Inhibitory,
}

impl EdgeSign {
    pub fn of(coefficient: f64) -> Self {
        if coefficient > 0.0 {
            EdgeSign::Stimulatory
        } else {
            EdgeSign::Inhibitory
        }
    }
}

/// Directed part of the reciprocal graph induced by an SEM.
///
/// Keys are `(from, to)` vertex pairs. The undirected `x`-`x` edges are
/// always present and are not stored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    pub p: usize,
    pub q: usize,
    pub edges: BTreeMap<(usize, usize), EdgeSign>,
}

impl Graph {
    pub fn empty(p: usize, q: usize) -> Self {
        Self { p, q, edges: BTreeMap::new() }
    }

    pub fn contains(&self, from: usize, to: usize) -> bool {
        self.edges.contains_key(&(from, to))
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Number of edges among `y` vertices only.
    pub fn gene_edge_count(&self) -> usize {
        self.edges.keys().filter(|(from, _)| *from < self.p).count()
    }
}

/// Edge `j' -> j` for each `a[j, j'] != 0`, edge `p + h -> j` for each `b[j, h] != 0`.
pub fn induced_graph(params: &SemParams) -> Graph {
    let (p, q) = (params.p(), params.q());
    let mut graph = Graph::empty(p, q);
    for j in 0..p {
        for k in 0..p {
            let a = params.a[(j, k)];
            if a != 0.0 {
                graph.edges.insert((k, j), EdgeSign::of(a));
            }
        }
        for h in 0..q {
            let b = params.b[(j, h)];
            if b != 0.0 {
                graph.edges.insert((p + h, j), EdgeSign::of(b));
            }
        }
    }
    graph
}
