//! Clustering samplers.
//!
//! Subjects are allocated to clusters with independent networks (diagonal
//! relatedness). Two allocation models are supported: a Dirichlet-multinomial
//! over a random number of clusters with a geometric prior
//! ([`Flavor::Dm`]), and the two-parameter Chinese restaurant process
//! ([`Flavor::Py`]). The PY allocation step is Neal's auxiliary-parameter
//! Gibbs sampler (his Algorithm 8) since cluster parameters have no conjugate
//! prior; the DM step is a Gibbs scan with the mixing weights integrated out,
//! followed by a birth/death move on empty clusters.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::known::sample_header;
use super::{
    drive, finish, Checkpoint, ChainConfig, EdgeKind, Ensemble, Flavor, Kernel, PosteriorSamples, Progress, Sample,
    Tuning,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::priors::{ig_posterior, log_inverse_gamma_pdf, py_admissible, sample_inverse_gamma, HyperParams, SharedState};
use crate::sem::{apply_threshold, inverse_i_minus, SemParams, SupportMask};
use crate::suffstat::{residual_rows, stack_row, GroupCache, Scatter};

/// Auxiliary components per Pitman-Yor allocation decision.
pub const M_AUX: usize = 3;

/// Allocation vector with labels `1..=k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub s: Vec<usize>,
    pub k: usize,
}

impl Partition {
    /// Canonical form of any labelling: labels renumbered `1, 2, ...` in order of first appearance.
    pub fn canonical(labels: &[usize]) -> Self {
        let s = relabel_canonical(labels);
        let k = s.iter().copied().max().unwrap_or(0);
        Self { s, k }
    }

    pub fn n(&self) -> usize {
        self.s.len()
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.k];
        for &l in &self.s {
            c[l - 1] += 1;
        }
        c
    }

    pub fn same_cluster(&self, i: usize, j: usize) -> bool {
        self.s[i] == self.s[j]
    }
}

/// Renumbers labels `1, 2, ...` in order of first appearance.
pub fn relabel_canonical(labels: &[usize]) -> Vec<usize> {
    let mut map: Vec<(usize, usize)> = Vec::new();
    labels
        .iter()
        .map(|&l| match map.iter().find(|(from, _)| *from == l) {
            Some(&(_, to)) => to,
            None => {
                let to = map.len() + 1;
                map.push((l, to));
                to
            }
        })
        .collect()
}

/// Sequential allocation probabilities of the two-parameter CRP: existing
/// clusters with counts `n_k` get weight `n_k - d`, a new cluster `alpha + d K`.
pub fn crp_allocation_probs(counts: &[usize], alpha: f64, d: f64) -> Result<Vec<f64>> {
    if !py_admissible(alpha, d) {
        return Err(Error::InvalidParameter(format!("Pitman-Yor parameters ({alpha}, {d}) are not admissible")));
    }
    if counts.contains(&0) {
        return Err(Error::InvalidParameter("cluster counts must be positive".into()));
    }
    if counts.is_empty() {
        return Ok(vec![1.0]);
    }
    let mut w: Vec<f64> = counts.iter().map(|&c| c as f64 - d).collect();
    w.push((alpha + d * counts.len() as f64).max(0.0));
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("all allocation weights are zero".into()));
    }
    Ok(w.into_iter().map(|v| v / total).collect())
}

/// Log exchangeable partition probability of the two-parameter CRP.
pub fn py_log_eppf(counts: &[usize], alpha: f64, d: f64) -> f64 {
    let n: usize = counts.iter().sum();
    let mut out = 0.0;
    for k in 1..counts.len() {
        out += (alpha + k as f64 * d).ln();
    }
    for i in 1..n {
        out -= (alpha + i as f64).ln();
    }
    for &c in counts {
        for j in 1..c {
            out += (j as f64 - d).ln();
        }
    }
    out
}

/// Log probability of labelled allocations with `counts` (empty clusters
/// included) under a symmetric Dirichlet(eta) on the mixing weights.
pub fn dm_log_allocation_prior(counts: &[usize], eta: f64) -> f64 {
    let k = counts.len() as f64;
    let n: usize = counts.iter().sum();
    let mut out = ln_gamma(k * eta) - ln_gamma(k * eta + n as f64);
    for &c in counts {
        out += ln_gamma(c as f64 + eta) - ln_gamma(eta);
    }
    out
}

/// `log P(K = k)` for `K ~ Geometric(rho)` on `1, 2, ...`.
pub fn geometric_log_prior(k: usize, rho: f64) -> f64 {
    rho.ln() + (k as f64 - 1.0) * (1.0 - rho).ln()
}

/// Log acceptance ratio for adding one empty cluster to a state with `k`
/// clusters of which `empty` are empty, `n` subjects in total. The new
/// cluster's parameters are drawn from their prior and cancel; the new
/// cluster's position is uniform over `k + 1` slots and the reverse death
/// move picks uniformly among the `empty + 1` empty clusters.
pub fn dm_birth_log_ratio(k: usize, empty: usize, n: usize, eta: f64, rho: f64) -> f64 {
    let (kf, nf) = (k as f64, n as f64);
    (1.0 - rho).ln() + ln_gamma((kf + 1.0) * eta) - ln_gamma((kf + 1.0) * eta + nf) - ln_gamma(kf * eta)
        + ln_gamma(kf * eta + nf)
        + (kf + 1.0).ln()
        - (empty as f64 + 1.0).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DimensionMove {
    Birth { position: usize },
    Death { index: usize },
}

/// Proposes and tests a birth or death (probability one half each) given the
/// current cluster counts. Returns the accepted move, if any.
pub fn dm_dimension_step<R: Rng + ?Sized>(counts: &[usize], eta: f64, rho: f64, rng: &mut R) -> Option<DimensionMove> {
    let k = counts.len();
    let n: usize = counts.iter().sum();
    let empties: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
    if rng.random_bool(0.5) {
        let position = rng.random_range(0..=k);
        let log_a = dm_birth_log_ratio(k, empties.len(), n, eta, rho);
        super::mh_accept(log_a, rng).then_some(DimensionMove::Birth { position })
    } else {
        if empties.is_empty() {
            return None;
        }
        let index = empties[rng.random_range(0..empties.len())];
        let log_a = -dm_birth_log_ratio(k - 1, empties.len() - 1, n, eta, rho);
        super::mh_accept(log_a, rng).then_some(DimensionMove::Death { index })
    }
}

/// Samples an index with probability proportional to `exp(log_w)`.
pub fn sample_log_weights<R: Rng + ?Sized>(log_w: &[f64], rng: &mut R) -> usize {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return rng.random_range(0..log_w.len());
    }
    let w: Vec<f64> = log_w.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, wi) in w.iter().enumerate() {
        if u < *wi {
            return i;
        }
        u -= wi;
    }
    w.iter().rposition(|v| *v > 0.0).unwrap_or(0)
}

/// Per-subject log likelihood under one cluster's parameters.
#[derive(Debug, Clone)]
pub struct SubjectLik {
    r: DMatrix<f64>,
    constant: f64,
    inv_sigma: Vec<f64>,
}

impl SubjectLik {
    /// `None` when `I - A` is singular.
    pub fn new(params: &SemParams) -> Option<Self> {
        let (_, log_det) = inverse_i_minus(&params.a).ok()?;
        let p = params.p() as f64;
        let constant = -0.5 * p * (2.0 * PI).ln() + log_det - 0.5 * params.sigma.iter().map(|s| s.ln()).sum::<f64>();
        Some(Self { r: residual_rows(params), constant, inv_sigma: params.sigma.iter().map(|s| 1.0 / s).collect() })
    }

    pub fn eval(&self, z: &DVector<f64>) -> f64 {
        let mut out = self.constant;
        for j in 0..self.r.nrows() {
            let e = self.r.row(j).transpose().dot(z);
            out -= 0.5 * e * e * self.inv_sigma[j];
        }
        out
    }
}

fn eval_opt(lik: &Option<SubjectLik>, z: &DVector<f64>) -> f64 {
    lik.as_ref().map_or(f64::NEG_INFINITY, |l| l.eval(z))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterState {
    /// Zero-based cluster index of each subject.
    pub alloc: Vec<usize>,
    pub params: Vec<SemParams>,
    /// Shared parameters; `omega` is diagonal with one entry per cluster.
    pub shared: SharedState,
}

impl ClusterState {
    /// Uniformly random allocation to at most `clusters` clusters (compacted),
    /// zero latents and unit variances.
    pub fn initial<R: Rng + ?Sized>(
        n: usize,
        mask: &SupportMask,
        hyper: &HyperParams,
        cfg: &ChainConfig,
        rng: &mut R,
    ) -> Self {
        let k0 = cfg.init_clusters.min(n).max(1);
        let raw: Vec<usize> = (0..n).map(|_| rng.random_range(0..k0)).collect();
        let alloc: Vec<usize> = relabel_canonical(&raw).into_iter().map(|l| l - 1).collect();
        Self::with_alloc(alloc, mask, hyper, cfg)
    }

    /// Given compacted zero-based allocation, zero latents and unit variances.
    pub fn with_alloc(alloc: Vec<usize>, mask: &SupportMask, hyper: &HyperParams, cfg: &ChainConfig) -> Self {
        let k = alloc.iter().copied().max().map_or(1, |m| m + 1);
        let (p, q) = (mask.p(), mask.q());
        let t0 = cfg.fix_thresholds.unwrap_or(cfg.init_threshold * hyper.b_t);
        Self { alloc, params: vec![SemParams::zeros(p, q); k], shared: SharedState::new(k, p, q, t0) }
    }
}

/// Draws one cluster's parameters and relatedness scale from the prior given
/// the shared thresholds and variance components.
pub fn draw_cluster_prior<R: Rng + ?Sized>(
    ens: &Ensemble,
    rng: &mut R,
) -> (SemParams, f64) {
    let h = &ens.hyper;
    let omega_k = sample_inverse_gamma(h.omega_shape(), h.omega_scale(), rng);
    let mut prm = SemParams::zeros(ens.mask.p(), ens.mask.q());
    for e in &ens.edges {
        let z: f64 = StandardNormal.sample(rng);
        let v = z * (ens.scale(e) * omega_k).sqrt();
        let value = apply_threshold(v, ens.threshold(e));
        match e.kind {
            EdgeKind::A => {
                prm.a_latent[(e.row, e.col)] = v;
                prm.a[(e.row, e.col)] = value;
            }
            EdgeKind::B => {
                prm.b_latent[(e.row, e.col)] = v;
                prm.b[(e.row, e.col)] = value;
            }
        }
    }
    for s in prm.sigma.iter_mut() {
        *s = sample_inverse_gamma(h.a_sigma, h.b_sigma, rng);
    }
    (prm, omega_k)
}

pub struct ClusterSampler {
    pub flavor: Flavor,
    pub ens: Ensemble,
    pub tuning: Tuning,
    pub alloc: Vec<usize>,
    pub exec: Exec,
    rows: Vec<DVector<f64>>,
    fix_thresholds: bool,
}

impl ClusterSampler {
    pub fn new(
        rows: Vec<DVector<f64>>,
        mask: SupportMask,
        hyper: HyperParams,
        cfg: &ChainConfig,
        flavor: Flavor,
        state: ClusterState,
    ) -> Result<Self> {
        if flavor == Flavor::Known {
            return Err(Error::Config("clustering needs the dm or py flavor".into()));
        }
        mask.validate()?;
        HyperParams { nu: None, phi: None, ..hyper.clone() }.validate(1)?;
        cfg.validate()?;
        let dim = mask.p() + mask.q();
        if let Some(z) = rows.iter().find(|z| z.len() != dim) {
            return Err(Error::Dimension(format!("row of length {} but p + q = {dim}", z.len())));
        }
        let k = state.params.len();
        if state.alloc.len() != rows.len() || state.alloc.iter().any(|&c| c >= k) || state.shared.omega.nrows() != k {
            return Err(Error::Dimension("allocation does not match the cluster parameters".into()));
        }
        for prm in &state.params {
            prm.validate(&mask)?;
        }
        let caches = build_caches(&rows, &state.alloc, &state.params)?;
        let b_t = hyper.b_t;
        let ens = Ensemble::new(mask, hyper, state.params, state.shared, caches)?;
        let tuning = Tuning::new(ens.edges.len(), cfg, b_t);
        let mut out = Self {
            flavor,
            ens,
            tuning,
            alloc: state.alloc,
            exec: Exec::default(),
            rows,
            fix_thresholds: cfg.fix_thresholds.is_some(),
        };
        if flavor == Flavor::Py {
            out.drop_empty_clusters()?;
        }
        Ok(out)
    }

    pub fn from_dataset<R: Rng + ?Sized>(
        data: &Dataset,
        mask: SupportMask,
        hyper: HyperParams,
        cfg: &ChainConfig,
        flavor: Flavor,
        rng: &mut R,
    ) -> Result<Self> {
        if data.n() < 2 {
            return Err(Error::Data { path: "<dataset>".into(), message: "clustering needs at least two subjects".into() });
        }
        if mask.p() != data.p() || mask.q() != data.q() {
            return Err(Error::Dimension(format!(
                "support mask is {}x{}, data have p = {}, q = {}",
                mask.p(),
                mask.q(),
                data.p(),
                data.q()
            )));
        }
        let rows = stacked_rows(data);
        let alloc = cem_partition(&rows, data.p(), cfg.init_clusters, CEM_RESTARTS, rng);
        let state = ClusterState::with_alloc(alloc, &mask, &hyper, cfg);
        let mut out = Self::new(rows, mask, hyper, cfg, flavor, state)?;
        // Identical starting parameters would make the first allocation scan
        // forget the initial partition.
        for _ in 0..INIT_PARAM_SWEEPS {
            out.update_parameters(rng)?;
        }
        Ok(out)
    }

    pub fn k(&self) -> usize {
        self.ens.k()
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.k()];
        for &a in &self.alloc {
            c[a] += 1;
        }
        c
    }

    pub fn state_snapshot(&self) -> ClusterState {
        ClusterState { alloc: self.alloc.clone(), params: self.ens.params.clone(), shared: self.ens.shared.clone() }
    }

    fn omega_diag(&self) -> Vec<f64> {
        (0..self.k()).map(|c| self.ens.shared.omega[(c, c)]).collect()
    }

    /// Installs new cluster parameters and rebuilds every cache.
    fn install(&mut self, params: Vec<SemParams>, omegas: &[f64]) -> Result<()> {
        self.ens.caches = build_caches(&self.rows, &self.alloc, &params)?;
        self.ens.params = params;
        self.ens.set_omega(DMatrix::from_diagonal(&DVector::from_row_slice(omegas)))
    }

    fn drop_empty_clusters(&mut self) -> Result<()> {
        let counts = self.counts();
        if !counts.contains(&0) {
            return Ok(());
        }
        let keep: Vec<usize> = (0..self.k()).filter(|&c| counts[c] > 0).collect();
        let mut new_index = vec![usize::MAX; self.k()];
        for (i, &c) in keep.iter().enumerate() {
            new_index[c] = i;
        }
        for a in &mut self.alloc {
            *a = new_index[*a];
        }
        let omegas = self.omega_diag();
        let params = keep.iter().map(|&c| self.ens.params[c].clone()).collect();
        let omegas: Vec<f64> = keep.iter().map(|&c| omegas[c]).collect();
        self.install(params, &omegas)
    }

    fn lik_matrix(&self, liks: &[Option<SubjectLik>]) -> Vec<Vec<f64>> {
        let rows = &self.rows;
        self.exec.map_range(rows.len(), |i| liks.iter().map(|l| eval_opt(l, &rows[i])).collect())
    }

    fn lik_column(&self, lik: &Option<SubjectLik>) -> Vec<f64> {
        let rows = &self.rows;
        self.exec.map_range(rows.len(), |i| eval_opt(lik, &rows[i]))
    }

    /// One Gibbs scan over allocations under the two-parameter CRP, with `M_AUX`
    /// auxiliary prior draws standing in for a new cluster.
    pub fn update_allocations_py<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let (alpha, d) = (self.ens.hyper.alpha, self.ens.hyper.d);
        let mut omegas = self.omega_diag();
        let mut params = std::mem::take(&mut self.ens.params);
        let mut liks: Vec<Option<SubjectLik>> = params.iter().map(SubjectLik::new).collect();
        let mut ll = self.lik_matrix(&liks);
        let mut counts = vec![0usize; params.len()];
        for &a in &self.alloc {
            counts[a] += 1;
        }
        for i in 0..self.n() {
            let c = self.alloc[i];
            counts[c] -= 1;
            let mut aux: Vec<(SemParams, f64, Option<SubjectLik>)> = Vec::with_capacity(M_AUX);
            if counts[c] == 0 {
                // The emptied cluster's parameters become the first auxiliary component.
                counts.remove(c);
                aux.push((params.remove(c), omegas.remove(c), liks.remove(c)));
                for row in &mut ll {
                    row.remove(c);
                }
                for a in &mut self.alloc {
                    if *a > c {
                        *a -= 1;
                    }
                }
            }
            while aux.len() < M_AUX {
                let (prm, om) = draw_cluster_prior(&self.ens, rng);
                let lik = SubjectLik::new(&prm);
                aux.push((prm, om, lik));
            }
            let k = counts.len();
            let z = &self.rows[i];
            let new_w = ((alpha + d * k as f64) / M_AUX as f64).ln();
            let mut log_w: Vec<f64> = (0..k).map(|c| (counts[c] as f64 - d).ln() + ll[i][c]).collect();
            log_w.extend(aux.iter().map(|(_, _, lik)| new_w + eval_opt(lik, z)));
            let pick = sample_log_weights(&log_w, rng);
            if pick < k {
                self.alloc[i] = pick;
                counts[pick] += 1;
            } else {
                let (prm, om, lik) = aux.swap_remove(pick - k);
                let col = self.lik_column(&lik);
                for (row, v) in ll.iter_mut().zip(col) {
                    row.push(v);
                }
                params.push(prm);
                omegas.push(om);
                liks.push(lik);
                counts.push(1);
                self.alloc[i] = k;
            }
        }
        self.install(params, &omegas)
    }

    /// Gibbs scan over allocations with the Dirichlet weights integrated out;
    /// the number of clusters (empty ones included) is held fixed.
    pub fn gibbs_scan_dm<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let eta = self.ens.hyper.eta;
        let liks: Vec<Option<SubjectLik>> = self.ens.params.iter().map(SubjectLik::new).collect();
        let ll = self.lik_matrix(&liks);
        let mut counts = self.counts();
        for i in 0..self.n() {
            counts[self.alloc[i]] -= 1;
            let log_w: Vec<f64> = (0..counts.len()).map(|c| (counts[c] as f64 + eta).ln() + ll[i][c]).collect();
            let pick = sample_log_weights(&log_w, rng);
            self.alloc[i] = pick;
            counts[pick] += 1;
        }
        self.ens.caches = build_caches(&self.rows, &self.alloc, &self.ens.params)?;
        Ok(())
    }

    /// Birth/death move on the number of clusters.
    pub fn update_k_dm<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let counts = self.counts();
        let mv = dm_dimension_step(&counts, self.ens.hyper.eta, self.ens.hyper.rho, rng);
        self.tuning.record_dimension(mv.is_some());
        let mut params = self.ens.params.clone();
        let mut omegas = self.omega_diag();
        match mv {
            None => return Ok(()),
            Some(DimensionMove::Birth { position }) => {
                let (prm, om) = draw_cluster_prior(&self.ens, rng);
                params.insert(position, prm);
                omegas.insert(position, om);
                for a in &mut self.alloc {
                    if *a >= position {
                        *a += 1;
                    }
                }
            }
            Some(DimensionMove::Death { index }) => {
                params.remove(index);
                omegas.remove(index);
                for a in &mut self.alloc {
                    if *a > index {
                        *a -= 1;
                    }
                }
            }
        }
        self.install(params, &omegas)
    }

    pub fn update_allocations_dm<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        self.gibbs_scan_dm(rng)?;
        self.update_k_dm(rng)
    }

    /// Gibbs draw of each cluster's diagonal relatedness entry.
    pub fn update_omega_diag<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let h = &self.ens.hyper;
        let n_edges = self.ens.edges.len() as f64;
        let mut omegas = Vec::with_capacity(self.k());
        for c in 0..self.k() {
            let sq: f64 = self
                .ens
                .edges
                .iter()
                .map(|e| self.ens.latent(c, e).powi(2) / self.ens.scale(e))
                .sum();
            let (a, b) = ig_posterior(h.omega_shape(), h.omega_scale(), n_edges, sq);
            omegas.push(sample_inverse_gamma(a, b, rng));
        }
        self.ens.set_omega(DMatrix::from_diagonal(&DVector::from_vec(omegas)))
    }

    pub fn log_posterior(&self) -> f64 {
        let h = &self.ens.hyper;
        let counts = self.counts();
        let mut out = self.ens.loglik() + self.ens.log_prior_common();
        out += self.omega_diag().iter().map(|&o| log_inverse_gamma_pdf(o, h.omega_shape(), h.omega_scale())).sum::<f64>();
        out += match self.flavor {
            Flavor::Py => py_log_eppf(&counts, h.alpha, h.d),
            _ => geometric_log_prior(counts.len(), h.rho) + dm_log_allocation_prior(&counts, h.eta),
        };
        out
    }

    /// Allocation update, then within-cluster coefficient, threshold, scale and variance updates.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        match self.flavor {
            Flavor::Py => self.update_allocations_py(rng)?,
            _ => self.update_allocations_dm(rng)?,
        }
        self.update_parameters(rng)
    }

    /// Coefficients, thresholds, relatedness and variances given the allocation.
    pub fn update_parameters<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        for ei in 0..self.ens.edges.len() {
            self.ens.update_coefficient_vector(ei, &mut self.tuning, rng);
        }
        if !self.fix_thresholds {
            self.ens.update_thresholds(&mut self.tuning, rng);
        }
        self.update_omega_diag(rng)?;
        self.ens.update_variances(rng);
        self.ens.refresh()
    }

    /// Cluster order used in samples: first appearance in the allocation, then empty clusters.
    pub fn canonical_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = Vec::with_capacity(self.k());
        for &a in &self.alloc {
            if !order.contains(&a) {
                order.push(a);
            }
        }
        for c in 0..self.k() {
            if !order.contains(&c) {
                order.push(c);
            }
        }
        order
    }
}

impl Kernel for ClusterSampler {
    type State = ClusterState;

    fn sweep(&mut self, rng: &mut ChaCha8Rng) -> Result<()> {
        self.step(rng)
    }

    fn log_posterior(&self) -> f64 {
        ClusterSampler::log_posterior(self)
    }

    fn sample(&self, iter: usize, log_post: f64) -> Sample {
        let order = self.canonical_order();
        let k = self.k();
        let draws = self.ens.draws();
        let mut rank = vec![0; k];
        for (new, &old) in order.iter().enumerate() {
            rank[old] = new;
        }
        let mut omega = vec![0.0; k * k];
        for (new, &old) in order.iter().enumerate() {
            omega[new * k + new] = self.ens.shared.omega[(old, old)];
        }
        Sample {
            iter,
            log_post,
            k,
            groups: order.iter().map(|&c| draws[c].clone()).collect(),
            omega,
            alloc: Some(self.alloc.iter().map(|&a| rank[a] + 1).collect()),
        }
    }

    fn tuning(&self) -> &Tuning {
        &self.tuning
    }

    fn adapt(&mut self) {
        self.tuning.adapt(self.ens.hyper.b_t, 1);
    }

    fn state(&self) -> ClusterState {
        self.state_snapshot()
    }
}

const CEM_RESTARTS: usize = 5;
const CEM_MAX_ITER: usize = 50;
const INIT_PARAM_SWEEPS: usize = 50;

/// Starting partition from hard classification EM on per-cluster reduced-form
/// regressions `y | x ~ N(Pi x, Sigma)`, best of `restarts` random starts with
/// at most `k0` clusters. Ridge and covariance shrinkage keep small clusters
/// well posed. Labels are compacted in order of first appearance.
pub fn cem_partition<R: Rng + ?Sized>(rows: &[DVector<f64>], p: usize, k0: usize, restarts: usize, rng: &mut R) -> Vec<usize> {
    let n = rows.len();
    let k0 = k0.min(n).max(1);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..restarts.max(1) {
        let mut alloc: Vec<usize> = (0..n).map(|_| rng.random_range(0..k0)).collect();
        let mut total = f64::NEG_INFINITY;
        for _ in 0..CEM_MAX_ITER {
            let fits: Vec<Option<ReducedForm>> = (0..k0).map(|c| ReducedForm::fit(rows, &alloc, c, p)).collect();
            let mut next = alloc.clone();
            total = 0.0;
            for (i, z) in rows.iter().enumerate() {
                let (c, s) = fits
                    .iter()
                    .enumerate()
                    .filter_map(|(c, f)| f.as_ref().map(|f| (c, f.score(z, n))))
                    .fold((alloc[i], f64::NEG_INFINITY), |acc, cs| if cs.1 > acc.1 { cs } else { acc });
                next[i] = c;
                total += s;
            }
            if next == alloc {
                break;
            }
            alloc = next;
        }
        if best.as_ref().is_none_or(|(b, _)| total > *b) {
            best = Some((total, alloc));
        }
    }
    let alloc = best.map(|(_, a)| a).unwrap_or_else(|| vec![0; n]);
    relabel_canonical(&alloc).into_iter().map(|l| l - 1).collect()
}

struct ReducedForm {
    pi: DMatrix<f64>,
    sigma_inv: DMatrix<f64>,
    log_det: f64,
    log_weight: f64,
}

impl ReducedForm {
    fn fit(rows: &[DVector<f64>], alloc: &[usize], c: usize, p: usize) -> Option<Self> {
        let members: Vec<&DVector<f64>> = rows.iter().zip(alloc).filter(|(_, &a)| a == c).map(|(z, _)| z).collect();
        if members.is_empty() {
            return None;
        }
        let q = members[0].len() - p;
        let m = members.len();
        let y = DMatrix::from_fn(m, p, |i, j| members[i][j]);
        let x = DMatrix::from_fn(m, q, |i, j| members[i][p + j]);
        let xtx = x.transpose() * &x + DMatrix::identity(q, q);
        let pi = xtx.cholesky()?.solve(&(x.transpose() * &y));
        let r = &y - &x * &pi;
        let sigma = (r.transpose() * &r + DMatrix::identity(p, p)) / (m as f64 + 1.0);
        let ch = sigma.cholesky()?;
        let log_det = 2.0 * ch.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Some(Self { pi, sigma_inv: ch.inverse(), log_det, log_weight: (m as f64).ln() })
    }

    fn score(&self, z: &DVector<f64>, n: usize) -> f64 {
        let p = self.pi.ncols();
        let y = z.rows(0, p);
        let x = z.rows(p, z.len() - p);
        let r = y - self.pi.transpose() * x;
        self.log_weight - (n as f64).ln() - 0.5 * self.log_det - 0.5 * (r.transpose() * &self.sigma_inv * &r)[(0, 0)]
    }
}

/// Stacked `(y_i, x_i)` rows.
pub fn stacked_rows(data: &Dataset) -> Vec<DVector<f64>> {
    (0..data.n())
        .map(|i| {
            let mut z = DVector::zeros(data.p() + data.q());
            stack_row(&data.y, &data.x, i, &mut z);
            z
        })
        .collect()
}

fn build_caches(rows: &[DVector<f64>], alloc: &[usize], params: &[SemParams]) -> Result<Vec<GroupCache>> {
    let dim = rows.first().map_or(0, |z| z.len());
    let mut scatters = vec![Scatter::zeros(dim); params.len()];
    for (z, &a) in rows.iter().zip(alloc) {
        scatters[a].add(z);
    }
    scatters.into_iter().zip(params).map(|(s, prm)| GroupCache::new(s, prm)).collect()
}

/// Runs one clustering chain to completion.
pub fn run_cluster_chain(
    data: &Dataset,
    mask: &SupportMask,
    hyper: &HyperParams,
    cfg: &ChainConfig,
    flavor: Flavor,
) -> Result<PosteriorSamples> {
    run_cluster_chain_with(data, mask, hyper, cfg, flavor, 0, "", None)
}

#[allow(clippy::too_many_arguments)]
pub fn run_cluster_chain_with(
    data: &Dataset,
    mask: &SupportMask,
    hyper: &HyperParams,
    cfg: &ChainConfig,
    flavor: Flavor,
    chain: usize,
    config_hash: &str,
    checkpoint: Option<&Path>,
) -> Result<PosteriorSamples> {
    let mut progress = Progress::new(cfg.seed, chain);
    let mut sampler = ClusterSampler::from_dataset(data, mask.clone(), hyper.clone(), cfg, flavor, &mut progress.rng)?;
    let header = sample_header(flavor, data, 0, cfg, chain, config_hash);
    drive(&mut sampler, &mut progress, cfg, &header, checkpoint)?;
    Ok(finish(&sampler, progress, header))
}

pub fn resume_cluster_chain(
    data: &Dataset,
    mask: &SupportMask,
    hyper: &HyperParams,
    cfg: &ChainConfig,
    ck: Checkpoint<ClusterState>,
    checkpoint: Option<&Path>,
) -> Result<PosteriorSamples> {
    let flavor = ck.header.flavor;
    let mut sampler = ClusterSampler::new(stacked_rows(data), mask.clone(), hyper.clone(), cfg, flavor, ck.state)?;
    sampler.tuning = ck.tuning;
    let mut progress = ck.progress;
    drive(&mut sampler, &mut progress, cfg, &ck.header, checkpoint)?;
    Ok(finish(&sampler, progress, ck.header))
}
