//! Posterior samplers.
//!
//! [`Ensemble`] holds `K` SEMs tied together by shared thresholds, variance
//! components and a relatedness matrix, and implements the updates common to
//! the known-group sampler ([`known`]) and the clustering samplers
//! ([`cluster`]): joint random-walk Metropolis on each edge's latent K-vector,
//! reflected random-walk Metropolis on each threshold, and conjugate Gibbs
//! draws of every variance.

pub mod cluster;
pub mod known;
pub mod samples;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::priors::{
    ig_posterior, log_inverse_gamma_pdf, log_prior_coeff_with, sample_inverse_gamma, HyperParams, PdFactor,
    SharedState,
};
use crate::sem::{apply_threshold, SemParams, SupportMask};
use crate::suffstat::{GroupCache, Proposal};

pub use samples::{AcceptanceSummary, GroupDraw, PosteriorSamples, Sample, SampleHeader};

/// Acceptance rate band targeted while adapting step sizes.
const TARGET_LOW: f64 = 0.2;
const TARGET_HIGH: f64 = 0.4;
const MAX_COEFF_STEP: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    Known,
    Dm,
    Py,
}

impl std::str::FromStr for Flavor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "known" => Ok(Flavor::Known),
            "dm" => Ok(Flavor::Dm),
            "py" => Ok(Flavor::Py),
            other => Err(Error::Config(format!("unknown flavor {other:?} (expected known, dm or py)"))),
        }
    }
}

/// Iteration schedule and proposal tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub mh_step_coeff: f64,
    pub mh_step_thresh: f64,
    /// Degrees of freedom of the inverse-Wishart proposal for the relatedness
    /// matrix; larger is a smaller step.
    pub mh_step_omega: f64,
    pub seed: u64,
    /// Adapt step sizes during burn-in.
    pub adapt: bool,
    pub adapt_interval: usize,
    pub checkpoint_every: usize,
    /// Initial thresholds as a fraction of `b_t`.
    pub init_threshold: f64,
    /// Hold the relatedness matrix at the identity.
    pub fix_omega: bool,
    /// Hold every threshold at this value.
    pub fix_thresholds: Option<f64>,
    /// Upper bound on the number of clusters in the initial partition of a clustering run.
    pub init_clusters: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ChainConfig {
    /// 100k iterations, half discarded, every 5th draw kept.
    pub fn long() -> Self {
        Self { iterations: 100_000, burn_in: 50_000, ..Self::desk() }
    }

    /// 20k iterations, half discarded, every 5th draw kept.
    pub fn desk() -> Self {
        Self {
            iterations: 20_000,
            burn_in: 10_000,
            thin: 5,
            mh_step_coeff: 0.1,
            mh_step_thresh: 0.1,
            mh_step_omega: 50.0,
            seed: 1,
            adapt: true,
            adapt_interval: 50,
            checkpoint_every: 1000,
            init_threshold: 0.05,
            fix_omega: false,
            fix_thresholds: None,
            init_clusters: 4,
        }
    }

    pub fn with_schedule(mut self, iterations: usize, burn_in: usize, thin: usize) -> Self {
        self.iterations = iterations;
        self.burn_in = burn_in;
        self.thin = thin;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.thin == 0 {
            return Err(Error::Config("iterations and thin must be positive".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn_in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if !(self.mh_step_coeff > 0.0 && self.mh_step_thresh > 0.0 && self.mh_step_omega > 0.0) {
            return Err(Error::Config("proposal step sizes must be positive".into()));
        }
        if self.adapt_interval == 0 || self.checkpoint_every == 0 {
            return Err(Error::Config("adapt_interval and checkpoint_every must be positive".into()));
        }
        if self.init_clusters == 0 {
            return Err(Error::Config("init_clusters must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.init_threshold) {
            return Err(Error::Config("init_threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Whether iteration `it` (zero-based) is retained.
    pub fn is_retained(&self, it: usize) -> bool {
        it >= self.burn_in && (it - self.burn_in) % self.thin == 0
    }

    pub fn retained_count(&self) -> usize {
        (self.iterations - self.burn_in).div_ceil(self.thin)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counter {
    pub accepted: u64,
    pub proposed: u64,
}

impl Counter {
    pub fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += accepted as u64;
    }

    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    pub fn merge(&mut self, other: Counter) {
        self.accepted += other.accepted;
        self.proposed += other.proposed;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    A,
    B,
}

/// A supported coefficient position: `A[row, col]` or `B[row, col]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub kind: EdgeKind,
    pub row: usize,
    pub col: usize,
}

/// Every supported position, `A` entries first, each row-major.
pub fn edges_from_mask(mask: &SupportMask) -> Vec<Edge> {
    let (p, q) = (mask.p(), mask.q());
    let mut out = Vec::new();
    for row in 0..p {
        for col in 0..p {
            if mask.a_support[(row, col)] {
                out.push(Edge { kind: EdgeKind::A, row, col });
            }
        }
    }
    for row in 0..p {
        for col in 0..q {
            if mask.b_support[(row, col)] {
                out.push(Edge { kind: EdgeKind::B, row, col });
            }
        }
    }
    out
}

/// Step sizes with windowed and cumulative acceptance counters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tuning {
    pub coeff_step: Vec<f64>,
    pub thresh_step: Vec<f64>,
    pub omega_dof: f64,
    coeff_window: Vec<Counter>,
    thresh_window: Vec<Counter>,
    omega_window: Counter,
    pub totals: AcceptanceSummary,
}

impl Tuning {
    pub fn new(n_edges: usize, cfg: &ChainConfig, b_t: f64) -> Self {
        Self {
            coeff_step: vec![cfg.mh_step_coeff; n_edges],
            thresh_step: vec![(cfg.mh_step_thresh).min(b_t); n_edges],
            omega_dof: cfg.mh_step_omega,
            coeff_window: vec![Counter::default(); n_edges],
            thresh_window: vec![Counter::default(); n_edges],
            omega_window: Counter::default(),
            totals: AcceptanceSummary::default(),
        }
    }

    /// Rescales every step toward the target acceptance band and clears the windows.
    pub fn adapt(&mut self, b_t: f64, k: usize) {
        fn factor(c: &Counter) -> f64 {
            if c.proposed < 5 {
                return 1.0;
            }
            let r = c.rate();
            if r < TARGET_LOW {
                0.8
            } else if r > TARGET_HIGH {
                1.25
            } else {
                1.0
            }
        }
        for (s, c) in self.coeff_step.iter_mut().zip(&mut self.coeff_window) {
            *s = (*s * factor(c)).clamp(1e-4, MAX_COEFF_STEP);
            *c = Counter::default();
        }
        for (s, c) in self.thresh_step.iter_mut().zip(&mut self.thresh_window) {
            *s = (*s * factor(c)).clamp(1e-5 * b_t, b_t);
            *c = Counter::default();
        }
        let f = factor(&self.omega_window);
        if f != 1.0 {
            self.omega_dof = (self.omega_dof / f).clamp(k as f64 + 2.0, 1e6);
        }
        self.omega_window = Counter::default();
    }

    pub(crate) fn record_coeff(&mut self, e: usize, acc: bool) {
        self.coeff_window[e].record(acc);
        self.totals.coefficient.record(acc);
    }

    pub(crate) fn record_thresh(&mut self, e: usize, acc: bool) {
        self.thresh_window[e].record(acc);
        self.totals.threshold.record(acc);
    }

    pub(crate) fn record_omega(&mut self, acc: bool) {
        self.omega_window.record(acc);
        self.totals.omega.record(acc);
    }

    pub(crate) fn record_dimension(&mut self, acc: bool) {
        self.totals.dimension.record(acc);
    }
}

/// Metropolis acceptance test on the log scale.
#[inline]
pub(crate) fn mh_accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio >= 0.0 {
        return true;
    }
    if !log_ratio.is_finite() {
        return false;
    }
    let u: f64 = rng.random();
    u.ln() < log_ratio
}

/// Folds `x` into `[0, hi]` by reflection at both ends.
pub fn reflect(x: f64, hi: f64) -> f64 {
    let period = 2.0 * hi;
    let mut y = x.rem_euclid(period);
    if y > hi {
        y = period - y;
    }
    y
}

/// `K` coupled SEMs and their shared parameters.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub mask: SupportMask,
    pub edges: Vec<Edge>,
    pub hyper: HyperParams,
    pub params: Vec<SemParams>,
    pub shared: SharedState,
    pub caches: Vec<GroupCache>,
    pub omega_f: PdFactor,
}

impl Ensemble {
    pub fn new(
        mask: SupportMask,
        hyper: HyperParams,
        params: Vec<SemParams>,
        shared: SharedState,
        caches: Vec<GroupCache>,
    ) -> Result<Self> {
        let omega_f = PdFactor::new(&shared.omega)?;
        Ok(Self { edges: edges_from_mask(&mask), mask, hyper, params, shared, caches, omega_f })
    }

    pub fn k(&self) -> usize {
        self.params.len()
    }

    pub fn threshold(&self, e: &Edge) -> f64 {
        match e.kind {
            EdgeKind::A => self.shared.t_a[(e.row, e.col)],
            EdgeKind::B => self.shared.t_b[(e.row, e.col)],
        }
    }

    fn threshold_mut(&mut self, e: &Edge) -> &mut f64 {
        match e.kind {
            EdgeKind::A => &mut self.shared.t_a[(e.row, e.col)],
            EdgeKind::B => &mut self.shared.t_b[(e.row, e.col)],
        }
    }

    pub fn scale(&self, e: &Edge) -> f64 {
        match e.kind {
            EdgeKind::A => self.shared.tau[(e.row, e.col)],
            EdgeKind::B => self.shared.lambda[(e.row, e.col)],
        }
    }

    pub fn latent(&self, g: usize, e: &Edge) -> f64 {
        match e.kind {
            EdgeKind::A => self.params[g].a_latent[(e.row, e.col)],
            EdgeKind::B => self.params[g].b_latent[(e.row, e.col)],
        }
    }

    pub fn coefficient(&self, g: usize, e: &Edge) -> f64 {
        match e.kind {
            EdgeKind::A => self.params[g].a[(e.row, e.col)],
            EdgeKind::B => self.params[g].b[(e.row, e.col)],
        }
    }

    pub fn latent_vector(&self, e: &Edge) -> Vec<f64> {
        (0..self.k()).map(|g| self.latent(g, e)).collect()
    }

    fn set_latent(&mut self, g: usize, e: &Edge, latent: f64, value: f64) {
        let prm = &mut self.params[g];
        match e.kind {
            EdgeKind::A => {
                prm.a_latent[(e.row, e.col)] = latent;
                prm.a[(e.row, e.col)] = value;
            }
            EdgeKind::B => {
                prm.b_latent[(e.row, e.col)] = latent;
                prm.b[(e.row, e.col)] = value;
            }
        }
    }

    /// Likelihood change in group `g` from moving edge `e`'s coefficient by `delta`.
    fn propose(&self, g: usize, e: &Edge, delta: f64) -> Option<Proposal> {
        let sigma = &self.params[g].sigma;
        match e.kind {
            EdgeKind::A => self.caches[g].propose_a(e.row, e.col, delta, sigma),
            EdgeKind::B => Some(self.caches[g].propose_b(e.row, e.col, delta, sigma)),
        }
    }

    fn commit(&mut self, g: usize, e: &Edge, delta: f64, prop: Proposal) {
        match e.kind {
            EdgeKind::A => self.caches[g].commit_a(e.row, e.col, delta, prop),
            EdgeKind::B => self.caches[g].commit_b(e.row, e.col, delta, prop),
        }
    }

    /// One Metropolis update of edge `ei`'s latent vector. Returns whether it was accepted.
    pub fn update_coefficient_vector<R: Rng + ?Sized>(&mut self, ei: usize, tuning: &mut Tuning, rng: &mut R) -> bool {
        let step = tuning.coeff_step[ei];
        let proposal: Vec<f64> = {
            let e = &self.edges[ei];
            (0..self.k())
                .map(|g| {
                    let z: f64 = StandardNormal.sample(rng);
                    self.latent(g, e) + step * z
                })
                .collect()
        };
        let acc = self.try_coefficient_vector(ei, &proposal, rng);
        tuning.record_coeff(ei, acc);
        acc
    }

    /// Metropolis test of a given latent vector for edge `ei` (symmetric proposal assumed).
    pub fn try_coefficient_vector<R: Rng + ?Sized>(&mut self, ei: usize, proposal: &[f64], rng: &mut R) -> bool {
        let e = self.edges[ei];
        let t = self.threshold(&e);
        let scale = self.scale(&e);
        let current = self.latent_vector(&e);
        let mut delta_ll = 0.0;
        let mut changes = Vec::new();
        for (g, &prop) in proposal.iter().enumerate() {
            let old = self.coefficient(g, &e);
            let new = apply_threshold(prop, t);
            if new != old {
                let delta = new - old;
                match self.propose(g, &e, delta) {
                    Some(pr) => {
                        delta_ll += pr.delta_loglik;
                        changes.push((g, delta, pr));
                    }
                    None => return false,
                }
            }
        }
        let delta_prior = -0.5 * (self.omega_f.quad(proposal) - self.omega_f.quad(&current)) / scale;
        if !mh_accept(delta_ll + delta_prior, rng) {
            return false;
        }
        for (g, delta, pr) in changes {
            self.commit(g, &e, delta, pr);
        }
        for (g, &prop) in proposal.iter().enumerate() {
            self.set_latent(g, &e, prop, apply_threshold(prop, t));
        }
        true
    }

    /// Reflected random-walk Metropolis on every threshold.
    pub fn update_thresholds<R: Rng + ?Sized>(&mut self, tuning: &mut Tuning, rng: &mut R) {
        for ei in 0..self.edges.len() {
            let z: f64 = StandardNormal.sample(rng);
            let e = self.edges[ei];
            let proposal = reflect(self.threshold(&e) + tuning.thresh_step[ei] * z, self.hyper.b_t);
            let acc = self.try_threshold(ei, proposal, rng);
            tuning.record_thresh(ei, acc);
        }
    }

    /// Metropolis test of threshold `proposal` for edge `ei`.
    pub fn try_threshold<R: Rng + ?Sized>(&mut self, ei: usize, proposal: f64, rng: &mut R) -> bool {
        let e = self.edges[ei];
        let mut delta_ll = 0.0;
        let mut changes = Vec::new();
        for g in 0..self.k() {
            let old = self.coefficient(g, &e);
            let new = apply_threshold(self.latent(g, &e), proposal);
            if new != old {
                let delta = new - old;
                match self.propose(g, &e, delta) {
                    Some(pr) => {
                        delta_ll += pr.delta_loglik;
                        changes.push((g, delta, pr));
                    }
                    None => return false,
                }
            }
        }
        if !mh_accept(delta_ll, rng) {
            return false;
        }
        for (g, delta, pr) in changes {
            self.commit(g, &e, delta, pr);
            let latent = self.latent(g, &e);
            self.set_latent(g, &e, latent, apply_threshold(latent, proposal));
        }
        *self.threshold_mut(&e) = proposal;
        true
    }

    /// Gibbs draws of every noise variance and every edge variance component.
    pub fn update_variances<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let h = &self.hyper;
        for g in 0..self.k() {
            let n = self.caches[g].n() as f64;
            for j in 0..self.mask.p() {
                let (a, b) = ig_posterior(h.a_sigma, h.b_sigma, n, self.caches[g].rss()[j]);
                self.params[g].sigma[j] = sample_inverse_gamma(a, b, rng);
            }
        }
        let k = self.k() as f64;
        for ei in 0..self.edges.len() {
            let e = self.edges[ei];
            let sq = self.omega_f.quad(&self.latent_vector(&e));
            let (a0, b0) = match e.kind {
                EdgeKind::A => (h.a_tau, h.b_tau),
                EdgeKind::B => (h.a_lambda, h.b_lambda),
            };
            let (a, b) = ig_posterior(a0, b0, k, sq);
            let draw = sample_inverse_gamma(a, b, rng);
            match e.kind {
                EdgeKind::A => self.shared.tau[(e.row, e.col)] = draw,
                EdgeKind::B => self.shared.lambda[(e.row, e.col)] = draw,
            }
        }
    }

    /// `sum_e latent_e latent_e' / scale_e` over all edges (K x K).
    pub fn scaled_outer_sum(&self) -> DMatrix<f64> {
        let k = self.k();
        let mut out = DMatrix::zeros(k, k);
        for e in &self.edges {
            let v = self.latent_vector(e);
            let s = self.scale(e);
            for i in 0..k {
                for j in 0..k {
                    out[(i, j)] += v[i] * v[j] / s;
                }
            }
        }
        out
    }

    /// Sum over edges of `log N(latent_e; 0, scale_e * Omega)` for a candidate factor of Omega.
    pub fn coeff_log_prior(&self, omega: &PdFactor) -> f64 {
        self.edges.iter().map(|e| log_prior_coeff_with(&self.latent_vector(e), self.scale(e), omega)).sum()
    }

    pub fn set_omega(&mut self, omega: DMatrix<f64>) -> Result<()> {
        self.omega_f = PdFactor::new(&omega)?;
        self.shared.omega = omega;
        Ok(())
    }

    /// Recomputes every likelihood cache from the parameters.
    pub fn refresh(&mut self) -> Result<()> {
        for (cache, prm) in self.caches.iter_mut().zip(&self.params) {
            cache.refresh(prm)?;
        }
        Ok(())
    }

    pub fn loglik(&self) -> f64 {
        self.caches.iter().zip(&self.params).map(|(c, p)| c.loglik(&p.sigma)).sum()
    }

    /// Log prior of everything except the relatedness matrix and any partition.
    pub fn log_prior_common(&self) -> f64 {
        let h = &self.hyper;
        let mut out = self.coeff_log_prior(&self.omega_f);
        for e in &self.edges {
            out += match e.kind {
                EdgeKind::A => log_inverse_gamma_pdf(self.scale(e), h.a_tau, h.b_tau),
                EdgeKind::B => log_inverse_gamma_pdf(self.scale(e), h.a_lambda, h.b_lambda),
            };
            out -= h.b_t.ln();
        }
        for prm in &self.params {
            out += prm.sigma.iter().map(|s| log_inverse_gamma_pdf(*s, h.a_sigma, h.b_sigma)).sum::<f64>();
        }
        out
    }

    /// Snapshot of the thresholded coefficients of every SEM.
    pub fn draws(&self) -> Vec<GroupDraw> {
        self.params.iter().map(|prm| group_draw(prm, &self.edges)).collect()
    }
}

pub(crate) fn group_draw(prm: &SemParams, edges: &[Edge]) -> GroupDraw {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for e in edges {
        match e.kind {
            EdgeKind::A => {
                let v = prm.a[(e.row, e.col)];
                if v != 0.0 {
                    a.push((e.row, e.col, v));
                }
            }
            EdgeKind::B => {
                let v = prm.b[(e.row, e.col)];
                if v != 0.0 {
                    b.push((e.row, e.col, v));
                }
            }
        }
    }
    GroupDraw { a, b, sigma: prm.sigma.iter().copied().collect() }
}

/// Per-chain random number generator: one ChaCha8 stream per chain index.
pub fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

/// A sampler that can be driven one sweep at a time.
pub trait Kernel {
    type State: Serialize + DeserializeOwned;

    fn sweep(&mut self, rng: &mut ChaCha8Rng) -> Result<()>;
    fn log_posterior(&self) -> f64;
    fn sample(&self, iter: usize, log_post: f64) -> Sample;
    fn tuning(&self) -> &Tuning;
    fn adapt(&mut self);
    fn state(&self) -> Self::State;
}

/// Everything about a chain's position that is not sampler state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Progress {
    pub next_iter: usize,
    pub rng: ChaCha8Rng,
    pub samples: Vec<Sample>,
    pub trace: Vec<f64>,
}

impl Progress {
    pub fn new(seed: u64, chain: usize) -> Self {
        Self { next_iter: 0, rng: chain_rng(seed, chain), samples: Vec::new(), trace: Vec::new() }
    }
}

pub const CHECKPOINT_FORMAT: &str = "hrgm-checkpoint";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint<S> {
    pub format: String,
    pub header: SampleHeader,
    pub state: S,
    pub tuning: Tuning,
    pub progress: Progress,
}

impl<S: Serialize + DeserializeOwned> Checkpoint<S> {
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, self)?;
        w.flush().map_err(|e| Error::io(&tmp, e))?;
        drop(w);
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let ck: Self = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| Error::Format { path: path.to_path_buf(), message: e.to_string() })?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Format { path: path.to_path_buf(), message: format!("not a checkpoint: {}", ck.format) });
        }
        Ok(ck)
    }
}

/// Runs `kernel` from `progress` up to iteration `cfg.iterations`, saving a
/// checkpoint to `checkpoint` (if given) every `cfg.checkpoint_every` sweeps.
pub fn drive<K: Kernel>(
    kernel: &mut K,
    progress: &mut Progress,
    cfg: &ChainConfig,
    header: &SampleHeader,
    checkpoint: Option<&Path>,
) -> Result<()> {
    drive_until(kernel, progress, cfg, header, checkpoint, cfg.iterations)
}

/// As [`drive`], stopping early after iteration `until - 1`.
pub fn drive_until<K: Kernel>(
    kernel: &mut K,
    progress: &mut Progress,
    cfg: &ChainConfig,
    header: &SampleHeader,
    checkpoint: Option<&Path>,
    until: usize,
) -> Result<()> {
    let until = until.min(cfg.iterations);
    while progress.next_iter < until {
        let it = progress.next_iter;
        kernel.sweep(&mut progress.rng)?;
        let lp = kernel.log_posterior();
        progress.trace.push(lp);
        if cfg.adapt && it < cfg.burn_in && (it + 1) % cfg.adapt_interval == 0 {
            kernel.adapt();
        }
        if cfg.is_retained(it) {
            progress.samples.push(kernel.sample(it, lp));
        }
        progress.next_iter += 1;
        if let Some(path) = checkpoint {
            if progress.next_iter % cfg.checkpoint_every == 0 && progress.next_iter < cfg.iterations {
                Checkpoint {
                    format: CHECKPOINT_FORMAT.into(),
                    header: header.clone(),
                    state: kernel.state(),
                    tuning: kernel.tuning().clone(),
                    progress: progress.clone(),
                }
                .save(path)?;
            }
        }
    }
    Ok(())
}

/// Packages a finished chain.
pub fn finish<K: Kernel>(kernel: &K, progress: Progress, header: SampleHeader) -> PosteriorSamples {
    PosteriorSamples {
        header,
        samples: progress.samples,
        log_post_trace: progress.trace,
        acceptance: kernel.tuning().totals.clone(),
    }
}
