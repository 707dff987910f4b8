//! Sampler for the model with known group labels.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::{
    drive, finish, mh_accept, Checkpoint, ChainConfig, EdgeKind, Ensemble, Flavor, Kernel, PosteriorSamples,
    Progress, Sample, SampleHeader, Tuning,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::priors::{
    log_constrained_iw_density, sample_constrained_iw, sample_inverse_gamma, HyperParams, PdFactor, SharedState,
};
use crate::sem::{apply_threshold, inverse_i_minus, SemParams, SupportMask};
use crate::suffstat::{GroupCache, Scatter};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnownGroupState {
    pub params: Vec<SemParams>,
    pub shared: SharedState,
}

impl KnownGroupState {
    /// Starting point: zero latents, unit variances, identity relatedness.
    pub fn initial(k: usize, mask: &SupportMask, hyper: &HyperParams, cfg: &ChainConfig) -> Self {
        let (p, q) = (mask.p(), mask.q());
        let t0 = cfg.fix_thresholds.unwrap_or(cfg.init_threshold * hyper.b_t);
        Self { params: vec![SemParams::zeros(p, q); k], shared: SharedState::new(k, p, q, t0) }
    }

    /// One draw from the joint prior.
    pub fn sample_prior<R: Rng + ?Sized>(
        k: usize,
        mask: &SupportMask,
        hyper: &HyperParams,
        rng: &mut R,
    ) -> Result<Self> {
        let (p, q) = (mask.p(), mask.q());
        let omega = sample_constrained_iw(hyper.nu_for(k), &hyper.phi_for(k)?, rng)?;
        let chol = omega.clone().cholesky().ok_or_else(|| Error::NotPositiveDefinite("omega draw".into()))?.l();
        let mut shared = SharedState::new(k, p, q, 0.0);
        shared.omega = omega;
        let mut params = vec![SemParams::zeros(p, q); k];
        let unif = Uniform::new_inclusive(0.0, hyper.b_t).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        for e in super::edges_from_mask(mask) {
            let (scale, t) = match e.kind {
                EdgeKind::A => {
                    let s = sample_inverse_gamma(hyper.a_tau, hyper.b_tau, rng);
                    shared.tau[(e.row, e.col)] = s;
                    (s, &mut shared.t_a[(e.row, e.col)])
                }
                EdgeKind::B => {
                    let s = sample_inverse_gamma(hyper.a_lambda, hyper.b_lambda, rng);
                    shared.lambda[(e.row, e.col)] = s;
                    (s, &mut shared.t_b[(e.row, e.col)])
                }
            };
            *t = unif.sample(rng);
            let t = *t;
            let z = DVector::from_fn(k, |_, _| StandardNormal.sample(rng));
            let v = (&chol * z) * scale.sqrt();
            for (g, prm) in params.iter_mut().enumerate() {
                match e.kind {
                    EdgeKind::A => {
                        prm.a_latent[(e.row, e.col)] = v[g];
                        prm.a[(e.row, e.col)] = apply_threshold(v[g], t);
                    }
                    EdgeKind::B => {
                        prm.b_latent[(e.row, e.col)] = v[g];
                        prm.b[(e.row, e.col)] = apply_threshold(v[g], t);
                    }
                }
            }
        }
        for prm in &mut params {
            for s in prm.sigma.iter_mut() {
                *s = sample_inverse_gamma(hyper.a_sigma, hyper.b_sigma, rng);
            }
        }
        Ok(Self { params, shared })
    }
}

/// Draws `n` responses from the SEM given predictors `x` (n x q).
pub fn simulate_responses<R: Rng + ?Sized>(params: &SemParams, x: &DMatrix<f64>, rng: &mut R) -> Result<DMatrix<f64>> {
    let (inv, _) = inverse_i_minus(&params.a)?;
    let p = params.p();
    let sd: Vec<f64> = params.sigma.iter().map(|s| s.sqrt()).collect();
    let mut y = DMatrix::zeros(x.nrows(), p);
    let mut rhs = DVector::zeros(p);
    for i in 0..x.nrows() {
        for j in 0..p {
            let e: f64 = StandardNormal.sample(rng);
            rhs[j] = params.b.row(j).transpose().dot(&x.row(i).transpose()) + sd[j] * e;
        }
        let yi = &inv * &rhs;
        for j in 0..p {
            y[(i, j)] = yi[j];
        }
    }
    Ok(y)
}

/// Scatter matrix of each labelled group.
pub fn group_scatters(data: &Dataset) -> Result<Vec<Scatter>> {
    let rows = data.group_rows().ok_or_else(|| Error::Data {
        path: "<dataset>".into(),
        message: "group labels are required for a known-group fit".into(),
    })?;
    if let Some(g) = rows.iter().position(|r| r.is_empty()) {
        return Err(Error::EmptyGroup(g + 1));
    }
    Ok(rows.into_iter().map(|r| Scatter::from_rows(&data.y, &data.x, r)).collect())
}

pub struct KnownSampler {
    pub ens: Ensemble,
    pub tuning: Tuning,
    nu: f64,
    phi: DMatrix<f64>,
    fix_omega: bool,
    fix_thresholds: bool,
}

impl KnownSampler {
    /// Builds a sampler over the given per-group scatters, starting from `state`.
    pub fn new(
        scatters: Vec<Scatter>,
        mask: SupportMask,
        hyper: HyperParams,
        cfg: &ChainConfig,
        state: KnownGroupState,
    ) -> Result<Self> {
        let k = scatters.len();
        if k == 0 {
            return Err(Error::InvalidParameter("at least one group is required".into()));
        }
        mask.validate()?;
        hyper.validate(k)?;
        cfg.validate()?;
        let dim = mask.p() + mask.q();
        if let Some(s) = scatters.iter().find(|s| s.s.nrows() != dim) {
            return Err(Error::Dimension(format!("scatter of size {} but p + q = {dim}", s.s.nrows())));
        }
        if state.params.len() != k || state.shared.omega.nrows() != k {
            return Err(Error::Dimension(format!("state has {} groups, data has {k}", state.params.len())));
        }
        for prm in &state.params {
            prm.validate(&mask)?;
        }
        let caches = scatters
            .into_iter()
            .zip(&state.params)
            .map(|(s, prm)| GroupCache::new(s, prm))
            .collect::<Result<Vec<_>>>()?;
        let nu = hyper.nu_for(k);
        let phi = hyper.phi_for(k)?;
        let b_t = hyper.b_t;
        let ens = Ensemble::new(mask, hyper, state.params, state.shared, caches)?;
        let tuning = Tuning::new(ens.edges.len(), cfg, b_t);
        Ok(Self { ens, tuning, nu, phi, fix_omega: cfg.fix_omega, fix_thresholds: cfg.fix_thresholds.is_some() })
    }

    pub fn from_dataset(data: &Dataset, mask: SupportMask, hyper: HyperParams, cfg: &ChainConfig) -> Result<Self> {
        if mask.p() != data.p() || mask.q() != data.q() {
            return Err(Error::Dimension(format!(
                "support mask is {}x{}, data have p = {}, q = {}",
                mask.p(),
                mask.q(),
                data.p(),
                data.q()
            )));
        }
        let scatters = group_scatters(data)?;
        let state = KnownGroupState::initial(scatters.len(), &mask, &hyper, cfg);
        Self::new(scatters, mask, hyper, cfg, state)
    }

    pub fn k(&self) -> usize {
        self.ens.k()
    }

    pub fn state_snapshot(&self) -> KnownGroupState {
        KnownGroupState { params: self.ens.params.clone(), shared: self.ens.shared.clone() }
    }

    /// Replaces the parameters with `state`, keeping the data.
    pub fn set_state(&mut self, state: KnownGroupState) -> Result<()> {
        if state.params.len() != self.k() {
            return Err(Error::Dimension("state has the wrong number of groups".into()));
        }
        self.ens.params = state.params;
        let omega = state.shared.omega.clone();
        self.ens.shared = state.shared;
        self.ens.set_omega(omega)?;
        self.ens.refresh()
    }

    /// Replaces group `g`'s data.
    pub fn set_group_data(&mut self, g: usize, y: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<()> {
        let scatter = Scatter::from_rows(y, x, 0..y.nrows());
        self.ens.caches[g] = GroupCache::new(scatter, &self.ens.params[g])?;
        Ok(())
    }

    /// Metropolis-Hastings update of the relatedness matrix with a normalized
    /// inverse-Wishart proposal centred on the current value.
    pub fn update_omega<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        if self.k() == 1 || self.fix_omega {
            return false;
        }
        let m = self.tuning.omega_dof;
        let current = self.ens.shared.omega.clone();
        let acc = self.try_omega(&current, m, rng).unwrap_or(false);
        self.tuning.record_omega(acc);
        acc
    }

    fn try_omega<R: Rng + ?Sized>(&mut self, current: &DMatrix<f64>, m: f64, rng: &mut R) -> Result<bool> {
        let proposal = sample_constrained_iw(m, &(current * m), rng)?;
        let f_prop = PdFactor::new(&proposal)?;
        let log_ratio = log_constrained_iw_density(&proposal, self.nu, &self.phi)?
            - log_constrained_iw_density(current, self.nu, &self.phi)?
            + self.ens.coeff_log_prior(&f_prop)
            - self.ens.coeff_log_prior(&self.ens.omega_f)
            + log_constrained_iw_density(current, m, &(&proposal * m))?
            - log_constrained_iw_density(&proposal, m, &(current * m))?;
        if !mh_accept(log_ratio, rng) {
            return Ok(false);
        }
        self.ens.set_omega(proposal)?;
        Ok(true)
    }

    pub fn log_posterior(&self) -> f64 {
        let mut out = self.ens.loglik() + self.ens.log_prior_common();
        if self.k() > 1 && !self.fix_omega {
            out += log_constrained_iw_density(&self.ens.shared.omega, self.nu, &self.phi).unwrap_or(f64::NAN);
        }
        out
    }

    /// Edge-by-edge coefficient updates, then thresholds, relatedness and variances.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        for ei in 0..self.ens.edges.len() {
            self.ens.update_coefficient_vector(ei, &mut self.tuning, rng);
        }
        if !self.fix_thresholds {
            self.ens.update_thresholds(&mut self.tuning, rng);
        }
        self.update_omega(rng);
        self.ens.update_variances(rng);
        self.ens.refresh()
    }
}

impl Kernel for KnownSampler {
    type State = KnownGroupState;

    fn sweep(&mut self, rng: &mut ChaCha8Rng) -> Result<()> {
        self.step(rng)
    }

    fn log_posterior(&self) -> f64 {
        KnownSampler::log_posterior(self)
    }

    fn sample(&self, iter: usize, log_post: f64) -> Sample {
        Sample {
            iter,
            log_post,
            k: self.k(),
            groups: self.ens.draws(),
            omega: self.ens.shared.omega.transpose().iter().copied().collect(),
            alloc: None,
        }
    }

    fn tuning(&self) -> &Tuning {
        &self.tuning
    }

    fn adapt(&mut self) {
        let k = self.k();
        self.tuning.adapt(self.ens.hyper.b_t, k);
    }

    fn state(&self) -> KnownGroupState {
        self.state_snapshot()
    }
}

/// Header for a chain over `data`.
pub fn sample_header(
    flavor: Flavor,
    data: &Dataset,
    groups: usize,
    cfg: &ChainConfig,
    chain: usize,
    config_hash: &str,
) -> SampleHeader {
    SampleHeader {
        format: super::samples::SAMPLE_FORMAT.into(),
        version: super::samples::SAMPLE_FORMAT_VERSION,
        flavor,
        p: data.p(),
        q: data.q(),
        n: data.n(),
        groups,
        seed: cfg.seed,
        chain,
        config_hash: config_hash.into(),
        iterations: cfg.iterations,
        burn_in: cfg.burn_in,
        thin: cfg.thin,
        y_names: data.y_names.clone(),
        x_names: data.x_names.clone(),
        standardization: data.standardization.clone(),
    }
}

/// Runs one chain to completion.
pub fn run_chain(data: &Dataset, mask: &SupportMask, hyper: &HyperParams, cfg: &ChainConfig) -> Result<PosteriorSamples> {
    run_chain_with(data, mask, hyper, cfg, 0, "", None)
}

/// Runs chain `chain` (its own RNG stream), checkpointing to `checkpoint` if given.
pub fn run_chain_with(
    data: &Dataset,
    mask: &SupportMask,
    hyper: &HyperParams,
    cfg: &ChainConfig,
    chain: usize,
    config_hash: &str,
    checkpoint: Option<&Path>,
) -> Result<PosteriorSamples> {
    let mut sampler = KnownSampler::from_dataset(data, mask.clone(), hyper.clone(), cfg)?;
    let header = sample_header(Flavor::Known, data, sampler.k(), cfg, chain, config_hash);
    let mut progress = Progress::new(cfg.seed, chain);
    drive(&mut sampler, &mut progress, cfg, &header, checkpoint)?;
    Ok(finish(&sampler, progress, header))
}

/// Continues a chain from a checkpoint written by [`run_chain_with`].
pub fn resume_chain(
    data: &Dataset,
    mask: &SupportMask,
    hyper: &HyperParams,
    cfg: &ChainConfig,
    ck: Checkpoint<KnownGroupState>,
    checkpoint: Option<&Path>,
) -> Result<PosteriorSamples> {
    let scatters = group_scatters(data)?;
    let mut sampler = KnownSampler::new(scatters, mask.clone(), hyper.clone(), cfg, ck.state)?;
    sampler.tuning = ck.tuning;
    let mut progress = ck.progress;
    drive(&mut sampler, &mut progress, cfg, &ck.header, checkpoint)?;
    Ok(finish(&sampler, progress, ck.header))
}
