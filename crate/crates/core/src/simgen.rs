//! Synthetic data with known networks, for known-group and clustering experiments.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mcmc::known::simulate_responses;
use crate::sem::{i_minus, induced_graph, Graph, SemParams, SupportMask};

/// Relatedness used to correlate coefficient signs across groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OmegaSpec {
    /// `"diagonal"`: independent signs.
    Named(String),
    Matrix(Vec<Vec<f64>>),
}

impl OmegaSpec {
    pub fn equicorrelated(k: usize, rho: f64) -> Self {
        OmegaSpec::Matrix((0..k).map(|i| (0..k).map(|j| if i == j { 1.0 } else { rho }).collect()).collect())
    }

    pub fn matrix(&self, k: usize) -> Result<DMatrix<f64>> {
        match self {
            OmegaSpec::Named(s) if s == "diagonal" => Ok(DMatrix::identity(k, k)),
            OmegaSpec::Named(s) => Err(Error::Config(format!("omega_true must be \"diagonal\" or a matrix, got {s:?}"))),
            OmegaSpec::Matrix(rows) => {
                if rows.len() != k || rows.iter().any(|r| r.len() != k) {
                    return Err(Error::Config(format!("omega_true must be {k} x {k}")));
                }
                let m = DMatrix::from_fn(k, k, |i, j| rows[i][j]);
                if (&m - m.transpose()).abs().max() > 1e-12 || m.clone().cholesky().is_none() {
                    return Err(Error::Config("omega_true must be symmetric positive definite".into()));
                }
                Ok(m)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub k: usize,
    pub p: usize,
    pub q: usize,
    pub n_per_group: Vec<usize>,
    /// Fraction of the `p (p - 1)` off-diagonal positions that are edges in each group.
    pub edge_density: f64,
    /// Fraction of each group's edges common to all groups.
    pub shared_fraction: f64,
    pub signal_range: (f64, f64),
    pub omega_true: OmegaSpec,
    pub sigma_true: f64,
    pub seed: u64,
    /// Restrict `B` to each gene's own copy-number and methylation columns (`q = 2p`).
    pub block_support: bool,
    /// Probability that a gene's methylation effect is present; copy-number effects always are.
    pub b_density: f64,
    /// Smallest admissible singular value of `I - A`.
    pub min_singular_value: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::desk_known()
    }
}

impl ScenarioConfig {
    /// Three correlated groups of 100 subjects, p = 10 genes, q = 20 DNA measurements.
    pub fn desk_known() -> Self {
        Self {
            k: 3,
            p: 10,
            q: 20,
            n_per_group: vec![100; 3],
            edge_density: 0.15,
            shared_fraction: 0.75,
            signal_range: (0.4, 0.9),
            omega_true: OmegaSpec::equicorrelated(3, 0.7),
            sigma_true: 1.0,
            seed: 1,
            block_support: true,
            b_density: 0.5,
            min_singular_value: 0.1,
        }
    }

    /// Two clusters of 100 subjects with disjoint networks over p = 5 genes, low noise.
    pub fn desk_cluster() -> Self {
        Self {
            k: 2,
            p: 5,
            q: 10,
            n_per_group: vec![100; 2],
            edge_density: 0.3,
            shared_fraction: 0.0,
            signal_range: (0.6, 0.9),
            omega_true: OmegaSpec::Named("diagonal".into()),
            sigma_true: 0.1,
            b_density: 1.0,
            ..Self::desk_known()
        }
    }

    pub fn n(&self) -> usize {
        self.n_per_group.iter().sum()
    }

    pub fn mask(&self) -> Result<SupportMask> {
        if self.block_support {
            SupportMask::block(self.p, self.q)
        } else {
            Ok(SupportMask::full(self.p, self.q))
        }
    }

    /// Edges per group and how many of them are shared.
    pub fn edge_counts(&self) -> (usize, usize) {
        let per_group = (self.edge_density * (self.p * (self.p - 1)) as f64).round() as usize;
        let shared = (self.shared_fraction * per_group as f64).round() as usize;
        (per_group, shared)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.p == 0 {
            return Err(Error::Config("k and p must be positive".into()));
        }
        if self.n_per_group.len() != self.k || self.n_per_group.contains(&0) {
            return Err(Error::Config(format!("n_per_group needs {} positive entries", self.k)));
        }
        if !(self.edge_density >= 0.0 && self.edge_density < 1.0) {
            return Err(Error::Config("edge_density must lie in [0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.shared_fraction) || !(0.0..=1.0).contains(&self.b_density) {
            return Err(Error::Config("shared_fraction and b_density must lie in [0, 1]".into()));
        }
        let (lo, hi) = self.signal_range;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::Config(format!("signal_range ({lo}, {hi}) must satisfy 0 < low <= high")));
        }
        if !(self.sigma_true > 0.0) {
            return Err(Error::Config("sigma_true must be positive".into()));
        }
        self.omega_true.matrix(self.k)?;
        self.mask()?;
        let (per_group, shared) = self.edge_counts();
        let positions = self.p * (self.p - 1);
        if shared + self.k * (per_group - shared) > positions {
            return Err(Error::Config(format!(
                "{} shared and {} group-specific edges per group do not fit in {positions} positions",
                shared,
                per_group - shared
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub params: Vec<SemParams>,
    pub omega: Vec<Vec<f64>>,
    /// True cluster of each subject (1-based), for clustering scenarios.
    pub partition: Option<Vec<usize>>,
}

impl GroundTruth {
    pub fn graphs(&self) -> Vec<Graph> {
        self.params.iter().map(induced_graph).collect()
    }
}

fn smallest_singular_value(a: &DMatrix<f64>) -> f64 {
    i_minus(a).singular_values().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Draws the true parameters of all groups.
pub fn gen_params<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<Vec<SemParams>> {
    cfg.validate()?;
    let (k, p, q) = (cfg.k, cfg.p, cfg.q);
    let mask = cfg.mask()?;
    let omega = cfg.omega_true.matrix(k)?;
    // Correlation of signs of a bivariate normal is (2 / pi) arcsin(r), so this
    // latent correlation gives sign correlation equal to omega.
    let latent_corr = DMatrix::from_fn(k, k, |i, j| {
        let r = omega[(i, j)] / (omega[(i, i)] * omega[(j, j)]).sqrt();
        (std::f64::consts::FRAC_PI_2 * r).sin()
    });
    let chol = latent_corr
        .cholesky()
        .ok_or_else(|| Error::Config("sign correlation implied by omega_true is not positive definite".into()))?
        .l();
    let magnitude = Uniform::new_inclusive(cfg.signal_range.0, cfg.signal_range.1)
        .map_err(|e| Error::Config(e.to_string()))?;
    let signs = |rng: &mut R| -> Vec<f64> {
        let z = DVector::from_fn(k, |_, _| StandardNormal.sample(rng));
        (&chol * z).iter().map(|v: &f64| if *v >= 0.0 { 1.0 } else { -1.0 }).collect()
    };

    let (per_group, n_shared) = cfg.edge_counts();
    let mut positions: Vec<(usize, usize)> =
        (0..p).flat_map(|j| (0..p).filter(move |&l| l != j).map(move |l| (j, l))).collect();
    positions.shuffle(rng);
    let shared: Vec<(usize, usize)> = positions[..n_shared].to_vec();
    let n_specific = per_group - n_shared;
    let specific: Vec<Vec<(usize, usize)>> = (0..k)
        .map(|g| positions[n_shared + g * n_specific..n_shared + (g + 1) * n_specific].to_vec())
        .collect();

    let b_entries: Vec<(usize, usize)> = (0..p)
        .flat_map(|j| (0..q).map(move |h| (j, h)))
        .filter(|&(j, h)| mask.b_support[(j, h)])
        .collect();
    let mut b = vec![DMatrix::zeros(p, q); k];
    for &(j, h) in &b_entries {
        let always = !cfg.block_support || h < p;
        if always || rng.random::<f64>() < cfg.b_density {
            let m = magnitude.sample(rng);
            for (g, s) in signs(rng).into_iter().enumerate() {
                b[g][(j, h)] = m * s;
            }
        }
    }

    for _ in 0..100 {
        let mut a = vec![DMatrix::zeros(p, p); k];
        for &(j, l) in &shared {
            let m = magnitude.sample(rng);
            for (g, s) in signs(rng).into_iter().enumerate() {
                a[g][(j, l)] = m * s;
            }
        }
        for (g, edges) in specific.iter().enumerate() {
            for &(j, l) in edges {
                let s = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                a[g][(j, l)] = s * magnitude.sample(rng);
            }
        }
        if a.iter().all(|ag| smallest_singular_value(ag) >= cfg.min_singular_value) {
            let sigma = DVector::from_element(p, cfg.sigma_true);
            return Ok(a
                .into_iter()
                .zip(b)
                .map(|(ag, bg)| SemParams::from_coefficients(ag, bg, sigma.clone()))
                .collect());
        }
    }
    Err(Error::Degenerate(format!(
        "no draw with I - A well conditioned (smallest singular value >= {}) in 100 attempts",
        cfg.min_singular_value
    )))
}

fn simulate_rows<R: Rng + ?Sized>(params: &SemParams, n: usize, q: usize, rng: &mut R) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let x = DMatrix::from_fn(n, q, |_, _| StandardNormal.sample(rng));
    let y = simulate_responses(params, &x, rng)?;
    Ok((y, x))
}

fn stack(blocks: Vec<(DMatrix<f64>, DMatrix<f64>)>, order: &[(usize, usize)], p: usize, q: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = order.len();
    let mut y = DMatrix::zeros(n, p);
    let mut x = DMatrix::zeros(n, q);
    for (i, &(g, r)) in order.iter().enumerate() {
        y.row_mut(i).copy_from(&blocks[g].0.row(r));
        x.row_mut(i).copy_from(&blocks[g].1.row(r));
    }
    (y, x)
}

/// Labelled data from `k` related groups. Rows are ordered by group.
pub fn gen_known_groups<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<(Dataset, GroundTruth)> {
    let params = gen_params(cfg, rng)?;
    let blocks = params
        .iter()
        .zip(&cfg.n_per_group)
        .map(|(prm, &n)| simulate_rows(prm, n, cfg.q, rng))
        .collect::<Result<Vec<_>>>()?;
    let order: Vec<(usize, usize)> =
        cfg.n_per_group.iter().enumerate().flat_map(|(g, &n)| (0..n).map(move |r| (g, r))).collect();
    let labels = order.iter().map(|&(g, _)| g + 1).collect();
    let (y, x) = stack(blocks, &order, cfg.p, cfg.q);
    let data = Dataset::new(y, x, Some(labels))?;
    let omega = cfg.omega_true.matrix(cfg.k)?;
    let truth = GroundTruth { params, omega: matrix_rows(&omega), partition: None };
    Ok((data, truth))
}

/// Unlabelled data from `k` clusters of sizes `n_per_group`, in shuffled order.
pub fn gen_cluster_data<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<(Dataset, GroundTruth)> {
    let params = gen_params(cfg, rng)?;
    let blocks = params
        .iter()
        .zip(&cfg.n_per_group)
        .map(|(prm, &n)| simulate_rows(prm, n, cfg.q, rng))
        .collect::<Result<Vec<_>>>()?;
    let mut order: Vec<(usize, usize)> =
        cfg.n_per_group.iter().enumerate().flat_map(|(g, &n)| (0..n).map(move |r| (g, r))).collect();
    order.shuffle(rng);
    let partition = order.iter().map(|&(g, _)| g + 1).collect();
    let (y, x) = stack(blocks, &order, cfg.p, cfg.q);
    let data = Dataset::new(y, x, None)?;
    let omega = cfg.omega_true.matrix(cfg.k)?;
    let truth = GroundTruth { params, omega: matrix_rows(&omega), partition: Some(partition) };
    Ok((data, truth))
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sem::conditional_moments;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_scenario_is_valid_and_deterministic() {
        let cfg = ScenarioConfig::desk_known();
        let (d1, t1) = gen_known_groups(&cfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed)).unwrap();
        let (d2, t2) = gen_known_groups(&cfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed)).unwrap();
        assert_eq!(d1, d2);
        assert_eq!(t1, t2);
        assert_eq!(d1.n(), 300);
        let mask = cfg.mask().unwrap();
        let (per_group, shared) = cfg.edge_counts();
        for prm in &t1.params {
            prm.validate(&mask).unwrap();
            assert_eq!(induced_graph(prm).gene_edge_count(), per_group);
            for j in 0..cfg.p {
                assert_ne!(prm.b[(j, j)], 0.0);
            }
        }
        let g = t1.graphs();
        let common = g[0].edges.keys().filter(|e| e.0 < cfg.p && g[1].contains(e.0, e.1) && g[2].contains(e.0, e.1)).count();
        assert_eq!(common, shared);
    }

    #[test]
    fn null_and_fully_shared_scenarios() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = ScenarioConfig { edge_density: 0.0, ..ScenarioConfig::desk_known() };
        let (_, t) = gen_known_groups(&cfg, &mut rng).unwrap();
        assert!(t.graphs().iter().all(|g| g.gene_edge_count() == 0));
        let cfg = ScenarioConfig {
            k: 2,
            n_per_group: vec![10, 10],
            shared_fraction: 1.0,
            omega_true: OmegaSpec::equicorrelated(2, 0.5),
            ..ScenarioConfig::desk_known()
        };
        let (_, t) = gen_known_groups(&cfg, &mut rng).unwrap();
        let g = t.graphs();
        let gene_edges = |gr: &Graph| gr.edges.keys().filter(|e| e.0 < cfg.p).copied().collect::<Vec<_>>();
        assert_eq!(gene_edges(&g[0]), gene_edges(&g[1]));
    }

    #[test]
    fn too_many_edges_is_an_error() {
        let cfg = ScenarioConfig { k: 3, p: 3, q: 6, shared_fraction: 0.0, edge_density: 0.9, ..ScenarioConfig::desk_known() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn sign_agreement_tracks_omega() {
        let cfg = ScenarioConfig {
            k: 2,
            p: 30,
            q: 60,
            n_per_group: vec![1, 1],
            edge_density: 0.3,
            shared_fraction: 1.0,
            omega_true: OmegaSpec::equicorrelated(2, 0.7),
            min_singular_value: 0.0,
            ..ScenarioConfig::desk_known()
        };
        let prm = gen_params(&cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let (mut agree, mut total) = (0.0, 0.0);
        for j in 0..cfg.p {
            for l in 0..cfg.p {
                if prm[0].a[(j, l)] != 0.0 {
                    total += 1.0;
                    agree += (prm[0].a[(j, l)].signum() == prm[1].a[(j, l)].signum()) as u8 as f64;
                }
            }
        }
        // P(agree) = (1 + 0.7) / 2.
        let rate = agree / total;
        assert!((rate - 0.85).abs() < 0.06, "agreement rate {rate} over {total} edges");
    }

    #[test]
    fn cluster_data_has_fixed_proportions() {
        let cfg = ScenarioConfig::desk_cluster();
        let (d, t) = gen_cluster_data(&cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert!(d.labels.is_none());
        let part = t.partition.clone().unwrap();
        assert_eq!(part.iter().filter(|&&l| l == 1).count(), 100);
        assert_eq!(part.len(), 200);
        let g = t.graphs();
        assert!(g[0].edges.keys().filter(|e| e.0 < cfg.p).all(|e| !g[1].contains(e.0, e.1)));
    }

    #[test]
    fn sample_covariance_converges() {
        let cfg = ScenarioConfig { k: 1, p: 4, q: 8, n_per_group: vec![100_000], edge_density: 0.4, ..ScenarioConfig::desk_known() };
        let cfg = ScenarioConfig { omega_true: OmegaSpec::Named("diagonal".into()), ..cfg };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (d, t) = gen_known_groups(&cfg, &mut rng).unwrap();
        let prm = &t.params[0];
        let (_, cov) = conditional_moments(prm, &DVector::zeros(cfg.q)).unwrap();
        // Residuals around the conditional mean have the model covariance.
        let (inv, _) = crate::sem::inverse_i_minus(&prm.a).unwrap();
        let n = d.n();
        let mut emp = DMatrix::zeros(cfg.p, cfg.p);
        for i in 0..n {
            let x = d.x.row(i).transpose();
            let mean = &inv * (&prm.b * x);
            let r = d.y.row(i).transpose() - mean;
            emp += &r * r.transpose();
        }
        emp /= n as f64;
        assert!((emp - cov).abs().max() < 0.05);
    }
}
