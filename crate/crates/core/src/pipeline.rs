//! The stages behind the command-line tool: simulate, fit, select, evaluate, report.
//!
//! Every stage reads and writes plain files inside one output directory:
//!
//! | file | written by |
//! |------|------------|
//! | `y.csv`, `x.csv`, `labels.csv`, `truth.json` | `simulate` |
//! | `samples-<chain>.jsonl`, `checkpoint-<chain>.json` | `fit` |
//! | `network.json`, `network.dot`, `edge_probs.csv`, `summary.json`, `partition.csv`, `coclustering.csv` | `select` |
//! | `evaluation.json` | `evaluate` |
//! | `report.txt` | `report` |

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::diagnostics::effective_sample_size;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::io::{self, RunConfig};
use crate::mcmc::cluster::{resume_cluster_chain, run_cluster_chain_with, ClusterState};
use crate::mcmc::known::{resume_chain, run_chain_with, KnownGroupState};
use crate::mcmc::{Checkpoint, Flavor, PosteriorSamples};
use crate::metrics::{adjusted_rand, match_clusters, recovery_report, variation_of_information, RecoveryReport};
use crate::simgen::{gen_cluster_data, gen_known_groups, GroundTruth, ScenarioConfig};
use crate::summary::{
    coclustering, edge_inclusion_probs, edge_inclusion_probs_by_partition, fdr_select, point_partition, EdgeId,
    EdgeProbabilities, Selection,
};

pub const OUT_ROOT_ENV: &str = "HRGM_OUT_ROOT";

/// Output directory: the explicit flag, else the config's `out`, else `$HRGM_OUT_ROOT`, else `hrgm-out`.
pub fn output_dir(flag: Option<&Path>, cfg: &RunConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.out.clone())
        .or_else(|| std::env::var_os(OUT_ROOT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("hrgm-out"))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Truth file written by `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub scenario: ScenarioConfig,
    pub flavor: Flavor,
    pub truth: GroundTruth,
}

/// Generates a dataset from `cfg.scenario`: labelled groups for the known flavor,
/// an unlabelled mixture otherwise.
pub fn simulate(cfg: &RunConfig, flavor: Flavor, out: &Path) -> Result<TruthFile> {
    ensure_dir(out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.scenario.seed);
    let (data, truth) = match flavor {
        Flavor::Known => gen_known_groups(&cfg.scenario, &mut rng)?,
        _ => gen_cluster_data(&cfg.scenario, &mut rng)?,
    };
    io::write_dataset(out, &data)?;
    if let Some(part) = &truth.partition {
        io::write_labels_csv(&out.join("true_partition.csv"), "cluster", part)?;
    }
    let file = TruthFile { scenario: cfg.scenario.clone(), flavor, truth };
    io::write_json(&out.join("truth.json"), &file)?;
    Ok(file)
}

/// Loads the dataset named in the config, or the one `simulate` left in `out`.
pub fn load_data(cfg: &RunConfig, flavor: Flavor, out: &Path) -> Result<Dataset> {
    let (y, x) = match (&cfg.data.y, &cfg.data.x) {
        (Some(y), Some(x)) => (y.clone(), x.clone()),
        _ => (out.join("y.csv"), out.join("x.csv")),
    };
    let labels = match (&cfg.data.labels, flavor) {
        (Some(l), _) => Some(l.clone()),
        (None, Flavor::Known) if cfg.data.y.is_none() => Some(out.join("labels.csv")),
        _ => None,
    };
    if flavor == Flavor::Known && labels.is_none() {
        return Err(Error::Config("fitting known groups needs data.labels".into()));
    }
    let data = io::load_dataset(&y, &x, labels.as_deref())?;
    Ok(if flavor == Flavor::Known { data } else { Dataset { labels: None, ..data } })
}

pub fn samples_path(out: &Path, chain: usize) -> PathBuf {
    out.join(format!("samples-{chain}.jsonl"))
}

pub fn checkpoint_path(out: &Path, chain: usize) -> PathBuf {
    out.join(format!("checkpoint-{chain}.json"))
}

fn run_one(cfg: &RunConfig, flavor: Flavor, data: &Dataset, chain: usize, out: &Path) -> Result<PosteriorSamples> {
    let mask = cfg.support.mask(data.p(), data.q())?;
    let hash = cfg.hash(flavor);
    let ck = checkpoint_path(out, chain);
    match flavor {
        Flavor::Known => run_chain_with(data, &mask, &cfg.hyper, &cfg.chain, chain, &hash, Some(&ck)),
        _ => run_cluster_chain_with(data, &mask, &cfg.hyper, &cfg.chain, flavor, chain, &hash, Some(&ck)),
    }
}

/// Runs `chains` independent chains (in parallel) and writes one sample file per chain.
/// The last checkpoint of each chain is left in place.
pub fn fit(cfg: &RunConfig, flavor: Flavor, out: &Path, chains: usize) -> Result<Vec<PathBuf>> {
    if chains == 0 {
        return Err(Error::Config("chains must be at least 1".into()));
    }
    ensure_dir(out)?;
    let data = load_data(cfg, flavor, out)?;
    let results = Exec::default().map_range(chains, |c| run_one(cfg, flavor, &data, c, out));
    let mut paths = Vec::with_capacity(chains);
    for (c, r) in results.into_iter().enumerate() {
        let path = samples_path(out, c);
        r?.save(&path)?;
        paths.push(path);
    }
    Ok(paths)
}

#[derive(Deserialize)]
struct CheckpointHead {
    format: String,
    header: crate::mcmc::SampleHeader,
}

/// Continues the chain saved in `checkpoint` under the current configuration.
/// The configuration must hash to the value recorded in the checkpoint.
pub fn resume(cfg: &RunConfig, checkpoint: &Path, out: &Path) -> Result<PathBuf> {
    let text = fs::read_to_string(checkpoint).map_err(|e| Error::io(checkpoint, e))?;
    let head: CheckpointHead = serde_json::from_str(&text)
        .map_err(|e| Error::Format { path: checkpoint.into(), message: e.to_string() })?;
    if head.format != crate::mcmc::CHECKPOINT_FORMAT {
        return Err(Error::Format { path: checkpoint.into(), message: format!("not a checkpoint: {}", head.format) });
    }
    let flavor = head.header.flavor;
    if head.header.config_hash != cfg.hash(flavor) {
        return Err(Error::Config(format!(
            "{} was written under a different configuration (hash {}, current {})",
            checkpoint.display(),
            head.header.config_hash,
            cfg.hash(flavor)
        )));
    }
    ensure_dir(out)?;
    let data = load_data(cfg, flavor, out)?;
    let mask = cfg.support.mask(data.p(), data.q())?;
    let chain_cfg = crate::mcmc::ChainConfig { seed: head.header.seed, ..cfg.chain.clone() };
    let chain = head.header.chain;
    let next = checkpoint_path(out, chain);
    let samples = match flavor {
        Flavor::Known => {
            let ck = Checkpoint::<KnownGroupState>::load(checkpoint)?;
            resume_chain(&data, &mask, &cfg.hyper, &chain_cfg, ck, Some(&next))?
        }
        _ => {
            let ck = Checkpoint::<ClusterState>::load(checkpoint)?;
            resume_cluster_chain(&data, &mask, &cfg.hyper, &chain_cfg, ck, Some(&next))?
        }
    };
    let path = samples_path(out, chain);
    samples.save(&path)?;
    Ok(path)
}

/// Sample files in `out`, in chain order.
pub fn find_samples(out: &Path) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    for entry in fs::read_dir(out).map_err(|e| Error::io(out, e))? {
        let path = entry.map_err(|e| Error::io(out, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if let Some(chain) = name.strip_prefix("samples-").and_then(|r| r.strip_suffix(".jsonl")) {
            if let Ok(c) = chain.parse::<usize>() {
                found.push((c, path));
            }
        }
    }
    if found.is_empty() {
        return Err(Error::Config(format!("no sample files in {}", out.display())));
    }
    found.sort();
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

/// Loads and pools the retained draws of several chains of one run.
pub fn load_pooled(paths: &[PathBuf]) -> Result<PosteriorSamples> {
    let mut pooled: Option<PosteriorSamples> = None;
    for path in paths {
        let s = PosteriorSamples::load(path)?;
        match &mut pooled {
            None => pooled = Some(s),
            Some(acc) => {
                let (a, b) = (&acc.header, &s.header);
                if (a.flavor, a.p, a.q, a.n, a.groups, &a.config_hash) != (b.flavor, b.p, b.q, b.n, b.groups, &b.config_hash) {
                    return Err(Error::Format { path: path.clone(), message: "sample files come from different runs".into() });
                }
                acc.samples.extend(s.samples);
                acc.log_post_trace.extend(s.log_post_trace);
            }
        }
    }
    pooled.ok_or_else(|| Error::Config("no sample files given".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectSummary {
    pub flavor: Flavor,
    pub fdr_level: f64,
    pub probabilities: EdgeProbabilities,
    pub selection: Selection<EdgeId>,
    /// Point partition (1-based) for clustering runs.
    pub partition: Option<Vec<usize>>,
}

/// Edge probabilities, FDR selection and, for clustering runs, the point partition.
pub fn summarize(samples: &PosteriorSamples, fdr: f64) -> Result<SelectSummary> {
    let (probs, partition) = if samples.header.groups > 0 {
        (edge_inclusion_probs(samples)?, None)
    } else {
        let cc = coclustering(samples, Exec::default())?;
        let point = point_partition(&cc, samples)?;
        (edge_inclusion_probs_by_partition(samples, &point, Exec::default())?, Some(point))
    };
    let selection = fdr_select(&probs.flat(), fdr)?;
    Ok(SelectSummary {
        flavor: samples.header.flavor,
        fdr_level: fdr,
        probabilities: probs,
        selection,
        partition: partition.map(|p| p.s),
    })
}

/// Writes the selected networks and posterior summaries into `out`.
pub fn select(paths: &[PathBuf], fdr: f64, out: &Path) -> Result<SelectSummary> {
    ensure_dir(out)?;
    let samples = load_pooled(paths)?;
    let summary = summarize(&samples, fdr)?;
    let h = &samples.header;
    let net = io::Network::from_selection(
        &summary.probabilities,
        &summary.selection,
        fdr,
        &h.y_names,
        &h.x_names,
        h.standardization.as_ref(),
    );
    io::write_network(out, "network", &net)?;
    io::write_edge_probs_csv(&out.join("edge_probs.csv"), &summary.probabilities)?;
    io::write_json(&out.join("summary.json"), &summary)?;
    if let Some(part) = &summary.partition {
        io::write_labels_csv(&out.join("partition.csv"), "cluster", part)?;
        let cc = coclustering(&samples, Exec::default())?;
        let names: Vec<String> = (1..=cc.n()).map(|i| format!("s{i}")).collect();
        io::write_matrix_csv(&out.join("coclustering.csv"), &names, &cc.m)?;
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub recovery: RecoveryReport,
    pub ari: Option<f64>,
    pub vi: Option<f64>,
    /// VI divided by `ln n`, reported as the adjusted VI.
    pub vi_normalized: Option<f64>,
    /// Posterior mean of the relatedness matrix next to the truth (known groups only).
    pub omega_estimate: Option<Vec<Vec<f64>>>,
    pub omega_truth: Vec<Vec<f64>>,
}

/// Scores a `select` summary against a `simulate` truth file.
pub fn evaluate_summary(summary: &SelectSummary, truth: &TruthFile, omega_estimate: Option<Vec<Vec<f64>>>) -> Result<Evaluation> {
    let supports: Vec<DMatrix<bool>> = truth.truth.params.iter().map(|p| p.a.map(|v| v != 0.0)).collect();
    let (aligned, ari, vi) = match (&summary.partition, &truth.truth.partition) {
        (Some(est), Some(tp)) => {
            let map = match_clusters(est, tp)?;
            let aligned: Vec<DMatrix<bool>> = map.iter().map(|&t| supports[t - 1].clone()).collect();
            (aligned, Some(adjusted_rand(est, tp)?), Some(variation_of_information(est, tp)?))
        }
        (None, None) => (supports, None, None),
        _ => return Err(Error::Config("summary and truth disagree on whether groups are known".into())),
    };
    let recovery = recovery_report(&aligned, &summary.probabilities, &summary.selection.selected)?;
    Ok(Evaluation {
        recovery,
        ari,
        vi: vi.map(|v| v.0),
        vi_normalized: vi.map(|v| v.1),
        omega_estimate,
        omega_truth: truth.truth.omega.clone(),
    })
}

/// Posterior mean of the relatedness matrix over pooled known-group draws.
pub fn omega_mean(samples: &PosteriorSamples) -> Option<Vec<Vec<f64>>> {
    let k = samples.header.groups;
    if k == 0 || samples.samples.is_empty() {
        return None;
    }
    let m = samples.samples.len() as f64;
    Some(
        (0..k)
            .map(|i| (0..k).map(|j| samples.samples.iter().map(|s| s.omega_entry(i, j)).sum::<f64>() / m).collect())
            .collect(),
    )
}

pub fn evaluate(out: &Path, truth_path: &Path) -> Result<Evaluation> {
    let summary: SelectSummary = io::read_json(&out.join("summary.json"))?;
    let truth: TruthFile = io::read_json(truth_path)?;
    let omega = match find_samples(out) {
        Ok(paths) => omega_mean(&load_pooled(&paths)?),
        Err(_) => None,
    };
    let ev = evaluate_summary(&summary, &truth, omega)?;
    io::write_json(&out.join("evaluation.json"), &ev)?;
    Ok(ev)
}

pub fn evaluation_table(ev: &Evaluation) -> String {
    let mut s = String::new();
    let r = &ev.recovery;
    let auc = |a: Option<f64>| a.map_or("-".to_string(), |v| format!("{v:.3}"));
    let _ = writeln!(s, "group  true  selected  tp  fp  tpr    fpr    auc");
    for g in &r.per_group {
        let _ = writeln!(
            s,
            "{:<6} {:<5} {:<9} {:<3} {:<3} {:<6.3} {:<6.3} {}",
            g.group + 1,
            g.true_edges,
            g.selected_edges,
            g.true_positives,
            g.false_positives,
            g.tpr,
            g.fpr,
            auc(g.auc)
        );
    }
    let _ = writeln!(
        s,
        "{:<6} {:<5} {:<9} {:<3} {:<3} {:<6.3} {:<6.3} {}",
        "all",
        r.true_edges,
        r.selected_edges,
        r.true_positives,
        r.false_positives,
        r.tpr,
        r.fpr,
        auc(r.auc)
    );
    let _ = writeln!(s, "realized FDR {:.3}", r.realized_fdr);
    if let (Some(ari), Some(vi), Some(nvi)) = (ev.ari, ev.vi, ev.vi_normalized) {
        let _ = writeln!(s, "ARI {ari:.3}  VI {vi:.3} nats  VI/ln(n) {nvi:.3}");
    }
    if let Some(om) = &ev.omega_estimate {
        for (i, row) in om.iter().enumerate() {
            let est: Vec<String> = row.iter().map(|v| format!("{v:6.3}")).collect();
            let tru: Vec<String> = ev.omega_truth.get(i).map_or(vec![], |r| r.iter().map(|v| format!("{v:6.3}")).collect());
            let _ = writeln!(s, "omega {}  estimate {}  truth {}", i + 1, est.join(" "), tru.join(" "));
        }
    }
    s
}

/// ESS of the log posterior and acceptance rates, one line per chain.
pub fn report(paths: &[PathBuf]) -> Result<String> {
    let mut s = String::from("chain  draws  ess(logpost)  coef    thresh  omega   dim\n");
    for path in paths {
        let smp = PosteriorSamples::load(path)?;
        let trace: Vec<f64> = smp.samples.iter().map(|x| x.log_post).collect();
        let ess = effective_sample_size(&trace).map_or("-".to_string(), |v| format!("{v:.1}"));
        let a = &smp.acceptance;
        let rate = |c: &crate::mcmc::Counter| if c.proposed == 0 { "-".to_string() } else { format!("{:.3}", c.rate()) };
        let _ = writeln!(
            s,
            "{:<6} {:<6} {:<13} {:<7} {:<7} {:<7} {}",
            smp.header.chain,
            smp.samples.len(),
            ess,
            rate(&a.coefficient),
            rate(&a.threshold),
            rate(&a.omega),
            rate(&a.dimension)
        );
    }
    Ok(s)
}
