//! File formats: CSV data, run configuration, network JSON/DOT, truth JSON.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{Dataset, Standardization};
use crate::error::{Error, Result};
use crate::mcmc::{ChainConfig, EdgeKind, Flavor};
use crate::priors::HyperParams;
use crate::sem::SupportMask;
use crate::simgen::ScenarioConfig;
use crate::summary::{EdgeId, EdgeProbabilities, Selection};

/// Reads a numeric CSV with a header row.
pub fn read_matrix_csv(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Data { path: path.into(), message: format!("{other:?}") },
        })?;
    let names: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(Error::Data { path: path.into(), message: "missing header row".into() });
    }
    let mut values = Vec::new();
    let mut rows = 0;
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Data { path: path.into(), message: format!("row {}: {e}", r + 1) })?;
        if rec.len() != names.len() {
            return Err(Error::Data {
                path: path.into(),
                message: format!("row {} has {} fields, header has {}", r + 1, rec.len(), names.len()),
            });
        }
        for (c, cell) in rec.iter().enumerate() {
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
                return Err(Error::MissingValue { path: path.into(), row: r + 1, column: names[c].clone() });
            }
            let v: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                path: path.into(),
                row: r + 1,
                column: names[c].clone(),
                cell: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonNumeric { path: path.into(), row: r + 1, column: names[c].clone(), cell: cell.to_string() });
            }
            values.push(v);
        }
        rows += 1;
    }
    Ok((names.clone(), DMatrix::from_row_slice(rows, names.len(), &values)))
}

/// Writes a matrix as CSV; values use the shortest representation that parses back exactly.
pub fn write_matrix_csv(path: &Path, names: &[String], m: &DMatrix<f64>) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    wtr.write_record(names)?;
    for r in 0..m.nrows() {
        wtr.write_record(m.row(r).iter().map(|v| v.to_string()))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Data { path: path.into(), message: format!("{other:?}") },
    }
}

pub fn read_labels_csv(path: &Path) -> Result<Vec<usize>> {
    let (names, m) = read_matrix_csv(path)?;
    if names.len() != 1 {
        return Err(Error::Data { path: path.into(), message: format!("expected one label column, found {}", names.len()) });
    }
    m.iter()
        .enumerate()
        .map(|(r, &v)| {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Data { path: path.into(), message: format!("row {}: label {v} is not a positive integer", r + 1) })
            }
        })
        .collect()
}

pub fn write_labels_csv(path: &Path, header: &str, labels: &[usize]) -> Result<()> {
    let m = DMatrix::from_iterator(labels.len(), 1, labels.iter().map(|&l| l as f64));
    write_matrix_csv(path, &[header.to_string()], &m)
}

/// Loads, validates and standardizes a dataset.
pub fn load_dataset(y_path: &Path, x_path: &Path, labels_path: Option<&Path>) -> Result<Dataset> {
    let (y_names, y) = read_matrix_csv(y_path)?;
    let (x_names, x) = read_matrix_csv(x_path)?;
    if y.nrows() != x.nrows() {
        return Err(Error::Dimension(format!(
            "{} has {} rows but {} has {}",
            y_path.display(),
            y.nrows(),
            x_path.display(),
            x.nrows()
        )));
    }
    let labels = match labels_path {
        Some(p) => {
            let l = read_labels_csv(p)?;
            if l.len() != y.nrows() {
                return Err(Error::Dimension(format!("{} has {} rows but the data have {}", p.display(), l.len(), y.nrows())));
            }
            Some(l)
        }
        None => None,
    };
    let mut data = Dataset::new(y, x, labels)?;
    data.y_names = y_names;
    data.x_names = x_names;
    data.standardize().map_err(|e| match e {
        Error::ConstantColumn { column, .. } => {
            let path = if data.y_names.contains(&column) { y_path } else { x_path };
            Error::ConstantColumn { path: path.into(), column }
        }
        other => other,
    })?;
    Ok(data)
}

/// Writes the raw (unstandardized) data of `data` as `y.csv`, `x.csv` and, if labelled, `labels.csv`.
pub fn write_dataset(dir: &Path, data: &Dataset) -> Result<()> {
    write_matrix_csv(&dir.join("y.csv"), &data.y_names, &data.y)?;
    write_matrix_csv(&dir.join("x.csv"), &data.x_names, &data.x)?;
    if let Some(l) = &data.labels {
        write_labels_csv(&dir.join("labels.csv"), "label", l)?;
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&s).map_err(|e| Error::Format { path: path.into(), message: e.to_string() })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SupportKind {
    /// Each gene is affected only by its own copy-number and methylation columns.
    #[default]
    Block,
    Full,
}

impl SupportKind {
    pub fn mask(self, p: usize, q: usize) -> Result<SupportMask> {
        match self {
            SupportKind::Block => SupportMask::block(p, q),
            SupportKind::Full => Ok(SupportMask::full(p, q)),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub y: Option<PathBuf>,
    pub x: Option<PathBuf>,
    pub labels: Option<PathBuf>,
}

/// Contents of a `--config` TOML file. Every field is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub flavor: Flavor,
    pub fdr: f64,
    pub chains: usize,
    pub support: SupportKind,
    pub out: Option<PathBuf>,
    pub data: DataPaths,
    pub scenario: ScenarioConfig,
    pub hyper: HyperParams,
    pub chain: ChainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            flavor: Flavor::Known,
            fdr: 0.01,
            chains: 1,
            support: SupportKind::Block,
            out: None,
            data: DataPaths::default(),
            scenario: ScenarioConfig::default(),
            hyper: HyperParams::default(),
            chain: ChainConfig::desk(),
        }
    }
}

impl RunConfig {
    /// Parses a TOML file; relative data paths are resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.data.y, &mut cfg.data.x, &mut cfg.data.labels, &mut cfg.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fdr > 0.0 && self.fdr < 1.0) {
            return Err(Error::Config(format!("fdr must lie in (0, 1), got {}", self.fdr)));
        }
        if self.chains == 0 {
            return Err(Error::Config("chains must be at least 1".into()));
        }
        for p in [&self.data.y, &self.data.x, &self.data.labels].into_iter().flatten() {
            if !p.is_file() {
                return Err(Error::Config(format!("data file {} does not exist", p.display())));
            }
        }
        if self.data.y.is_some() != self.data.x.is_some() {
            return Err(Error::Config("data.y and data.x must be given together".into()));
        }
        self.chain.validate()?;
        self.scenario.validate()
    }

    /// SHA-256 over the settings that determine a chain's target and schedule.
    /// The seed, chain count and output location are excluded.
    pub fn hash(&self, flavor: Flavor) -> String {
        #[derive(Serialize)]
        struct Hashed<'a> {
            flavor: Flavor,
            support: SupportKind,
            hyper: &'a HyperParams,
            chain: ChainConfig,
        }
        let chain = ChainConfig { seed: 0, ..self.chain.clone() };
        let json = serde_json::to_vec(&Hashed { flavor, support: self.support, hyper: &self.hyper, chain })
            .expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VertexKind {
    Gene,
    Dna,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    /// 1-based; genes first, then DNA measurements.
    pub id: usize,
    pub name: String,
    pub kind: VertexKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Stimulatory,
    Inhibitory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkEdge {
    pub from: usize,
    pub to: usize,
    /// Selected in each group (or cluster).
    pub present: Vec<bool>,
    pub probability: Vec<f64>,
    /// Posterior mean of the coefficient given inclusion, on the raw data scale.
    pub coefficient: Vec<f64>,
    /// Sign of the summed coefficients of the groups where the edge is present.
    pub sign: Sign,
}

impl NetworkEdge {
    pub fn shared(&self) -> bool {
        self.present.iter().all(|&p| p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub groups: usize,
    pub fdr_level: f64,
    pub cutoff: f64,
    pub expected_fdr: f64,
    pub vertices: Vec<Vertex>,
    pub edges: Vec<NetworkEdge>,
}

impl Network {
    /// Assembles the selected edges; an edge selected in any group appears once.
    pub fn from_selection(
        probs: &EdgeProbabilities,
        selection: &Selection<EdgeId>,
        fdr_level: f64,
        y_names: &[String],
        x_names: &[String],
        standardization: Option<&Standardization>,
    ) -> Self {
        let (p, groups) = (y_names.len(), probs.groups());
        let mut vertices: Vec<Vertex> =
            y_names.iter().enumerate().map(|(j, n)| Vertex { id: j + 1, name: n.clone(), kind: VertexKind::Gene }).collect();
        vertices.extend(x_names.iter().enumerate().map(|(h, n)| Vertex { id: p + h + 1, name: n.clone(), kind: VertexKind::Dna }));
        let mut keys: Vec<(EdgeKind, usize, usize)> = selection.selected.iter().map(|e| (e.kind, e.row, e.col)).collect();
        keys.sort();
        keys.dedup();
        let edges = keys
            .into_iter()
            .map(|(kind, row, col)| {
                let id = |g| EdgeId { group: g, kind, row, col };
                let present: Vec<bool> = (0..groups).map(|g| selection.selected.contains(&id(g))).collect();
                let coefficient: Vec<f64> = (0..groups)
                    .map(|g| {
                        let v = probs.mean(&id(g));
                        match (standardization, kind) {
                            (Some(s), EdgeKind::A) => s.a_to_raw(row, col, v),
                            (Some(s), EdgeKind::B) => s.b_to_raw(row, col, v),
                            (None, _) => v,
                        }
                    })
                    .collect();
                let total: f64 = coefficient.iter().zip(&present).filter(|(_, p)| **p).map(|(c, _)| c).sum();
                let from = match kind {
                    EdgeKind::A => col + 1,
                    EdgeKind::B => p + col + 1,
                };
                NetworkEdge {
                    from,
                    to: row + 1,
                    present,
                    probability: (0..groups).map(|g| probs.prob(&id(g))).collect(),
                    coefficient,
                    sign: if total >= 0.0 { Sign::Stimulatory } else { Sign::Inhibitory },
                }
            })
            .collect();
        Self { groups, fdr_level, cutoff: selection.cutoff, expected_fdr: selection.expected_fdr, vertices, edges }
    }

    /// Graphviz rendering: solid edges are present in every group, dashed ones
    /// differ between groups; `normal` arrowheads are stimulatory, `tee` inhibitory.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph hrgm {\n");
        for v in &self.vertices {
            let shape = match v.kind {
                VertexKind::Gene => "ellipse",
                VertexKind::Dna => "box",
            };
            let _ = writeln!(out, "  {} [label={}, shape={shape}];", v.id, dot_quote(&v.name));
        }
        let mut edges: Vec<&NetworkEdge> = self.edges.iter().collect();
        edges.sort_by_key(|e| (e.from, e.to));
        for e in edges {
            let style = if e.shared() { "solid" } else { "dashed" };
            let head = match e.sign {
                Sign::Stimulatory => "normal",
                Sign::Inhibitory => "tee",
            };
            let groups: Vec<String> =
                e.present.iter().enumerate().filter(|(_, p)| **p).map(|(g, _)| (g + 1).to_string()).collect();
            let _ = writeln!(
                out,
                "  {} -> {} [style={style}, arrowhead={head}, label=\"{}\"];",
                e.from,
                e.to,
                groups.join(",")
            );
        }
        out.push_str("}\n");
        out
    }
}

fn dot_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

pub fn write_network(dir: &Path, stem: &str, network: &Network) -> Result<()> {
    write_json(&dir.join(format!("{stem}.json")), network)?;
    let path = dir.join(format!("{stem}.dot"));
    fs::write(&path, network.to_dot()).map_err(|e| Error::io(&path, e))
}

/// One row per candidate edge and group: `group,kind,to,from,probability,coefficient`.
pub fn write_edge_probs_csv(path: &Path, probs: &EdgeProbabilities) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    wtr.write_record(["group", "kind", "row", "col", "probability", "mean"])?;
    for (e, p) in probs.flat() {
        let kind = match e.kind {
            EdgeKind::A => "A",
            EdgeKind::B => "B",
        };
        wtr.write_record([
            (e.group + 1).to_string(),
            kind.to_string(),
            (e.row + 1).to_string(),
            (e.col + 1).to_string(),
            p.to_string(),
            probs.mean(&e).to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_and_standardizes() {
        let dir = tempfile::tempdir().unwrap();
        let y = write(dir.path(), "y.csv", "g1,g2\n1,2\n2,4\n3,9\n");
        let x = write(dir.path(), "x.csv", "c1\n0.5\n1\n4\n");
        let d = load_dataset(&y, &x, None).unwrap();
        assert_eq!((d.n(), d.p(), d.q()), (3, 2, 1));
        assert_eq!(d.y_names, vec!["g1", "g2"]);
        assert!(d.y.column(0).iter().sum::<f64>().abs() < 1e-12);
        assert_eq!(d.standardization.unwrap().y[0], (2.0, 1.0));
    }

    #[test]
    fn load_errors_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let x = write(dir.path(), "x.csv", "c1\n0.5\n1\n4\n");
        let constant = write(dir.path(), "c.csv", "g1\n1\n1\n1\n");
        assert!(matches!(load_dataset(&constant, &x, None), Err(Error::ConstantColumn { ref column, .. }) if column == "g1"));
        let missing = write(dir.path(), "m.csv", "g1,g2\n1,2\n2,\n3,1\n");
        assert!(matches!(
            load_dataset(&missing, &x, None),
            Err(Error::MissingValue { row: 2, ref column, .. }) if column == "g2"
        ));
        let text = write(dir.path(), "t.csv", "g1\n1\nabc\n3\n");
        assert!(matches!(load_dataset(&text, &x, None), Err(Error::NonNumeric { row: 2, ref cell, .. }) if cell == "abc"));
        let short = write(dir.path(), "s.csv", "g1\n1\n2\n");
        assert!(matches!(load_dataset(&short, &x, None), Err(Error::Dimension(_))));
        let labels = write(dir.path(), "l.csv", "label\n1\n0\n1\n");
        let y = write(dir.path(), "y.csv", "g1\n1\n2\n5\n");
        assert!(matches!(load_dataset(&y, &x, Some(&labels)), Err(Error::Data { .. })));
        assert!(matches!(load_dataset(&dir.path().join("nope.csv"), &x, None), Err(Error::Io { .. })));
    }

    #[test]
    fn write_then_load_round_trips() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let y = DMatrix::from_fn(20, 3, |_, _| rng.random::<f64>() * 100.0 - 50.0);
        let x = DMatrix::from_fn(20, 2, |_, _| rng.random::<f64>() * 1e-3);
        let labels = (0..20).map(|i| 1 + i % 2).collect();
        let raw = Dataset::new(y, x, Some(labels)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &raw).unwrap();
        let loaded =
            load_dataset(&dir.path().join("y.csv"), &dir.path().join("x.csv"), Some(&dir.path().join("labels.csv"))).unwrap();
        let mut expected = raw.clone();
        expected.standardize().unwrap();
        assert_eq!(loaded.labels, raw.labels);
        assert!((loaded.y - expected.y).abs().max() < 1e-12);
        assert!((loaded.x - expected.x).abs().max() < 1e-12);
    }

    fn one_edge_network(groups: usize, present: Vec<bool>, value: f64) -> Network {
        let probs = EdgeProbabilities {
            a: vec![DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.99, 0.0]); groups],
            b: vec![DMatrix::zeros(2, 2); groups],
            a_mean: vec![DMatrix::from_row_slice(2, 2, &[0.0, 0.0, value, 0.0]); groups],
            b_mean: vec![DMatrix::zeros(2, 2); groups],
        };
        let selected = (0..groups)
            .filter(|&g| present[g])
            .map(|g| EdgeId { group: g, kind: EdgeKind::A, row: 1, col: 0 })
            .collect();
        let sel = Selection { selected, cutoff: 0.99, expected_fdr: 0.01 };
        let names = |s: &str| vec![format!("{s}1"), format!("{s}2")];
        Network::from_selection(&probs, &sel, 0.01, &names("g"), &names("c"), None)
    }

    #[test]
    fn dot_styles() {
        let dot = one_edge_network(2, vec![true, true], 0.5).to_dot();
        assert!(dot.contains("  1 -> 2 [style=solid, arrowhead=normal, label=\"1,2\"];"), "{dot}");
        let dot = one_edge_network(2, vec![false, true], -0.5).to_dot();
        assert!(dot.contains("  1 -> 2 [style=dashed, arrowhead=tee, label=\"2\"];"), "{dot}");
    }

    #[test]
    fn empty_network_is_valid() {
        let net = one_edge_network(2, vec![false, false], 0.5);
        assert!(net.edges.is_empty());
        let dot = net.to_dot();
        assert!(dot.starts_with("digraph hrgm {\n") && dot.ends_with("}\n"));
        assert!(!dot.contains("->"));
        let dir = tempfile::tempdir().unwrap();
        write_network(dir.path(), "network", &net).unwrap();
        let back: Network = read_json(&dir.path().join("network.json")).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn network_json_round_trips() {
        let net = one_edge_network(3, vec![true, false, true], 0.123456789);
        let dir = tempfile::tempdir().unwrap();
        write_network(dir.path(), "net", &net).unwrap();
        let first = fs::read(dir.path().join("net.json")).unwrap();
        let back: Network = read_json(&dir.path().join("net.json")).unwrap();
        assert_eq!(back, net);
        write_network(dir.path(), "net", &back).unwrap();
        assert_eq!(fs::read(dir.path().join("net.json")).unwrap(), first);
    }

    #[test]
    fn raw_scale_coefficients() {
        let probs = EdgeProbabilities {
            a: vec![DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0])],
            b: vec![DMatrix::zeros(2, 1)],
            a_mean: vec![DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.5, 0.0])],
            b_mean: vec![DMatrix::zeros(2, 1)],
        };
        let sel = Selection { selected: vec![EdgeId { group: 0, kind: EdgeKind::A, row: 1, col: 0 }], cutoff: 1.0, expected_fdr: 0.0 };
        let st = Standardization { y: vec![(0.0, 2.0), (1.0, 6.0)], x: vec![(0.0, 1.0)] };
        let net = Network::from_selection(&probs, &sel, 0.01, &["a".into(), "b".into()], &["c".into()], Some(&st));
        // y2 = 0.5 * y1 on the standardized scale is y2 = 0.5 * 6 / 2 * y1 raw.
        assert_eq!(net.edges[0].coefficient, vec![1.5]);
    }

    #[test]
    fn config_parsing_and_hash() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            dir.path(),
            "run.toml",
            "flavor = \"dm\"\nfdr = 0.05\n[chain]\niterations = 100\nburn_in = 50\nthin = 1\nseed = 9\n[hyper]\neta = 2.0\n",
        );
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.flavor, Flavor::Dm);
        assert_eq!(cfg.hyper.eta, 2.0);
        assert_eq!(cfg.hyper.a_sigma, HyperParams::default().a_sigma);
        let reseeded = RunConfig { chain: ChainConfig { seed: 10, ..cfg.chain.clone() }, ..cfg.clone() };
        assert_eq!(cfg.hash(Flavor::Dm), reseeded.hash(Flavor::Dm));
        assert_ne!(cfg.hash(Flavor::Dm), cfg.hash(Flavor::Py));
        let other = RunConfig { hyper: HyperParams { eta: 3.0, ..cfg.hyper.clone() }, ..cfg.clone() };
        assert_ne!(cfg.hash(Flavor::Dm), other.hash(Flavor::Dm));

        let bad = write(dir.path(), "bad.toml", "fdr = 1.5\n");
        assert!(matches!(RunConfig::load(&bad), Err(Error::Config(_))));
        let unknown = write(dir.path(), "u.toml", "bogus = 1\n");
        assert!(matches!(RunConfig::load(&unknown), Err(Error::Config(_))));
        let missing = write(dir.path(), "m.toml", "[data]\ny = \"nope.csv\"\nx = \"nope.csv\"\n");
        assert!(matches!(RunConfig::load(&missing), Err(Error::Config(_))));
    }
}
