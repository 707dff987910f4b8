//! Posterior summaries: edge inclusion probabilities, FDR-controlled edge
//! selection, co-clustering and a point partition.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use crate::diagnostics::effective_sample_size;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::mcmc::cluster::Partition;
use crate::mcmc::{EdgeKind, PosteriorSamples, Sample};

/// Posterior inclusion probability and conditional mean of every coefficient,
/// per group (known groups) or per point-estimate cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeProbabilities {
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    /// Mean of each coefficient over the draws in which it is nonzero (0 if never).
    pub a_mean: Vec<DMatrix<f64>>,
    pub b_mean: Vec<DMatrix<f64>>,
}

/// One coefficient of one group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeId {
    pub group: usize,
    pub kind: EdgeKind,
    pub row: usize,
    pub col: usize,
}

impl EdgeProbabilities {
    pub fn groups(&self) -> usize {
        self.a.len()
    }

    pub fn p(&self) -> usize {
        self.a.first().map_or(0, |m| m.nrows())
    }

    pub fn q(&self) -> usize {
        self.b.first().map_or(0, |m| m.ncols())
    }

    pub fn prob(&self, e: &EdgeId) -> f64 {
        match e.kind {
            EdgeKind::A => self.a[e.group][(e.row, e.col)],
            EdgeKind::B => self.b[e.group][(e.row, e.col)],
        }
    }

    pub fn mean(&self, e: &EdgeId) -> f64 {
        match e.kind {
            EdgeKind::A => self.a_mean[e.group][(e.row, e.col)],
            EdgeKind::B => self.b_mean[e.group][(e.row, e.col)],
        }
    }

    /// Every off-diagonal `A` entry and every `B` entry of every group, with its probability.
    pub fn flat(&self) -> Vec<(EdgeId, f64)> {
        let mut out = Vec::new();
        for g in 0..self.groups() {
            for row in 0..self.p() {
                for col in 0..self.p() {
                    if row != col {
                        out.push((EdgeId { group: g, kind: EdgeKind::A, row, col }, self.a[g][(row, col)]));
                    }
                }
            }
            for row in 0..self.p() {
                for col in 0..self.q() {
                    out.push((EdgeId { group: g, kind: EdgeKind::B, row, col }, self.b[g][(row, col)]));
                }
            }
        }
        out
    }

    /// Off-diagonal `A` entries only.
    pub fn flat_a(&self) -> Vec<(EdgeId, f64)> {
        self.flat().into_iter().filter(|(e, _)| e.kind == EdgeKind::A).collect()
    }
}

struct Accum {
    a: Vec<DMatrix<f64>>,
    b: Vec<DMatrix<f64>>,
    a_sum: Vec<DMatrix<f64>>,
    b_sum: Vec<DMatrix<f64>>,
}

impl Accum {
    fn new(groups: usize, p: usize, q: usize) -> Self {
        Self {
            a: vec![DMatrix::zeros(p, p); groups],
            b: vec![DMatrix::zeros(p, q); groups],
            a_sum: vec![DMatrix::zeros(p, p); groups],
            b_sum: vec![DMatrix::zeros(p, q); groups],
        }
    }

    fn merge(mut self, other: Accum) -> Self {
        for g in 0..self.a.len() {
            self.a[g] += &other.a[g];
            self.b[g] += &other.b[g];
            self.a_sum[g] += &other.a_sum[g];
            self.b_sum[g] += &other.b_sum[g];
        }
        self
    }

    fn finish(self, draws: f64) -> EdgeProbabilities {
        let mean = |sum: &DMatrix<f64>, count: &DMatrix<f64>| sum.zip_map(count, |s, c| if c > 0.0 { s / c } else { 0.0 });
        let a_mean = self.a_sum.iter().zip(&self.a).map(|(s, c)| mean(s, c)).collect();
        let b_mean = self.b_sum.iter().zip(&self.b).map(|(s, c)| mean(s, c)).collect();
        EdgeProbabilities {
            a: self.a.into_iter().map(|m| m / draws).collect(),
            b: self.b.into_iter().map(|m| m / draws).collect(),
            a_mean,
            b_mean,
        }
    }
}

/// Fraction of retained draws in which each coefficient is nonzero.
///
/// Known-group samples are summarized per group. Clustering samples are
/// summarized per cluster of the least-squares point partition, see
/// [`edge_inclusion_probs_by_partition`].
pub fn edge_inclusion_probs(samples: &PosteriorSamples) -> Result<EdgeProbabilities> {
    if samples.samples.is_empty() {
        return Err(Error::InvalidParameter("no retained samples".into()));
    }
    if samples.header.groups == 0 {
        let cc = coclustering(samples, Exec::default())?;
        let point = point_partition(&cc, samples)?;
        return edge_inclusion_probs_by_partition(samples, &point, Exec::default());
    }
    let (g, p, q) = (samples.header.groups, samples.header.p, samples.header.q);
    let mut acc = Accum::new(g, p, q);
    for s in &samples.samples {
        if s.groups.len() != g {
            return Err(Error::Dimension(format!("sample {} has {} groups, expected {g}", s.iter, s.groups.len())));
        }
        for (gi, draw) in s.groups.iter().enumerate() {
            for &(r, c, v) in &draw.a {
                acc.a[gi][(r, c)] += 1.0;
                acc.a_sum[gi][(r, c)] += v;
            }
            for &(r, c, v) in &draw.b {
                acc.b[gi][(r, c)] += 1.0;
                acc.b_sum[gi][(r, c)] += v;
            }
        }
    }
    Ok(acc.finish(samples.samples.len() as f64))
}

/// Edge probabilities of each cluster of `point`: for every draw, the fraction
/// of the cluster's members whose sampled cluster contains the edge, averaged
/// over draws. This is immune to label switching.
pub fn edge_inclusion_probs_by_partition(
    samples: &PosteriorSamples,
    point: &Partition,
    exec: Exec,
) -> Result<EdgeProbabilities> {
    if samples.samples.is_empty() {
        return Err(Error::InvalidParameter("no retained samples".into()));
    }
    let (p, q, kp) = (samples.header.p, samples.header.q, point.k);
    let sizes: Vec<f64> = point.counts().into_iter().map(|c| c as f64).collect();
    for s in &samples.samples {
        match &s.alloc {
            Some(a) if a.len() == point.n() => {}
            _ => return Err(Error::InvalidParameter(format!("sample {} has no matching allocation trace", s.iter))),
        }
    }
    let per_sample = |s: &Sample| -> Accum {
        let alloc = s.alloc.as_ref().expect("checked above");
        let mut acc = Accum::new(kp, p, q);
        // members[c][k]: number of point-cluster c members in sampled cluster k.
        let mut members = vec![vec![0.0; s.k]; kp];
        for (i, &k) in alloc.iter().enumerate() {
            members[point.s[i] - 1][k - 1] += 1.0;
        }
        for c in 0..kp {
            for (k, draw) in s.groups.iter().enumerate() {
                let w = members[c][k] / sizes[c];
                if w == 0.0 {
                    continue;
                }
                for &(r, col, v) in &draw.a {
                    acc.a[c][(r, col)] += w;
                    acc.a_sum[c][(r, col)] += w * v;
                }
                for &(r, col, v) in &draw.b {
                    acc.b[c][(r, col)] += w;
                    acc.b_sum[c][(r, col)] += w * v;
                }
            }
        }
        acc
    };
    let parts = exec.map_slice(&samples.samples, per_sample);
    let total = parts.into_iter().fold(Accum::new(kp, p, q), Accum::merge);
    Ok(total.finish(samples.samples.len() as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection<E> {
    pub selected: Vec<E>,
    pub cutoff: f64,
    pub expected_fdr: f64,
}

/// Posterior expected FDR of the set `{e : p_e >= cutoff}`.
pub fn expected_fdr(probs: &[f64], cutoff: f64) -> f64 {
    let (mut miss, mut count) = (0.0, 0usize);
    for &p in probs {
        if p >= cutoff {
            miss += 1.0 - p;
            count += 1;
        }
    }
    miss / count.max(1) as f64
}

/// Selects every edge with probability at least the smallest cutoff whose
/// posterior expected FDR does not exceed `level`. If none qualifies the
/// selection is empty with cutoff 1.
pub fn fdr_select<E: Clone>(probs: &[(E, f64)], level: f64) -> Result<Selection<E>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("FDR level must lie in (0, 1), got {level}")));
    }
    let mut sorted: Vec<f64> = probs.iter().map(|(_, p)| *p).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    // Relative slack so that e.g. 1 - 0.99 at level 0.01 is not rejected by rounding.
    let tol = level + 1e-12;
    let (mut miss, mut best) = (0.0, None);
    let mut i = 0;
    while i < sorted.len() {
        let cutoff = sorted[i];
        while i < sorted.len() && sorted[i] == cutoff {
            miss += 1.0 - sorted[i];
            i += 1;
        }
        if miss / i as f64 <= tol {
            best = Some((cutoff, miss / i as f64));
        }
    }
    let Some((cutoff, efdr)) = best else {
        return Ok(Selection { selected: Vec::new(), cutoff: 1.0, expected_fdr: 0.0 });
    };
    let selected = probs.iter().filter(|(_, p)| *p >= cutoff).map(|(e, _)| e.clone()).collect();
    Ok(Selection { selected, cutoff, expected_fdr: efdr })
}

/// Posterior probability that two subjects share a cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoclusteringMatrix {
    pub m: DMatrix<f64>,
}

impl CoclusteringMatrix {
    pub fn n(&self) -> usize {
        self.m.nrows()
    }
}

fn allocations(samples: &PosteriorSamples) -> Result<Vec<&[usize]>> {
    if samples.samples.is_empty() {
        return Err(Error::InvalidParameter("no retained samples".into()));
    }
    samples
        .samples
        .iter()
        .map(|s| {
            s.alloc
                .as_deref()
                .ok_or_else(|| Error::InvalidParameter(format!("sample {} has no allocation trace", s.iter)))
        })
        .collect()
}

pub fn coclustering(samples: &PosteriorSamples, exec: Exec) -> Result<CoclusteringMatrix> {
    let allocs = allocations(samples)?;
    let n = allocs[0].len();
    if allocs.iter().any(|a| a.len() != n) {
        return Err(Error::Dimension("allocation traces differ in length".into()));
    }
    let m = allocs.len() as f64;
    let rows = exec.map_range(n, |i| {
        let mut row = vec![0.0; n];
        for a in &allocs {
            for j in 0..n {
                if a[i] == a[j] {
                    row[j] += 1.0;
                }
            }
        }
        row.into_iter().map(|c| c / m).collect::<Vec<f64>>()
    });
    Ok(CoclusteringMatrix { m: DMatrix::from_fn(n, n, |i, j| rows[i][j]) })
}

/// Squared distance between a partition's co-clustering indicators and `cc`.
pub fn partition_loss(alloc: &[usize], cc: &CoclusteringMatrix) -> f64 {
    let n = alloc.len();
    let mut out = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let ind = if alloc[i] == alloc[j] { 1.0 } else { 0.0 };
            out += (ind - cc.m[(i, j)]).powi(2);
        }
    }
    out
}

/// The sampled partition closest to `cc` in squared loss (earliest on ties).
pub fn point_partition(cc: &CoclusteringMatrix, samples: &PosteriorSamples) -> Result<Partition> {
    let allocs = allocations(samples)?;
    if allocs.iter().any(|a| a.len() != cc.n()) {
        return Err(Error::Dimension("allocation traces do not match the co-clustering matrix".into()));
    }
    let losses = Exec::default().map_slice(&allocs, |a| partition_loss(a, cc));
    let mut best = 0;
    for (i, l) in losses.iter().enumerate() {
        if *l < losses[best] {
            best = i;
        }
    }
    Ok(Partition::canonical(allocs[best]))
}

/// Posterior mode of the number of occupied clusters (smallest on ties).
pub fn modal_k(samples: &PosteriorSamples) -> Result<usize> {
    if samples.samples.is_empty() {
        return Err(Error::InvalidParameter("no retained samples".into()));
    }
    let mut counts = std::collections::BTreeMap::new();
    for s in &samples.samples {
        *counts.entry(s.occupied()).or_insert(0usize) += 1;
    }
    let max = *counts.values().max().expect("non-empty");
    Ok(*counts.iter().find(|(_, c)| **c == max).expect("non-empty").0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcmc::samples::{GroupDraw, SampleHeader, SAMPLE_FORMAT, SAMPLE_FORMAT_VERSION};
    use crate::mcmc::{AcceptanceSummary, Flavor};
    use proptest::prelude::*;

    fn header(groups: usize, p: usize, q: usize, n: usize) -> SampleHeader {
        SampleHeader {
            format: SAMPLE_FORMAT.into(),
            version: SAMPLE_FORMAT_VERSION,
            flavor: if groups > 0 { Flavor::Known } else { Flavor::Py },
            p,
            q,
            n,
            groups,
            seed: 0,
            chain: 0,
            config_hash: String::new(),
            iterations: 10,
            burn_in: 0,
            thin: 1,
            y_names: (1..=p).map(|j| format!("y{j}")).collect(),
            x_names: (1..=q).map(|j| format!("x{j}")).collect(),
            standardization: None,
        }
    }

    fn draw(a: Vec<(usize, usize, f64)>) -> GroupDraw {
        GroupDraw { a, b: vec![], sigma: vec![1.0, 1.0] }
    }

    fn known_samples(draws: Vec<Vec<GroupDraw>>) -> PosteriorSamples {
        let groups = draws[0].len();
        PosteriorSamples {
            header: header(groups, 2, 1, 4),
            samples: draws
                .into_iter()
                .enumerate()
                .map(|(i, g)| Sample { iter: i, log_post: 0.0, k: groups, groups: g, omega: vec![], alloc: None })
                .collect(),
            log_post_trace: vec![],
            acceptance: AcceptanceSummary::default(),
        }
    }

    fn alloc_samples(allocs: Vec<Vec<usize>>) -> PosteriorSamples {
        let n = allocs[0].len();
        PosteriorSamples {
            header: header(0, 2, 1, n),
            samples: allocs
                .into_iter()
                .enumerate()
                .map(|(i, a)| {
                    let k = *a.iter().max().unwrap();
                    Sample {
                        iter: i,
                        log_post: 0.0,
                        k,
                        groups: (0..k).map(|c| draw(if c == 0 { vec![(0, 1, 0.5)] } else { vec![] })).collect(),
                        omega: vec![],
                        alloc: Some(a),
                    }
                })
                .collect(),
            log_post_trace: vec![],
            acceptance: AcceptanceSummary::default(),
        }
    }

    #[test]
    fn inclusion_probabilities_count_nonzero_draws() {
        // Ten draws: A[0,1] present in all, A[1,0] present in draws 0, 3, 4 and 9.
        let present = [0, 3, 4, 9];
        let draws = (0..10)
            .map(|i| {
                let mut a = vec![(0, 1, 0.5 + i as f64 * 0.01)];
                if present.contains(&i) {
                    a.push((1, 0, -0.3));
                }
                vec![draw(a)]
            })
            .collect();
        let probs = edge_inclusion_probs(&known_samples(draws)).unwrap();
        assert_eq!(probs.a[0][(0, 1)], 1.0);
        assert_eq!(probs.a[0][(1, 0)], 0.4);
        assert!((probs.a_mean[0][(0, 1)] - 0.545).abs() < 1e-12);
        assert_eq!(probs.a_mean[0][(1, 0)], -0.3);
        assert_eq!(probs.a[0][(0, 0)], 0.0);
    }

    #[test]
    fn one_in_four() {
        let draws = (0..4).map(|i| vec![draw(if i == 2 { vec![(0, 1, 1.0)] } else { vec![] })]).collect();
        assert_eq!(edge_inclusion_probs(&known_samples(draws)).unwrap().a[0][(0, 1)], 0.25);
    }

    #[test]
    fn empty_sample_set_is_an_error() {
        let mut s = known_samples(vec![vec![draw(vec![])]]);
        s.samples.clear();
        assert!(edge_inclusion_probs(&s).is_err());
    }

    #[test]
    fn fdr_examples() {
        let probs = vec![("a", 0.99), ("b", 0.98), ("c", 0.5)];
        let s = fdr_select(&probs, 0.01).unwrap();
        assert_eq!(s.selected, vec!["a"]);
        assert_eq!(s.cutoff, 0.99);
        let s = fdr_select(&[("a", 1.0), ("b", 1.0)], 0.01).unwrap();
        assert_eq!(s.selected.len(), 2);
        assert_eq!(s.expected_fdr, 0.0);
        let s = fdr_select(&[("a", 0.5), ("b", 0.5)], 0.01).unwrap();
        assert!(s.selected.is_empty());
        assert_eq!(s.cutoff, 1.0);
        assert!(fdr_select(&probs, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn fdr_selection_is_monotone_and_controlled(
            probs in proptest::collection::vec(0.0f64..=1.0, 1..40),
            l1 in 0.001f64..0.5,
            l2 in 0.001f64..0.5,
        ) {
            let (lo, hi) = if l1 < l2 { (l1, l2) } else { (l2, l1) };
            let flat: Vec<(usize, f64)> = probs.iter().copied().enumerate().collect();
            let s_lo = fdr_select(&flat, lo).unwrap();
            let s_hi = fdr_select(&flat, hi).unwrap();
            prop_assert!(s_lo.selected.len() <= s_hi.selected.len());
            prop_assert!(s_lo.selected.iter().all(|e| s_hi.selected.contains(e)));
            if !s_lo.selected.is_empty() {
                let chosen: Vec<f64> = s_lo.selected.iter().map(|&i| probs[i]).collect();
                prop_assert!(expected_fdr(&chosen, 0.0) <= lo + 1e-12);
            }
        }
    }

    #[test]
    fn coclustering_examples() {
        let s = alloc_samples(vec![vec![1, 1, 2]; 5]);
        let cc = coclustering(&s, Exec::Sequential).unwrap();
        assert_eq!(cc.m, DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0]));
        let s = alloc_samples(vec![vec![1, 1, 2], vec![1, 2, 2]]);
        let cc = coclustering(&s, Exec::Parallel).unwrap();
        assert_eq!(cc.m[(0, 1)], 0.5);
        assert_eq!(cc.m[(1, 2)], 0.5);
        assert_eq!(cc.m[(0, 2)], 0.0);
    }

    #[test]
    fn coclustering_hand_count() {
        // Ten draws over four subjects; subjects 1 and 4 share a cluster in draws 0, 1, 5.
        let allocs = vec![
            vec![1, 2, 2, 1],
            vec![1, 1, 1, 1],
            vec![1, 2, 3, 4],
            vec![1, 1, 2, 2],
            vec![1, 2, 1, 2],
            vec![1, 2, 2, 1],
            vec![1, 1, 2, 3],
            vec![1, 2, 1, 3],
            vec![1, 1, 1, 2],
            vec![1, 2, 2, 3],
        ];
        let s = alloc_samples(allocs);
        let cc = coclustering(&s, Exec::Sequential).unwrap();
        assert!((cc.m[(0, 3)] - 0.3).abs() < 1e-15);
        // Subjects 2 and 3: draws 0, 1, 5, 8, 9.
        assert!((cc.m[(1, 2)] - 0.5).abs() < 1e-15);
        assert_eq!(cc.m, cc.m.transpose());
    }

    #[test]
    fn point_partition_examples() {
        let s = alloc_samples(vec![vec![2, 2, 1]; 3]);
        let cc = coclustering(&s, Exec::Sequential).unwrap();
        assert_eq!(point_partition(&cc, &s).unwrap().s, vec![1, 1, 2]);

        // Three draws of {12|3}, one of {1|23}: the majority partition matches better.
        let s = alloc_samples(vec![vec![1, 2, 2], vec![1, 1, 2], vec![1, 1, 2], vec![1, 1, 2]]);
        let cc = coclustering(&s, Exec::Sequential).unwrap();
        let losses: Vec<f64> = s.samples.iter().map(|x| partition_loss(x.alloc.as_ref().unwrap(), &cc)).collect();
        // Hand scores: pi_12 = 0.75, pi_13 = 0, pi_23 = 0.25.
        assert!((losses[0] - (0.75f64.powi(2) + 0.0 + 0.75f64.powi(2))).abs() < 1e-12);
        assert!((losses[1] - (0.25f64.powi(2) + 0.0 + 0.25f64.powi(2))).abs() < 1e-12);
        assert_eq!(point_partition(&cc, &s).unwrap().s, vec![1, 1, 2]);
    }

    #[test]
    fn point_partition_is_label_invariant() {
        let a = alloc_samples(vec![vec![1, 2, 2, 3], vec![1, 1, 2, 2], vec![1, 2, 2, 2]]);
        let b = alloc_samples(vec![vec![3, 1, 1, 2], vec![2, 2, 1, 1], vec![2, 1, 1, 1]]);
        let pa = point_partition(&coclustering(&a, Exec::Sequential).unwrap(), &a).unwrap();
        let pb = point_partition(&coclustering(&b, Exec::Sequential).unwrap(), &b).unwrap();
        assert_eq!(pa, pb);
    }

    #[test]
    fn partition_edge_probabilities() {
        // Cluster 1 of every draw carries edge A[0,1].
        let s = alloc_samples(vec![vec![1, 1, 2, 2], vec![1, 1, 2, 2], vec![1, 2, 2, 2], vec![2, 2, 1, 1]]);
        let point = Partition::canonical(&[1, 1, 2, 2]);
        let probs = edge_inclusion_probs_by_partition(&s, &point, Exec::Sequential).unwrap();
        // Point cluster 1 = {1, 2}: fractions 1, 1, 0.5, 0 -> 0.625.
        assert!((probs.a[0][(0, 1)] - 0.625).abs() < 1e-15);
        // Point cluster 2 = {3, 4}: fractions 0, 0, 0, 1 -> 0.25.
        assert!((probs.a[1][(0, 1)] - 0.25).abs() < 1e-15);
        assert_eq!(modal_k(&s).unwrap(), 2);
    }
}
