//! Scoring of structure recovery and partition recovery.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::EdgeKind;
use crate::summary::{EdgeId, EdgeProbabilities};

/// Area under the ROC curve via the rank statistic; tied scores get midranks.
pub fn roc_auc(truth: &[bool], scores: &[f64]) -> Result<f64> {
    if truth.len() != scores.len() {
        return Err(Error::Dimension(format!("{} labels but {} scores", truth.len(), scores.len())));
    }
    let pos = truth.iter().filter(|&&t| t).count();
    let neg = truth.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Degenerate("ROC AUC needs at least one positive and one negative label".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidParameter("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = mid;
        }
        i = j + 1;
    }
    let rank_sum: f64 = truth.iter().zip(&ranks).filter(|(t, _)| **t).map(|(_, r)| r).sum();
    let (pos, neg) = (pos as f64, neg as f64);
    Ok((rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg))
}

fn contingency(p1: &[usize], p2: &[usize]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    if p1.len() != p2.len() {
        return Err(Error::Dimension(format!("partitions of {} and {} items", p1.len(), p2.len())));
    }
    let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
    let mut rows: HashMap<usize, f64> = HashMap::new();
    let mut cols: HashMap<usize, f64> = HashMap::new();
    for (&a, &b) in p1.iter().zip(p2) {
        *joint.entry((a, b)).or_default() += 1.0;
        *rows.entry(a).or_default() += 1.0;
        *cols.entry(b).or_default() += 1.0;
    }
    Ok((joint.into_values().collect(), rows.into_values().collect(), cols.into_values().collect()))
}

fn pairs(x: f64) -> f64 {
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index of two labelings of the same items (labels are arbitrary).
pub fn adjusted_rand(p1: &[usize], p2: &[usize]) -> Result<f64> {
    let (joint, rows, cols) = contingency(p1, p2)?;
    let n = p1.len() as f64;
    let index: f64 = joint.iter().map(|&x| pairs(x)).sum();
    let a: f64 = rows.iter().map(|&x| pairs(x)).sum();
    let b: f64 = cols.iter().map(|&x| pairs(x)).sum();
    let total = pairs(n);
    let expected = if total > 0.0 { a * b / total } else { 0.0 };
    let max = (a + b) / 2.0;
    if max == expected {
        // Both partitions trivial in the same way (or n < 2).
        return Ok(if index == max { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}

/// Variation of information in nats, together with its value divided by `ln n`.
///
/// The normalized value is what reports call the adjusted VI.
pub fn variation_of_information(p1: &[usize], p2: &[usize]) -> Result<(f64, f64)> {
    let (joint, rows, cols) = contingency(p1, p2)?;
    let n = p1.len() as f64;
    if n == 0.0 {
        return Ok((0.0, 0.0));
    }
    let h = |counts: &[f64]| -> f64 { counts.iter().map(|&c| -(c / n) * (c / n).ln()).sum() };
    // VI = 2 H(joint) - H(rows) - H(cols)
    let vi = (2.0 * h(&joint) - h(&rows) - h(&cols)).max(0.0);
    let norm = if n > 1.0 { vi / n.ln() } else { 0.0 };
    Ok((vi, norm))
}

/// Maps each estimated cluster (0-based index into `estimate`'s distinct labels,
/// in order of first appearance) to the true label it shares the most items with.
/// Ties go to the smaller true label.
pub fn match_clusters(estimate: &[usize], truth: &[usize]) -> Result<Vec<usize>> {
    if estimate.len() != truth.len() {
        return Err(Error::Dimension(format!("partitions of {} and {} items", estimate.len(), truth.len())));
    }
    let mut order: Vec<usize> = Vec::new();
    for &e in estimate {
        if !order.contains(&e) {
            order.push(e);
        }
    }
    Ok(order
        .iter()
        .map(|&c| {
            let mut counts: HashMap<usize, usize> = HashMap::new();
            for (&e, &t) in estimate.iter().zip(truth) {
                if e == c {
                    *counts.entry(t).or_default() += 1;
                }
            }
            let best = counts.values().copied().max().unwrap_or(0);
            counts.into_iter().filter(|(_, n)| *n == best).map(|(t, _)| t).min().expect("cluster is non-empty")
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRecovery {
    pub group: usize,
    pub true_edges: usize,
    pub selected_edges: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub tpr: f64,
    pub fpr: f64,
    pub auc: Option<f64>,
}

/// Recovery of the gene network (off-diagonal `A` entries).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub candidates: usize,
    pub true_edges: usize,
    pub selected_edges: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub tpr: f64,
    pub fpr: f64,
    /// Fraction of selected edges absent from the truth (0 when nothing is selected).
    pub realized_fdr: f64,
    /// `None` when the truth has no edges or is complete.
    pub auc: Option<f64>,
    pub per_group: Vec<GroupRecovery>,
}

#[derive(Default)]
struct Tally {
    truth: Vec<bool>,
    scores: Vec<f64>,
    selected: usize,
    tp: usize,
    fp: usize,
}

impl Tally {
    fn rates(&self) -> (usize, f64, f64, Option<f64>) {
        let pos = self.truth.iter().filter(|&&t| t).count();
        let neg = self.truth.len() - pos;
        let tpr = if pos > 0 { self.tp as f64 / pos as f64 } else { 0.0 };
        let fpr = if neg > 0 { self.fp as f64 / neg as f64 } else { 0.0 };
        (pos, tpr, fpr, roc_auc(&self.truth, &self.scores).ok())
    }
}

/// Scores `probs` and `selected` against the true `A` supports, one per group.
/// `truth[g]` is compared with group (or cluster) `g` of `probs`.
pub fn recovery_report(truth: &[DMatrix<bool>], probs: &EdgeProbabilities, selected: &[EdgeId]) -> Result<RecoveryReport> {
    if truth.len() != probs.groups() {
        return Err(Error::Dimension(format!("{} true graphs for {} estimated groups", truth.len(), probs.groups())));
    }
    let p = probs.p();
    if truth.iter().any(|t| t.nrows() != p || t.ncols() != p) {
        return Err(Error::Dimension(format!("true supports must be {p} x {p}")));
    }
    let mut pooled = Tally::default();
    let mut per_group = Vec::with_capacity(truth.len());
    for (g, support) in truth.iter().enumerate() {
        let mut t = Tally::default();
        for (e, prob) in probs.flat_a().into_iter().filter(|(e, _)| e.group == g) {
            let is_true = support[(e.row, e.col)];
            t.truth.push(is_true);
            t.scores.push(prob);
        }
        for e in selected.iter().filter(|e| e.group == g && e.kind == EdgeKind::A && e.row != e.col) {
            t.selected += 1;
            if support[(e.row, e.col)] {
                t.tp += 1;
            } else {
                t.fp += 1;
            }
        }
        let (pos, tpr, fpr, auc) = t.rates();
        per_group.push(GroupRecovery {
            group: g,
            true_edges: pos,
            selected_edges: t.selected,
            true_positives: t.tp,
            false_positives: t.fp,
            tpr,
            fpr,
            auc,
        });
        pooled.truth.extend(t.truth);
        pooled.scores.extend(t.scores);
        pooled.selected += t.selected;
        pooled.tp += t.tp;
        pooled.fp += t.fp;
    }
    let (pos, tpr, fpr, auc) = pooled.rates();
    Ok(RecoveryReport {
        candidates: pooled.truth.len(),
        true_edges: pos,
        selected_edges: pooled.selected,
        true_positives: pooled.tp,
        false_positives: pooled.fp,
        tpr,
        fpr,
        realized_fdr: if pooled.selected > 0 { pooled.fp as f64 / pooled.selected as f64 } else { 0.0 },
        auc,
        per_group,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Fraction of (positive, negative) pairs ranked correctly, ties counting one half.
    fn auc_by_pairs(truth: &[bool], scores: &[f64]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..truth.len() {
            for j in 0..truth.len() {
                if truth[i] && !truth[j] {
                    den += 1.0;
                    num += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    /// Pair-counting ARI straight from the definition.
    fn ari_by_pairs(p1: &[usize], p2: &[usize]) -> f64 {
        let n = p1.len();
        let (mut both, mut in1, mut in2, mut total) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            for j in i + 1..n {
                let a = p1[i] == p1[j];
                let b = p2[i] == p2[j];
                total += 1.0;
                in1 += a as u8 as f64;
                in2 += b as u8 as f64;
                both += (a && b) as u8 as f64;
            }
        }
        let expected = in1 * in2 / total;
        (both - expected) / ((in1 + in2) / 2.0 - expected)
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[true, true, false, false], &[0.9, 0.8, 0.2, 0.1]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[true, true, false, false], &[0.9, 0.4, 0.6, 0.1]).unwrap(), 0.75);
        assert_eq!(roc_auc(&[true, false], &[0.5, 0.5]).unwrap(), 0.5);
        assert!(roc_auc(&[true, true], &[0.1, 0.2]).is_err());
        assert!(roc_auc(&[true, false], &[0.1]).is_err());
    }

    #[test]
    fn auc_of_unrelated_scores_is_near_half() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let truth: Vec<bool> = (0..20_000).map(|_| rng.random_bool(0.3)).collect();
        let scores: Vec<f64> = (0..20_000).map(|_| rng.random()).collect();
        assert!((roc_auc(&truth, &scores).unwrap() - 0.5).abs() < 0.02);
    }

    #[test]
    fn ari_examples() {
        assert_eq!(adjusted_rand(&[1, 1, 2, 3], &[7, 7, 4, 5]).unwrap(), 1.0);
        assert_eq!(adjusted_rand(&[1, 2, 3, 4], &[1, 1, 1, 1]).unwrap(), 0.0);
        let ari = adjusted_rand(&[1, 1, 2, 2], &[1, 2, 1, 2]).unwrap();
        assert!((ari - ari_by_pairs(&[1, 1, 2, 2], &[1, 2, 1, 2])).abs() < 1e-15);
        assert!((ari + 0.5).abs() < 1e-15);
        assert!(adjusted_rand(&[1, 2], &[1]).is_err());
    }

    #[test]
    fn vi_examples() {
        assert_eq!(variation_of_information(&[1, 1, 2], &[2, 2, 1]).unwrap().0, 0.0);
        let (vi, norm) = variation_of_information(&[1, 1, 1, 1], &[1, 1, 2, 2]).unwrap();
        assert!((vi - 2f64.ln()).abs() < 1e-15);
        assert!((norm - 0.5).abs() < 1e-15);
        assert!(variation_of_information(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn matching_uses_majority_overlap() {
        assert_eq!(match_clusters(&[5, 5, 5, 2, 2], &[1, 1, 2, 2, 2]).unwrap(), vec![1, 2]);
    }

    #[test]
    fn report_counts() {
        let truth = vec![DMatrix::from_row_slice(2, 2, &[false, true, false, false])];
        let probs = EdgeProbabilities {
            a: vec![DMatrix::from_row_slice(2, 2, &[0.0, 0.9, 0.2, 0.0])],
            b: vec![DMatrix::zeros(2, 1)],
            a_mean: vec![DMatrix::zeros(2, 2)],
            b_mean: vec![DMatrix::zeros(2, 1)],
        };
        let sel = vec![
            EdgeId { group: 0, kind: EdgeKind::A, row: 0, col: 1 },
            EdgeId { group: 0, kind: EdgeKind::A, row: 1, col: 0 },
        ];
        let r = recovery_report(&truth, &probs, &sel).unwrap();
        assert_eq!((r.candidates, r.true_edges, r.true_positives, r.false_positives), (2, 1, 1, 1));
        assert_eq!((r.tpr, r.fpr, r.realized_fdr, r.auc), (1.0, 1.0, 0.5, Some(1.0)));
    }

    fn labels(n: usize) -> impl Strategy<Value = Vec<usize>> {
        proptest::collection::vec(0usize..4, n)
    }

    proptest! {
        #[test]
        fn auc_matches_pair_count_and_is_rank_invariant(
            data in proptest::collection::vec((any::<bool>(), 0u8..10), 2..30),
        ) {
            let truth: Vec<bool> = data.iter().map(|d| d.0).collect();
            let scores: Vec<f64> = data.iter().map(|d| d.1 as f64 / 10.0).collect();
            prop_assume!(truth.iter().any(|&t| t) && truth.iter().any(|&t| !t));
            let auc = roc_auc(&truth, &scores).unwrap();
            prop_assert!((auc - auc_by_pairs(&truth, &scores)).abs() < 1e-12);
            let moved: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
            prop_assert_eq!(roc_auc(&truth, &moved).unwrap(), auc);
        }

        #[test]
        fn ari_is_relabel_invariant_and_matches_pairs(a in labels(8), b in labels(8), perm in Just([3usize, 0, 2, 1]).prop_shuffle()) {
            let ari = adjusted_rand(&a, &b).unwrap();
            let relabeled: Vec<usize> = a.iter().map(|&l| perm[l] + 10).collect();
            prop_assert!((adjusted_rand(&relabeled, &b).unwrap() - ari).abs() < 1e-12);
            prop_assert!((adjusted_rand(&b, &a).unwrap() - ari).abs() < 1e-12);
            let denom_ok = !ari_by_pairs(&a, &b).is_nan();
            if denom_ok {
                prop_assert!((ari - ari_by_pairs(&a, &b)).abs() < 1e-12);
            }
        }

        #[test]
        fn vi_is_a_metric(a in labels(8), b in labels(8), c in labels(8)) {
            let vi = |x: &[usize], y: &[usize]| variation_of_information(x, y).unwrap().0;
            prop_assert!((vi(&a, &b) - vi(&b, &a)).abs() < 1e-12);
            prop_assert!(vi(&a, &c) <= vi(&a, &b) + vi(&b, &c) + 1e-12);
            prop_assert!(vi(&a, &a).abs() < 1e-12);
        }
    }
}
