//! Classification and ranking metrics.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::baselines::MethodScore;
use crate::corpus::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    /// Counts with `class` as the positive class.
    pub fn for_class(predictions: &[Label], gold: &[Label], class: Label) -> Self {
        let mut c = Self::default();
        for (&p, &g) in predictions.iter().zip(gold) {
            match (p == class, g == class) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

/// `0/0` is taken as 0.
fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub similar: ConfusionCounts,
    pub dissimilar: ConfusionCounts,
}

/// Per-class precision, recall and F1 averaged without weights over the two
/// classes (macro F1 is the mean of the per-class F1 values), plus accuracy.
pub fn prf_macro(predictions: &[Label], gold: &[Label]) -> Result<Prf> {
    if predictions.is_empty() || predictions.len() != gold.len() {
        return Err(Error::Validation(format!(
            "prf needs equal nonempty inputs, got {} predictions and {} labels",
            predictions.len(),
            gold.len()
        )));
    }
    let sim = ConfusionCounts::for_class(predictions, gold, Label::Similar);
    let dis = ConfusionCounts::for_class(predictions, gold, Label::Dissimilar);
    let correct = predictions.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(Prf {
        precision: 0.5 * (sim.precision() + dis.precision()),
        recall: 0.5 * (sim.recall() + dis.recall()),
        f1: 0.5 * (sim.f1() + dis.f1()),
        accuracy: correct as f64 / gold.len() as f64,
        similar: sim,
        dissimilar: dis,
    })
}

/// Area under the ROC curve with "similar" as the positive class, as the
/// probability that a random similar pair outscores a random dissimilar
/// one, ties counting one half. Distances are negated first.
pub fn roc_auc(scores: &[MethodScore], gold: &[Label]) -> Result<f64> {
    if scores.len() != gold.len() {
        return Err(Error::Validation("roc_auc: scores and labels differ in length".into()));
    }
    let n_pos = gold.iter().filter(|&&g| g == Label::Similar).count();
    let n_neg = gold.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Validation("roc_auc needs both classes".into()));
    }
    let mut items: Vec<(f64, bool)> = scores
        .iter()
        .zip(gold)
        .map(|(s, &g)| (s.oriented(), g == Label::Similar))
        .collect();
    items.sort_by(|a, b| a.0.total_cmp(&b.0));
    // sum of positive ranks with tied groups sharing their average rank
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < items.len() {
        let mut j = i;
        while j < items.len() && items[j].0 == items[i].0 {
            j += 1;
        }
        let avg = (i + 1 + j) as f64 / 2.0;
        rank_sum += avg * items[i..j].iter().filter(|x| x.1).count() as f64;
        i = j;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// ROC points `(false positive rate, true positive rate)` over all distinct
/// thresholds, from (0,0) to (1,1).
pub fn roc_points(scores: &[MethodScore], gold: &[Label]) -> Vec<(f64, f64)> {
    let mut items: Vec<(f64, bool)> = scores
        .iter()
        .zip(gold)
        .map(|(s, &g)| (s.oriented(), g == Label::Similar))
        .collect();
    items.sort_by(|a, b| b.0.total_cmp(&a.0));
    let n_pos = items.iter().filter(|x| x.1).count().max(1) as f64;
    let n_neg = items.iter().filter(|x| !x.1).count().max(1) as f64;
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut out = vec![(0.0, 0.0)];
    let mut i = 0;
    while i < items.len() {
        let mut j = i;
        while j < items.len() && items[j].0 == items[i].0 {
            if items[j].1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            j += 1;
        }
        out.push((fp / n_neg, tp / n_pos));
        i = j;
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainKind {
    /// `2^gain - 1`
    #[default]
    Exponential,
    /// `gain`
    Linear,
}

impl GainKind {
    fn value(self, g: u32) -> f64 {
        match self {
            GainKind::Exponential => 2f64.powi(g as i32) - 1.0,
            GainKind::Linear => g as f64,
        }
    }
}

fn dcg(gains: &[u32], k: usize, kind: GainKind) -> f64 {
    gains
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| kind.value(g) / ((i + 2) as f64).log2())
        .sum()
}

/// NDCG of the first `k` positions of `ranked_gains` (gains in ranked
/// order); 0 when no item has positive gain.
pub fn ndcg_at_k(ranked_gains: &[u32], k: usize, kind: GainKind) -> f64 {
    let mut ideal = ranked_gains.to_vec();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg(&ideal, k, kind);
    if idcg == 0.0 {
        0.0
    } else {
        dcg(ranked_gains, k, kind) / idcg
    }
}

/// Fleiss' kappa over an items x categories matrix of rater counts. When
/// every rating falls in a single category both agreement terms are 1 and
/// kappa is reported as 1.
pub fn fleiss_kappa(ratings: &[Vec<usize>]) -> Result<f64> {
    let first = ratings
        .first()
        .ok_or_else(|| Error::Validation("fleiss_kappa: no items".into()))?;
    let raters: usize = first.iter().sum();
    let k = first.len();
    if raters < 2 {
        return Err(Error::Validation(
            "fleiss_kappa needs at least two raters per item".into(),
        ));
    }
    if ratings
        .iter()
        .any(|row| row.len() != k || row.iter().sum::<usize>() != raters)
    {
        return Err(Error::Validation(
            "fleiss_kappa: items have unequal rater counts".into(),
        ));
    }
    let n = ratings.len() as f64;
    let r = raters as f64;
    let p_bar = ratings
        .iter()
        .map(|row| (row.iter().map(|&c| (c * c) as f64).sum::<f64>() - r) / (r * (r - 1.0)))
        .sum::<f64>()
        / n;
    let p_e: f64 = (0..k)
        .map(|j| {
            let p = ratings.iter().map(|row| row[j] as f64).sum::<f64>() / (n * r);
            p * p
        })
        .sum();
    if p_e == 1.0 {
        return Ok(1.0);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// Sizes of the regions of the Venn diagram of `sets`, keyed by the names
/// of the sets that contain the region's elements (joined with `&`). Every
/// one of the `2^n - 1` regions is listed, empty ones with size 0.
pub fn venn_regions(sets: &[(&str, &BTreeSet<String>)]) -> BTreeMap<String, usize> {
    let n = sets.len();
    let mut out: BTreeMap<String, usize> = BTreeMap::new();
    let name = |mask: usize| -> String {
        (0..n)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| sets[i].0)
            .collect::<Vec<_>>()
            .join("&")
    };
    for mask in 1..(1usize << n) {
        out.insert(name(mask), 0);
    }
    let all: BTreeSet<&String> = sets.iter().flat_map(|(_, s)| s.iter()).collect();
    for item in all {
        let mask = (0..n)
            .filter(|&i| sets[i].1.contains(item))
            .fold(0, |m, i| m | (1 << i));
        *out.get_mut(&name(mask)).expect("every region listed") += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorOverlap {
    pub methods: Vec<String>,
    pub false_negatives: BTreeMap<String, usize>,
    pub false_positives: BTreeMap<String, usize>,
}

/// Venn-region sizes of the false-negative and false-positive sets of the
/// given methods.
pub fn error_overlap(errors: &[(String, BTreeSet<String>, BTreeSet<String>)]) -> ErrorOverlap {
    let fns: Vec<(&str, &BTreeSet<String>)> = errors.iter().map(|(m, f, _)| (m.as_str(), f)).collect();
    let fps: Vec<(&str, &BTreeSet<String>)> = errors.iter().map(|(m, _, p)| (m.as_str(), p)).collect();
    ErrorOverlap {
        methods: errors.iter().map(|e| e.0.clone()).collect(),
        false_negatives: venn_regions(&fns),
        false_positives: venn_regions(&fps),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Dissimilar as D, Similar as S};

    #[test]
    fn prf_cases() {
        let perfect = prf_macro(&[S, D, S], &[S, D, S]).unwrap();
        assert_eq!(
            (perfect.precision, perfect.recall, perfect.f1, perfect.accuracy),
            (1.0, 1.0, 1.0, 1.0)
        );

        let all_sim = prf_macro(&[S, S], &[S, D]).unwrap();
        assert_eq!(all_sim.accuracy, 0.5);
        assert_eq!(all_sim.dissimilar.recall(), 0.0);
        assert_eq!(all_sim.similar.precision(), 0.5);
        // similar F1 = 2/3, dissimilar F1 = 0
        assert!((all_sim.f1 - 1.0 / 3.0).abs() < 1e-15);

        assert_eq!(prf_macro(&[D, S], &[S, D]).unwrap().accuracy, 0.0);
        assert!(prf_macro(&[], &[]).is_err());
    }

    #[test]
    fn balanced_accuracy_equals_mean_recall() {
        let gold = [S, S, S, D, D, D];
        let pred = [S, D, S, D, S, D];
        let p = prf_macro(&pred, &gold).unwrap();
        assert!((p.accuracy - p.recall).abs() < 1e-15);
    }

    fn sims(v: &[f64]) -> Vec<MethodScore> {
        v.iter().map(|&x| MethodScore::similarity(x)).collect()
    }

    #[test]
    fn auc_cases() {
        let gold = [S, S, D, D];
        assert_eq!(roc_auc(&sims(&[0.9, 0.8, 0.2, 0.1]), &gold).unwrap(), 1.0);
        assert_eq!(roc_auc(&sims(&[0.1, 0.2, 0.8, 0.9]), &gold).unwrap(), 0.0);
        assert_eq!(roc_auc(&sims(&[0.5; 4]), &gold).unwrap(), 0.5);
        let dist: Vec<MethodScore> = [0.1, 0.2, 0.8, 0.9].iter().map(|&x| MethodScore::distance(x)).collect();
        assert_eq!(roc_auc(&dist, &gold).unwrap(), 1.0);
        assert!(roc_auc(&sims(&[0.1, 0.2]), &[S, S]).is_err());
    }

    #[test]
    fn roc_points_end_at_corners() {
        let pts = roc_points(&sims(&[0.9, 0.4, 0.4, 0.1]), &[S, D, S, D]);
        assert_eq!(pts.first(), Some(&(0.0, 0.0)));
        assert_eq!(pts.last(), Some(&(1.0, 1.0)));
    }

    #[test]
    fn ndcg_cases() {
        assert_eq!(ndcg_at_k(&[3, 2, 0], 5, GainKind::Exponential), 1.0);
        assert_eq!(ndcg_at_k(&[0, 0], 5, GainKind::Exponential), 0.0);
        let v = ndcg_at_k(&[1, 2], 2, GainKind::Exponential);
        let want = (1.0 + 3.0 / 3f64.log2()) / (3.0 + 1.0 / 3f64.log2());
        assert!((v - want).abs() < 1e-15);
        assert!((v - 0.7967).abs() < 1e-4);
        assert!(ndcg_at_k(&[1, 2], 2, GainKind::Linear) < 1.0);
    }

    #[test]
    fn kappa_cases() {
        assert_eq!(fleiss_kappa(&[vec![3, 0], vec![0, 3]]).unwrap(), 1.0);
        assert_eq!(fleiss_kappa(&[vec![2, 0], vec![2, 0]]).unwrap(), 1.0);
        // P_1 = 1, P_2 = 0, P̄ = 0.5; p_A = 3/4, p_B = 1/4, P̄_e = 10/16
        let k = fleiss_kappa(&[vec![2, 0], vec![1, 1]]).unwrap();
        assert!((k - (0.5 - 0.625) / (1.0 - 0.625)).abs() < 1e-15);
        // every item split evenly: P̄ = 0, P̄_e = 1/2
        let k = fleiss_kappa(&[vec![1, 1], vec![1, 1]]).unwrap();
        assert!((k + 1.0).abs() < 1e-15);
        assert!(fleiss_kappa(&[vec![2, 0], vec![1, 0]]).is_err());
    }

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn venn_cases() {
        let a = set(&["x", "y"]);
        let same = venn_regions(&[("a", &a), ("b", &a), ("c", &a)]);
        assert_eq!(same["a&b&c"], 2);
        assert_eq!(same.values().sum::<usize>(), 2);

        let (b, c) = (set(&["z"]), set(&["w"]));
        let disjoint = venn_regions(&[("a", &a), ("b", &b), ("c", &c)]);
        assert_eq!((disjoint["a"], disjoint["b"], disjoint["c"]), (2, 1, 1));
        assert_eq!(disjoint.values().sum::<usize>(), 4);

        let empty = BTreeSet::new();
        let r = venn_regions(&[("a", &a), ("b", &empty), ("c", &a)]);
        assert!(r.iter().filter(|(k, _)| k.contains('b')).all(|(_, &v)| v == 0));
        assert_eq!(r.len(), 7);
    }
}
