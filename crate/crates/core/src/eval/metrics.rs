//! Point metrics: midrank AUROC, average precision, Brier and confusion-count rates.

use serde::{Deserialize, Serialize};

/// Midranks (1-based) of `values`, ties sharing their mean rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Mann-Whitney AUROC with half credit for ties. `None` unless both classes occur.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let n1 = labels.iter().filter(|l| **l).count();
    let n0 = labels.len() - n1;
    if n1 == 0 || n0 == 0 {
        return None;
    }
    let ranks = midranks(scores);
    let r1: f64 = ranks.iter().zip(labels).filter(|(_, l)| **l).map(|(r, _)| r).sum();
    let (n1, n0) = (n1 as f64, n0 as f64);
    Some((r1 - n1 * (n1 + 1.0) / 2.0) / (n1 * n0))
}

/// Average precision: the step integral of precision over recall, one step per
/// distinct score. `None` without positives.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let n_pos = labels.iter().filter(|l| **l).count();
    if n_pos == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Some(ap)
}

/// Mean squared error between probabilities and outcomes.
pub fn brier(scores: &[f64], labels: &[bool]) -> Option<f64> {
    if scores.is_empty() {
        return None;
    }
    let s: f64 = scores
        .iter()
        .zip(labels)
        .map(|(p, l)| (p - if *l { 1.0 } else { 0.0 }).powi(2))
        .sum();
    Some(s / scores.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

fn ratio(a: usize, b: usize) -> Option<f64> {
    (b > 0).then(|| a as f64 / b as f64)
}

impl Confusion {
    /// Scores at or above `threshold` are predicted positive.
    pub fn at(scores: &[f64], labels: &[bool], threshold: f64) -> Self {
        let mut c = Confusion::default();
        for (s, l) in scores.iter().zip(labels) {
            match (*s >= threshold, *l) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn n(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn tpr(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }
    pub fn fnr(&self) -> Option<f64> {
        ratio(self.fn_, self.tp + self.fn_)
    }
    pub fn tnr(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fp)
    }
    pub fn fpr(&self) -> Option<f64> {
        ratio(self.fp, self.tn + self.fp)
    }

    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.tp + self.tn, self.n())
    }

    /// Zero when nothing is predicted positive.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp).unwrap_or(0.0)
    }

    /// Zero when precision and recall are both zero.
    pub fn f1(&self) -> f64 {
        let d = 2 * self.tp + self.fp + self.fn_;
        ratio(2 * self.tp, d).unwrap_or(0.0)
    }

    /// Zero when any margin of the table is empty.
    pub fn mcc(&self) -> f64 {
        let (tp, fp, tn, fn_) = (self.tp as f64, self.fp as f64, self.tn as f64, self.fn_ as f64);
        let d = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
        if d == 0.0 {
            0.0
        } else {
            (tp * tn - fp * fn_) / d
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Auroc,
    Auprc,
    Accuracy,
    Precision,
    F1,
    Specificity,
    Mcc,
    Brier,
}

impl Metric {
    pub const ALL: [Metric; 8] = [
        Metric::Auroc,
        Metric::Auprc,
        Metric::Accuracy,
        Metric::Precision,
        Metric::F1,
        Metric::Specificity,
        Metric::Mcc,
        Metric::Brier,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Auroc => "auroc",
            Metric::Auprc => "auprc",
            Metric::Accuracy => "accuracy",
            Metric::Precision => "precision",
            Metric::F1 => "f1",
            Metric::Specificity => "specificity",
            Metric::Mcc => "mcc",
            Metric::Brier => "brier",
        }
    }

    /// Attainable values, used to clip interval endpoints.
    pub fn range(&self) -> (f64, f64) {
        match self {
            Metric::Mcc => (-1.0, 1.0),
            _ => (0.0, 1.0),
        }
    }

    pub fn is_rank(&self) -> bool {
        matches!(self, Metric::Auroc | Metric::Auprc)
    }

    pub fn compute(&self, scores: &[f64], labels: &[bool], threshold: f64) -> Option<f64> {
        match self {
            Metric::Auroc => auroc(scores, labels),
            Metric::Auprc => {
                // Rank metrics need both classes, like AUROC.
                auroc(scores, labels)?;
                average_precision(scores, labels)
            }
            Metric::Brier => brier(scores, labels),
            m => {
                let c = Confusion::at(scores, labels, threshold);
                match m {
                    Metric::Accuracy => c.accuracy(),
                    Metric::Precision => (c.n() > 0).then(|| c.precision()),
                    Metric::F1 => (c.n() > 0).then(|| c.f1()),
                    Metric::Specificity => c.tnr(),
                    Metric::Mcc => (c.n() > 0).then(|| c.mcc()),
                    _ => unreachable!(),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_auroc(s: &[f64], l: &[bool]) -> Option<f64> {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..s.len() {
            for j in 0..s.len() {
                if l[i] && !l[j] {
                    den += 1.0;
                    num += if s[i] > s[j] {
                        1.0
                    } else if s[i] == s[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        (den > 0.0).then(|| num / den)
    }

    #[test]
    fn auroc_example() {
        let a = auroc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
        assert!((a - 0.75).abs() < 1e-15);
        assert_eq!(auroc(&[0.1, 0.2], &[true, true]), None);
    }

    #[test]
    fn perfect_and_constant() {
        let l = [false, false, true, true];
        let s = [0.0, 0.0, 1.0, 1.0];
        assert_eq!(auroc(&s, &l), Some(1.0));
        assert_eq!(average_precision(&s, &l), Some(1.0));
        assert_eq!(brier(&s, &l), Some(0.0));
        assert_eq!(brier(&[0.5; 4], &l), Some(0.25));
        assert_eq!(Confusion::at(&s, &l, 0.5).mcc(), 1.0);
        assert_eq!(Confusion::at(&[1.0, 1.0, 0.0, 0.0], &l, 0.5).mcc(), -1.0);
    }

    #[test]
    fn average_precision_by_hand() {
        // Ranked: P N P N -> precision at recall steps 1/1 and 2/3.
        let ap = average_precision(&[0.9, 0.8, 0.7, 0.6], &[true, false, true, false]).unwrap();
        assert!((ap - (0.5 * 1.0 + 0.5 * 2.0 / 3.0)).abs() < 1e-15);
        // Tied scores form a single step.
        let ap = average_precision(&[0.5, 0.5], &[true, false]).unwrap();
        assert_eq!(ap, 0.5);
    }

    #[test]
    fn single_class_keeps_threshold_metrics() {
        let l = [true, true, true];
        let s = [0.2, 0.6, 0.9];
        assert_eq!(Metric::Auroc.compute(&s, &l, 0.5), None);
        assert_eq!(Metric::Auprc.compute(&s, &l, 0.5), None);
        assert!((Metric::Accuracy.compute(&s, &l, 0.5).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(Metric::Specificity.compute(&s, &l, 0.5), None);
    }

    fn scored_set() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        (1usize..50).prop_flat_map(|n| {
            (
                proptest::collection::vec((0u8..12).prop_map(|v| v as f64 / 11.0), n),
                proptest::collection::vec(any::<bool>(), n),
            )
        })
    }

    proptest! {
        #[test]
        fn auroc_matches_pairwise((s, l) in scored_set()) {
            match (auroc(&s, &l), brute_auroc(&s, &l)) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-12),
                (a, b) => prop_assert_eq!(a, b),
            }
        }

        #[test]
        fn auroc_invariant_to_monotone_maps((s, l) in scored_set()) {
            if let Some(a) = auroc(&s, &l) {
                let exp: Vec<f64> = s.iter().map(|v| v.exp()).collect();
                let aff: Vec<f64> = s.iter().map(|v| 3.0 * v - 7.0).collect();
                let rank = midranks(&s);
                for t in [exp, aff, rank] {
                    prop_assert!((auroc(&t, &l).unwrap() - a).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn bounded((s, l) in scored_set(), t in 0.0f64..1.0) {
            for m in Metric::ALL {
                if let Some(v) = m.compute(&s, &l, t) {
                    let lo = if m == Metric::Mcc { -1.0 } else { 0.0 };
                    prop_assert!(v >= lo - 1e-12 && v <= 1.0 + 1e-12, "{:?} = {}", m, v);
                }
            }
            let c = Confusion::at(&s, &l, t);
            if let (Some(a), Some(b)) = (c.tpr(), c.fnr()) { prop_assert!((a + b - 1.0).abs() < 1e-12); }
            if let (Some(a), Some(b)) = (c.tnr(), c.fpr()) { prop_assert!((a + b - 1.0).abs() < 1e-12); }
        }
    }
}
