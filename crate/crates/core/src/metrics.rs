//! Detection metrics over method predictions and error-triggering
//! statistics over candidate verdicts.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::validator::{Classification, Verdict};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("PR-AUC needs at least one positive label")]
    NoPositives,
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("score at index {0} is not finite")]
    NonFiniteScore(usize),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Tally (predicted, actual) pairs.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut c = Self::default();
        for (predicted, actual) in pairs {
            match (predicted, actual) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }
}

/// `num / den`, absent when the denominator is zero.
fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Harmonic mean of precision and recall; absent when both are zero.
pub fn f1(precision: f64, recall: f64) -> Option<f64> {
    let sum = precision + recall;
    (sum > 0.0).then(|| 2.0 * precision * recall / sum)
}

/// One detector output with its gold label, as stored in predictions JSONL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub method_id: String,
    pub prob_defective: f64,
    pub predicted_defective: bool,
    /// Gold label (1 = defective), when known.
    #[serde(default)]
    pub label: Option<u8>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub counts: ConfusionCounts,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub fpr: Option<f64>,
    pub pr_auc: Option<f64>,
    pub trigger_count: usize,
    pub trigger_precision: Option<f64>,
    /// Candidates whose verdict was invalid (compile error or timeout).
    pub invalid_candidates: usize,
    /// Defects with at least one true-positive candidate.
    pub triggered_defects: Vec<String>,
}

/// Classification part of the report.
pub fn detection_metrics(c: ConfusionCounts) -> MetricsReport {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    MetricsReport {
        counts: c,
        accuracy: ratio(c.tp + c.tn, c.total()),
        precision,
        recall,
        f1: precision.zip(recall).and_then(|(p, r)| f1(p, r)),
        fpr: ratio(c.fp, c.fp + c.tn),
        ..MetricsReport::default()
    }
}

/// Area under the precision–recall step curve. Scores are visited in
/// descending order; equal scores enter together as one threshold.
pub fn pr_auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricsError::NonFiniteScore(i));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(MetricsError::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut seen, mut area, mut prev_recall) = (0usize, 0usize, 0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let score = scores[order[i]];
        while i < order.len() && scores[order[i]] == score {
            tp += labels[order[i]] as usize;
            seen += 1;
            i += 1;
        }
        let recall = tp as f64 / positives as f64;
        area += (tp as f64 / seen as f64) * (recall - prev_recall);
        prev_recall = recall;
    }
    Ok(area)
}

/// Defects with at least one TP, and TP / (TP + FP) over candidates.
/// Invalid, TN and FN candidates do not enter the precision.
pub fn trigger_stats(verdicts: &[Verdict]) -> (usize, Option<f64>) {
    let triggered = triggered_defects(verdicts);
    let tp = verdicts.iter().filter(|v| v.classification == Classification::TP).count() as u64;
    let fp = verdicts.iter().filter(|v| v.classification == Classification::FP).count() as u64;
    (triggered.len(), ratio(tp, tp + fp))
}

fn triggered_defects(verdicts: &[Verdict]) -> BTreeSet<&str> {
    verdicts
        .iter()
        .filter(|v| v.classification == Classification::TP)
        .map(|v| v.defect_id.as_str())
        .collect()
}

/// Full report from (optional) predictions and (optional) verdicts.
/// Predictions without a gold label are skipped.
pub fn build_report(predictions: &[PredictionRecord], verdicts: &[Verdict]) -> Result<MetricsReport, MetricsError> {
    let labelled: Vec<(&PredictionRecord, bool)> = predictions
        .iter()
        .filter_map(|p| p.label.map(|l| (p, l == 1)))
        .collect();
    let counts = ConfusionCounts::from_pairs(labelled.iter().map(|(p, l)| (p.predicted_defective, *l)));
    let mut report = detection_metrics(counts);
    let scores: Vec<f64> = labelled.iter().map(|(p, _)| p.prob_defective).collect();
    let labels: Vec<bool> = labelled.iter().map(|(_, l)| *l).collect();
    report.pr_auc = match pr_auc(&scores, &labels) {
        Ok(a) => Some(a),
        Err(MetricsError::NoPositives) => None,
        Err(e) => return Err(e),
    };
    let (count, precision) = trigger_stats(verdicts);
    report.trigger_count = count;
    report.trigger_precision = precision;
    report.invalid_candidates = verdicts
        .iter()
        .filter(|v| v.classification == Classification::Invalid)
        .count();
    report.triggered_defects = triggered_defects(verdicts).into_iter().map(String::from).collect();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::validator::{classify, RunResult};
    use proptest::prelude::*;

    /// Independent oracle: every distinct score is a threshold; the curve is
    /// the set of (recall, precision) points, integrated as right steps.
    fn brute_force_pr_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let positives = labels.iter().filter(|&&l| l).count() as f64;
        let mut thresholds: Vec<f64> = scores.to_vec();
        thresholds.sort_by(|a, b| b.total_cmp(a));
        thresholds.dedup();
        let mut points = Vec::new();
        for &t in &thresholds {
            let mut tp = 0.0;
            let mut predicted = 0.0;
            for (s, l) in scores.iter().zip(labels) {
                if *s >= t {
                    predicted += 1.0;
                    if *l {
                        tp += 1.0;
                    }
                }
            }
            points.push((tp / positives, tp / predicted));
        }
        let mut area = 0.0;
        let mut last_recall = 0.0;
        for (r, p) in points {
            area += p * (r - last_recall);
            last_recall = r;
        }
        area
    }

    fn verdict(defect: &str, d: RunResult, f: RunResult) -> Verdict {
        Verdict {
            candidate_id: format!("{defect}-{d:?}-{f:?}"),
            defect_id: defect.into(),
            defective_result: d,
            fixed_result: f,
            classification: classify(d, f),
        }
    }

    #[test]
    fn f1_reproduces_reported_rows() {
        assert!((f1(0.272, 0.502).unwrap() - 0.353).abs() <= 0.001);
        assert!((f1(0.160, 0.406).unwrap() - 0.230).abs() <= 0.001);
        assert_eq!(f1(0.0, 0.0), None);
    }

    #[test]
    fn detection_examples() {
        let all_tp = detection_metrics(ConfusionCounts { tp: 7, ..Default::default() });
        assert_eq!((all_tp.accuracy, all_tp.recall, all_tp.fpr), (Some(1.0), Some(1.0), None));
        let empty = detection_metrics(ConfusionCounts::default());
        assert_eq!((empty.accuracy, empty.precision, empty.f1), (None, None, None));
        let c = ConfusionCounts { tp: 3, fp: 1, tn: 4, fn_: 2 };
        let r = detection_metrics(c);
        assert_eq!(r.accuracy, Some(0.7));
        assert_eq!(r.precision, Some(0.75));
        assert_eq!(r.recall, Some(0.6));
        assert_eq!(r.fpr, Some(0.2));
        assert!((r.f1.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(ConfusionCounts::from_pairs([(true, true), (true, false), (false, true), (false, false)]), ConfusionCounts { tp: 1, fp: 1, tn: 1, fn_: 1 });
        assert_eq!(serde_json::to_string(&c).unwrap(), r#"{"tp":3,"fp":1,"tn":4,"fn":2}"#);
    }

    #[test]
    fn pr_auc_examples() {
        assert_eq!(pr_auc(&[0.9, 0.5, 0.4, 0.3, 0.1], &[true, false, false, false, false]).unwrap(), 1.0);
        let a = pr_auc(&[0.9, 0.8, 0.7, 0.6], &[true, false, true, false]).unwrap();
        assert!((a - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(pr_auc(&[0.1, 0.2], &[true, true]).unwrap(), 1.0);
        // One tied group holding everything: precision is the base rate.
        assert_eq!(pr_auc(&[0.5; 4], &[true, false, false, false]).unwrap(), 0.25);
        assert_eq!(pr_auc(&[0.5], &[false]), Err(MetricsError::NoPositives));
        assert_eq!(pr_auc(&[0.5], &[]), Err(MetricsError::LengthMismatch { scores: 1, labels: 0 }));
        assert_eq!(pr_auc(&[f64::NAN], &[true]), Err(MetricsError::NonFiniteScore(0)));
    }

    #[test]
    fn trigger_examples() {
        use RunResult::*;
        assert_eq!(trigger_stats(&[verdict("a", Pass, Pass), verdict("b", Pass, Pass)]), (0, None));
        let one = [verdict("a", Fail, Pass), verdict("a", Fail, Pass), verdict("a", Fail, Pass), verdict("a", Fail, Fail)];
        assert_eq!(trigger_stats(&one), (1, Some(0.75)));
        let two = [verdict("a", Fail, Pass), verdict("b", Fail, Fail), verdict("b", Fail, Fail)];
        assert_eq!(trigger_stats(&two).0, 1);
        let invalid = [verdict("a", Fail, Pass), verdict("a", CompileError, Pass), verdict("a", Timeout, Fail)];
        assert_eq!(trigger_stats(&invalid), (1, Some(1.0)));
    }

    #[test]
    fn report_combines_both_parts() {
        use RunResult::*;
        let preds = [
            PredictionRecord { method_id: "m1".into(), prob_defective: 0.9, predicted_defective: true, label: Some(1) },
            PredictionRecord { method_id: "m2".into(), prob_defective: 0.2, predicted_defective: false, label: Some(0) },
            PredictionRecord { method_id: "m3".into(), prob_defective: 0.7, predicted_defective: true, label: None },
        ];
        let r = build_report(&preds, &[verdict("d1", Fail, Pass), verdict("d2", CompileError, Pass)]).unwrap();
        assert_eq!(r.counts, ConfusionCounts { tp: 1, fp: 0, tn: 1, fn_: 0 });
        assert_eq!(r.pr_auc, Some(1.0));
        assert_eq!((r.trigger_count, r.trigger_precision, r.invalid_candidates), (1, Some(1.0), 1));
        assert_eq!(r.triggered_defects, vec!["d1"]);
        assert_eq!(build_report(&[], &[]).unwrap().pr_auc, None);
    }

    proptest! {
        #[test]
        fn pr_auc_matches_brute_force(data in prop::collection::vec((0u8..6, any::<bool>()), 1..=12)) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| *s as f64 / 5.0).collect();
            let labels: Vec<bool> = data.iter().map(|(_, l)| *l).collect();
            prop_assume!(labels.iter().any(|&l| l));
            let got = pr_auc(&scores, &labels).unwrap();
            let want = brute_force_pr_auc(&scores, &labels);
            prop_assert!((got - want).abs() < 1e-12, "{got} vs {want}");
            prop_assert!((0.0..=1.0).contains(&got));
        }

        #[test]
        fn ratios_are_consistent(tp in 0u64..50, fp in 0u64..50, tn in 0u64..50, fn_ in 0u64..50) {
            let c = ConfusionCounts { tp, fp, tn, fn_ };
            let r = detection_metrics(c);
            if let Some(acc) = r.accuracy {
                let error_rate = (fp + fn_) as f64 / c.total() as f64;
                prop_assert!((acc + error_rate - 1.0).abs() < 1e-12);
            }
            if let (Some(p), Some(rc), Some(f)) = (r.precision, r.recall, r.f1) {
                prop_assert!(f <= 2.0 * p.min(rc) + 1e-12);
                prop_assert!((0.0..=1.0).contains(&f));
                if p == rc {
                    prop_assert!((f - p).abs() < 1e-12);
                }
            }
        }
    }
}
