//! Threshold-independent evaluation: ROC and precision-recall curves from a
//! full threshold sweep, trapezoidal A_roc, step-integrated A_prc, and the
//! balance-point accuracy Acc_e.
//!
//! A slice with no positive samples or no negative samples has UNDEFINED
//! metrics: [`evaluate`] then returns a report whose metric fields are
//! `None` rather than NaN.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub acc_e: Option<f64>,
    pub a_roc: Option<f64>,
    pub a_prc: Option<f64>,
    pub num_pos: usize,
    pub num_neg: usize,
    pub undefined: bool,
    #[serde(skip)]
    pub roc_points: Vec<RocPoint>,
    #[serde(skip)]
    pub pr_points: Vec<PrPoint>,
}

/// Sweep every decision threshold over `scores` (classifying a sample
/// positive when its score is strictly greater than the threshold) and
/// compute the curve points and summary metrics.
///
/// The sweep always includes +inf (nothing positive) and -inf (everything
/// positive) in addition to every distinct score, in descending order.
pub fn evaluate(scores: &[f64], labels: &[bool]) -> Result<EvalReport> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::validation("evaluation", "no samples"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::validation("evaluation", "non-finite score"));
    }
    let num_pos = labels.iter().filter(|&&l| l).count();
    let num_neg = labels.len() - num_pos;
    if num_pos == 0 || num_neg == 0 {
        return Ok(EvalReport {
            acc_e: None,
            a_roc: None,
            a_prc: None,
            num_pos,
            num_neg,
            undefined: true,
            roc_points: Vec::new(),
            pr_points: Vec::new(),
        });
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));

    // Confusion counts at each threshold: (threshold, cumulative tp, fp).
    let mut sweep: Vec<(f64, usize, usize)> = vec![(f64::INFINITY, 0, 0)];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        // Consume the whole tie group: at threshold t every score > t is
        // positive, so ties change the counts together.
        while i < order.len() && scores[order[i]] == t {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        sweep.push((t, tp, fp));
    }
    sweep.push((f64::NEG_INFINITY, num_pos, num_neg));

    let (p, n) = (num_pos as f64, num_neg as f64);
    let roc_points: Vec<RocPoint> = sweep
        .iter()
        .map(|&(t, tp, fp)| RocPoint {
            fpr: fp as f64 / n,
            tpr: tp as f64 / p,
            threshold: t,
        })
        .collect();
    let pr_points: Vec<PrPoint> = sweep
        .iter()
        .map(|&(t, tp, fp)| PrPoint {
            recall: tp as f64 / p,
            // Precision of an empty prediction set is defined as 1.
            precision: if tp + fp == 0 {
                1.0
            } else {
                tp as f64 / (tp + fp) as f64
            },
            threshold: t,
        })
        .collect();

    let a_roc = roc_points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum();
    let a_prc = pr_points
        .windows(2)
        .map(|w| (w[1].recall - w[0].recall) * w[1].precision)
        .sum();

    // Acc_e: the true-positive rate at the sweep point where TPR and TNR are
    // closest; ties resolve toward the higher TPR.
    let mut acc_e = 0.0;
    let mut best_gap = f64::INFINITY;
    for pt in &roc_points {
        let tnr = 1.0 - pt.fpr;
        let gap = (pt.tpr - tnr).abs();
        if gap < best_gap || (gap == best_gap && pt.tpr > acc_e) {
            best_gap = gap;
            acc_e = pt.tpr;
        }
    }

    Ok(EvalReport {
        acc_e: Some(acc_e),
        a_roc: Some(a_roc),
        a_prc: Some(a_prc),
        num_pos,
        num_neg,
        undefined: false,
        roc_points,
        pr_points,
    })
}

/// Brute-force concordance estimate of the ROC area: the fraction of
/// positive/negative pairs ranked correctly, counting ties as half.
/// Quadratic; intended as an independent cross-check for tests.
pub fn auc_oracle(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let pos: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(&s, _)| s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| !l)
        .map(|(&s, _)| s)
        .collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::UndefinedMetric(
            "A_roc needs at least one positive and one negative sample".into(),
        ));
    }
    let mut concordant = 0.0;
    for &sp in &pos {
        for &sn in &neg {
            if sp > sn {
                concordant += 1.0;
            } else if sp == sn {
                concordant += 0.5;
            }
        }
    }
    Ok(concordant / (pos.len() as f64 * neg.len() as f64))
}

/// ROC curve as CSV (`fpr,tpr,threshold`). Refuses undefined reports.
pub fn roc_csv(report: &EvalReport) -> Result<String> {
    if report.undefined {
        return Err(Error::UndefinedMetric(
            "no ROC curve for a single-class slice".into(),
        ));
    }
    let mut out = String::from("fpr,tpr,threshold\n");
    for pt in &report.roc_points {
        out.push_str(&format!("{},{},{}\n", pt.fpr, pt.tpr, pt.threshold));
    }
    Ok(out)
}

/// Precision-recall curve as CSV (`recall,precision,threshold`). Refuses
/// undefined reports.
pub fn pr_csv(report: &EvalReport) -> Result<String> {
    if report.undefined {
        return Err(Error::UndefinedMetric(
            "no PR curve for a single-class slice".into(),
        ));
    }
    let mut out = String::from("recall,precision,threshold\n");
    for pt in &report.pr_points {
        out.push_str(&format!("{},{},{}\n", pt.recall, pt.precision, pt.threshold));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::derive_rng;
    use rand::Rng;

    #[test]
    fn worked_example_matches_hand_computation() {
        let scores = [0.1, 0.4, 0.35, 0.8];
        let labels = [false, false, true, true];
        let r = evaluate(&scores, &labels).unwrap();
        assert!((r.a_roc.unwrap() - 0.75).abs() < 1e-15);
        assert!((r.a_prc.unwrap() - 5.0 / 6.0).abs() < 1e-12);
        assert!((r.acc_e.unwrap() - 0.5).abs() < 1e-15);
        assert_eq!((r.num_pos, r.num_neg), (2, 2));
        assert!(!r.undefined);
        // +inf, four distinct scores, -inf.
        assert_eq!(r.roc_points.len(), 6);
    }

    #[test]
    fn perfect_separation_gives_unit_metrics() {
        let scores = [0.9, 0.8, 0.2, 0.1];
        let labels = [true, true, false, false];
        let r = evaluate(&scores, &labels).unwrap();
        assert_eq!(r.a_roc, Some(1.0));
        assert_eq!(r.a_prc, Some(1.0));
        assert_eq!(r.acc_e, Some(1.0));
    }

    #[test]
    fn fully_tied_scores_give_half_roc_area() {
        let scores = [0.3; 6];
        let labels = [true, false, true, false, false, false];
        let r = evaluate(&scores, &labels).unwrap();
        assert_eq!(r.a_roc, Some(0.5));
        // With one tie group the PR curve jumps straight to the prevalence.
        assert!((r.a_prc.unwrap() - 2.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn trapezoid_matches_concordance_oracle() {
        let mut rng = derive_rng(31, "test/metrics-oracle", 0);
        for case in 0..100 {
            let n = rng.gen_range(2..=200);
            let mut scores = Vec::with_capacity(n);
            let mut labels = Vec::with_capacity(n);
            let discrete = case % 3 == 0; // force heavy ties in a third of cases
            for _ in 0..n {
                let s = if discrete {
                    f64::from(rng.gen_range(0..8)) / 8.0
                } else {
                    rng.gen_range(-2.0..2.0)
                };
                scores.push(s);
                labels.push(rng.gen_bool(0.3));
            }
            if !labels.contains(&true) || !labels.contains(&false) {
                continue;
            }
            let fast = evaluate(&scores, &labels).unwrap().a_roc.unwrap();
            let slow = auc_oracle(&scores, &labels).unwrap();
            assert!(
                (fast - slow).abs() <= 1e-9,
                "case {case}: trapezoid {fast} vs concordance {slow}"
            );
        }
    }

    #[test]
    fn metrics_are_invariant_under_monotone_transforms() {
        let mut rng = derive_rng(7, "test/metrics-monotone", 0);
        let scores: Vec<f64> = (0..300).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let labels: Vec<bool> = (0..300).map(|_| rng.gen_bool(0.25)).collect();
        let base = evaluate(&scores, &labels).unwrap();
        for transform in [|s: f64| s.exp(), |s: f64| 2.0 * s + 3.0] {
            let mapped: Vec<f64> = scores.iter().map(|&s| transform(s)).collect();
            let r = evaluate(&mapped, &labels).unwrap();
            assert_eq!(r.a_roc, base.a_roc);
            assert_eq!(r.a_prc, base.a_prc);
            assert_eq!(r.acc_e, base.acc_e);
        }
    }

    #[test]
    fn random_scores_score_near_half() {
        let mut rng = derive_rng(13, "test/metrics-random", 0);
        let scores: Vec<f64> = (0..2000).map(|_| rng.gen::<f64>()).collect();
        let labels: Vec<bool> = (0..2000).map(|_| rng.gen_bool(0.5)).collect();
        let a_roc = evaluate(&scores, &labels).unwrap().a_roc.unwrap();
        assert!((a_roc - 0.5).abs() < 0.1, "a_roc {a_roc}");
    }

    #[test]
    fn single_class_slices_are_undefined() {
        let r = evaluate(&[0.2, 0.7], &[false, false]).unwrap();
        assert!(r.undefined);
        assert_eq!(r.acc_e, None);
        assert_eq!(r.a_roc, None);
        assert_eq!(r.a_prc, None);
        assert!(r.roc_points.is_empty());
        assert!(roc_csv(&r).is_err());
        assert!(pr_csv(&r).is_err());

        let r = evaluate(&[0.2, 0.7], &[true, true]).unwrap();
        assert!(r.undefined);

        assert!(evaluate(&[], &[]).is_err());
        assert!(evaluate(&[f64::NAN], &[true]).is_err());
        assert!(evaluate(&[0.1, 0.2], &[true]).is_err());
        assert!(matches!(
            auc_oracle(&[0.5], &[true]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn csv_reintegration_reproduces_areas() {
        let mut rng = derive_rng(5, "test/metrics-csv", 0);
        let scores: Vec<f64> = (0..150)
            .map(|_| f64::from(rng.gen_range(0..40)) / 7.0)
            .collect();
        let labels: Vec<bool> = (0..150).map(|_| rng.gen_bool(0.2)).collect();
        let report = evaluate(&scores, &labels).unwrap();

        let roc = roc_csv(&report).unwrap();
        let pts: Vec<(f64, f64)> = roc
            .lines()
            .skip(1)
            .map(|line| {
                let mut parts = line.split(',');
                let fpr: f64 = parts.next().unwrap().parse().unwrap();
                let tpr: f64 = parts.next().unwrap().parse().unwrap();
                (fpr, tpr)
            })
            .collect();
        let re_area: f64 = pts
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
            .sum();
        assert!((re_area - report.a_roc.unwrap()).abs() <= 1e-12);

        let pr = pr_csv(&report).unwrap();
        let pts: Vec<(f64, f64)> = pr
            .lines()
            .skip(1)
            .map(|line| {
                let mut parts = line.split(',');
                let recall: f64 = parts.next().unwrap().parse().unwrap();
                let precision: f64 = parts.next().unwrap().parse().unwrap();
                (recall, precision)
            })
            .collect();
        let re_area: f64 = pts.windows(2).map(|w| (w[1].0 - w[0].0) * w[1].1).sum();
        assert!((re_area - report.a_prc.unwrap()).abs() <= 1e-12);

        // Threshold column survives the round trip, including infinities.
        let first = roc.lines().nth(1).unwrap();
        assert!(first.ends_with(",inf"));
        let last = roc.lines().last().unwrap();
        assert!(last.ends_with(",-inf"));
    }
}
