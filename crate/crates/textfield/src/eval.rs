//! Detection scoring: greedy one-to-one IOU matching between predicted and
//! ground-truth instance maps, reported as precision, recall, and F-measure.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::InstanceMap;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("detections are {0}x{1} but the ground truth is {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("IOU threshold {0} must lie in [0, 1)")]
    BadThreshold(f64),
}

/// One accepted detection-to-truth assignment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub det: u32,
    pub gt: u32,
    pub iou: f64,
}

/// Counts and derived metrics from one matching pass.
///
/// Zero-denominator metrics report 0: no detections means precision 0, no
/// ground truth means recall 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub iou_threshold: f64,
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    /// Accepted pairs in acceptance order (descending IOU).
    pub matches: Vec<Match>,
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "P={:.6} R={:.6} F={:.6} TP={} FP={} FN={}",
            self.precision,
            self.recall,
            self.f_measure,
            self.true_positives,
            self.false_positives,
            self.false_negatives
        )
    }
}

/// Greedily matches detections to ground-truth instances.
///
/// Every (detection, truth) pair with IOU strictly above the threshold is a
/// candidate. Candidates are taken in descending IOU order (ties prefer the
/// lower detection id, then the lower truth id) and accepted when both sides
/// are still unmatched, so each instance participates in at most one match.
/// Instances are the distinct nonzero labels of each map; a label with no
/// pixels does not exist.
pub fn match_and_score(
    dets: &InstanceMap,
    truth: &InstanceMap,
    iou_threshold: f64,
) -> Result<EvalReport, EvalError> {
    if (dets.width(), dets.height()) != (truth.width(), truth.height()) {
        return Err(EvalError::DimensionMismatch(
            dets.width(),
            dets.height(),
            truth.width(),
            truth.height(),
        ));
    }
    if !(0.0..1.0).contains(&iou_threshold) {
        return Err(EvalError::BadThreshold(iou_threshold));
    }

    let det_areas: BTreeMap<u32, u64> = dets.label_areas().into_iter().collect();
    let gt_areas: BTreeMap<u32, u64> = truth.label_areas().into_iter().collect();
    let mut overlap: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    for (d, g) in dets.data().iter().zip(truth.data()) {
        if *d != 0 && *g != 0 {
            *overlap.entry((*d, *g)).or_insert(0) += 1;
        }
    }

    let mut candidates: Vec<Match> = overlap
        .into_iter()
        .filter_map(|((det, gt), inter)| {
            let union = det_areas[&det] + gt_areas[&gt] - inter;
            let iou = inter as f64 / union as f64;
            (iou > iou_threshold).then_some(Match { det, gt, iou })
        })
        .collect();
    candidates.sort_by(|a, b| {
        b.iou
            .total_cmp(&a.iou)
            .then(a.det.cmp(&b.det))
            .then(a.gt.cmp(&b.gt))
    });

    let mut taken_det: BTreeSet<u32> = BTreeSet::new();
    let mut taken_gt: BTreeSet<u32> = BTreeSet::new();
    let mut matches = Vec::new();
    for m in candidates {
        if taken_det.contains(&m.det) || taken_gt.contains(&m.gt) {
            continue;
        }
        taken_det.insert(m.det);
        taken_gt.insert(m.gt);
        matches.push(m);
    }

    let tp = matches.len() as u64;
    let n_det = det_areas.len() as u64;
    let n_gt = gt_areas.len() as u64;
    let ratio = |num: u64, den: u64| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(tp, n_det);
    let recall = ratio(tp, n_gt);
    let f_measure = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(EvalReport {
        iou_threshold,
        true_positives: tp,
        false_positives: n_det - tp,
        false_negatives: n_gt - tp,
        precision,
        recall,
        f_measure,
        matches,
    })
}
