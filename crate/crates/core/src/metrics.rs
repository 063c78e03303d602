//! Detection AP with wrap-aware box overlap, the GT-weighted mean AP, and
//! mean IoU for semantic maps.

use alloc::vec;
use alloc::vec::Vec;

use crate::anchors::{pano_iou, PanoBox};
use crate::grid::{ClassId, SemanticMap};
use crate::{Error, Result};

/// A detection counts as correct above this IoU with an unmatched GT.
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.3;

/// Precision/recall after each detection, in descending score order.
#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub true_positive: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApScores {
    /// Mean interpolated precision over the recall levels reached.
    pub ap: f64,
    /// Interpolated precision integrated over recall.
    pub ap_weighted: f64,
}

/// Greedy matching: detections in descending score (stable for ties) each
/// claim the unmatched GT of highest IoU, if above `iou_threshold`.
pub fn pr_curve(dets: &[PanoBox], gts: &[PanoBox], iou_threshold: f64, width: usize) -> Result<PrCurve> {
    if gts.is_empty() {
        return Err(Error::NoGroundTruth);
    }
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    let mut matched = vec![false; gts.len()];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut curve = PrCurve {
        precision: Vec::with_capacity(dets.len()),
        recall: Vec::with_capacity(dets.len()),
        true_positive: Vec::with_capacity(dets.len()),
    };
    for &i in &order {
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in gts.iter().enumerate().filter(|(j, _)| !matched[*j]) {
            let iou = pano_iou(&dets[i], g, width);
            if iou > iou_threshold && best.is_none_or(|(_, b)| iou > b) {
                best = Some((j, iou));
            }
        }
        let hit = best.is_some();
        if let Some((j, _)) = best {
            matched[j] = true;
            tp += 1;
        } else {
            fp += 1;
        }
        curve.true_positive.push(hit);
        curve.precision.push(tp as f64 / (tp + fp) as f64);
        curve.recall.push(tp as f64 / gts.len() as f64);
    }
    Ok(curve)
}

/// Interpolated precision: the best precision at this or any later point.
fn envelope(precision: &[f64]) -> Vec<f64> {
    let mut out = precision.to_vec();
    for i in (0..out.len().saturating_sub(1)).rev() {
        out[i] = out[i].max(out[i + 1]);
    }
    out
}

pub fn ap_from_curve(curve: &PrCurve) -> ApScores {
    let interp = envelope(&curve.precision);
    let (mut sum, mut levels, mut area, mut prev_recall) = (0.0, 0usize, 0.0, 0.0);
    for i in 0..interp.len() {
        if curve.true_positive[i] {
            sum += interp[i];
            levels += 1;
            area += (curve.recall[i] - prev_recall) * interp[i];
            prev_recall = curve.recall[i];
        }
    }
    ApScores {
        ap: if levels == 0 { 0.0 } else { sum / levels as f64 },
        ap_weighted: area,
    }
}

/// Single-class AP and recall-weighted AP.
pub fn average_precision(dets: &[PanoBox], gts: &[PanoBox], iou_threshold: f64, width: usize) -> Result<ApScores> {
    Ok(ap_from_curve(&pr_curve(dets, gts, iou_threshold, width)?))
}

/// `Σ (d_i / n) AP_i` with `n = Σ d_i`.
pub fn weighted_map(per_class: &[(f64, usize)]) -> Result<f64> {
    let n: usize = per_class.iter().map(|p| p.1).sum();
    if n == 0 {
        return Err(Error::EmptyEval);
    }
    Ok(per_class.iter().map(|&(ap, d)| ap * d as f64 / n as f64).sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassDetection {
    pub class_id: ClassId,
    /// `None` when the class has no ground truth.
    pub scores: Option<ApScores>,
    /// Ground-truth objects of this class (the mean's weight).
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionEval {
    pub per_class: Vec<ClassDetection>,
    pub total: usize,
    pub map: f64,
    pub map_weighted: f64,
}

/// Per-class evaluation over classes `1..num_classes` (0 is background).
pub fn evaluate_detections(
    dets: &[PanoBox],
    gts: &[PanoBox],
    num_classes: usize,
    iou_threshold: f64,
    width: usize,
) -> Result<DetectionEval> {
    let mut per_class = Vec::new();
    for c in 1..num_classes {
        let class_id = c as ClassId;
        let d: Vec<PanoBox> = dets.iter().filter(|b| b.class_id == class_id).copied().collect();
        let g: Vec<PanoBox> = gts.iter().filter(|b| b.class_id == class_id).copied().collect();
        let scores = match average_precision(&d, &g, iou_threshold, width) {
            Ok(s) => Some(s),
            Err(Error::NoGroundTruth) => None,
            Err(e) => return Err(e),
        };
        per_class.push(ClassDetection {
            class_id,
            scores,
            count: g.len(),
        });
    }
    let pick = |f: fn(&ApScores) -> f64| -> Vec<(f64, usize)> {
        per_class
            .iter()
            .filter_map(|c| c.scores.as_ref().map(|s| (f(s), c.count)))
            .collect()
    };
    Ok(DetectionEval {
        total: per_class.iter().map(|c| c.count).sum(),
        map: weighted_map(&pick(|s| s.ap))?,
        map_weighted: weighted_map(&pick(|s| s.ap_weighted))?,
        per_class,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IouResult {
    /// IoU per class id, `None` for classes in neither map.
    pub per_class: Vec<Option<f64>>,
    pub miou: f64,
}

/// Per-class IoU over `num_classes` labels and their mean over the classes
/// present in either map.
pub fn mean_iou(pred: &SemanticMap, gt: &SemanticMap, num_classes: usize) -> Result<IouResult> {
    if !pred.same_shape(gt) {
        return Err(Error::ShapeMismatch("prediction and ground truth differ in size"));
    }
    let mut inter = vec![0usize; num_classes];
    let mut union = vec![0usize; num_classes];
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        let (p, g) = (p as usize, g as usize);
        if p >= num_classes || g >= num_classes {
            return Err(Error::InvalidParameter("label outside the class set"));
        }
        union[g] += 1;
        if p == g {
            inter[g] += 1;
        } else {
            union[p] += 1;
        }
    }
    let per_class: Vec<Option<f64>> = (0..num_classes)
        .map(|c| (union[c] > 0).then(|| inter[c] as f64 / union[c] as f64))
        .collect();
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    let miou = if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    };
    Ok(IouResult { per_class, miou })
}
