//! Instance segmentation AP/AR over IoU thresholds 0.50:0.05:0.95 with
//! COCO-style greedy matching and size strata.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::BinaryMask;

/// Upper bound (exclusive) of the small stratum, pixels.
pub const SMALL_AREA: usize = 32 * 32;
/// Upper bound (inclusive) of the medium stratum, pixels.
pub const MEDIUM_AREA: usize = 96 * 96;
/// Number of recall sample points for interpolated AP.
pub const RECALL_POINTS: usize = 101;

/// IoU thresholds 0.50, 0.55, …, 0.95.
pub fn iou_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

/// `|a ∩ b| / |a ∪ b|`, or 0 when both are empty.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    let inter = a.intersection_count(b)?;
    let union = a.union_count(b)?;
    Ok(if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AreaRange {
    All,
    Small,
    Medium,
    Large,
}

impl AreaRange {
    pub fn contains(self, area: usize) -> bool {
        match self {
            AreaRange::All => true,
            AreaRange::Small => area < SMALL_AREA,
            AreaRange::Medium => (SMALL_AREA..=MEDIUM_AREA).contains(&area),
            AreaRange::Large => area > MEDIUM_AREA,
        }
    }
}

/// Predictions and ground truth for one image.
#[derive(Debug, Clone, Default)]
pub struct SegFrame {
    /// Predicted masks with confidence in `[0, 1]`.
    pub predictions: Vec<(BinaryMask, f64)>,
    pub gts: Vec<BinaryMask>,
}

/// AP/AR fractions. Strata without any ground-truth instance are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegMetricSummary {
    pub ap_5095: f64,
    pub ap_50: f64,
    pub ap_75: f64,
    pub ap_small: Option<f64>,
    pub ap_medium: Option<f64>,
    pub ap_large: Option<f64>,
    pub ar_5095: f64,
    /// AP at each threshold in `iou_thresholds()` order.
    pub ap_per_threshold: Vec<f64>,
    /// Final recall at each threshold.
    pub recall_per_threshold: Vec<f64>,
    pub n_gt: usize,
    pub n_predictions: usize,
}

/// Precomputed per-frame data shared by every threshold and stratum.
struct FrameTable {
    /// Prediction indices sorted by confidence, descending (stable).
    order: Vec<usize>,
    conf: Vec<f64>,
    pred_area: Vec<usize>,
    gt_area: Vec<usize>,
    /// `iou[p][g]`
    iou: Vec<Vec<f64>>,
}

impl FrameTable {
    fn new(frame: &SegFrame) -> Result<Self> {
        let conf: Vec<f64> = frame.predictions.iter().map(|p| p.1).collect();
        let mut order: Vec<usize> = (0..conf.len()).collect();
        order.sort_by(|&a, &b| conf[b].total_cmp(&conf[a]));
        let iou = frame
            .predictions
            .iter()
            .map(|(p, _)| {
                frame
                    .gts
                    .iter()
                    .map(|g| mask_iou(p, g))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            order,
            conf,
            pred_area: frame.predictions.iter().map(|p| p.0.count()).collect(),
            gt_area: frame.gts.iter().map(BinaryMask::count).collect(),
            iou,
        })
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Outcome {
    TruePositive,
    FalsePositive,
    Ignored,
}

/// Greedy matching in one frame at one threshold. Each prediction, in
/// confidence order, takes the unmatched GT of highest IoU ≥ `thr`,
/// preferring GTs inside the stratum. Predictions matched to out-of-stratum
/// GTs, and unmatched predictions whose own area is out of stratum, are
/// ignored.
fn match_frame(t: &FrameTable, thr: f64, range: AreaRange) -> Vec<(f64, Outcome)> {
    let gt_ignored: Vec<bool> = t.gt_area.iter().map(|&a| !range.contains(a)).collect();
    // GTs in stratum first, then ignored ones, stable
    let mut gt_order: Vec<usize> = (0..t.gt_area.len()).collect();
    gt_order.sort_by_key(|&g| gt_ignored[g]);
    let mut taken = vec![false; t.gt_area.len()];
    let mut out = Vec::with_capacity(t.order.len());
    for &p in &t.order {
        let mut best_iou = thr.min(1.0 - 1e-10);
        let mut best: Option<usize> = None;
        for &g in &gt_order {
            if taken[g] {
                continue;
            }
            // stop once a real match exists and only ignored GTs remain
            if let Some(b) = best {
                if !gt_ignored[b] && gt_ignored[g] {
                    break;
                }
            }
            if t.iou[p][g] < best_iou {
                continue;
            }
            best_iou = t.iou[p][g];
            best = Some(g);
        }
        let outcome = match best {
            Some(g) => {
                taken[g] = true;
                if gt_ignored[g] {
                    Outcome::Ignored
                } else {
                    Outcome::TruePositive
                }
            }
            None if !range.contains(t.pred_area[p]) => Outcome::Ignored,
            None => Outcome::FalsePositive,
        };
        out.push((t.conf[p], outcome));
    }
    out
}

/// Interpolated AP and final recall for one threshold and stratum, or
/// `None` if the stratum holds no GT.
fn evaluate(tables: &[FrameTable], thr: f64, range: AreaRange) -> Option<(f64, f64)> {
    let n_gt: usize = tables
        .iter()
        .map(|t| t.gt_area.iter().filter(|&&a| range.contains(a)).count())
        .sum();
    if n_gt == 0 {
        return None;
    }
    // frame order then in-frame order breaks confidence ties
    let mut dets: Vec<(f64, Outcome)> = tables
        .iter()
        .flat_map(|t| match_frame(t, thr, range))
        .collect();
    dets.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut recall = Vec::new();
    let mut precision = Vec::new();
    for (_, o) in dets {
        match o {
            Outcome::TruePositive => tp += 1,
            Outcome::FalsePositive => fp += 1,
            Outcome::Ignored => continue,
        }
        recall.push(tp as f64 / n_gt as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    for i in (1..precision.len()).rev() {
        precision[i - 1] = precision[i - 1].max(precision[i]);
    }
    let mut ap = 0.0;
    for k in 0..RECALL_POINTS {
        let r = k as f64 / (RECALL_POINTS - 1) as f64;
        let idx = recall.partition_point(|&x| x < r);
        if idx < precision.len() {
            ap += precision[idx];
        }
    }
    Some((
        ap / RECALL_POINTS as f64,
        recall.last().copied().unwrap_or(0.0),
    ))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// COCO-style mask AP/AR. Confidence ties are broken by frame order and then
/// by prediction order. There is no per-image detection cap. Fails when
/// there is no ground truth at all or a confidence is outside `[0, 1]`.
pub fn seg_ap_ar(frames: &[SegFrame]) -> Result<SegMetricSummary> {
    for (f, frame) in frames.iter().enumerate() {
        for (i, (_, c)) in frame.predictions.iter().enumerate() {
            if !(0.0..=1.0).contains(c) {
                return Err(Error::Metric(format!(
                    "frame {f}, prediction {i}: confidence {c} is outside [0, 1]"
                )));
            }
        }
    }
    let tables = frames
        .par_iter()
        .map(FrameTable::new)
        .collect::<Result<Vec<_>>>()?;
    let thresholds = iou_thresholds();
    let stratum = |range: AreaRange| -> Option<Vec<(f64, f64)>> {
        thresholds
            .iter()
            .map(|&t| evaluate(&tables, t, range))
            .collect()
    };
    let all = stratum(AreaRange::All)
        .ok_or_else(|| Error::Metric("no ground-truth instances to evaluate".into()))?;
    let ap_of = |range| stratum(range).map(|v| mean(&v.iter().map(|x| x.0).collect::<Vec<_>>()));
    let ap_per_threshold: Vec<f64> = all.iter().map(|x| x.0).collect();
    let recall_per_threshold: Vec<f64> = all.iter().map(|x| x.1).collect();
    Ok(SegMetricSummary {
        ap_5095: mean(&ap_per_threshold),
        ap_50: ap_per_threshold[0],
        ap_75: ap_per_threshold[5],
        ap_small: ap_of(AreaRange::Small),
        ap_medium: ap_of(AreaRange::Medium),
        ap_large: ap_of(AreaRange::Large),
        ar_5095: mean(&recall_per_threshold),
        ap_per_threshold,
        recall_per_threshold,
        n_gt: frames.iter().map(|f| f.gts.len()).sum(),
        n_predictions: frames.iter().map(|f| f.predictions.len()).sum(),
    })
}

impl SegMetricSummary {
    /// Aligned two-column table, one row per metric, values in percent.
    pub fn to_table(&self) -> String {
        let fmt =
            |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{:.2}", 100.0 * x));
        let rows = [
            ("AP@[IoU=0.50:0.95]", fmt(Some(self.ap_5095))),
            ("AP@[IoU=0.50]", fmt(Some(self.ap_50))),
            ("AP@[IoU=0.75]", fmt(Some(self.ap_75))),
            ("AP_s (small)", fmt(self.ap_small)),
            ("AP_m (medium)", fmt(self.ap_medium)),
            ("AP_l (large)", fmt(self.ap_large)),
            ("AR@[IoU=0.50:0.95]", fmt(Some(self.ar_5095))),
        ];
        let w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (name, value) in rows {
            let _ = writeln!(out, "{name:<w$}  {value:>7}");
        }
        let _ = writeln!(
            out,
            "instances: {} ground truth, {} predicted",
            self.n_gt, self.n_predictions
        );
        out
    }
}
