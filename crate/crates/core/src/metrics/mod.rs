//! Pose and segmentation evaluation metrics.

mod pose;
mod seg;

pub use pose::{
    add_metric, mean_std, projection_metric, recall_at, summarize_pose, PoseMetricRecord,
    PoseMetricSummary, PoseRole, ThresholdRecall, ADD_THRESHOLDS_MM, PROJ_THRESHOLDS_PX,
};
pub use seg::{
    iou_thresholds, mask_iou, seg_ap_ar, AreaRange, SegFrame, SegMetricSummary, MEDIUM_AREA,
    RECALL_POINTS, SMALL_AREA,
};
