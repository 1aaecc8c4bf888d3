//! ADD and 2D projection errors with threshold recalls.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, RigidTransform};
use crate::mesh::TriangleMesh;

/// ADD thresholds in millimetres.
pub const ADD_THRESHOLDS_MM: [f64; 3] = [1.0, 2.5, 5.0];
/// 2D projection thresholds in pixels.
pub const PROJ_THRESHOLDS_PX: [f64; 3] = [5.0, 20.0, 50.0];

/// Mean distance between mesh vertices under the two poses, mm.
pub fn add_metric(mesh: &TriangleMesh, gt: &RigidTransform, pred: &RigidTransform) -> f64 {
    let verts = mesh.vertices();
    verts
        .iter()
        .map(|v| (gt.apply(v) - pred.apply(v)).norm())
        .sum::<f64>()
        / verts.len() as f64
}

/// Which pose put a vertex behind the camera.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoseRole {
    GroundTruth,
    Predicted,
}

/// Mean pixel distance between vertex projections under the two poses.
pub fn projection_metric(
    mesh: &TriangleMesh,
    gt: &RigidTransform,
    pred: &RigidTransform,
    intr: &CameraIntrinsics,
) -> Result<f64> {
    let mut total = 0.0;
    for v in mesh.vertices() {
        let a = project_or_fail(intr, gt, v, PoseRole::GroundTruth)?;
        let b = project_or_fail(intr, pred, v, PoseRole::Predicted)?;
        total += ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
    }
    Ok(total / mesh.vertices().len() as f64)
}

fn project_or_fail(
    intr: &CameraIntrinsics,
    pose: &RigidTransform,
    v: &nalgebra::Vector3<f64>,
    role: PoseRole,
) -> Result<(f64, f64)> {
    let p = pose.apply(v);
    intr.project(&p).ok_or_else(|| {
        let which = match role {
            PoseRole::GroundTruth => "ground-truth",
            PoseRole::Predicted => "predicted",
        };
        Error::Metric(format!(
            "{which} pose places a model vertex behind the camera (z = {:.3} mm)",
            p.z
        ))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseMetricRecord {
    pub frame_id: u32,
    pub add_mm: f64,
    pub proj_px: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRecall {
    pub threshold: f64,
    pub recall: f64,
}

/// Recalls use strict `metric < threshold`; standard deviations are
/// population (divide by n).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseMetricSummary {
    pub recalls_add: Vec<ThresholdRecall>,
    pub recalls_proj: Vec<ThresholdRecall>,
    pub mean_add: f64,
    pub std_add: f64,
    pub mean_proj: f64,
    pub std_proj: f64,
    pub n_frames: usize,
    /// Frames left out of the summary: failed estimates and poses that put
    /// the model behind the camera. Set by the caller.
    pub n_excluded: usize,
    pub std_kind: String,
}

/// Fraction of `values` strictly below `threshold`.
pub fn recall_at(values: &[f64], threshold: f64) -> f64 {
    values.iter().filter(|v| **v < threshold).count() as f64 / values.len() as f64
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn summarize_pose(records: &[PoseMetricRecord]) -> Result<PoseMetricSummary> {
    if records.is_empty() {
        return Err(Error::Metric(
            "cannot summarize an empty record list".into(),
        ));
    }
    if let Some(r) = records.iter().find(|r| {
        !(r.add_mm.is_finite() && r.add_mm >= 0.0 && r.proj_px.is_finite() && r.proj_px >= 0.0)
    }) {
        return Err(Error::Metric(format!(
            "frame {}: metrics must be finite and non-negative",
            r.frame_id
        )));
    }
    let add: Vec<f64> = records.iter().map(|r| r.add_mm).collect();
    let proj: Vec<f64> = records.iter().map(|r| r.proj_px).collect();
    let recalls = |vals: &[f64], ths: &[f64]| {
        ths.iter()
            .map(|&t| ThresholdRecall {
                threshold: t,
                recall: recall_at(vals, t),
            })
            .collect()
    };
    let (mean_add, std_add) = mean_std(&add);
    let (mean_proj, std_proj) = mean_std(&proj);
    Ok(PoseMetricSummary {
        recalls_add: recalls(&add, &ADD_THRESHOLDS_MM),
        recalls_proj: recalls(&proj, &PROJ_THRESHOLDS_PX),
        mean_add,
        std_add,
        mean_proj,
        std_proj,
        n_frames: records.len(),
        n_excluded: 0,
        std_kind: "population".into(),
    })
}

impl PoseMetricSummary {
    /// Aligned text table: recall columns per threshold, then μ and σ, for
    /// ADD and 2D projection. Recalls are percentages.
    pub fn to_table(&self) -> String {
        let mut head = Vec::new();
        let mut row = Vec::new();
        for r in &self.recalls_add {
            head.push(format!("ADD<{}mm", r.threshold));
            row.push(format!("{:.2}", 100.0 * r.recall));
        }
        head.push("ADD μ".into());
        row.push(format!("{:.3}", self.mean_add));
        head.push("ADD σ".into());
        row.push(format!("{:.3}", self.std_add));
        for r in &self.recalls_proj {
            head.push(format!("2D<{}px", r.threshold));
            row.push(format!("{:.2}", 100.0 * r.recall));
        }
        head.push("2D μ".into());
        row.push(format!("{:.3}", self.mean_proj));
        head.push("2D σ".into());
        row.push(format!("{:.3}", self.std_proj));
        let widths: Vec<usize> = head
            .iter()
            .zip(&row)
            .map(|(h, r)| h.chars().count().max(r.chars().count()))
            .collect();
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        let mut out = String::new();
        let _ = writeln!(out, "{}", line(&head));
        let _ = writeln!(out, "{}", line(&row));
        let _ = writeln!(
            out,
            "frames: {} (σ is the {} standard deviation)",
            self.n_frames, self.std_kind
        );
        if self.n_excluded > 0 {
            let _ = writeln!(out, "excluded frames: {}", self.n_excluded);
        }
        out
    }
}
