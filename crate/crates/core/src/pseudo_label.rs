//! Visible-object pseudo-label masks from a CAD model at its ground-truth pose.
//!
//! The model is projected with the known pose; a projected pixel is kept only
//! where the observed (stereo) depth agrees with the rendered depth:
//! `|Z_render − Z_observed| < ε`. Pixels without observed depth are rejected.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, RigidTransform};
use crate::mesh::TriangleMesh;
use crate::raster::{same_size, BinaryMask, DepthMap};
use crate::render::{render_depth, RenderOutput};

pub const DEFAULT_EPSILON: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoLabelParams {
    /// Depth agreement threshold in millimetres.
    pub epsilon: f64,
}

impl Default for PseudoLabelParams {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl PseudoLabelParams {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {epsilon} mm"
            )));
        }
        Ok(Self { epsilon })
    }
}

/// Pixel tallies; `projected = retained + rejected_occluded + rejected_no_depth`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct PseudoLabelReport {
    pub projected_pixels: usize,
    pub retained_pixels: usize,
    pub rejected_occluded: usize,
    pub rejected_no_depth: usize,
}

/// Filters an already rendered projection against observed depth.
pub fn filter_projection(
    rendered: &RenderOutput,
    observed: &DepthMap,
    params: &PseudoLabelParams,
) -> Result<(BinaryMask, PseudoLabelReport)> {
    same_size(
        "observed depth vs camera",
        observed.size(),
        rendered.mask.size(),
    )?;
    let (w, h) = rendered.mask.size();
    let mut mask = BinaryMask::empty(w, h);
    let mut report = PseudoLabelReport::default();
    for i in rendered.mask.set_indices() {
        report.projected_pixels += 1;
        let z_proj = rendered
            .depth
            .get_index(i)
            .expect("covered pixels carry depth");
        match observed.get_index(i) {
            None => report.rejected_no_depth += 1,
            Some(z_obs) if (z_proj - z_obs).abs() < params.epsilon => {
                mask.set_index(i, true);
                report.retained_pixels += 1;
            }
            Some(_) => report.rejected_occluded += 1,
        }
    }
    Ok((mask, report))
}

pub fn generate_pseudo_mask(
    mesh: &TriangleMesh,
    gt_pose: &RigidTransform,
    intr: &CameraIntrinsics,
    observed: &DepthMap,
    params: &PseudoLabelParams,
) -> Result<(BinaryMask, PseudoLabelReport)> {
    same_size(
        "observed depth vs camera",
        observed.size(),
        (intr.width, intr.height),
    )?;
    let rendered = render_depth(mesh, gt_pose, intr);
    filter_projection(&rendered, observed, params)
}
