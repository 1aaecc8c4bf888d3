//! Single-object pose estimation from a mask and a depth map.
//!
//! Hypotheses come from viewpoint sampling at a translation estimated from
//! the masked depth. Each is scored by rendering the model and comparing
//! depths, the best few are refined with ICP against the back-projected
//! masked depth, and the refined hypothesis with the highest render score
//! wins.

pub mod icp;
pub mod viewpoints;

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, PointCloud, RigidTransform};
use crate::mesh::TriangleMesh;
use crate::raster::{same_size, BinaryMask, DepthMap};
use crate::render::{render_depth_with, RenderOptions};

pub use icp::{icp_refine, kabsch, IcpParams, IcpResult};
pub use viewpoints::sample_viewpoints;

/// Observed points used for ICP are subsampled to at most this many.
const MAX_OBSERVED_POINTS: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorParams {
    pub n_viewpoints: usize,
    pub n_inplane: usize,
    /// Depth agreement threshold for render scoring, mm.
    pub score_tau: f64,
    pub icp_max_iters: usize,
    pub icp_corr_dist: f64,
    pub icp_converge_tol: f64,
    pub min_mask_pixels: usize,
    /// Hypotheses refined with ICP.
    pub top_k: usize,
    /// Surface samples of the model used by ICP.
    pub n_model_points: usize,
    /// Seed of the surface sampling.
    pub seed: u64,
}

impl Default for EstimatorParams {
    fn default() -> Self {
        Self {
            n_viewpoints: 162,
            n_inplane: 12,
            score_tau: 3.0,
            icp_max_iters: 60,
            icp_corr_dist: 10.0,
            icp_converge_tol: 1e-3,
            min_mask_pixels: 50,
            top_k: 5,
            n_model_points: 5000,
            seed: 0,
        }
    }
}

impl EstimatorParams {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_viewpoints", self.n_viewpoints),
            ("n_inplane", self.n_inplane),
            ("icp_max_iters", self.icp_max_iters),
            ("min_mask_pixels", self.min_mask_pixels),
            ("top_k", self.top_k),
            ("n_model_points", self.n_model_points),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v < 1) {
            return Err(Error::InvalidParameter(format!(
                "{name} must be at least 1"
            )));
        }
        let dists = [
            ("score_tau", self.score_tau),
            ("icp_corr_dist", self.icp_corr_dist),
            ("icp_converge_tol", self.icp_converge_tol),
        ];
        if let Some((name, v)) = dists.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "{name} must be positive, got {v}"
            )));
        }
        Ok(())
    }

    pub fn icp(&self) -> IcpParams {
        IcpParams {
            max_iters: self.icp_max_iters,
            corr_dist: self.icp_corr_dist,
            converge_tol: self.icp_converge_tol,
            ..IcpParams::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseHypothesis {
    pub pose: RigidTransform,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateResult {
    pub pose: RigidTransform,
    /// Render agreement of the final pose.
    pub score: f64,
    pub n_icp_iters: usize,
    pub inlier_fraction: f64,
    /// Seed used for model surface sampling.
    pub seed: u64,
}

/// Back-projects masked pixels with valid depth, in row-major order.
pub fn masked_points(
    mask: &BinaryMask,
    depth: &DepthMap,
    intr: &CameraIntrinsics,
) -> Vec<Vector3<f64>> {
    let w = mask.width() as usize;
    mask.set_indices()
        .filter_map(|i| {
            depth
                .get_index(i)
                .map(|z| intr.back_project_unchecked((i % w) as f64, (i / w) as f64, z))
        })
        .collect()
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Component-wise median of the back-projected masked depth.
pub fn init_translation(
    mask: &BinaryMask,
    depth: &DepthMap,
    intr: &CameraIntrinsics,
) -> Result<Vector3<f64>> {
    same_size("mask vs depth", mask.size(), depth.size())?;
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let pts = masked_points(mask, depth, intr);
    if pts.is_empty() {
        return Err(Error::NoValidDepth);
    }
    let axis = |k: usize| median(&mut pts.iter().map(|p| p[k]).collect::<Vec<_>>());
    Ok(Vector3::new(axis(0), axis(1), axis(2)))
}

/// Inclusive pixel box that contains every rendered pixel of `mesh` at
/// `pose`, or `None` when nothing can be rendered. Falls back to the whole
/// image when a vertex is too close to the camera to bound its projection.
fn projected_bounds(
    mesh: &TriangleMesh,
    pose: &RigidTransform,
    intr: &CameraIntrinsics,
    near: f64,
) -> Option<(u32, u32, u32, u32)> {
    let full = (0, 0, intr.width - 1, intr.height - 1);
    let (mut lo_u, mut lo_v, mut hi_u, mut hi_v) = (
        f64::INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::NEG_INFINITY,
    );
    for v in mesh.vertices() {
        let p = pose.apply(v);
        if p.z < near {
            return Some(full);
        }
        let (u, v) = intr.project(&p)?;
        lo_u = lo_u.min(u);
        lo_v = lo_v.min(v);
        hi_u = hi_u.max(u);
        hi_v = hi_v.max(v);
    }
    let (w, h) = (intr.width as f64, intr.height as f64);
    if hi_u < 0.0 || hi_v < 0.0 || lo_u > w - 1.0 || lo_v > h - 1.0 {
        return None;
    }
    Some((
        lo_u.floor().max(0.0) as u32,
        lo_v.floor().max(0.0) as u32,
        hi_u.ceil().min(w - 1.0) as u32,
        hi_v.ceil().min(h - 1.0) as u32,
    ))
}

fn union_box(
    a: Option<(u32, u32, u32, u32)>,
    b: Option<(u32, u32, u32, u32)>,
) -> Option<(u32, u32, u32, u32)> {
    match (a, b) {
        (Some(a), Some(b)) => Some((a.0.min(b.0), a.1.min(b.1), a.2.max(b.2), a.3.max(b.3))),
        (a, None) => a,
        (None, b) => b,
    }
}

/// Region-of-interest render of the hypothesis: per-pixel rendered depth for
/// the box, plus the box itself.
struct RoiRender {
    x0: u32,
    y0: u32,
    w: u32,
    depth: DepthMap,
}

impl RoiRender {
    fn new(
        mesh: &TriangleMesh,
        pose: &RigidTransform,
        intr: &CameraIntrinsics,
        roi: (u32, u32, u32, u32),
    ) -> Self {
        let (x0, y0, x1, y1) = roi;
        let (w, h) = (x1 - x0 + 1, y1 - y0 + 1);
        let out = render_depth_with(
            mesh,
            pose,
            &intr.crop(x0, y0, w, h),
            &RenderOptions::default(),
        );
        Self {
            x0,
            y0,
            w,
            depth: out.depth,
        }
    }

    #[inline]
    fn get(&self, x: u32, y: u32) -> Option<f64> {
        if x < self.x0 || y < self.y0 || x >= self.x0 + self.w || y >= self.y0 + self.depth.height()
        {
            return None;
        }
        self.depth.get(x - self.x0, y - self.y0)
    }
}

/// Render-and-compare agreement in `[0, 1]`: over the union of the rendered
/// and observed masks, the fraction of pixels where the rendered depth and
/// the observed (masked) depth are both valid and differ by less than `tau`.
pub fn score_hypothesis(
    mesh: &TriangleMesh,
    pose: &RigidTransform,
    intr: &CameraIntrinsics,
    observed: &DepthMap,
    mask: &BinaryMask,
    tau: f64,
) -> f64 {
    score_with_bounds(mesh, pose, intr, observed, mask, mask.bounding_box(), tau)
}

fn score_with_bounds(
    mesh: &TriangleMesh,
    pose: &RigidTransform,
    intr: &CameraIntrinsics,
    observed: &DepthMap,
    mask: &BinaryMask,
    mask_box: Option<(u32, u32, u32, u32)>,
    tau: f64,
) -> f64 {
    if mask.size() != (intr.width, intr.height) || observed.size() != mask.size() {
        return 0.0;
    }
    let render_box = projected_bounds(mesh, pose, intr, RenderOptions::default().near_plane);
    let Some(roi) = union_box(mask_box, render_box) else {
        return 0.0;
    };
    let rendered = render_box.map(|_| RoiRender::new(mesh, pose, intr, roi));
    let (mut union, mut agree) = (0usize, 0usize);
    for y in roi.1..=roi.3 {
        for x in roi.0..=roi.2 {
            let z_r = rendered.as_ref().and_then(|r| r.get(x, y));
            let in_mask = mask.get(x, y);
            if z_r.is_none() && !in_mask {
                continue;
            }
            union += 1;
            let z_o = if in_mask { observed.get(x, y) } else { None };
            if let (Some(a), Some(b)) = (z_r, z_o) {
                if (a - b).abs() < tau {
                    agree += 1;
                }
            }
        }
    }
    if union == 0 {
        0.0
    } else {
        agree as f64 / union as f64
    }
}

/// Centroid of the rendered depth inside the hypothesis footprint, camera frame.
fn rendered_centroid(
    mesh: &TriangleMesh,
    pose: &RigidTransform,
    intr: &CameraIntrinsics,
) -> Option<Vector3<f64>> {
    let roi = projected_bounds(mesh, pose, intr, RenderOptions::default().near_plane)?;
    let r = RoiRender::new(mesh, pose, intr, roi);
    let mut sum = Vector3::zeros();
    let mut n = 0usize;
    for y in roi.1..=roi.3 {
        for x in roi.0..=roi.2 {
            if let Some(z) = r.get(x, y) {
                sum += intr.back_project_unchecked(x as f64, y as f64, z);
                n += 1;
            }
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Shifts the hypothesis so its rendered visible surface has the same
/// centroid as the observed points.
fn align_visible_centroid(
    mesh: &TriangleMesh,
    pose: &RigidTransform,
    intr: &CameraIntrinsics,
    observed_centroid: &Vector3<f64>,
) -> RigidTransform {
    match rendered_centroid(mesh, pose, intr) {
        Some(c) => pose.with_translation(pose.translation() + (observed_centroid - c)),
        None => *pose,
    }
}

/// Evenly strided subset of at most `max` points, order preserved.
fn subsample(points: Vec<Vector3<f64>>, max: usize) -> Vec<Vector3<f64>> {
    if points.len() <= max {
        return points;
    }
    let n = points.len();
    (0..max).map(|k| points[k * n / max]).collect()
}

/// Scores every sampled rotation placed at the observed location, returning
/// hypotheses in sampling order.
pub fn generate_hypotheses(
    mesh: &TriangleMesh,
    intr: &CameraIntrinsics,
    depth: &DepthMap,
    mask: &BinaryMask,
    params: &EstimatorParams,
) -> Result<Vec<PoseHypothesis>> {
    let t0 = init_translation(mask, depth, intr)?;
    let observed = masked_points(mask, depth, intr);
    let obs_centroid = observed.iter().fold(Vector3::zeros(), |a, p| a + p) / observed.len() as f64;
    let center = mesh.center();
    let mask_box = mask.bounding_box();
    let rotations = sample_viewpoints(params.n_viewpoints, params.n_inplane);
    Ok(rotations
        .par_iter()
        .map(|r| {
            let placed = r.with_translation(t0 - r.rotation() * center);
            let pose = align_visible_centroid(mesh, &placed, intr, &obs_centroid);
            let score =
                score_with_bounds(mesh, &pose, intr, depth, mask, mask_box, params.score_tau);
            PoseHypothesis { pose, score }
        })
        .collect())
}

/// Indices of the `k` best hypotheses; ties go to the lower index.
fn top_k(hyps: &[PoseHypothesis], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..hyps.len()).collect();
    order.sort_by(|&a, &b| hyps[b].score.total_cmp(&hyps[a].score).then(a.cmp(&b)));
    order.truncate(k);
    order
}

pub fn estimate_pose(
    mesh: &TriangleMesh,
    intr: &CameraIntrinsics,
    depth: &DepthMap,
    mask: &BinaryMask,
    params: &EstimatorParams,
) -> Result<EstimateResult> {
    params.validate()?;
    same_size("mask vs camera", mask.size(), (intr.width, intr.height))?;
    same_size("depth vs camera", depth.size(), (intr.width, intr.height))?;
    let found = mask.count();
    if found < params.min_mask_pixels {
        return Err(Error::MaskTooSmall {
            found,
            required: params.min_mask_pixels,
        });
    }
    let hyps = generate_hypotheses(mesh, intr, depth, mask, params)?;
    if hyps.iter().all(|h| h.score <= 0.0) {
        return Err(Error::EstimationFailed);
    }

    let observed = PointCloud {
        points: subsample(masked_points(mask, depth, intr), MAX_OBSERVED_POINTS),
    };
    let model = mesh.sample_surface(params.n_model_points, params.seed);
    let icp_params = params.icp();
    let mask_box = mask.bounding_box();

    let candidates: Vec<EstimateResult> = top_k(&hyps, params.top_k)
        .into_par_iter()
        .map(|i| {
            let start = hyps[i];
            match icp_refine(&model, &observed, &start.pose, &icp_params) {
                Ok(refined) => EstimateResult {
                    pose: refined.pose,
                    score: score_with_bounds(
                        mesh,
                        &refined.pose,
                        intr,
                        depth,
                        mask,
                        mask_box,
                        params.score_tau,
                    ),
                    n_icp_iters: refined.n_iters,
                    inlier_fraction: refined.inlier_fraction,
                    seed: params.seed,
                },
                Err(_) => EstimateResult {
                    pose: start.pose,
                    score: start.score,
                    n_icp_iters: 0,
                    inlier_fraction: 0.0,
                    seed: params.seed,
                },
            }
        })
        .collect();

    // First of the best wins, so the ranking order breaks ties.
    let best = candidates
        .iter()
        .fold(None::<&EstimateResult>, |best, c| match best {
            Some(b) if b.score >= c.score => Some(b),
            _ => Some(c),
        })
        .expect("top_k is non-empty");
    if best.score <= 0.0 {
        return Err(Error::EstimationFailed);
    }
    Ok(*best)
}
