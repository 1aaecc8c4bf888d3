//! Seeded synthetic scenes: one tool, optional occluders in front of it,
//! noisy depth and exact masks.

use std::fs;
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;

use super::scene::{
    frame_file, write_scene_json, FrameMeta, DEPTH_DIR, MASK_FULL_DIR, MASK_VISIB_DIR,
};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, RigidTransform, StereoRig};
use crate::mesh::TriangleMesh;
use crate::raster::{BinaryMask, DepthMap, DEFAULT_DEPTH_SCALE};
use crate::render::{render_depth, render_scene, DEFAULT_NEAR_PLANE};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub n_frames: u32,
    pub width: u32,
    pub height: u32,
    /// Focal length in pixels (fx = fy); the principal point is the image
    /// centre.
    pub focal: f64,
    /// Stereo baseline, mm. Stored in the camera file only.
    pub baseline: f64,
    /// Tool translation box, mm.
    pub translation_min: [f64; 3],
    pub translation_max: [f64; 3],
    /// Pixels the projected tool keeps from the image border.
    pub border_margin: u32,
    pub n_occluders: usize,
    /// Uniform scale applied to occluder meshes.
    pub occluder_scale: (f64, f64),
    /// Accepted fraction of the tool's silhouette hidden by occluders.
    pub occlusion_fraction: (f64, f64),
    /// Minimum depth separation between occluders and the tool, mm.
    pub min_gap: f64,
    /// Gaussian depth noise, mm.
    pub noise_sigma: f64,
    /// Probability that a valid depth pixel is dropped.
    pub dropout: f64,
    /// Millimetres per depth PNG unit.
    pub depth_scale: f64,
    /// Sampling attempts per frame before giving up.
    pub max_attempts: usize,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            n_frames: 10,
            width: 960,
            height: 540,
            focal: 800.0,
            baseline: 4.5,
            translation_min: [-40.0, -25.0, 150.0],
            translation_max: [40.0, 25.0, 250.0],
            border_margin: 4,
            n_occluders: 0,
            occluder_scale: (0.5, 1.0),
            occlusion_fraction: (0.1, 0.5),
            min_gap: 10.0,
            noise_sigma: 0.0,
            dropout: 0.0,
            depth_scale: DEFAULT_DEPTH_SCALE,
            max_attempts: 2000,
            seed: 0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.width == 0 || self.height == 0 {
            return bad("resolution must be positive".into());
        }
        if !(self.focal.is_finite()
            && self.focal > 0.0
            && self.baseline.is_finite()
            && self.baseline > 0.0)
        {
            return bad("focal length and baseline must be positive".into());
        }
        for a in 0..3 {
            let (lo, hi) = (self.translation_min[a], self.translation_max[a]);
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return bad(format!(
                    "translation range on axis {a} is empty: [{lo}, {hi}]"
                ));
            }
        }
        if self.translation_min[2] <= DEFAULT_NEAR_PLANE {
            return bad("translation z range must lie in front of the camera".into());
        }
        let (s0, s1) = self.occluder_scale;
        if !(s0 > 0.0 && s0 <= s1 && s1.is_finite()) {
            return bad(format!("occluder scale range [{s0}, {s1}] is invalid"));
        }
        let (f0, f1) = self.occlusion_fraction;
        if !(0.0 <= f0 && f0 <= f1 && f1 <= 1.0) {
            return bad(format!(
                "occlusion fraction range [{f0}, {f1}] must lie in [0, 1]"
            ));
        }
        if !(self.min_gap.is_finite() && self.min_gap > 0.0) {
            return bad("min_gap must be positive".into());
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad("noise sigma must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.dropout) {
            return bad("dropout must be a probability".into());
        }
        if !(self.depth_scale.is_finite() && self.depth_scale > 0.0) {
            return bad("depth scale must be positive".into());
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be at least 1".into());
        }
        Ok(())
    }

    pub fn camera(&self) -> Result<StereoRig> {
        let intr = CameraIntrinsics::new(
            self.focal,
            self.focal,
            (self.width as f64 - 1.0) / 2.0,
            (self.height as f64 - 1.0) / 2.0,
            self.width,
            self.height,
        )?;
        StereoRig::new(intr, self.baseline)
    }

    fn ranges(&self) -> String {
        let (a, b) = (self.translation_min, self.translation_max);
        format!(
            "x in [{}, {}], y in [{}, {}], z in [{}, {}] mm, image {}x{}, margin {} px",
            a[0], b[0], a[1], b[1], a[2], b[2], self.width, self.height, self.border_margin
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacedOccluder {
    pub mesh_index: usize,
    pub scale: f64,
    /// Pose of the scaled occluder mesh.
    pub pose: RigidTransform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthFrame {
    pub frame_id: u32,
    pub camera: StereoRig,
    pub gt_pose: RigidTransform,
    pub occluders: Vec<PlacedOccluder>,
    /// Joint scene depth before noise and dropout.
    pub depth_clean: DepthMap,
    /// Depth with noise and dropout, not yet quantized.
    pub depth: DepthMap,
    pub mask_visib: BinaryMask,
    pub mask_full: BinaryMask,
    /// Hidden fraction of the tool silhouette.
    pub occlusion: f64,
}

/// Per-frame generator; the stream depends only on `(seed, frame_id)`.
pub fn frame_rng(seed: u64, frame_id: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame_id as u64);
    rng
}

/// Uniformly distributed rotation.
pub fn random_rotation(rng: &mut impl Rng) -> RigidTransform {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
        let quat = Quaternion::new(q[0], q[1], q[2], q[3]);
        if quat.norm() > 1e-6 {
            let r = UnitQuaternion::from_quaternion(quat).to_rotation_matrix();
            return RigidTransform::from_parts_normalized(*r.matrix(), Vector3::zeros());
        }
    }
}

fn in_frustum(
    mesh: &TriangleMesh,
    pose: &RigidTransform,
    intr: &CameraIntrinsics,
    margin: u32,
) -> bool {
    let m = margin as f64;
    let (w, h) = (intr.width as f64, intr.height as f64);
    mesh.vertices().iter().all(|v| {
        let p = pose.apply(v);
        p.z > DEFAULT_NEAR_PLANE
            && intr
                .project(&p)
                .is_some_and(|(u, v)| u >= m && v >= m && u <= w - 1.0 - m && v <= h - 1.0 - m)
    })
}

fn sample_tool_pose(
    mesh: &TriangleMesh,
    intr: &CameraIntrinsics,
    params: &SynthParams,
    frame_id: u32,
    rng: &mut ChaCha8Rng,
) -> Result<RigidTransform> {
    let center = mesh.center();
    for _ in 0..params.max_attempts {
        let rot = random_rotation(rng);
        let t: [f64; 3] = std::array::from_fn(|a| {
            rng.random_range(params.translation_min[a]..=params.translation_max[a])
        });
        // the translation places the bounding-box centre
        let pose = rot.with_translation(Vector3::from(t) - rot.rotation() * center);
        if in_frustum(mesh, &pose, intr, params.border_margin) {
            return Ok(pose);
        }
    }
    Err(Error::SamplingFailed(format!(
        "frame {frame_id}: tool never fully inside the image after {} attempts ({})",
        params.max_attempts,
        params.ranges()
    )))
}

/// Places occluders entirely in front of the tool until the hidden fraction
/// of the tool silhouette falls inside the configured range.
fn sample_occluders(
    mesh: &TriangleMesh,
    pose: &RigidTransform,
    full: &BinaryMask,
    occluders: &[TriangleMesh],
    params: &SynthParams,
    frame_id: u32,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<PlacedOccluder>, f64)> {
    if params.n_occluders == 0 {
        return Ok((Vec::new(), 0.0));
    }
    let camera = params.camera()?;
    let intr = &camera.intrinsics;
    let tool_near = mesh
        .vertices()
        .iter()
        .map(|v| pose.apply(v).z)
        .fold(f64::INFINITY, f64::min);
    let (x0, y0, x1, y1) = full.bounding_box().expect("in-frustum tool covers pixels");
    let total = full.count() as f64;
    let (lo, hi) = params.occlusion_fraction;
    for _ in 0..params.max_attempts {
        let mut placed = Vec::with_capacity(params.n_occluders);
        let mut hidden = BinaryMask::empty(intr.width, intr.height);
        for _ in 0..params.n_occluders {
            let mesh_index = rng.random_range(0..occluders.len());
            let scale = rng.random_range(params.occluder_scale.0..=params.occluder_scale.1);
            let shape = &occluders[mesh_index];
            let radius = shape.radius() * scale;
            let rot = random_rotation(rng);
            let z = tool_near - params.min_gap - radius;
            if z - radius <= DEFAULT_NEAR_PLANE {
                continue;
            }
            // aim at a pixel of the tool's bounding box, padded so that
            // partial overlaps are reachable
            let pad = (radius * intr.fx / z) as i64;
            let u = rng.random_range(x0 as i64 - pad..=x1 as i64 + pad) as f64;
            let v = rng.random_range(y0 as i64 - pad..=y1 as i64 + pad) as f64;
            let target = intr.back_project_unchecked(u, v, z);
            let occ_pose = rot.with_translation(target - rot.rotation() * (shape.center() * scale));
            let scaled = shape.scaled(scale);
            let m = render_depth(&scaled, &occ_pose, intr).mask;
            for i in m.set_indices() {
                hidden.set_index(i, true);
            }
            placed.push(PlacedOccluder {
                mesh_index,
                scale,
                pose: occ_pose,
            });
        }
        if placed.len() < params.n_occluders {
            continue;
        }
        let fraction = hidden.intersection_count(full)? as f64 / total;
        if (lo..=hi).contains(&fraction) {
            return Ok((placed, fraction));
        }
    }
    Err(Error::SamplingFailed(format!(
        "frame {frame_id}: no occluder placement hid a fraction in [{lo}, {hi}] of the tool after {} attempts \
         (occluder scale in [{}, {}], gap {} mm, {})",
        params.max_attempts,
        params.occluder_scale.0,
        params.occluder_scale.1,
        params.min_gap,
        params.ranges()
    )))
}

fn corrupt_depth(clean: &DepthMap, params: &SynthParams, rng: &mut ChaCha8Rng) -> DepthMap {
    let mut out = clean.clone();
    if params.noise_sigma == 0.0 && params.dropout == 0.0 {
        return out;
    }
    let noise = Normal::new(0.0, params.noise_sigma).expect("sigma validated");
    for i in 0..clean.len() {
        let Some(z) = clean.get_index(i) else {
            continue;
        };
        if params.dropout > 0.0 && rng.random::<f64>() < params.dropout {
            out.invalidate_index(i);
            continue;
        }
        if params.noise_sigma > 0.0 {
            let noisy = z + noise.sample(rng);
            if noisy > 0.0 {
                out.set_index(i, noisy);
            } else {
                out.invalidate_index(i);
            }
        }
    }
    out
}

fn check_inputs(occluders: &[TriangleMesh], params: &SynthParams) -> Result<()> {
    params.validate()?;
    if params.n_occluders > 0 && occluders.is_empty() {
        return Err(Error::InvalidParameter(
            "occluders requested but no occluder mesh supplied".into(),
        ));
    }
    Ok(())
}

/// Generates one frame in memory.
pub fn synthesize_frame(
    mesh: &TriangleMesh,
    occluders: &[TriangleMesh],
    params: &SynthParams,
    frame_id: u32,
) -> Result<SynthFrame> {
    check_inputs(occluders, params)?;
    let camera = params.camera()?;
    let intr = &camera.intrinsics;
    let mut rng = frame_rng(params.seed, frame_id);
    let gt_pose = sample_tool_pose(mesh, intr, params, frame_id, &mut rng)?;
    let mask_full = render_depth(mesh, &gt_pose, intr).mask;
    let (placed, occlusion) = sample_occluders(
        mesh, &gt_pose, &mask_full, occluders, params, frame_id, &mut rng,
    )?;

    let scaled: Vec<TriangleMesh> = placed
        .iter()
        .map(|o| occluders[o.mesh_index].scaled(o.scale))
        .collect();
    let mut objects = vec![(mesh, &gt_pose)];
    objects.extend(scaled.iter().zip(&placed).map(|(m, o)| (m, &o.pose)));
    let scene = render_scene(&objects, intr);
    let depth = corrupt_depth(&scene.depth, params, &mut rng);
    Ok(SynthFrame {
        frame_id,
        camera,
        gt_pose,
        occluders: placed,
        mask_visib: scene.visible_mask(0),
        depth_clean: scene.depth,
        depth,
        mask_full,
        occlusion,
    })
}

/// Summary of a written frame.
#[derive(Debug, Clone, PartialEq)]
pub struct WrittenFrame {
    pub meta: FrameMeta,
    pub occlusion: f64,
    pub n_occluders: usize,
}

/// Generates `params.n_frames` frames and writes them as a scene directory.
/// Frames are produced in parallel; the output does not depend on the
/// thread count.
pub fn generate_synthetic(
    mesh: &TriangleMesh,
    occluders: &[TriangleMesh],
    params: &SynthParams,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<WrittenFrame>> {
    check_inputs(occluders, params)?;
    let dir = out_dir.as_ref();
    for sub in [DEPTH_DIR, MASK_VISIB_DIR, MASK_FULL_DIR] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let frames = (0..params.n_frames)
        .into_par_iter()
        .map(|id| {
            let f = synthesize_frame(mesh, occluders, params, id)?;
            f.depth
                .save_png(frame_file(dir, DEPTH_DIR, id, "png"), params.depth_scale)?;
            f.mask_visib
                .save_png(frame_file(dir, MASK_VISIB_DIR, id, "png"))?;
            f.mask_full
                .save_png(frame_file(dir, MASK_FULL_DIR, id, "png"))?;
            Ok(WrittenFrame {
                meta: FrameMeta {
                    frame_id: id,
                    camera: f.camera,
                    gt_pose: f.gt_pose,
                    object_id: 1,
                    depth_scale: params.depth_scale,
                },
                occlusion: f.occlusion,
                n_occluders: f.occluders.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let metas: Vec<FrameMeta> = frames.iter().map(|f| f.meta).collect();
    write_scene_json(dir, &metas)?;
    Ok(frames)
}
