//! Deterministic z-buffer rasterizer producing depth and coverage masks.
//!
//! Pixel `(i, j)` samples the continuous image point `(u, v) = (i, j)` in
//! projection coordinates, i.e. the pixel centre. Coverage follows the
//! top-left fill rule, depth is interpolated perspective-correctly (1/z is
//! affine in screen space) and the depth test is strict less-than, so among
//! equal depths the earlier triangle wins. Triangles crossing the near plane
//! are clipped in camera space; there is no far plane and no back-face
//! culling.

use std::path::Path;

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, RigidTransform};
use crate::mesh::TriangleMesh;
use crate::raster::{BinaryMask, DepthMap};

pub const DEFAULT_NEAR_PLANE: f64 = 1.0;

/// Rows per rasterization band; each band is owned by one worker.
const BAND_ROWS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    pub near_plane: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            near_plane: DEFAULT_NEAR_PLANE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub depth: DepthMap,
    pub mask: BinaryMask,
}

impl RenderOutput {
    /// Writes the depth as 16-bit PNG (`scale` mm per unit) and the mask as
    /// 8-bit PNG.
    pub fn save_debug(
        &self,
        depth_path: impl AsRef<Path>,
        mask_path: impl AsRef<Path>,
        scale: f64,
    ) -> Result<()> {
        self.depth.save_png(depth_path, scale)?;
        self.mask.save_png(mask_path)
    }
}

/// Joint z-buffer over several objects.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneRender {
    pub depth: DepthMap,
    /// Index of the object owning each pixel.
    pub owner: Vec<Option<u32>>,
}

impl SceneRender {
    /// Pixels won by object `index`.
    pub fn visible_mask(&self, index: usize) -> BinaryMask {
        let bits = self
            .owner
            .iter()
            .map(|o| *o == Some(index as u32))
            .collect();
        BinaryMask::from_bits(self.depth.width(), self.depth.height(), bits)
            .expect("owner buffer matches depth size")
    }

    pub fn coverage(&self) -> BinaryMask {
        let bits = self.owner.iter().map(Option::is_some).collect();
        BinaryMask::from_bits(self.depth.width(), self.depth.height(), bits)
            .expect("owner buffer matches depth size")
    }
}

#[derive(Clone, Copy)]
struct ScreenTri {
    p: [(f64, f64); 3],
    inv_z: [f64; 3],
    area: f64,
    object: u32,
    y_min: usize,
    y_max: usize,
    x_min: usize,
    x_max: usize,
}

/// Edge function with a canonical endpoint order, so that the two triangles
/// sharing an edge evaluate exactly opposite values.
#[inline]
fn edge(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    if a <= b {
        (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
    } else {
        -((a.0 - b.0) * (p.1 - b.1) - (a.1 - b.1) * (p.0 - b.0))
    }
}

/// Top or left edge for a triangle with positive `edge` orientation in a
/// y-down image.
#[inline]
fn is_top_left(a: (f64, f64), b: (f64, f64)) -> bool {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    (dy == 0.0 && dx > 0.0) || dy < 0.0
}

/// Clips a camera-space triangle to `z >= near`, returning a convex polygon
/// of 0, 3 or 4 vertices.
fn clip_near(tri: [Vector3<f64>; 3], near: f64) -> Vec<Vector3<f64>> {
    if tri.iter().all(|v| v.z >= near) {
        return tri.to_vec();
    }
    let mut out = Vec::with_capacity(4);
    for k in 0..3 {
        let a = tri[k];
        let b = tri[(k + 1) % 3];
        let (a_in, b_in) = (a.z >= near, b.z >= near);
        if a_in {
            out.push(a);
        }
        if a_in != b_in {
            let t = (near - a.z) / (b.z - a.z);
            let mut p = a + (b - a) * t;
            p.z = near;
            out.push(p);
        }
    }
    out
}

fn setup_triangles(
    objects: &[(&TriangleMesh, &RigidTransform)],
    intr: &CameraIntrinsics,
    opts: &RenderOptions,
) -> Vec<ScreenTri> {
    let (w, h) = (intr.width as f64, intr.height as f64);
    let mut tris = Vec::new();
    for (object, (mesh, pose)) in objects.iter().enumerate() {
        let cam: Vec<Vector3<f64>> = mesh.vertices().iter().map(|v| pose.apply(v)).collect();
        for t in mesh.triangles() {
            let poly = clip_near(t.map(|i| cam[i]), opts.near_plane);
            if poly.len() < 3 {
                continue;
            }
            let screen: Vec<((f64, f64), f64)> = poly
                .iter()
                .map(|v| {
                    (
                        (intr.fx * v.x / v.z + intr.cx, intr.fy * v.y / v.z + intr.cy),
                        1.0 / v.z,
                    )
                })
                .collect();
            for k in 1..screen.len() - 1 {
                let (mut a, mut b, c) = (screen[0], screen[k], screen[k + 1]);
                let mut area = edge(a.0, b.0, c.0);
                if area == 0.0 || !area.is_finite() {
                    continue;
                }
                if area < 0.0 {
                    std::mem::swap(&mut a, &mut b);
                    area = -area;
                }
                let xs = [a.0 .0, b.0 .0, c.0 .0];
                let ys = [a.0 .1, b.0 .1, c.0 .1];
                let lo_x = xs
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min)
                    .ceil()
                    .max(0.0);
                let hi_x = xs
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max)
                    .floor()
                    .min(w - 1.0);
                let lo_y = ys
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min)
                    .ceil()
                    .max(0.0);
                let hi_y = ys
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max)
                    .floor()
                    .min(h - 1.0);
                if lo_x > hi_x || lo_y > hi_y {
                    continue;
                }
                tris.push(ScreenTri {
                    p: [a.0, b.0, c.0],
                    inv_z: [a.1, b.1, c.1],
                    area,
                    object: object as u32,
                    x_min: lo_x as usize,
                    x_max: hi_x as usize,
                    y_min: lo_y as usize,
                    y_max: hi_y as usize,
                });
            }
        }
    }
    tris
}

fn rasterize(tris: &[ScreenTri], width: usize, height: usize) -> (Vec<f64>, Vec<Option<u32>>) {
    let n_bands = height.div_ceil(BAND_ROWS);
    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); n_bands];
    for (i, t) in tris.iter().enumerate() {
        for bin in &mut bins[t.y_min / BAND_ROWS..=t.y_max / BAND_ROWS] {
            bin.push(i);
        }
    }

    let mut zbuf = vec![f64::INFINITY; width * height];
    let mut owner = vec![None; width * height];
    zbuf.par_chunks_mut(BAND_ROWS * width)
        .zip(owner.par_chunks_mut(BAND_ROWS * width))
        .enumerate()
        .for_each(|(band, (zrows, orows))| {
            let y0 = band * BAND_ROWS;
            let y1 = (y0 + BAND_ROWS).min(height) - 1;
            for &ti in &bins[band] {
                let t = &tris[ti];
                let [p0, p1, p2] = t.p;
                let tl = [
                    is_top_left(p1, p2),
                    is_top_left(p2, p0),
                    is_top_left(p0, p1),
                ];
                for y in t.y_min.max(y0)..=t.y_max.min(y1) {
                    let row = (y - y0) * width;
                    for x in t.x_min..=t.x_max {
                        let p = (x as f64, y as f64);
                        let e = [edge(p1, p2, p), edge(p2, p0, p), edge(p0, p1, p)];
                        let inside = e
                            .iter()
                            .zip(&tl)
                            .all(|(&ei, &top_left)| ei > 0.0 || (ei == 0.0 && top_left));
                        if !inside {
                            continue;
                        }
                        let inv_z =
                            (e[0] * t.inv_z[0] + e[1] * t.inv_z[1] + e[2] * t.inv_z[2]) / t.area;
                        let z = 1.0 / inv_z;
                        if z < zrows[row + x] {
                            zrows[row + x] = z;
                            orows[row + x] = Some(t.object);
                        }
                    }
                }
            }
        });
    (zbuf, owner)
}

/// Renders several posed meshes into one joint z-buffer.
pub fn render_scene_with(
    objects: &[(&TriangleMesh, &RigidTransform)],
    intr: &CameraIntrinsics,
    opts: &RenderOptions,
) -> SceneRender {
    let tris = setup_triangles(objects, intr, opts);
    let (w, h) = (intr.width as usize, intr.height as usize);
    let (zbuf, owner) = rasterize(&tris, w, h);
    let mut depth = DepthMap::invalid(intr.width, intr.height);
    for (i, (z, o)) in zbuf.iter().zip(&owner).enumerate() {
        if o.is_some() {
            depth.set_index(i, *z);
        }
    }
    SceneRender { depth, owner }
}

pub fn render_scene(
    objects: &[(&TriangleMesh, &RigidTransform)],
    intr: &CameraIntrinsics,
) -> SceneRender {
    render_scene_with(objects, intr, &RenderOptions::default())
}

pub fn render_depth_with(
    mesh: &TriangleMesh,
    pose: &RigidTransform,
    intr: &CameraIntrinsics,
    opts: &RenderOptions,
) -> RenderOutput {
    let scene = render_scene_with(&[(mesh, pose)], intr, opts);
    let mask = scene.coverage();
    RenderOutput {
        depth: scene.depth,
        mask,
    }
}

/// Depth and coverage of a single mesh at `pose`.
pub fn render_depth(
    mesh: &TriangleMesh,
    pose: &RigidTransform,
    intr: &CameraIntrinsics,
) -> RenderOutput {
    render_depth_with(mesh, pose, intr, &RenderOptions::default())
}

/// Pixels where `scene[target]` wins the joint z-buffer.
pub fn render_visible_mask(
    scene: &[(&TriangleMesh, &RigidTransform)],
    target: usize,
    intr: &CameraIntrinsics,
) -> Result<BinaryMask> {
    if target >= scene.len() {
        return Err(Error::IndexOutOfRange {
            index: target,
            len: scene.len(),
        });
    }
    Ok(render_scene(scene, intr).visible_mask(target))
}
