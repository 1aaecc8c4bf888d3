//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{Matrix3, Vector3};
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toolpose::{CameraIntrinsics, GrayImage, RigidTransform, TriangleMesh};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Asymmetric tool-like model: a shaft with a jaw on one end and a fin on
/// the other.
pub fn tool_mesh() -> TriangleMesh {
    let shaft = TriangleMesh::cuboid(
        Vector3::new(-15.0, -3.0, -3.0),
        Vector3::new(15.0, 3.0, 3.0),
    );
    let jaw = TriangleMesh::cuboid(Vector3::new(9.0, 3.0, -3.0), Vector3::new(15.0, 12.0, 3.0));
    let fin = TriangleMesh::cuboid(Vector3::new(-15.0, -3.0, 3.0), Vector3::new(-9.0, 3.0, 9.0));
    TriangleMesh::merge(&[shaft, jaw, fin]).unwrap()
}

pub fn occluder_mesh() -> TriangleMesh {
    TriangleMesh::cuboid(Vector3::new(-6.0, -6.0, -2.0), Vector3::new(6.0, 6.0, 2.0))
}

/// Uniform rotation from a unit quaternion drawn by rejection in the 4-ball.
pub fn random_rotation(rng: &mut impl Rng) -> Matrix3<f64> {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n2: f64 = q.iter().map(|x| x * x).sum();
        if n2 > 1e-3 && n2 <= 1.0 {
            let n = n2.sqrt();
            let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
            return Matrix3::new(
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            );
        }
    }
}

pub fn random_pose(rng: &mut impl Rng, t_lo: [f64; 3], t_hi: [f64; 3]) -> RigidTransform {
    let r = random_rotation(rng);
    let t = Vector3::from_fn(|i, _| rng.random_range(t_lo[i]..=t_hi[i]));
    RigidTransform::from_parts_normalized(r, t)
}

/// Camera ray through pixel centre `(u, v)`, scaled so that `z = 1`.
fn pixel_ray(intr: &CameraIntrinsics, u: f64, v: f64) -> Vector3<f64> {
    Vector3::new((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0)
}

/// Nearest positive hit of the pixel ray with the posed mesh, found by
/// Möller–Trumbore against every triangle. Returns the camera-frame depth.
pub fn ray_cast_depth(
    mesh: &TriangleMesh,
    pose: &RigidTransform,
    intr: &CameraIntrinsics,
    u: f64,
    v: f64,
) -> Option<f64> {
    let dir = pixel_ray(intr, u, v);
    let verts: Vec<Vector3<f64>> = mesh.vertices().iter().map(|p| pose.apply(p)).collect();
    let mut best: Option<f64> = None;
    for tri in mesh.triangles() {
        let (a, b, c) = (verts[tri[0]], verts[tri[1]], verts[tri[2]]);
        let e1 = b - a;
        let e2 = c - a;
        let p = dir.cross(&e2);
        let det = e1.dot(&p);
        if det.abs() < 1e-12 {
            continue;
        }
        let s = -a;
        let bu = s.dot(&p) / det;
        if !(-1e-9..=1.0 + 1e-9).contains(&bu) {
            continue;
        }
        let q = s.cross(&e1);
        let bv = dir.dot(&q) / det;
        if bv < -1e-9 || bu + bv > 1.0 + 1e-9 {
            continue;
        }
        let t = e2.dot(&q) / det;
        if t > 0.0 && best.is_none_or(|b| t < b) {
            best = Some(t);
        }
    }
    best
}

/// Entry depth of the pixel ray into an axis-aligned box `[-h, h]³` posed by
/// `pose`, by the slab method in the box frame.
pub fn ray_box_depth(
    half: f64,
    pose: &RigidTransform,
    intr: &CameraIntrinsics,
    u: f64,
    v: f64,
) -> Option<f64> {
    let r = pose.rotation().transpose();
    let origin = r * (-pose.translation());
    let dir = r * pixel_ray(intr, u, v);
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for a in 0..3 {
        if dir[a].abs() < 1e-15 {
            if origin[a].abs() > half {
                return None;
            }
            continue;
        }
        let (mut near, mut far) = ((-half - origin[a]) / dir[a], (half - origin[a]) / dir[a]);
        if near > far {
            std::mem::swap(&mut near, &mut far);
        }
        t0 = t0.max(near);
        t1 = t1.min(far);
    }
    (t0 <= t1 && t0 > 0.0).then_some(t0)
}

/// Row-major rotation and translation as plain arrays.
pub fn raw(pose: &RigidTransform) -> ([[f64; 3]; 3], [f64; 3]) {
    let r = pose.rotation_row_major();
    let t = pose.translation();
    (
        [[r[0], r[1], r[2]], [r[3], r[4], r[5]], [r[6], r[7], r[8]]],
        [t.x, t.y, t.z],
    )
}

fn apply_raw(r: &[[f64; 3]; 3], t: &[f64; 3], p: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2] + t[i];
    }
    out
}

/// Mean vertex displacement by direct summation.
pub fn add_oracle(vertices: &[[f64; 3]], gt: &RigidTransform, pred: &RigidTransform) -> f64 {
    let (rg, tg) = raw(gt);
    let (rp, tp) = raw(pred);
    let mut sum = 0.0;
    for &v in vertices {
        let a = apply_raw(&rg, &tg, v);
        let b = apply_raw(&rp, &tp, v);
        sum += ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
    }
    sum / vertices.len() as f64
}

/// Mean projected-vertex displacement by direct summation.
pub fn projection_oracle(
    vertices: &[[f64; 3]],
    gt: &RigidTransform,
    pred: &RigidTransform,
    k: &CameraIntrinsics,
) -> f64 {
    let (rg, tg) = raw(gt);
    let (rp, tp) = raw(pred);
    let proj = |p: [f64; 3]| (k.fx * p[0] / p[2] + k.cx, k.fy * p[1] / p[2] + k.cy);
    let mut sum = 0.0;
    for &v in vertices {
        let a = proj(apply_raw(&rg, &tg, v));
        let b = proj(apply_raw(&rp, &tp, v));
        sum += ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
    }
    sum / vertices.len() as f64
}

/// Shifted stereo pair: `right(x) = left(x + shift)`, so the true disparity
/// is `shift`. The texture is smoothed seeded noise.
pub fn textured_pair(width: u32, height: u32, shift: u32, seed: u64) -> (GrayImage, GrayImage) {
    let mut r = rng(seed);
    let (tw, th) = (width + shift + 2, height + 2);
    let noise: Vec<f64> = (0..tw * th).map(|_| r.random::<f64>()).collect();
    let tex = |x: u32, y: u32| -> f64 {
        let mut s = 0.0;
        for dy in 0..3 {
            for dx in 0..3 {
                s += noise[((y + dy) * tw + x + dx) as usize];
            }
        }
        s / 9.0
    };
    let left = GrayImage::from_fn(width, height, tex).unwrap();
    let right = GrayImage::from_fn(width, height, |x, y| tex(x + shift, y)).unwrap();
    (left, right)
}

// Segmentation AP/AR oracle in exact rational arithmetic.

pub type Q = Ratio<i64>;

/// Instance masks as lists of pixel indices.
#[derive(Clone, Debug)]
pub struct OracleFrame {
    pub preds: Vec<(Vec<usize>, f64)>,
    pub gts: Vec<Vec<usize>>,
}

fn iou_exact(a: &[usize], b: &[usize]) -> Q {
    let inter = a.iter().filter(|p| b.contains(p)).count() as i64;
    let union = (a.len() + b.len()) as i64 - inter;
    if union == 0 {
        Q::from_integer(0)
    } else {
        Q::new(inter, union)
    }
}

/// Inclusive area bounds in pixels; `None` accepts everything.
pub fn in_stratum(area: usize, stratum: Option<(usize, usize)>) -> bool {
    stratum.is_none_or(|(lo, hi)| area >= lo && area <= hi)
}

/// AP and final recall at IoU threshold `thr`, or `None` without GT in the
/// stratum. Precision at each recall level is the best precision of any
/// ranked prefix reaching that recall.
pub fn oracle_ap_recall(
    frames: &[OracleFrame],
    thr: Q,
    stratum: Option<(usize, usize)>,
) -> Option<(Q, Q)> {
    let n_gt = frames
        .iter()
        .flat_map(|f| &f.gts)
        .filter(|g| in_stratum(g.len(), stratum))
        .count() as i64;
    if n_gt == 0 {
        return None;
    }
    // (confidence, frame, rank within frame, counted, true positive)
    let mut ranked: Vec<(f64, usize, usize, bool, bool)> = Vec::new();
    for (fi, f) in frames.iter().enumerate() {
        let mut order: Vec<usize> = (0..f.preds.len()).collect();
        order.sort_by(|&a, &b| f.preds[b].1.partial_cmp(&f.preds[a].1).unwrap());
        let mut used = vec![false; f.gts.len()];
        for (rank, &p) in order.iter().enumerate() {
            let mut best: Option<(usize, Q, bool)> = None;
            for (g, gt) in f.gts.iter().enumerate() {
                if used[g] {
                    continue;
                }
                let iou = iou_exact(&f.preds[p].0, gt);
                if iou < thr {
                    continue;
                }
                let ignored = !in_stratum(gt.len(), stratum);
                let better = match best {
                    None => true,
                    // a GT inside the stratum always beats an ignored one
                    Some((_, biou, bign)) => (bign && !ignored) || (bign == ignored && iou > biou),
                };
                if better {
                    best = Some((g, iou, ignored));
                }
            }
            let (counted, tp) = match best {
                Some((g, _, ign)) => {
                    used[g] = true;
                    (!ign, !ign)
                }
                None => (in_stratum(f.preds[p].0.len(), stratum), false),
            };
            ranked.push((f.preds[p].1, fi, rank, counted, tp));
        }
    }
    ranked.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut points: Vec<(Q, Q)> = Vec::new();
    let (mut tp, mut n) = (0i64, 0i64);
    for r in ranked.iter().filter(|r| r.3) {
        n += 1;
        if r.4 {
            tp += 1;
        }
        points.push((Q::new(tp, n_gt), Q::new(tp, n)));
    }
    let mut ap = Q::from_integer(0);
    for k in 0..=100i64 {
        let level = Q::new(k, 100);
        ap += points
            .iter()
            .filter(|(rc, _)| *rc >= level)
            .map(|(_, pr)| *pr)
            .max()
            .unwrap_or(Q::from_integer(0));
    }
    let recall = points.last().map_or(Q::from_integer(0), |p| p.0);
    Some((ap / 101, recall))
}

pub fn oracle_thresholds() -> Vec<Q> {
    (0..10).map(|i| Q::new(50 + 5 * i, 100)).collect()
}

pub fn to_f64(q: Q) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}
