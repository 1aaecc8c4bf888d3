//! Orientation sampling from icosphere vertex directions crossed with
//! in-plane rotations about the optical axis.

use std::collections::HashMap;
use std::f64::consts::TAU;

use nalgebra::{Matrix3, Vector3};

use crate::geometry::RigidTransform;

/// Unit vertices of an icosahedron subdivided `level` times
/// (12, 42, 162, 642, … vertices).
pub fn icosphere(level: u32) -> Vec<Vector3<f64>> {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vector3<f64>> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vector3<f64>>| {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) / 2.0).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    verts
}

/// `n` well-spread unit directions: all vertices of the smallest icosphere
/// with at least `n` vertices, thinned by farthest-point selection when that
/// icosphere has more than `n`.
pub fn viewpoint_directions(n: usize) -> Vec<Vector3<f64>> {
    let mut level = 0;
    let mut verts = icosphere(level);
    while verts.len() < n {
        level += 1;
        verts = icosphere(level);
    }
    if verts.len() == n {
        return verts;
    }
    let mut chosen = vec![0usize];
    let mut nearest: Vec<f64> = verts.iter().map(|v| (v - verts[0]).norm()).collect();
    while chosen.len() < n {
        // First index among equals keeps the choice deterministic.
        let (next, _) = nearest
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &d)| {
                if d > best.1 {
                    (i, d)
                } else {
                    best
                }
            });
        chosen.push(next);
        for (i, v) in verts.iter().enumerate() {
            nearest[i] = nearest[i].min((v - verts[next]).norm());
        }
    }
    chosen.into_iter().map(|i| verts[i]).collect()
}

/// Model-to-camera rotation that puts `view_dir` (model frame, pointing from
/// the object toward the camera) on the camera's −z axis.
pub fn look_at_rotation(view_dir: &Vector3<f64>) -> Matrix3<f64> {
    let z = -view_dir.normalize();
    let up = if z.z.abs() < 0.99 {
        Vector3::z()
    } else {
        Vector3::y()
    };
    let x = up.cross(&z).normalize();
    let y = z.cross(&x);
    Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()])
}

/// `n_viewpoints · n_inplane` rotations, viewpoint-major, in-plane angles
/// `2πk / n_inplane`.
pub fn sample_viewpoints(n_viewpoints: usize, n_inplane: usize) -> Vec<RigidTransform> {
    let mut out = Vec::with_capacity(n_viewpoints * n_inplane);
    for dir in viewpoint_directions(n_viewpoints) {
        let base = RigidTransform::from_parts_normalized(look_at_rotation(&dir), Vector3::zeros());
        for k in 0..n_inplane {
            let spin = RigidTransform::rot_z(TAU * k as f64 / n_inplane as f64);
            out.push(spin.compose(&base));
        }
    }
    out
}
