//! Point-to-point ICP with a closed-form (Kabsch) rigid update.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, RigidTransform};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpParams {
    pub max_iters: usize,
    /// Correspondences farther apart than this (mm) are discarded.
    pub corr_dist: f64,
    /// Translation change (mm) below which the iteration has converged.
    pub converge_tol: f64,
    /// Rotation change (degrees) below which the iteration has converged.
    pub converge_angle_deg: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_iters: 60,
            corr_dist: 10.0,
            converge_tol: 1e-3,
            converge_angle_deg: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    pub pose: RigidTransform,
    pub n_iters: usize,
    /// Fraction of observed points within `corr_dist` of the model at `pose`.
    pub inlier_fraction: f64,
    /// Truncated objective `mean(min(r², corr_dist²))` over all observed
    /// points, one entry per evaluated pose, starting with the initial one.
    /// Non-increasing.
    pub objective: Vec<f64>,
}

/// Least-squares rigid transform mapping `src[i]` onto `dst[i]`.
pub fn kabsch(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Result<RigidTransform> {
    if src.len() < 3 || src.len() != dst.len() {
        return Err(Error::DegenerateCorrespondence(src.len().min(dst.len())));
    }
    let n = src.len() as f64;
    let cs = src.iter().fold(Vector3::zeros(), |a, p| a + p) / n;
    let cd = dst.iter().fold(Vector3::zeros(), |a, p| a + p) / n;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s - cs) * (d - cd).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u.expect("svd u");
    let v = svd.v_t.expect("svd v_t").transpose();
    let mut fix = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        fix[(2, 2)] = -1.0;
    }
    let r = v * fix * u.transpose();
    Ok(RigidTransform::from_parts_normalized(r, cd - r * cs))
}

/// Static 3-d tree over model points with exact nearest-neighbour queries.
/// Splits at the median of the widest axis, so clusters of equal
/// coordinates (planar CAD faces) stay balanced.
struct KdTree {
    points: Vec<Vector3<f64>>,
    /// Permutation of point indices; each node owns a contiguous range.
    order: Vec<usize>,
    nodes: Vec<Node>,
}

enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

const LEAF_SIZE: usize = 8;

impl KdTree {
    fn new(points: Vec<Vector3<f64>>) -> Self {
        let mut tree = Self {
            order: (0..points.len()).collect(),
            points,
            nodes: Vec::new(),
        };
        tree.build(0, tree.points.len());
        tree
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let slice = &self.order[start..end];
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for &i in slice {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        let axis = (hi - lo).imax();
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
        });
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    /// Index and squared distance of the nearest point; ties go to the
    /// first point encountered in tree order.
    fn nearest(&self, q: &Vector3<f64>) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(0, q, &mut best);
        best
    }

    fn search(&self, node: usize, q: &Vector3<f64>, best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d = (self.points[i] - q).norm_squared();
                    if d < best.1 {
                        *best = (i, d);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, q, best);
                if diff * diff <= best.1 {
                    self.search(far, q, best);
                }
            }
        }
    }
}

struct Matcher {
    tree: KdTree,
}

struct Correspondences {
    model: Vec<Vector3<f64>>,
    observed: Vec<Vector3<f64>>,
    truncated_objective: f64,
}

impl Matcher {
    fn new(model: &PointCloud) -> Self {
        Self {
            tree: KdTree::new(model.points.clone()),
        }
    }

    /// Nearest model point for each observed point, queried in the model
    /// frame (distances are preserved by the rigid pose).
    fn correspond(
        &self,
        observed: &PointCloud,
        pose: &RigidTransform,
        corr_dist: f64,
    ) -> Correspondences {
        let inv = pose.inverse();
        let gate = corr_dist * corr_dist;
        let mut out = Correspondences {
            model: Vec::new(),
            observed: Vec::new(),
            truncated_objective: 0.0,
        };
        for o in &observed.points {
            let q = inv.apply(o);
            let (item, dist_sq) = self.tree.nearest(&q);
            if dist_sq < gate {
                out.model.push(self.tree.points[item]);
                out.observed.push(*o);
                out.truncated_objective += dist_sq;
            } else {
                out.truncated_objective += gate;
            }
        }
        out.truncated_objective /= observed.len() as f64;
        out
    }
}

/// Aligns `model` (model frame) to `observed` (camera frame) starting from
/// `init`. Fails when fewer than 3 correspondences survive the distance gate.
pub fn icp_refine(
    model: &PointCloud,
    observed: &PointCloud,
    init: &RigidTransform,
    params: &IcpParams,
) -> Result<IcpResult> {
    if model.len() < 3 || observed.len() < 3 {
        return Err(Error::DegenerateCorrespondence(
            model.len().min(observed.len()),
        ));
    }
    if !(params.corr_dist > 0.0 && params.converge_tol > 0.0 && params.max_iters >= 1) {
        return Err(Error::InvalidParameter(
            "ICP needs positive distances and at least one iteration".into(),
        ));
    }
    let matcher = Matcher::new(model);
    let mut pose = *init;
    let mut corr = matcher.correspond(observed, &pose, params.corr_dist);
    let mut objective = vec![corr.truncated_objective];
    let mut n_iters = 0;
    while n_iters < params.max_iters {
        if corr.model.len() < 3 {
            return Err(Error::DegenerateCorrespondence(corr.model.len()));
        }
        let candidate = kabsch(&corr.model, &corr.observed)?;
        let next = matcher.correspond(observed, &candidate, params.corr_dist);
        let previous = *objective.last().expect("objective seeded");
        // Floating-point noise aside the objective cannot increase; a step
        // that would increase it is not accepted.
        if next.truncated_objective > previous * (1.0 + 1e-12) + 1e-15 {
            break;
        }
        n_iters += 1;
        let dt = (candidate.translation() - pose.translation()).norm();
        let dr = pose.rotation_distance(&candidate).to_degrees();
        pose = candidate;
        corr = next;
        objective.push(corr.truncated_objective);
        if dt < params.converge_tol && dr < params.converge_angle_deg {
            break;
        }
    }
    Ok(IcpResult {
        pose,
        n_iters,
        inlier_fraction: corr.model.len() as f64 / observed.len() as f64,
        objective,
    })
}
