//! Triangle meshes: ASCII PLY / OBJ loading, primitives and surface sampling.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, RigidTransform};

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vector3<f64>>,
    triangles: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vector3<f64>>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidMesh(format!(
                "vertex count must be at least 3, got {}",
                vertices.len()
            )));
        }
        if triangles.is_empty() {
            return Err(Error::InvalidMesh(
                "triangle count must be at least 1".into(),
            ));
        }
        if let Some(i) = vertices
            .iter()
            .position(|v| v.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::InvalidMesh(format!(
                "vertex {i} has non-finite coordinates"
            )));
        }
        let n = vertices.len();
        if let Some((t, tri)) = triangles
            .iter()
            .enumerate()
            .find(|(_, tri)| tri.iter().any(|&i| i >= n))
        {
            return Err(Error::InvalidMesh(format!(
                "triangle {t} references vertex index {} but only {n} vertices exist",
                tri.iter().max().unwrap()
            )));
        }
        Ok(Self {
            vertices,
            triangles,
        })
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn bounding_box(&self) -> (Vector3<f64>, Vector3<f64>) {
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for v in &self.vertices[1..] {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    pub fn center(&self) -> Vector3<f64> {
        let (lo, hi) = self.bounding_box();
        (lo + hi) / 2.0
    }

    /// Largest distance from the bounding-box centre to a vertex.
    pub fn radius(&self) -> f64 {
        let c = self.center();
        self.vertices
            .iter()
            .map(|v| (v - c).norm())
            .fold(0.0, f64::max)
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        (b - a).cross(&(c - a)).norm() / 2.0
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| self.triangle_area(t))
            .sum()
    }

    /// Returns a copy with every vertex mapped through `pose`.
    pub fn transformed(&self, pose: &RigidTransform) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| pose.apply(v)).collect(),
            triangles: self.triangles.clone(),
        }
    }

    pub fn scaled(&self, factor: f64) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| v * factor).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Concatenates meshes into one; triangles keep their relative order.
    pub fn merge(parts: &[TriangleMesh]) -> Result<TriangleMesh> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for part in parts {
            let offset = vertices.len();
            vertices.extend_from_slice(&part.vertices);
            triangles.extend(part.triangles.iter().map(|t| t.map(|i| i + offset)));
        }
        TriangleMesh::new(vertices, triangles)
    }

    /// Axis-aligned box spanning `min`..`max`, 8 vertices and 12 triangles.
    pub fn cuboid(min: Vector3<f64>, max: Vector3<f64>) -> TriangleMesh {
        let vertices = (0..8)
            .map(|i| {
                Vector3::new(
                    if i & 1 == 0 { min.x } else { max.x },
                    if i & 2 == 0 { min.y } else { max.y },
                    if i & 4 == 0 { min.z } else { max.z },
                )
            })
            .collect();
        let triangles = vec![
            [0, 2, 1],
            [1, 2, 3],
            [4, 5, 6],
            [5, 7, 6],
            [0, 1, 4],
            [1, 5, 4],
            [2, 6, 3],
            [3, 6, 7],
            [0, 4, 2],
            [2, 4, 6],
            [1, 3, 5],
            [3, 7, 5],
        ];
        TriangleMesh {
            vertices,
            triangles,
        }
    }

    /// Area-weighted uniform sampling of `count` surface points with a fixed seed.
    pub fn sample_surface(&self, count: usize, seed: u64) -> PointCloud {
        let mut cumulative = Vec::with_capacity(self.triangles.len());
        let mut total = 0.0;
        for t in 0..self.triangles.len() {
            total += self.triangle_area(t);
            cumulative.push(total);
        }
        if total <= 0.0 {
            return PointCloud {
                points: self.vertices.clone(),
            };
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = (0..count)
            .map(|_| {
                let pick = rng.random::<f64>() * total;
                let t = cumulative
                    .partition_point(|&c| c <= pick)
                    .min(self.triangles.len() - 1);
                let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
                let (mut r1, mut r2): (f64, f64) = (rng.random(), rng.random());
                if r1 + r2 > 1.0 {
                    r1 = 1.0 - r1;
                    r2 = 1.0 - r2;
                }
                a + (b - a) * r1 + (c - a) * r2
            })
            .collect();
        PointCloud { points }
    }

    pub fn to_obj_string(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
        }
        for t in &self.triangles {
            let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        out
    }

    pub fn write_obj(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_obj_string()).map_err(|e| Error::io(path, e))
    }
}

/// Loads an ASCII PLY or OBJ mesh, chosen by file extension.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("ply") => parse_ply(&text, path),
        Some("obj") => parse_obj(&text, path),
        _ => Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "unsupported mesh extension (expected .ply or .obj)".into(),
        }),
    }
}

struct LineParser<'a> {
    path: &'a Path,
}

impl LineParser<'_> {
    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: PathBuf::from(self.path),
            line,
            message: message.into(),
        }
    }

    fn float(&self, line: usize, tok: Option<&str>) -> Result<f64> {
        let tok = tok.ok_or_else(|| self.err(line, "missing coordinate"))?;
        tok.parse::<f64>()
            .map_err(|_| self.err(line, format!("invalid number {tok:?}")))
    }
}

/// Splits a polygon into a triangle fan anchored at its first vertex.
fn fan(poly: &[usize], out: &mut Vec<[usize; 3]>) {
    for k in 1..poly.len() - 1 {
        out.push([poly[0], poly[k], poly[k + 1]]);
    }
}

pub fn parse_obj(text: &str, path: &Path) -> Result<TriangleMesh> {
    let p = LineParser { path };
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("v") => {
                let x = p.float(line_no, toks.next())?;
                let y = p.float(line_no, toks.next())?;
                let z = p.float(line_no, toks.next())?;
                vertices.push(Vector3::new(x, y, z));
            }
            Some("f") => {
                let mut poly = Vec::new();
                for tok in toks {
                    let first = tok.split('/').next().unwrap_or("");
                    let i: i64 = first
                        .parse()
                        .map_err(|_| p.err(line_no, format!("invalid face index {tok:?}")))?;
                    let resolved = match i {
                        0 => return Err(p.err(line_no, "face index 0 is not valid in OBJ")),
                        i if i > 0 => (i - 1) as usize,
                        i => {
                            let back = (-i) as usize;
                            if back > vertices.len() {
                                return Err(p.err(
                                    line_no,
                                    format!("relative face index {i} precedes the first vertex"),
                                ));
                            }
                            vertices.len() - back
                        }
                    };
                    poly.push(resolved);
                }
                if poly.len() < 3 {
                    return Err(p.err(line_no, "face needs at least 3 vertices"));
                }
                fan(&poly, &mut triangles);
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, triangles)
}

pub fn parse_ply(text: &str, path: &Path) -> Result<TriangleMesh> {
    let p = LineParser { path };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));

    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(p.err(1, "missing 'ply' magic")),
    }

    struct Element {
        name: String,
        count: usize,
        props: Vec<String>,
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut header_done = false;
    for (n, line) in lines.by_ref() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.first().copied() {
            Some("format") => {
                if toks.get(1) != Some(&"ascii") {
                    return Err(p.err(n, "only ASCII PLY is supported"));
                }
            }
            Some("element") => {
                let (Some(name), Some(count)) = (toks.get(1), toks.get(2)) else {
                    return Err(p.err(n, "malformed element line"));
                };
                let count = count
                    .parse()
                    .map_err(|_| p.err(n, format!("invalid element count {count:?}")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| p.err(n, "property before any element"))?;
                let name = toks.last().ok_or_else(|| p.err(n, "malformed property"))?;
                el.props.push(name.to_string());
            }
            Some("end_header") => {
                header_done = true;
                break;
            }
            _ => {}
        }
    }
    if !header_done {
        return Err(p.err(0, "missing end_header"));
    }

    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for el in &elements {
        for _ in 0..el.count {
            let (n, line) = lines.by_ref().find(|(_, l)| !l.is_empty()).ok_or_else(|| {
                p.err(0, format!("unexpected end of file in element {}", el.name))
            })?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            match el.name.as_str() {
                "vertex" => {
                    let coord = |name: &str| -> Result<f64> {
                        let k =
                            el.props.iter().position(|p| p == name).ok_or_else(|| {
                                p.err(n, format!("vertex has no '{name}' property"))
                            })?;
                        p.float(n, toks.get(k).copied())
                    };
                    vertices.push(Vector3::new(coord("x")?, coord("y")?, coord("z")?));
                }
                "face" => {
                    let count: usize = toks
                        .first()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| p.err(n, "face line missing vertex count"))?;
                    if count < 3 || toks.len() < count + 1 {
                        return Err(p.err(n, format!("face declares {count} indices")));
                    }
                    let poly = toks[1..=count]
                        .iter()
                        .map(|t| {
                            t.parse::<usize>()
                                .map_err(|_| p.err(n, format!("invalid face index {t:?}")))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    fan(&poly, &mut triangles);
                }
                _ => {}
            }
        }
    }
    TriangleMesh::new(vertices, triangles)
}
