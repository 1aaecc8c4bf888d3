//! BOP-style scene directories.
//!
//! ```text
//! scene/
//!   scene_camera.json   {"<id>": {"cam_K": [9], "width", "height", "baseline", "depth_scale"}}
//!   scene_gt.json       {"<id>": [{"cam_R_m2c": [9], "cam_t_m2c": [3], "obj_id"}]}
//!   depth/000000.png    16-bit, depth_scale mm per unit, 0 = invalid
//!   mask_visib/000000.png
//!   mask_full/000000.png
//!   disparity/000000.pfm, rgb_left/000000.png, rgb_right/000000.png  (optional)
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, RigidTransform, StereoRig};
use crate::raster::{BinaryMask, DepthMap, DEFAULT_DEPTH_SCALE};

pub const SCENE_CAMERA_FILE: &str = "scene_camera.json";
pub const SCENE_GT_FILE: &str = "scene_gt.json";
pub const DEPTH_DIR: &str = "depth";
pub const MASK_VISIB_DIR: &str = "mask_visib";
pub const MASK_FULL_DIR: &str = "mask_full";
pub const DISPARITY_DIR: &str = "disparity";
pub const RGB_LEFT_DIR: &str = "rgb_left";
pub const RGB_RIGHT_DIR: &str = "rgb_right";

/// `<dir>/<sub>/<frame_id:06>.<ext>`
pub fn frame_file(dir: &Path, sub: &str, frame_id: u32, ext: &str) -> PathBuf {
    dir.join(sub).join(format!("{frame_id:06}.{ext}"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneFrame {
    pub frame_id: u32,
    pub camera: StereoRig,
    /// Model to camera.
    pub gt_pose: RigidTransform,
    pub object_id: u32,
    /// Millimetres per depth PNG unit.
    pub depth_scale: f64,
    pub depth_path: PathBuf,
    pub mask_visib_path: Option<PathBuf>,
    pub mask_full_path: Option<PathBuf>,
    pub disparity_path: Option<PathBuf>,
    pub left_path: Option<PathBuf>,
    pub right_path: Option<PathBuf>,
}

impl SceneFrame {
    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.camera.intrinsics
    }

    pub fn load_depth(&self) -> Result<DepthMap> {
        let depth = DepthMap::load_png(&self.depth_path, self.depth_scale)?;
        self.check_size(&self.depth_path, depth.size())?;
        Ok(depth)
    }

    pub fn load_mask_visib(&self) -> Result<BinaryMask> {
        self.load_mask(self.mask_visib_path.as_deref(), MASK_VISIB_DIR)
    }

    pub fn load_mask_full(&self) -> Result<BinaryMask> {
        self.load_mask(self.mask_full_path.as_deref(), MASK_FULL_DIR)
    }

    fn load_mask(&self, path: Option<&Path>, kind: &str) -> Result<BinaryMask> {
        let path = path.ok_or_else(|| Error::Frame {
            frame_id: self.frame_id,
            message: format!("scene has no {kind} mask for this frame"),
        })?;
        let mask = BinaryMask::load_png(path)?;
        self.check_size(path, mask.size())?;
        Ok(mask)
    }

    fn check_size(&self, path: &Path, size: (u32, u32)) -> Result<()> {
        let intr = self.intrinsics();
        if size != (intr.width, intr.height) {
            return Err(Error::Frame {
                frame_id: self.frame_id,
                message: format!(
                    "{} is {}x{}, camera is {}x{}",
                    path.display(),
                    size.0,
                    size.1,
                    intr.width,
                    intr.height
                ),
            });
        }
        Ok(())
    }
}

/// A loaded scene with frames sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub dir: PathBuf,
    pub frames: Vec<SceneFrame>,
}

impl Scene {
    pub fn frame(&self, frame_id: u32) -> Option<&SceneFrame> {
        self.frames
            .binary_search_by_key(&frame_id, |f| f.frame_id)
            .ok()
            .map(|i| &self.frames[i])
    }
}

fn read_json(path: &Path) -> Result<Value> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Location inside a JSON document for schema messages.
#[derive(Clone)]
struct JsonPath(String);

impl JsonPath {
    fn root(file: &str) -> Self {
        Self(format!("{file}:$"))
    }

    fn key(&self, k: &str) -> Self {
        Self(format!("{}[\"{k}\"]", self.0))
    }

    fn index(&self, i: usize) -> Self {
        Self(format!("{}[{i}]", self.0))
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::schema(self.0.clone(), message)
    }
}

fn as_object<'a>(v: &'a Value, at: &JsonPath) -> Result<&'a serde_json::Map<String, Value>> {
    v.as_object().ok_or_else(|| at.err("expected an object"))
}

fn field<'a>(
    obj: &'a serde_json::Map<String, Value>,
    key: &str,
    at: &JsonPath,
) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| at.key(key).err("required field is missing"))
}

fn number(v: &Value, at: &JsonPath) -> Result<f64> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| at.err("expected a finite number"))
}

fn numbers<const N: usize>(v: &Value, at: &JsonPath) -> Result<[f64; N]> {
    let arr = v
        .as_array()
        .ok_or_else(|| at.err(format!("expected an array of {N} numbers")))?;
    if arr.len() != N {
        return Err(at.err(format!("expected {N} numbers, found {}", arr.len())));
    }
    let mut out = [0.0; N];
    for (i, x) in arr.iter().enumerate() {
        out[i] = number(x, &at.index(i))?;
    }
    Ok(out)
}

fn unsigned(v: &Value, at: &JsonPath) -> Result<u32> {
    v.as_u64()
        .and_then(|x| u32::try_from(x).ok())
        .ok_or_else(|| at.err("expected a non-negative integer"))
}

fn frame_key(k: &str, at: &JsonPath) -> Result<u32> {
    k.parse::<u32>()
        .map_err(|_| at.key(k).err("frame keys must be non-negative integers"))
}

struct CameraEntry {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    size: Option<(u32, u32)>,
    baseline: f64,
    depth_scale: f64,
}

fn parse_camera(v: &Value, at: &JsonPath) -> Result<CameraEntry> {
    let obj = as_object(v, at)?;
    let (fx, fy, cx, cy) = if let Some(k) = obj.get("cam_K") {
        let k = numbers::<9>(k, &at.key("cam_K"))?;
        (k[0], k[4], k[2], k[5])
    } else {
        let get = |name: &str| number(field(obj, name, at)?, &at.key(name));
        (get("fx")?, get("fy")?, get("cx")?, get("cy")?)
    };
    let size = match (obj.get("width"), obj.get("height")) {
        (Some(w), Some(h)) => Some((
            unsigned(w, &at.key("width"))?,
            unsigned(h, &at.key("height"))?,
        )),
        (None, None) => None,
        _ => return Err(at.err("width and height must be given together")),
    };
    let baseline = number(field(obj, "baseline", at)?, &at.key("baseline"))?;
    let depth_scale = match obj.get("depth_scale") {
        Some(s) => number(s, &at.key("depth_scale"))?,
        None => DEFAULT_DEPTH_SCALE,
    };
    if depth_scale <= 0.0 {
        return Err(at.key("depth_scale").err("must be positive"));
    }
    Ok(CameraEntry {
        fx,
        fy,
        cx,
        cy,
        size,
        baseline,
        depth_scale,
    })
}

struct GtEntry {
    rotation: [f64; 9],
    translation: [f64; 3],
    object_id: u32,
}

fn parse_gt(v: &Value, at: &JsonPath) -> Result<GtEntry> {
    let list = v
        .as_array()
        .ok_or_else(|| at.err("expected a list of object instances"))?;
    if list.len() != 1 {
        return Err(at.err(format!(
            "expected exactly one object instance, found {}",
            list.len()
        )));
    }
    let at = at.index(0);
    let obj = as_object(&list[0], &at)?;
    Ok(GtEntry {
        rotation: numbers::<9>(field(obj, "cam_R_m2c", &at)?, &at.key("cam_R_m2c"))?,
        translation: numbers::<3>(field(obj, "cam_t_m2c", &at)?, &at.key("cam_t_m2c"))?,
        object_id: match obj.get("obj_id") {
            Some(id) => unsigned(id, &at.key("obj_id"))?,
            None => 1,
        },
    })
}

fn existing(path: PathBuf) -> Option<PathBuf> {
    path.is_file().then_some(path)
}

/// Loads and validates a scene directory. Unknown JSON fields are ignored.
/// Depth images are required for every frame; masks, disparity and stereo
/// images are picked up when present.
pub fn load_scene(dir: impl AsRef<Path>) -> Result<Scene> {
    let dir = dir.as_ref();
    let cam_json = read_json(&dir.join(SCENE_CAMERA_FILE))?;
    let gt_json = read_json(&dir.join(SCENE_GT_FILE))?;
    let cam_root = JsonPath::root(SCENE_CAMERA_FILE);
    let gt_root = JsonPath::root(SCENE_GT_FILE);
    let cams = as_object(&cam_json, &cam_root)?;
    let gts = as_object(&gt_json, &gt_root)?;

    let mut cam_by_id = BTreeMap::new();
    for (k, v) in cams {
        cam_by_id.insert(frame_key(k, &cam_root)?, (k, v));
    }
    let mut gt_by_id = BTreeMap::new();
    for (k, v) in gts {
        gt_by_id.insert(frame_key(k, &gt_root)?, (k, v));
    }
    if let Some(id) = cam_by_id.keys().find(|id| !gt_by_id.contains_key(id)) {
        return Err(gt_root
            .key(&id.to_string())
            .err("frame present in scene_camera.json is missing"));
    }
    if let Some(id) = gt_by_id.keys().find(|id| !cam_by_id.contains_key(id)) {
        return Err(cam_root
            .key(&id.to_string())
            .err("frame present in scene_gt.json is missing"));
    }

    let mut frames = Vec::with_capacity(cam_by_id.len());
    for (&frame_id, &(key, cam_value)) in &cam_by_id {
        let cam = parse_camera(cam_value, &cam_root.key(key))?;
        let (gt_key, gt_value) = gt_by_id[&frame_id];
        let gt = parse_gt(gt_value, &gt_root.key(gt_key))?;

        let depth_path = frame_file(dir, DEPTH_DIR, frame_id, "png");
        if !depth_path.is_file() {
            return Err(Error::MissingFile(depth_path));
        }
        let (width, height) = match cam.size {
            Some(s) => s,
            None => image::image_dimensions(&depth_path).map_err(|source| Error::Image {
                path: depth_path.clone(),
                source,
            })?,
        };
        let frame_err = |e: Error| Error::Frame {
            frame_id,
            message: e.to_string(),
        };
        let intr = CameraIntrinsics::new(cam.fx, cam.fy, cam.cx, cam.cy, width, height)
            .map_err(frame_err)?;
        let camera = StereoRig::new(intr, cam.baseline).map_err(frame_err)?;
        let gt_pose =
            RigidTransform::from_row_major(&gt.rotation, &gt.translation).map_err(frame_err)?;
        frames.push(SceneFrame {
            frame_id,
            camera,
            gt_pose,
            object_id: gt.object_id,
            depth_scale: cam.depth_scale,
            depth_path,
            mask_visib_path: existing(frame_file(dir, MASK_VISIB_DIR, frame_id, "png")),
            mask_full_path: existing(frame_file(dir, MASK_FULL_DIR, frame_id, "png")),
            disparity_path: existing(frame_file(dir, DISPARITY_DIR, frame_id, "pfm")),
            left_path: existing(frame_file(dir, RGB_LEFT_DIR, frame_id, "png")),
            right_path: existing(frame_file(dir, RGB_RIGHT_DIR, frame_id, "png")),
        });
    }
    Ok(Scene {
        dir: dir.to_path_buf(),
        frames,
    })
}

#[derive(Serialize)]
struct CameraRecord {
    #[serde(rename = "cam_K")]
    cam_k: [f64; 9],
    width: u32,
    height: u32,
    baseline: f64,
    depth_scale: f64,
}

#[derive(Serialize)]
#[allow(non_snake_case)]
struct GtRecord {
    cam_R_m2c: [f64; 9],
    cam_t_m2c: [f64; 3],
    obj_id: u32,
}

/// Metadata of one frame for [`write_scene_json`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameMeta {
    pub frame_id: u32,
    pub camera: StereoRig,
    pub gt_pose: RigidTransform,
    pub object_id: u32,
    pub depth_scale: f64,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `scene_camera.json` and `scene_gt.json` into `dir`.
pub fn write_scene_json(dir: impl AsRef<Path>, frames: &[FrameMeta]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut cams = BTreeMap::new();
    let mut gts = BTreeMap::new();
    for f in frames {
        let k = &f.camera.intrinsics;
        cams.insert(
            f.frame_id,
            CameraRecord {
                cam_k: [k.fx, 0.0, k.cx, 0.0, k.fy, k.cy, 0.0, 0.0, 1.0],
                width: k.width,
                height: k.height,
                baseline: f.camera.baseline,
                depth_scale: f.depth_scale,
            },
        );
        let t = f.gt_pose.translation();
        gts.insert(
            f.frame_id,
            vec![GtRecord {
                cam_R_m2c: f.gt_pose.rotation_row_major(),
                cam_t_m2c: [t.x, t.y, t.z],
                obj_id: f.object_id,
            }],
        );
    }
    write_json(&dir.join(SCENE_CAMERA_FILE), &cams)?;
    write_json(&dir.join(SCENE_GT_FILE), &gts)
}
