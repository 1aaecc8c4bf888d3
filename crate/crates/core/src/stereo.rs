//! Disparity from rectified stereo pairs and conversion to metric depth.
//!
//! The block matcher is a classical ZNCC winner-take-all matcher. It stands
//! in for a learned disparity network; externally computed disparity maps
//! can be ingested from PFM files instead.
//!
//! Disparity is positive and referenced to the left image: the left pixel
//! `(x, y)` corresponds to the right pixel `(x - d, y)`.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::StereoRig;
use crate::raster::{same_size, DepthMap, DisparityMap, GrayImage};

/// Disparities below this are dropped before depth conversion.
pub const DEFAULT_MIN_DISPARITY_FLOOR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatcherParams {
    /// Side of the square matching window, odd and at least 3.
    pub window: u32,
    /// Largest integer disparity searched, in pixels.
    pub max_disparity: u32,
    /// Maximum left/right disagreement, in pixels.
    pub lr_tolerance: f64,
    /// Best cost must be below `uniqueness_ratio` times the best
    /// non-adjacent cost.
    pub uniqueness_ratio: f64,
}

impl Default for MatcherParams {
    fn default() -> Self {
        Self {
            window: 9,
            max_disparity: 128,
            lr_tolerance: 1.0,
            uniqueness_ratio: 0.95,
        }
    }
}

impl MatcherParams {
    fn validate(&self, width: u32, height: u32) -> Result<()> {
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "window must be odd and at least 3, got {}",
                self.window
            )));
        }
        if self.window > width || self.window > height {
            return Err(Error::DimensionMismatch(format!(
                "window {} larger than the {width}x{height} image",
                self.window
            )));
        }
        if self.max_disparity >= width {
            return Err(Error::InvalidParameter(format!(
                "max_disparity {} must be below the image width {width}",
                self.max_disparity
            )));
        }
        if !(self.lr_tolerance >= 0.0 && self.lr_tolerance.is_finite()) {
            return Err(Error::InvalidParameter(
                "lr_tolerance must be non-negative".into(),
            ));
        }
        if !(self.uniqueness_ratio > 0.0 && self.uniqueness_ratio <= 1.0) {
            return Err(Error::InvalidParameter(
                "uniqueness_ratio must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Summed-area tables of intensity and squared intensity.
struct Integrals {
    stride: usize,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl Integrals {
    fn new(img: &GrayImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let stride = w + 1;
        let mut sum = vec![0.0; stride * (h + 1)];
        let mut sum_sq = vec![0.0; stride * (h + 1)];
        for y in 0..h {
            let (mut row, mut row_sq) = (0.0, 0.0);
            for x in 0..w {
                let v = img.pixels()[y * w + x];
                row += v;
                row_sq += v * v;
                sum[(y + 1) * stride + x + 1] = sum[y * stride + x + 1] + row;
                sum_sq[(y + 1) * stride + x + 1] = sum_sq[y * stride + x + 1] + row_sq;
            }
        }
        Self {
            stride,
            sum,
            sum_sq,
        }
    }

    /// Sums over the window centred at `(x, y)` with half-size `r`.
    #[inline]
    fn window(&self, x: usize, y: usize, r: usize) -> (f64, f64) {
        let (x0, y0, x1, y1) = (x - r, y - r, x + r + 1, y + r + 1);
        let s = self.stride;
        let rect = |t: &[f64]| t[y1 * s + x1] - t[y0 * s + x1] - t[y1 * s + x0] + t[y0 * s + x0];
        (rect(&self.sum), rect(&self.sum_sq))
    }
}

#[derive(Clone, Copy)]
enum Reference {
    Left,
    Right,
}

/// Integer-plus-subpixel disparities from one reference view, with the
/// uniqueness test applied. Flat row-major, `None` for rejected pixels.
fn match_one_way(
    reference: &GrayImage,
    target: &GrayImage,
    params: &MatcherParams,
    direction: Reference,
) -> Vec<Option<f64>> {
    let (w, h) = (reference.width() as usize, reference.height() as usize);
    let r = (params.window / 2) as usize;
    let n = (params.window * params.window) as f64;
    let max_d = params.max_disparity as usize;
    let ref_int = Integrals::new(reference);
    let tgt_int = Integrals::new(target);
    let rp = reference.pixels();
    let tp = target.pixels();

    let mut out = vec![None; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row_out)| {
        if y < r || y + r >= h {
            return;
        }
        let n_d = max_d + 1;
        let mut costs = vec![f64::INFINITY; w * n_d];
        let mut col = vec![0.0; w];
        let mut prod = vec![0.0; w];
        for d in 0..n_d {
            // Column sums over the window rows of ref(x) * tgt(x ∓ d).
            for (x, c) in col.iter_mut().enumerate() {
                let tx = match direction {
                    Reference::Left => x.checked_sub(d),
                    Reference::Right => Some(x + d).filter(|&t| t < w),
                };
                *c = match tx {
                    Some(tx) => (y - r..=y + r)
                        .map(|yy| rp[yy * w + x] * tp[yy * w + tx])
                        .sum(),
                    None => 0.0,
                };
            }
            // Horizontal box sum.
            let mut acc: f64 = col[..2 * r].iter().sum();
            for x in r..w - r {
                acc += col[x + r];
                prod[x] = acc;
                acc -= col[x - r];
            }
            for x in r..w - r {
                let tx = match direction {
                    Reference::Left => match x.checked_sub(d) {
                        Some(t) if t >= r => t,
                        _ => continue,
                    },
                    Reference::Right => match x + d {
                        t if t + r < w => t,
                        _ => continue,
                    },
                };
                let (rs, rss) = ref_int.window(x, y, r);
                let (ts, tss) = tgt_int.window(tx, y, r);
                let var_r = rss - rs * rs / n;
                let var_t = tss - ts * ts / n;
                let zncc = if var_r > 1e-9 && var_t > 1e-9 {
                    ((prod[x] - rs * ts / n) / (var_r * var_t).sqrt()).clamp(-1.0, 1.0)
                } else {
                    0.0
                };
                costs[x * n_d + d] = 1.0 - zncc;
            }
        }

        for x in r..w - r {
            let c = &costs[x * n_d..(x + 1) * n_d];
            // Ties resolve to the smallest disparity.
            let mut best = None::<(usize, f64)>;
            for (d, &cost) in c.iter().enumerate() {
                if cost.is_finite() && best.is_none_or(|(_, b)| cost < b) {
                    best = Some((d, cost));
                }
            }
            let Some((bd, bc)) = best else { continue };
            let second = c
                .iter()
                .enumerate()
                .filter(|(d, cost)| d.abs_diff(bd) > 1 && cost.is_finite())
                .map(|(_, cost)| *cost)
                .fold(f64::INFINITY, f64::min);
            if second.is_finite() && bc >= params.uniqueness_ratio * second {
                continue;
            }
            let last = c.iter().rposition(|v| v.is_finite()).unwrap_or(bd);
            let mut disparity = bd as f64;
            if bd > 0 && bd < last {
                let (cm, cp) = (c[bd - 1], c[bd + 1]);
                let denom = cm - 2.0 * bc + cp;
                if denom > 0.0 {
                    disparity += ((cm - cp) / (2.0 * denom)).clamp(-0.5, 0.5);
                }
            }
            row_out[x] = Some(disparity);
        }
    });
    out
}

/// ZNCC block matching with subpixel refinement, uniqueness and left-right
/// consistency checks. The output is referenced to the left image.
pub fn match_block(
    left: &GrayImage,
    right: &GrayImage,
    params: &MatcherParams,
) -> Result<DisparityMap> {
    same_size("stereo pair", left.size(), right.size())?;
    params.validate(left.width(), left.height())?;
    let from_left = match_one_way(left, right, params, Reference::Left);
    let from_right = match_one_way(right, left, params, Reference::Right);
    let (w, h) = left.size();
    let mut map = DisparityMap::invalid(w, h);
    for (i, d) in from_left.iter().enumerate() {
        let Some(d) = *d else { continue };
        if lr_agrees(i, d, &from_right, w as usize, params.lr_tolerance) {
            map.set_index(i, d);
        }
    }
    Ok(map)
}

fn lr_agrees(i: usize, d: f64, from_right: &[Option<f64>], w: usize, tol: f64) -> bool {
    let (x, y) = (i % w, i / w);
    let xr = (x as f64 - d).round();
    if xr < 0.0 {
        return false;
    }
    match from_right[y * w + xr as usize] {
        Some(dr) => (d - dr).abs() <= tol,
        None => false,
    }
}

/// Re-checks a left-referenced map against a right-referenced one, keeping
/// only pixels that agree within `tol`.
pub fn left_right_check(
    left: &DisparityMap,
    right: &DisparityMap,
    tol: f64,
) -> Result<DisparityMap> {
    same_size("left/right disparity", left.size(), right.size())?;
    let from_right: Vec<Option<f64>> = right.iter().collect();
    let (w, h) = left.size();
    let mut out = DisparityMap::invalid(w, h);
    for i in 0..left.len() {
        if let Some(d) = left.get_index(i) {
            if lr_agrees(i, d, &from_right, w as usize, tol) {
                out.set_index(i, d);
            }
        }
    }
    Ok(out)
}

/// Right-referenced disparities (right pixel `x` matches left pixel `x + d`),
/// without the left-right check.
pub fn match_block_right(
    left: &GrayImage,
    right: &GrayImage,
    params: &MatcherParams,
) -> Result<DisparityMap> {
    same_size("stereo pair", left.size(), right.size())?;
    params.validate(left.width(), left.height())?;
    let vals = match_one_way(right, left, params, Reference::Right);
    let (w, h) = left.size();
    DisparityMap::from_options(w, h, &vals)
}

/// `Z = fx · B / d` per pixel with the default disparity floor.
pub fn disparity_to_depth(disp: &DisparityMap, rig: &StereoRig) -> DepthMap {
    disparity_to_depth_with_floor(disp, rig, DEFAULT_MIN_DISPARITY_FLOOR)
}

/// Disparities below `min_disparity` are marked invalid instead of producing
/// unbounded depth.
pub fn disparity_to_depth_with_floor(
    disp: &DisparityMap,
    rig: &StereoRig,
    min_disparity: f64,
) -> DepthMap {
    let fb = rig.intrinsics.fx * rig.baseline;
    let mut depth = DepthMap::invalid(disp.width(), disp.height());
    for i in 0..disp.len() {
        if let Some(d) = disp.get_index(i) {
            if d >= min_disparity {
                depth.set_index(i, fb / d);
            }
        }
    }
    depth
}

pub fn depth_to_disparity(depth: &DepthMap, rig: &StereoRig) -> DisparityMap {
    let fb = rig.intrinsics.fx * rig.baseline;
    let mut disp = DisparityMap::invalid(depth.width(), depth.height());
    for i in 0..depth.len() {
        if let Some(z) = depth.get_index(i) {
            disp.set_index(i, fb / z);
        }
    }
    disp
}

/// Reads a grayscale PFM (`Pf`) file. Rows are stored bottom to top; a
/// negative scale means little-endian samples.
pub fn load_disparity_pfm(path: impl AsRef<Path>) -> Result<DisparityMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pfm(&bytes)
}

pub fn parse_pfm(bytes: &[u8]) -> Result<DisparityMap> {
    let mut pos = 0;
    let mut token = || -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::MalformedPfm("truncated header".into()));
        }
        let tok = std::str::from_utf8(&bytes[start..pos])
            .map_err(|_| Error::MalformedPfm("header is not ASCII".into()))?
            .to_string();
        Ok(tok)
    };
    match token()?.as_str() {
        "Pf" => {}
        "PF" => return Err(Error::MalformedPfm("colour PFM not supported".into())),
        other => return Err(Error::MalformedPfm(format!("bad magic {other:?}"))),
    }
    let width: u32 = token()?
        .parse()
        .map_err(|_| Error::MalformedPfm("bad width".into()))?;
    let height: u32 = token()?
        .parse()
        .map_err(|_| Error::MalformedPfm("bad height".into()))?;
    let scale: f64 = token()?
        .parse()
        .map_err(|_| Error::MalformedPfm("bad scale".into()))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::MalformedPfm("scale must be nonzero".into()));
    }
    // Exactly one whitespace byte separates the header from the samples.
    pos += 1;
    let count = (width as usize)
        .checked_mul(height as usize)
        .filter(|&c| c > 0)
        .ok_or_else(|| Error::MalformedPfm(format!("invalid dimensions {width}x{height}")))?;
    let needed = count
        .checked_mul(4)
        .ok_or_else(|| Error::MalformedPfm("dimension overflow".into()))?;
    let data = bytes.get(pos..).unwrap_or(&[]);
    if data.len() < needed {
        return Err(Error::MalformedPfm(format!(
            "{width}x{height} needs {needed} data bytes, found {}",
            data.len()
        )));
    }
    let little = scale < 0.0;
    let (w, h) = (width as usize, height as usize);
    let mut map = DisparityMap::invalid(width, height);
    for (k, chunk) in data[..needed].chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (file_row, x) = (k / w, k % w);
        let y = h - 1 - file_row;
        map.set_index(y * w + x, v as f64);
    }
    Ok(map)
}

/// Little-endian PFM encoding; invalid pixels are written as 0.
pub fn encode_pfm(map: &DisparityMap) -> Vec<u8> {
    let (w, h) = (map.width() as usize, map.height() as usize);
    let mut out = format!("Pf\n{} {}\n-1.0\n", w, h).into_bytes();
    for y in (0..h).rev() {
        for x in 0..w {
            let v = map.get_index(y * w + x).unwrap_or(0.0) as f32;
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_disparity_pfm(map: &DisparityMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_pfm(map))
        .map_err(|e| Error::io(path, e))
}
