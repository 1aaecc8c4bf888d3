//! Per-pixel raster layers exchanged between pipeline stages, and their PNG
//! encodings.
//!
//! Scalar maps keep an explicit validity flag per pixel; invalid pixels hold
//! `0.0` and never take part in arithmetic.

use std::path::Path;

use image::{ImageBuffer, Luma};

use crate::error::{Error, Result};

/// Millimetres per 16-bit unit in depth PNGs.
pub const DEFAULT_DEPTH_SCALE: f64 = 0.1;

fn check_len(width: u32, height: u32, len: usize) -> Result<()> {
    let expected = width as usize * height as usize;
    if expected != len {
        return Err(Error::DimensionMismatch(format!(
            "{width}x{height} raster needs {expected} values, got {len}"
        )));
    }
    Ok(())
}

pub(crate) fn same_size(what: &str, a: (u32, u32), b: (u32, u32)) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch(format!(
            "{what}: {}x{} vs {}x{}",
            a.0, a.1, b.0, b.1
        )));
    }
    Ok(())
}

/// Grayscale intensity image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, pixels: Vec<f64>) -> Result<Self> {
        check_len(width, height, pixels.len())?;
        if let Some(i) = pixels.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidParameter(format!(
                "pixel {i} has intensity {} outside [0, 1]",
                pixels[i]
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> f64) -> Result<Self> {
        let pixels = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn size(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    /// Reads any 8- or 16-bit image and converts it to luma.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let luma = img.to_luma16();
        let (w, h) = luma.dimensions();
        let pixels = luma.pixels().map(|p| p.0[0] as f64 / 65535.0).collect();
        Self::new(w, h, pixels)
    }

    /// Writes as 8-bit grayscale PNG.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
            ImageBuffer::from_fn(self.width, self.height, |x, y| {
                Luma([(self.get(x, y) * 255.0).round() as u8])
            });
        buf.save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

macro_rules! scalar_map {
    ($(#[$meta:meta])* $name:ident, $unit:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            width: u32,
            height: u32,
            values: Vec<f64>,
            valid: Vec<bool>,
        }

        impl $name {
            /// All pixels invalid.
            pub fn invalid(width: u32, height: u32) -> Self {
                let n = width as usize * height as usize;
                Self { width, height, values: vec![0.0; n], valid: vec![false; n] }
            }

            /// Builds a map from optional per-pixel values. `Some` entries must be
            /// finite and positive; anything else becomes invalid.
            pub fn from_options(width: u32, height: u32, values: &[Option<f64>]) -> Result<Self> {
                check_len(width, height, values.len())?;
                let mut map = Self::invalid(width, height);
                for (i, v) in values.iter().enumerate() {
                    if let Some(v) = *v {
                        map.set_index(i, v);
                    }
                }
                Ok(map)
            }

            pub fn width(&self) -> u32 { self.width }
            pub fn height(&self) -> u32 { self.height }
            pub fn size(&self) -> (u32, u32) { (self.width, self.height) }
            pub fn len(&self) -> usize { self.values.len() }
            pub fn is_empty(&self) -> bool { self.values.is_empty() }

            #[doc = concat!("Value in ", $unit, " at `(x, y)`, `None` when invalid.")]
            #[inline]
            pub fn get(&self, x: u32, y: u32) -> Option<f64> {
                self.get_index(y as usize * self.width as usize + x as usize)
            }

            #[inline]
            pub fn get_index(&self, i: usize) -> Option<f64> {
                if self.valid[i] { Some(self.values[i]) } else { None }
            }

            /// Stores `v`, or marks the pixel invalid when `v` is not finite and positive.
            #[inline]
            pub fn set(&mut self, x: u32, y: u32, v: f64) {
                let i = y as usize * self.width as usize + x as usize;
                self.set_index(i, v);
            }

            #[inline]
            pub fn set_index(&mut self, i: usize, v: f64) {
                if v.is_finite() && v > 0.0 {
                    self.values[i] = v;
                    self.valid[i] = true;
                } else {
                    self.invalidate_index(i);
                }
            }

            #[inline]
            pub fn invalidate_index(&mut self, i: usize) {
                self.values[i] = 0.0;
                self.valid[i] = false;
            }

            pub fn is_valid_index(&self, i: usize) -> bool {
                self.valid[i]
            }

            pub fn valid_count(&self) -> usize {
                self.valid.iter().filter(|v| **v).count()
            }

            /// Valid values in row-major order.
            pub fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
                self.values.iter().zip(&self.valid).filter(|(_, ok)| **ok).map(|(v, _)| *v)
            }

            pub fn iter(&self) -> impl Iterator<Item = Option<f64>> + '_ {
                (0..self.values.len()).map(move |i| self.get_index(i))
            }
        }
    };
}

scalar_map!(
    /// Horizontal disparity in pixels, referenced to the left image: a point
    /// at left column `x` appears at right column `x - d`.
    DisparityMap,
    "pixels"
);

scalar_map!(
    /// Camera-frame depth (z) in millimetres.
    DepthMap,
    "millimetres"
);

impl DepthMap {
    /// Encodes as 16-bit PNG with `scale` mm per unit; invalid and
    /// out-of-range pixels become 0.
    pub fn to_png_units(&self, scale: f64) -> Vec<u16> {
        self.iter()
            .map(|d| match d {
                Some(z) => {
                    let u = (z / scale).round();
                    if u >= 1.0 && u <= u16::MAX as f64 {
                        u as u16
                    } else {
                        0
                    }
                }
                None => 0,
            })
            .collect()
    }

    pub fn from_png_units(width: u32, height: u32, units: &[u16], scale: f64) -> Result<Self> {
        check_len(width, height, units.len())?;
        let mut map = Self::invalid(width, height);
        for (i, &u) in units.iter().enumerate() {
            if u != 0 {
                map.set_index(i, u as f64 * scale);
            }
        }
        Ok(map)
    }

    pub fn save_png(&self, path: impl AsRef<Path>, scale: f64) -> Result<()> {
        let path = path.as_ref();
        let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_raw(self.width, self.height, self.to_png_units(scale))
                .expect("buffer size matches dimensions");
        buf.save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load_png(path: impl AsRef<Path>, scale: f64) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let img = img.into_luma16();
        let (w, h) = img.dimensions();
        Self::from_png_units(w, h, img.as_raw(), scale)
    }
}

/// Per-pixel boolean layer, e.g. an object segmentation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        check_len(width, height, bits.len())?;
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let bits = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn size(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, on: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = on;
    }

    #[inline]
    pub fn get_index(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn set_index(&mut self, i: usize, on: bool) {
        self.bits[i] = on;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    /// `self ⊆ other`, pixel-wise.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.size() == other.size() && self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }

    pub fn intersection_count(&self, other: &BinaryMask) -> Result<usize> {
        same_size("mask intersection", self.size(), other.size())?;
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| **a && **b)
            .count())
    }

    pub fn union_count(&self, other: &BinaryMask) -> Result<usize> {
        same_size("mask union", self.size(), other.size())?;
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| **a || **b)
            .count())
    }

    /// Indices of set pixels in row-major order.
    pub fn set_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(|(i, _)| i)
    }

    /// Inclusive pixel bounding box `(x0, y0, x1, y1)` of the set pixels.
    pub fn bounding_box(&self) -> Option<(u32, u32, u32, u32)> {
        let w = self.width as usize;
        let mut bbox: Option<(u32, u32, u32, u32)> = None;
        for i in self.set_indices() {
            let (x, y) = ((i % w) as u32, (i / w) as u32);
            bbox = Some(match bbox {
                None => (x, y, x, y),
                Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
            });
        }
        bbox
    }

    /// Writes as 8-bit PNG, 0 = background, 255 = set.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let raw = self
            .bits
            .iter()
            .map(|b| if *b { 255u8 } else { 0 })
            .collect();
        let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
            ImageBuffer::from_raw(self.width, self.height, raw)
                .expect("buffer size matches dimensions");
        buf.save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Reads a mask PNG; any nonzero luma counts as set.
    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let img = img.into_luma8();
        let (w, h) = img.dimensions();
        Ok(Self {
            width: w,
            height: h,
            bits: img.as_raw().iter().map(|v| *v != 0).collect(),
        })
    }
}
