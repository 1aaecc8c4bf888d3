//! Geometric pipeline for 6DoF pose estimation of rigid tools from stereo
//! depth: disparity and depth, CAD-projected pseudo-label masks, a
//! render-and-compare pose search with ICP refinement, evaluation metrics,
//! and a synthetic scene generator with exact ground truth.

pub mod dataset;
pub mod error;
pub mod geometry;
pub mod mesh;
pub mod metrics;
pub mod pose;
pub mod pseudo_label;
pub mod raster;
pub mod render;
pub mod stereo;

pub use error::{Error, Result};
pub use geometry::{CameraIntrinsics, PointCloud, RigidTransform, StereoRig};
pub use mesh::{load_mesh, TriangleMesh};
pub use raster::{BinaryMask, DepthMap, DisparityMap, GrayImage};
