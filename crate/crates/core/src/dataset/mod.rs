//! Scene directories, the synthetic scene generator and result files.

mod results;
mod scene;
mod synth;

pub use results::{
    load_results, results_from_str, results_to_string, write_results, FrameOutcome, FrameResult,
};
pub use scene::{
    frame_file, load_scene, write_scene_json, FrameMeta, Scene, SceneFrame, DEPTH_DIR,
    DISPARITY_DIR, MASK_FULL_DIR, MASK_VISIB_DIR, RGB_LEFT_DIR, RGB_RIGHT_DIR, SCENE_CAMERA_FILE,
    SCENE_GT_FILE,
};
pub use synth::{
    frame_rng, generate_synthetic, random_rotation, synthesize_frame, PlacedOccluder, SynthFrame,
    SynthParams, WrittenFrame,
};

#[cfg(test)]
mod tests;
