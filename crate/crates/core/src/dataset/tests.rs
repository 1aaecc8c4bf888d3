use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use proptest::prelude::*;
use serde_json::json;

use super::*;
use crate::error::Error;
use crate::geometry::{CameraIntrinsics, RigidTransform, StereoRig};
use crate::mesh::TriangleMesh;
use crate::raster::DepthMap;
use crate::render::render_depth;

fn tool() -> TriangleMesh {
    let shaft = TriangleMesh::cuboid(
        Vector3::new(-15.0, -3.0, -3.0),
        Vector3::new(15.0, 3.0, 3.0),
    );
    let jaw = TriangleMesh::cuboid(Vector3::new(9.0, 3.0, -3.0), Vector3::new(15.0, 12.0, 3.0));
    TriangleMesh::merge(&[shaft, jaw]).unwrap()
}

fn blocker() -> TriangleMesh {
    TriangleMesh::cuboid(Vector3::new(-6.0, -6.0, -2.0), Vector3::new(6.0, 6.0, 2.0))
}

fn small_params() -> SynthParams {
    SynthParams {
        n_frames: 3,
        width: 160,
        height: 120,
        focal: 150.0,
        translation_min: [-10.0, -5.0, 150.0],
        translation_max: [10.0, 5.0, 200.0],
        ..SynthParams::default()
    }
}

fn write_minimal_scene(dir: &Path, rotation: [f64; 9]) {
    let cam = json!({"0": {"cam_K": [100.0, 0.0, 15.5, 0.0, 100.0, 11.5, 0.0, 0.0, 1.0],
        "width": 32, "height": 24, "baseline": 4.0, "depth_scale": 0.1, "note": "ignored"}});
    let gt = json!({"0": [{"cam_R_m2c": rotation, "cam_t_m2c": [0.0, 0.0, 100.0], "obj_id": 3, "extra": 1}]});
    fs::write(dir.join(SCENE_CAMERA_FILE), cam.to_string()).unwrap();
    fs::write(dir.join(SCENE_GT_FILE), gt.to_string()).unwrap();
    fs::create_dir_all(dir.join(DEPTH_DIR)).unwrap();
    DepthMap::invalid(32, 24)
        .save_png(frame_file(dir, DEPTH_DIR, 0, "png"), 0.1)
        .unwrap();
}

const IDENTITY: [f64; 9] = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];

#[test]
fn minimal_scene_loads() {
    let tmp = tempfile::tempdir().unwrap();
    write_minimal_scene(tmp.path(), IDENTITY);
    let scene = load_scene(tmp.path()).unwrap();
    assert_eq!(scene.frames.len(), 1);
    let f = &scene.frames[0];
    assert_eq!((f.frame_id, f.object_id), (0, 3));
    assert_eq!((f.intrinsics().width, f.intrinsics().height), (32, 24));
    assert_eq!(f.gt_pose.translation().z, 100.0);
    assert!(f.mask_visib_path.is_none());
    assert_eq!(f.load_depth().unwrap().valid_count(), 0);
    assert!(f.load_mask_visib().is_err());
}

#[test]
fn reflection_names_frame() {
    let tmp = tempfile::tempdir().unwrap();
    write_minimal_scene(tmp.path(), [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0]);
    match load_scene(tmp.path()) {
        Err(Error::Frame {
            frame_id: 0,
            message,
        }) => assert!(message.contains("det"), "{message}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn missing_depth_names_path() {
    let tmp = tempfile::tempdir().unwrap();
    write_minimal_scene(tmp.path(), IDENTITY);
    let depth = frame_file(tmp.path(), DEPTH_DIR, 0, "png");
    fs::remove_file(&depth).unwrap();
    match load_scene(tmp.path()) {
        Err(Error::MissingFile(p)) => assert_eq!(p, depth),
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        load_scene(tmp.path().join("nope")),
        Err(Error::MissingFile(_))
    ));
}

#[test]
fn schema_errors_carry_json_path() {
    let tmp = tempfile::tempdir().unwrap();
    write_minimal_scene(tmp.path(), IDENTITY);
    let cases = [
        (
            json!({"0": [{"cam_R_m2c": [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0], "cam_t_m2c": [0.0, 0.0, 1.0]}]}),
            "[\"0\"][0][\"cam_R_m2c\"]",
        ),
        (
            json!({"0": [{"cam_R_m2c": IDENTITY}]}),
            "[\"0\"][0][\"cam_t_m2c\"]",
        ),
        (json!({"0": []}), "[\"0\"]"),
        (json!({"x": []}), "[\"x\"]"),
        (
            json!({"0": [{"cam_R_m2c": IDENTITY, "cam_t_m2c": [0.0, "a", 1.0]}]}),
            "[\"cam_t_m2c\"][1]",
        ),
    ];
    for (gt, path) in cases {
        fs::write(tmp.path().join(SCENE_GT_FILE), gt.to_string()).unwrap();
        match load_scene(tmp.path()) {
            Err(Error::Schema { path: p, .. }) => assert!(p.contains(path), "{p} lacks {path}"),
            other => panic!("{other:?}"),
        }
    }
}

#[test]
fn camera_accepts_named_focal_fields() {
    let tmp = tempfile::tempdir().unwrap();
    write_minimal_scene(tmp.path(), IDENTITY);
    let cam = json!({"0": {"fx": 90.0, "fy": 91.0, "cx": 15.0, "cy": 11.0, "baseline": 4.0}});
    fs::write(tmp.path().join(SCENE_CAMERA_FILE), cam.to_string()).unwrap();
    let scene = load_scene(tmp.path()).unwrap();
    let k = scene.frames[0].intrinsics();
    assert_eq!((k.fx, k.fy, k.width, k.height), (90.0, 91.0, 32, 24));
    assert_eq!(scene.frames[0].depth_scale, 0.1);
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

#[test]
fn generator_is_deterministic_and_loadable() {
    let params = SynthParams {
        n_occluders: 1,
        noise_sigma: 0.5,
        dropout: 0.1,
        ..small_params()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate_synthetic(&tool(), &[blocker()], &params, a.path()).unwrap();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    pool.install(|| generate_synthetic(&tool(), &[blocker()], &params, b.path()))
        .unwrap();
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    assert_eq!(ta.len(), 2 + 3 * 3);
    assert_eq!(ta, tb);

    let scene = load_scene(a.path()).unwrap();
    assert_eq!(scene.frames.len(), 3);
    for f in &scene.frames {
        let full = f.load_mask_full().unwrap();
        let visib = f.load_mask_visib().unwrap();
        assert!(visib.is_subset_of(&full));
        // the stored pose reproduces the stored full mask
        assert_eq!(render_depth(&tool(), &f.gt_pose, f.intrinsics()).mask, full);
    }
}

#[test]
fn no_occluders_means_fully_visible() {
    let params = small_params();
    for id in 0..params.n_frames {
        let f = synthesize_frame(&tool(), &[], &params, id).unwrap();
        assert_eq!(f.mask_visib, f.mask_full);
        assert!(!f.mask_full.is_empty());
        assert_eq!(f.depth, f.depth_clean);
    }
}

#[test]
fn occluders_stay_in_front_within_fraction() {
    let params = SynthParams {
        n_occluders: 2,
        occlusion_fraction: (0.15, 0.25),
        ..small_params()
    };
    for id in 0..params.n_frames {
        let f = synthesize_frame(&tool(), &[blocker()], &params, id).unwrap();
        assert!((0.15..=0.25).contains(&f.occlusion), "{}", f.occlusion);
        let hidden = 1.0 - f.mask_visib.count() as f64 / f.mask_full.count() as f64;
        assert!((hidden - f.occlusion).abs() < 1e-12);
        let tool_near = tool()
            .vertices()
            .iter()
            .map(|v| f.gt_pose.apply(v).z)
            .fold(f64::INFINITY, f64::min);
        for o in &f.occluders {
            let far = blocker()
                .scaled(o.scale)
                .vertices()
                .iter()
                .map(|v| o.pose.apply(v).z)
                .fold(0.0, f64::max);
            assert!(far <= tool_near - params.min_gap + 1e-9);
        }
    }
}

#[test]
fn depth_noise_matches_folded_normal() {
    let params = SynthParams {
        noise_sigma: 0.5,
        n_frames: 8,
        width: 320,
        height: 240,
        focal: 500.0,
        ..small_params()
    };
    let (mut sum, mut n) = (0.0, 0usize);
    for id in 0..params.n_frames {
        let f = synthesize_frame(&tool(), &[], &params, id).unwrap();
        let units = f.depth.to_png_units(params.depth_scale);
        let written =
            DepthMap::from_png_units(params.width, params.height, &units, params.depth_scale)
                .unwrap();
        for (w, c) in written.iter().zip(f.depth_clean.iter()) {
            if let (Some(w), Some(c)) = (w, c) {
                sum += (w - c).abs();
                n += 1;
            }
        }
    }
    assert!(n >= 10_000, "{n}");
    let mean = sum / n as f64;
    assert!((0.35..=0.45).contains(&mean), "{mean}");
}

#[test]
fn dropout_removes_expected_share() {
    let params = SynthParams {
        dropout: 0.3,
        ..small_params()
    };
    let f = synthesize_frame(&tool(), &[], &params, 0).unwrap();
    let kept = f.depth.valid_count() as f64 / f.depth_clean.valid_count() as f64;
    assert!((kept - 0.7).abs() < 0.05, "{kept}");
}

#[test]
fn unreachable_pose_range_fails_with_ranges() {
    let params = SynthParams {
        translation_min: [5000.0, 0.0, 100.0],
        translation_max: [5000.0, 0.0, 100.0],
        max_attempts: 20,
        ..small_params()
    };
    match synthesize_frame(&tool(), &[], &params, 0) {
        Err(Error::SamplingFailed(m)) => assert!(m.contains("x in [5000, 5000]"), "{m}"),
        other => panic!("{other:?}"),
    }
    assert!(synthesize_frame(
        &tool(),
        &[],
        &SynthParams {
            n_occluders: 1,
            ..small_params()
        },
        0
    )
    .is_err());
    assert!(SynthParams {
        dropout: 1.5,
        ..small_params()
    }
    .validate()
    .is_err());
}

fn sample_results() -> Vec<FrameResult> {
    let poses = [
        RigidTransform::from_axis_angle(&Vector3::new(0.1, 0.7, -0.3), 2.2)
            .with_translation(Vector3::new(1.5, -2.25, 180.0)),
        RigidTransform::from_axis_angle(&Vector3::new(1.0, 0.0, 0.0), 1e-7)
            .with_translation(Vector3::new(0.1, 0.2, 0.3)),
        RigidTransform::identity(),
    ];
    let mut out: Vec<FrameResult> = poses
        .iter()
        .enumerate()
        .map(|(i, p)| FrameResult {
            frame_id: i as u32,
            outcome: FrameOutcome::Estimated {
                pose: *p,
                score: 0.1 * i as f64 + 1.0 / 3.0,
                n_icp_iters: i,
                inlier_fraction: 0.97,
            },
        })
        .collect();
    out.push(FrameResult {
        frame_id: 9,
        outcome: FrameOutcome::Failed {
            reason: "mask has 3 pixels".into(),
        },
    });
    out
}

#[test]
fn results_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("results.json");
    let res = sample_results();
    write_results(&path, &res).unwrap();
    let back = load_results(&path).unwrap();
    assert_eq!(back, res);
    assert_eq!(back.iter().filter(|r| r.is_failed()).count(), 1);
    write_results(&path, &[]).unwrap();
    assert!(load_results(&path).unwrap().is_empty());
}

#[test]
fn results_schema_violations() {
    let bad = [
        r#"{"frame_id": 0}"#,
        r#"[{"frame_id": 0, "R": null, "t": null, "score": null, "status": "ok"}]"#,
        r#"[{"frame_id": 0, "R": [1,0,0,0,1,0,0,0,-1], "t": [0,0,1], "score": 1, "status": "ok"}]"#,
        r#"[{"frame_id": 0, "R": null, "t": null, "score": null, "status": "maybe"}]"#,
        r#"[{"frame_id": 0, "R": null, "t": null, "score": null, "status": "failed"},
            {"frame_id": 0, "R": null, "t": null, "score": null, "status": "failed"}]"#,
    ];
    for text in bad {
        assert!(
            matches!(results_from_str(text, "r.json"), Err(Error::Schema { .. })),
            "{text}"
        );
    }
}

#[test]
fn scene_json_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let camera = StereoRig::new(
        CameraIntrinsics::new(101.5, 99.25, 15.5, 11.5, 32, 24).unwrap(),
        4.2,
    )
    .unwrap();
    let metas: Vec<FrameMeta> = (0..12)
        .map(|i| FrameMeta {
            frame_id: i,
            camera,
            gt_pose: RigidTransform::from_axis_angle(&Vector3::new(1.0, 2.0, 3.0), 0.1 * i as f64)
                .with_translation(Vector3::new(i as f64, -1.0 / 3.0, 150.0)),
            object_id: 1,
            depth_scale: 0.1,
        })
        .collect();
    write_scene_json(tmp.path(), &metas).unwrap();
    fs::create_dir_all(tmp.path().join(DEPTH_DIR)).unwrap();
    for m in &metas {
        DepthMap::invalid(32, 24)
            .save_png(frame_file(tmp.path(), DEPTH_DIR, m.frame_id, "png"), 0.1)
            .unwrap();
    }
    let scene = load_scene(tmp.path()).unwrap();
    let ids: Vec<u32> = scene.frames.iter().map(|f| f.frame_id).collect();
    assert_eq!(ids, (0..12).collect::<Vec<_>>());
    for (f, m) in scene.frames.iter().zip(&metas) {
        assert_eq!((f.camera, f.gt_pose), (m.camera, m.gt_pose));
    }
    assert!(scene.frame(11).is_some() && scene.frame(12).is_none());
}

proptest! {
    #[test]
    fn depth_png_quantization_bounded(z in prop::collection::vec(1.0f64..6000.0, 1..64)) {
        let n = z.len() as u32;
        let map = DepthMap::from_options(n, 1, &z.iter().map(|&v| Some(v)).collect::<Vec<_>>()).unwrap();
        let back = DepthMap::from_png_units(n, 1, &map.to_png_units(0.1), 0.1).unwrap();
        for (a, b) in map.iter().zip(back.iter()) {
            prop_assert!((a.unwrap() - b.unwrap()).abs() <= 0.05 + 1e-9);
        }
    }
}
