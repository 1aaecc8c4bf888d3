use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context as _, Result};
use rayon::prelude::*;
use serde::Serialize;
use toolpose::dataset::{
    generate_synthetic, load_results, load_scene, write_results, FrameOutcome, FrameResult,
    SceneFrame, SynthParams, MASK_VISIB_DIR,
};
use toolpose::metrics::{
    add_metric, projection_metric, seg_ap_ar, summarize_pose, PoseMetricRecord, PoseMetricSummary,
    SegFrame, SegMetricSummary,
};
use toolpose::pose::{estimate_pose, EstimatorParams};
use toolpose::pseudo_label::{generate_pseudo_mask, PseudoLabelParams, PseudoLabelReport};
use toolpose::stereo::{
    disparity_to_depth_with_floor, load_disparity_pfm, match_block, save_disparity_pfm,
    MatcherParams,
};
use toolpose::{
    load_mesh, BinaryMask, CameraIntrinsics, DepthMap, GrayImage, StereoRig, TriangleMesh,
};

use crate::{
    DepthArgs, EstimateArgs, EvalArgs, EvalSegArgs, MaskSource, PseudomaskArgs, ReportFormat,
    RigArgs, SynthArgs,
};

pub struct Context {
    pub seed: u64,
    pub quiet: bool,
}

impl Context {
    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    create_parent(path)?;
    fs::write(path, to_json(value)).with_context(|| format!("writing {}", path.display()))
}

fn to_json(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn mesh(path: &Path) -> Result<TriangleMesh> {
    load_mesh(path).with_context(|| format!("loading mesh {}", path.display()))
}

fn rig(args: &RigArgs, width: u32, height: u32) -> Result<StereoRig> {
    let intr = CameraIntrinsics::new(
        args.fx,
        args.fy.unwrap_or(args.fx),
        args.cx.unwrap_or((width as f64 - 1.0) / 2.0),
        args.cy.unwrap_or((height as f64 - 1.0) / 2.0),
        width,
        height,
    )?;
    Ok(StereoRig::new(intr, args.baseline)?)
}

pub fn depth(ctx: &Context, a: &DepthArgs) -> Result<String> {
    let disparity = match &a.disparity_in {
        Some(p) => load_disparity_pfm(p)?,
        None => {
            let (lp, rp) = (
                a.left.as_ref().expect("clap enforces"),
                a.right.as_ref().expect("clap enforces"),
            );
            let left = GrayImage::load(lp)?;
            let right = GrayImage::load(rp)?;
            let params = MatcherParams {
                window: a.window,
                max_disparity: a.max_disparity,
                lr_tolerance: a.lr_tolerance,
                uniqueness_ratio: a.uniqueness,
            };
            match_block(&left, &right, &params)?
        }
    };
    let (w, h) = disparity.size();
    let rig = rig(&a.rig, w, h)?;
    let depth = disparity_to_depth_with_floor(&disparity, &rig, a.min_disparity);
    create_parent(&a.out)?;
    depth.save_png(&a.out, a.depth_scale)?;
    if let Some(p) = &a.disparity_out {
        create_parent(p)?;
        save_disparity_pfm(&disparity, p)?;
    }
    let frac = depth.valid_count() as f64 / depth.len() as f64;
    ctx.note(format!("wrote {}", a.out.display()));
    Ok(format!(
        "valid depth pixels: {} of {} ({:.4})\n",
        depth.valid_count(),
        depth.len(),
        frac
    ))
}

#[derive(Serialize)]
struct FrameReport {
    frame_id: u32,
    #[serde(flatten)]
    report: PseudoLabelReport,
}

pub fn pseudomask(ctx: &Context, a: &PseudomaskArgs) -> Result<String> {
    let params = PseudoLabelParams::new(a.epsilon)?;
    let scene = load_scene(&a.scene)?;
    let model = mesh(&a.mesh)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let reports = scene
        .frames
        .par_iter()
        .map(|f| -> Result<FrameReport> {
            let depth = f.load_depth()?;
            let (mask, report) =
                generate_pseudo_mask(&model, &f.gt_pose, f.intrinsics(), &depth, &params)?;
            mask.save_png(a.out.join(format!("{:06}.png", f.frame_id)))?;
            Ok(FrameReport {
                frame_id: f.frame_id,
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_json(&a.out.join("report.json"), &reports)?;
    let retained: usize = reports.iter().map(|r| r.report.retained_pixels).sum();
    let projected: usize = reports.iter().map(|r| r.report.projected_pixels).sum();
    ctx.note(format!(
        "{} masks written to {}; {retained} of {projected} projected pixels retained",
        reports.len(),
        a.out.display()
    ));
    Ok(String::new())
}

fn estimator_params(ctx: &Context, a: &EstimateArgs) -> Result<EstimatorParams> {
    let e = &a.estimator;
    let params = EstimatorParams {
        n_viewpoints: e.viewpoints,
        n_inplane: e.inplane,
        score_tau: e.score_tau,
        icp_max_iters: e.icp_iters,
        icp_corr_dist: e.icp_corr_dist,
        icp_converge_tol: e.icp_tol,
        min_mask_pixels: e.min_mask_pixels,
        top_k: e.top_k,
        n_model_points: e.model_points,
        seed: ctx.seed,
    };
    params.validate()?;
    Ok(params)
}

fn frame_inputs(
    f: &SceneFrame,
    model: &TriangleMesh,
    mask_dir: Option<&Path>,
    eps: &PseudoLabelParams,
) -> toolpose::Result<(BinaryMask, DepthMap)> {
    let depth = f.load_depth()?;
    let mask = match mask_dir {
        Some(dir) => BinaryMask::load_png(dir.join(format!("{:06}.png", f.frame_id)))?,
        None => generate_pseudo_mask(model, &f.gt_pose, f.intrinsics(), &depth, eps)?.0,
    };
    Ok((mask, depth))
}

pub fn estimate(ctx: &Context, a: &EstimateArgs) -> Result<String> {
    let params = estimator_params(ctx, a)?;
    let eps = PseudoLabelParams::new(a.epsilon)?;
    let scene = load_scene(&a.scene)?;
    let model = mesh(&a.mesh)?;
    let mask_dir = match a.mask_source {
        MaskSource::Pseudo => None,
        MaskSource::File => {
            let dir = a
                .mask_dir
                .clone()
                .unwrap_or_else(|| a.scene.join(MASK_VISIB_DIR));
            let missing: Vec<String> = scene
                .frames
                .iter()
                .map(|f| dir.join(format!("{:06}.png", f.frame_id)))
                .filter(|p| !p.is_file())
                .map(|p| p.display().to_string())
                .collect();
            if !missing.is_empty() {
                bail!(
                    "--mask-source file: {} mask file(s) missing: {}",
                    missing.len(),
                    missing.join(", ")
                );
            }
            Some(dir)
        }
    };
    let results: Vec<FrameResult> = scene
        .frames
        .par_iter()
        .map(|f| {
            let outcome =
                frame_inputs(f, &model, mask_dir.as_deref(), &eps).and_then(|(mask, depth)| {
                    estimate_pose(&model, f.intrinsics(), &depth, &mask, &params)
                });
            let outcome = match outcome {
                Ok(r) => FrameOutcome::Estimated {
                    pose: r.pose,
                    score: r.score,
                    n_icp_iters: r.n_icp_iters,
                    inlier_fraction: r.inlier_fraction,
                },
                Err(e) => FrameOutcome::Failed {
                    reason: e.to_string(),
                },
            };
            FrameResult {
                frame_id: f.frame_id,
                outcome,
            }
        })
        .collect();
    create_parent(&a.out)?;
    write_results(&a.out, &results)?;
    let failed = results.iter().filter(|r| r.is_failed()).count();
    for r in &results {
        if let FrameOutcome::Failed { reason } = &r.outcome {
            ctx.note(format!("frame {}: failed: {reason}", r.frame_id));
        }
    }
    ctx.note(format!(
        "{} frames estimated, {failed} failed; results in {}",
        results.len() - failed,
        a.out.display()
    ));
    Ok(String::new())
}

#[derive(Serialize)]
struct PoseReport {
    summary: Option<PoseMetricSummary>,
    n_results: usize,
    n_failed: usize,
    n_behind_camera: usize,
    frames: Vec<PoseMetricRecord>,
}

pub fn eval(_ctx: &Context, a: &EvalArgs) -> Result<String> {
    let scene = load_scene(&a.scene)?;
    let results = load_results(&a.results)?;
    let model = mesh(&a.mesh)?;
    let unknown: Vec<String> = results
        .iter()
        .filter(|r| scene.frame(r.frame_id).is_none())
        .map(|r| r.frame_id.to_string())
        .collect();
    if !unknown.is_empty() {
        bail!(
            "results reference frame ids missing from the scene: {}",
            unknown.join(", ")
        );
    }
    let mut records = Vec::new();
    let (mut failed, mut behind) = (0, 0);
    for r in &results {
        let Some(pred) = r.pose() else {
            failed += 1;
            continue;
        };
        let f = scene.frame(r.frame_id).expect("checked above");
        match projection_metric(&model, &f.gt_pose, pred, f.intrinsics()) {
            Ok(proj_px) => records.push(PoseMetricRecord {
                frame_id: r.frame_id,
                add_mm: add_metric(&model, &f.gt_pose, pred),
                proj_px,
            }),
            Err(_) => behind += 1,
        }
    }
    let summary = if records.is_empty() {
        None
    } else {
        let mut s = summarize_pose(&records)?;
        s.n_excluded = failed + behind;
        Some(s)
    };
    let report = PoseReport {
        summary,
        n_results: results.len(),
        n_failed: failed,
        n_behind_camera: behind,
        frames: records,
    };
    if let Some(p) = &a.out {
        write_json(p, &report)?;
    }
    if report.summary.is_none() {
        bail!(
            "none of the {} result frames could be evaluated",
            results.len()
        );
    }
    Ok(match a.report {
        ReportFormat::Json => to_json(&report),
        ReportFormat::Table => format!(
            "{}failed estimates: {failed}, model behind camera: {behind}\n",
            report.summary.as_ref().expect("checked above").to_table()
        ),
    })
}

/// `(frame_id, instance)` from a `<frame>[_<instance>].png` name.
fn parse_mask_name(path: &Path) -> Option<(u32, Option<u32>)> {
    if path.extension()? != "png" {
        return None;
    }
    let stem = path.file_stem()?.to_str()?;
    match stem.split_once('_') {
        Some((f, i)) => Some((f.parse().ok()?, Some(i.parse().ok()?))),
        None => Some((stem.parse().ok()?, None)),
    }
}

fn mask_files(dir: &Path) -> Result<Vec<(u32, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if let Some((frame, _)) = parse_mask_name(&path) {
            out.push((frame, path));
        }
    }
    out.sort();
    Ok(out)
}

pub fn eval_seg(_ctx: &Context, a: &EvalSegArgs) -> Result<String> {
    let text = fs::read_to_string(&a.confidences)
        .with_context(|| format!("reading {}", a.confidences.display()))?;
    let conf: BTreeMap<String, f64> = serde_json::from_str(&text).with_context(|| {
        format!(
            "{}: expected an object of file stem -> confidence",
            a.confidences.display()
        )
    })?;
    let preds = mask_files(&a.pred_dir)?;
    let gts = mask_files(&a.gt_dir)?;

    let stem = |p: &Path| {
        p.file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string()
    };
    let pred_stems: BTreeSet<String> = preds.iter().map(|(_, p)| stem(p)).collect();
    let no_conf: Vec<&String> = pred_stems
        .iter()
        .filter(|s| !conf.contains_key(*s))
        .collect();
    let no_file: Vec<&String> = conf.keys().filter(|s| !pred_stems.contains(*s)).collect();
    if !no_conf.is_empty() || !no_file.is_empty() {
        bail!(
            "predictions and confidences do not align: without confidence {:?}, without mask file {:?}",
            no_conf,
            no_file
        );
    }
    let gt_frames: BTreeSet<u32> = gts.iter().map(|(f, _)| *f).collect();
    let orphans: BTreeSet<u32> = preds
        .iter()
        .map(|(f, _)| *f)
        .filter(|f| !gt_frames.contains(f))
        .collect();
    if !orphans.is_empty() {
        bail!("prediction frames without ground truth: {:?}", orphans);
    }

    let mut frames: BTreeMap<u32, SegFrame> = BTreeMap::new();
    for (f, p) in &gts {
        let m = BinaryMask::load_png(p)?;
        // an empty ground-truth mask has no instance to find
        if !m.is_empty() {
            frames.entry(*f).or_default().gts.push(m);
        }
    }
    for (f, p) in &preds {
        let m = BinaryMask::load_png(p)?;
        frames
            .entry(*f)
            .or_default()
            .predictions
            .push((m, conf[&stem(p)]));
    }
    let frames: Vec<SegFrame> = frames.into_values().collect();
    let summary = seg_ap_ar(&frames)?;
    emit(
        &summary,
        a.report,
        a.out.as_deref(),
        SegMetricSummary::to_table,
    )
}

fn emit<T: Serialize>(
    value: &T,
    format: ReportFormat,
    out: Option<&Path>,
    table: impl Fn(&T) -> String,
) -> Result<String> {
    if let Some(p) = out {
        write_json(p, value)?;
    }
    Ok(match format {
        ReportFormat::Json => to_json(value),
        ReportFormat::Table => table(value),
    })
}

pub fn synth(ctx: &Context, a: &SynthArgs) -> Result<String> {
    let model = mesh(&a.mesh)?;
    let occluders = a
        .occluder
        .iter()
        .map(|p| mesh(p))
        .collect::<Result<Vec<_>>>()?;
    let params = SynthParams {
        n_frames: a.frames,
        width: a.width,
        height: a.height,
        focal: a.focal,
        baseline: a.baseline,
        translation_min: a.t_min,
        translation_max: a.t_max,
        border_margin: a.margin,
        n_occluders: a.n_occluders,
        occluder_scale: a.occluder_scale,
        occlusion_fraction: a.occlusion,
        min_gap: a.min_gap,
        noise_sigma: a.noise,
        dropout: a.dropout,
        depth_scale: a.depth_scale,
        max_attempts: a.max_attempts,
        seed: ctx.seed,
    };
    let frames = generate_synthetic(&model, &occluders, &params, &a.out)
        .map_err(|e| anyhow!(e))
        .with_context(|| format!("generating scene in {}", a.out.display()))?;
    let mean_occ = frames.iter().map(|f| f.occlusion).sum::<f64>() / frames.len().max(1) as f64;
    ctx.note(format!(
        "{} frames written to {} (mean occlusion {:.3})",
        frames.len(),
        a.out.display(),
        mean_occ
    ));
    Ok(String::new())
}
