//! `toolpose` command-line interface. The binary is a thin wrapper over
//! [`run`].

mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "toolpose",
    version,
    about = "Stereo depth, pseudo-label masks, 6DoF pose estimation and evaluation for rigid tools"
)]
struct Cli {
    /// Worker threads for internal parallelism; 0 uses every core. Outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    /// Seed for every random choice (surface sampling, synthetic scenes).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Suppress progress and summary lines on stderr.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Stereo block matching and disparity-to-depth conversion.
    Depth(DepthArgs),
    /// Visible-object masks from the CAD model at ground-truth pose.
    Pseudomask(PseudomaskArgs),
    /// Pose estimation for every frame of a scene.
    Estimate(EstimateArgs),
    /// ADD and 2D projection metrics of a results file.
    Eval(EvalArgs),
    /// Mask AP/AR of predicted instance masks.
    EvalSeg(EvalSegArgs),
    /// Synthetic scene with exact ground truth.
    Synth(SynthArgs),
}

#[derive(Args, Debug, Clone)]
pub struct RigArgs {
    /// Focal length fx, pixels [camera intrinsics].
    #[arg(long)]
    pub fx: f64,
    /// Focal length fy, pixels; defaults to fx [camera intrinsics].
    #[arg(long)]
    pub fy: Option<f64>,
    /// Principal point x, pixels; defaults to (width − 1)/2 [camera intrinsics].
    #[arg(long)]
    pub cx: Option<f64>,
    /// Principal point y, pixels; defaults to (height − 1)/2 [camera intrinsics].
    #[arg(long)]
    pub cy: Option<f64>,
    /// Stereo baseline, mm [stereo rig].
    #[arg(long)]
    pub baseline: f64,
}

#[derive(Args, Debug)]
pub struct DepthArgs {
    /// Rectified left image (any 8/16-bit image format).
    #[arg(long, required_unless_present = "disparity_in")]
    pub left: Option<PathBuf>,
    /// Rectified right image.
    #[arg(long, required_unless_present = "disparity_in")]
    pub right: Option<PathBuf>,
    /// Convert this PFM disparity instead of running the matcher.
    #[arg(long)]
    pub disparity_in: Option<PathBuf>,
    #[command(flatten)]
    pub rig: RigArgs,
    /// Square matching window side, pixels (odd) [matcher window].
    #[arg(long, default_value_t = 9)]
    pub window: u32,
    /// Largest disparity searched, pixels [matcher max_disparity].
    #[arg(long, default_value_t = 128)]
    pub max_disparity: u32,
    /// Left-right consistency tolerance, pixels [matcher lr_tolerance].
    #[arg(long, default_value_t = 1.0)]
    pub lr_tolerance: f64,
    /// Best cost must be below this ratio of the runner-up [matcher uniqueness_ratio].
    #[arg(long, default_value_t = 0.95)]
    pub uniqueness: f64,
    /// Disparities below this are invalid in depth, pixels [depth conversion floor].
    #[arg(long, default_value_t = 0.5)]
    pub min_disparity: f64,
    /// Millimetres per depth PNG unit [depth PNG scale].
    #[arg(long, default_value_t = 0.1)]
    pub depth_scale: f64,
    /// Output 16-bit depth PNG.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the disparity as PFM.
    #[arg(long)]
    pub disparity_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PseudomaskArgs {
    /// Scene directory (scene_camera.json, scene_gt.json, depth/).
    #[arg(long)]
    pub scene: PathBuf,
    /// CAD model, OBJ or ASCII PLY, millimetres.
    #[arg(long)]
    pub mesh: PathBuf,
    /// Depth agreement threshold ε, mm [pseudo-label epsilon].
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,
    /// Output directory for masks (<frame>.png) and report.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskSource {
    /// Pseudo-label masks computed from the ground-truth pose and scene depth.
    Pseudo,
    /// Mask PNGs read from --mask-dir.
    File,
}

#[derive(Args, Debug)]
pub struct EstimatorArgs {
    /// Viewpoints on the sphere [estimator n_viewpoints].
    #[arg(long, default_value_t = 162)]
    pub viewpoints: usize,
    /// In-plane rotations per viewpoint [estimator n_inplane].
    #[arg(long, default_value_t = 12)]
    pub inplane: usize,
    /// Render agreement threshold, mm [estimator score_tau].
    #[arg(long, default_value_t = 3.0)]
    pub score_tau: f64,
    /// Best hypotheses refined with ICP [estimator top_k].
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
    /// ICP iteration cap [estimator icp_max_iters].
    #[arg(long, default_value_t = 60)]
    pub icp_iters: usize,
    /// ICP correspondence gate, mm [estimator icp_corr_dist].
    #[arg(long, default_value_t = 10.0)]
    pub icp_corr_dist: f64,
    /// ICP translation convergence tolerance, mm [estimator icp_converge_tol].
    #[arg(long, default_value_t = 1e-3)]
    pub icp_tol: f64,
    /// Smallest usable mask, pixels [estimator min_mask_pixels].
    #[arg(long, default_value_t = 50)]
    pub min_mask_pixels: usize,
    /// Model surface samples used by ICP [estimator n_model_points].
    #[arg(long, default_value_t = 5000)]
    pub model_points: usize,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    /// Scene directory.
    #[arg(long)]
    pub scene: PathBuf,
    /// CAD model, OBJ or ASCII PLY, millimetres.
    #[arg(long)]
    pub mesh: PathBuf,
    /// Where object masks come from.
    #[arg(long, value_enum, default_value_t = MaskSource::Pseudo)]
    pub mask_source: MaskSource,
    /// Mask directory for --mask-source file; defaults to <scene>/mask_visib.
    #[arg(long)]
    pub mask_dir: Option<PathBuf>,
    /// Depth agreement threshold for pseudo masks, mm [pseudo-label epsilon].
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    /// Output results JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Json,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Scene directory holding the ground truth.
    #[arg(long)]
    pub scene: PathBuf,
    /// Results JSON written by `estimate`.
    #[arg(long)]
    pub results: PathBuf,
    /// CAD model, OBJ or ASCII PLY, millimetres.
    #[arg(long)]
    pub mesh: PathBuf,
    /// Format printed on stdout.
    #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
    pub report: ReportFormat,
    /// Also write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalSegArgs {
    /// Predicted masks named <frame>_<instance>.png (frame and instance as integers).
    #[arg(long)]
    pub pred_dir: PathBuf,
    /// JSON object mapping each prediction file stem to its confidence in [0, 1].
    #[arg(long)]
    pub confidences: PathBuf,
    /// Ground-truth masks named <frame>.png or <frame>_<instance>.png.
    #[arg(long)]
    pub gt_dir: PathBuf,
    /// Format printed on stdout.
    #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
    pub report: ReportFormat,
    /// Also write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Tool model, OBJ or ASCII PLY, millimetres.
    #[arg(long)]
    pub mesh: PathBuf,
    /// Occluder models (repeatable).
    #[arg(long)]
    pub occluder: Vec<PathBuf>,
    /// Output scene directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of frames [synth n_frames].
    #[arg(long, default_value_t = 10)]
    pub frames: u32,
    /// Image width, pixels [synth resolution].
    #[arg(long, default_value_t = 960)]
    pub width: u32,
    /// Image height, pixels [synth resolution].
    #[arg(long, default_value_t = 540)]
    pub height: u32,
    /// Focal length fx = fy, pixels [synth camera].
    #[arg(long, default_value_t = 800.0)]
    pub focal: f64,
    /// Stereo baseline, mm [synth camera].
    #[arg(long, default_value_t = 4.5)]
    pub baseline: f64,
    /// Lower corner of the tool translation box "x,y,z", mm [synth translation range].
    #[arg(long, value_parser = parse_vec3, default_value = "-40,-25,150")]
    pub t_min: [f64; 3],
    /// Upper corner of the tool translation box "x,y,z", mm [synth translation range].
    #[arg(long, value_parser = parse_vec3, default_value = "40,25,250")]
    pub t_max: [f64; 3],
    /// Minimum distance of the projected tool from the image border, pixels.
    #[arg(long, default_value_t = 4)]
    pub margin: u32,
    /// Occluders per frame [synth n_occluders].
    #[arg(long, default_value_t = 0)]
    pub n_occluders: usize,
    /// Occluder scale range "lo,hi" [synth occluder scale].
    #[arg(long, value_parser = parse_range, default_value = "0.5,1")]
    pub occluder_scale: (f64, f64),
    /// Accepted hidden fraction of the tool silhouette "lo,hi" [synth occlusion range].
    #[arg(long, value_parser = parse_range, default_value = "0.1,0.5")]
    pub occlusion: (f64, f64),
    /// Minimum depth gap between occluders and tool, mm [synth min_gap].
    #[arg(long, default_value_t = 10.0)]
    pub min_gap: f64,
    /// Gaussian depth noise σ, mm [synth noise sigma].
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Probability of dropping a valid depth pixel [synth dropout].
    #[arg(long, default_value_t = 0.0)]
    pub dropout: f64,
    /// Millimetres per depth PNG unit [depth PNG scale].
    #[arg(long, default_value_t = 0.1)]
    pub depth_scale: f64,
    /// Sampling attempts per frame before failing [synth retries].
    #[arg(long, default_value_t = 2000)]
    pub max_attempts: usize,
}

fn parse_floats<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(format!("expected {N} comma-separated numbers, got {s:?}"));
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().map_err(|_| format!("{p:?} is not a number"))?;
    }
    Ok(out)
}

fn parse_vec3(s: &str) -> Result<[f64; 3], String> {
    parse_floats::<3>(s)
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    parse_floats::<2>(s).map(|[a, b]| (a, b))
}

/// Parses `args` (program name first), runs the subcommand and prints its
/// report on stdout. Returns the process exit code: 0 on success, 2 on any
/// error.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let (code, stdout) = run_captured(args);
    print!("{stdout}");
    code
}

/// Like [`run`] but returns the stdout text instead of printing it.
/// Diagnostics still go to stderr.
pub fn run_captured<I, T>(args: I) -> (u8, String)
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            return if e.use_stderr() {
                let _ = e.print();
                (2, String::new())
            } else {
                (0, e.render().to_string())
            };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start {} worker threads: {e}", cli.jobs);
            return (2, String::new());
        }
    };
    let ctx = commands::Context {
        seed: cli.seed,
        quiet: cli.quiet,
    };
    let outcome = pool.install(|| match &cli.command {
        Command::Depth(a) => commands::depth(&ctx, a),
        Command::Pseudomask(a) => commands::pseudomask(&ctx, a),
        Command::Estimate(a) => commands::estimate(&ctx, a),
        Command::Eval(a) => commands::eval(&ctx, a),
        Command::EvalSeg(a) => commands::eval_seg(&ctx, a),
        Command::Synth(a) => commands::synth(&ctx, a),
    });
    match outcome {
        Ok(text) => (0, text),
        Err(e) => {
            eprintln!("error: {e:#}");
            (2, String::new())
        }
    }
}
