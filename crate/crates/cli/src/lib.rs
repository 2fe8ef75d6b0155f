//! Subcommand dispatch for the `cylsfm` binary. Every command loads inputs,
//! calls into the library and writes outputs; no numerics live here.

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use cylsfm::datasets::synthetic::{render_sequence, seam_toy_sequences, trajectory, Scene, SceneKind};
use cylsfm::datasets::{
    load_snippet, prepare, read_image, read_pfm, read_snippet_poses, write_image, write_pfm, write_sequence,
    write_snippet_poses, LoadedSnippet, PrepareOptions, SequenceManifest, SnippetPoses, SnippetRecord, SourceKind,
    Split,
};
use cylsfm::estimate::gradcheck::{gradient_check, Component};
use cylsfm::estimate::train::{train_to_dir, TrainState};
use cylsfm::estimate::{direct_optimize, Checkpoint, Snippet};
use cylsfm::eval::{ate, default_mask, depth_metrics, DepthMetrics};
use cylsfm::render::{anaglyph, build_mesh, render_ods, render_view, write_ply, ViewCamera};
use cylsfm::{CylCamera, PinholeCamera, Point3, Pose6, Tensor};
use thiserror::Error;

use config::{one_line, RunConfig};

/// Threshold `gradcheck` applies to every component.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] cylsfm::Error),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(
    name = "cylsfm",
    version,
    about = "Depth and ego-motion from cylindrical panoramic video"
)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set loss.lambda_s=0.5`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 gives bit-reproducible runs.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert a raw sequence into cylindrical frames and a snippet manifest.
    Prepare(PrepareArgs),
    /// Direct per-snippet depth and pose optimisation.
    Optimize(OptimizeArgs),
    /// Train the depth and pose networks.
    Train(TrainArgs),
    /// Predict depth and motion with a trained checkpoint.
    Predict(PredictArgs),
    /// Depth metrics of predicted against ground-truth depth maps.
    EvalDepth(EvalDepthArgs),
    /// Trajectory error of predicted snippet motion.
    EvalPose(EvalPoseArgs),
    /// Render a panorama-plus-depth mesh from a virtual camera.
    RenderView(RenderViewArgs),
    /// Render an omnidirectional stereo pair.
    RenderOds(RenderOdsArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Generate synthetic test sequences with ground truth.
    MakeSynthetic(MakeSyntheticArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SourceArg {
    Cylindrical,
    Cubemap,
    Equirect,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

impl SplitArg {
    fn split(self) -> Option<Split> {
        match self {
            SplitArg::Train => Some(Split::Train),
            SplitArg::Val => Some(Split::Val),
            SplitArg::Test => Some(Split::Test),
            SplitArg::All => None,
        }
    }
}

#[derive(Args, Debug)]
struct PrepareArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = SourceArg::Cylindrical)]
    source: SourceArg,
}

#[derive(Args, Debug)]
struct OptimizeArgs {
    /// Prepared dataset directory.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::All)]
    split: SplitArg,
    /// Only the snippet whose target has this frame number.
    #[arg(long)]
    snippet: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Prepared dataset directories.
    #[arg(long, required = true, num_args = 1..)]
    data: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Train)]
    split: SplitArg,
    /// Continue from this checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::All)]
    split: SplitArg,
}

#[derive(Args, Debug)]
struct EvalDepthArgs {
    /// Depth map file or directory of `.pfm` maps (a `depth/` subdirectory is used when present).
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Compare raw predictions without median scaling.
    #[arg(long)]
    no_median_scale: bool,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalPoseArgs {
    /// Snippet pose file written by `optimize` or `predict`.
    #[arg(long)]
    pred: PathBuf,
    /// Prepared dataset directory with ground-truth poses.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RenderViewArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    depth: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Eye placement `tx,ty,tz,alpha,beta,gamma` in the panorama frame.
    #[arg(long, value_parser = parse_pose)]
    pose: Option<Pose6>,
    /// Render through a pinhole camera with this horizontal field of view (degrees).
    #[arg(long)]
    pinhole_fov: Option<f64>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    depth_out: Option<PathBuf>,
    /// Also export the mesh as a PLY file.
    #[arg(long)]
    mesh: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RenderOdsArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    depth: PathBuf,
    /// Viewing-circle radius in scene units.
    #[arg(long, default_value_t = 1.0, value_parser = parse_radius)]
    radius: f64,
    #[arg(long)]
    left: PathBuf,
    #[arg(long)]
    right: PathBuf,
    #[arg(long)]
    anaglyph: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 20)]
    trials: usize,
    /// Restrict to one component.
    #[arg(long)]
    component: Option<String>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SyntheticKind {
    Cylinder,
    Room,
    SeamToy,
}

#[derive(Args, Debug)]
struct MakeSyntheticArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = SyntheticKind::Cylinder)]
    kind: SyntheticKind,
    /// Frames of the straight-line walk (cylinder and room).
    #[arg(long, default_value_t = 12)]
    frames: usize,
    /// Distance between frames along `+x`.
    #[arg(long, default_value_t = 0.1)]
    baseline: f64,
    #[arg(long, default_value_t = 5.0)]
    radius: f64,
    /// Walks of the seam-crossing toy set, each written to `walk-NN/`.
    #[arg(long, default_value_t = 25)]
    walks: usize,
    /// Supersampling factor per pixel axis.
    #[arg(long, default_value_t = 1)]
    supersample: usize,
}

fn parse_radius(s: &str) -> std::result::Result<f64, String> {
    let r: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if r > 0.0 && r.is_finite() {
        Ok(r)
    } else {
        Err("radius must be positive".into())
    }
}

fn parse_pose(s: &str) -> std::result::Result<Pose6, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| format!("{e}"))?;
    if v.len() != 6 {
        return Err(format!("expected 6 comma-separated numbers, got {}", v.len()));
    }
    Ok(Pose6::from_slice(&v))
}

/// Runs the command line `argv` (including the program name) and returns the
/// process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            if !e.use_stderr() {
                let _ = e.print();
                return 0;
            }
            let text = e.render().to_string();
            eprintln!("{}", text.lines().next().unwrap_or("error: bad usage"));
            return 2;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", one_line(&e.to_string()));
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref(), &cli.sets)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| CliError::Failed(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(cli.command, &cfg))
}

fn dispatch(cmd: Command, cfg: &RunConfig) -> Result<()> {
    match cmd {
        Command::Prepare(a) => cmd_prepare(a, cfg),
        Command::Optimize(a) => cmd_optimize(a, cfg),
        Command::Train(a) => cmd_train(a, cfg),
        Command::Predict(a) => cmd_predict(a),
        Command::EvalDepth(a) => cmd_eval_depth(a, cfg),
        Command::EvalPose(a) => cmd_eval_pose(a),
        Command::RenderView(a) => cmd_render_view(a, cfg),
        Command::RenderOds(a) => cmd_render_ods(a, cfg),
        Command::Gradcheck(a) => cmd_gradcheck(a, cfg),
        Command::MakeSynthetic(a) => cmd_make_synthetic(a, cfg),
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Failed(format!("{}: {e}", path.display()))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn depth_name(frame: usize) -> String {
    format!("{frame:06}.pfm")
}

fn cmd_prepare(a: PrepareArgs, cfg: &RunConfig) -> Result<()> {
    let source = match a.source {
        SourceArg::Cylindrical => SourceKind::Cylindrical,
        SourceArg::Cubemap => SourceKind::Cubemap(cfg.data.cube_fov),
        SourceArg::Equirect => SourceKind::Equirect,
    };
    let opts = PrepareOptions {
        source,
        camera: cfg.camera()?,
        tau: cfg.data.tau,
        fractions: cfg.data.fractions,
        seed: cfg.seed,
    };
    let m = prepare(&a.input, &a.out, &opts)?;
    println!("frames={} snippets={}", m.frames.len(), m.snippets.len());
    Ok(())
}

/// Snippets of `dir` in manifest order, restricted to `split`.
fn load_split(dir: &Path, split: Option<Split>) -> Result<(SequenceManifest, Vec<(SnippetRecord, LoadedSnippet)>)> {
    let m = SequenceManifest::load(dir.join("manifest.txt"))?;
    let recs: Vec<SnippetRecord> = m
        .snippets
        .iter()
        .filter(|s| split.is_none_or(|sp| s.split == sp))
        .copied()
        .collect();
    let loaded = recs
        .into_iter()
        .map(|r| Ok((r, load_snippet(dir, &m, &r)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok((m, loaded))
}

fn to_snippet(l: &LoadedSnippet, cam: CylCamera, wrap: bool) -> Result<Snippet> {
    let cam = CylCamera { wraps: wrap, ..cam };
    Ok(Snippet::new(l.target.clone(), l.sources.clone(), cam)?)
}

fn snippet_pose_entry(l: &LoadedSnippet, poses: &[Pose6]) -> SnippetPoses {
    let [a, t, b] = l.frame_indices;
    (t, vec![(a, poses[0]), (b, poses[1])])
}

fn cmd_optimize(a: OptimizeArgs, cfg: &RunConfig) -> Result<()> {
    let (m, snippets) = load_split(&a.data, a.split.split())?;
    let selected: Vec<&(SnippetRecord, LoadedSnippet)> = snippets
        .iter()
        .filter(|(_, l)| a.snippet.is_none_or(|k| l.frame_indices[1] == k))
        .collect();
    if selected.is_empty() {
        return Err(CliError::Failed("no snippet matches the selection".into()));
    }
    let loss = cfg.loss()?;
    let ocfg = cfg.optim();
    create_dir(&a.out.join("depth"))?;
    create_dir(&a.out.join("trace"))?;
    let mut all = Vec::new();
    for (_, l) in selected {
        let snip = to_snippet(l, m.camera, cfg.camera.wrap)?;
        let out = direct_optimize(&snip, &ocfg, &loss)?;
        let target = l.frame_indices[1];
        write_pfm(a.out.join("depth").join(depth_name(target)), &out.depth.depth())?;
        let trace: String = out
            .trace
            .iter()
            .map(|e| {
                format!(
                    "stage={} iter={} total={} pixel={} smooth={} exp={}\n",
                    e.stage, e.iter, e.terms.total, e.terms.pixel, e.terms.smooth, e.terms.exp
                )
            })
            .collect();
        let tpath = a.out.join("trace").join(format!("{target:06}.log"));
        fs::write(&tpath, trace).map_err(|e| io_err(&tpath, e))?;
        let last = out.trace.last().map_or(f64::NAN, |e| e.terms.total);
        println!("target={target} final_total={last} static={}", out.static_snippet);
        all.push(snippet_pose_entry(l, &out.poses));
    }
    write_snippet_poses(a.out.join("snippet_poses.txt"), &all)?;
    Ok(())
}

fn cmd_train(a: TrainArgs, cfg: &RunConfig) -> Result<()> {
    let loss = cfg.loss()?;
    let tcfg = cfg.train_config();
    let mut data = Vec::new();
    for dir in &a.data {
        let (m, snippets) = load_split(dir, a.split.split())?;
        for (_, l) in &snippets {
            data.push(to_snippet(l, m.camera, cfg.camera.wrap)?);
        }
    }
    let mut state = match &a.resume {
        Some(p) => TrainState::from_checkpoint(&Checkpoint::load(p)?)?,
        None => TrainState::new(cfg.net_spec(cfg.camera.wrap), &tcfg)?,
    };
    let recs = train_to_dir(&mut state, &data, &tcfg, &loss, &a.out, &cfg.echo())?;
    match recs.last() {
        Some(r) => println!("{r}"),
        None => println!("step={} (nothing to do)", state.step),
    }
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let model = ck.model()?;
    let (dmin, dmax) = ck.depth_range()?;
    let (lo, span) = (1.0 / dmax, 1.0 / dmin - 1.0 / dmax);
    let (_, snippets) = load_split(&a.data, a.split.split())?;
    create_dir(&a.out.join("depth"))?;
    let mut all = Vec::new();
    for (_, l) in &snippets {
        let disp = model.depth_forward(&l.target, lo, span)?.disparities();
        let depth = disp[0].map(|v| 1.0 / v);
        write_pfm(a.out.join("depth").join(depth_name(l.frame_indices[1])), &depth)?;
        let poses = model.pose_forward(&l.target, &l.sources)?.poses();
        all.push(snippet_pose_entry(l, &poses));
    }
    write_snippet_poses(a.out.join("snippet_poses.txt"), &all)?;
    println!("snippets={}", all.len());
    Ok(())
}

/// Depth maps under `p`: the file itself, or the `.pfm` files of `p/depth`
/// (or `p` when it has no such subdirectory), sorted by name.
fn depth_files(p: &Path) -> Result<Vec<PathBuf>> {
    if p.is_file() {
        return Ok(vec![p.to_path_buf()]);
    }
    let dir = if p.join("depth").is_dir() {
        p.join("depth")
    } else {
        p.to_path_buf()
    };
    let mut out: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| io_err(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pfm"))
        .collect();
    out.sort();
    Ok(out)
}

fn write_report(out: Option<&Path>, text: &str) -> Result<()> {
    print!("{text}");
    if let Some(p) = out {
        fs::write(p, text).map_err(|e| io_err(p, e))?;
    }
    Ok(())
}

fn cmd_eval_depth(a: EvalDepthArgs, cfg: &RunConfig) -> Result<()> {
    let preds = depth_files(&a.pred)?;
    if preds.is_empty() {
        return Err(CliError::Failed(format!("no depth maps under {}", a.pred.display())));
    }
    let gt_single = a.gt.is_file().then(|| a.gt.clone());
    let gt_dir = if a.gt.join("depth").is_dir() {
        a.gt.join("depth")
    } else {
        a.gt.clone()
    };
    let mut all = Vec::new();
    for p in &preds {
        let g = match &gt_single {
            Some(g) => g.clone(),
            None => gt_dir.join(p.file_name().unwrap_or_default()),
        };
        if !g.is_file() {
            return Err(CliError::Failed(format!(
                "no ground truth {} for {}",
                g.display(),
                p.display()
            )));
        }
        let gt = read_pfm(&g)?;
        let mask = default_mask(&gt, cfg.loss.min_depth, cfg.loss.max_depth);
        all.push(depth_metrics(&read_pfm(p)?, &gt, &mask, !a.no_median_scale)?);
    }
    let m = DepthMetrics::mean(&all);
    let row: Vec<String> = m.to_array().iter().map(|v| format!("{v:.6}")).collect();
    write_report(
        a.out.as_deref(),
        &format!("{}\n{}\n", DepthMetrics::HEADER, row.join(" ")),
    )
}

fn cmd_eval_pose(a: EvalPoseArgs) -> Result<()> {
    let m = SequenceManifest::load(a.data.join("manifest.txt"))?;
    let pose_of = |frame: usize| -> Result<Pose6> {
        m.frames
            .iter()
            .find(|f| f.index == frame)
            .and_then(|f| f.pose)
            .ok_or_else(|| CliError::Failed(format!("no ground-truth pose for frame {frame}")))
    };
    let mut pred = Vec::new();
    let mut gt = Vec::new();
    for (target, sources) in read_snippet_poses(&a.pred)? {
        let tp = pose_of(target)?;
        let mut p = vec![Point3::zeros()];
        let mut g = vec![Point3::zeros()];
        for (src, motion) in &sources {
            p.push(motion.source_center_in_target());
            g.push(Pose6::relative(&tp, &pose_of(*src)?).source_center_in_target());
        }
        pred.push(p);
        gt.push(g);
    }
    let report = ate(&pred, &gt)?;
    write_report(a.out.as_deref(), &format!("{report}\n"))
}

/// Source camera for a panorama read from disk: the image's own size with
/// the configured `h_max`.
fn pano_camera(img: &Tensor, cfg: &RunConfig) -> Result<CylCamera> {
    let mut cam = CylCamera::new(img.cols(), img.rows())?;
    if let Some(h) = cfg.camera.h_max {
        cam = cam.with_h_max(h)?;
    }
    Ok(cam)
}

fn cmd_render_view(a: RenderViewArgs, cfg: &RunConfig) -> Result<()> {
    let pano = read_image(&a.image)?;
    let depth = read_pfm(&a.depth)?;
    let cam = pano_camera(&pano, cfg)?;
    let mesh = build_mesh(&pano, &depth, &cam)?;
    if let Some(p) = &a.mesh {
        write_ply(p, &mesh)?;
    }
    let (w, h) = (a.width.unwrap_or(cam.width), a.height.unwrap_or(cam.height));
    let view = match a.pinhole_fov {
        Some(fov) => {
            ViewCamera::Pinhole(PinholeCamera::from_fov(w, h, fov).map_err(|e| CliError::Usage(e.to_string()))?)
        }
        None => ViewCamera::Cylindrical(CylCamera {
            width: w,
            height: h,
            ..cam
        }),
    };
    let out = render_view(&mesh, &a.pose.unwrap_or_default(), &view);
    write_image(&a.out, &out.image)?;
    if let Some(p) = &a.depth_out {
        write_pfm(p, &out.depth)?;
    }
    println!("covered={} of {}", out.coverage(), out.valid.len());
    Ok(())
}

fn cmd_render_ods(a: RenderOdsArgs, cfg: &RunConfig) -> Result<()> {
    let pano = read_image(&a.image)?;
    let depth = read_pfm(&a.depth)?;
    let cam = pano_camera(&pano, cfg)?;
    let mesh = build_mesh(&pano, &depth, &cam)?;
    let pair = render_ods(&mesh, a.radius, &cam)?;
    write_image(&a.left, &pair.left.image)?;
    write_image(&a.right, &pair.right.image)?;
    if let Some(p) = &a.anaglyph {
        write_image(p, &anaglyph(&pair.left.image, &pair.right.image)?)?;
    }
    Ok(())
}

fn cmd_gradcheck(a: GradcheckArgs, cfg: &RunConfig) -> Result<()> {
    let comps: Vec<Component> = match &a.component {
        Some(name) => vec![Component::parse(name).ok_or_else(|| CliError::Usage(format!("unknown component {name}")))?],
        None => Component::ALL.to_vec(),
    };
    let mut failed = Vec::new();
    for c in comps {
        let r = gradient_check(c, a.trials, cfg.seed)?;
        println!("{r}");
        if !(r.max_rel_err < GRADCHECK_TOLERANCE) {
            failed.push(c.name());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!(
            "gradient check above {GRADCHECK_TOLERANCE:e}: {}",
            failed.join(", ")
        )))
    }
}

fn cmd_make_synthetic(a: MakeSyntheticArgs, cfg: &RunConfig) -> Result<()> {
    let cam = cfg.camera()?;
    match a.kind {
        SyntheticKind::SeamToy => {
            let seqs = seam_toy_sequences(a.walks, &cam, cfg.seed)?;
            for (k, s) in seqs.iter().enumerate() {
                write_sequence(&a.out.join(format!("walk-{k:02}")), s)?;
            }
            println!("walks={}", seqs.len());
        }
        SyntheticKind::Cylinder | SyntheticKind::Room => {
            let kind = if matches!(a.kind, SyntheticKind::Room) {
                SceneKind::Room
            } else {
                SceneKind::Cylinder
            };
            let scene = Scene::new(kind, a.radius, cfg.seed);
            let half = 0.5 * a.baseline * a.frames.saturating_sub(1) as f64;
            let poses = trajectory(
                a.frames,
                Point3::new(-half, 0.0, 0.0),
                Point3::new(a.baseline, 0.0, 0.0),
                0.0,
                0.0,
                cfg.seed,
            );
            let seq = render_sequence(&scene, &poses, &cam, a.supersample)?;
            write_sequence(&a.out, &seq)?;
            println!("frames={}", seq.images.len());
        }
    }
    Ok(())
}
