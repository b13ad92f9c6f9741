//! Command-line front end.
//!
//! Exit codes: 0 success, 1 bad input or usage, 2 internal invariant
//! violation.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::correlator::IscuConfig;
use crate::error::{Error, Result};
use crate::geometry::{FrameDetections, GroundTruthBox};
use crate::io::{self, report, FrameDir, RunConfig, SsimModeName};
use crate::metrics::{evaluate, EvalFrame};
use crate::pipeline::{self, SweepInput, SweepReport};
use crate::similarity::ssim;
use crate::synth::{generate_scenario, ground_truth, simulate_detector, FrameRenderer, ScenarioConfig};

#[derive(Debug, Parser)]
#[command(name = "framecorr", version, about = "Inter-frame similarity correlation for video detections")]
struct Cli {
    /// TOML run configuration; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Filter detections through the correlator.
    Filter(FilterArgs),
    /// Evaluate detections against ground truth.
    Eval(EvalArgs),
    /// SSIM between two frames.
    Ssim(SsimArgs),
    /// Write a synthetic scenario (frames, detections, ground truth).
    Synth(SynthArgs),
    /// Time the correlator per frame.
    Bench(BenchArgs),
    /// Evaluate filtered output for several window sizes.
    Sweep(SweepArgs),
}

#[derive(Debug, Args, Default)]
struct SsimOverrides {
    #[arg(long)]
    similarity_threshold: Option<f64>,
    #[arg(long)]
    k1: Option<f64>,
    #[arg(long)]
    k2: Option<f64>,
    #[arg(long)]
    dynamic_range: Option<f64>,
    #[arg(long, value_enum)]
    ssim_mode: Option<SsimModeName>,
    #[arg(long)]
    window_size: Option<u32>,
    #[arg(long)]
    window_stride: Option<u32>,
    #[arg(long)]
    downsample_w: Option<u32>,
    #[arg(long)]
    downsample_h: Option<u32>,
}

#[derive(Debug, Args, Default)]
struct IscuOverrides {
    #[arg(long)]
    confidence_gate: Option<f64>,
    #[arg(long)]
    fc_quorum: Option<usize>,
    #[arg(long)]
    fill_quorum: Option<usize>,
    #[arg(long)]
    fill_iou: Option<f64>,
    #[command(flatten)]
    ssim: SsimOverrides,
}

#[derive(Debug, Args)]
struct FilterArgs {
    /// Directory of frames named by index (PGM/PPM).
    #[arg(long)]
    frames: Option<PathBuf>,
    #[arg(long)]
    detections: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    half_window: Option<usize>,
    #[command(flatten)]
    iscu: IscuOverrides,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Detection file; repeat together with --ground-truth for several
    /// sequences.
    #[arg(long)]
    detections: Vec<PathBuf>,
    #[arg(long)]
    ground_truth: Vec<PathBuf>,
    /// Sequence length, when trailing frames have neither detections nor
    /// ground truth.
    #[arg(long)]
    frames: Option<usize>,
    /// Frame size `WxH` used to clip detections.
    #[arg(long, value_parser = parse_size)]
    frame_size: Option<(u32, u32)>,
    #[arg(long)]
    iou_cut: Option<f64>,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SsimArgs {
    a: PathBuf,
    b: PathBuf,
    /// Skip downsampling and compare at full resolution.
    #[arg(long)]
    full_resolution: bool,
    #[command(flatten)]
    ssim: SsimOverrides,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Scenario TOML (see `ScenarioConfig`).
    #[arg(long, conflicts_with = "standard")]
    scenario: Option<PathBuf>,
    /// Use the standard noise scenario with this seed.
    #[arg(long)]
    standard: Option<u64>,
    #[arg(long, requires = "standard")]
    width: Option<u32>,
    #[arg(long, requires = "standard")]
    height: Option<u32>,
    #[arg(long, requires = "standard")]
    n_frames: Option<usize>,
    /// Write frames as PPM instead of PGM.
    #[arg(long)]
    rgb: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, conflicts_with = "synthetic")]
    frames: Option<PathBuf>,
    #[arg(long, conflicts_with = "synthetic")]
    detections: Option<PathBuf>,
    /// Render the standard scenario on the fly instead of reading files.
    #[arg(long)]
    synthetic: bool,
    #[arg(long, default_value_t = 1280)]
    width: u32,
    #[arg(long, default_value_t = 1080)]
    height: u32,
    #[arg(long, default_value_t = 1000)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    half_window: Option<usize>,
    #[arg(long)]
    json: Option<PathBuf>,
    #[command(flatten)]
    iscu: IscuOverrides,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Window sizes to evaluate.
    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3, 4])]
    half_window: Vec<usize>,
    #[arg(long)]
    frames: Option<PathBuf>,
    #[arg(long)]
    detections: Option<PathBuf>,
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    /// Use standard noise scenarios, one per seed, instead of files.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["frames", "detections", "ground_truth"])]
    standard: Vec<u64>,
    #[arg(long)]
    iou_cut: Option<f64>,
    #[arg(long)]
    json: Option<PathBuf>,
    #[command(flatten)]
    iscu: IscuOverrides,
}

fn parse_size(s: &str) -> std::result::Result<(u32, u32), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WxH")?;
    let w: u32 = w.parse().map_err(|_| format!("bad width {w:?}"))?;
    let h: u32 = h.parse().map_err(|_| format!("bad height {h:?}"))?;
    if w == 0 || h == 0 {
        return Err("frame size must be positive".into());
    }
    Ok((w, h))
}

impl SsimOverrides {
    fn apply(&self, c: &mut RunConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        set!(similarity_threshold, k1, k2, dynamic_range, ssim_mode, window_size, window_stride, downsample_w, downsample_h);
    }
}

impl IscuOverrides {
    fn apply(&self, c: &mut RunConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        set!(confidence_gate, fc_quorum, fill_quorum, fill_iou);
        self.ssim.apply(c);
    }
}

fn required(flag: Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or_else(|| fallback.clone())
        .ok_or_else(|| Error::Input(format!("--{name} is required (or set `{}` in the config file)", name.replace('-', "_"))))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn emit_report<T: Serialize>(r: &T, json: Option<&Path>) -> Result<()> {
    write_out(None, &report::to_text(r))?;
    if let Some(p) = json {
        write_out(Some(p), &report::to_json(r))?;
    }
    Ok(())
}

/// Loads every frame's detections for a frame directory, checking that all
/// frames share frame 0's size.
fn load_detections(frames: &FrameDir, det_path: &Path) -> Result<(u32, u32, Vec<FrameDetections>)> {
    let (w, h) = frames
        .dimensions()?
        .ok_or_else(|| Error::Input("frame directory holds no frames".into()))?;
    let dets = io::parse_detections(&read_text(det_path)?, det_path, w, h, Some(frames.len()))?;
    Ok((w, h, dets))
}

fn frame_loader(frames: &FrameDir, w: u32, h: u32) -> impl Fn(usize) -> Result<crate::similarity::GrayFrame> + '_ {
    move |i| {
        let f = frames.load(i)?;
        if (f.width(), f.height()) != (w, h) {
            return Err(Error::Input(format!(
                "{} is {}x{} but frame 0 is {w}x{h}",
                frames.path(i).display(),
                f.width(),
                f.height()
            )));
        }
        Ok(f)
    }
}

fn run_filter(a: FilterArgs, mut cfg: RunConfig) -> Result<()> {
    if let Some(h) = a.half_window {
        cfg.half_window = h;
    }
    a.iscu.apply(&mut cfg);
    let iscu = cfg.iscu()?;
    let frames = FrameDir::open(&required(a.frames, &cfg.frames, "frames")?)?;
    let det_path = required(a.detections, &cfg.detections, "detections")?;
    let (w, h, dets) = load_detections(&frames, &det_path)?;
    let out = pipeline::filter_stream(&frame_loader(&frames, w, h), &dets, &iscu)?;
    let output = a.output.or(cfg.output);
    write_out(output.as_deref(), &io::write_filtered(&out))
}

fn run_eval(a: EvalArgs, cfg: RunConfig) -> Result<()> {
    let mut det_paths = a.detections;
    let mut gt_paths = a.ground_truth;
    if det_paths.is_empty() {
        det_paths.extend(cfg.detections.clone());
    }
    if gt_paths.is_empty() {
        gt_paths.extend(cfg.ground_truth.clone());
    }
    if det_paths.is_empty() || det_paths.len() != gt_paths.len() {
        return Err(Error::Input(format!(
            "eval needs matching --detections and --ground-truth files ({} and {} given)",
            det_paths.len(),
            gt_paths.len()
        )));
    }
    let (w, h) = a.frame_size.unwrap_or((u32::MAX, u32::MAX));
    let mut sequences: Vec<(String, Vec<EvalFrame>)> = Vec::new();
    for (k, (dp, gp)) in det_paths.iter().zip(&gt_paths).enumerate() {
        let gts = io::parse_groundtruth(&read_text(gp)?, gp, a.frames)?;
        let dets = io::parse_detections(&read_text(dp)?, dp, w, h, None)?;
        let n = a.frames.unwrap_or(0).max(gts.len()).max(dets.len());
        if a.frames.is_some_and(|f| f < n) {
            return Err(Error::Input(format!(
                "{} or {} reaches frame {}, beyond --frames {}",
                dp.display(),
                gp.display(),
                n - 1,
                a.frames.unwrap_or(0)
            )));
        }
        let mut frames = pipeline::eval_frames(pipeline::raw_boxes(&dets), &gts);
        frames.resize_with(n, EvalFrame::default);
        sequences.push((format!("{k}:{}", dp.display()), frames));
    }
    let iou_cut = a.iou_cut.unwrap_or(cfg.iou_cut);
    let r = evaluate(sequences.iter().map(|(n, f)| (n.as_str(), f.as_slice())), iou_cut)?;
    emit_report(&r, a.json.as_deref())
}

#[derive(Serialize)]
struct SsimReport {
    ssim: f64,
    similar: bool,
    width: u32,
    height: u32,
}

fn run_ssim(a: SsimArgs, mut cfg: RunConfig) -> Result<()> {
    a.ssim.apply(&mut cfg);
    let p = cfg.ssim_params()?;
    let x = io::read_netpbm(&a.a)?;
    let y = io::read_netpbm(&a.b)?;
    if (x.width(), x.height()) != (y.width(), y.height()) {
        return Err(Error::Input(format!(
            "{} is {}x{} but {} is {}x{}",
            a.a.display(),
            x.width(),
            x.height(),
            a.b.display(),
            y.width(),
            y.height()
        )));
    }
    let (x, y) = if a.full_resolution { (x, y) } else { (p.prepare(&x)?, p.prepare(&y)?) };
    let v = ssim(&x, &y, &p)?;
    emit_report(
        &SsimReport {
            ssim: v,
            similar: v > p.similarity_threshold,
            width: x.width(),
            height: x.height(),
        },
        None,
    )
}

fn run_synth(a: SynthArgs) -> Result<()> {
    let sc = match (&a.scenario, a.standard) {
        (Some(p), None) => {
            let text = read_text(p)?;
            toml::from_str::<ScenarioConfig>(&text).map_err(|e| Error::Parse {
                file: p.clone(),
                line: e.span().map_or(0, |s| text[..s.start].matches('\n').count() + 1),
                message: e.message().to_string(),
            })?
        }
        (None, Some(seed)) => {
            let base = ScenarioConfig::standard_noise(seed);
            ScenarioConfig::standard_noise_sized(
                a.width.unwrap_or(base.frame_w),
                a.height.unwrap_or(base.frame_h),
                a.n_frames.unwrap_or(base.n_frames),
                seed,
            )
        }
        _ => return Err(Error::Input("synth needs --scenario FILE or --standard SEED".into())),
    };
    let s = generate_scenario(&sc)?;
    let frame_dir = a.out.join("frames");
    fs::create_dir_all(&frame_dir).map_err(|e| Error::io(&frame_dir, e))?;
    let digits = (sc.n_frames.saturating_sub(1)).to_string().len().max(3);
    for (i, f) in s.frames.iter().enumerate() {
        if a.rgb {
            io::write_ppm(&frame_dir.join(format!("{i:0digits$}.ppm")), &s.rgb_frame(i))?;
        } else {
            io::write_pgm(&frame_dir.join(format!("{i:0digits$}.pgm")), f)?;
        }
    }
    write_out(Some(&a.out.join("detections.txt")), &io::write_detections(&s.raw_detections))?;
    write_out(Some(&a.out.join("groundtruth.txt")), &io::write_groundtruth(&s.ground_truth))?;
    let echo = toml::to_string(&sc).map_err(|e| Error::Invariant(format!("scenario does not serialize: {e}")))?;
    write_out(Some(&a.out.join("scenario.toml")), &echo)
}

fn run_bench(a: BenchArgs, mut cfg: RunConfig) -> Result<()> {
    if let Some(h) = a.half_window {
        cfg.half_window = h;
    }
    a.iscu.apply(&mut cfg);
    let iscu = cfg.iscu()?;
    let r = if a.synthetic {
        pipeline::bench_synthetic(a.width, a.height, a.count, a.seed, &iscu)?
    } else {
        let frames = FrameDir::open(&required(a.frames, &cfg.frames, "frames")?)?;
        let det_path = required(a.detections, &cfg.detections, "detections")?;
        let (w, h, dets) = load_detections(&frames, &det_path)?;
        let load = frame_loader(&frames, w, h);
        pipeline::bench(dets.len(), &iscu, |i| Ok((load(i)?, dets[i].clone())))?
    };
    emit_report(&r, a.json.as_deref())
}

/// Precision and sensitivity averaged over seeds.
#[derive(Debug, Clone, Serialize)]
pub struct MeanRow {
    pub half_window: Option<usize>,
    pub sen: Option<f64>,
    pub pre: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedSweep {
    pub seeds: Vec<u64>,
    pub raw: MeanRow,
    pub mean: Vec<MeanRow>,
    pub per_seed: Vec<SweepReport>,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = values.collect();
    v.filter(|v| !v.is_empty())
        .map(|v| v.iter().sum::<f64>() / v.len() as f64)
}

/// Sweeps the standard noise scenario once per seed and averages the
/// per-seed precision and sensitivity.
pub fn sweep_standard(seeds: &[u64], half_windows: &[usize], base: &IscuConfig, iou_cut: f64) -> Result<SeedSweep> {
    let mut per_seed = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let sc = ScenarioConfig::standard_noise(seed);
        let gt = ground_truth(&sc)?;
        let detections = simulate_detector(&gt, &sc)?;
        let renderer = FrameRenderer::new(&sc, &gt)?;
        let frames = |i: usize| Ok(renderer.render(i));
        let input = SweepInput {
            name: format!("seed{seed}"),
            frames: &frames,
            detections,
            ground_truth: gt,
        };
        per_seed.push(pipeline::sweep(&[input], half_windows, base, iou_cut)?);
    }
    let raw = MeanRow {
        half_window: None,
        sen: mean_of(per_seed.iter().map(|r| r.raw.sen)),
        pre: mean_of(per_seed.iter().map(|r| r.raw.pre)),
    };
    let mean = half_windows
        .iter()
        .enumerate()
        .map(|(k, &h)| MeanRow {
            half_window: Some(h),
            sen: mean_of(per_seed.iter().map(|r| r.rows[k].report.sen)),
            pre: mean_of(per_seed.iter().map(|r| r.rows[k].report.pre)),
        })
        .collect();
    Ok(SeedSweep {
        seeds: seeds.to_vec(),
        raw,
        mean,
        per_seed,
    })
}

fn run_sweep(a: SweepArgs, mut cfg: RunConfig) -> Result<()> {
    a.iscu.apply(&mut cfg);
    let base = cfg.iscu()?;
    let iou_cut = a.iou_cut.unwrap_or(cfg.iou_cut);
    if a.half_window.is_empty() || a.half_window.contains(&0) {
        return Err(Error::Input("--half-window values must be at least 1".into()));
    }
    if !a.standard.is_empty() {
        let r = sweep_standard(&a.standard, &a.half_window, &base, iou_cut)?;
        return emit_report(&r, a.json.as_deref());
    }
    let frames = FrameDir::open(&required(a.frames, &cfg.frames, "frames")?)?;
    let det_path = required(a.detections, &cfg.detections, "detections")?;
    let gt_path = required(a.ground_truth, &cfg.ground_truth, "ground-truth")?;
    let (w, h, detections) = load_detections(&frames, &det_path)?;
    let gt: Vec<Vec<GroundTruthBox>> = io::parse_groundtruth(&read_text(&gt_path)?, &gt_path, Some(frames.len()))?;
    if gt.len() > frames.len() {
        return Err(Error::Input(format!(
            "{} annotates frame {} but only {} frames exist",
            gt_path.display(),
            gt.len() - 1,
            frames.len()
        )));
    }
    let load = frame_loader(&frames, w, h);
    let input = SweepInput {
        name: det_path.display().to_string(),
        frames: &load,
        detections,
        ground_truth: gt,
    };
    let r = pipeline::sweep(&[input], &a.half_window, &base, iou_cut)?;
    emit_report(&r, a.json.as_deref())
}

fn dispatch(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Filter(a) => run_filter(a, cfg),
        Command::Eval(a) => run_eval(a, cfg),
        Command::Ssim(a) => run_ssim(a, cfg),
        Command::Synth(a) => run_synth(a),
        Command::Bench(a) => run_bench(a, cfg),
        Command::Sweep(a) => run_sweep(a, cfg),
    }
}

/// Runs the command line `argv` (including the program name) and returns the
/// process exit code. Errors go to standard error.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
