//! Command-line front end.
//!
//! Exit codes: 0 success, 1 internal error, 2 usage, configuration or input
//! error. Values from `--config` (or `PROBSEG_CONFIG`) are applied first and
//! flags override them.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::export::{self, Layer};
use crate::format::{self, pass_file_name, Run};
use crate::fusion::{bsas_cluster, FusionConfig, HeatmapDenominator};
use crate::metrics::{self, AlphaVariant, EvalConfig, EvalReport, ImageInput};
use crate::simulator::{self, default_class_names, NoiseConfig, Provenance};
use crate::uncertainty::{probability_gray, variance_gray, write_pgm};

/// Pass counts evaluated by `eval --sweep`, capped at the run's M.
pub const SWEEP_PASSES: [usize; 7] = [1, 2, 4, 8, 16, 24, 32];

pub const PROVENANCE_FILE: &str = "provenance.json";
pub const REPORT_FILE: &str = "report.json";
pub const SPARSIFICATION_FILE: &str = "sparsification.csv";

#[derive(Debug, Parser)]
#[command(name = "probseg", version, about = "Fuse stochastic instance-segmentation samples and score them")]
pub struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true, env = "PROBSEG_CONFIG")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scene and M simulated forward passes as a run directory.
    Simulate(SimulateArgs),
    /// Cluster detections into observations and write fused masks and variance maps.
    Fuse(FuseArgs),
    /// Score fused observations against ground truth.
    Eval(EvalArgs),
    /// Write one PGM image per observation for a fused layer.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Output run directory.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Number of ground-truth objects.
    #[arg(long)]
    pub objects: Option<usize>,
    /// Number of forward passes M.
    #[arg(long)]
    pub passes: Option<usize>,
    /// Seed for scene layout and every pass.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Frame width in pixels
    #[arg(long)]
    pub width: Option<usize>,
    /// Frame height in pixels
    #[arg(long)]
    pub height: Option<usize>,
    /// Number of foreground classes.
    #[arg(long)]
    pub classes: Option<usize>,
    /// Probability that an object is detected in a pass.
    #[arg(long)]
    pub existence: Option<f64>,
    /// Standard deviation (pixels) of per-pass contour displacement.
    #[arg(long)]
    pub boundary_sigma: Option<f64>,
    /// Width (pixels) of the probability ramp across contours.
    #[arg(long)]
    pub soft_edge: Option<f64>,
    /// Probability that an inner boundary-band pixel is present in a pass.
    #[arg(long)]
    pub band_presence: Option<f64>,
    /// Depth (pixels) of the inner boundary band.
    #[arg(long)]
    pub band_width: Option<f64>,
    /// Probability of reporting a wrong class.
    #[arg(long)]
    pub label_flip: Option<f64>,
    /// Dirichlet concentration on the true class ("inf" for one-hot).
    #[arg(long)]
    pub concentration: Option<f64>,
    /// Expected spurious detections per pass.
    #[arg(long)]
    pub clutter: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DenominatorArg {
    TotalPasses,
    ClusterSize,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Run directory.
    pub run: Option<PathBuf>,
    /// Minimum cluster size to form an observation [default: 2].
    #[arg(long)]
    pub min_detections: Option<usize>,
    /// Mask IoU needed to join a cluster [default: 0.5].
    #[arg(long)]
    pub iou: Option<f64>,
    /// Score below which detections are dropped [default: 0.5].
    #[arg(long)]
    pub score: Option<f64>,
    /// Heatmap normalization [default: total-passes].
    #[arg(long, value_enum)]
    pub heatmap_denominator: Option<DenominatorArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlphaArg {
    LogHalf,
    Literal,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Run directory with ground truth and fused observations.
    pub run: Option<PathBuf>,
    /// Calibration bins [default: 10].
    #[arg(long)]
    pub ace_bins: Option<usize>,
    /// Sparsification steps [default: 20].
    #[arg(long)]
    pub ause_steps: Option<usize>,
    /// Background importance decay for the weighted F-measure [default: log-half].
    #[arg(long, value_enum)]
    pub alpha: Option<AlphaArg>,
    /// Also re-fuse the first M passes for M in 1, 2, 4, 8, 16, 24, 32 and report each.
    #[arg(long)]
    pub sweep: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LayerArg {
    Mean,
    Aleatoric,
    Epistemic,
    Total,
    Heatmap,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Run directory with fused observations.
    pub run: Option<PathBuf>,
    /// Layer to render. Variance layers map 0.25 to white, probability layers map 1.
    #[arg(long, value_enum, default_value = "mean")]
    pub which: LayerArg,
    /// Output directory [default: <run>/render].
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

/// Failure with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Empty(_) | Error::NoClosedForm(_) => 1,
            _ => 2,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> CliError {
    CliError {
        code: 2,
        message: message.into(),
    }
}

/// Runs a parsed command, returning the text it prints on success.
pub fn run(cli: Cli) -> std::result::Result<String, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Simulate(args) => cmd_simulate(&mut cfg, args),
        Command::Fuse(args) => cmd_fuse(&mut cfg, args),
        Command::Eval(args) => cmd_eval(&mut cfg, args),
        Command::Render(args) => cmd_render(&cfg, args),
    }
}

fn run_dir(given: Option<PathBuf>, cfg: &RunConfig) -> std::result::Result<PathBuf, CliError> {
    given
        .or_else(|| cfg.paths.run_dir.clone())
        .ok_or_else(|| usage("no run directory given (argument or paths.run_dir)"))
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn describe_noise(n: &NoiseConfig) -> String {
    format!(
        "existence={} boundary_sigma={} soft_edge={} band_presence={} band_width={} label_flip={} concentration={} clutter={}",
        n.existence_prob,
        n.boundary_sigma,
        n.soft_edge_width,
        n.band_presence,
        n.band_width,
        n.label_flip_prob,
        n.score_concentration,
        n.clutter_rate
    )
}

fn remove_stale_passes(dir: &Path, from: usize) -> Result<()> {
    let mut k = from;
    loop {
        let path = dir.join(pass_file_name(k));
        if !path.exists() {
            return Ok(());
        }
        std::fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
        k += 1;
    }
}

pub fn cmd_simulate(cfg: &mut RunConfig, args: SimulateArgs) -> std::result::Result<String, CliError> {
    let s = &mut cfg.simulator;
    set(&mut s.objects, args.objects);
    set(&mut s.passes, args.passes);
    set(&mut s.width, args.width);
    set(&mut s.height, args.height);
    set(&mut s.classes, args.classes);
    let n = &mut s.noise;
    set(&mut n.seed, args.seed);
    set(&mut n.existence_prob, args.existence);
    set(&mut n.boundary_sigma, args.boundary_sigma);
    set(&mut n.soft_edge_width, args.soft_edge);
    set(&mut n.band_presence, args.band_presence);
    set(&mut n.band_width, args.band_width);
    set(&mut n.label_flip_prob, args.label_flip);
    set(&mut n.score_concentration, args.concentration);
    set(&mut n.clutter_rate, args.clutter);
    s.validate()?;
    let out = run_dir(args.out, cfg)?;
    let s = &cfg.simulator;

    let scene = simulator::generate_scene(s.width, s.height, s.objects, s.classes, s.noise.seed)?;
    let sim = simulator::simulate_samples(&scene, s.passes, s.classes, &s.noise)?;
    let provenance: Vec<Vec<Provenance>> = sim.provenance.clone();
    let detections: usize = sim.samples.iter().map(|p| p.detections.len()).sum();
    let run = sim.into_run(default_class_names(s.classes));
    format::save_run(&run, &out)?;
    remove_stale_passes(&out, run.passes())?;
    format::write_json(&out.join(PROVENANCE_FILE), &provenance)?;

    Ok(format!(
        "simulated {} objects, M = {}, {} detections, seed {} into {}\nnoise: {}\n",
        s.objects,
        s.passes,
        detections,
        s.noise.seed,
        out.display(),
        describe_noise(&s.noise)
    ))
}

pub fn cmd_fuse(cfg: &mut RunConfig, args: FuseArgs) -> std::result::Result<String, CliError> {
    let f = &mut cfg.fusion;
    set(&mut f.min_detections, args.min_detections);
    set(&mut f.iou_threshold, args.iou);
    set(&mut f.score_threshold, args.score);
    set(
        &mut f.heatmap_denominator,
        args.heatmap_denominator.map(|d| match d {
            DenominatorArg::TotalPasses => HeatmapDenominator::TotalPasses,
            DenominatorArg::ClusterSize => HeatmapDenominator::ClusterSize,
        }),
    );
    f.validate()?;
    let dir = run_dir(args.run, cfg)?;
    let run = format::load_run(&dir)?;
    let observations = bsas_cluster(&run.samples, &cfg.fusion)?;
    if observations.is_empty() {
        log::warn!("no observations formed: no cluster reached {} detections", cfg.fusion.min_detections);
    }
    export::save_observations(&dir, &run, &observations, &cfg.fusion)?;
    Ok(format!(
        "fused {} observations from {} passes into {}\n",
        observations.len(),
        run.passes(),
        dir.join(export::OBSERVATIONS_FILE).display()
    ))
}

#[derive(Serialize)]
struct ReportFile<'a> {
    image_id: &'a str,
    passes: usize,
    fusion: &'a FusionConfig,
    metrics: &'a EvalConfig,
    #[serde(flatten)]
    report: &'a EvalReport,
}

fn evaluate_run(run: &Run, observations: &[crate::fusion::Observation], cfg: &EvalConfig) -> Result<EvalReport> {
    let scene = run.scene.as_ref().ok_or_else(|| Error::validation("eval", "ground truth required"))?;
    metrics::evaluate(
        &[ImageInput {
            scene,
            observations,
        }],
        &run.manifest.class_names,
        cfg,
    )
}

fn write_report(dir: &Path, name: &str, run: &Run, fusion: &FusionConfig, metrics: &EvalConfig, report: &EvalReport) -> Result<()> {
    format::write_json(
        &dir.join(name),
        &ReportFile {
            image_id: &run.manifest.image_id,
            passes: run.passes(),
            fusion,
            metrics,
            report,
        },
    )
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |v| format!("{v}"))
}

pub fn cmd_eval(cfg: &mut RunConfig, args: EvalArgs) -> std::result::Result<String, CliError> {
    let m = &mut cfg.metrics;
    set(&mut m.ace_bins, args.ace_bins);
    set(&mut m.ause_steps, args.ause_steps);
    set(
        &mut m.alpha,
        args.alpha.map(|a| match a {
            AlphaArg::LogHalf => AlphaVariant::LogHalf,
            AlphaArg::Literal => AlphaVariant::Literal,
        }),
    );
    m.validate()?;
    let dir = run_dir(args.run, cfg)?;
    let run = format::load_run(&dir)?;
    if run.scene.is_none() {
        return Err(usage(format!("{}: ground truth required", dir.display())));
    }
    let (fusion, observations) = export::load_observations(&dir, &run)?;
    let report = evaluate_run(&run, &observations, &cfg.metrics)?;
    write_report(&dir, REPORT_FILE, &run, &fusion, &cfg.metrics, &report)?;
    metrics::write_sparsification_csv(&dir.join(SPARSIFICATION_FILE), report.sparsification.as_ref())?;

    let mut text = format!(
        "PMQ {} pPMQ {} Q_s {} Q_l {} TP {} FP {} FN {}\nF_bw {} ACE {} AUSE {}\n",
        report.pmq.pmq,
        report.pmq.ppmq,
        report.pmq.q_s,
        report.pmq.q_l,
        report.pmq.tp,
        report.pmq.fp,
        report.pmq.fn_,
        fmt_opt(report.fbw.average),
        fmt_opt(report.ace),
        fmt_opt(report.ause),
    );

    if args.sweep {
        let sweep_dir = dir.join("sweep");
        std::fs::create_dir_all(&sweep_dir).map_err(|e| Error::io(&sweep_dir, e))?;
        let mut table = String::from("passes,pmq,ppmq,fbw,ace,ause\n");
        for &m in SWEEP_PASSES.iter().filter(|&&m| m <= run.passes()) {
            let sub = run.truncated(m);
            let obs = bsas_cluster(&sub.samples, &fusion)?;
            let r = evaluate_run(&sub, &obs, &cfg.metrics)?;
            write_report(&sweep_dir, &format!("report_m{m}.json"), &sub, &fusion, &cfg.metrics, &r)?;
            metrics::write_sparsification_csv(&sweep_dir.join(format!("sparsification_m{m}.csv")), r.sparsification.as_ref())?;
            writeln!(
                table,
                "{m},{},{},{},{},{}",
                r.pmq.pmq,
                r.pmq.ppmq,
                fmt_opt(r.fbw.average),
                fmt_opt(r.ace),
                fmt_opt(r.ause)
            )
            .expect("write to string");
        }
        let path = sweep_dir.join("summary.csv");
        std::fs::write(&path, &table).map_err(|e| Error::io(&path, e))?;
        text.push_str(&table);
    }
    Ok(text)
}

pub fn cmd_render(cfg: &RunConfig, args: RenderArgs) -> std::result::Result<String, CliError> {
    let dir = run_dir(args.run, cfg)?;
    let manifest: format::RunManifest = format::read_json(&dir.join(format::MANIFEST_FILE))?;
    let file = export::read_observations_file(&dir)?;
    let (layer, name) = match args.which {
        LayerArg::Mean => (Layer::Mean, "mean"),
        LayerArg::Heatmap => (Layer::Heatmap, "heatmap"),
        LayerArg::Aleatoric => (Layer::Aleatoric, "aleatoric"),
        LayerArg::Epistemic => (Layer::Epistemic, "epistemic"),
        LayerArg::Total => (Layer::Total, "total"),
    };
    let out = args.out.unwrap_or_else(|| dir.join("render"));
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let (w, h) = (manifest.width, manifest.height);
    if file.observations.is_empty() {
        log::warn!("no observations to render");
    }
    let mut written = Vec::new();
    for (i, entry) in file.observations.iter().enumerate() {
        let values = export::load_layer(&dir, entry, layer, manifest.num_classes(), w, h)?;
        let gray: Vec<u8> = values
            .iter()
            .map(|&v| match layer {
                Layer::Mean | Layer::Heatmap => probability_gray(f64::from(v)),
                _ => variance_gray(f64::from(v)),
            })
            .collect();
        let path = out.join(format!("{name}_{i}.pgm"));
        write_pgm(&path, w, h, &gray)?;
        written.push(path);
    }
    Ok(format!("rendered {} {name} images into {}\n", written.len(), out.display()))
}
