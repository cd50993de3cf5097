//! Command-line front end: scene generation, detection, difference-image
//! comparison, map scoring and gradient checks.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use sarcd::config::PipelineConfig;
use sarcd::eval::{confusion, metrics, Counts, Metrics};
use sarcd::nets::{Cwnn, CwnnConfig, Dcgan, DcganConfig, CHANGED, UNCHANGED};
use sarcd::nn::{GradCheckOptions, GradReport};
use sarcd::pgm::{load_pgm, save_pgm};
use sarcd::pipeline::{detect, run_di, DetectReport, DiMethod};
use sarcd::synth::{gen_speckled_pair, SceneSpec};
use sarcd::{Error, Raster};

mod scene;

pub use scene::parse_scene_spec;

/// Largest sample of a 16-bit PGM.
const WIDE: u16 = u16::MAX;

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, unreadable or unwritable files.
    Usage(String),
    /// The pipeline ran but the data left it nothing to work with.
    Degenerate(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Degenerate(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Degenerate(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Degenerate(_) | Error::EmptyMinority(_) => CliError::Degenerate(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::Usage(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "sarcd", version, about = "Unsupervised small-area change detection for SAR image pairs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic speckled image pair and its change mask.
    Generate(GenerateArgs),
    /// Run the full detection pipeline on an image pair.
    Detect(DetectArgs),
    /// Compute one difference image and its Otsu change map.
    Di(DiArgs),
    /// Score a change map against a reference, or score raw counts.
    Eval(EvalArgs),
    /// Check both networks' gradients against central differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Output directory.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Scene description, `key = value` per line.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Pipeline settings, `key = value` per line.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl PipelineArgs {
    fn resolve(&self) -> Result<PipelineConfig, CliError> {
        let mut cfg = PipelineConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            cfg.apply_text(&text).map_err(|e| io_err(path, e))?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    pub image1: PathBuf,
    pub image2: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Train on real changed patches only.
    #[arg(long)]
    pub skip_gan: bool,
    /// Ground-truth map; adds accuracy figures to the report.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiArgs {
    pub image1: PathBuf,
    pub image2: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    /// lr, slr or msrdi.
    #[arg(long, default_value = "msrdi", value_parser = parse_method)]
    pub method: DiMethod,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

fn parse_method(s: &str) -> Result<DiMethod, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Change map (nonzero = changed).
    #[arg(required_unless_present = "counts")]
    pub changemap: Option<PathBuf>,
    #[arg(required_unless_present = "counts")]
    pub reference: Option<PathBuf>,
    /// Score `tp,fp,fn,tn` directly instead of two maps.
    #[arg(long, conflicts_with_all = ["changemap", "reference"], value_parser = parse_counts)]
    pub counts: Option<Counts>,
    /// Also write the JSON here.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

pub fn parse_counts(s: &str) -> Result<Counts, String> {
    let v: Vec<u64> = s
        .split(',')
        .map(|p| p.trim().parse::<u64>().map_err(|_| format!("'{p}' is not a count")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [tp, fp, fn_, tn] => Ok(Counts { tp, fp, fn_, tn }),
        _ => Err(format!("expected tp,fp,fn,tn, got {} values", v.len())),
    }
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Check every parameter instead of a seeded sample per tensor.
    #[arg(long)]
    pub full: bool,
    /// Entries sampled per tensor when not `--full`.
    #[arg(long, default_value_t = 64)]
    pub per_tensor: usize,
    /// Patch half-width for both networks.
    #[arg(long, default_value_t = 14)]
    pub lambda: usize,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Detect(a) => cmd_detect(&a),
        Command::Di(a) => cmd_di(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Gradcheck(a) => cmd_gradcheck(&a),
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Usage(e.to_string()))?;
    text.push('\n');
    write(path, text)
}

fn load(path: &Path) -> Result<Raster, CliError> {
    load_pgm(path).map_err(|e| io_err(path, e))
}

fn save(r: &Raster, path: &Path, maxval: u16) -> Result<(), CliError> {
    save_pgm(r, path, maxval).map_err(|e| io_err(path, e))
}

/// Stretches `r` over the full 16-bit range; returns the original range.
fn save_stretched(r: &Raster, path: &Path) -> Result<[f64; 2], CliError> {
    let (lo, hi) = r.min_max();
    save(&r.rescale(lo, hi, 0.0, f64::from(WIDE)), path, WIDE)?;
    Ok([lo, hi])
}

fn save_binary(r: &Raster, path: &Path) -> Result<(), CliError> {
    save(&r.map(|v| if v != 0.0 { 255.0 } else { 0.0 }), path, 255)
}

#[derive(Serialize)]
struct SceneSidecar<'a> {
    spec: &'a SceneSpec,
    /// PGM sample = intensity x scale.
    intensity_scale: f64,
    changed_pixels: usize,
    files: [&'a str; 3],
}

fn cmd_generate(a: &GenerateArgs) -> Result<ExitCode, CliError> {
    let mut spec = match &a.spec {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            parse_scene_spec(&text).map_err(|e| io_err(path, e))?
        }
        None => SceneSpec::default(),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let pair = gen_speckled_pair(&spec).map_err(|e| CliError::Usage(e.to_string()))?;
    create_dir(&a.out)?;
    let peak = pair.i1.min_max().1.max(pair.i2.min_max().1);
    let scale = (f64::from(WIDE) / peak).floor();
    save(&pair.i1.map(|v| v * scale), &a.out.join("i1.pgm"), WIDE)?;
    save(&pair.i2.map(|v| v * scale), &a.out.join("i2.pgm"), WIDE)?;
    save_binary(&pair.mask, &a.out.join("mask.pgm"))?;
    let changed_pixels = pair.mask.as_slice().iter().filter(|&&v| v != 0.0).count();
    let sidecar = SceneSidecar { spec: &spec, intensity_scale: scale, changed_pixels, files: ["i1.pgm", "i2.pgm", "mask.pgm"] };
    write_json(&a.out.join("scene.json"), &sidecar)?;
    println!("wrote {}x{} scene with {changed_pixels} changed pixels to {}", spec.width, spec.height, a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn load_pair(a: &Path, b: &Path) -> Result<(Raster, Raster), CliError> {
    let (i1, i2) = (load(a)?, load(b)?);
    if !i1.same_shape(&i2) {
        return Err(CliError::Usage(format!(
            "{} is {}x{} but {} is {}x{}",
            a.display(),
            i1.width(),
            i1.height(),
            b.display(),
            i2.width(),
            i2.height()
        )));
    }
    Ok((i1, i2))
}

fn score(map: &Raster, reference: Option<&PathBuf>) -> Result<Option<Metrics>, CliError> {
    let Some(path) = reference else { return Ok(None) };
    let r = load(path)?;
    let counts = confusion(map, &r).map_err(|e| io_err(path, e))?;
    Ok(Some(metrics(&counts)?.to_percent_report()))
}

#[derive(Serialize)]
struct DetectFile<'a> {
    #[serde(flatten)]
    report: &'a DetectReport,
    msrdi_range: [f64; 2],
    metrics: Option<Metrics>,
}

fn cmd_detect(a: &DetectArgs) -> Result<ExitCode, CliError> {
    let mut cfg = a.pipeline.resolve()?;
    if a.skip_gan {
        cfg.skip_gan = true;
    }
    let (i1, i2) = load_pair(&a.image1, &a.image2)?;
    let out = detect(&i1, &i2, &cfg)?;
    create_dir(&a.out)?;
    let msrdi_range = save_stretched(&out.msrdi, &a.out.join("msrdi.pgm"))?;
    save(&out.ternary.to_raster(), &a.out.join("ternary.pgm"), 255)?;
    save_binary(&out.change_map, &a.out.join("changemap.pgm"))?;

    let r = &out.report;
    let mut csv = String::from("epoch,loss\n");
    for (e, l) in r.cwnn_loss.iter().enumerate() {
        csv.push_str(&format!("{},{l}\n", e + 1));
    }
    write(&a.out.join("cwnn_loss.csv"), csv)?;
    if let Some(t) = &r.gan {
        let mut csv = String::from("step,d_loss\n");
        for (s, l) in t.pretrain_d_loss.iter().enumerate() {
            csv.push_str(&format!("{},{l}\n", s + 1));
        }
        write(&a.out.join("gan_pretrain.csv"), csv)?;
        let mut csv = String::from("epoch,d_loss,g_loss,minimax\n");
        for (s, ((d, g), m)) in t.d_loss.iter().zip(&t.g_loss).zip(&t.minimax).enumerate() {
            csv.push_str(&format!("{},{d},{g},{m}\n", s + 1));
        }
        write(&a.out.join("gan_loss.csv"), csv)?;
    }

    let metrics = score(&out.change_map, a.reference.as_ref())?;
    write_json(&a.out.join("report.json"), &DetectFile { report: r, msrdi_range, metrics })?;
    println!(
        "{} changed, {} unchanged, {} hard pixels; {} pixels marked changed",
        r.n1, r.n2, r.n_h, r.changed_pixels
    );
    if let Some(m) = metrics {
        println!("PCC {:.2}%  KC {:.2}%  F1 {:.2}%", m.pcc, m.kc, m.f1);
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct DiFile {
    method: DiMethod,
    threshold: f64,
    di_range: [f64; 2],
    changed_pixels: usize,
    metrics: Option<Metrics>,
}

fn cmd_di(a: &DiArgs) -> Result<ExitCode, CliError> {
    let cfg = a.pipeline.resolve()?;
    let (i1, i2) = load_pair(&a.image1, &a.image2)?;
    let out = run_di(&i1, &i2, a.method, &cfg, None)?;
    create_dir(&a.out)?;
    let di_range = save_stretched(&out.di, &a.out.join("di.pgm"))?;
    save_binary(&out.binary, &a.out.join("otsu.pgm"))?;
    let metrics = score(&out.binary, a.reference.as_ref())?;
    let changed_pixels = out.binary.as_slice().iter().filter(|&&v| v != 0.0).count();
    write_json(&a.out.join("di.json"), &DiFile { method: a.method, threshold: out.threshold, di_range, changed_pixels, metrics })?;
    println!("threshold {}; {changed_pixels} pixels above it", out.threshold);
    if let Some(m) = metrics {
        println!("PCC {:.2}%  KC {:.2}%  F1 {:.2}%", m.pcc, m.kc, m.f1);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(a: &EvalArgs) -> Result<ExitCode, CliError> {
    let counts = match (&a.counts, &a.changemap, &a.reference) {
        (Some(c), _, _) => *c,
        (None, Some(map), Some(reference)) => {
            let (m, r) = (load(map)?, load(reference)?);
            confusion(&m, &r).map_err(|e| CliError::Usage(e.to_string()))?
        }
        _ => return Err(CliError::Usage("give a change map and a reference, or --counts".into())),
    };
    let report = metrics(&counts)?.to_percent_report();
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Usage(e.to_string()))?;
    println!("{text}");
    if let Some(path) = &a.out {
        write_json(path, &report)?;
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct GradcheckFile {
    cwnn: GradReport,
    discriminator: GradReport,
    generator: GradReport,
    passed: bool,
}

fn random_patches(n: usize, len: usize, seed: u64) -> Vec<Vec<f64>> {
    // a fixed smooth-ish signal keeps activations away from kinks
    (0..n)
        .map(|k| {
            (0..len)
                .map(|i| {
                    let t = (i as f64 + 1.0) * 0.37 + (k as u64 ^ seed) as f64 * 1.3;
                    (t.sin() * 0.8 + (2.1 * t).cos() * 0.15).clamp(-1.0, 1.0)
                })
                .collect()
        })
        .collect()
}

fn cmd_gradcheck(a: &GradcheckArgs) -> Result<ExitCode, CliError> {
    let opts = GradCheckOptions {
        max_per_tensor: if a.full { None } else { Some(a.per_tensor) },
        seed: a.seed,
        ..GradCheckOptions::default()
    };
    let side = 2 * a.lambda;
    let patches = random_patches(2, side * side, a.seed);
    let refs: Vec<&[f64]> = patches.iter().map(|p| p.as_slice()).collect();

    let mut cwnn = Cwnn::new(CwnnConfig { lambda: a.lambda, ..CwnnConfig::default() }, a.seed)?;
    let cwnn_report = cwnn.grad_check(&refs, &[CHANGED, UNCHANGED], &opts)?;
    let gan = Dcgan::new(DcganConfig { lambda: a.lambda, seed: a.seed, ..DcganConfig::default() })?;
    let (d, g) = gan.grad_check(&refs, a.seed, &opts)?;

    let passed = cwnn_report.passed && d.passed && g.passed;
    for (name, r) in [("cwnn", &cwnn_report), ("discriminator", &d), ("generator", &g)] {
        println!("{name}: max relative error {:.3e} ({})", r.max_rel_error, if r.passed { "pass" } else { "FAIL" });
        for e in &r.entries {
            println!("  {:<24} {:>7} checked {:>5} skipped  {:.3e}", e.name, e.checked, e.skipped, e.max_rel_error);
        }
    }
    let file = GradcheckFile { cwnn: cwnn_report, discriminator: d, generator: g, passed };
    if let Some(path) = &a.out {
        write_json(path, &file)?;
    }
    Ok(if passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
