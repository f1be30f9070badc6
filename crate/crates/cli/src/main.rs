//! `surfsplat`: synthesize test scenes, lift depth maps to surfels, render
//! them at any resolution and evaluate high-resolution consistency.

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::str::FromStr;
use surfsplat_core::image::ImageBuffer;
use surfsplat_core::lift::{self, LiftInputs, LiftOptions};
use surfsplat_core::metrics::{self, MetricsReport, PerceptualHook};
use surfsplat_core::render::{self, RenderSettings};
use surfsplat_core::synth::{self, SynthScene, Texture};
use surfsplat_core::{io, par, Camera, Error, Vec3};

const EXIT_USAGE: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_VALIDATION: u8 = 3;
const THREADS_ENV: &str = "SURFSPLAT_THREADS";

#[derive(Parser, Debug)]
#[command(name = "surfsplat", version, about)]
#[command(
    after_help = "Set SURFSPLAT_THREADS to bound the worker count (speed only; output is identical)."
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Write an analytic scene bundle: depth.pfm, camera.json, image.png, normals.pfm
    Synth(SynthArgs),
    /// Lift a depth map and color image into a surfel scene (PLY)
    Lift(LiftArgs),
    /// Render a scene through a camera, optionally at k× resolution
    Render(RenderArgs),
    /// Score renders against (bicubic-upsampled) ground truth at several scales
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// plane, sphere or corner
    #[arg(long, default_value = "plane")]
    preset: String,
    /// Image size as WIDTHxHEIGHT
    #[arg(long, default_value = "64x64", value_parser = parse_size)]
    size: (u32, u32),
    /// Focal length in pixels [default: image width]
    #[arg(long)]
    focal: Option<f64>,
    /// Plane depth on the optical axis, or crease depth for `corner`
    #[arg(long, default_value_t = 2.0)]
    depth: f64,
    /// Plane slopes dz/dx,dz/dy
    #[arg(long, default_value = "0,0", value_parser = parse_pair, allow_hyphen_values = true)]
    tilt: (f64, f64),
    /// constant:R,G,B | checker:N | gradient
    #[arg(long, default_value = "checker:8")]
    texture: String,
    /// Sphere center x,y,z
    #[arg(long, default_value = "0,0,3", value_parser = parse_triple, allow_hyphen_values = true)]
    center: [f64; 3],
    /// Sphere radius
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    /// Crease column for `corner` [default: width / 2]
    #[arg(long)]
    crease_column: Option<u32>,
    /// Angle between the two corner normals, degrees
    #[arg(long, default_value_t = 90.0)]
    angle: f64,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Overwrite existing files
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct LiftArgs {
    /// Depth map (1-channel PFM; non-positive values are masked)
    #[arg(long)]
    depth: PathBuf,
    /// Camera descriptor (JSON)
    #[arg(long)]
    camera: PathBuf,
    /// Color image (PNG) matching the depth map
    #[arg(long)]
    image: PathBuf,
    /// Scale multipliers: a constant, or a PFM (1 channel isotropic, 3 channels u,v,-) [default: 1]
    #[arg(long)]
    multipliers: Option<String>,
    /// Opacity: a constant in [0,1] or a 1-channel PFM [default: 1]
    #[arg(long)]
    opacity: Option<String>,
    /// Cap each scale at this multiple of its 5×5 median coarse scale (off by default)
    #[arg(long)]
    max_scale: Option<f64>,
    /// Below this |t1 × t2| a pixel falls back to a fronto-parallel normal
    #[arg(long, default_value_t = lift::DEFAULT_EPS_DEGENERATE)]
    eps_degenerate: f64,
    /// Lower bound on coarse scales
    #[arg(long, default_value_t = lift::DEFAULT_EPS_SCALE)]
    eps_scale: f64,
    /// Replace surface-aligned rotations and scales with identity rotations
    /// and isotropic 0.3-pixel footprints
    #[arg(long)]
    ablate_point_surfels: bool,
    /// Output scene (.ply)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SettingsArgs {
    /// Opacity clip; 1.0 disables forced alpha blending
    #[arg(long, default_value_t = render::DEFAULT_TAU_OPA)]
    tau_opa: f64,
    /// Alpha-normalization threshold (0.1 reproduces training behaviour)
    #[arg(long, default_value_t = render::EVAL_TAU_ALPHA)]
    tau_alpha: f64,
    /// Gaussian support in standard deviations
    #[arg(long, default_value_t = 3.0)]
    sigma_cutoff: f64,
    /// Screen-space low-pass standard deviation in pixels
    #[arg(long, default_value_t = 0.3)]
    lowpass: f64,
    /// Tile edge in pixels
    #[arg(long, default_value_t = 16)]
    tile_size: u32,
    /// Background color r,g,b
    #[arg(long, default_value = "0,0,0", value_parser = parse_triple)]
    background: [f64; 3],
    /// Stop compositing below this transmittance
    #[arg(long, default_value_t = 1e-4)]
    transmittance_floor: f64,
    /// Highest SH degree evaluated
    #[arg(long, default_value_t = 3)]
    sh_degree: u8,
    /// Surfels closer than this are culled
    #[arg(long, default_value_t = 1e-4)]
    znear: f64,
}

impl SettingsArgs {
    fn settings(&self) -> Result<RenderSettings, Error> {
        let s = RenderSettings {
            tau_opa: self.tau_opa,
            tau_alpha: self.tau_alpha,
            sigma_cutoff: self.sigma_cutoff,
            lowpass_px: self.lowpass,
            tile_size: self.tile_size,
            background: self.background,
            transmittance_floor: self.transmittance_floor,
            sh_degree_used: self.sh_degree,
            znear: self.znear,
        };
        s.validate()?;
        Ok(s)
    }
}

#[derive(Args, Debug)]
struct RenderArgs {
    /// Surfel scene (PLY)
    #[arg(long)]
    scene: PathBuf,
    /// Camera descriptor (JSON) at base resolution
    #[arg(long)]
    camera: PathBuf,
    /// Resolution multiplier; must give integral image sizes
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[command(flatten)]
    settings: SettingsArgs,
    /// Color PNG
    #[arg(long)]
    out: PathBuf,
    /// Alpha-weighted depth PFM
    #[arg(long)]
    depth_out: Option<PathBuf>,
    /// Accumulated alpha PFM
    #[arg(long)]
    alpha_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Surfel scene (PLY)
    #[arg(long)]
    scene: PathBuf,
    /// Camera descriptors, comma-separated or repeated
    #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
    cameras: Vec<PathBuf>,
    /// Ground-truth PNGs in camera order
    #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
    gt: Vec<PathBuf>,
    /// Integer resolution multipliers
    #[arg(long, default_value = "1,2,4", value_delimiter = ',')]
    scales: Vec<u32>,
    #[command(flatten)]
    settings: SettingsArgs,
    /// Report file
    #[arg(long)]
    report: PathBuf,
    /// Perceptual metric command; run as `<cmd> <rendered.png> <reference.png>`,
    /// must print one number
    #[arg(long)]
    perceptual_cmd: Option<String>,
}

fn parse_size(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got `{s}`"))?;
    let w = w.trim().parse().map_err(|_| format!("bad width `{w}`"))?;
    let h = h.trim().parse().map_err(|_| format!("bad height `{h}`"))?;
    Ok((w, h))
}

fn parse_floats<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| format!("bad number `{p}`"))
        })
        .collect::<Result<_, _>>()?;
    v.try_into()
        .map_err(|_| format!("expected {N} comma-separated numbers, got `{s}`"))
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    parse_floats::<2>(s).map(|[a, b]| (a, b))
}

fn parse_triple(s: &str) -> Result<[f64; 3], String> {
    parse_floats::<3>(s)
}

/// Errors detected by the CLI itself that are the caller's fault.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return if e.is_io() { EXIT_IO } else { EXIT_VALIDATION };
        }
        if cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
    }
    EXIT_VALIDATION
}

fn worker_count() -> anyhow::Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v.trim().parse::<usize>().map_err(|_| {
            usage(format!(
                "{THREADS_ENV} must be a non-negative integer, got `{v}`"
            ))
        }),
        _ => Ok(0),
    }
}

fn build_synth(a: &SynthArgs) -> anyhow::Result<SynthScene> {
    let (w, h) = a.size;
    let focal = a.focal.unwrap_or(w as f64);
    let texture = Texture::from_str(&a.texture).map_err(|e| usage(e.to_string()))?;
    let scene = match a.preset.as_str() {
        "plane" => synth::synth_plane(w, h, focal, a.depth, a.tilt, texture)?,
        "sphere" => synth::synth_sphere(w, h, focal, Vec3::from(a.center), a.radius, texture)?,
        "corner" => synth::synth_corner(
            w,
            h,
            focal,
            a.depth,
            a.crease_column.unwrap_or(w / 2),
            a.angle,
            texture,
        )?,
        other => {
            return Err(usage(format!(
                "unknown preset `{other}` (expected plane, sphere or corner)"
            )))
        }
    };
    Ok(scene)
}

fn cmd_synth(a: &SynthArgs) -> anyhow::Result<()> {
    let scene = build_synth(a)?;
    let files = io::write_synth_bundle(&scene, &a.out, a.force)?;
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

/// A constant or a PFM path.
enum Grid {
    Constant(f64),
    Map(ImageBuffer),
}

fn read_grid(arg: &str) -> anyhow::Result<Grid> {
    if let Ok(v) = arg.parse::<f64>() {
        return Ok(Grid::Constant(v));
    }
    let img = io::read_pfm(Path::new(arg)).with_context(|| format!("reading {arg}"))?;
    Ok(Grid::Map(img))
}

fn check_grid_size(img: &ImageBuffer, w: u32, h: u32, what: &str) -> Result<(), Error> {
    if img.width != w || img.height != h {
        return Err(Error::ShapeMismatch(format!(
            "{what} map is {}x{}, depth is {w}x{h}",
            img.width, img.height
        )));
    }
    Ok(())
}

fn cmd_lift(a: &LiftArgs) -> anyhow::Result<()> {
    let depth = io::read_depth_pfm(&a.depth)?;
    let camera = io::read_camera(&a.camera)?;
    let image = io::read_png(&a.image)?;
    let image = match image.channels {
        3 => image,
        4 => ImageBuffer::from_fn(image.width, image.height, 3, |x, y, c| image.get(x, y, c)),
        1 => ImageBuffer::from_fn(image.width, image.height, 3, |x, y, _| image.get(x, y, 0)),
        c => return Err(Error::Unsupported(format!("{c}-channel image")).into()),
    };
    let (w, h) = (depth.width, depth.height);
    let n = w as usize * h as usize;
    let mut inputs = LiftInputs::new(depth, camera, image);
    if let Some(m) = &a.multipliers {
        inputs.multipliers = Some(match read_grid(m)? {
            Grid::Constant(v) => vec![[v, v]; n],
            Grid::Map(img) => {
                check_grid_size(&img, w, h, "multiplier")?;
                match img.channels {
                    1 => img.data.iter().map(|&v| [v, v]).collect(),
                    _ => img.data.chunks(3).map(|p| [p[0], p[1]]).collect(),
                }
            }
        });
    }
    if let Some(o) = &a.opacity {
        inputs.opacities = Some(match read_grid(o)? {
            Grid::Constant(v) => vec![v; n],
            Grid::Map(img) => {
                check_grid_size(&img, w, h, "opacity")?;
                if img.channels != 1 {
                    return Err(
                        Error::ShapeMismatch("opacity map must have one channel".into()).into(),
                    );
                }
                img.data
            }
        });
    }
    if let Some(cap) = a.max_scale {
        if cap.is_nan() || cap <= 0.0 {
            return Err(usage(format!("--max-scale must be positive, got {cap}")));
        }
    }

    let scene = if a.ablate_point_surfels {
        let scene = lift::ablate_point_surfels(&inputs)?;
        info!("point-surfel ablation: {} surfels", scene.len());
        scene
    } else {
        let options = LiftOptions {
            eps_degenerate: a.eps_degenerate,
            eps_scale: a.eps_scale,
            scale_cap: a.max_scale,
        };
        let out = lift::lift_scene_with(&inputs, &options)?;
        info!(
            "{} surfels, {} degenerate pixels",
            out.scene.len(),
            out.degenerate_count()
        );
        out.scene
    };
    let mut scales: Vec<f32> = scene.surfels.iter().flat_map(|s| s.scale).collect();
    scales.sort_by(f32::total_cmp);
    if let (Some(min), Some(max)) = (scales.first(), scales.last()) {
        info!(
            "scales: min {min:e} median {:e} max {max:e}",
            scales[scales.len() / 2]
        );
    }
    io::write_scene(&a.out, &scene)?;
    println!("wrote {} ({} surfels)", a.out.display(), scene.len());
    Ok(())
}

fn cmd_render(a: &RenderArgs) -> anyhow::Result<()> {
    let settings = a.settings.settings()?;
    let scene = io::read_scene(&a.scene)?;
    let camera = io::read_camera(&a.camera)?.scaled(a.scale)?;
    let out = render::render(&scene, &camera, &settings)?;
    io::write_png(&a.out, &out.color)?;
    println!(
        "wrote {} ({}x{})",
        a.out.display(),
        camera.width,
        camera.height
    );
    if let Some(p) = &a.depth_out {
        io::write_pfm(p, &out.depth)?;
        println!("wrote {}", p.display());
    }
    if let Some(p) = &a.alpha_out {
        io::write_pfm(p, &out.alpha)?;
        println!("wrote {}", p.display());
    }
    Ok(())
}

/// Runs `cmd` through the shell with two image paths appended and parses
/// the first number it prints.
fn perceptual_hook(cmd: String) -> anyhow::Result<PerceptualHook> {
    let dir =
        tempfile::tempdir().context("creating scratch directory for the perceptual provider")?;
    let provider = cmd.clone();
    Ok(PerceptualHook::new(provider, move |a, b| {
        let pa = dir.path().join("rendered.png");
        let pb = dir.path().join("reference.png");
        io::write_png(&pa, a).map_err(|e| e.to_string())?;
        io::write_png(&pb, b).map_err(|e| e.to_string())?;
        let out = Command::new("sh")
            .arg("-c")
            .arg(format!("{cmd} \"$1\" \"$2\""))
            .arg("sh")
            .arg(&pa)
            .arg(&pb)
            .output()
            .map_err(|e| format!("could not run `{cmd}`: {e}"))?;
        if !out.status.success() {
            return Err(format!("`{cmd}` exited with {}", out.status));
        }
        let stdout = String::from_utf8_lossy(&out.stdout);
        stdout
            .split_whitespace()
            .next()
            .and_then(|t| t.parse::<f64>().ok())
            .ok_or_else(|| format!("`{cmd}` printed no number"))
    }))
}

fn summary_table(report: &MetricsReport) -> String {
    let cols: Vec<String> = report
        .averages
        .iter()
        .map(|r| format!("{}x{} ({})", r.width, r.height, r.label()))
        .collect();
    let width = cols.iter().map(String::len).max().unwrap_or(0).max(10);
    let mut s = format!("{:<6}", "");
    for c in &cols {
        s.push_str(&format!("  {c:>width$}"));
    }
    s.push('\n');
    let mut line = |name: &str, f: &dyn Fn(&metrics::MetricsRow) -> String| {
        s.push_str(&format!("{name:<6}"));
        for r in &report.averages {
            s.push_str(&format!("  {:>width$}", f(r)));
        }
        s.push('\n');
    };
    line("PSNR", &|r| format!("{:.3}", r.psnr));
    line("SSIM", &|r| format!("{:.4}", r.ssim));
    line("LPIPS", &|r| {
        r.lpips.map_or("-".into(), |v| format!("{v:.4}"))
    });
    s
}

fn cmd_eval(a: &EvalArgs) -> anyhow::Result<()> {
    if a.cameras.len() != a.gt.len() {
        return Err(usage(format!(
            "{} cameras but {} ground-truth images",
            a.cameras.len(),
            a.gt.len()
        )));
    }
    if a.scales.is_empty() || a.scales.contains(&0) {
        return Err(usage("--scales must be positive integers"));
    }
    let settings = a.settings.settings()?;
    let scene = io::read_scene(&a.scene)?;
    let cameras: Vec<Camera> = a
        .cameras
        .iter()
        .map(|p| io::read_camera(p))
        .collect::<Result<_, _>>()?;
    let gt: Vec<ImageBuffer> =
        a.gt.iter()
            .map(|p| {
                let img = io::read_png(p)?;
                Ok::<_, Error>(if img.channels == 3 {
                    img
                } else {
                    ImageBuffer::from_fn(img.width, img.height, 3, |x, y, c| {
                        img.get(x, y, c.min(img.channels - 1))
                    })
                })
            })
            .collect::<Result<_, _>>()?;
    let hook = a.perceptual_cmd.clone().map(perceptual_hook).transpose()?;
    let report = metrics::hrrc_eval(&scene, &cameras, &gt, &a.scales, &settings, hook.as_ref())?;
    if report
        .rows
        .iter()
        .any(|r| r.flags.iter().any(|f| f == metrics::FLAG_PERCEPTUAL_FAILED))
    {
        warn!("perceptual provider failed for some rows; their lpips values are null");
    }
    io::write_report(&a.report, &report)?;
    print!("{}", summary_table(&report));
    println!("wrote {}", a.report.display());
    Ok(())
}

/// The context chain down to the first library error, whose message
/// already includes its own cause.
fn describe(err: &anyhow::Error) -> String {
    let mut parts = Vec::new();
    for cause in err.chain() {
        parts.push(cause.to_string());
        if cause.is::<Error>() {
            break;
        }
    }
    parts.join(": ")
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let workers = worker_count()?;
    par::with_workers(workers, || match &cli.command {
        Cmd::Synth(a) => cmd_synth(a),
        Cmd::Lift(a) => cmd_lift(a),
        Cmd::Render(a) => cmd_render(a),
        Cmd::Eval(a) => cmd_eval(a),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
