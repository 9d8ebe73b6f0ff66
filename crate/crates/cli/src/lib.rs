//! Command-line front end. Subcommands compose through files.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nearfield::analysis::{build_plot_tables, write_plot_data, PlotOptions};
use nearfield::demo::{generate_demo, random_scatterers, DemoOptions, DEMO_RADAR};
use nearfield::format::sig9;
use nearfield::geometry::{align_to_sensor, average_frames, rasterize_mesh_depth, unproject};
use nearfield::imaging::{backproject, db_threshold_filter, max_projection, ConfidenceMap, VoxelGridSpec};
use nearfield::model::io::{
    load_calibration, load_depth_image, load_mask, load_mesh, save_cloud, save_depth_image,
};
use nearfield::pipeline::{
    evaluate_manifest, load_reports, object_analyses, parse_key_values, with_threads, write_results, CaptureManifest,
    PipelineConfig, DEFAULT_THRESHOLD_DB,
};
use nearfield::resolution::{
    amcw_range_res, mimo_cross_range, mimo_range_res, rayleigh_angular, stereo_depth_res, AmcwParams,
    MimoResolutionParams, StereoParams,
};
use nearfield::signal::{
    build_square_array, load_raw_cube, load_scatterers, save_raw_cube, save_scatterers, simulate_fscw, FscwConfig,
    SPEED_OF_LIGHT,
};
use nearfield::{DistanceTag, Vec3};

#[derive(Debug, Parser)]
#[command(name = "nearfield", version, about = "Near-field radar imaging and depth evaluation")]
pub struct Cli {
    /// key = value file supplying defaults for any long flag
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: NEARFIELD_THREADS, else all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for randomized scene generation
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,
    /// Log verbosity (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a raw FSCW radar frame of point scatterers
    Simulate(SimulateArgs),
    /// Backproject a raw frame and take the maximum projection along z
    Backproject(BackprojectArgs),
    /// Drop depth pixels whose confidence is below a dB threshold
    Filter(FilterArgs),
    /// Convert a depth map to a point cloud (.xyz)
    Unproject(UnprojectArgs),
    /// Render a mesh into the image plane of a reference depth map
    Rasterize(RasterizeArgs),
    /// Per-pixel mean of valid samples over frames
    Average(AverageArgs),
    /// Evaluate every capture of a manifest against its ground truth
    Evaluate(EvaluateArgs),
    /// Aggregate evaluation results into plot tables
    Analyze(AnalyzeArgs),
    /// Closed-form spatial resolution
    Resolution(ResolutionArgs),
    /// Write the bundled synthetic scene
    Demo(DemoArgs),
}

fn parse_vec3(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s.split(',').map(|c| c.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    match v.as_slice() {
        [a] => Ok([*a; 3]),
        [a, b, c] => Ok([*a, *b, *c]),
        _ => Err("expected one or three comma-separated numbers".into()),
    }
}

fn parse_dims(s: &str) -> Result<[usize; 3], String> {
    let v: Vec<usize> = s.split(',').map(|c| c.trim().parse::<usize>()).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    match v.as_slice() {
        [a] => Ok([*a; 3]),
        [a, b, c] => Ok([*a, *b, *c]),
        _ => Err("expected one or three comma-separated integers".into()),
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// JSON scatterer list
    #[arg(long, conflicts_with = "random")]
    scene: Option<PathBuf>,
    /// Number of random scatterers (seeded by --seed)
    #[arg(long)]
    random: Option<usize>,
    /// Center of the random-scatterer box
    #[arg(long, value_parser = parse_vec3, default_value = "0,0,0.3", allow_hyphen_values = true)]
    center: [f64; 3],
    /// Half-extent of the random-scatterer box
    #[arg(long, value_parser = parse_vec3, default_value = "0.02")]
    extent: [f64; 3],
    /// Also write the scatterer list used
    #[arg(long)]
    scene_out: Option<PathBuf>,
    /// Antennas per array edge (TX and RX each get 2·n)
    #[arg(long, default_value_t = 4)]
    antennas: usize,
    /// Square aperture side [m]
    #[arg(long, default_value_t = 0.138)]
    aperture: f64,
    #[arg(long, default_value_t = 72e9)]
    fmin: f64,
    #[arg(long, default_value_t = 82e9)]
    fmax: f64,
    #[arg(long, default_value_t = 32)]
    nf: usize,
    /// Apply 1/r free-space spreading per leg
    #[arg(long)]
    spreading: bool,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct BackprojectArgs {
    #[arg(short, long)]
    input: PathBuf,
    /// Center of voxel (0,0,0) [m]
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    origin: [f64; 3],
    /// Voxel pitch [m], one value or x,y,z
    #[arg(long, value_parser = parse_vec3, default_value = "0.001")]
    step: [f64; 3],
    #[arg(long, value_parser = parse_dims, default_value = "301,301,201")]
    dims: [usize; 3],
    /// Depth map output
    #[arg(short, long)]
    output: PathBuf,
    /// Confidence map output (|c_BP| of the selected voxel)
    #[arg(long)]
    confidence: PathBuf,
}

#[derive(Debug, Args)]
struct FilterArgs {
    #[arg(long)]
    depth: PathBuf,
    #[arg(long)]
    confidence: PathBuf,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD_DB, allow_hyphen_values = true)]
    db: f64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct UnprojectArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct RasterizeArgs {
    #[arg(long)]
    mesh: PathBuf,
    /// Depth map whose projection, transform and size are reused
    #[arg(long)]
    like: PathBuf,
    /// GT → sensor calibration applied to the mesh first
    #[arg(long)]
    calibration: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct AverageArgs {
    #[arg(required = true)]
    frames: Vec<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Per-object, per-sensor erosion kernels (JSON)
    #[arg(long)]
    erosion: Option<PathBuf>,
    /// Comma-separated sensor filter
    #[arg(long, value_delimiter = ',')]
    sensors: Vec<String>,
    /// Comma-separated distances in cm
    #[arg(long, value_delimiter = ',')]
    distances: Vec<u32>,
    /// Radar reconstruction grid origin; requires --grid-step and --grid-dims
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true, requires_all = ["grid_step", "grid_dims"])]
    grid_origin: Option<[f64; 3]>,
    #[arg(long, value_parser = parse_vec3)]
    grid_step: Option<[f64; 3]>,
    #[arg(long, value_parser = parse_dims)]
    grid_dims: Option<[usize; 3]>,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD_DB, allow_hyphen_values = true)]
    db: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long)]
    reports: PathBuf,
    /// Capture manifest for material classes, magnitudes and geometry
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value = DEMO_RADAR)]
    radar_sensor: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SensorKind {
    Mimo,
    Stereo,
    Amcw,
    Rayleigh,
}

#[derive(Debug, Args)]
struct ResolutionArgs {
    #[arg(long, value_enum)]
    sensor: SensorKind,
    #[arg(long)]
    fmin: Option<f64>,
    #[arg(long)]
    fmax: Option<f64>,
    /// Aperture side [m]
    #[arg(long = "L")]
    aperture: Option<f64>,
    /// Object distance [m]
    #[arg(long)]
    z: Option<f64>,
    /// Wavelength [m] (rayleigh; alternatively --fmax)
    #[arg(long)]
    wavelength: Option<f64>,
    /// Stereo baseline [m]
    #[arg(long)]
    baseline: Option<f64>,
    /// Focal length [px]
    #[arg(long)]
    focal_px: Option<f64>,
    /// Disparity resolution [px]
    #[arg(long, default_value_t = 1.0)]
    disparity_res: f64,
    /// Modulation frequency [Hz]
    #[arg(long)]
    fm: Option<f64>,
    #[arg(long)]
    p_light: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    p_ambient: f64,
    #[arg(long)]
    area: Option<f64>,
    #[arg(long)]
    k_optics: Option<f64>,
    #[arg(long)]
    quantum_eff: Option<f64>,
    #[arg(long)]
    reflectivity: Option<f64>,
    #[arg(long)]
    integration_time: Option<f64>,
}

#[derive(Debug, Args)]
struct DemoArgs {
    #[arg(long)]
    out: PathBuf,
    /// Sensor frames equal the rasterized ground truth
    #[arg(long)]
    self_compare: bool,
    /// Skip the simulated raw radar frames
    #[arg(long)]
    no_radar_signals: bool,
    /// Uniform depth noise half-width [m]
    #[arg(long, default_value_t = 1e-3)]
    noise: f64,
    #[arg(long, value_delimiter = ',')]
    objects: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    distances: Vec<u32>,
}

fn need(v: Option<f64>, flag: &str) -> anyhow::Result<f64> {
    v.with_context(|| format!("--{flag} is required for this sensor"))
}

fn distance_tags(cm: &[u32]) -> anyhow::Result<Vec<DistanceTag>> {
    cm.iter().map(|&d| DistanceTag::try_from(d).map_err(anyhow::Error::msg)).collect()
}

fn grid(origin: [f64; 3], step: [f64; 3], dims: [usize; 3]) -> anyhow::Result<VoxelGridSpec> {
    Ok(VoxelGridSpec::new(Vec3::from(origin), Vec3::from(step), dims)?)
}

/// Inserts `--key value` for config entries whose flag is not already on
/// the command line. Values `true`/`false` toggle bare flags.
fn apply_config(args: Vec<OsString>, path: &Path) -> anyhow::Result<Vec<OsString>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let present: Vec<String> = args.iter().filter_map(|a| a.to_str()).map(|a| a.split('=').next().unwrap_or(a).to_string()).collect();
    let mut extra = Vec::new();
    for (key, value) in parse_key_values(&text)? {
        let flag = format!("--{}", key.replace('_', "-"));
        if key == "config" || present.contains(&flag) {
            continue;
        }
        match value.as_str() {
            "true" => extra.push(flag.into()),
            "false" => {}
            _ => {
                extra.push(flag.into());
                extra.push(value.into());
            }
        }
    }
    let mut out = args;
    out.extend(extra);
    Ok(out)
}

fn parse(args: Vec<OsString>) -> Result<Cli, clap::Error> {
    Cli::try_parse_from(args)
}

/// Runs the CLI on `args` (including the program name) and returns the exit
/// code: 0 on success, 2 on usage errors, 1 on runtime failures. Errors are
/// reported as a single `error[kind]: message` line on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let usage = |e: clap::Error| {
        if e.use_stderr() {
            let msg = e.to_string();
            let line = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[usage]: {line}");
            2
        } else {
            print!("{e}");
            0
        }
    };
    let mut cli = match parse(args.clone()) {
        Ok(c) => c,
        Err(e) => return usage(e),
    };
    if let Some(path) = cli.config.clone() {
        match apply_config(args, &path) {
            Ok(a) => match parse(a) {
                Ok(c) => cli = c,
                Err(e) => return usage(e),
            },
            Err(e) => {
                eprintln!("error[runtime]: {}", one_line(&e));
                return 1;
            }
        }
    }
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    let threads = cli.threads;
    match with_threads(threads, || execute(&cli)).map_err(anyhow::Error::from).and_then(|r| r) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[runtime]: {}", one_line(&e));
            1
        }
    }
}

/// Error chain joined with ": ", skipping causes already quoted by their parent.
fn one_line(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out.replace('\n', " ")
}

fn execute(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(a, cli.seed),
        Command::Backproject(a) => {
            let cube = load_raw_cube(&a.input)?;
            let volume = backproject(&cube, &grid(a.origin, a.step, a.dims)?)?;
            let (depth, confidence) = max_projection(&volume)?;
            save_depth_image(&a.output, &depth)?;
            save_depth_image(&a.confidence, &confidence.to_image(&depth)?)?;
            Ok(())
        }
        Command::Filter(a) => {
            if !(a.db <= 0.0) {
                bail!("--db must be <= 0");
            }
            let depth = load_depth_image(&a.depth)?;
            let confidence = ConfidenceMap::from_image(&load_depth_image(&a.confidence)?);
            save_depth_image(&a.output, &db_threshold_filter(&depth, &confidence, a.db)?)?;
            Ok(())
        }
        Command::Unproject(a) => {
            let depth = load_depth_image(&a.input)?;
            let mask = a.mask.as_ref().map(load_mask).transpose()?;
            save_cloud(&a.output, &unproject(&depth, mask.as_ref())?)?;
            Ok(())
        }
        Command::Rasterize(a) => {
            let like = load_depth_image(&a.like)?;
            let mut mesh = load_mesh(&a.mesh)?;
            if let Some(k) = &a.calibration {
                mesh = align_to_sensor(&mesh, &load_calibration(k)?);
            }
            let out = rasterize_mesh_depth(&mesh, like.projection(), like.transform(), like.width(), like.height())?;
            save_depth_image(&a.output, &out)?;
            Ok(())
        }
        Command::Average(a) => {
            let frames = a.frames.iter().map(load_depth_image).collect::<Result<Vec<_>, _>>()?;
            save_depth_image(&a.output, &average_frames(&frames)?)?;
            Ok(())
        }
        Command::Evaluate(a) => {
            let mut cfg = PipelineConfig::new(&a.manifest, &a.out);
            cfg.erosion = a.erosion.clone();
            cfg.sensors = a.sensors.clone();
            cfg.distances = distance_tags(&a.distances)?;
            cfg.recon.threshold_db = a.db;
            cfg.threads = cli.threads;
            if let (Some(o), Some(s), Some(d)) = (a.grid_origin, a.grid_step, a.grid_dims) {
                cfg.recon.grid = Some(grid(o, s, d)?);
            }
            let reports = evaluate_manifest(&cfg)?;
            write_results(&reports, &a.out)?;
            println!("evaluated {} captures -> {}", reports.len(), a.out.display());
            Ok(())
        }
        Command::Analyze(a) => {
            let reports = load_reports(&a.reports)?;
            if reports.is_empty() {
                bail!("no reports in {}", a.reports.display());
            }
            let objects = match &a.manifest {
                Some(m) => object_analyses(&CaptureManifest::load(m)?, &a.radar_sensor)?,
                None => Vec::new(),
            };
            let opts = PlotOptions {
                scatter_sensor: a.radar_sensor.clone(),
            };
            write_plot_data(&build_plot_tables(&reports, &objects, &opts), &a.out)?;
            println!("plot data -> {}", a.out.display());
            Ok(())
        }
        Command::Resolution(a) => resolution(a),
        Command::Demo(a) => {
            let mut opts = DemoOptions {
                seed: cli.seed,
                noise_m: a.noise,
                self_compare: a.self_compare,
                radar_signals: !a.no_radar_signals,
                ..DemoOptions::default()
            };
            if !a.objects.is_empty() {
                opts.objects = a.objects.clone();
            }
            if !a.distances.is_empty() {
                opts.distances = distance_tags(&a.distances)?;
            }
            let manifest = generate_demo(&a.out, &opts)?;
            println!("{}", manifest.display());
            Ok(())
        }
    }
}

fn simulate(a: &SimulateArgs, seed: u64) -> anyhow::Result<()> {
    let scene = match (&a.scene, a.random) {
        (Some(p), _) => load_scatterers(p)?,
        (None, Some(n)) => random_scatterers(n, seed, Vec3::from(a.center), Vec3::from(a.extent))?,
        (None, None) => bail!("one of --scene or --random is required"),
    };
    if let Some(p) = &a.scene_out {
        save_scatterers(p, &scene)?;
    }
    let array = build_square_array(a.aperture, a.antennas)?;
    let config = FscwConfig::new(a.fmin, a.fmax, a.nf)?;
    save_raw_cube(&a.output, &simulate_fscw(&scene, &array, &config, a.spreading)?)?;
    Ok(())
}

fn mm(label: &str, meters: f64) {
    println!("{label}_mm={}", sig9(meters * 1e3));
}

fn resolution(a: &ResolutionArgs) -> anyhow::Result<()> {
    match a.sensor {
        SensorKind::Mimo => {
            let p = MimoResolutionParams::new(
                need(a.fmin, "fmin")?,
                need(a.fmax, "fmax")?,
                need(a.aperture, "L")?,
                need(a.z, "z")?,
            )?;
            let xy = mimo_cross_range(&p);
            mm("delta_x", xy);
            mm("delta_y", xy);
            mm("delta_z", mimo_range_res(&p));
        }
        SensorKind::Stereo => {
            let p = StereoParams::new(need(a.baseline, "baseline")?, need(a.focal_px, "focal-px")?, a.disparity_res)?;
            mm("delta_z", stereo_depth_res(&p, need(a.z, "z")?));
        }
        SensorKind::Amcw => {
            let p = AmcwParams {
                f_m: need(a.fm, "fm")?,
                p_light: need(a.p_light, "p-light")?,
                p_ambient: a.p_ambient,
                area: need(a.area, "area")?,
                k_optics: need(a.k_optics, "k-optics")?,
                quantum_eff: need(a.quantum_eff, "quantum-eff")?,
                reflectivity: need(a.reflectivity, "reflectivity")?,
                integration_time: need(a.integration_time, "integration-time")?,
            };
            mm("delta_z", amcw_range_res(&p)?);
        }
        SensorKind::Rayleigh => {
            let wavelength = match (a.wavelength, a.fmax) {
                (Some(w), _) => w,
                (None, Some(f)) => SPEED_OF_LIGHT / f,
                (None, None) => bail!("--wavelength or --fmax is required for this sensor"),
            };
            let omega = rayleigh_angular(wavelength, need(a.aperture, "L")?)?;
            println!("omega_rad={}", sig9(omega));
            println!("omega_deg={}", sig9(omega.to_degrees()));
            if let Some(z) = a.z {
                mm("delta_xy", omega * z);
            }
        }
    }
    Ok(())
}
