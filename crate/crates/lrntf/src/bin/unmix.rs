//! Command-line front end: scene generation, solving, evaluation, rank
//! analysis, and full experiment runs.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lrntf::error::Error;
use lrntf::experiment::{
    preset, run_experiment, ExperimentConfig, OutputConfig, SceneConfig, PRESET_NAMES,
};
use lrntf::fcls::FclsConfig;
use lrntf::metrics::{self, EnergyMode};
use lrntf::solver::{Projection, SolverConfig};
use lrntf::synth::{self, MixKind, SynthConfig};
use lrntf::tensor::Mat;
use lrntf::io;

#[derive(Parser)]
#[command(
    name = "unmix",
    about = "Nonlinear hyperspectral unmixing with nuclear-norm regularized abundance maps",
    long_about = "Nonlinear hyperspectral unmixing: a bilinear mixing model solved by ADMM \
                  with singular-value-thresholding steps on every abundance and interaction \
                  map, initialized by fully constrained least squares.\n\n\
                  Presets (for `run --preset`):\n  \
                  image1  bilinear scene,        100x100x224, R=6, SNR 30 dB\n  \
                  image2  post-nonlinear scene,  100x100x224, R=6, SNR 30 dB\n  \
                  image3  half bilinear / half post-nonlinear, same geometry"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene and write its cubes and ground truth.
    Gen(GenArgs),
    /// Unmix a cube from disk with the full pipeline.
    Solve(SolveArgs),
    /// Compare cubes: abundance RMSE and/or reconstruction metrics.
    Eval(EvalArgs),
    /// Singular-spectrum analysis of the slices of a cube.
    Rank(RankArgs),
    /// Run a full experiment from a config file or preset.
    Run(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MixArg {
    Gbm,
    Ppnm,
    Half,
}

impl From<MixArg> for MixKind {
    fn from(m: MixArg) -> Self {
        match m {
            MixArg::Gbm => MixKind::Gbm,
            MixArg::Ppnm => MixKind::Ppnm,
            MixArg::Half => MixKind::Half,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ProjectionArg {
    Abs,
    Clamp,
}

impl From<ProjectionArg> for Projection {
    fn from(p: ProjectionArg) -> Self {
        match p {
            ProjectionArg::Abs => Projection::Abs,
            ProjectionArg::Clamp => Projection::Clamp,
        }
    }
}

#[derive(Args)]
struct SceneArgs {
    /// Block grid parameter; the image is s^2 x s^2 pixels.
    #[arg(long, default_value_t = 10)]
    s: usize,
    /// Low-pass filter side (odd).
    #[arg(long, default_value_t = 9)]
    k: usize,
    /// Number of endmembers taken from the library.
    #[arg(long, default_value_t = 6)]
    r: usize,
    /// Purity threshold above which a pixel is flattened to uniform.
    #[arg(long, default_value_t = 0.8)]
    purity_cap: f64,
    /// Forward model.
    #[arg(long, value_enum, default_value = "gbm")]
    mix: MixArg,
    /// Post-nonlinear coefficient.
    #[arg(long, default_value_t = 0.25)]
    ppnm_b: f64,
    /// Target SNR in dB; omit for a noise-free scene.
    #[arg(long)]
    snr_db: Option<f64>,
    /// Seed for all scene randomness.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Spectral library CSV; the built-in library when omitted.
    #[arg(long)]
    library: Option<PathBuf>,
}

impl SceneArgs {
    fn to_config(&self) -> (SynthConfig, Option<PathBuf>) {
        (
            SynthConfig {
                s: self.s,
                k: self.k,
                r: self.r,
                purity_cap: self.purity_cap,
                mix_kind: self.mix.into(),
                ppnm_b: self.ppnm_b,
                snr_db: self.snr_db,
                seed: self.seed,
            },
            self.library.clone(),
        )
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    scene: SceneArgs,
    /// Directory for scene.cube, clean.cube, a_true.cube, b_true.cube,
    /// endmembers.csv and scene.json.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SolverArgs {
    /// Nuclear-norm weight on abundance maps.
    #[arg(long, default_value_t = 0.1)]
    lambda1: f64,
    /// Nuclear-norm weight on interaction maps.
    #[arg(long, default_value_t = 0.07)]
    lambda2: f64,
    /// ADMM penalty parameter.
    #[arg(long, default_value_t = 8e-3)]
    mu: f64,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    /// Relative reconstruction-error change that stops the iteration.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Elementwise projection for fresh slices.
    #[arg(long, value_enum, default_value = "clamp")]
    projection: ProjectionArg,
}

impl SolverArgs {
    fn to_config(&self) -> SolverConfig {
        SolverConfig {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            mu: self.mu,
            max_iter: self.max_iter,
            tol: self.tol,
            projection: self.projection.into(),
            record_trace: true,
        }
    }
}

#[derive(Args)]
struct EmitArgs {
    /// Write one PGM per abundance map.
    #[arg(long, default_value_t = true)]
    abundance_maps: bool,
    /// Write one PGM per interaction abundance map.
    #[arg(long, default_value_t = false)]
    interaction_maps: bool,
    /// Write the per-pixel reconstruction-error map.
    #[arg(long, default_value_t = true)]
    error_map: bool,
    /// Write the per-iteration trace CSV.
    #[arg(long, default_value_t = true)]
    trace: bool,
    /// Write per-slice singular-spectrum profiles.
    #[arg(long, default_value_t = false)]
    rank_profiles: bool,
}

impl EmitArgs {
    fn to_config(&self, dir: PathBuf) -> OutputConfig {
        OutputConfig {
            dir,
            abundance_maps: self.abundance_maps,
            interaction_maps: self.interaction_maps,
            error_map: self.error_map,
            trace: self.trace,
            rank_profiles: self.rank_profiles,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Observed cube (raw payload with JSON sidecar).
    #[arg(long)]
    cube: PathBuf,
    /// Endmember spectra CSV.
    #[arg(long)]
    endmembers: PathBuf,
    /// Ground-truth abundance cube for RMSE reporting.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    emit: EmitArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Ground-truth abundance cube.
    #[arg(long, requires = "est")]
    truth: Option<PathBuf>,
    /// Estimated abundance cube.
    #[arg(long, requires = "truth")]
    est: Option<PathBuf>,
    /// Observed spectral cube.
    #[arg(long, requires = "recon")]
    observed: Option<PathBuf>,
    /// Reconstructed spectral cube.
    #[arg(long, requires = "observed")]
    recon: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum EnergyArg {
    Sigma,
    SigmaSq,
}

#[derive(Args)]
struct RankArgs {
    /// Cube whose frontal slices are analyzed.
    #[arg(long)]
    cube: PathBuf,
    /// Cumulative-energy level defining the reported dimension.
    #[arg(long, default_value_t = 0.95)]
    energy: f64,
    /// Accumulate raw or squared singular values.
    #[arg(long, value_enum, default_value = "sigma")]
    mode: EnergyArg,
    /// Write the profiles to this JSON file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config TOML.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in scenario: image1, image2 or image3.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Override the output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Override the scene seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the scene SNR in dB.
    #[arg(long)]
    snr_db: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Rank(args) => cmd_rank(args),
        Command::Run(args) => cmd_run(args),
    }
}

fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn cmd_gen(args: GenArgs) -> Result<(), Error> {
    let (cfg, library) = args.scene.to_config();
    let (lib, names) = match &library {
        Some(path) => synth::load_spectral_library(path)?,
        None => synth::builtin_library(),
    };
    cfg.validate(lib.cols())?;
    let mut c = Mat::zeros(lib.rows(), cfg.r);
    for k in 0..cfg.r {
        for b in 0..lib.rows() {
            c.set(b, k, lib.get(b, k));
        }
    }
    let ems = lrntf::EndmemberSet::new(c, Some(names[..cfg.r].to_vec()))?;
    let truth = synth::generate_scene(&cfg, &ems)?;

    std::fs::create_dir_all(&args.out_dir).map_err(io_err(&args.out_dir))?;
    io::write_cube(&args.out_dir.join("scene.cube"), &truth.noisy)?;
    io::write_cube(&args.out_dir.join("clean.cube"), &truth.clean)?;
    io::write_cube(&args.out_dir.join("a_true.cube"), &truth.a_true)?;
    io::write_cube(&args.out_dir.join("b_true.cube"), &truth.b_true)?;
    synth::write_spectral_library(&args.out_dir.join("endmembers.csv"), ems.c(), ems.names())?;
    let echo = args.out_dir.join("scene.json");
    std::fs::write(&echo, serde_json::to_string_pretty(&cfg).unwrap()).map_err(io_err(&echo))?;
    println!(
        "wrote {}x{}x{} scene to {}",
        truth.noisy.n_row(),
        truth.noisy.n_col(),
        truth.noisy.depth(),
        args.out_dir.display()
    );
    Ok(())
}

fn cmd_solve(args: SolveArgs) -> Result<(), Error> {
    let cfg = ExperimentConfig {
        scene: SceneConfig::Files {
            cube: args.cube,
            endmembers: args.endmembers,
            truth_abundances: args.truth,
        },
        solver: args.solver.to_config(),
        fcls: FclsConfig::default(),
        outputs: args.emit.to_config(args.out_dir),
    };
    let results = run_experiment(&cfg)?;
    println!("{}", serde_json::to_string_pretty(&results).unwrap());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), Error> {
    let mut report = serde_json::Map::new();
    if let (Some(truth), Some(est)) = (&args.truth, &args.est) {
        let t = io::read_cube(truth)?;
        let e = io::read_cube(est)?;
        report.insert("rmse".into(), metrics::rmse(&t, &e)?.into());
        let per: Vec<f64> = metrics::per_endmember_rmse(&t, &e)?;
        report.insert("per_endmember_rmse".into(), per.into());
    }
    if let (Some(observed), Some(recon)) = (&args.observed, &args.recon) {
        let y = io::read_cube(observed)?;
        let y_hat = io::read_cube(recon)?;
        report.insert("re".into(), metrics::re(&y, &y_hat)?.into());
        let (asam, degenerate) = metrics::asam_with_degenerates(&y, &y_hat)?;
        report.insert("asam".into(), asam.into());
        report.insert("asam_degenerate_pixels".into(), degenerate.into());
    }
    if report.is_empty() {
        return Err(Error::Config(
            "nothing to evaluate: pass --truth/--est and/or --observed/--recon".into(),
        ));
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&serde_json::Value::Object(report)).unwrap()
    );
    Ok(())
}

fn cmd_rank(args: RankArgs) -> Result<(), Error> {
    let cube = io::read_cube(&args.cube)?;
    let mode = match args.mode {
        EnergyArg::Sigma => EnergyMode::Sigma,
        EnergyArg::SigmaSq => EnergyMode::SigmaSq,
    };
    let mut profiles = Vec::new();
    for k in 0..cube.depth() {
        profiles.push(metrics::rank_profile(&cube.slice(k)?, args.energy, mode)?);
    }
    let dims: Vec<usize> = profiles.iter().map(|p| p.dim95).collect();
    let value = serde_json::json!({
        "energy": args.energy,
        "dims": dims,
        "profiles": profiles,
    });
    let text = serde_json::to_string_pretty(&value).unwrap();
    match &args.out {
        Some(path) => std::fs::write(path, text).map_err(io_err(path))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<(), Error> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), None) => ExperimentConfig::load(path)?,
        (None, Some(name)) => preset(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown preset {name:?}; available: {}",
                PRESET_NAMES.join(", ")
            ))
        })?,
        _ => {
            return Err(Error::Config(
                "pass exactly one of --config or --preset".into(),
            ))
        }
    };
    if let Some(dir) = args.out_dir {
        cfg.outputs.dir = dir;
    }
    if let SceneConfig::Synthetic { synth, .. } = &mut cfg.scene {
        if let Some(seed) = args.seed {
            synth.seed = seed;
        }
        if let Some(snr) = args.snr_db {
            synth.snr_db = Some(snr);
        }
    }
    let results = run_experiment(&cfg)?;
    println!("{}", serde_json::to_string_pretty(&results).unwrap());
    Ok(())
}
