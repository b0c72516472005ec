//! Experiment configuration and the end-to-end unmixing pipeline.
//!
//! One experiment = scene (generated or loaded) -> endmembers ->
//! interactions -> least-squares initialization -> solver -> feasibility
//! projection of the output -> metrics -> artifacts. The whole run is
//! described by an [`ExperimentConfig`] (TOML on disk) whose echo lands in
//! the results JSON, so a results file is enough to reproduce its run; all
//! randomness flows from the scene seed.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fcls::{fcls_cube, FclsConfig};
use crate::gbm::{forward, AbundanceState, EndmemberSet};
use crate::io;
use crate::metrics::{self, EnergyMode, MetricsReport, RankProfile};
use crate::solver::{self, SolverConfig};
use crate::synth::{self, SynthConfig};
use crate::tensor::{Mat, Tensor3};

/// Where the observed cube comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SceneConfig {
    /// Generate a scene; endmembers come from `library` (a spectral CSV) or
    /// the built-in library when omitted. The first `r` columns are used.
    Synthetic {
        #[serde(flatten)]
        synth: SynthConfig,
        #[serde(default)]
        library: Option<PathBuf>,
    },
    /// Load an observed cube and its endmember CSV from disk.
    Files {
        cube: PathBuf,
        endmembers: PathBuf,
        /// Optional ground-truth abundance cube for RMSE reporting.
        #[serde(default)]
        truth_abundances: Option<PathBuf>,
    },
}

/// Which artifacts the run writes next to results.json.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub abundance_maps: bool,
    pub interaction_maps: bool,
    pub error_map: bool,
    pub trace: bool,
    pub rank_profiles: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            abundance_maps: true,
            interaction_maps: false,
            error_map: true,
            trace: true,
            rank_profiles: false,
        }
    }
}

/// Full description of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scene: SceneConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub fcls: FclsConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
}

impl ExperimentConfig {
    /// Parse a TOML config (pure; no filesystem access).
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse {
            path: "<config>".into(),
            detail: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load a TOML config file and check that referenced paths exist.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cfg = Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse { detail, .. } => Error::Parse {
                path: path.display().to_string(),
                detail,
            },
            other => other,
        })?;
        cfg.validate_paths()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialization cannot fail")
    }

    /// Value-level validation (no filesystem access).
    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        self.fcls.validate()?;
        if let SceneConfig::Synthetic { synth, .. } = &self.scene {
            // library size checked again at load; here against the builtin
            if synth.library_free_validate().is_err() {
                synth.library_free_validate()?;
            }
        }
        Ok(())
    }

    /// Check that every referenced input path exists.
    pub fn validate_paths(&self) -> Result<()> {
        let check = |p: &PathBuf| -> Result<()> {
            if !p.exists() {
                return Err(Error::Config(format!(
                    "referenced path does not exist: {}",
                    p.display()
                )));
            }
            Ok(())
        };
        match &self.scene {
            SceneConfig::Synthetic { library, .. } => {
                if let Some(lib) = library {
                    check(lib)?;
                }
            }
            SceneConfig::Files {
                cube,
                endmembers,
                truth_abundances,
            } => {
                check(cube)?;
                check(endmembers)?;
                if let Some(t) = truth_abundances {
                    check(t)?;
                }
            }
        }
        Ok(())
    }
}

/// The three synthetic scenarios used throughout: a bilinear scene, a
/// post-nonlinear scene, and a half/half mixture, each 100x100 at 30 dB.
pub const PRESET_NAMES: [&str; 3] = ["image1", "image2", "image3"];

/// Build a named preset config, or `None` for an unknown name.
pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let mix = match name {
        "image1" => synth::MixKind::Gbm,
        "image2" => synth::MixKind::Ppnm,
        "image3" => synth::MixKind::Half,
        _ => return None,
    };
    Some(ExperimentConfig {
        scene: SceneConfig::Synthetic {
            synth: SynthConfig {
                s: 10,
                k: 9,
                r: 6,
                mix_kind: mix,
                snr_db: Some(30.0),
                seed: 7,
                ..SynthConfig::default()
            },
            library: None,
        },
        solver: SolverConfig::default(),
        fcls: FclsConfig::default(),
        outputs: OutputConfig::default(),
    })
}

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

/// Baseline metrics from the least-squares initializer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FclsSummary {
    pub rmse: Option<f64>,
    pub re: f64,
}

/// Machine-readable record of one run; `config` is a full echo.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub config: ExperimentConfig,
    pub metrics: MetricsReport,
    pub fcls: FclsSummary,
    pub iterations: usize,
    pub stopped_early: bool,
    pub wall_time_seconds: f64,
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

struct SceneData {
    y: Tensor3,
    ems: EndmemberSet,
    truth_a: Option<Tensor3>,
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

/// Run the full pipeline. Artifacts written this run are removed again if a
/// later stage fails, so an output directory never holds a partial run.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResults> {
    let started = Instant::now();
    stage("config", cfg.validate().and_then(|_| cfg.validate_paths()))?;
    stage(
        "config",
        std::fs::create_dir_all(&cfg.outputs.dir).map_err(|source| Error::Io {
            path: cfg.outputs.dir.display().to_string(),
            source,
        }),
    )?;
    let mut written: Vec<PathBuf> = Vec::new();
    match run_pipeline(cfg, started, &mut written) {
        Ok(results) => Ok(results),
        Err(e) => {
            for p in &written {
                let _ = std::fs::remove_file(p);
            }
            Err(e)
        }
    }
}

fn run_pipeline(
    cfg: &ExperimentConfig,
    started: Instant,
    written: &mut Vec<PathBuf>,
) -> Result<ExperimentResults> {
    let SceneData { y, ems, truth_a } = stage("scene", load_scene(&cfg.scene))?;

    let init_a = stage("fcls", fcls_cube(&y, ems.c(), &cfg.fcls))?;
    let fcls_summary = FclsSummary {
        rmse: match &truth_a {
            Some(t) => Some(stage("fcls", metrics::rmse(t, &init_a))?),
            None => None,
        },
        re: {
            let lmm = stage("fcls", init_a.mode3_product(ems.c()))?;
            stage("fcls", metrics::re(&y, &lmm))?
        },
    };
    let init = stage(
        "fcls",
        AbundanceState::new(
            init_a,
            Tensor3::zeros(y.n_row(), y.n_col(), ems.n_pairs()),
        ),
    )?;

    let (state, trace) = stage(
        "solve",
        solver::solve_admm(&y, &ems, &cfg.solver, &init, truth_a.as_ref()),
    )?;
    let stopped_early = trace.iterations() < cfg.solver.max_iter;
    let mut estimate = state.abundances();
    stage("solve", solver::finalize_abundances(&mut estimate, &ems))?;

    let recon = stage("metrics", forward(&estimate, &ems))?;
    let (asam_value, degenerate) = stage("metrics", metrics::asam_with_degenerates(&y, &recon))?;
    let report = MetricsReport {
        rmse: match &truth_a {
            Some(t) => Some(stage("metrics", metrics::rmse(t, &estimate.a))?),
            None => None,
        },
        per_endmember_rmse: match &truth_a {
            Some(t) => Some(stage("metrics", metrics::per_endmember_rmse(t, &estimate.a))?),
            None => None,
        },
        re: stage("metrics", metrics::re(&y, &recon))?,
        asam: asam_value,
        asam_degenerate_pixels: degenerate,
    };

    let results = ExperimentResults {
        config: cfg.clone(),
        metrics: report,
        fcls: fcls_summary,
        iterations: trace.iterations(),
        stopped_early,
        wall_time_seconds: started.elapsed().as_secs_f64(),
    };
    stage(
        "emit",
        emit_artifacts(cfg, &y, &ems, &estimate, &recon, &trace, &results, written),
    )?;
    Ok(results)
}

fn load_scene(scene: &SceneConfig) -> Result<SceneData> {
    match scene {
        SceneConfig::Synthetic { synth, library } => {
            let (lib, names) = match library {
                Some(path) => synth::load_spectral_library(path)?,
                None => synth::builtin_library(),
            };
            synth.validate(lib.cols())?;
            let mut c = Mat::zeros(lib.rows(), synth.r);
            for k in 0..synth.r {
                for b in 0..lib.rows() {
                    c.set(b, k, lib.get(b, k));
                }
            }
            let ems = EndmemberSet::new(c, Some(names[..synth.r].to_vec()))?;
            let truth = synth::generate_scene(synth, &ems)?;
            Ok(SceneData {
                y: truth.noisy,
                ems,
                truth_a: Some(truth.a_true),
            })
        }
        SceneConfig::Files {
            cube,
            endmembers,
            truth_abundances,
        } => {
            let y = io::read_cube(cube)?;
            let (c, names) = synth::load_spectral_library(endmembers)?;
            if c.rows() != y.depth() {
                return Err(Error::Shape(format!(
                    "cube has {} bands, endmember file has {}",
                    y.depth(),
                    c.rows()
                )));
            }
            let ems = EndmemberSet::new(c, Some(names))?;
            let truth_a = match truth_abundances {
                Some(path) => {
                    let t = io::read_cube(path)?;
                    if t.n_row() != y.n_row() || t.n_col() != y.n_col() || t.depth() != ems.r() {
                        return Err(Error::Shape(format!(
                            "truth cube dims {:?} do not match scene {}x{} with {} endmembers",
                            t.dims(),
                            y.n_row(),
                            y.n_col(),
                            ems.r()
                        )));
                    }
                    Some(t)
                }
                None => None,
            };
            Ok(SceneData { y, ems, truth_a })
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn emit_artifacts(
    cfg: &ExperimentConfig,
    y: &Tensor3,
    ems: &EndmemberSet,
    estimate: &AbundanceState,
    recon: &Tensor3,
    trace: &solver::Trace,
    results: &ExperimentResults,
    written: &mut Vec<PathBuf>,
) -> Result<()> {
    let dir = &cfg.outputs.dir;
    let emit_cube = |name: &str, t: &Tensor3, written: &mut Vec<PathBuf>| -> Result<()> {
        let path = dir.join(name);
        io::write_cube(&path, t)?;
        written.push(path.clone());
        written.push(PathBuf::from(format!("{}.json", path.display())));
        Ok(())
    };
    emit_cube("abundances.cube", &estimate.a, written)?;
    emit_cube("interactions.cube", &estimate.b, written)?;

    if cfg.outputs.abundance_maps {
        for i in 0..ems.r() {
            let path = dir.join(format!("abundance_{:02}_{}.pgm", i, ems.names()[i]));
            io::write_gray_map(&estimate.a.slice(i)?, &path, None)?;
            written.push(path.clone());
            written.push(path.with_extension("bounds.txt"));
        }
    }
    if cfg.outputs.interaction_maps {
        for (j, (a, b)) in ems.pair_index().iter().enumerate() {
            let path = dir.join(format!("interaction_{j:02}_{a}_{b}.pgm"));
            io::write_gray_map(&estimate.b.slice(j)?, &path, None)?;
            written.push(path.clone());
            written.push(path.with_extension("bounds.txt"));
        }
    }
    if cfg.outputs.error_map {
        let mut err_map = Mat::zeros(y.n_row(), y.n_col());
        let l = y.depth() as f64;
        for i in 0..y.n_row() {
            for j in 0..y.n_col() {
                let mut acc = 0.0;
                for (a, b) in y.pixel(i, j).iter().zip(recon.pixel(i, j)) {
                    acc += (a - b) * (a - b);
                }
                err_map.set(i, j, (acc / l).sqrt());
            }
        }
        let path = dir.join("error_map.pgm");
        io::write_gray_map(&err_map, &path, None)?;
        written.push(path.clone());
        written.push(path.with_extension("bounds.txt"));
    }
    if cfg.outputs.trace {
        let path = dir.join("trace.csv");
        io::write_trace_csv(&path, trace)?;
        written.push(path);
    }
    if cfg.outputs.rank_profiles {
        let path = dir.join("rank_profiles.json");
        let profiles = rank_report(estimate)?;
        std::fs::write(&path, serde_json::to_string_pretty(&profiles).unwrap()).map_err(
            |source| Error::Io {
                path: path.display().to_string(),
                source,
            },
        )?;
        written.push(path);
    }

    let path = dir.join("results.json");
    std::fs::write(&path, serde_json::to_string_pretty(results).unwrap()).map_err(|source| {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    })?;
    written.push(path);
    Ok(())
}

/// Per-slice rank profiles plus a soft comparison of the two groups (the
/// interaction maps tend to have the lower effective dimension).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankReport {
    pub abundance: Vec<RankProfile>,
    pub interaction: Vec<RankProfile>,
    pub mean_dim95_abundance: f64,
    pub mean_dim95_interaction: f64,
}

pub fn rank_report(estimate: &AbundanceState) -> Result<RankReport> {
    let mut abundance = Vec::new();
    for i in 0..estimate.a.depth() {
        abundance.push(metrics::rank_profile(
            &estimate.a.slice(i)?,
            0.95,
            EnergyMode::Sigma,
        )?);
    }
    let mut interaction = Vec::new();
    for j in 0..estimate.b.depth() {
        interaction.push(metrics::rank_profile(
            &estimate.b.slice(j)?,
            0.95,
            EnergyMode::Sigma,
        )?);
    }
    let mean = |v: &[RankProfile]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().map(|p| p.dim95 as f64).sum::<f64>() / v.len() as f64
        }
    };
    Ok(RankReport {
        mean_dim95_abundance: mean(&abundance),
        mean_dim95_interaction: mean(&interaction),
        abundance,
        interaction,
    })
}

impl SynthConfig {
    fn library_free_validate(&self) -> Result<()> {
        // Validation that needs no library size: reuse the main check with a
        // size that only the explicit bound can fail against.
        self.validate(usize::MAX)
    }
}
