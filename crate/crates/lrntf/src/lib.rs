//! Nonlinear hyperspectral unmixing with a tensor-formulated generalized
//! bilinear model.
//!
//! The observed cube is modeled as a sum of abundance maps times endmember
//! spectra plus interaction abundance maps times pairwise Hadamard products
//! of endmembers. Abundances are estimated by ADMM with nuclear-norm
//! regularization on every abundance and interaction map (singular value
//! thresholding proximal steps), initialized from fully constrained least
//! squares. The crate also ships the synthetic scene generator, evaluation
//! metrics, rank analysis and file formats used by the `unmix` CLI.
//!
//! # Example
//!
//! ```
//! use lrntf::{fcls_cube, forward, rmse, AbundanceState, EndmemberSet, Mat, Tensor3};
//! use lrntf::solver::{finalize_abundances, solve, SolverConfig};
//! use lrntf::synth::{builtin_library, generate_scene, SynthConfig};
//!
//! // a small bilinear scene with three of the bundled endmembers
//! let (lib, names) = builtin_library();
//! let mut c = Mat::zeros(lib.rows(), 3);
//! for k in 0..3 {
//!     for b in 0..lib.rows() {
//!         c.set(b, k, lib.get(b, k));
//!     }
//! }
//! let ems = EndmemberSet::new(c, Some(names[..3].to_vec())).unwrap();
//! let scene = SynthConfig { s: 3, k: 3, r: 3, snr_db: Some(30.0), seed: 1, ..Default::default() };
//! let truth = generate_scene(&scene, &ems).unwrap();
//!
//! // least-squares initialization, then the regularized solver
//! let init_a = fcls_cube(&truth.noisy, ems.c(), &Default::default()).unwrap();
//! let init = AbundanceState::new(init_a, Tensor3::zeros(9, 9, ems.n_pairs())).unwrap();
//! let cfg = SolverConfig { max_iter: 20, ..Default::default() };
//! let (mut estimate, trace) = solve(&truth.noisy, &ems, &cfg, &init).unwrap();
//! finalize_abundances(&mut estimate, &ems).unwrap();
//!
//! assert!(rmse(&truth.a_true, &estimate.a).unwrap() < 0.2);
//! assert!(forward(&estimate, &ems).unwrap().is_finite());
//! assert_eq!(trace.iterations(), 20);
//! ```

pub mod error;
pub mod experiment;
pub mod fcls;
pub mod gbm;
pub mod io;
pub mod metrics;
pub mod solver;
pub mod svd;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use fcls::{fcls_cube, fcls_pixel, FclsConfig};
pub use gbm::{build_interactions, forward, interaction_bound, AbundanceState, EndmemberSet};
pub use metrics::{asam, lowrank_approx, rank_profile, re, rmse, EnergyMode, MetricsReport, RankProfile};
pub use solver::{check_convergence, project, solve, solve_admm, svt, AdmmState, Projection, SolverConfig, Trace};
pub use svd::{thin_svd, ThinSvd};
pub use tensor::{Mat, Tensor3};
