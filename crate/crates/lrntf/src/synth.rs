//! Synthetic hyperspectral scene generation.
//!
//! Scenes are built in the usual block fashion: a grid of `s x s` one-hot
//! blocks on an `s^2 x s^2` image, a `k x k` uniform low-pass filter with
//! symmetric boundary handling to create mixed pixels, exact per-pixel
//! renormalization, and suppression of pixels purer than `purity_cap`. The
//! clean cube comes from one of two bilinear forward models (or a spatial
//! half/half mixture of both), and white Gaussian noise is added at a
//! calibrated SNR. Everything is driven by a single seed through independent
//! ChaCha streams, so a config reproduces its scene bit for bit.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbm::{forward, interaction_bound, AbundanceState, EndmemberSet};
use crate::tensor::{Mat, Tensor3};

/// Which bilinear forward model generates the clean cube.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixKind {
    /// Bilinear interactions scaled by random per-pixel coefficients.
    Gbm,
    /// Linear mixture plus a scaled elementwise square of itself.
    Ppnm,
    /// Left half of the image GBM, right half PPNM.
    Half,
}

/// Scene generator parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Block grid parameter: the image is `s^2 x s^2` pixels.
    #[serde(default = "default_s")]
    pub s: usize,
    /// Low-pass filter side; odd. `1` means no smoothing.
    #[serde(default = "default_k")]
    pub k: usize,
    /// Number of endmembers drawn from the library.
    #[serde(default = "default_r")]
    pub r: usize,
    /// Abundances above this are replaced by the uniform vector.
    #[serde(default = "default_purity_cap")]
    pub purity_cap: f64,
    /// Forward model.
    #[serde(default = "default_mix_kind")]
    pub mix_kind: MixKind,
    /// PPNM interaction coefficient.
    #[serde(default = "default_ppnm_b")]
    pub ppnm_b: f64,
    /// Target SNR in dB; omitted means no noise.
    #[serde(default)]
    pub snr_db: Option<f64>,
    /// Master seed for all randomness in the scene.
    #[serde(default)]
    pub seed: u64,
}

fn default_s() -> usize {
    10
}
fn default_k() -> usize {
    9
}
fn default_r() -> usize {
    6
}
fn default_purity_cap() -> f64 {
    0.8
}
fn default_mix_kind() -> MixKind {
    MixKind::Gbm
}
fn default_ppnm_b() -> f64 {
    0.25
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            s: default_s(),
            k: default_k(),
            r: default_r(),
            purity_cap: default_purity_cap(),
            mix_kind: default_mix_kind(),
            ppnm_b: default_ppnm_b(),
            snr_db: None,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self, library_size: usize) -> Result<()> {
        if self.s < 2 {
            return Err(Error::Config(format!("block parameter s must be >= 2, got {}", self.s)));
        }
        if self.k == 0 || self.k % 2 == 0 {
            return Err(Error::Config(format!("filter side k must be odd and >= 1, got {}", self.k)));
        }
        if self.r < 2 || self.r > library_size {
            return Err(Error::Config(format!(
                "endmember count {} out of range 2..={library_size}",
                self.r
            )));
        }
        if !(self.purity_cap > 0.0) || !self.purity_cap.is_finite() {
            return Err(Error::Config("purity_cap must be positive and finite".into()));
        }
        if !self.ppnm_b.is_finite() {
            return Err(Error::Config("ppnm_b must be finite".into()));
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return Err(Error::Config("snr_db must be finite; omit it for a noise-free scene".into()));
            }
        }
        Ok(())
    }

    /// Side length of the generated image.
    pub fn image_side(&self) -> usize {
        self.s * self.s
    }
}

/// Everything known about a generated scene.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub a_true: Tensor3,
    /// True interaction abundances; zero on PPNM-generated pixels.
    pub b_true: Tensor3,
    /// Per-pixel per-pair interaction coefficients; zero where unused.
    pub gamma: Tensor3,
    pub clean: Tensor3,
    pub noisy: Tensor3,
}

// RNG stream ids per generation stage.
const STREAM_ABUNDANCE: u64 = 1;
const STREAM_GAMMA: u64 = 2;
const STREAM_NOISE: u64 = 3;

fn stage_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generate a full scene from a config and an endmember set.
pub fn generate_scene(cfg: &SynthConfig, ems: &EndmemberSet) -> Result<GroundTruth> {
    cfg.validate(ems.r())?;
    if ems.r() != cfg.r {
        return Err(Error::Config(format!(
            "config wants {} endmembers, set has {}",
            cfg.r,
            ems.r()
        )));
    }
    let mut rng_abund = stage_rng(cfg.seed, STREAM_ABUNDANCE);
    let a_true = gen_abundances(cfg, &mut rng_abund);

    let mut rng_gamma = stage_rng(cfg.seed, STREAM_GAMMA);
    let (clean, b_true, gamma) = match cfg.mix_kind {
        MixKind::Gbm => mix_gbm(&a_true, ems, &mut rng_gamma)?,
        MixKind::Ppnm => {
            let clean = mix_ppnm(&a_true, ems, cfg.ppnm_b)?;
            let zeros = Tensor3::zeros(a_true.n_row(), a_true.n_col(), ems.n_pairs());
            (clean, zeros.clone(), zeros)
        }
        MixKind::Half => mix_half(&a_true, ems, cfg.ppnm_b, &mut rng_gamma)?,
    };

    let mut rng_noise = stage_rng(cfg.seed, STREAM_NOISE);
    let noisy = add_noise(&clean, cfg.snr_db.unwrap_or(f64::INFINITY), &mut rng_noise)?;

    Ok(GroundTruth {
        a_true,
        b_true,
        gamma,
        clean,
        noisy,
    })
}

/// Block abundances, low-pass mixing, renormalization, purity suppression.
/// Output satisfies the nonnegativity and sum-to-one constraints exactly.
pub fn gen_abundances(cfg: &SynthConfig, rng: &mut impl Rng) -> Tensor3 {
    let side = cfg.image_side();
    let r = cfg.r;
    let mut a = Tensor3::zeros(side, side, r);

    // One-hot block assignment, block row-major.
    for bi in 0..cfg.s {
        for bj in 0..cfg.s {
            let e = rng.gen_range(0..r);
            for di in 0..cfg.s {
                for dj in 0..cfg.s {
                    a.set(bi * cfg.s + di, bj * cfg.s + dj, e, 1.0);
                }
            }
        }
    }

    if cfg.k > 1 {
        box_filter_slices(&mut a, cfg.k);
    }

    // Renormalize each pixel, then flatten overly pure pixels.
    let uniform = 1.0 / r as f64;
    for p in 0..side * side {
        let fiber = &mut a.data_mut()[p * r..(p + 1) * r];
        let sum: f64 = fiber.iter().sum();
        if sum > 0.0 {
            for v in fiber.iter_mut() {
                *v /= sum;
            }
        }
        let max = fiber.iter().cloned().fold(0.0f64, f64::max);
        if max > cfg.purity_cap {
            for v in fiber.iter_mut() {
                *v = uniform;
            }
        }
    }
    a
}

/// Separable `k x k` uniform filter applied to every slice, with symmetric
/// boundary handling (index -1 maps to 0, index n maps to n-1).
fn box_filter_slices(a: &mut Tensor3, k: usize) {
    let (n_row, n_col, depth) = a.dims();
    let half = (k as isize) / 2;
    let inv_k = 1.0 / k as f64;
    let reflect = |idx: isize, n: usize| -> usize {
        let n = n as isize;
        let mut i = idx;
        // symmetric reflection, stable for any filter size
        loop {
            if i < 0 {
                i = -i - 1;
            } else if i >= n {
                i = 2 * n - 1 - i;
            } else {
                return i as usize;
            }
        }
    };

    for d in 0..depth {
        // horizontal pass
        let mut tmp = vec![0.0; n_row * n_col];
        for i in 0..n_row {
            for j in 0..n_col {
                let mut acc = 0.0;
                for o in -half..=half {
                    acc += a.get(i, reflect(j as isize + o, n_col), d);
                }
                tmp[i * n_col + j] = acc * inv_k;
            }
        }
        // vertical pass
        for j in 0..n_col {
            for i in 0..n_row {
                let mut acc = 0.0;
                for o in -half..=half {
                    acc += tmp[reflect(i as isize + o, n_row) * n_col + j];
                }
                a.set(i, j, d, acc * inv_k);
            }
        }
    }
}

/// Bilinear synthesis with per-pixel per-pair coefficients drawn uniformly
/// from (0, 1). Returns the clean cube, the true interaction abundances and
/// the coefficients. Coefficients are drawn pixel row-major, pairs fastest.
pub fn mix_gbm(
    a: &Tensor3,
    ems: &EndmemberSet,
    rng: &mut impl Rng,
) -> Result<(Tensor3, Tensor3, Tensor3)> {
    if a.depth() != ems.r() {
        return Err(Error::Shape(format!(
            "abundance cube has {} slices, endmember set has {}",
            a.depth(),
            ems.r()
        )));
    }
    let bound = interaction_bound(a, ems.pair_index())?;
    let n_pairs = ems.n_pairs();
    let mut gamma = Tensor3::zeros(a.n_row(), a.n_col(), n_pairs);
    for g in gamma.data_mut() {
        *g = rng.gen_range(0.0..1.0);
    }
    let mut b_true = bound;
    for (b, g) in b_true.data_mut().iter_mut().zip(gamma.data()) {
        *b *= g;
    }
    let state = AbundanceState::new(a.clone(), b_true.clone())?;
    let clean = forward(&state, ems)?;
    Ok((clean, b_true, gamma))
}

/// Post-nonlinear synthesis: per pixel `y = Ca + b (Ca) . (Ca)`.
pub fn mix_ppnm(a: &Tensor3, ems: &EndmemberSet, b: f64) -> Result<Tensor3> {
    if a.depth() != ems.r() {
        return Err(Error::Shape(format!(
            "abundance cube has {} slices, endmember set has {}",
            a.depth(),
            ems.r()
        )));
    }
    let mut y = a.mode3_product(ems.c())?;
    for v in y.data_mut() {
        *v += b * *v * *v;
    }
    Ok(y)
}

/// Left image half generated by [`mix_gbm`], right half by [`mix_ppnm`].
/// Both models are evaluated on the full image (so the GBM half consumes the
/// same coefficient stream as a pure GBM scene) and composited by column:
/// columns `0..n_col/2` are GBM. Interaction truth is zeroed on PPNM pixels.
pub fn mix_half(
    a: &Tensor3,
    ems: &EndmemberSet,
    ppnm_b: f64,
    rng: &mut impl Rng,
) -> Result<(Tensor3, Tensor3, Tensor3)> {
    let (mut clean, mut b_true, mut gamma) = mix_gbm(a, ems, rng)?;
    let ppnm = mix_ppnm(a, ems, ppnm_b)?;
    let split = a.n_col() / 2;
    for i in 0..a.n_row() {
        for j in split..a.n_col() {
            let l = clean.depth();
            clean.pixel_mut(i, j).copy_from_slice(&ppnm.data()[(i * a.n_col() + j) * l..(i * a.n_col() + j + 1) * l]);
            for v in b_true.pixel_mut(i, j) {
                *v = 0.0;
            }
            for v in gamma.pixel_mut(i, j) {
                *v = 0.0;
            }
        }
    }
    Ok((clean, b_true, gamma))
}

/// Add zero-mean white Gaussian noise calibrated so the expected SNR equals
/// `snr_db`. `f64::INFINITY` means no noise. Gaussians come from Box-Muller
/// over the uniform stream, pairs in data order, so output is reproducible.
pub fn add_noise(clean: &Tensor3, snr_db: f64, rng: &mut impl Rng) -> Result<Tensor3> {
    if snr_db == f64::INFINITY {
        return Ok(clean.clone());
    }
    if !snr_db.is_finite() {
        return Err(Error::Config(format!("snr_db must be finite, got {snr_db}")));
    }
    let n_total = clean.data().len();
    let sigma = (clean.frob_norm_sq() / (n_total as f64 * 10f64.powf(snr_db / 10.0))).sqrt();
    let mut out = clean.clone();
    let data = out.data_mut();
    let mut i = 0;
    while i < n_total {
        let u1: f64 = 1.0 - rng.gen::<f64>(); // in (0, 1]
        let u2: f64 = rng.gen();
        let radius = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
        data[i] += sigma * radius * c;
        if i + 1 < n_total {
            data[i + 1] += sigma * radius * s;
        }
        i += 2;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Spectral library
// ---------------------------------------------------------------------------

/// Parse a spectral library CSV: a header row of endmember names followed by
/// one row per band, one column per endmember, reflectances in [0, 1].
pub fn parse_spectral_library(text: &str) -> Result<(Mat, Vec<String>)> {
    let err = |detail: String| Error::Parse {
        path: "<library>".into(),
        detail,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| err("empty file".into()))?;
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let r = names.len();
    if r == 0 || names.iter().any(|n| n.is_empty()) {
        return Err(err("header row must list endmember names".into()));
    }
    let mut values: Vec<f64> = Vec::new();
    let mut n_rows = 0usize;
    for (line_no, line) in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != r {
            return Err(err(format!(
                "row {} has {} cells, expected {r}",
                line_no + 1,
                cells.len()
            )));
        }
        for (col, cell) in cells.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                err(format!(
                    "row {}, column {}: not a number: {cell:?}",
                    line_no + 1,
                    col + 1
                ))
            })?;
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(err(format!(
                    "row {}, column {}: reflectance {v} outside [0, 1]",
                    line_no + 1,
                    col + 1
                )));
            }
            values.push(v);
        }
        n_rows += 1;
    }
    if n_rows == 0 {
        return Err(err("no data rows after the header".into()));
    }
    Ok((Mat::from_vec(n_rows, r, values)?, names))
}

/// Load a spectral library CSV from disk.
pub fn load_spectral_library(path: &std::path::Path) -> Result<(Mat, Vec<String>)> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_spectral_library(&text).map_err(|e| match e {
        Error::Parse { detail, .. } => Error::Parse {
            path: path.display().to_string(),
            detail,
        },
        other => other,
    })
}

/// Write a spectral library CSV in the format [`parse_spectral_library`]
/// reads. Values print with their shortest round-trip representation, so a
/// write/read cycle is exact.
pub fn write_spectral_library(
    path: &std::path::Path,
    c: &Mat,
    names: &[String],
) -> Result<()> {
    if names.len() != c.cols() {
        return Err(Error::Config(format!(
            "{} names for {} endmember columns",
            names.len(),
            c.cols()
        )));
    }
    let mut text = names.join(",");
    text.push('\n');
    for b in 0..c.rows() {
        for k in 0..c.cols() {
            if k > 0 {
                text.push(',');
            }
            text.push_str(&c.get(b, k).to_string());
        }
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// The bundled 224-band, 6-endmember library of smooth synthetic spectra
/// used by the presets and tests. Deterministic closed form, values in (0, 1).
pub fn builtin_library() -> (Mat, Vec<String>) {
    const BANDS: usize = 224;
    const R: usize = 6;
    let gauss = |x: f64, center: f64, width: f64| (-((x - center) / width).powi(2)).exp();
    let mut data = Vec::with_capacity(BANDS * R);
    for b in 0..BANDS {
        let x = b as f64 / (BANDS - 1) as f64;
        let row = [
            0.12 + 0.62 * gauss(x, 0.22, 0.13),
            0.08 + 0.68 * gauss(x, 0.52, 0.17),
            0.18 + 0.55 * gauss(x, 0.82, 0.14),
            0.38 + 0.20 * (2.0 * std::f64::consts::PI * 1.5 * x).sin(),
            0.10 + 0.72 * x,
            0.78 - 0.55 * x + 0.15 * gauss(x, 0.35, 0.09),
        ];
        data.extend(row.iter().map(|v| v.clamp(0.01, 0.99)));
    }
    let names = (0..R).map(|k| format!("synth_{k}")).collect();
    (Mat::from_vec(BANDS, R, data).unwrap(), names)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_ems(r: usize) -> EndmemberSet {
        let (lib, names) = builtin_library();
        let mut c = Mat::zeros(lib.rows(), r);
        for k in 0..r {
            for b in 0..lib.rows() {
                c.set(b, k, lib.get(b, k));
            }
        }
        EndmemberSet::new(c, Some(names[..r].to_vec())).unwrap()
    }

    fn small_cfg() -> SynthConfig {
        SynthConfig {
            s: 4,
            k: 3,
            r: 3,
            seed: 42,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn abundances_satisfy_constraints() {
        let cfg = small_cfg();
        let mut rng = stage_rng(cfg.seed, STREAM_ABUNDANCE);
        let a = gen_abundances(&cfg, &mut rng);
        assert_eq!(a.dims(), (16, 16, 3));
        for p in 0..a.n_pixels() {
            let fiber = &a.data()[p * 3..(p + 1) * 3];
            let sum: f64 = fiber.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "pixel {p} sums to {sum}");
            assert!(fiber.iter().all(|&v| v >= 0.0));
            assert!(fiber.iter().all(|&v| v <= cfg.purity_cap + 1e-12));
        }
    }

    #[test]
    fn constraint_sweep_over_geometries_and_seeds() {
        for (s, k, seed) in [(2usize, 1usize, 0u64), (3, 3, 1), (4, 5, 2), (5, 9, 3)] {
            let cfg = SynthConfig {
                s,
                k,
                r: 4,
                seed,
                ..SynthConfig::default()
            };
            let mut rng = stage_rng(seed, STREAM_ABUNDANCE);
            let a = gen_abundances(&cfg, &mut rng);
            for p in 0..a.n_pixels() {
                let fiber = &a.data()[p * 4..(p + 1) * 4];
                let sum: f64 = fiber.iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
                assert!(fiber.iter().all(|&v| v >= 0.0));
                assert!(fiber.iter().cloned().fold(0.0f64, f64::max) <= cfg.purity_cap + 1e-12);
            }
        }
    }

    #[test]
    fn no_smoothing_and_loose_cap_keeps_pure_blocks() {
        let cfg = SynthConfig {
            s: 3,
            k: 1,
            r: 3,
            purity_cap: 1.1,
            seed: 5,
            ..SynthConfig::default()
        };
        let mut rng = stage_rng(cfg.seed, STREAM_ABUNDANCE);
        let a = gen_abundances(&cfg, &mut rng);
        for p in 0..a.n_pixels() {
            let fiber = &a.data()[p * 3..(p + 1) * 3];
            let max = fiber.iter().cloned().fold(0.0f64, f64::max);
            assert_eq!(max, 1.0, "one-hot pixels must survive k = 1");
        }
    }

    #[test]
    fn abundances_are_deterministic() {
        let cfg = small_cfg();
        let a1 = gen_abundances(&cfg, &mut stage_rng(cfg.seed, STREAM_ABUNDANCE));
        let a2 = gen_abundances(&cfg, &mut stage_rng(cfg.seed, STREAM_ABUNDANCE));
        assert_eq!(a1, a2);
    }

    #[test]
    fn gbm_zero_gamma_is_linear_image() {
        let ems = toy_ems(3);
        let cfg = small_cfg();
        let a = gen_abundances(&cfg, &mut stage_rng(cfg.seed, STREAM_ABUNDANCE));
        let (clean, b_true, _) = mix_gbm(&a, &ems, &mut stage_rng(cfg.seed, STREAM_GAMMA)).unwrap();
        let lmm = a.mode3_product(ems.c()).unwrap();
        // bilinear terms are nonnegative, so clean >= lmm elementwise
        for (c, l) in clean.data().iter().zip(lmm.data()) {
            assert!(c >= &(l - 1e-12));
        }
        // and stripping them recovers the linear image
        let mut state = AbundanceState::new(a.clone(), b_true).unwrap();
        for v in state.b.data_mut() {
            *v = 0.0;
        }
        let stripped = forward(&state, &ems).unwrap();
        for (x, y) in stripped.data().iter().zip(lmm.data()) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn gbm_single_pixel_hand_value() {
        let ems = toy_ems(2);
        let mut a = Tensor3::zeros(1, 1, 2);
        a.set(0, 0, 0, 0.5);
        a.set(0, 0, 1, 0.5);
        // gamma = 1 exactly: b = 0.25
        let bound = interaction_bound(&a, ems.pair_index()).unwrap();
        let state = AbundanceState::new(a, bound).unwrap();
        let y = forward(&state, &ems).unwrap();
        for b in 0..ems.bands() {
            let c1 = ems.c().get(b, 0);
            let c2 = ems.c().get(b, 1);
            assert!((y.get(0, 0, b) - (0.5 * c1 + 0.5 * c2 + 0.25 * c1 * c2)).abs() < 1e-14);
        }
    }

    #[test]
    fn gbm_b_true_within_bound() {
        let ems = toy_ems(4);
        let cfg = SynthConfig {
            r: 4,
            ..small_cfg()
        };
        let a = gen_abundances(&cfg, &mut stage_rng(cfg.seed, STREAM_ABUNDANCE));
        let (_, b_true, gamma) = mix_gbm(&a, &ems, &mut stage_rng(cfg.seed, STREAM_GAMMA)).unwrap();
        let bound = interaction_bound(&a, ems.pair_index()).unwrap();
        for ((b, g), v) in b_true.data().iter().zip(gamma.data()).zip(bound.data()) {
            assert!(*b >= 0.0 && b <= v);
            assert!((0.0..1.0).contains(g));
        }
    }

    #[test]
    fn ppnm_zero_coefficient_is_linear() {
        let ems = toy_ems(3);
        let cfg = small_cfg();
        let a = gen_abundances(&cfg, &mut stage_rng(cfg.seed, STREAM_ABUNDANCE));
        let y = mix_ppnm(&a, &ems, 0.0).unwrap();
        let lmm = a.mode3_product(ems.c()).unwrap();
        assert_eq!(y, lmm);
    }

    #[test]
    fn ppnm_pure_pixel_hand_value() {
        let ems = toy_ems(2);
        let mut a = Tensor3::zeros(1, 1, 2);
        a.set(0, 0, 0, 1.0);
        let y = mix_ppnm(&a, &ems, 0.25).unwrap();
        for b in 0..ems.bands() {
            let c = ems.c().get(b, 0);
            assert!((y.get(0, 0, b) - (c + 0.25 * c * c)).abs() < 1e-14);
        }
    }

    #[test]
    fn half_scene_matches_parents_on_each_side() {
        let ems = toy_ems(3);
        let cfg = small_cfg();
        let a = gen_abundances(&cfg, &mut stage_rng(cfg.seed, STREAM_ABUNDANCE));
        let (half, b_half, _) = mix_half(&a, &ems, 0.25, &mut stage_rng(cfg.seed, STREAM_GAMMA)).unwrap();
        let (gbm, b_gbm, _) = mix_gbm(&a, &ems, &mut stage_rng(cfg.seed, STREAM_GAMMA)).unwrap();
        let ppnm = mix_ppnm(&a, &ems, 0.25).unwrap();
        let split = a.n_col() / 2;
        for i in 0..a.n_row() {
            for j in 0..a.n_col() {
                if j < split {
                    assert_eq!(half.pixel(i, j), gbm.pixel(i, j), "gbm side ({i},{j})");
                    assert_eq!(b_half.pixel(i, j), b_gbm.pixel(i, j));
                } else {
                    assert_eq!(half.pixel(i, j), ppnm.pixel(i, j), "ppnm side ({i},{j})");
                    assert!(b_half.pixel(i, j).iter().all(|&v| v == 0.0));
                }
            }
        }
    }

    #[test]
    fn half_scene_degenerate_case_equals_lmm() {
        // gamma has no effect when the bound is zero (pure pixels), b = 0
        let ems = toy_ems(2);
        let mut a = Tensor3::zeros(2, 2, 2);
        for p in 0..4 {
            a.data_mut()[p * 2] = 1.0;
        }
        let (clean, _, _) = mix_half(&a, &ems, 0.0, &mut stage_rng(0, STREAM_GAMMA)).unwrap();
        let lmm = a.mode3_product(ems.c()).unwrap();
        for (x, y) in clean.data().iter().zip(lmm.data()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn noise_free_sentinel_returns_clean() {
        let ems = toy_ems(3);
        let cfg = small_cfg();
        let truth = generate_scene(
            &SynthConfig {
                snr_db: None,
                ..cfg
            },
            &ems,
        )
        .unwrap();
        assert_eq!(truth.clean, truth.noisy);
    }

    #[test]
    fn noise_is_reproducible() {
        let clean = Tensor3::from_vec(2, 2, 3, vec![0.5; 12]).unwrap();
        let n1 = add_noise(&clean, 20.0, &mut stage_rng(9, STREAM_NOISE)).unwrap();
        let n2 = add_noise(&clean, 20.0, &mut stage_rng(9, STREAM_NOISE)).unwrap();
        assert_eq!(n1, n2);
        assert!(matches!(
            add_noise(&clean, f64::NAN, &mut stage_rng(9, 0)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn realized_snr_close_to_target() {
        let ems = toy_ems(4);
        let cfg = SynthConfig {
            s: 5,
            k: 3,
            r: 4,
            snr_db: Some(30.0),
            seed: 11,
            ..SynthConfig::default()
        };
        let truth = generate_scene(&cfg, &ems).unwrap();
        let mut noise_sq = 0.0;
        for (n, c) in truth.noisy.data().iter().zip(truth.clean.data()) {
            noise_sq += (n - c) * (n - c);
        }
        let realized = 10.0 * (truth.clean.frob_norm_sq() / noise_sq).log10();
        assert!((realized - 30.0).abs() < 0.5, "realized SNR {realized}");
    }

    #[test]
    fn scene_is_bit_deterministic() {
        let ems = toy_ems(3);
        let cfg = small_cfg();
        let t1 = generate_scene(&cfg, &ems).unwrap();
        let t2 = generate_scene(&cfg, &ems).unwrap();
        assert_eq!(t1.noisy, t2.noisy);
        assert_eq!(t1.a_true, t2.a_true);
        assert_eq!(t1.b_true, t2.b_true);
    }

    #[test]
    fn library_parses_and_validates() {
        let (c, names) = parse_spectral_library("a,b\n0.1,0.2\n0.3,0.4\n").unwrap();
        assert_eq!(names, vec!["a", "b"]);
        assert_eq!(c.shape(), (2, 2));
        assert!(matches!(parse_spectral_library(""), Err(Error::Parse { .. })));
        let bad_value = parse_spectral_library("a,b\n0.1,1.5\n");
        match bad_value {
            Err(Error::Parse { detail, .. }) => {
                assert!(detail.contains("row 2") && detail.contains("column 2"), "{detail}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(
            parse_spectral_library("a,b\n0.1\n"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            parse_spectral_library("a,b\n0.1,x\n"),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn builtin_library_shape_and_range() {
        let (c, names) = builtin_library();
        assert_eq!(c.shape(), (224, 6));
        assert_eq!(names.len(), 6);
        assert!(c.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn bundled_library_file_matches_builtin_exactly() {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data/spectra_224x6.csv");
        let (from_file, _) = load_spectral_library(&path).unwrap();
        let (builtin, _) = builtin_library();
        assert_eq!(from_file, builtin);
    }

    #[test]
    fn library_write_read_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let (c, names) = builtin_library();
        let path = dir.path().join("lib.csv");
        write_spectral_library(&path, &c, &names).unwrap();
        let (back, back_names) = load_spectral_library(&path).unwrap();
        assert_eq!(back, c);
        assert_eq!(back_names, names);
    }

    #[test]
    fn config_validation() {
        let lib = 6;
        let mut cfg = SynthConfig::default();
        assert!(cfg.validate(lib).is_ok());
        cfg.k = 4;
        assert!(cfg.validate(lib).is_err());
        cfg.k = 3;
        cfg.s = 1;
        assert!(cfg.validate(lib).is_err());
        cfg.s = 4;
        cfg.r = 7;
        assert!(cfg.validate(lib).is_err());
        cfg.r = 6;
        cfg.snr_db = Some(f64::INFINITY);
        assert!(cfg.validate(lib).is_err());
        cfg.snr_db = None;
        assert!(cfg.validate(lib).is_ok());
    }
}
