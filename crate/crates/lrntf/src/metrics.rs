//! Evaluation metrics and abundance-map rank analysis.
//!
//! Three scalar metrics: abundance RMSE `sqrt(||A - A_hat||_F^2 / (R N))`,
//! reconstruction error `sqrt(||Y - Y_hat||_F^2 / (N L))`, and the mean
//! per-pixel spectral angle in radians. Rank analysis reports the singular
//! spectrum of a map, the cumulative-energy dimension at a given level, and
//! truncated low-rank reconstructions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::svd::thin_svd;
use crate::tensor::{Mat, Tensor3};

/// Scalar evaluation metrics for one unmixing run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Abundance RMSE; absent when no ground truth was available.
    pub rmse: Option<f64>,
    /// Per-endmember abundance RMSE, same availability as `rmse`.
    pub per_endmember_rmse: Option<Vec<f64>>,
    /// Reconstruction error between observed and reconstructed cubes.
    pub re: f64,
    /// Mean spectral angle (radians) between observed and reconstructed pixels.
    pub asam: f64,
    /// Pixels where either spectrum had zero norm (angle defined as 0 when
    /// both are zero, pi/2 when exactly one is).
    pub asam_degenerate_pixels: usize,
}

fn check_same_dims(x: &Tensor3, y: &Tensor3) -> Result<()> {
    if x.dims() != y.dims() {
        return Err(Error::Shape(format!(
            "metric operands have dims {:?} and {:?}",
            x.dims(),
            y.dims()
        )));
    }
    Ok(())
}

/// Abundance RMSE: `sqrt(||a_true - a_est||_F^2 / (R * N))` with
/// `N = n_row * n_col` and `R` the number of slices.
pub fn rmse(a_true: &Tensor3, a_est: &Tensor3) -> Result<f64> {
    check_same_dims(a_true, a_est)?;
    let mut acc = 0.0;
    for (x, y) in a_true.data().iter().zip(a_est.data()) {
        let d = x - y;
        acc += d * d;
    }
    let n = a_true.n_pixels() as f64;
    let r = a_true.depth() as f64;
    Ok((acc / (r * n)).sqrt())
}

/// RMSE of each abundance slice separately: `sqrt(||a_i - a_hat_i||_F^2 / N)`.
pub fn per_endmember_rmse(a_true: &Tensor3, a_est: &Tensor3) -> Result<Vec<f64>> {
    check_same_dims(a_true, a_est)?;
    let r = a_true.depth();
    let n = a_true.n_pixels() as f64;
    let mut acc = vec![0.0; r];
    for (x, y) in a_true.data().chunks_exact(r).zip(a_est.data().chunks_exact(r)) {
        for k in 0..r {
            let d = x[k] - y[k];
            acc[k] += d * d;
        }
    }
    Ok(acc.into_iter().map(|s| (s / n).sqrt()).collect())
}

/// Reconstruction error: `sqrt(||y - y_hat||_F^2 / (N * L))`.
pub fn re(y: &Tensor3, y_hat: &Tensor3) -> Result<f64> {
    check_same_dims(y, y_hat)?;
    let mut acc = 0.0;
    for (x, z) in y.data().iter().zip(y_hat.data()) {
        let d = x - z;
        acc += d * d;
    }
    let n = y.n_pixels() as f64;
    let l = y.depth() as f64;
    Ok((acc / (n * l)).sqrt())
}

/// Mean per-pixel spectral angle in radians.
pub fn asam(y: &Tensor3, y_hat: &Tensor3) -> Result<f64> {
    asam_with_degenerates(y, y_hat).map(|(a, _)| a)
}

/// Mean spectral angle plus the count of degenerate (zero-norm) pixels.
pub fn asam_with_degenerates(y: &Tensor3, y_hat: &Tensor3) -> Result<(f64, usize)> {
    check_same_dims(y, y_hat)?;
    let n = y.n_pixels();
    let mut total = 0.0;
    let mut degenerate = 0;
    for i in 0..y.n_row() {
        for j in 0..y.n_col() {
            let p = y.pixel(i, j);
            let q = y_hat.pixel(i, j);
            let mut dot = 0.0;
            let mut np = 0.0;
            let mut nq = 0.0;
            for (a, b) in p.iter().zip(q.iter()) {
                dot += a * b;
                np += a * a;
                nq += b * b;
            }
            if np == 0.0 || nq == 0.0 {
                degenerate += 1;
                if np != nq {
                    total += std::f64::consts::FRAC_PI_2;
                }
                continue;
            }
            let cos = (dot / (np.sqrt() * nq.sqrt())).clamp(-1.0, 1.0);
            total += cos.acos();
        }
    }
    Ok((total / n as f64, degenerate))
}

// ---------------------------------------------------------------------------
// Rank analysis
// ---------------------------------------------------------------------------

/// How cumulative energy is accumulated over the singular spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyMode {
    /// Raw singular values `sigma_i / sum sigma` (the default).
    Sigma,
    /// Squared singular values `sigma_i^2 / sum sigma^2`.
    SigmaSq,
}

/// Singular spectrum summary of one abundance map.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankProfile {
    /// Nonincreasing singular values.
    pub singulars: Vec<f64>,
    /// Cumulative energy in [0, 1]; last entry is 1.
    pub cum_energy: Vec<f64>,
    /// Smallest k (1-based count) whose cumulative energy reaches the level.
    pub dim95: usize,
    /// `||m - truncation_k(m)||_F` for k = 1..=min(rows, cols).
    pub approx_error: Vec<f64>,
}

/// Singular spectrum, cumulative-energy dimension at `energy`, and
/// truncation errors per retained rank.
pub fn rank_profile(m: &Mat, energy: f64, mode: EnergyMode) -> Result<RankProfile> {
    if !(0.0..=1.0).contains(&energy) {
        return Err(Error::Config(format!(
            "energy level must be in [0, 1], got {energy}"
        )));
    }
    let svd = thin_svd(m)?;
    let s = &svd.singular_values;
    let k = s.len();
    let total: f64 = match mode {
        EnergyMode::Sigma => s.iter().sum(),
        EnergyMode::SigmaSq => s.iter().map(|x| x * x).sum(),
    };
    let mut cum_energy = Vec::with_capacity(k);
    let mut running = 0.0;
    for &sv in s {
        running += match mode {
            EnergyMode::Sigma => sv,
            EnergyMode::SigmaSq => sv * sv,
        };
        cum_energy.push(if total > 0.0 { running / total } else { 1.0 });
    }
    let dim95 = cum_energy
        .iter()
        .position(|&e| e >= energy)
        .map(|p| p + 1)
        .unwrap_or(k);
    // Eckart-Young: the tail of the singular spectrum is the truncation error.
    let mut approx_error = Vec::with_capacity(k);
    for rank in 1..=k {
        let tail: f64 = s[rank..].iter().map(|x| x * x).sum();
        approx_error.push(tail.sqrt());
    }
    Ok(RankProfile {
        singulars: s.clone(),
        cum_energy,
        dim95,
        approx_error,
    })
}

/// Rank-`k` truncated SVD reconstruction of `m` and its difference map.
pub fn lowrank_approx(m: &Mat, k: usize) -> Result<(Mat, Mat)> {
    let max_k = m.rows().min(m.cols());
    if k == 0 || k > max_k {
        return Err(Error::Index(format!(
            "retained rank {k} out of range 1..={max_k}"
        )));
    }
    let svd = thin_svd(m)?;
    let mut kept = svd.singular_values.clone();
    for s in kept.iter_mut().skip(k) {
        *s = 0.0;
    }
    let approx = svd.reconstruct_with(&kept);
    let mut diff = Mat::zeros(m.rows(), m.cols());
    for (d, (x, y)) in diff
        .data_mut()
        .iter_mut()
        .zip(m.data().iter().zip(approx.data()))
    {
        *d = x - y;
    }
    Ok((approx, diff))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize, d: usize) -> Tensor3 {
        let data = (0..r * c * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Tensor3::from_vec(r, c, d, data).unwrap()
    }

    #[test]
    fn rmse_identical_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let t = random_tensor(&mut rng, 3, 4, 5);
        assert_eq!(rmse(&t, &t).unwrap(), 0.0);
        assert_eq!(re(&t, &t).unwrap(), 0.0);
    }

    #[test]
    fn rmse_constant_offset() {
        let a = Tensor3::zeros(3, 4, 5);
        let b = Tensor3::from_vec(3, 4, 5, vec![0.1; 60]).unwrap();
        assert!((rmse(&a, &b).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn re_single_entry_difference() {
        let a = Tensor3::zeros(10, 10, 4);
        let mut b = Tensor3::zeros(10, 10, 4);
        b.set(3, 7, 2, 1.0);
        assert!((re(&a, &b).unwrap() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn metrics_match_loop_oracles() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = random_tensor(&mut rng, 4, 5, 6);
        let y = random_tensor(&mut rng, 4, 5, 6);
        let mut sq = 0.0;
        for i in 0..4 {
            for j in 0..5 {
                for k in 0..6 {
                    sq += (x.get(i, j, k) - y.get(i, j, k)).powi(2);
                }
            }
        }
        assert!((rmse(&x, &y).unwrap() - (sq / (6.0 * 20.0)).sqrt()).abs() < 1e-12);
        assert!((re(&x, &y).unwrap() - (sq / (20.0 * 6.0)).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rmse_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let x = random_tensor(&mut rng, 3, 3, 3);
        let y = random_tensor(&mut rng, 3, 3, 3);
        assert_eq!(rmse(&x, &y).unwrap(), rmse(&y, &x).unwrap());
        assert_eq!(re(&x, &y).unwrap(), re(&y, &x).unwrap());
    }

    #[test]
    fn shape_mismatch_errors() {
        let x = Tensor3::zeros(2, 2, 2);
        let y = Tensor3::zeros(2, 2, 3);
        assert!(matches!(rmse(&x, &y), Err(Error::Shape(_))));
    }

    #[test]
    fn asam_zero_for_positively_scaled_copy() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let y = random_tensor(&mut rng, 3, 3, 8);
        let mut scaled = y.clone();
        for x in scaled.data_mut() {
            *x *= 2.5;
        }
        assert!(asam(&y, &scaled).unwrap() < 1e-7);
    }

    #[test]
    fn asam_invariant_under_per_pixel_rescaling() {
        // power-of-two pixel scales are exact, so the angle is bitwise equal
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let y = random_tensor(&mut rng, 3, 3, 8);
        let z = random_tensor(&mut rng, 3, 3, 8);
        let mut z_scaled = z.clone();
        for i in 0..3 {
            for j in 0..3 {
                let c = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0][(i * 3 + j) % 6];
                for x in z_scaled.pixel_mut(i, j) {
                    *x *= c;
                }
            }
        }
        assert_eq!(asam(&y, &z).unwrap(), asam(&y, &z_scaled).unwrap());
    }

    #[test]
    fn asam_orthogonal_pixels() {
        let mut y = Tensor3::zeros(1, 2, 2);
        let mut z = Tensor3::zeros(1, 2, 2);
        y.set(0, 0, 0, 1.0);
        z.set(0, 0, 1, 1.0);
        y.set(0, 1, 0, 2.0);
        z.set(0, 1, 1, 3.0);
        assert!((asam(&y, &z).unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn asam_degenerate_handling() {
        let y = Tensor3::zeros(1, 2, 3); // both pixels zero
        let mut z = Tensor3::zeros(1, 2, 3);
        let (angle, count) = asam_with_degenerates(&y, &z).unwrap();
        assert_eq!(angle, 0.0);
        assert_eq!(count, 2);
        z.set(0, 0, 0, 1.0); // one pixel now has exactly one zero spectrum
        let (angle, count) = asam_with_degenerates(&y, &z).unwrap();
        assert_eq!(count, 2);
        assert!((angle - std::f64::consts::FRAC_PI_2 / 2.0).abs() < 1e-15);
    }

    #[test]
    fn asam_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let y = random_tensor(&mut rng, 4, 4, 6);
        let z = random_tensor(&mut rng, 4, 4, 6);
        let mut total = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                let mut dot = 0.0;
                let mut ny = 0.0;
                let mut nz = 0.0;
                for k in 0..6 {
                    dot += y.get(i, j, k) * z.get(i, j, k);
                    ny += y.get(i, j, k).powi(2);
                    nz += z.get(i, j, k).powi(2);
                }
                total += (dot / (ny.sqrt() * nz.sqrt())).clamp(-1.0, 1.0).acos();
            }
        }
        assert!((asam(&y, &z).unwrap() - total / 16.0).abs() < 1e-12);
    }

    #[test]
    fn rank_profile_equal_singulars() {
        // orthogonal columns scaled equally: rank 3, dim95 = 3
        let mut m = Mat::zeros(6, 3);
        m.set(0, 0, 2.0);
        m.set(1, 1, 2.0);
        m.set(2, 2, 2.0);
        let p = rank_profile(&m, 0.95, EnergyMode::Sigma).unwrap();
        assert_eq!(p.dim95, 3);
        assert!((p.cum_energy[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_profile_identity_has_flat_spectrum() {
        let p = rank_profile(&Mat::identity(10), 0.95, EnergyMode::Sigma).unwrap();
        assert_eq!(p.dim95, 10);
        for (k, e) in p.cum_energy.iter().enumerate() {
            assert!((e - (k + 1) as f64 / 10.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cum_energy_monotone_and_ends_at_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let data = (0..48).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let m = Mat::from_vec(8, 6, data).unwrap();
        for mode in [EnergyMode::Sigma, EnergyMode::SigmaSq] {
            let p = rank_profile(&m, 0.95, mode).unwrap();
            for w in p.cum_energy.windows(2) {
                assert!(w[1] >= w[0] - 1e-15);
            }
            assert!((p.cum_energy.last().unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn eckart_young_tail_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let data = (0..35).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let m = Mat::from_vec(7, 5, data).unwrap();
        let p = rank_profile(&m, 0.95, EnergyMode::Sigma).unwrap();
        for k in 1..=5usize {
            let (_, diff) = lowrank_approx(&m, k).unwrap();
            let direct = diff.frob_norm();
            assert!(
                (direct - p.approx_error[k - 1]).abs() <= 1e-10 * m.frob_norm().max(1.0),
                "rank {k}: {direct} vs {}",
                p.approx_error[k - 1]
            );
        }
    }

    #[test]
    fn lowrank_full_rank_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        let data = (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let m = Mat::from_vec(6, 5, data).unwrap();
        let (_, diff) = lowrank_approx(&m, 5).unwrap();
        assert!(diff.frob_norm() <= 1e-10 * m.frob_norm());
    }

    #[test]
    fn lowrank_rank_one_input_exact_at_k1() {
        let mut m = Mat::zeros(4, 3);
        for i in 0..4 {
            for j in 0..3 {
                m.set(i, j, (i + 1) as f64 * (j + 1) as f64);
            }
        }
        let (_, diff) = lowrank_approx(&m, 1).unwrap();
        assert!(diff.frob_norm() <= 1e-10 * m.frob_norm());
    }

    #[test]
    fn lowrank_never_worse_than_random_candidates() {
        // Eckart-Young optimality spot check
        let mut rng = ChaCha8Rng::seed_from_u64(28);
        let data = (0..36).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let m = Mat::from_vec(6, 6, data).unwrap();
        let k = 2;
        let (_, diff) = lowrank_approx(&m, k).unwrap();
        let best = diff.frob_norm();
        for _ in 0..50 {
            let ldata = (0..6 * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let rdata = (0..k * 6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let cand = Mat::from_vec(6, k, ldata)
                .unwrap()
                .matmul(&Mat::from_vec(k, 6, rdata).unwrap())
                .unwrap();
            let mut err = 0.0;
            for (x, y) in m.data().iter().zip(cand.data()) {
                err += (x - y) * (x - y);
            }
            assert!(err.sqrt() + 1e-12 >= best);
        }
    }

    #[test]
    fn lowrank_out_of_range_errors() {
        let m = Mat::zeros(3, 4);
        assert!(matches!(lowrank_approx(&m, 0), Err(Error::Index(_))));
        assert!(matches!(lowrank_approx(&m, 4), Err(Error::Index(_))));
    }
}
