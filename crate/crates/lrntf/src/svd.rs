//! Thin singular value decomposition via one-sided Jacobi rotations.
//!
//! The nuclear-norm proximal step needs every singular value, so a full
//! (non-randomized) decomposition is computed. One-sided Jacobi orthogonalizes
//! the columns of the working matrix by plane rotations; it is simple, has
//! high relative accuracy, and comfortably meets the 1e-10 reconstruction and
//! orthogonality contract on the map sizes this crate works with.

use crate::error::{Error, Result};
use crate::tensor::Mat;

/// Thin SVD `m = u * diag(singular_values) * v^T` with `k = min(rows, cols)`
/// columns in `u` (rows x k) and `v` (cols x k). Singular values are
/// nonnegative and nonincreasing.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: Mat,
    pub singular_values: Vec<f64>,
    pub v: Mat,
}

impl ThinSvd {
    /// Reconstruct `u * diag(s) * v^T`, optionally with shrunk values.
    pub fn reconstruct_with(&self, values: &[f64]) -> Mat {
        let rows = self.u.rows();
        let cols = self.v.rows();
        let mut out = Mat::zeros(rows, cols);
        for (j, &s) in values.iter().enumerate() {
            if s == 0.0 {
                continue;
            }
            for r in 0..rows {
                let usr = s * self.u.get(r, j);
                if usr == 0.0 {
                    continue;
                }
                for c in 0..cols {
                    let cur = out.get(r, c);
                    out.set(r, c, cur + usr * self.v.get(c, j));
                }
            }
        }
        out
    }
}

const MAX_SWEEPS: usize = 64;

/// Compute the thin SVD of `m`. Fails on non-finite input.
pub fn thin_svd(m: &Mat) -> Result<ThinSvd> {
    if !m.is_finite() {
        return Err(Error::NonFinite("svd input has NaN or Inf".into()));
    }
    if m.rows() >= m.cols() {
        let (u, s, v) = jacobi_tall(m);
        Ok(ThinSvd {
            u,
            singular_values: s,
            v,
        })
    } else {
        // Work on the transpose and swap the factors back.
        let (u, s, v) = jacobi_tall(&m.transpose());
        Ok(ThinSvd {
            u: v,
            singular_values: s,
            v: u,
        })
    }
}

/// One-sided Jacobi on a tall (rows >= cols) matrix. Returns (U, s, V).
fn jacobi_tall(a: &Mat) -> (Mat, Vec<f64>, Mat) {
    let m = a.rows();
    let n = a.cols();
    // Column-major working copies of A and V = I.
    let mut w: Vec<Vec<f64>> = (0..n).map(|c| a.col(c)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|c| {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            e
        })
        .collect();

    let tol = f64::EPSILON * 8.0;
    for _sweep in 0..MAX_SWEEPS {
        let mut norms_sq: Vec<f64> = w.iter().map(|col| col.iter().map(|x| x * x).sum()).collect();
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = norms_sq[p];
                let beta = norms_sq[q];
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma: f64 = w[p].iter().zip(w[q].iter()).map(|(x, y)| x * y).sum();
                if gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut w, p, q, c, s);
                rotate_pair(&mut v, p, q, c, s);
                let cs2 = 2.0 * c * s * gamma;
                norms_sq[p] = c * c * alpha - cs2 + s * s * beta;
                norms_sq[q] = s * s * alpha + cs2 + c * c * beta;
            }
        }
        if !rotated {
            break;
        }
    }

    // Column norms are the singular values; sort them nonincreasing.
    let mut sigma: Vec<f64> = w
        .iter()
        .map(|col| col.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap());
    let w_sorted: Vec<Vec<f64>> = order.iter().map(|&i| w[i].clone()).collect();
    let v_sorted: Vec<Vec<f64>> = order.iter().map(|&i| v[i].clone()).collect();
    sigma = order.iter().map(|&i| sigma[i]).collect();
    w = w_sorted;
    v = v_sorted;

    // Normalize U columns; exactly-zero singular directions get an
    // orthonormal completion so U always has orthonormal columns.
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    for (j, col) in w.iter().enumerate() {
        if sigma[j] > 0.0 {
            u_cols.push(col.iter().map(|x| x / sigma[j]).collect());
        } else {
            u_cols.push(complete_column(&u_cols, m));
        }
    }

    let mut u_mat = Mat::zeros(m, n);
    for (j, col) in u_cols.iter().enumerate() {
        for (r, &x) in col.iter().enumerate() {
            u_mat.set(r, j, x);
        }
    }
    let mut v_mat = Mat::zeros(n, n);
    for (j, col) in v.iter().enumerate() {
        for (r, &x) in col.iter().enumerate() {
            v_mat.set(r, j, x);
        }
    }
    (u_mat, sigma, v_mat)
}

#[inline]
fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = if p < q { (p, q) } else { (q, p) };
    let (head, tail) = cols.split_at_mut(hi);
    let (cp, cq) = if p < q {
        (&mut head[lo], &mut tail[0])
    } else {
        (&mut tail[0], &mut head[lo])
    };
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = *x;
        let yq = *y;
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Gram-Schmidt a coordinate vector against existing orthonormal columns.
fn complete_column(existing: &[Vec<f64>], m: usize) -> Vec<f64> {
    for cand in 0..m {
        let mut r = vec![0.0; m];
        r[cand] = 1.0;
        for col in existing {
            let dot: f64 = col.iter().zip(r.iter()).map(|(x, y)| x * y).sum();
            for (ri, ci) in r.iter_mut().zip(col.iter()) {
                *ri -= dot * ci;
            }
        }
        let norm_sq: f64 = r.iter().map(|x| x * x).sum();
        if norm_sq > 0.25 {
            let norm = norm_sq.sqrt();
            for ri in r.iter_mut() {
                *ri /= norm;
            }
            return r;
        }
    }
    // Unreachable for m >= number of existing columns + 1.
    vec![0.0; m]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
        let data = (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Mat::from_vec(r, c, data).unwrap()
    }

    fn check_contract(m: &Mat) {
        let svd = thin_svd(m).unwrap();
        let k = m.rows().min(m.cols());
        assert_eq!(svd.u.shape(), (m.rows(), k));
        assert_eq!(svd.v.shape(), (m.cols(), k));
        assert_eq!(svd.singular_values.len(), k);
        // nonincreasing, nonnegative
        for w in svd.singular_values.windows(2) {
            assert!(w[0] >= w[1]);
        }
        assert!(svd.singular_values.iter().all(|&s| s >= 0.0));
        // reconstruction
        let rec = svd.reconstruct_with(&svd.singular_values);
        let mut err = 0.0;
        for (x, y) in rec.data().iter().zip(m.data()) {
            err += (x - y) * (x - y);
        }
        assert!(
            err.sqrt() <= 1e-10 * m.frob_norm().max(1.0),
            "reconstruction error {} too large",
            err.sqrt()
        );
        // orthonormal columns
        for mat in [&svd.u, &svd.v] {
            let gram = mat.transpose().matmul(mat).unwrap();
            let mut res = 0.0;
            for i in 0..k {
                for j in 0..k {
                    let want = if i == j { 1.0 } else { 0.0 };
                    res += (gram.get(i, j) - want).powi(2);
                }
            }
            assert!(res.sqrt() <= 1e-10, "orthogonality residual {}", res.sqrt());
        }
    }

    #[test]
    fn diagonal_input() {
        let m = Mat::from_vec(2, 2, vec![3.0, 0.0, 0.0, 1.0]).unwrap();
        let svd = thin_svd(&m).unwrap();
        assert!((svd.singular_values[0] - 3.0).abs() < 1e-12);
        assert!((svd.singular_values[1] - 1.0).abs() < 1e-12);
        check_contract(&m);
    }

    #[test]
    fn rank_one_input() {
        let u = [0.6, 0.8];
        let v = [0.0, 1.0, 0.0];
        let mut m = Mat::zeros(2, 3);
        for i in 0..2 {
            for j in 0..3 {
                m.set(i, j, u[i] * v[j]);
            }
        }
        let svd = thin_svd(&m).unwrap();
        assert!((svd.singular_values[0] - 1.0).abs() < 1e-12);
        for &s in &svd.singular_values[1..] {
            assert!(s.abs() < 1e-12);
        }
        check_contract(&m);
    }

    #[test]
    fn zero_matrix_has_orthonormal_factors() {
        check_contract(&Mat::zeros(4, 3));
        check_contract(&Mat::zeros(3, 5));
    }

    #[test]
    fn random_rectangular_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        check_contract(&random_mat(&mut rng, 5, 7));
        check_contract(&random_mat(&mut rng, 7, 5));
        check_contract(&random_mat(&mut rng, 1, 6));
        check_contract(&random_mat(&mut rng, 6, 1));
    }

    #[test]
    fn contract_holds_on_many_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for trial in 0..1000 {
            let r = rng.gen_range(1..=20);
            let c = rng.gen_range(1..=20);
            let mut m = random_mat(&mut rng, r, c);
            if trial % 5 == 0 {
                // make it rank deficient
                let rank = rng.gen_range(0..=r.min(c));
                let left = random_mat(&mut rng, r, rank.max(1));
                let right = random_mat(&mut rng, rank.max(1), c);
                m = left.matmul(&right).unwrap();
                if rank == 0 {
                    m = Mat::zeros(r, c);
                }
            }
            check_contract(&m);
        }
    }

    #[test]
    fn rejects_non_finite() {
        let m = Mat::from_vec(1, 2, vec![1.0, f64::INFINITY]).unwrap();
        assert!(matches!(thin_svd(&m), Err(Error::NonFinite(_))));
    }

    #[test]
    fn matches_external_svd_values() {
        // cross-check singular values against an independent implementation
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let r = rng.gen_range(1..=12);
            let c = rng.gen_range(1..=12);
            let m = random_mat(&mut rng, r, c);
            let ours = thin_svd(&m).unwrap();
            let na = nalgebra::DMatrix::from_row_slice(r, c, m.data());
            let mut theirs: Vec<f64> = na.svd(false, false).singular_values.iter().copied().collect();
            theirs.sort_by(|a, b| b.partial_cmp(a).unwrap());
            for (a, b) in ours.singular_values.iter().zip(theirs.iter()) {
                assert!((a - b).abs() <= 1e-10 * theirs[0].max(1.0));
            }
        }
    }
}
