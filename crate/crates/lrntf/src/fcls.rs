//! Fully constrained least squares: per-pixel simplex-constrained unmixing.
//!
//! Each pixel solves `min ||y - C a||` subject to `a >= 0` and `sum a = 1`.
//! The sum constraint is enforced by appending a heavily weighted all-ones
//! row to the system, after which a Lawson-Hanson active-set nonnegative
//! least squares gives the exact small-R solution. Inner unconstrained
//! solves use Householder QR (no normal equations), so accuracy is not lost
//! to squaring the condition number. The returned vector is renormalized so
//! the sum constraint holds exactly, not just up to the augmentation weight.

use crate::error::{Error, Result};
use crate::tensor::{Mat, Tensor3};

/// Active-set solver knobs.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct FclsConfig {
    /// Outer active-set iterations before giving up.
    pub max_iter: usize,
    /// Relative dual-feasibility (KKT) tolerance.
    pub tol: f64,
    /// Weight of the appended all-ones row relative to the data rows.
    pub asc_weight: f64,
}

impl Default for FclsConfig {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-10,
            asc_weight: 1e3,
        }
    }
}

impl FclsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::Config("fcls max_iter must be positive".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("fcls tol must be positive".into()));
        }
        if !(self.asc_weight > 0.0) {
            return Err(Error::Config("fcls asc_weight must be positive".into()));
        }
        Ok(())
    }
}

/// Solve one pixel. Returns abundances on the simplex.
pub fn fcls_pixel(y: &[f64], c: &Mat, cfg: &FclsConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let l = c.rows();
    let r = c.cols();
    if y.len() != l {
        return Err(Error::Shape(format!(
            "pixel has {} bands, endmembers have {l}",
            y.len()
        )));
    }
    if y.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("pixel spectrum has NaN or Inf".into()));
    }
    // Augmented column-major system: data rows then the weighted ones row.
    let m = l + 1;
    let cols: Vec<Vec<f64>> = (0..r)
        .map(|k| {
            let mut col = c.col(k);
            col.push(cfg.asc_weight);
            col
        })
        .collect();
    let mut rhs = y.to_vec();
    rhs.push(cfg.asc_weight);

    let mut x = nnls(&cols, &rhs, m, cfg)?;
    let sum: f64 = x.iter().sum();
    if sum > 0.0 {
        for v in x.iter_mut() {
            *v /= sum;
        }
    } else {
        x = vec![1.0 / r as f64; r];
    }
    Ok(x)
}

/// Apply [`fcls_pixel`] to every pixel of a cube. The output abundance cube
/// has one slice per endmember; failures carry the pixel coordinates.
pub fn fcls_cube(y: &Tensor3, c: &Mat, cfg: &FclsConfig) -> Result<Tensor3> {
    if y.depth() != c.rows() {
        return Err(Error::Shape(format!(
            "cube has {} bands, endmembers have {}",
            y.depth(),
            c.rows()
        )));
    }
    let r = c.cols();
    let mut out = Tensor3::zeros(y.n_row(), y.n_col(), r);
    for i in 0..y.n_row() {
        for j in 0..y.n_col() {
            let a = fcls_pixel(y.pixel(i, j), c, cfg).map_err(|e| match e {
                Error::FclsNonConvergence { best, .. } => Error::FclsNonConvergence {
                    pixel: Some((i, j)),
                    best,
                },
                other => other,
            })?;
            out.pixel_mut(i, j).copy_from_slice(&a);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Lawson-Hanson NNLS on a column-major system
// ---------------------------------------------------------------------------

fn nnls(cols: &[Vec<f64>], rhs: &[f64], m: usize, cfg: &FclsConfig) -> Result<Vec<f64>> {
    let n = cols.len();
    let mut x = vec![0.0; n];
    let mut passive = vec![false; n];

    // Relative scale for the dual-feasibility test.
    let grad0: Vec<f64> = cols.iter().map(|col| dot(col, rhs)).collect();
    let scale = grad0.iter().fold(0.0f64, |acc, g| acc.max(g.abs())).max(1.0);
    let dual_tol = cfg.tol * scale;

    for _ in 0..cfg.max_iter {
        // Dual vector w = A^T (rhs - A x).
        let residual = residual_of(cols, rhs, &x, m);
        let mut best = None;
        for j in 0..n {
            if passive[j] {
                continue;
            }
            let w = dot(&cols[j], &residual);
            if w > dual_tol && best.map_or(true, |(_, bw)| w > bw) {
                best = Some((j, w));
            }
        }
        let Some((enter, _)) = best else {
            return Ok(x); // KKT satisfied
        };
        passive[enter] = true;

        // Inner loop: restrict to the passive set, back off along the
        // segment when the unconstrained solve leaves the feasible cone.
        loop {
            let active: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let sub_cols: Vec<&[f64]> = active.iter().map(|&j| cols[j].as_slice()).collect();
            let z = lstsq_qr(&sub_cols, rhs, m);
            if z.iter().all(|&v| v > 0.0) {
                for (zi, &j) in z.iter().zip(active.iter()) {
                    x[j] = *zi;
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            let mut leave = None;
            for (zi, &j) in z.iter().zip(active.iter()) {
                if *zi <= 0.0 {
                    let denom = x[j] - zi;
                    if denom > 0.0 {
                        let ratio = x[j] / denom;
                        if ratio < alpha {
                            alpha = ratio;
                            leave = Some(j);
                        }
                    } else {
                        alpha = 0.0;
                        leave = Some(j);
                    }
                }
            }
            let Some(leave) = leave else {
                break; // all nonpositive z already at zero; nothing to move
            };
            for (zi, &j) in z.iter().zip(active.iter()) {
                x[j] += alpha * (zi - x[j]);
            }
            x[leave] = 0.0;
            passive[leave] = false;
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    Err(Error::FclsNonConvergence {
        pixel: None,
        best: x,
    })
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn residual_of(cols: &[Vec<f64>], rhs: &[f64], x: &[f64], m: usize) -> Vec<f64> {
    let mut res = rhs.to_vec();
    for (col, &xi) in cols.iter().zip(x.iter()) {
        if xi == 0.0 {
            continue;
        }
        for (r, &c) in res.iter_mut().zip(col.iter()) {
            *r -= xi * c;
        }
    }
    debug_assert_eq!(res.len(), m);
    res
}

/// Least squares `min ||A z - b||` via Householder QR on a column subset.
fn lstsq_qr(cols: &[&[f64]], b: &[f64], m: usize) -> Vec<f64> {
    let n = cols.len();
    debug_assert!(m >= n);
    // Column-major working copy.
    let mut a: Vec<Vec<f64>> = cols.iter().map(|c| c.to_vec()).collect();
    let mut rhs = b.to_vec();

    for k in 0..n {
        // Householder vector for column k below the diagonal.
        let norm_sq: f64 = a[k][k..].iter().map(|x| x * x).sum();
        if norm_sq == 0.0 {
            continue;
        }
        let alpha = -a[k][k].signum() * norm_sq.sqrt();
        let mut v: Vec<f64> = a[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm_sq: f64 = v.iter().map(|x| x * x).sum();
        if vnorm_sq == 0.0 {
            continue;
        }
        // Apply the reflector to remaining columns and to the rhs.
        for col in a.iter_mut().skip(k) {
            let proj: f64 = v.iter().zip(col[k..].iter()).map(|(x, y)| x * y).sum();
            let f = 2.0 * proj / vnorm_sq;
            for (vi, ci) in v.iter().zip(col[k..].iter_mut()) {
                *ci -= f * vi;
            }
        }
        let proj: f64 = v.iter().zip(rhs[k..].iter()).map(|(x, y)| x * y).sum();
        let f = 2.0 * proj / vnorm_sq;
        for (vi, ri) in v.iter().zip(rhs[k..].iter_mut()) {
            *ri -= f * vi;
        }
    }

    // Back substitution on the upper-triangular factor.
    let mut z = vec![0.0; n];
    for k in (0..n).rev() {
        let mut acc = rhs[k];
        for j in (k + 1)..n {
            acc -= a[j][k] * z[j];
        }
        let diag = a[k][k];
        z[k] = if diag != 0.0 { acc / diag } else { 0.0 };
    }
    z
}
