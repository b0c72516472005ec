//! Low-rank nonnegative tensor factorization solver for the bilinear model.
//!
//! Minimizes
//!
//! ```text
//! 1/2 ||y - sum_i a_i o c_i - sum_j b_j o m_j||_F^2
//!     + lambda1 sum_i ||a_i||_* + lambda2 sum_j ||b_j||_*
//! ```
//!
//! subject to nonnegativity, the per-pixel sum-to-one constraint on the
//! abundance slices, and the elementwise bound `b <= a_i a_j`. The problem is
//! split with one auxiliary matrix per slice (`v_i` for `a_i`, `e_j` for
//! `b_j`) and solved by ADMM: closed-form slice updates (each slice's
//! subproblem is a scalar-denominator least squares), singular value
//! thresholding for the nuclear-norm proximal steps, elementwise projections,
//! and dual ascent. Slices are updated Gauss-Seidel style with the projection
//! applied to each slice as it is produced (projected block coordinate
//! descent); the residual tensor is maintained incrementally within a sweep
//! and rebuilt from scratch once per iteration, which also makes the recorded
//! reconstruction error exactly the one the metrics module would report for
//! the current state.
//!
//! The solver is single-threaded and has no internal randomness: a given
//! input and config always produce bitwise-identical output.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbm::{forward_parts, interaction_bound, AbundanceState, EndmemberSet};
use crate::metrics;
use crate::svd::thin_svd;
use crate::tensor::{Mat, Tensor3};

/// Elementwise projection used on freshly updated slices.
///
/// `Clamp` is the default: it is the projection onto the nonnegativity
/// constraint and keeps the iteration stable on every forward model.
/// `Abs` mirrors sign-flipped entries instead; it can squeeze out a lower
/// abundance error on purely bilinear scenes but feeds a divergent dual
/// spiral when the data carry model mismatch (post-nonlinear pixels), so it
/// is exposed for ablation only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    /// Mirror negative entries to positive.
    Abs,
    /// Clamp negatives to zero (the default).
    Clamp,
}

/// Solver parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Nuclear-norm weight on abundance maps.
    pub lambda1: f64,
    /// Nuclear-norm weight on interaction abundance maps.
    pub lambda2: f64,
    /// ADMM penalty parameter; fixed over the run.
    pub mu: f64,
    pub max_iter: usize,
    /// Relative change of the reconstruction error that stops the iteration.
    pub tol: f64,
    pub projection: Projection,
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.1,
            lambda2: 0.07,
            mu: 8e-3,
            max_iter: 1000,
            tol: 1e-6,
            projection: Projection::Clamp,
            record_trace: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return Err(Error::Solver(format!("penalty mu must be positive, got {}", self.mu)));
        }
        if !(self.lambda1 >= 0.0) || !self.lambda1.is_finite() || !(self.lambda2 >= 0.0)
            || !self.lambda2.is_finite()
        {
            return Err(Error::Config("nuclear-norm weights must be finite and nonnegative".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::Config("tol must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Per-iteration convergence record.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Trace {
    /// Reconstruction error of the current state against the observed cube.
    pub re: Vec<f64>,
    /// `1/2 ||y - forward(state)||_F^2`.
    pub lagrangian_data_term: Vec<f64>,
    /// `sqrt(sum_i ||a_i - v_i||_F^2)`.
    pub res_a_v: Vec<f64>,
    /// `sqrt(sum_j ||b_j - e_j||_F^2)`.
    pub res_b_e: Vec<f64>,
    /// `||sum_i a_i - P||_F`.
    pub res_asc: Vec<f64>,
    /// Abundance RMSE against ground truth, when one was supplied.
    pub rmse: Vec<f64>,
}

impl Trace {
    pub fn iterations(&self) -> usize {
        self.re.len()
    }
}

/// Full ADMM state: primal cubes, per-slice auxiliaries and duals, the ASC
/// target `p`, plus the residual tensor and abundance sum kept in step with
/// the primal variables.
#[derive(Debug, Clone)]
pub struct AdmmState {
    pub a: Tensor3,
    pub b: Tensor3,
    pub v: Vec<Mat>,
    pub e: Vec<Mat>,
    pub d: Vec<Mat>,
    pub h: Vec<Mat>,
    pub g: Mat,
    pub p: Mat,
    pub iter: usize,
    residual: Tensor3,
    a_sum: Mat,
}

impl AdmmState {
    /// Cold-start state: `v_i` copies the initial abundance slices, `e_j`
    /// and all duals start at zero.
    pub fn new(init: &AbundanceState, y: &Tensor3, ems: &EndmemberSet) -> Result<Self> {
        if y.depth() != ems.bands() {
            return Err(Error::Shape(format!(
                "cube has {} bands, endmembers have {}",
                y.depth(),
                ems.bands()
            )));
        }
        if init.a.n_row() != y.n_row() || init.a.n_col() != y.n_col() {
            return Err(Error::Shape("initial state does not match cube extent".into()));
        }
        if init.a.depth() != ems.r() || init.b.depth() != ems.n_pairs() {
            return Err(Error::Shape("initial state does not match endmember count".into()));
        }
        if !y.is_finite() || !init.a.is_finite() || !init.b.is_finite() {
            return Err(Error::NonFinite("solver input has NaN or Inf".into()));
        }
        let (n_row, n_col) = (y.n_row(), y.n_col());
        let r = ems.r();
        let n_pairs = ems.n_pairs();
        let v = (0..r).map(|i| init.a.slice(i)).collect::<Result<Vec<_>>>()?;
        let mut state = Self {
            a: init.a.clone(),
            b: init.b.clone(),
            v,
            e: vec![Mat::zeros(n_row, n_col); n_pairs],
            d: vec![Mat::zeros(n_row, n_col); r],
            h: vec![Mat::zeros(n_row, n_col); n_pairs],
            g: Mat::zeros(n_row, n_col),
            p: Mat::ones(n_row, n_col),
            iter: 0,
            residual: Tensor3::zeros(n_row, n_col, y.depth()),
            a_sum: Mat::zeros(n_row, n_col),
        };
        state.refresh(y, ems)?;
        Ok(state)
    }

    /// Rebuild the residual tensor and abundance sum from scratch.
    pub fn refresh(&mut self, y: &Tensor3, ems: &EndmemberSet) -> Result<()> {
        let f = forward_parts(&self.a, &self.b, ems)?;
        for ((res, yv), fv) in self
            .residual
            .data_mut()
            .iter_mut()
            .zip(y.data())
            .zip(f.data())
        {
            *res = yv - fv;
        }
        let r = self.a.depth();
        for (p, fiber) in self.a.data().chunks_exact(r.max(1)).enumerate() {
            self.a_sum.data_mut()[p] = fiber.iter().sum();
        }
        Ok(())
    }

    /// Residual tensor `y - forward(a, b)` as of the last sweep.
    pub fn residual(&self) -> &Tensor3 {
        &self.residual
    }

    /// Current per-pixel abundance sum.
    pub fn abundance_sum(&self) -> &Mat {
        &self.a_sum
    }

    /// Closed-form minimizer for abundance slice `i`: all other variables
    /// held fixed, the subproblem decouples per pixel with the scalar
    /// denominator `||c_i||^2 + 2 mu`.
    pub fn update_a_slice(&self, i: usize, ems: &EndmemberSet, cfg: &SolverConfig) -> Mat {
        let c_col = ems.c().col(i);
        let c_norm_sq: f64 = c_col.iter().map(|x| x * x).sum();
        let denom = c_norm_sq + 2.0 * cfg.mu;
        let mu = cfg.mu;
        let r = self.a.depth();
        let (n_row, n_col) = (self.a.n_row(), self.a.n_col());
        let l = self.residual.depth();
        let mut out = Mat::zeros(n_row, n_col);
        for p in 0..n_row * n_col {
            let fiber = &self.residual.data()[p * l..(p + 1) * l];
            let mut t = 0.0;
            for (rv, cv) in fiber.iter().zip(c_col.iter()) {
                t += rv * cv;
            }
            let a_pi = self.a.data()[p * r + i];
            let others = self.a_sum.data()[p] - a_pi;
            let num = t
                + a_pi * c_norm_sq
                + mu * (self.v[i].data()[p] + self.d[i].data()[p] + self.p.data()[p]
                    + self.g.data()[p]
                    - others);
            out.data_mut()[p] = num / denom;
        }
        out
    }

    /// Write a freshly computed abundance slice, keeping the residual and
    /// abundance sum aligned.
    pub fn apply_a_slice(&mut self, i: usize, new: &Mat, ems: &EndmemberSet) {
        let c_col = ems.c().col(i);
        let r = self.a.depth();
        let l = self.residual.depth();
        for p in 0..self.a.n_pixels() {
            let old = self.a.data()[p * r + i];
            let delta = new.data()[p] - old;
            if delta != 0.0 {
                let fiber = &mut self.residual.data_mut()[p * l..(p + 1) * l];
                for (rv, cv) in fiber.iter_mut().zip(c_col.iter()) {
                    *rv -= delta * cv;
                }
                self.a_sum.data_mut()[p] += delta;
                self.a.data_mut()[p * r + i] = new.data()[p];
            }
        }
    }

    /// Closed-form minimizer for interaction slice `j`; single `mu` in the
    /// denominator because `b_j` appears in one penalty term only.
    pub fn update_b_slice(&self, j: usize, ems: &EndmemberSet, cfg: &SolverConfig) -> Mat {
        let m_col = ems.m().col(j);
        let m_norm_sq: f64 = m_col.iter().map(|x| x * x).sum();
        let denom = m_norm_sq + cfg.mu;
        let mu = cfg.mu;
        let n_pairs = self.b.depth();
        let l = self.residual.depth();
        let mut out = Mat::zeros(self.b.n_row(), self.b.n_col());
        for p in 0..self.b.n_pixels() {
            let fiber = &self.residual.data()[p * l..(p + 1) * l];
            let mut t = 0.0;
            for (rv, mv) in fiber.iter().zip(m_col.iter()) {
                t += rv * mv;
            }
            let b_pj = self.b.data()[p * n_pairs + j];
            let num = t + b_pj * m_norm_sq + mu * (self.e[j].data()[p] + self.h[j].data()[p]);
            out.data_mut()[p] = num / denom;
        }
        out
    }

    pub fn apply_b_slice(&mut self, j: usize, new: &Mat, ems: &EndmemberSet) {
        let m_col = ems.m().col(j);
        let n_pairs = self.b.depth();
        let l = self.residual.depth();
        for p in 0..self.b.n_pixels() {
            let old = self.b.data()[p * n_pairs + j];
            let delta = new.data()[p] - old;
            if delta != 0.0 {
                let fiber = &mut self.residual.data_mut()[p * l..(p + 1) * l];
                for (rv, mv) in fiber.iter_mut().zip(m_col.iter()) {
                    *rv -= delta * mv;
                }
                self.b.data_mut()[p * n_pairs + j] = new.data()[p];
            }
        }
    }

    /// Project abundance slices elementwise, with residual fixup.
    pub fn project_a(&mut self, projection: Projection, ems: &EndmemberSet) {
        let r = self.a.depth();
        let l = self.residual.depth();
        for i in 0..r {
            let c_col = ems.c().col(i);
            for p in 0..self.a.n_pixels() {
                let cur = self.a.data()[p * r + i];
                let new = apply_projection(cur, projection);
                if new != cur {
                    let delta = new - cur;
                    let fiber = &mut self.residual.data_mut()[p * l..(p + 1) * l];
                    for (rv, cv) in fiber.iter_mut().zip(c_col.iter()) {
                        *rv -= delta * cv;
                    }
                    self.a_sum.data_mut()[p] += delta;
                    self.a.data_mut()[p * r + i] = new;
                }
            }
        }
    }

    /// Project interaction slices elementwise and cap them with the bound
    /// recomputed from the current (already projected) abundances.
    pub fn project_b(&mut self, projection: Projection, ems: &EndmemberSet) -> Result<()> {
        let n_pairs = self.b.depth();
        if n_pairs == 0 {
            return Ok(());
        }
        let bound = interaction_bound(&self.a, ems.pair_index())?;
        let l = self.residual.depth();
        for j in 0..n_pairs {
            let m_col = ems.m().col(j);
            for p in 0..self.b.n_pixels() {
                let cur = self.b.data()[p * n_pairs + j];
                let new = apply_projection(cur, projection).min(bound.data()[p * n_pairs + j]);
                if new != cur {
                    let delta = new - cur;
                    let fiber = &mut self.residual.data_mut()[p * l..(p + 1) * l];
                    for (rv, mv) in fiber.iter_mut().zip(m_col.iter()) {
                        *rv -= delta * mv;
                    }
                    self.b.data_mut()[p * n_pairs + j] = new;
                }
            }
        }
        Ok(())
    }

    /// Nuclear-norm proximal step for auxiliary `v_i`.
    pub fn update_v(&self, i: usize, cfg: &SolverConfig) -> Result<Mat> {
        let target = mat_sub(&self.a.slice(i)?, &self.d[i]);
        svt(&target, cfg.lambda1 / cfg.mu)
    }

    /// Nuclear-norm proximal step for auxiliary `e_j`.
    pub fn update_e(&self, j: usize, cfg: &SolverConfig) -> Result<Mat> {
        let target = mat_sub(&self.b.slice(j)?, &self.h[j]);
        svt(&target, cfg.lambda2 / cfg.mu)
    }

    /// Dual ascent on every constraint residual.
    pub fn dual_updates(&mut self) {
        let r = self.a.depth();
        for i in 0..r {
            for p in 0..self.a.n_pixels() {
                self.d[i].data_mut()[p] -= self.a.data()[p * r + i] - self.v[i].data()[p];
            }
        }
        let n_pairs = self.b.depth();
        for j in 0..n_pairs {
            for p in 0..self.b.n_pixels() {
                self.h[j].data_mut()[p] -= self.b.data()[p * n_pairs + j] - self.e[j].data()[p];
            }
        }
        for p in 0..self.a.n_pixels() {
            self.g.data_mut()[p] -= self.a_sum.data()[p] - self.p.data()[p];
        }
    }

    /// Primal residual norms recomputed from the current state:
    /// `(||a - v||_F, ||b - e||_F, ||sum a - P||_F)`.
    pub fn primal_residuals(&self) -> (f64, f64, f64) {
        let r = self.a.depth();
        let mut av = 0.0;
        for i in 0..r {
            for p in 0..self.a.n_pixels() {
                let diff = self.a.data()[p * r + i] - self.v[i].data()[p];
                av += diff * diff;
            }
        }
        let n_pairs = self.b.depth();
        let mut be = 0.0;
        for j in 0..n_pairs {
            for p in 0..self.b.n_pixels() {
                let diff = self.b.data()[p * n_pairs + j] - self.e[j].data()[p];
                be += diff * diff;
            }
        }
        let mut asc = 0.0;
        for p in 0..self.a.n_pixels() {
            let diff = self.a_sum.data()[p] - self.p.data()[p];
            asc += diff * diff;
        }
        (av.sqrt(), be.sqrt(), asc.sqrt())
    }

    /// The primal variables as an abundance state.
    pub fn abundances(&self) -> AbundanceState {
        AbundanceState {
            a: self.a.clone(),
            b: self.b.clone(),
        }
    }
}

#[inline]
fn apply_projection(x: f64, projection: Projection) -> f64 {
    match projection {
        Projection::Abs => x.abs(),
        Projection::Clamp => x.max(0.0),
    }
}

fn mat_sub(a: &Mat, b: &Mat) -> Mat {
    let mut out = a.clone();
    for (x, y) in out.data_mut().iter_mut().zip(b.data()) {
        *x -= y;
    }
    out
}

/// Combined projection step: abundances first, then interactions capped by
/// the bound recomputed from the projected abundances.
pub fn project(state: &mut AdmmState, projection: Projection, ems: &EndmemberSet) -> Result<()> {
    state.project_a(projection, ems);
    state.project_b(projection, ems)
}

/// Project a solver result onto the feasible set: renormalize every pixel's
/// abundance vector to sum one (uniform fallback for an all-zero pixel) and
/// re-cap the interactions against the bound of the renormalized abundances.
///
/// The ADMM loop drives the sum-to-one residual down only at the rate the
/// penalty parameter allows, so the raw final iterate can still be a few
/// percent off on its worst pixel; reported abundances go through this step.
pub fn finalize_abundances(state: &mut AbundanceState, ems: &EndmemberSet) -> Result<()> {
    let r = state.a.depth();
    let uniform = 1.0 / r as f64;
    for p in 0..state.a.n_pixels() {
        let fiber = &mut state.a.data_mut()[p * r..(p + 1) * r];
        let sum: f64 = fiber.iter().sum();
        if sum > 0.0 {
            for v in fiber.iter_mut() {
                *v /= sum;
            }
        } else {
            for v in fiber.iter_mut() {
                *v = uniform;
            }
        }
    }
    let n_pairs = state.b.depth();
    if n_pairs > 0 {
        let bound = interaction_bound(&state.a, ems.pair_index())?;
        for (v, cap) in state.b.data_mut().iter_mut().zip(bound.data()) {
            *v = v.min(*cap);
        }
    }
    Ok(())
}

/// Singular value soft thresholding: the proximal operator of
/// `tau * ||.||_*`. `tau == 0` returns the input unchanged.
pub fn svt(m: &Mat, tau: f64) -> Result<Mat> {
    if tau < 0.0 {
        return Err(Error::Config(format!("svt threshold must be nonnegative, got {tau}")));
    }
    if tau == 0.0 {
        return Ok(m.clone());
    }
    let svd = thin_svd(m)?;
    let shrunk: Vec<f64> = svd
        .singular_values
        .iter()
        .map(|&s| (s - tau).max(0.0))
        .collect();
    Ok(svd.reconstruct_with(&shrunk))
}

/// Stop when the relative change of the reconstruction error drops below
/// `tol`. Needs at least two recorded iterations.
pub fn check_convergence(trace: &Trace, cfg: &SolverConfig) -> bool {
    let n = trace.re.len();
    if n < 2 {
        return false;
    }
    let prev = trace.re[n - 2];
    let cur = trace.re[n - 1];
    (cur - prev).abs() / prev.max(f64::EPSILON) < cfg.tol
}

/// Run the solver; convenience wrapper over [`solve_admm`] returning only
/// the primal abundances.
pub fn solve(
    y: &Tensor3,
    ems: &EndmemberSet,
    cfg: &SolverConfig,
    init: &AbundanceState,
) -> Result<(AbundanceState, Trace)> {
    let (state, trace) = solve_admm(y, ems, cfg, init, None)?;
    Ok((state.abundances(), trace))
}

/// Run the solver, optionally tracking abundance RMSE against a reference
/// cube each iteration, and return the full ADMM state.
pub fn solve_admm(
    y: &Tensor3,
    ems: &EndmemberSet,
    cfg: &SolverConfig,
    init: &AbundanceState,
    a_reference: Option<&Tensor3>,
) -> Result<(AdmmState, Trace)> {
    cfg.validate()?;
    let mut state = AdmmState::new(init, y, ems)?;
    let mut trace = Trace::default();
    let denom_re = (y.n_pixels() * y.depth()) as f64;

    for _ in 0..cfg.max_iter {
        // Projections are applied slice by slice inside the sweeps. A whole
        // unprojected sweep is unusable here: the interaction spectra are
        // nearly collinear, so a free sweep fits the residual with huge
        // cancelling coefficients that the later projection then mangles,
        // and the iteration blows up. Clamping each slice as it is produced
        // keeps every iterate inside a compact box.
        for i in 0..ems.r() {
            let mut new = state.update_a_slice(i, ems, cfg);
            for v in new.data_mut() {
                *v = apply_projection(*v, cfg.projection);
            }
            state.apply_a_slice(i, &new, ems);
        }

        // Bound from the freshly projected abundances.
        let n_pairs = ems.n_pairs();
        let bound = interaction_bound(&state.a, ems.pair_index())?;
        for j in 0..n_pairs {
            let mut new = state.update_b_slice(j, ems, cfg);
            for (p, v) in new.data_mut().iter_mut().enumerate() {
                *v = apply_projection(*v, cfg.projection).min(bound.data()[p * n_pairs + j]);
            }
            state.apply_b_slice(j, &new, ems);
        }

        for i in 0..ems.r() {
            state.v[i] = state.update_v(i, cfg)?;
        }
        for j in 0..ems.n_pairs() {
            state.e[j] = state.update_e(j, cfg)?;
        }
        state.dual_updates();
        state.iter += 1;

        // Exact residual for the next sweep; its norm is the exact RE.
        state.refresh(y, ems)?;
        let data_sq = state.residual.frob_norm_sq();
        trace.re.push((data_sq / denom_re).sqrt());
        if cfg.record_trace {
            trace.lagrangian_data_term.push(0.5 * data_sq);
            let (av, be, asc) = state.primal_residuals();
            trace.res_a_v.push(av);
            trace.res_b_e.push(be);
            trace.res_asc.push(asc);
            if let Some(a_ref) = a_reference {
                trace.rmse.push(metrics::rmse(a_ref, &state.a)?);
            }
        }
        if check_convergence(&trace, cfg) {
            break;
        }
    }
    Ok((state, trace))
}
