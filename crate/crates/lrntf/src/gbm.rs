//! Generalized bilinear mixing model.
//!
//! A pixel spectrum is a nonnegative combination of endmember spectra plus
//! pairwise interaction terms: the interaction "endmember" for pair `(i, j)`
//! is the elementwise (Hadamard) product of endmembers `i` and `j`, and its
//! per-pixel coefficient is bounded by the product of the two abundances.
//! Interaction columns are ordered lexicographically over `(i, j)` with
//! `i < j`; that ordering is the single source of truth for every module.

use crate::error::{Error, Result};
use crate::tensor::{Mat, Tensor3};

/// Endmember bookkeeping: the spectra matrix `C` (bands x R), optional
/// labels, and the derived interaction matrix `M` (bands x R(R-1)/2).
#[derive(Debug, Clone)]
pub struct EndmemberSet {
    c: Mat,
    m: Mat,
    names: Vec<String>,
    pair_index: Vec<(usize, usize)>,
}

impl EndmemberSet {
    /// Build from a spectra matrix; columns must be nonnegative. Labels
    /// default to `em_k`. A single-endmember set is allowed (no pairs);
    /// [`build_interactions`] itself requires at least two.
    pub fn new(c: Mat, names: Option<Vec<String>>) -> Result<Self> {
        let r = c.cols();
        if r == 0 {
            return Err(Error::Config("endmember matrix has no columns".into()));
        }
        if c.data().iter().any(|&x| x < 0.0) {
            return Err(Error::Config("endmember reflectances must be nonnegative".into()));
        }
        if !c.is_finite() {
            return Err(Error::NonFinite("endmember matrix has NaN or Inf".into()));
        }
        let names = match names {
            Some(n) => {
                if n.len() != r {
                    return Err(Error::Config(format!(
                        "{} names for {r} endmembers",
                        n.len()
                    )));
                }
                n
            }
            None => (0..r).map(|k| format!("em_{k}")).collect(),
        };
        let (m, pair_index) = if r >= 2 {
            build_interactions(&c)?
        } else {
            (Mat::zeros(c.rows(), 0), Vec::new())
        };
        Ok(Self {
            c,
            m,
            names,
            pair_index,
        })
    }

    /// Endmember spectra, bands x R.
    pub fn c(&self) -> &Mat {
        &self.c
    }

    /// Interaction spectra, bands x R(R-1)/2.
    pub fn m(&self) -> &Mat {
        &self.m
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Lexicographic `(i, j)` pairs, `i < j`, one per interaction column.
    pub fn pair_index(&self) -> &[(usize, usize)] {
        &self.pair_index
    }

    /// Number of spectral bands.
    pub fn bands(&self) -> usize {
        self.c.rows()
    }

    /// Number of endmembers R.
    pub fn r(&self) -> usize {
        self.c.cols()
    }

    /// Number of interaction pairs R(R-1)/2.
    pub fn n_pairs(&self) -> usize {
        self.pair_index.len()
    }
}

/// Build the interaction endmember matrix: one column per pair `(i, j)`,
/// `i < j` in lexicographic order, equal to `c_i` Hadamard `c_j`.
pub fn build_interactions(c: &Mat) -> Result<(Mat, Vec<(usize, usize)>)> {
    let r = c.cols();
    if r < 2 {
        return Err(Error::Config(format!(
            "interactions need at least 2 endmembers, got {r}"
        )));
    }
    let l = c.rows();
    let n_pairs = r * (r - 1) / 2;
    let mut m = Mat::zeros(l, n_pairs);
    let mut pair_index = Vec::with_capacity(n_pairs);
    let mut col = 0;
    for i in 0..r {
        for j in (i + 1)..r {
            for b in 0..l {
                m.set(b, col, c.get(b, i) * c.get(b, j));
            }
            pair_index.push((i, j));
            col += 1;
        }
    }
    Ok((m, pair_index))
}

/// Abundance cube `a` (n_row x n_col x R) and interaction abundance cube
/// `b` (n_row x n_col x R(R-1)/2).
#[derive(Debug, Clone)]
pub struct AbundanceState {
    pub a: Tensor3,
    pub b: Tensor3,
}

impl AbundanceState {
    pub fn new(a: Tensor3, b: Tensor3) -> Result<Self> {
        if a.n_row() != b.n_row() || a.n_col() != b.n_col() {
            return Err(Error::Shape(format!(
                "abundance cube is {}x{}, interaction cube is {}x{}",
                a.n_row(),
                a.n_col(),
                b.n_row(),
                b.n_col()
            )));
        }
        let r = a.depth();
        if b.depth() != r * (r.saturating_sub(1)) / 2 {
            return Err(Error::Shape(format!(
                "interaction cube depth {} does not match R(R-1)/2 for R = {r}",
                b.depth()
            )));
        }
        Ok(Self { a, b })
    }

    /// Zero state of the given spatial size for R endmembers.
    pub fn zeros(n_row: usize, n_col: usize, r: usize) -> Self {
        Self {
            a: Tensor3::zeros(n_row, n_col, r),
            b: Tensor3::zeros(n_row, n_col, r * (r.saturating_sub(1)) / 2),
        }
    }
}

/// Noise-free forward synthesis: `sum_i a_i o c_i + sum_j b_j o m_j`,
/// returning an `n_row x n_col x bands` cube.
pub fn forward(state: &AbundanceState, ems: &EndmemberSet) -> Result<Tensor3> {
    forward_parts(&state.a, &state.b, ems)
}

/// [`forward`] on the two cubes directly; the single accumulation path so
/// callers holding the cubes separately get bitwise-identical output.
pub fn forward_parts(a: &Tensor3, b: &Tensor3, ems: &EndmemberSet) -> Result<Tensor3> {
    if a.depth() != ems.r() || b.depth() != ems.n_pairs() {
        return Err(Error::Shape(format!(
            "state has {} abundance and {} interaction slices, endmembers want {} and {}",
            a.depth(),
            b.depth(),
            ems.r(),
            ems.n_pairs()
        )));
    }
    if a.n_row() != b.n_row() || a.n_col() != b.n_col() {
        return Err(Error::Shape("abundance and interaction extents differ".into()));
    }
    let mut out = Tensor3::zeros(a.n_row(), a.n_col(), ems.bands());
    for i in 0..ems.r() {
        out.outer_accumulate(&a.slice(i)?, &ems.c().col(i))?;
    }
    for j in 0..ems.n_pairs() {
        out.outer_accumulate(&b.slice(j)?, &ems.m().col(j))?;
    }
    Ok(out)
}

/// Elementwise upper bound for interaction abundances: entry
/// `(k1, k2, (i, j))` is `a(k1, k2, i) * a(k1, k2, j)`.
pub fn interaction_bound(a: &Tensor3, pair_index: &[(usize, usize)]) -> Result<Tensor3> {
    let r = a.depth();
    for &(i, j) in pair_index {
        if i >= r || j >= r {
            return Err(Error::Shape(format!(
                "pair ({i}, {j}) out of range for {r} abundance slices"
            )));
        }
    }
    let mut out = Tensor3::zeros(a.n_row(), a.n_col(), pair_index.len());
    let n_pairs = pair_index.len();
    for p in 0..a.n_pixels() {
        let fiber = &a.data()[p * r..(p + 1) * r];
        let out_fiber = &mut out.data_mut()[p * n_pairs..(p + 1) * n_pairs];
        for (o, &(i, j)) in out_fiber.iter_mut().zip(pair_index.iter()) {
            *o = fiber[i] * fiber[j];
        }
    }
    Ok(out)
}
