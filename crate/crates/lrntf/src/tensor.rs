//! Dense third-order tensor and matrix primitives.
//!
//! A [`Tensor3`] stores an `n_row x n_col x depth` array of `f64` in row-major
//! order over `(row, col, depth)`: the depth index varies fastest, so the
//! spectrum of one pixel is a contiguous run. This layout is fixed and is the
//! layout of the on-disk cube format. [`Mat`] is a plain row-major dense
//! matrix used for frontal slices, endmember matrices and the solver's
//! auxiliary variables.

use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Mat
// ---------------------------------------------------------------------------

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    /// Zero matrix of the given size.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Matrix with every entry equal to `v`.
    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![v; rows * cols],
        }
    }

    /// All-ones matrix.
    pub fn ones(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 1.0)
    }

    /// Identity matrix of size `n x n`.
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Build from a row-major data vector; fails if the length is wrong.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// Row-major backing slice.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Copy of column `c`.
    pub fn col(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    /// Matrix product `self * other`.
    pub fn matmul(&self, other: &Mat) -> Result<Mat> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "matmul: {}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * out.cols + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    /// Sum of squared entries.
    pub fn frob_norm_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn frob_norm(&self) -> f64 {
        self.frob_norm_sq().sqrt()
    }

    /// True when every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

// ---------------------------------------------------------------------------
// Tensor3
// ---------------------------------------------------------------------------

/// Dense third-order tensor, row-major over `(row, col, depth)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    n_row: usize,
    n_col: usize,
    depth: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    /// Zero tensor of the given dimensions.
    pub fn zeros(n_row: usize, n_col: usize, depth: usize) -> Self {
        Self {
            n_row,
            n_col,
            depth,
            data: vec![0.0; n_row * n_col * depth],
        }
    }

    /// Build from a row-major data vector; fails on length mismatch or
    /// non-finite entries.
    pub fn from_vec(n_row: usize, n_col: usize, depth: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_row * n_col * depth {
            return Err(Error::Shape(format!(
                "tensor data length {} does not match {n_row}x{n_col}x{depth}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!(
                "tensor entry at flat index {pos} is not finite"
            )));
        }
        Ok(Self {
            n_row,
            n_col,
            depth,
            data,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n_row, self.n_col, self.depth)
    }

    pub fn n_row(&self) -> usize {
        self.n_row
    }

    pub fn n_col(&self) -> usize {
        self.n_col
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Number of pixels `n_row * n_col`.
    pub fn n_pixels(&self) -> usize {
        self.n_row * self.n_col
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n_col + j) * self.depth + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.idx(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let at = self.idx(i, j, k);
        self.data[at] = v;
    }

    /// Row-major backing slice.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// The contiguous depth fiber of pixel `(i, j)`.
    #[inline]
    pub fn pixel(&self, i: usize, j: usize) -> &[f64] {
        let at = (i * self.n_col + j) * self.depth;
        &self.data[at..at + self.depth]
    }

    #[inline]
    pub fn pixel_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let at = (i * self.n_col + j) * self.depth;
        &mut self.data[at..at + self.depth]
    }

    /// Frontal slice at depth `k`, returned as an explicit copy.
    ///
    /// Writing to the returned matrix does not mutate the tensor; use
    /// [`Tensor3::set_slice`] to write a slice back.
    pub fn slice(&self, k: usize) -> Result<Mat> {
        if k >= self.depth {
            return Err(Error::Index(format!(
                "slice index {k} out of range for depth {}",
                self.depth
            )));
        }
        let mut m = Mat::zeros(self.n_row, self.n_col);
        for i in 0..self.n_row {
            for j in 0..self.n_col {
                m.set(i, j, self.data[self.idx(i, j, k)]);
            }
        }
        Ok(m)
    }

    /// Overwrite the frontal slice at depth `k`.
    pub fn set_slice(&mut self, k: usize, m: &Mat) -> Result<()> {
        if k >= self.depth {
            return Err(Error::Index(format!(
                "slice index {k} out of range for depth {}",
                self.depth
            )));
        }
        if m.shape() != (self.n_row, self.n_col) {
            return Err(Error::Shape(format!(
                "slice is {}x{}, tensor wants {}x{}",
                m.rows(),
                m.cols(),
                self.n_row,
                self.n_col
            )));
        }
        for i in 0..self.n_row {
            for j in 0..self.n_col {
                let at = self.idx(i, j, k);
                self.data[at] = m.get(i, j);
            }
        }
        Ok(())
    }

    /// Mode-3 product with `x`: contracts the depth dimension, giving a
    /// tensor of dims `(n_row, n_col, x.rows)` with entries
    /// `out(i, j, q) = sum_k self(i, j, k) * x(q, k)`.
    pub fn mode3_product(&self, x: &Mat) -> Result<Tensor3> {
        if x.cols() != self.depth {
            return Err(Error::Shape(format!(
                "mode-3 product: matrix has {} cols, tensor depth is {}",
                x.cols(),
                self.depth
            )));
        }
        let out_depth = x.rows();
        let mut out = Tensor3::zeros(self.n_row, self.n_col, out_depth);
        let n_pix = self.n_pixels();
        for p in 0..n_pix {
            let fiber = &self.data[p * self.depth..(p + 1) * self.depth];
            let out_fiber = &mut out.data[p * out_depth..(p + 1) * out_depth];
            for (q, o) in out_fiber.iter_mut().enumerate() {
                let row = &x.data()[q * self.depth..(q + 1) * self.depth];
                let mut acc = 0.0;
                for (t, r) in fiber.iter().zip(row.iter()) {
                    acc += t * r;
                }
                *o = acc;
            }
        }
        Ok(out)
    }

    /// Accumulate the outer product of a matrix and a vector:
    /// `self(i, j, k) += a(i, j) * c(k)`.
    pub fn outer_accumulate(&mut self, a: &Mat, c: &[f64]) -> Result<()> {
        if a.shape() != (self.n_row, self.n_col) {
            return Err(Error::Shape(format!(
                "outer accumulate: matrix is {}x{}, tensor wants {}x{}",
                a.rows(),
                a.cols(),
                self.n_row,
                self.n_col
            )));
        }
        if c.len() != self.depth {
            return Err(Error::Shape(format!(
                "outer accumulate: vector length {} does not match depth {}",
                c.len(),
                self.depth
            )));
        }
        for (p, &w) in a.data().iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let fiber = &mut self.data[p * self.depth..(p + 1) * self.depth];
            for (f, &cv) in fiber.iter_mut().zip(c.iter()) {
                *f += w * cv;
            }
        }
        Ok(())
    }

    /// Sum of squared entries (the squared Frobenius norm).
    pub fn frob_norm_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn frob_norm(&self) -> f64 {
        self.frob_norm_sq().sqrt()
    }

    /// True when every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}
