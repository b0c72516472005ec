//! File formats: raw binary cubes with JSON sidecar headers, grayscale PGM
//! map rendering, and the per-iteration trace CSV.
//!
//! A cube lives in two files: `<path>` holds the raw little-endian `f64`
//! payload in the tensor's row-major `(row, col, band)` order, and
//! `<path>.json` holds a single-line JSON header naming the dimensions and
//! layout. Writing then reading reproduces the tensor bit for bit.

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::Trace;
use crate::tensor::{Mat, Tensor3};

pub const CUBE_DTYPE: &str = "f64";
pub const CUBE_ORDER: &str = "row-major (row,col,band)";
pub const CUBE_ENDIANNESS: &str = "little";

/// JSON sidecar describing a cube payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CubeHeader {
    pub n_row: usize,
    pub n_col: usize,
    pub bands: usize,
    pub dtype: String,
    pub order: String,
    pub endianness: String,
}

impl CubeHeader {
    pub fn for_tensor(t: &Tensor3) -> Self {
        let (n_row, n_col, bands) = t.dims();
        Self {
            n_row,
            n_col,
            bands,
            dtype: CUBE_DTYPE.into(),
            order: CUBE_ORDER.into(),
            endianness: CUBE_ENDIANNESS.into(),
        }
    }

    /// Parse and validate a header from raw bytes.
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let header: CubeHeader = serde_json::from_slice(bytes).map_err(|e| Error::Parse {
            path: "<header>".into(),
            detail: format!("invalid header JSON: {e}"),
        })?;
        header.validate()?;
        Ok(header)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |detail: String| Error::CubeHeader {
            path: "<header>".into(),
            detail,
        };
        if self.n_row == 0 || self.n_col == 0 || self.bands == 0 {
            return Err(fail(format!(
                "dimensions must be positive, got {}x{}x{}",
                self.n_row, self.n_col, self.bands
            )));
        }
        if self.dtype != CUBE_DTYPE {
            return Err(fail(format!("dtype {:?} unsupported, expected {CUBE_DTYPE:?}", self.dtype)));
        }
        if self.order != CUBE_ORDER {
            return Err(fail(format!("order {:?} unsupported, expected {CUBE_ORDER:?}", self.order)));
        }
        if self.endianness != CUBE_ENDIANNESS {
            return Err(fail(format!(
                "endianness {:?} unsupported, expected {CUBE_ENDIANNESS:?}",
                self.endianness
            )));
        }
        self.payload_len()?;
        Ok(())
    }

    /// Expected payload size in bytes, guarding against overflow.
    pub fn payload_len(&self) -> Result<usize> {
        self.n_row
            .checked_mul(self.n_col)
            .and_then(|x| x.checked_mul(self.bands))
            .and_then(|x| x.checked_mul(8))
            .ok_or_else(|| Error::CubeHeader {
                path: "<header>".into(),
                detail: format!(
                    "dimensions {}x{}x{} overflow the payload size",
                    self.n_row, self.n_col, self.bands
                ),
            })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("header serialization cannot fail")
    }
}

/// Decode a payload against a header. Rejects size mismatches and
/// non-finite values.
pub fn decode_cube(header: &CubeHeader, payload: &[u8]) -> Result<Tensor3> {
    header.validate()?;
    let expected = header.payload_len()?;
    if payload.len() != expected {
        return Err(Error::CubePayload {
            path: "<payload>".into(),
            expected,
            actual: payload.len(),
        });
    }
    let data: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor3::from_vec(header.n_row, header.n_col, header.bands, data)
}

/// Encode a tensor into its header and raw payload bytes.
pub fn encode_cube(t: &Tensor3) -> (CubeHeader, Vec<u8>) {
    let header = CubeHeader::for_tensor(t);
    let mut payload = Vec::with_capacity(t.data().len() * 8);
    for v in t.data() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    (header, payload)
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".json");
    os.into()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Write payload at `path` and header at `path.json`.
pub fn write_cube(path: &Path, t: &Tensor3) -> Result<()> {
    let (header, payload) = encode_cube(t);
    let sidecar = sidecar_path(path);
    std::fs::write(&sidecar, header.to_json()).map_err(io_err(&sidecar))?;
    std::fs::write(path, payload).map_err(io_err(path))?;
    Ok(())
}

/// Read a cube written by [`write_cube`]; errors carry the offending path.
pub fn read_cube(path: &Path) -> Result<Tensor3> {
    let sidecar = sidecar_path(path);
    let header_bytes = std::fs::read(&sidecar).map_err(io_err(&sidecar))?;
    let header = CubeHeader::parse(&header_bytes).map_err(|e| rename(e, &sidecar))?;
    let payload = std::fs::read(path).map_err(io_err(path))?;
    decode_cube(&header, &payload).map_err(|e| rename(e, path))
}

fn rename(e: Error, path: &Path) -> Error {
    let name = path.display().to_string();
    match e {
        Error::Parse { detail, .. } => Error::Parse { path: name, detail },
        Error::CubeHeader { detail, .. } => Error::CubeHeader { path: name, detail },
        Error::CubePayload {
            expected, actual, ..
        } => Error::CubePayload {
            path: name,
            expected,
            actual,
        },
        other => other,
    }
}

// ---------------------------------------------------------------------------
// Grayscale maps
// ---------------------------------------------------------------------------

/// Render a matrix as an 8-bit binary PGM, min-max normalized (or with the
/// given shared bounds), rounding half up. The normalization bounds go to a
/// `<path>.bounds.txt` sidecar so maps stay comparable across runs; a
/// constant matrix renders mid-gray with a note.
pub fn write_gray_map(m: &Mat, path: &Path, bounds: Option<(f64, f64)>) -> Result<()> {
    if !m.is_finite() {
        return Err(Error::NonFinite("gray map input has NaN or Inf".into()));
    }
    let (lo, hi) = match bounds {
        Some((lo, hi)) => {
            if !(lo < hi) {
                return Err(Error::Config(format!("bad gray-map bounds ({lo}, {hi})")));
            }
            (lo, hi)
        }
        None => {
            let lo = m.data().iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = m.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        }
    };
    let constant = lo >= hi;
    let mut bytes = Vec::with_capacity(32 + m.data().len());
    bytes.extend_from_slice(format!("P5\n{} {}\n255\n", m.cols(), m.rows()).as_bytes());
    for &v in m.data() {
        let p = if constant {
            128u8
        } else {
            let t = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
            (t * 255.0 + 0.5).floor().min(255.0) as u8
        };
        bytes.push(p);
    }
    std::fs::write(path, bytes).map_err(io_err(path))?;

    let mut sidecar = std::path::PathBuf::from(path);
    sidecar.set_extension("bounds.txt");
    let note = if constant {
        format!("min {lo}\nmax {hi}\nnote constant matrix rendered mid-gray\n")
    } else {
        format!("min {lo}\nmax {hi}\n")
    };
    std::fs::write(&sidecar, note).map_err(io_err(&sidecar))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Trace CSV
// ---------------------------------------------------------------------------

/// Write the solver trace as CSV with columns
/// `iter,re,rmse,res_AV,res_BE,res_asc`; rmse cells are empty when no
/// ground truth was tracked.
pub fn write_trace_csv(path: &Path, trace: &Trace) -> Result<()> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = std::io::BufWriter::new(file);
    let res: Result<()> = (|| {
        writeln!(w, "iter,re,rmse,res_AV,res_BE,res_asc").map_err(io_err(path))?;
        for k in 0..trace.iterations() {
            let rmse = trace
                .rmse
                .get(k)
                .map(|v| v.to_string())
                .unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{}",
                k + 1,
                trace.re[k],
                rmse,
                trace.res_a_v.get(k).copied().unwrap_or(f64::NAN),
                trace.res_b_e.get(k).copied().unwrap_or(f64::NAN),
                trace.res_asc.get(k).copied().unwrap_or(f64::NAN),
            )
            .map_err(io_err(path))?;
        }
        Ok(())
    })();
    res?;
    w.flush().map_err(io_err(path))
}
