//! Generalized factorial coefficients `C(n, k; alpha)` in log space.
//!
//! Rows are filled with
//!
//! ```text
//! C(n + 1, k) = (n - k alpha) C(n, k) + alpha C(n, k - 1),    C(1, 1) = alpha
//! ```
//!
//! whose terms are all nonnegative for `alpha` in `(0, 1)`, so the update is a
//! plain log-add-exp with no cancellation. The alternating-sum definition is
//! kept only as a test oracle.
//!
//! # Cache file layout
//!
//! All integers and floats little-endian.
//!
//! | offset | size | field                                     |
//! |--------|------|-------------------------------------------|
//! | 0      | 4    | magic `b"EPGF"`                           |
//! | 4      | 4    | version, `u32`, currently `1`             |
//! | 8      | 4    | layout, `u32`: `0` full, `1` last row     |
//! | 12     | 4    | reserved, `u32`, zero                     |
//! | 16     | 8    | `alpha`, `f64`                            |
//! | 24     | 8    | `n_max`, `u64`                            |
//! | 32     | ...  | `f64` entries, row-major                  |
//!
//! A full table stores rows `n = 1..=n_max`, each holding `k = 1..=n`. A
//! last-row table stores `k = 1..=n_max` of row `n_max` only.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::numerics::log_add_exp;

/// Memory guard on the largest row.
pub const N_MAX_LIMIT: usize = 100_000;
/// Above this the table keeps only its last row.
pub const FULL_TABLE_LIMIT: usize = 4096;
/// Rows at least this long are updated in parallel chunks.
const PARALLEL_ROW_MIN: usize = 2048;
const PARALLEL_CHUNK: usize = 512;

const MAGIC: &[u8; 4] = b"EPGF";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum GfcError {
    #[error("alpha = {0} must lie in (0, 1)")]
    AlphaOutOfRange(f64),
    #[error("requested n_max = {requested} exceeds the limit {limit}")]
    Capacity { requested: usize, limit: usize },
    #[error("row n = {n} outside table 1..={n_max}")]
    Index { n: usize, n_max: usize },
    #[error("row n = {n} not retained (table keeps only row {n_max})")]
    RowNotRetained { n: usize, n_max: usize },
    #[error("invalid cache file: {0}")]
    BadCache(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, GfcError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// Every row `1..=n_max`; `O(n_max^2)` memory.
    Full,
    /// Only row `n_max`; `O(n_max)` memory.
    LastRow,
}

impl Layout {
    fn code(self) -> u32 {
        match self {
            Layout::Full => 0,
            Layout::LastRow => 1,
        }
    }

    fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Layout::Full),
            1 => Some(Layout::LastRow),
            _ => None,
        }
    }
}

/// Triangular table of `ln C(n, k; alpha)`, immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct LogGfcTable {
    alpha: f64,
    n_max: usize,
    layout: Layout,
    data: Vec<f64>,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(GfcError::AlphaOutOfRange(alpha))
    }
}

fn check_n_max(n_max: usize) -> Result<()> {
    if (1..=N_MAX_LIMIT).contains(&n_max) {
        Ok(())
    } else {
        Err(GfcError::Capacity {
            requested: n_max,
            limit: N_MAX_LIMIT,
        })
    }
}

#[inline]
fn row_offset(n: usize) -> usize {
    n * (n - 1) / 2
}

#[inline]
fn entry<F, G>(prev: &[f64], k: usize, ln_stay: &F, ln_open: &G) -> f64
where
    F: Fn(usize) -> f64,
    G: Fn(usize) -> f64,
{
    // prev holds row n at indices k - 1 for k = 1..=n
    let n = prev.len();
    let stay = if k <= n {
        ln_stay(k) + prev[k - 1]
    } else {
        f64::NEG_INFINITY
    };
    let open = if k >= 2 {
        ln_open(k) + prev[k - 2]
    } else {
        f64::NEG_INFINITY
    };
    log_add_exp(stay, open)
}

/// Writes row `n + 1` of a two-term triangular recursion
/// `T(n + 1, k) = s(k) T(n, k) + o(k) T(n, k - 1)` into `next`, given row `n`
/// (`k = 1..=n`) in `prev`. The closures return `ln s(k)` and `ln o(k)`.
///
/// Each entry depends only on `prev`, so the chunked parallel update is
/// bit-identical to the serial one.
pub(crate) fn advance_log_row<F, G>(prev: &[f64], next: &mut [f64], ln_stay: F, ln_open: G)
where
    F: Fn(usize) -> f64 + Sync,
    G: Fn(usize) -> f64 + Sync,
{
    debug_assert_eq!(next.len(), prev.len() + 1);
    if next.len() >= PARALLEL_ROW_MIN {
        next.par_chunks_mut(PARALLEL_CHUNK)
            .enumerate()
            .for_each(|(c, chunk)| {
                let base = c * PARALLEL_CHUNK;
                for (j, slot) in chunk.iter_mut().enumerate() {
                    *slot = entry(prev, base + j + 1, &ln_stay, &ln_open);
                }
            });
    } else {
        for (j, slot) in next.iter_mut().enumerate() {
            *slot = entry(prev, j + 1, &ln_stay, &ln_open);
        }
    }
}

fn advance_row(prev: &[f64], next: &mut [f64], alpha: f64, ln_alpha: f64) {
    let n = prev.len() as f64;
    advance_log_row(prev, next, |k| (n - k as f64 * alpha).ln(), |_| ln_alpha);
}

impl LogGfcTable {
    /// Builds rows up to `n_max`, keeping all of them when `n_max` is at most
    /// [`FULL_TABLE_LIMIT`] and only the last row otherwise.
    pub fn build(alpha: f64, n_max: usize) -> Result<Self> {
        let layout = if n_max <= FULL_TABLE_LIMIT {
            Layout::Full
        } else {
            Layout::LastRow
        };
        Self::build_with_layout(alpha, n_max, layout)
    }

    /// Builds only row `n`.
    pub fn build_row(alpha: f64, n: usize) -> Result<Self> {
        Self::build_with_layout(alpha, n, Layout::LastRow)
    }

    pub fn build_with_layout(alpha: f64, n_max: usize, layout: Layout) -> Result<Self> {
        check_alpha(alpha)?;
        check_n_max(n_max)?;
        let ln_alpha = alpha.ln();
        match layout {
            Layout::Full => {
                let mut data = vec![f64::NEG_INFINITY; row_offset(n_max + 1)];
                data[0] = ln_alpha;
                for n in 1..n_max {
                    let (head, tail) = data.split_at_mut(row_offset(n + 1));
                    let prev = &head[row_offset(n)..];
                    advance_row(prev, &mut tail[..n + 1], alpha, ln_alpha);
                }
                Ok(LogGfcTable {
                    alpha,
                    n_max,
                    layout,
                    data,
                })
            }
            Layout::LastRow => {
                let mut prev = Vec::with_capacity(n_max);
                let mut next = Vec::with_capacity(n_max);
                prev.push(ln_alpha);
                for n in 1..n_max {
                    next.clear();
                    next.resize(n + 1, f64::NEG_INFINITY);
                    advance_row(&prev, &mut next, alpha, ln_alpha);
                    std::mem::swap(&mut prev, &mut next);
                }
                Ok(LogGfcTable {
                    alpha,
                    n_max,
                    layout,
                    data: prev,
                })
            }
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn has_row(&self, n: usize) -> bool {
        match self.layout {
            Layout::Full => (1..=self.n_max).contains(&n),
            Layout::LastRow => n == self.n_max,
        }
    }

    /// `ln C(n, k)` for `k = 1..=n`, at index `k - 1`.
    pub fn row(&self, n: usize) -> Result<&[f64]> {
        if n == 0 || n > self.n_max {
            return Err(GfcError::Index {
                n,
                n_max: self.n_max,
            });
        }
        match self.layout {
            Layout::Full => Ok(&self.data[row_offset(n)..row_offset(n) + n]),
            Layout::LastRow if n == self.n_max => Ok(&self.data),
            Layout::LastRow => Err(GfcError::RowNotRetained {
                n,
                n_max: self.n_max,
            }),
        }
    }

    /// `ln C(n, k; alpha)`; `-inf` for `k = 0` or `k > n`.
    pub fn log_gfc(&self, n: usize, k: usize) -> Result<f64> {
        let row = self.row(n)?;
        if k == 0 || k > n {
            Ok(f64::NEG_INFINITY)
        } else {
            Ok(row[k - 1])
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&self.layout.code().to_le_bytes())?;
        w.write_all(&0u32.to_le_bytes())?;
        w.write_all(&self.alpha.to_le_bytes())?;
        w.write_all(&(self.n_max as u64).to_le_bytes())?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)
            .map_err(|_| GfcError::BadCache("truncated header".into()))?;
        if &header[0..4] != MAGIC {
            return Err(GfcError::BadCache("bad magic".into()));
        }
        let u32_at = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != VERSION {
            return Err(GfcError::BadCache(format!("unsupported version {version}")));
        }
        let layout = Layout::from_code(u32_at(8))
            .ok_or_else(|| GfcError::BadCache(format!("unknown layout {}", u32_at(8))))?;
        if u32_at(12) != 0 {
            return Err(GfcError::BadCache("nonzero reserved field".into()));
        }
        let alpha = f64::from_le_bytes(header[16..24].try_into().unwrap());
        check_alpha(alpha).map_err(|e| GfcError::BadCache(e.to_string()))?;
        let n_max = u64::from_le_bytes(header[24..32].try_into().unwrap());
        let n_max = usize::try_from(n_max)
            .ok()
            .filter(|n| (1..=N_MAX_LIMIT).contains(n))
            .ok_or_else(|| GfcError::BadCache(format!("n_max {n_max} out of range")))?;
        let len = match layout {
            Layout::Full => row_offset(n_max + 1),
            Layout::LastRow => n_max,
        };
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != len * 8 {
            return Err(GfcError::BadCache(format!(
                "payload has {} bytes, expected {}",
                bytes.len(),
                len * 8
            )));
        }
        let data: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if data.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(GfcError::BadCache("payload holds NaN or +inf".into()));
        }
        Ok(LogGfcTable {
            alpha,
            n_max,
            layout,
            data,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}
