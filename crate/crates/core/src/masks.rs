//! Binary weight masks with a connectivity factor `p`, the target fraction
//! of zeroed connections.
//!
//! Masks serialize to a flat text format: a `rows cols` header line followed
//! by one line of `0`/`1` characters per row.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMask {
    bits: Matrix,
    p: f64,
}

fn check_p(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidValue(format!(
            "connectivity factor p must be in [0,1], got {p}"
        )));
    }
    Ok(())
}

impl SparseMask {
    /// Each entry is independently 1 with probability `1 - p`.
    pub fn generate<R: Rng + ?Sized>(rows: usize, cols: usize, p: f64, rng: &mut R) -> Result<Self> {
        check_p(p)?;
        let data = (0..rows * cols)
            .map(|_| if rng.gen::<f64>() >= p { 1.0 } else { 0.0 })
            .collect();
        Ok(Self {
            bits: Matrix::from_vec(rows, cols, data)?,
            p,
        })
    }

    /// Exactly `round(p · rows · cols)` zeros at uniformly shuffled positions.
    pub fn generate_exact<R: Rng + ?Sized>(
        rows: usize,
        cols: usize,
        p: f64,
        rng: &mut R,
    ) -> Result<Self> {
        check_p(p)?;
        let n = rows * cols;
        let zeros = (p * n as f64).round() as usize;
        let mut data: Vec<f64> = (0..n).map(|i| if i < zeros { 0.0 } else { 1.0 }).collect();
        data.shuffle(rng);
        Ok(Self {
            bits: Matrix::from_vec(rows, cols, data)?,
            p,
        })
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self {
            bits: Matrix::ones(rows, cols),
            p: 0.0,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            bits: Matrix::zeros(rows, cols),
            p: 1.0,
        }
    }

    /// Wraps a 0/1 matrix; `p` is set to its realized sparsity.
    pub fn from_bits(bits: Matrix) -> Result<Self> {
        if let Some(v) = bits.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidValue(format!("mask entry {v} is not 0 or 1")));
        }
        let p = sparsity_of(&bits);
        Ok(Self { bits, p })
    }

    pub fn bits(&self) -> &Matrix {
        &self.bits
    }

    /// The connectivity factor this mask was generated with.
    pub fn target_p(&self) -> f64 {
        self.p
    }

    pub fn shape(&self) -> (usize, usize) {
        self.bits.shape()
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    #[inline]
    pub fn is_active(&self, idx: usize) -> bool {
        self.bits.data()[idx] != 0.0
    }

    pub fn zero_count(&self) -> usize {
        self.bits.data().iter().filter(|&&v| v == 0.0).count()
    }

    /// Realized fraction of zero entries.
    pub fn sparsity(&self) -> f64 {
        sparsity_of(&self.bits)
    }

    /// Element-wise AND.
    pub fn intersect(&self, other: &SparseMask) -> Result<SparseMask> {
        let bits = self.bits.hadamard(&other.bits)?;
        let p = self.p + other.p - self.p * other.p;
        Ok(Self { bits, p })
    }

    /// Flat-text form: `rows cols` then one `0`/`1` line per row.
    pub fn to_text(&self) -> String {
        let (rows, cols) = self.shape();
        let mut out = String::with_capacity(rows * (cols + 1) + 16);
        let _ = writeln!(out, "{rows} {cols}");
        for r in 0..rows {
            out.extend(
                self.bits
                    .row(r)
                    .iter()
                    .map(|&v| if v != 0.0 { '1' } else { '0' }),
            );
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::InvalidValue(format!("mask text: {msg}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty input".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad(format!("bad header {header:?}"))))
            .collect::<Result<_>>()?;
        let [rows, cols] = dims[..] else {
            return Err(bad(format!("bad header {header:?}")));
        };
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let line = lines
                .next()
                .ok_or_else(|| bad(format!("missing row {r}")))?;
            if line.len() != cols {
                return Err(bad(format!("row {r} has {} entries, expected {cols}", line.len())));
            }
            for ch in line.chars() {
                data.push(match ch {
                    '0' => 0.0,
                    '1' => 1.0,
                    other => return Err(bad(format!("unexpected character {other:?}"))),
                });
            }
        }
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(bad("trailing data".into()));
        }
        Self::from_bits(Matrix::from_vec(rows, cols, data)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_text(&text)
    }
}

fn sparsity_of(bits: &Matrix) -> f64 {
    if bits.is_empty() {
        return 0.0;
    }
    bits.data().iter().filter(|&&v| v == 0.0).count() as f64 / bits.len() as f64
}

/// Three-sigma half-width of a binomial proportion: `3·sqrt(p(1-p)/n)`.
pub fn binomial_three_sigma(p: f64, n: usize) -> f64 {
    3.0 * (p * (1.0 - p) / n as f64).sqrt()
}
