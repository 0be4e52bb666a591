//! Witness matrices and the real-valued correlation matrices they act on.
//!
//! Both share the same row-major storage and the same plain-text format:
//! a header line `n m` followed by `n` lines of `m` whitespace-separated
//! numbers. Integer matrices additionally guarantee that `n·m·max|entry|`
//! fits in an `i64`, so every norm computed on them is overflow free.

use std::fmt::{self, Display, Write as _};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Largest `k` accepted by [`gen_family`]; the matrix has `2^(k-1)` columns.
pub const FAMILY_MAX_K: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

/// Integer coefficient matrix of a linear witness `W = Σ M_xy E_xy`.
pub type WitnessMatrix = Matrix<i64>;

/// Real matrix, used for correlation tables `E_xy` and Gilbert residuals.
pub type RealMatrix = Matrix<f64>;

impl<T: Copy> Matrix<T> {
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
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[x * self.cols + y]
    }

    #[inline]
    pub fn row(&self, x: usize) -> &[T] {
        &self.data[x * self.cols..(x + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.cols)
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.row_iter().map(<[T]>::to_vec).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for y in 0..self.cols {
            for x in 0..self.rows {
                data.push(self.get(x, y));
            }
        }
        Matrix {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    fn check_shape(rows: usize, cols: usize, len: usize) -> Result<()> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!(
                "matrix must be at least 1x1, got {rows}x{cols}"
            )));
        }
        if rows.checked_mul(cols) != Some(len) {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {len}",
                rows.saturating_mul(cols)
            )));
        }
        Ok(())
    }

    fn from_row_vecs(rows: Vec<Vec<T>>) -> Result<(usize, usize, Vec<T>)> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if let Some((x, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != m) {
            return Err(Error::Dimension(format!(
                "row {x} has {} entries, expected {m}",
                r.len()
            )));
        }
        Ok((n, m, rows.into_iter().flatten().collect()))
    }
}

impl WitnessMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<i64>) -> Result<Self> {
        Self::check_shape(rows, cols, data.len())?;
        check_overflow_bound(rows, cols, &data)?;
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: Vec<Vec<i64>>) -> Result<Self> {
        let (n, m, data) = Self::from_row_vecs(rows)?;
        Self::new(n, m, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, vec![0; rows * cols])
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    pub fn max_abs(&self) -> i64 {
        self.data.iter().map(|v| v.abs()).max().unwrap_or(0)
    }

    /// Σ |M_xy|, the entry-wise Manhattan norm.
    pub fn manhattan(&self) -> i64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn to_real(&self) -> RealMatrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v as f64).collect(),
        }
    }

    /// Integer multiple `t·M`.
    pub fn scaled(&self, t: i64) -> Result<Self> {
        let data = self
            .data
            .iter()
            .map(|&v| {
                v.checked_mul(t)
                    .ok_or_else(|| Error::Overflow(format!("{v} * {t}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.rows, self.cols, data)
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension(format!(
                "cannot add {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| {
                a.checked_add(b)
                    .ok_or_else(|| Error::Overflow(format!("{a} + {b}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.rows, self.cols, data)
    }

    /// Vertical concatenation `(A; B)`.
    pub fn vstack(&self, lower: &Self) -> Result<Self> {
        if self.cols != lower.cols {
            return Err(Error::Dimension(format!(
                "cannot stack {} columns on {} columns",
                self.cols, lower.cols
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&lower.data);
        Self::new(self.rows + lower.rows, self.cols, data)
    }

    /// Rows `start..` as a new matrix. Panics if `start >= rows`.
    pub fn row_suffix(&self, start: usize) -> Self {
        assert!(start < self.rows, "empty suffix");
        Matrix {
            rows: self.rows - start,
            cols: self.cols,
            data: self.data[start * self.cols..].to_vec(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        parse_matrix(text, None)
    }

    pub fn parse_with_dims(text: &str, rows: usize, cols: usize) -> Result<Self> {
        parse_matrix(text, Some((rows, cols)))
    }
}

impl RealMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::check_shape(rows, cols, data.len())?;
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "entry ({}, {}) is not finite",
                i / cols,
                i % cols
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let (n, m, data) = Self::from_row_vecs(rows)?;
        Self::new(n, m, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0);
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix entry by entry. The closure must return finite values.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(rows > 0 && cols > 0);
        let mut data = Vec::with_capacity(rows * cols);
        for x in 0..rows {
            for y in 0..cols {
                let v = f(x, y);
                debug_assert!(v.is_finite());
                data.push(v);
            }
        }
        Matrix { rows, cols, data }
    }

    /// Frobenius inner product Σ A_xy B_xy.
    pub fn dot(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.shape(), other.shape());
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.shape(), other.shape());
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        parse_matrix(text, None)
    }

    pub fn parse_with_dims(text: &str, rows: usize, cols: usize) -> Result<Self> {
        parse_matrix(text, Some((rows, cols)))
    }
}

impl<T: Copy + Display> Matrix<T> {
    /// Serializes in the `n m` header format. Floats use the shortest
    /// representation that parses back to the same value.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {}", self.rows, self.cols);
        for row in self.row_iter() {
            let mut first = true;
            for v in row {
                if !first {
                    out.push(' ');
                }
                first = false;
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }
}

impl<T: Copy + Display> Display for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

fn check_overflow_bound(rows: usize, cols: usize, data: &[i64]) -> Result<()> {
    if data.contains(&i64::MIN) {
        return Err(Error::Overflow("entry i64::MIN has no absolute value".into()));
    }
    let max = data.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0) as u128;
    let bound = rows as u128 * cols as u128 * max;
    if bound > i64::MAX as u128 {
        return Err(Error::Overflow(format!(
            "{rows}x{cols} matrix with max |entry| {max} may overflow 64-bit sums"
        )));
    }
    Ok(())
}

/// Numbers that can appear in a matrix file.
trait Entry: Copy + Sized {
    fn parse_token(tok: &str, line: usize) -> Result<Self>;
}

impl Entry for i64 {
    fn parse_token(tok: &str, line: usize) -> Result<Self> {
        tok.parse::<i64>().map_err(|_| {
            let digits = tok.strip_prefix(['-', '+']).unwrap_or(tok);
            if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
                Error::Overflow(format!("line {line}: entry {tok} out of 64-bit range"))
            } else {
                Error::parse(line, format!("invalid integer {tok:?}"))
            }
        })
    }
}

impl Entry for f64 {
    fn parse_token(tok: &str, line: usize) -> Result<Self> {
        match tok.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            Ok(_) => Err(Error::parse(line, format!("non-finite value {tok:?}"))),
            Err(_) => Err(Error::parse(line, format!("invalid number {tok:?}"))),
        }
    }
}

trait Build: Sized {
    type Item: Entry;
    fn build(rows: usize, cols: usize, data: Vec<Self::Item>) -> Result<Self>;
}

impl Build for WitnessMatrix {
    type Item = i64;
    fn build(rows: usize, cols: usize, data: Vec<i64>) -> Result<Self> {
        WitnessMatrix::new(rows, cols, data)
    }
}

impl Build for RealMatrix {
    type Item = f64;
    fn build(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        RealMatrix::new(rows, cols, data)
    }
}

/// Non-blank lines with their 1-based line numbers, split on whitespace or
/// commas.
fn tokenized_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let toks: Vec<&str> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .collect();
        (!toks.is_empty()).then_some((i + 1, toks))
    })
}

fn parse_dim(tok: &str, line: usize) -> Result<usize> {
    usize::from_str(tok).map_err(|_| Error::parse(line, format!("invalid dimension {tok:?}")))
}

fn parse_matrix<M: Build>(text: &str, dims: Option<(usize, usize)>) -> Result<M> {
    let mut lines = tokenized_lines(text);
    let (rows, cols) = match dims {
        Some(d) => d,
        None => {
            let (line, header) = lines
                .next()
                .ok_or_else(|| Error::parse(1, "empty matrix file"))?;
            if header.len() != 2 {
                return Err(Error::parse(
                    line,
                    format!("header must be \"n m\", found {} fields", header.len()),
                ));
            }
            (parse_dim(header[0], line)?, parse_dim(header[1], line)?)
        }
    };
    if rows == 0 || cols == 0 {
        return Err(Error::Dimension(format!("invalid size {rows}x{cols}")));
    }
    let mut data = Vec::with_capacity(rows.saturating_mul(cols).min(1 << 24));
    let mut seen = 0;
    for (line, toks) in lines {
        if seen == rows {
            return Err(Error::parse(line, format!("more than {rows} rows")));
        }
        if toks.len() != cols {
            return Err(Error::parse(
                line,
                format!("expected {cols} entries, found {}", toks.len()),
            ));
        }
        for tok in toks {
            data.push(M::Item::parse_token(tok, line)?);
        }
        seen += 1;
    }
    if seen != rows {
        return Err(Error::parse(
            text.lines().count().max(1),
            format!("expected {rows} rows, found {seen}"),
        ));
    }
    M::build(rows, cols, data)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<WitnessMatrix> {
    WitnessMatrix::parse(&read(path.as_ref())?)
}

/// Loads a headerless grid whose dimensions are known in advance.
pub fn load_matrix_with_dims(
    path: impl AsRef<Path>,
    rows: usize,
    cols: usize,
) -> Result<WitnessMatrix> {
    WitnessMatrix::parse_with_dims(&read(path.as_ref())?, rows, cols)
}

pub fn load_real_matrix(path: impl AsRef<Path>) -> Result<RealMatrix> {
    RealMatrix::parse(&read(path.as_ref())?)
}

pub fn save_matrix<T: Copy + Display>(matrix: &Matrix<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, matrix.to_text()).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// S(M), the sum of all entries.
pub fn sum_s(m: &WitnessMatrix) -> i64 {
    m.data.iter().sum()
}

/// Stacks `M` on top of `-M`, giving the `2n×m` matrix whose one-bit bound
/// equals twice the local bound of `M`.
pub fn make_doubled(m: &WitnessMatrix) -> WitnessMatrix {
    let mut data = m.data.clone();
    data.extend(m.data.iter().map(|v| -v));
    WitnessMatrix::new(2 * m.rows, m.cols, data)
        .expect("negation and stacking preserve the overflow bound up to 2n rows")
}

/// The `k × 2^(k-1)` sign matrix with `M_ij = (-1)^⌊j / 2^(k-i-1)⌋`
/// (zero-based `i`, `j`). `k = 2` is the CHSH matrix.
pub fn gen_family(k: usize) -> Result<WitnessMatrix> {
    if k == 0 || k > FAMILY_MAX_K {
        return Err(Error::SizeCap(format!(
            "family index must be in 1..={FAMILY_MAX_K}, got {k}"
        )));
    }
    let cols = 1usize << (k - 1);
    let mut data = Vec::with_capacity(k * cols);
    for i in 0..k {
        // Row 0 has period 2^(k-1) >= cols, so it is constant.
        let shift = k - 1 - i;
        for j in 0..cols {
            data.push(if (j >> shift) & 1 == 0 { 1 } else { -1 });
        }
    }
    WitnessMatrix::new(k, cols, data)
}

/// Entry-wise `trunc(scale · R_xy)`, rounding toward zero.
pub fn integerize(r: &RealMatrix, scale: i64) -> Result<WitnessMatrix> {
    if scale <= 0 {
        return Err(Error::InvalidArgument(format!(
            "scale must be positive, got {scale}"
        )));
    }
    let data = r
        .data
        .iter()
        .map(|&v| {
            let t = (scale as f64 * v).trunc();
            // 2^63 is exactly representable; anything at or beyond it overflows.
            if t.abs() >= i64::MAX as f64 {
                Err(Error::Overflow(format!("{scale} * {v} exceeds 64 bits")))
            } else {
                Ok(t as i64)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    WitnessMatrix::new(r.rows, r.cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    const M4: [[i64; 8]; 4] = [
        [1, 1, 1, 1, 1, 1, 1, 1],
        [1, 1, 1, 1, -1, -1, -1, -1],
        [1, 1, -1, -1, 1, 1, -1, -1],
        [1, -1, 1, -1, 1, -1, 1, -1],
    ];

    fn m4() -> WitnessMatrix {
        WitnessMatrix::from_rows(M4.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn parses_chsh() {
        let m = WitnessMatrix::parse("2 2\n1 1\n1 -1\n").unwrap();
        assert_eq!(m.to_rows(), vec![vec![1, 1], vec![1, -1]]);
    }

    #[test]
    fn parses_crlf_and_blank_lines() {
        let m = WitnessMatrix::parse("2 2\r\n\r\n1 1\r\n1 -1\r\n\r\n").unwrap();
        assert_eq!(sum_s(&m), 2);
    }

    #[test]
    fn short_row_is_a_parse_error() {
        let err = WitnessMatrix::parse("2 2\n1 1\n1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn missing_row_is_a_parse_error() {
        assert!(matches!(
            WitnessMatrix::parse("3 2\n1 1\n1 -1\n"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            WitnessMatrix::parse("1 2\n1 1\n1 -1\n"),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn out_of_range_entry_is_overflow() {
        let err = WitnessMatrix::parse("1 1\n99999999999999999999\n").unwrap_err();
        assert!(matches!(err, Error::Overflow(_)), "{err}");
        assert!(matches!(
            WitnessMatrix::parse("1 1\n1.5\n"),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn norm_bound_overflow_is_rejected() {
        let big = i64::MAX / 2;
        assert!(matches!(
            WitnessMatrix::new(2, 2, vec![big, 0, 0, 0]),
            Err(Error::Overflow(_))
        ));
        assert!(WitnessMatrix::new(1, 1, vec![i64::MAX]).is_ok());
    }

    #[test]
    fn headerless_grid_with_dims() {
        let m = WitnessMatrix::parse_with_dims("1\t1\n1,-1\n", 2, 2).unwrap();
        assert_eq!(m.to_rows(), vec![vec![1, 1], vec![1, -1]]);
    }

    #[test]
    fn family_matches_printed_m4() {
        assert_eq!(gen_family(4).unwrap(), m4());
        assert_eq!(gen_family(1).unwrap().to_rows(), vec![vec![1]]);
        assert_eq!(gen_family(2).unwrap().to_rows(), vec![vec![1, 1], vec![1, -1]]);
        assert!(matches!(gen_family(0), Err(Error::SizeCap(_))));
        assert!(matches!(gen_family(21), Err(Error::SizeCap(_))));
    }

    #[test]
    fn m4_file_round_trip() {
        let m = WitnessMatrix::parse(&m4().to_text()).unwrap();
        assert_eq!(m, m4());
        assert_eq!(sum_s(&m), 8);
    }

    #[test]
    fn family_rows_are_signed_and_orthogonal() {
        for k in 1..=8 {
            let f = gen_family(k).unwrap();
            assert!(f.as_slice().iter().all(|v| v.abs() == 1));
            for i in 0..k {
                for j in i + 1..k {
                    let dot: i64 = f.row(i).iter().zip(f.row(j)).map(|(a, b)| a * b).sum();
                    assert_eq!(dot, 0, "k={k} rows {i},{j}");
                }
            }
        }
    }

    #[test]
    fn doubled_chsh() {
        let chsh = gen_family(2).unwrap();
        assert_eq!(
            make_doubled(&chsh).to_rows(),
            vec![vec![1, 1], vec![1, -1], vec![-1, -1], vec![-1, 1]]
        );
        let z = WitnessMatrix::zeros(1, 1).unwrap();
        assert_eq!(make_doubled(&z), WitnessMatrix::zeros(2, 1).unwrap());
    }

    #[test]
    fn integerize_truncates_toward_zero() {
        let r = RealMatrix::from_rows(vec![vec![0.4377, -1.2]]).unwrap();
        assert_eq!(integerize(&r, 1000).unwrap().to_rows(), vec![vec![437, -1200]]);
        let r = RealMatrix::from_rows(vec![vec![-0.0009]]).unwrap();
        assert_eq!(integerize(&r, 1000).unwrap().to_rows(), vec![vec![0]]);
        let r = RealMatrix::from_rows(vec![vec![1e17]]).unwrap();
        assert!(matches!(integerize(&r, 1000), Err(Error::Overflow(_))));
    }

    #[test]
    fn real_matrix_text_round_trip() {
        let r = RealMatrix::from_rows(vec![vec![0.1, -2.5e-7], vec![1.0 / 3.0, 7.0]]).unwrap();
        assert_eq!(RealMatrix::parse(&r.to_text()).unwrap(), r);
    }

    #[test]
    fn zero_sized_matrices_are_rejected() {
        assert!(WitnessMatrix::new(0, 3, vec![]).is_err());
        assert!(WitnessMatrix::parse("0 2\n").is_err());
    }
}
