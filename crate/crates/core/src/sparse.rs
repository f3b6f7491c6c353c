//! Compressed sparse row linear algebra: products, the Galerkin triple
//! product, Gauss-Seidel relaxation, and a dense Cholesky factorization for
//! the coarsest level.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Entries with absolute value below this are dropped when a matrix is
/// finalized, so repeated triple products do not accumulate explicit zeros.
pub const DROP_TOLERANCE: f64 = 1e-14;

/// Diagonal entries at or below this magnitude are treated as zero by the
/// Gauss-Seidel smoother and the level-matrix checks.
pub const ZERO_DIAGONAL_TOLERANCE: f64 = 1e-14;

/// Square or rectangular sparse matrix in compressed sparse row form.
///
/// Invariants: `row_offsets` is nondecreasing with `row_offsets[rows] == nnz`,
/// column indices are strictly increasing within each row, and no stored
/// value has magnitude below [`DROP_TOLERANCE`].
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from (row, col, value) triplets. Duplicate entries are
    /// summed; near-zero results are dropped.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        for (r, c, v) in triplets {
            if r >= rows || c >= cols {
                return Err(Error::DimensionMismatch(format!(
                    "triplet ({r}, {c}) outside {rows}x{cols} matrix"
                )));
            }
            entries.push((r, c, v));
        }
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));

        let mut row_offsets = vec![0usize; rows + 1];
        let mut col_indices = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        let mut i = 0;
        while i < entries.len() {
            let (r, c, mut v) = entries[i];
            i += 1;
            while i < entries.len() && entries[i].0 == r && entries[i].1 == c {
                v += entries[i].2;
                i += 1;
            }
            if v.abs() >= DROP_TOLERANCE {
                row_offsets[r + 1] += 1;
                col_indices.push(c);
                values.push(v);
            }
        }
        for r in 0..rows {
            row_offsets[r + 1] += row_offsets[r];
        }
        Ok(Self {
            rows,
            cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self::from_triplets(
            diag.len(),
            diag.len(),
            diag.iter().enumerate().map(|(i, &v)| (i, i, v)),
        )
        .expect("diagonal triplets are in range")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_offsets[i];
        let hi = self.row_offsets[i + 1];
        (&self.col_indices[lo..hi], &self.values[lo..hi])
    }

    /// Iterates stored entries as (row, col, value) in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// Stored diagonal entries; absent entries read as zero.
    pub fn diagonal(&self) -> Vec<f64> {
        let n = self.rows.min(self.cols);
        (0..n).map(|i| self.get(i, i)).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// y = A x.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "spmv: matrix has {} cols, vector has {}",
                self.cols,
                x.len()
            )));
        }
        let mut y = vec![0.0; self.rows];
        self.spmv_into(x, &mut y);
        Ok(y)
    }

    /// y = A x without allocation; dimensions must already match.
    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(y.len(), self.rows);
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            let mut acc = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                acc += v * x[c];
            }
            y[r] = acc;
        }
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.col_indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.cols {
            counts[c + 1] += counts[c];
        }
        let mut row_offsets = counts.clone();
        let mut col_indices = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        let mut cursor = counts;
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let k = cursor[c];
                cursor[c] += 1;
                col_indices[k] = r;
                values[k] = v;
            }
        }
        // rows were visited in ascending order, so each transposed row is
        // already sorted
        row_offsets.truncate(self.cols + 1);
        SparseMatrix {
            rows: self.cols,
            cols: self.rows,
            row_offsets,
            col_indices,
            values,
        }
    }

    /// C = A B by Gustavson's row-wise algorithm.
    pub fn matmul(&self, other: &SparseMatrix) -> Result<SparseMatrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
        "matmul: {}x{} times {}x{}",
        self.rows, self.cols, other.rows, other.cols
      )));
        }
        let mut row_offsets = vec![0usize; self.rows + 1];
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        let mut acc = vec![0.0f64; other.cols];
        let mut mark = vec![usize::MAX; other.cols];
        let mut touched: Vec<usize> = Vec::new();
        for r in 0..self.rows {
            let (a_cols, a_vals) = self.row(r);
            for (&k, &av) in a_cols.iter().zip(a_vals) {
                let (b_cols, b_vals) = other.row(k);
                for (&c, &bv) in b_cols.iter().zip(b_vals) {
                    if mark[c] != r {
                        mark[c] = r;
                        acc[c] = 0.0;
                        touched.push(c);
                    }
                    acc[c] += av * bv;
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                let v = acc[c];
                if v.abs() >= DROP_TOLERANCE {
                    col_indices.push(c);
                    values.push(v);
                }
            }
            touched.clear();
            row_offsets[r + 1] = col_indices.len();
        }
        Ok(SparseMatrix {
            rows: self.rows,
            cols: other.cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// alpha * self + beta * other.
    pub fn add_scaled(&self, other: &SparseMatrix, alpha: f64, beta: f64) -> Result<SparseMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch(format!(
                "add: {}x{} plus {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut row_offsets = vec![0usize; self.rows + 1];
        let mut col_indices = Vec::with_capacity(self.nnz().max(other.nnz()));
        let mut values = Vec::with_capacity(col_indices.capacity());
        for r in 0..self.rows {
            let (ac, av) = self.row(r);
            let (bc, bv) = other.row(r);
            let (mut i, mut j) = (0, 0);
            while i < ac.len() || j < bc.len() {
                let (c, v) = if j >= bc.len() || (i < ac.len() && ac[i] < bc[j]) {
                    let e = (ac[i], alpha * av[i]);
                    i += 1;
                    e
                } else if i >= ac.len() || bc[j] < ac[i] {
                    let e = (bc[j], beta * bv[j]);
                    j += 1;
                    e
                } else {
                    let e = (ac[i], alpha * av[i] + beta * bv[j]);
                    i += 1;
                    j += 1;
                    e
                };
                if v.abs() >= DROP_TOLERANCE {
                    col_indices.push(c);
                    values.push(v);
                }
            }
            row_offsets[r + 1] = col_indices.len();
        }
        Ok(SparseMatrix {
            rows: self.rows,
            cols: self.cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// diag(d) * self, i.e. row i scaled by d[i].
    pub fn scale_rows(&self, d: &[f64]) -> Result<SparseMatrix> {
        if d.len() != self.rows {
            return Err(Error::DimensionMismatch(format!(
                "scale_rows: {} rows, {} scales",
                self.rows,
                d.len()
            )));
        }
        let mut out = self.clone();
        for r in 0..self.rows {
            let (lo, hi) = (out.row_offsets[r], out.row_offsets[r + 1]);
            for v in &mut out.values[lo..hi] {
                *v *= d[r];
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.rows * self.cols];
        for (r, c, v) in self.iter() {
            dense[r * self.cols + c] = v;
        }
        dense
    }

    /// Largest relative row-wise asymmetry, in the Frobenius sense.
    pub fn relative_asymmetry(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        let t = self.transpose();
        let diff = match self.add_scaled(&t, 1.0, -1.0) {
            Ok(d) => d,
            Err(_) => return f64::INFINITY,
        };
        let norm = self.frobenius_norm();
        if norm == 0.0 {
            0.0
        } else {
            diff.frobenius_norm() / norm
        }
    }
}

/// Galerkin triple product Pᵀ A P.
///
/// When A is symmetric the result is symmetric up to roundoff; that roundoff
/// is removed by averaging with the transpose. Genuinely asymmetric inputs
/// are returned as computed.
pub fn triple_product(p: &SparseMatrix, a: &SparseMatrix) -> Result<SparseMatrix> {
    if a.rows() != a.cols() || p.rows() != a.rows() {
        return Err(Error::DimensionMismatch(format!(
            "triple product: P is {}x{}, A is {}x{}",
            p.rows(),
            p.cols(),
            a.rows(),
            a.cols()
        )));
    }
    let pt = p.transpose();
    let pta = pt.matmul(a)?;
    let ptap = pta.matmul(p)?;
    if ptap.relative_asymmetry() <= 1e-10 {
        let t = ptap.transpose();
        ptap.add_scaled(&t, 0.5, 0.5)
    } else {
        Ok(ptap)
    }
}

/// Forward Gauss-Seidel sweeps on A x = b, updating `x` in place in
/// ascending row order.
///
/// A zero (or missing) diagonal aborts with [`Error::ZeroDiagonal`] instead
/// of producing NaN; this is the failure mode a restricted level matrix can
/// exhibit.
pub fn gauss_seidel(a: &SparseMatrix, x: &mut [f64], b: &[f64], sweeps: usize) -> Result<()> {
    if a.rows() != a.cols() {
        return Err(Error::DimensionMismatch(format!(
            "gauss_seidel: matrix is {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if x.len() != a.rows() || b.len() != a.rows() {
        return Err(Error::DimensionMismatch(format!(
            "gauss_seidel: system is {}, x is {}, b is {}",
            a.rows(),
            x.len(),
            b.len()
        )));
    }
    for _ in 0..sweeps {
        for i in 0..a.rows() {
            let (cols, vals) = a.row(i);
            let mut sigma = 0.0;
            let mut diag = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                if c == i {
                    diag = v;
                } else {
                    sigma += v * x[c];
                }
            }
            if diag.abs() <= ZERO_DIAGONAL_TOLERANCE {
                return Err(Error::ZeroDiagonal(i));
            }
            x[i] = (b[i] - sigma) / diag;
        }
    }
    Ok(())
}

/// Cached dense Cholesky factorization (lower triangular, row major).
#[derive(Clone, Debug)]
pub struct DenseCholesky {
    n: usize,
    factor: Vec<f64>,
}

impl DenseCholesky {
    pub fn factor(a: &SparseMatrix) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(Error::DimensionMismatch(format!(
                "cholesky: matrix is {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        Self::factor_dense(a.rows(), a.to_dense())
    }

    pub fn factor_dense(n: usize, mut m: Vec<f64>) -> Result<Self> {
        assert_eq!(m.len(), n * n);
        let max_diag = (0..n).fold(0.0f64, |acc, i| acc.max(m[i * n + i].abs()));
        let pivot_floor = 1e-13 * max_diag;
        for i in 0..n {
            for j in 0..=i {
                let mut sum = m[i * n + j];
                for k in 0..j {
                    sum -= m[i * n + k] * m[j * n + k];
                }
                if i == j {
                    if sum <= pivot_floor {
                        return Err(Error::NotPositiveDefinite { row: i, pivot: sum });
                    }
                    m[i * n + i] = sum.sqrt();
                } else {
                    m[i * n + j] = sum / m[j * n + j];
                }
            }
        }
        // zero the strict upper triangle so the factor is self-describing
        for i in 0..n {
            for j in (i + 1)..n {
                m[i * n + j] = 0.0;
            }
        }
        Ok(Self { n, factor: m })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Solves A x = b through the cached factor.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "cholesky solve: system is {}, b is {}",
                self.n,
                b.len()
            )));
        }
        let n = self.n;
        let l = &self.factor;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut sum = y[i];
            for k in 0..i {
                sum -= l[i * n + k] * y[k];
            }
            y[i] = sum / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut sum = y[i];
            for k in (i + 1)..n {
                sum -= l[k * n + i] * y[k];
            }
            y[i] = sum / l[i * n + i];
        }
        Ok(y)
    }
}

/// One-shot dense Cholesky solve; intended for the coarsest level and for
/// reference solutions on small systems.
pub fn dense_cholesky_solve(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    DenseCholesky::factor(a)?.solve(b)
}

/// Writes coordinate-format Matrix Market (1-based indices).
pub fn write_matrix_market<W: Write>(w: &mut W, a: &SparseMatrix) -> Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", a.rows(), a.cols(), a.nnz())?;
    for (r, c, v) in a.iter() {
        writeln!(w, "{} {} {:.17e}", r + 1, c + 1, v)?;
    }
    Ok(())
}

pub fn write_matrix_market_path(path: &Path, a: &SparseMatrix) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_matrix_market(&mut w, a)
}

/// Reads coordinate-format Matrix Market; `general` and `symmetric`
/// storage are supported.
pub fn read_matrix_market<R: BufRead>(r: &mut R) -> Result<SparseMatrix> {
    let path = "<matrix market>".to_string();
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::MalformedHeader {
            path: path.clone(),
            msg: "empty file".into(),
        })?
        .map_err(Error::Io)?;
    let header_lc = header.to_lowercase();
    if !header_lc.starts_with("%%matrixmarket matrix coordinate real") {
        return Err(Error::MalformedHeader {
            path,
            msg: format!("unsupported banner: {header}"),
        });
    }
    let symmetric = header_lc.contains("symmetric");

    let mut dims: Option<(usize, usize, usize)> = None;
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(Error::Io)?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let mut it = line.split_whitespace();
        if dims.is_none() {
            let parse = |s: Option<&str>| -> Result<usize> {
                s.and_then(|t| t.parse().ok()).ok_or_else(|| Error::Parse {
                    path: path.clone(),
                    line: lineno + 2,
                    msg: "bad size line".into(),
                })
            };
            dims = Some((parse(it.next())?, parse(it.next())?, parse(it.next())?));
            continue;
        }
        let parse_idx = |s: Option<&str>| -> Result<usize> {
            s.and_then(|t| t.parse().ok()).ok_or_else(|| Error::Parse {
                path: path.clone(),
                line: lineno + 2,
                msg: "bad entry line".into(),
            })
        };
        let i = parse_idx(it.next())?;
        let j = parse_idx(it.next())?;
        let v: f64 = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Parse {
                path: path.clone(),
                line: lineno + 2,
                msg: "bad entry value".into(),
            })?;
        triplets.push((i - 1, j - 1, v));
        if symmetric && i != j {
            triplets.push((j - 1, i - 1, v));
        }
    }
    let (rows, cols, declared_nnz) = dims.ok_or_else(|| Error::MalformedHeader {
        path: path.clone(),
        msg: "missing size line".into(),
    })?;
    let stored = if symmetric {
        // each off-diagonal was duplicated above
        (triplets.len() + triplets.iter().filter(|t| t.0 == t.1).count()) / 2
    } else {
        triplets.len()
    };
    if stored != declared_nnz {
        return Err(Error::Malformed {
            path,
            msg: format!("declared {declared_nnz} entries, found {stored}"),
        });
    }
    SparseMatrix::from_triplets(rows, cols, triplets)
}

pub fn read_matrix_market_path(path: &Path) -> Result<SparseMatrix> {
    let file = std::fs::File::open(path)?;
    let mut r = std::io::BufReader::new(file);
    read_matrix_market(&mut r)
}
