//! Compressed-sparse-row complex matrices and the matrix-free operator trait.
//!
//! Column indices are stored as u32 (state-space dimensions stay below 2³²);
//! entries within each row are kept sorted so arithmetic is deterministic
//! run-to-run.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

/// Anything that can act on a complex vector.
pub trait LinearOp: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[C64], y: &mut [C64]);
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<C64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CsrMatrix {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n as u32).collect(),
            values: vec![C64::new(1.0, 0.0); n],
        }
    }

    pub fn from_diag(diag: &[C64]) -> Self {
        let n = diag.len();
        CsrMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n as u32).collect(),
            values: diag.to_vec(),
        }
    }

    /// Build from (row, col, value) triplets; duplicates are summed, exact
    /// zeros dropped, entries sorted.
    pub fn from_triplets(nrows: usize, ncols: usize, mut t: Vec<(u32, u32, C64)>) -> Self {
        assert!(nrows < u32::MAX as usize && ncols < u32::MAX as usize);
        t.sort_unstable_by_key(|&(r, c, _)| ((r as u64) << 32) | c as u64);
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(t.len());
        let mut values: Vec<C64> = Vec::with_capacity(t.len());
        let mut rows_seen = Vec::with_capacity(t.len());
        for (r, c, v) in t {
            if let (Some(&lr), Some(&lc)) = (rows_seen.last(), col_idx.last()) {
                if lr == r && lc == c {
                    *values.last_mut().unwrap() += v;
                    continue;
                }
            }
            rows_seen.push(r);
            col_idx.push(c);
            values.push(v);
        }
        // Drop exact zeros produced by cancellation.
        let mut keep_col = Vec::with_capacity(col_idx.len());
        let mut keep_val = Vec::with_capacity(values.len());
        for ((r, c), v) in rows_seen.iter().zip(&col_idx).zip(&values) {
            if v.re != 0.0 || v.im != 0.0 {
                row_ptr[*r as usize + 1] += 1;
                keep_col.push(*c);
                keep_val.push(*v);
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx: keep_col,
            values: keep_val,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[u32], &[C64]) {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u32, C64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter()
                .zip(vals)
                .map(move |(&c, &v)| (r as u32, c, v))
        })
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&(c as u32)) {
            Ok(k) => vals[k],
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    pub fn scale(&mut self, s: C64) {
        for v in &mut self.values {
            *v *= s;
        }
    }

    pub fn scaled(&self, s: C64) -> Self {
        let mut out = self.clone();
        out.scale(s);
        out
    }

    /// self + s·other.
    pub fn add_scaled(&self, other: &CsrMatrix, s: C64) -> CsrMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut t: Vec<(u32, u32, C64)> = Vec::with_capacity(self.nnz() + other.nnz());
        t.extend(self.iter());
        t.extend(other.iter().map(|(r, c, v)| (r, c, v * s)));
        CsrMatrix::from_triplets(self.nrows, self.ncols, t)
    }

    pub fn adjoint(&self) -> CsrMatrix {
        let t: Vec<(u32, u32, C64)> = self.iter().map(|(r, c, v)| (c, r, v.conj())).collect();
        CsrMatrix::from_triplets(self.ncols, self.nrows, t)
    }

    pub fn matmul(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.ncols, other.nrows, "matmul dimension mismatch");
        let mut acc: Vec<C64> = vec![C64::new(0.0, 0.0); other.ncols];
        let mut touched: Vec<u32> = Vec::new();
        let mut t: Vec<(u32, u32, C64)> = Vec::new();
        for r in 0..self.nrows {
            touched.clear();
            let (cols, vals) = self.row(r);
            for (&k, &av) in cols.iter().zip(vals) {
                let (bcols, bvals) = other.row(k as usize);
                for (&c, &bv) in bcols.iter().zip(bvals) {
                    let cell = &mut acc[c as usize];
                    if cell.re == 0.0 && cell.im == 0.0 {
                        touched.push(c);
                    }
                    *cell += av * bv;
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                let v = acc[c as usize];
                if v.re != 0.0 || v.im != 0.0 {
                    t.push((r as u32, c, v));
                }
                acc[c as usize] = C64::new(0.0, 0.0);
            }
        }
        CsrMatrix::from_triplets(self.nrows, other.ncols, t)
    }

    pub fn matvec_into(&self, x: &[C64], y: &mut [C64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            let mut acc = C64::new(0.0, 0.0);
            for (&c, &v) in cols.iter().zip(vals) {
                acc += v * x[c as usize];
            }
            y[r] = acc;
        }
    }

    /// y += s · A · x, scatter-free accumulate.
    pub fn matvec_acc(&self, x: &[C64], y: &mut [C64], s: C64) {
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            let mut acc = C64::new(0.0, 0.0);
            for (&c, &v) in cols.iter().zip(vals) {
                acc += v * x[c as usize];
            }
            y[r] += s * acc;
        }
    }

    /// y = A† · x without materializing the adjoint.
    pub fn matvec_adjoint_into(&self, x: &[C64], y: &mut [C64]) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(y.len(), self.ncols);
        y.fill(C64::new(0.0, 0.0));
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            let xr = x[r];
            for (&c, &v) in cols.iter().zip(vals) {
                y[c as usize] += v.conj() * xr;
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.iter() {
            m[(r as usize, c as usize)] = v;
        }
        m
    }

    pub fn from_dense(m: &DMatrix<C64>, drop_below: f64) -> CsrMatrix {
        let mut t = Vec::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                let v = m[(r, c)];
                if v.norm() > drop_below {
                    t.push((r as u32, c as u32, v));
                }
            }
        }
        CsrMatrix::from_triplets(m.nrows(), m.ncols(), t)
    }

    /// Frobenius norm of A − A†.
    pub fn hermitian_deviation(&self) -> f64 {
        let diff = self.add_scaled(&self.adjoint(), C64::new(-1.0, 0.0));
        diff.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn frobenius(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Versioned little-endian binary framing: version byte, dims, row
    /// pointer, column indices, interleaved re/im values.
    pub fn write_binary<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&[1u8])?;
        w.write_all(&(self.nrows as u64).to_le_bytes())?;
        w.write_all(&(self.ncols as u64).to_le_bytes())?;
        w.write_all(&(self.nnz() as u64).to_le_bytes())?;
        for p in &self.row_ptr {
            w.write_all(&(*p as u64).to_le_bytes())?;
        }
        for c in &self.col_idx {
            w.write_all(&c.to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: std::io::Read>(r: &mut R) -> Result<CsrMatrix> {
        let mut byte = [0u8; 1];
        r.read_exact(&mut byte)?;
        if byte[0] != 1 {
            return Err(Error::Parse(format!("unknown operator format version {}", byte[0])));
        }
        let mut u64buf = [0u8; 8];
        let mut read_u64 = |r: &mut R| -> Result<u64> {
            r.read_exact(&mut u64buf)?;
            Ok(u64::from_le_bytes(u64buf))
        };
        let nrows = read_u64(r)? as usize;
        let ncols = read_u64(r)? as usize;
        let nnz = read_u64(r)? as usize;
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        for _ in 0..=nrows {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            row_ptr.push(u64::from_le_bytes(b) as usize);
        }
        let mut col_idx = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            col_idx.push(u32::from_le_bytes(b));
        }
        let mut values = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            let mut re = [0u8; 8];
            let mut im = [0u8; 8];
            r.read_exact(&mut re)?;
            r.read_exact(&mut im)?;
            values.push(C64::new(f64::from_le_bytes(re), f64::from_le_bytes(im)));
        }
        if row_ptr.len() != nrows + 1 || *row_ptr.last().unwrap_or(&0) != nnz {
            return Err(Error::Parse("inconsistent row pointer table".into()));
        }
        Ok(CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }
}

impl LinearOp for CsrMatrix {
    fn dim(&self) -> usize {
        debug_assert_eq!(self.nrows, self.ncols);
        self.nrows
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        self.matvec_into(x, y);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small(rows: usize, cols: usize, seed: u64) -> CsrMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                if rng.random_bool(0.4) {
                    t.push((
                        r as u32,
                        c as u32,
                        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                    ));
                }
            }
        }
        CsrMatrix::from_triplets(rows, cols, t)
    }

    #[test]
    fn matmul_matches_dense() {
        let a = small(7, 5, 1);
        let b = small(5, 6, 2);
        let c = a.matmul(&b);
        let dense = a.to_dense() * b.to_dense();
        assert!((c.to_dense() - dense).norm() < 1e-13);
    }

    #[test]
    fn adjoint_and_matvec() {
        let a = small(6, 6, 3);
        let x: Vec<C64> = (0..6).map(|k| C64::new(k as f64, -1.0)).collect();
        let mut y = vec![C64::new(0.0, 0.0); 6];
        a.matvec_into(&x, &mut y);
        let dense_y = a.to_dense() * nalgebra::DVector::from_column_slice(&x);
        for k in 0..6 {
            assert!((y[k] - dense_y[k]).norm() < 1e-13);
        }
        let mut z = vec![C64::new(0.0, 0.0); 6];
        a.matvec_adjoint_into(&x, &mut z);
        let dense_z = a.to_dense().adjoint() * nalgebra::DVector::from_column_slice(&x);
        for k in 0..6 {
            assert!((z[k] - dense_z[k]).norm() < 1e-13);
        }
    }

    #[test]
    fn duplicate_triplets_sum_and_zeros_drop() {
        let one = C64::new(1.0, 0.0);
        let m = CsrMatrix::from_triplets(2, 2, vec![(0, 0, one), (0, 0, one), (1, 1, one), (1, 1, -one)]);
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(0, 0), C64::new(2.0, 0.0));
    }

    proptest! {
        #[test]
        fn binary_roundtrip(seed in 0u64..500) {
            let a = small(8, 8, seed);
            let mut buf = Vec::new();
            a.write_binary(&mut buf).unwrap();
            let b = CsrMatrix::read_binary(&mut buf.as_slice()).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn add_scaled_is_linear(seed in 0u64..200, re in -2.0f64..2.0, im in -2.0f64..2.0) {
            let a = small(5, 5, seed);
            let b = small(5, 5, seed.wrapping_add(99));
            let s = C64::new(re, im);
            let got = a.add_scaled(&b, s).to_dense();
            let want = a.to_dense() + b.to_dense() * s;
            prop_assert!((got - want).norm() < 1e-12);
        }
    }
}
