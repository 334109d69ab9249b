//! Dense row-major `f64` matrices and the numeric kernels built on them.
//!
//! Everything downstream (the gradient tape, the loss heads, the detection
//! metrics) works in terms of [`Matrix`]. The kernels are plain functions so
//! the tape can reuse them for its forward values, and 64-bit precision is
//! used throughout: the distance-based losses push probabilities into the
//! `exp(-E_s * d)` range where `f32` headroom runs out quickly.

use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Epsilon added under the square root in [`pairwise_euclidean`]. Removes the
/// gradient singularity when a feature row coincides with a prototype.
pub const DIST_EPS: f64 = 1e-12;

/// Epsilon added to row norms in [`normalize_rows`]; a zero row maps to the
/// zero row instead of erroring.
pub const NORM_EPS: f64 = 1e-12;

/// Dense 2-D array of `f64` in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data, checking length and finiteness.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Matrix::from_vec",
                format!("{} values for {rows}x{cols}", rows * cols),
                format!("{}", data.len()),
            ));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::contract(format!(
                "matrix entries must be finite, found {bad}"
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::contract("matrix needs at least one row"));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape(
                "Matrix::from_rows",
                format!("uniform row length {cols}"),
                "ragged rows".to_string(),
            ));
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        Matrix::from_vec(rows.len(), cols, data)
    }

    /// Internal constructor for values produced by kernels that preserve
    /// finiteness by construction.
    pub(crate) fn new_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix::new_unchecked(rows, cols, vec![0.0; rows * cols])
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix::new_unchecked(rows, cols, vec![value; rows * cols])
    }

    /// Scalar wrapped as a 1x1 matrix.
    pub fn scalar(value: f64) -> Self {
        Matrix::new_unchecked(1, 1, vec![value])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// Value of a 1x1 matrix.
    pub fn scalar_value(&self) -> f64 {
        assert_eq!(
            (self.rows, self.cols),
            (1, 1),
            "scalar_value on {}x{} matrix",
            self.rows,
            self.cols
        );
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix::new_unchecked(
            self.rows,
            self.cols,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Stacks one extra matrix below this one. Column counts must agree.
    pub fn vstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::shape(
                "Matrix::vstack",
                format!("{} columns", self.cols),
                format!("{} columns", other.cols),
            ));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Matrix::new_unchecked(
            self.rows + other.rows,
            self.cols,
            data,
        ))
    }

    /// Copies a subset of rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix::new_unchecked(indices.len(), self.cols, data)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

// Matrices serialize as nested arrays of rows so checkpoints stay readable.
impl Serialize for Matrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.rows))?;
        for r in 0..self.rows {
            seq.serialize_element(self.row(r))?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct RowsVisitor;
        impl<'de> Visitor<'de> for RowsVisitor {
            type Value = Matrix;

            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a nested array of matrix rows")
            }

            fn visit_seq<A: SeqAccess<'de>>(
                self,
                mut seq: A,
            ) -> std::result::Result<Matrix, A::Error> {
                let mut rows: Vec<Vec<f64>> = Vec::new();
                while let Some(row) = seq.next_element::<Vec<f64>>()? {
                    rows.push(row);
                }
                Matrix::from_rows(&rows).map_err(de::Error::custom)
            }
        }
        deserializer.deserialize_seq(RowsVisitor)
    }
}

fn assert_same_shape(context: &str, a: &Matrix, b: &Matrix) {
    assert_eq!(
        a.shape(),
        b.shape(),
        "{context}: {}x{} vs {}x{}",
        a.rows,
        a.cols,
        b.rows,
        b.cols
    );
}

// ---------------------------------------------------------------------------
// Kernels. These are the forward computations reused by the gradient tape;
// shape misuse is a programmer error and panics. The fallible, documented
// operations of the public surface live further down.
// ---------------------------------------------------------------------------

pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(
        a.cols, b.rows,
        "matmul: {}x{} * {}x{}",
        a.rows, a.cols, b.rows, b.cols
    );
    let (m, k, n) = (a.rows, a.cols, b.cols);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a.data[i * k + p];
            let brow = &b.data[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    Matrix::new_unchecked(m, n, out)
}

/// `a * b^T` without materializing the transpose.
pub fn matmul_nt(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(
        a.cols, b.cols,
        "matmul_nt: {}x{} * ({}x{})^T",
        a.rows, a.cols, b.rows, b.cols
    );
    let (m, k, n) = (a.rows, a.cols, b.rows);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = a.row(i);
        for j in 0..n {
            let brow = b.row(j);
            let mut acc = 0.0;
            for p in 0..k {
                acc += arow[p] * brow[p];
            }
            out[i * n + j] = acc;
        }
    }
    Matrix::new_unchecked(m, n, out)
}

/// `a^T * b` without materializing the transpose.
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(
        a.rows, b.rows,
        "matmul_tn: ({}x{})^T * {}x{}",
        a.rows, a.cols, b.rows, b.cols
    );
    let (m, k, n) = (a.cols, a.rows, b.cols);
    let mut out = vec![0.0; m * n];
    for p in 0..k {
        let arow = a.row(p);
        let brow = b.row(p);
        for i in 0..m {
            let av = arow[i];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    Matrix::new_unchecked(m, n, out)
}

pub fn add(a: &Matrix, b: &Matrix) -> Matrix {
    assert_same_shape("add", a, b);
    Matrix::new_unchecked(
        a.rows,
        a.cols,
        a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect(),
    )
}

pub fn sub(a: &Matrix, b: &Matrix) -> Matrix {
    assert_same_shape("sub", a, b);
    Matrix::new_unchecked(
        a.rows,
        a.cols,
        a.data.iter().zip(&b.data).map(|(x, y)| x - y).collect(),
    )
}

pub fn mul_elem(a: &Matrix, b: &Matrix) -> Matrix {
    assert_same_shape("mul_elem", a, b);
    Matrix::new_unchecked(
        a.rows,
        a.cols,
        a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect(),
    )
}

pub fn scale(a: &Matrix, c: f64) -> Matrix {
    a.map(|v| v * c)
}

pub fn add_scalar(a: &Matrix, c: f64) -> Matrix {
    a.map(|v| v + c)
}

/// Adds a `1 x n` row vector to every row of `a`.
pub fn add_row_broadcast(a: &Matrix, row: &Matrix) -> Matrix {
    assert_eq!(row.rows, 1, "add_row_broadcast: row vector expected");
    assert_eq!(a.cols, row.cols, "add_row_broadcast: column mismatch");
    let mut out = a.data.clone();
    for r in 0..a.rows {
        for c in 0..a.cols {
            out[r * a.cols + c] += row.data[c];
        }
    }
    Matrix::new_unchecked(a.rows, a.cols, out)
}

/// Adds an `m x 1` column vector to every column of `a`.
pub fn add_col_broadcast(a: &Matrix, col: &Matrix) -> Matrix {
    assert_eq!(col.cols, 1, "add_col_broadcast: column vector expected");
    assert_eq!(a.rows, col.rows, "add_col_broadcast: row mismatch");
    let mut out = a.data.clone();
    for r in 0..a.rows {
        let v = col.data[r];
        for c in 0..a.cols {
            out[r * a.cols + c] += v;
        }
    }
    Matrix::new_unchecked(a.rows, a.cols, out)
}

pub fn relu(a: &Matrix) -> Matrix {
    a.map(|v| if v > 0.0 { v } else { 0.0 })
}

pub fn tanh(a: &Matrix) -> Matrix {
    a.map(f64::tanh)
}

pub fn abs_elem(a: &Matrix) -> Matrix {
    a.map(f64::abs)
}

pub fn sqrt_elem(a: &Matrix) -> Matrix {
    a.map(f64::sqrt)
}

pub fn log_elem(a: &Matrix) -> Matrix {
    a.map(f64::ln)
}

/// Elementwise `max(a, floor)`, also reporting how many entries were clamped.
pub fn clamp_min(a: &Matrix, floor: f64) -> (Matrix, u64) {
    let mut hits = 0u64;
    let data: Vec<f64> = a
        .data
        .iter()
        .map(|&v| {
            if v < floor {
                hits += 1;
                floor
            } else {
                v
            }
        })
        .collect();
    (Matrix::new_unchecked(a.rows, a.cols, data), hits)
}

pub fn row_sum(a: &Matrix) -> Matrix {
    let data: Vec<f64> = (0..a.rows).map(|r| a.row(r).iter().sum()).collect();
    Matrix::new_unchecked(a.rows, 1, data)
}

pub fn row_mean(a: &Matrix) -> Matrix {
    let n = a.cols as f64;
    let data: Vec<f64> = (0..a.rows)
        .map(|r| a.row(r).iter().sum::<f64>() / n)
        .collect();
    Matrix::new_unchecked(a.rows, 1, data)
}

pub fn col_sum(a: &Matrix) -> Matrix {
    let mut data = vec![0.0; a.cols];
    for r in 0..a.rows {
        for (c, v) in a.row(r).iter().enumerate() {
            data[c] += v;
        }
    }
    Matrix::new_unchecked(1, a.cols, data)
}

pub fn mean_all(a: &Matrix) -> Matrix {
    let total: f64 = self_sum(a);
    Matrix::scalar(total / (a.rows * a.cols) as f64)
}

fn self_sum(a: &Matrix) -> f64 {
    a.data.iter().sum()
}

/// Picks `a[r, targets[r]]` into a `rows x 1` matrix.
pub fn gather_targets(a: &Matrix, targets: &[usize]) -> Matrix {
    assert_eq!(a.rows, targets.len(), "gather_targets: row count mismatch");
    let data: Vec<f64> = targets
        .iter()
        .enumerate()
        .map(|(r, &t)| {
            assert!(
                t < a.cols,
                "gather_targets: target {t} out of {} classes",
                a.cols
            );
            a.get(r, t)
        })
        .collect();
    Matrix::new_unchecked(a.rows, 1, data)
}

/// Row-wise argmax with ties broken toward the lowest class index.
pub fn argmax_rows(a: &Matrix) -> Vec<usize> {
    (0..a.rows)
        .map(|r| {
            let row = a.row(r);
            let mut best = 0;
            for (i, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

pub fn row_max(a: &Matrix) -> Matrix {
    let data: Vec<f64> = (0..a.rows)
        .map(|r| a.row(r).iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    Matrix::new_unchecked(a.rows, 1, data)
}

// ---------------------------------------------------------------------------
// Named operations of the public surface.
// ---------------------------------------------------------------------------

/// Nonsquared Euclidean distance between every feature row and every
/// prototype row: entry `(b, n) = sqrt(sum_f (features[b,f] - prototypes[n,f])^2 + DIST_EPS)`.
///
/// Computed by explicit per-pair differencing rather than the
/// `|x|^2 + |p|^2 - 2 x.p` expansion, which cancels catastrophically for
/// nearby points.
pub fn pairwise_euclidean(features: &Matrix, prototypes: &Matrix) -> Result<Matrix> {
    if features.cols != prototypes.cols {
        return Err(Error::shape(
            "pairwise_euclidean",
            format!("feature dim {}", features.cols),
            format!("prototype dim {}", prototypes.cols),
        ));
    }
    if features.cols == 0 {
        return Err(Error::contract(
            "pairwise_euclidean: feature dim must be >= 1",
        ));
    }
    let (b, n, f) = (features.rows, prototypes.rows, features.cols);
    let mut out = vec![0.0; b * n];
    for i in 0..b {
        let frow = features.row(i);
        for j in 0..n {
            let prow = prototypes.row(j);
            let mut acc = DIST_EPS;
            for k in 0..f {
                let d = frow[k] - prow[k];
                acc += d * d;
            }
            out[i * n + j] = acc.sqrt();
        }
    }
    Ok(Matrix::new_unchecked(b, n, out))
}

/// Divides each row by its 2-norm plus [`NORM_EPS`]; zero rows map to zero rows.
pub fn normalize_rows(m: &Matrix) -> Matrix {
    let mut out = m.data.clone();
    for r in 0..m.rows {
        let row = &mut out[r * m.cols..(r + 1) * m.cols];
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        let denom = norm + NORM_EPS;
        for v in row.iter_mut() {
            *v /= denom;
        }
    }
    Matrix::new_unchecked(m.rows, m.cols, out)
}

/// Row-wise softmax with per-row max subtraction.
pub fn stable_softmax(logits: &Matrix) -> Matrix {
    let mut out = vec![0.0; logits.rows * logits.cols];
    for r in 0..logits.rows {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let orow = &mut out[r * logits.cols..(r + 1) * logits.cols];
        let mut total = 0.0;
        for (o, &v) in orow.iter_mut().zip(row) {
            let e = (v - max).exp();
            *o = e;
            total += e;
        }
        for o in orow.iter_mut() {
            *o /= total;
        }
    }
    Matrix::new_unchecked(logits.rows, logits.cols, out)
}

/// Shannon entropy of each probability row (`0 * log 0 == 0`), as a `B x 1`
/// column. Errors when a row does not sum to 1 within `1e-6`.
pub fn shannon_entropy(probs: &Matrix) -> Result<Matrix> {
    let mut data = Vec::with_capacity(probs.rows);
    for r in 0..probs.rows {
        let row = probs.row(r);
        let total: f64 = row.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::contract(format!(
                "shannon_entropy: row {r} sums to {total}, not a probability vector"
            )));
        }
        data.push(entropy_of_row(row));
    }
    Ok(Matrix::new_unchecked(probs.rows, 1, data))
}

/// Entropy of one probability row without the normalization check.
pub fn entropy_of_row(row: &[f64]) -> f64 {
    -row.iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn from_vec_rejects_bad_length_and_nonfinite() {
        assert!(Matrix::from_vec(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::from_vec(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Matrix::from_vec(1, 2, vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn matmul_small_example() {
        let a = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Matrix::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        let c = matmul(&a, &b);
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn matmul_transposed_variants_agree_with_plain() {
        let a = Matrix::from_vec(2, 3, vec![1.0, -2.0, 0.5, 3.0, 4.0, -1.0]).unwrap();
        let b = Matrix::from_vec(
            4,
            3,
            vec![2.0, 1.0, 0.0, -1.0, 3.0, 2.0, 0.5, 0.5, 0.5, 1.0, -1.0, 1.0],
        )
        .unwrap();
        let nt = matmul_nt(&a, &b);
        // oracle: multiply against the explicit transpose
        let mut bt = Matrix::zeros(3, 4);
        for r in 0..4 {
            for c in 0..3 {
                bt.set(c, r, b.get(r, c));
            }
        }
        let plain = matmul(&a, &bt);
        assert_eq!(nt.data(), plain.data());

        let c = Matrix::from_vec(2, 4, vec![1.0, 0.0, 2.0, -1.0, 0.5, 1.5, -2.0, 3.0]).unwrap();
        let tn = matmul_tn(&a, &c);
        let mut at = Matrix::zeros(3, 2);
        for r in 0..2 {
            for cc in 0..3 {
                at.set(cc, r, a.get(r, cc));
            }
        }
        let plain2 = matmul(&at, &c);
        assert_eq!(tn.data(), plain2.data());
    }

    #[test]
    fn pairwise_euclidean_coincident_row_hits_epsilon_floor() {
        let f = Matrix::from_vec(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let p = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 0.0, 0.0, 0.0]).unwrap();
        let d = pairwise_euclidean(&f, &p).unwrap();
        assert_close(d.get(0, 0), DIST_EPS.sqrt(), 1e-18);
        assert_close(d.get(0, 1), 14.0f64.sqrt(), 1e-9);
    }

    #[test]
    fn pairwise_euclidean_orthonormal_pair() {
        let f = Matrix::from_vec(1, 3, vec![1.0, 0.0, 0.0]).unwrap();
        let p = Matrix::from_vec(1, 3, vec![0.0, 1.0, 0.0]).unwrap();
        let d = pairwise_euclidean(&f, &p).unwrap();
        assert_close(d.get(0, 0), 2.0f64.sqrt(), 1e-9);
    }

    #[test]
    fn pairwise_euclidean_matches_double_loop_oracle() {
        let mut state = 0x9E37u64;
        let mut next = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 4.0 - 2.0
        };
        let f = Matrix::new_unchecked(3, 4, (0..12).map(|_| next()).collect());
        let p = Matrix::new_unchecked(5, 4, (0..20).map(|_| next()).collect());
        let d = pairwise_euclidean(&f, &p).unwrap();
        for b in 0..3 {
            for n in 0..5 {
                let mut acc = DIST_EPS;
                for k in 0..4 {
                    let t = f.get(b, k) - p.get(n, k);
                    acc += t * t;
                }
                assert_close(d.get(b, n), acc.sqrt(), 1e-12);
            }
        }
    }

    #[test]
    fn pairwise_euclidean_rejects_dim_mismatch() {
        let f = Matrix::zeros(1, 3);
        let p = Matrix::zeros(1, 4);
        assert!(matches!(
            pairwise_euclidean(&f, &p),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn normalize_rows_three_four_five() {
        let m = Matrix::from_vec(1, 2, vec![3.0, 4.0]).unwrap();
        let n = normalize_rows(&m);
        assert_close(n.get(0, 0), 0.6, 1e-9);
        assert_close(n.get(0, 1), 0.8, 1e-9);
    }

    #[test]
    fn normalize_rows_zero_row_stays_zero() {
        let m = Matrix::zeros(1, 2);
        let n = normalize_rows(&m);
        assert_eq!(n.data(), &[0.0, 0.0]);
    }

    #[test]
    fn stable_softmax_symmetry_and_closed_form() {
        let m = Matrix::filled(1, 4, 3.7);
        let s = stable_softmax(&m);
        assert_eq!(s.data(), &[0.25, 0.25, 0.25, 0.25]);

        let m = Matrix::from_vec(1, 2, vec![0.0, 3.0f64.ln()]).unwrap();
        let s = stable_softmax(&m);
        assert_close(s.get(0, 0), 0.25, 1e-12);
        assert_close(s.get(0, 1), 0.75, 1e-12);
    }

    #[test]
    fn shannon_entropy_closed_forms() {
        let uniform = Matrix::filled(1, 10, 0.1);
        assert_close(
            shannon_entropy(&uniform).unwrap().get(0, 0),
            10f64.ln(),
            1e-12,
        );

        let onehot = Matrix::from_vec(1, 4, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(shannon_entropy(&onehot).unwrap().get(0, 0), 0.0);

        let half = Matrix::from_vec(1, 4, vec![0.5, 0.5, 0.0, 0.0]).unwrap();
        assert_close(shannon_entropy(&half).unwrap().get(0, 0), 2f64.ln(), 1e-12);
    }

    #[test]
    fn shannon_entropy_rejects_unnormalized_rows() {
        let bad = Matrix::from_vec(1, 2, vec![0.7, 0.7]).unwrap();
        assert!(matches!(shannon_entropy(&bad), Err(Error::Contract(_))));
    }

    #[test]
    fn argmax_ties_break_low() {
        let m = Matrix::from_vec(2, 3, vec![1.0, 1.0, 0.0, 0.0, 2.0, 2.0]).unwrap();
        assert_eq!(argmax_rows(&m), vec![0, 1]);
    }

    proptest! {
        #[test]
        fn softmax_rows_are_stochastic(rows in 1usize..5, cols in 1usize..6, seed in 0u64..500) {
            let mut s = seed.wrapping_mul(2654435761).wrapping_add(1);
            let data: Vec<f64> = (0..rows * cols).map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 40.0 - 20.0
            }).collect();
            let m = Matrix::new_unchecked(rows, cols, data);
            let p = stable_softmax(&m);
            for r in 0..rows {
                let total: f64 = p.row(r).iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
                prop_assert!(p.row(r).iter().all(|&v| v >= 0.0));
            }
        }

        #[test]
        fn softmax_shift_invariance(cols in 2usize..6, shift in -50.0f64..50.0, seed in 0u64..500) {
            let mut s = seed.wrapping_mul(0x9E3779B9).wrapping_add(7);
            let data: Vec<f64> = (0..cols).map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 10.0 - 5.0
            }).collect();
            let m = Matrix::new_unchecked(1, cols, data);
            let shifted = add_scalar(&m, shift);
            let a = stable_softmax(&m);
            let b = stable_softmax(&shifted);
            for c in 0..cols {
                prop_assert!((a.get(0, c) - b.get(0, c)).abs() < 1e-12);
            }
        }

        #[test]
        fn sharpening_never_raises_entropy(cols in 2usize..6, seed in 0u64..300) {
            let mut s = seed.wrapping_mul(0xC2B2AE35).wrapping_add(11);
            let data: Vec<f64> = (0..cols).map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 6.0 - 3.0
            }).collect();
            let row = Matrix::new_unchecked(1, cols, data);
            let mut prev = f64::INFINITY;
            for k in [1.0, 2.0, 3.0, 5.0, 10.0, 20.0] {
                let h = entropy_of_row(stable_softmax(&scale(&row, k)).row(0));
                prop_assert!(h <= prev + 1e-12, "entropy rose from {prev} to {h} at k={k}");
                prev = h;
            }
        }

        #[test]
        fn normalized_row_norms_in_unit_band(rows in 1usize..5, cols in 1usize..7, seed in 0u64..300) {
            let mut s = seed.wrapping_mul(0x85EBCA6B).wrapping_add(3);
            let data: Vec<f64> = (0..rows * cols).map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 8.0 - 4.0
            }).collect();
            let m = Matrix::new_unchecked(rows, cols, data);
            let n = normalize_rows(&m);
            for r in 0..rows {
                let norm = n.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
                if m.row(r).iter().any(|&v| v != 0.0) {
                    prop_assert!((1.0 - 1e-6..=1.0 + 1e-6).contains(&norm));
                }
            }
        }

        #[test]
        fn pairwise_euclidean_is_a_metric(seed in 0u64..300) {
            let mut s = seed.wrapping_mul(0x27D4EB2F).wrapping_add(5);
            let mut next = move || {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 4.0 - 2.0
            };
            let a = Matrix::new_unchecked(3, 4, (0..12).map(|_| next()).collect());
            let b = Matrix::new_unchecked(2, 4, (0..8).map(|_| next()).collect());
            let ab = pairwise_euclidean(&a, &b).unwrap();
            let ba = pairwise_euclidean(&b, &a).unwrap();
            for i in 0..3 {
                for j in 0..2 {
                    prop_assert!((ab.get(i, j) - ba.get(j, i)).abs() < 1e-9);
                }
            }
            // triangle inequality over rows of `a` through rows of `b`
            let aa = pairwise_euclidean(&a, &a).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..2 {
                        prop_assert!(aa.get(i, j) <= ab.get(i, k) + ab.get(j, k) + 1e-9);
                    }
                }
            }
        }
    }
}
