//! Dense row-major f64 matrices plus the value-level math the rest of the
//! crate builds on. Differentiable versions of these operations live in
//! [`crate::tape`]; everything here is plain forward arithmetic.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{OmniBindError, Result};
use crate::threads;

/// Norms below this are treated as zero rows.
pub const NORM_FLOOR: f64 = 1e-12;

/// Probability entries are clamped to this floor inside divergences.
pub const PROB_FLOOR: f64 = 1e-12;

/// Dense 2-D matrix of f64 values, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(OmniBindError::DataLength {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Tensor { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(OmniBindError::EmptyInput("tensor rows"));
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(OmniBindError::DimensionMismatch {
                    what: "tensor row",
                    expected: cols,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Tensor {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Single-row tensor from a slice.
    pub fn row_vector(values: &[f64]) -> Self {
        Tensor {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Entries drawn i.i.d. from N(0, 1).
    pub fn randn(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let data = (0..rows * cols).map(|_| standard_normal(rng)).collect();
        Tensor { rows, cols, data }
    }

    /// Entries drawn i.i.d. uniform on [-limit, limit].
    pub fn uniform(rows: usize, cols: usize, limit: f64, rng: &mut impl Rng) -> Self {
        let data = (0..rows * cols)
            .map(|_| rng.gen_range(-limit..=limit))
            .collect();
        Tensor { rows, cols, data }
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

    pub fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }

    pub fn scalar(&self) -> f64 {
        debug_assert!(self.is_scalar());
        self.data[0]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn row_mut(&mut self, row: usize) -> &mut [f64] {
        &mut self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Extract one row as a 1xC tensor.
    pub fn row_tensor(&self, row: usize) -> Tensor {
        Tensor::row_vector(self.row(row))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn transpose(&self) -> Tensor {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// `self @ other`. Rows of the output are independent, so the optional
    /// thread pool splits by row with bitwise-identical results.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.cols != other.rows {
            return Err(OmniBindError::ShapeMismatch {
                op: "matmul",
                left: (self.rows, self.cols),
                right: (other.rows, other.cols),
            });
        }
        let mut out = Tensor::zeros(self.rows, other.cols);
        let inner = self.cols;
        let ocols = other.cols;
        let lhs = &self.data;
        let rhs = &other.data;
        threads::for_each_row(&mut out.data, ocols, |i, out_row| {
            let a_row = &lhs[i * inner..(i + 1) * inner];
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &rhs[k * ocols..(k + 1) * ocols];
                for (o, &b) in out_row.iter_mut().zip(b_row.iter()) {
                    *o += a * b;
                }
            }
        });
        Ok(out)
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    fn zip_with(
        &self,
        other: &Tensor,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        if self.shape() != other.shape() {
            return Err(OmniBindError::ShapeMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Tensor {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        self.map(|v| v * factor)
    }

    /// Matrix plus a broadcast 1xC row vector.
    pub fn add_bias(&self, bias: &Tensor) -> Result<Tensor> {
        if bias.rows != 1 || bias.cols != self.cols {
            return Err(OmniBindError::ShapeMismatch {
                op: "add_bias",
                left: self.shape(),
                right: bias.shape(),
            });
        }
        let mut out = self.clone();
        for i in 0..out.rows {
            for (o, &b) in out.row_mut(i).iter_mut().zip(bias.data.iter()) {
                *o += b;
            }
        }
        Ok(out)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Column-wise mean: NxC -> 1xC.
    pub fn mean_rows(&self) -> Tensor {
        let mut out = Tensor::zeros(1, self.cols);
        for i in 0..self.rows {
            for (o, &v) in out.data.iter_mut().zip(self.row(i).iter()) {
                *o += v;
            }
        }
        let inv = 1.0 / self.rows as f64;
        for o in out.data.iter_mut() {
            *o *= inv;
        }
        out
    }

    /// Horizontal concatenation of equally tall blocks.
    pub fn concat_cols(blocks: &[&Tensor]) -> Result<Tensor> {
        if blocks.is_empty() {
            return Err(OmniBindError::EmptyInput("concat_cols blocks"));
        }
        let rows = blocks[0].rows;
        let mut cols = 0;
        for b in blocks {
            if b.rows != rows {
                return Err(OmniBindError::ShapeMismatch {
                    op: "concat_cols",
                    left: (rows, blocks[0].cols),
                    right: b.shape(),
                });
            }
            cols += b.cols;
        }
        let mut out = Tensor::zeros(rows, cols);
        for i in 0..rows {
            let mut offset = 0;
            for b in blocks {
                out.row_mut(i)[offset..offset + b.cols].copy_from_slice(b.row(i));
                offset += b.cols;
            }
        }
        Ok(out)
    }

    /// Vertical concatenation of equally wide blocks.
    pub fn concat_rows(blocks: &[&Tensor]) -> Result<Tensor> {
        if blocks.is_empty() {
            return Err(OmniBindError::EmptyInput("concat_rows blocks"));
        }
        let cols = blocks[0].cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for b in blocks {
            if b.cols != cols {
                return Err(OmniBindError::ShapeMismatch {
                    op: "concat_rows",
                    left: (blocks[0].rows, cols),
                    right: b.shape(),
                });
            }
            data.extend_from_slice(&b.data);
            rows += b.rows;
        }
        Ok(Tensor { rows, cols, data })
    }

    pub fn reshape(&self, rows: usize, cols: usize) -> Result<Tensor> {
        if rows * cols != self.data.len() {
            return Err(OmniBindError::DataLength {
                expected: self.data.len(),
                got: rows * cols,
            });
        }
        Ok(Tensor {
            rows,
            cols,
            data: self.data.clone(),
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        debug_assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Box-Muller; two uniforms per normal keeps the draw order independent of
/// any caching, which matters for seed-stable replay.
fn standard_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Gaussian direction of unit Euclidean norm.
pub fn unit_direction(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| standard_normal(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > NORM_FLOOR {
            return v.iter().map(|x| x / norm).collect();
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity of two vectors.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (norm(a) * norm(b)).max(NORM_FLOOR)
}

/// Row-wise softmax with temperature: `out[i][j] ∝ exp(x[i][j] / temperature)`.
/// Each row is shifted by its max before exponentiation.
pub fn rowwise_softmax(x: &Tensor, temperature: f64) -> Result<Tensor> {
    if !(temperature > 0.0) {
        return Err(OmniBindError::InvalidTemperature { temperature });
    }
    let mut out = x.clone();
    for i in 0..out.rows() {
        softmax_row_in_place(out.row_mut(i), temperature);
    }
    Ok(out)
}

pub(crate) fn softmax_row_in_place(row: &mut [f64], temperature: f64) {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = ((*v - max) / temperature).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Scale every row to unit Euclidean norm. Zero rows are rejected.
pub fn l2_normalize_rows(x: &Tensor) -> Result<Tensor> {
    let mut out = x.clone();
    for i in 0..out.rows() {
        let n = norm(out.row(i));
        if n < NORM_FLOOR {
            return Err(OmniBindError::DegenerateRow {
                op: "l2_normalize_rows",
                row: i,
            });
        }
        for v in out.row_mut(i).iter_mut() {
            *v /= n;
        }
    }
    Ok(out)
}

/// Mean over rows of `Σ_j p[i][j] · ln(p[i][j] / q[i][j])`, with the
/// conventions `0 · ln(0/q) = 0` and `q` clamped to [`PROB_FLOOR`].
///
/// Both arguments must be row-stochastic to within 1e-6.
pub fn kl_rows(p: &Tensor, q: &Tensor) -> Result<f64> {
    if p.shape() != q.shape() {
        return Err(OmniBindError::ShapeMismatch {
            op: "kl_rows",
            left: p.shape(),
            right: q.shape(),
        });
    }
    validate_distribution_rows(p)?;
    validate_distribution_rows(q)?;
    let mut total = 0.0;
    for i in 0..p.rows() {
        let mut row_kl = 0.0;
        for (&pv, &qv) in p.row(i).iter().zip(q.row(i).iter()) {
            if pv > 0.0 {
                row_kl += pv * (pv / qv.max(PROB_FLOOR)).ln();
            }
        }
        total += row_kl;
    }
    Ok(total / p.rows() as f64)
}

pub(crate) fn validate_distribution_rows(x: &Tensor) -> Result<()> {
    for i in 0..x.rows() {
        let mut sum = 0.0;
        for &v in x.row(i) {
            if v < 0.0 {
                return Err(OmniBindError::NotADistribution { row: i, sum: v });
            }
            sum += v;
        }
        if (sum - 1.0).abs() > 1e-6 {
            return Err(OmniBindError::NotADistribution { row: i, sum });
        }
    }
    Ok(())
}

/// Gaussian-error linear unit, tanh form. Smooth everywhere, which keeps
/// finite-difference gradient checks tight.
pub fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

/// Analytic derivative of [`gelu`].
pub fn gelu_prime(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    let u = C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * 0.044715 * x * x)
}

const OBT1_MAGIC: &[u8; 4] = b"OBT1";

/// Write in the OBT1 layout: magic, u32 rows, u32 cols, f32 data, all
/// little-endian, row-major. Values are narrowed to f32 on disk.
pub fn write_obt1(tensor: &Tensor, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(12 + tensor.data.len() * 4);
    bytes.extend_from_slice(OBT1_MAGIC);
    bytes.extend_from_slice(&(tensor.rows as u32).to_le_bytes());
    bytes.extend_from_slice(&(tensor.cols as u32).to_le_bytes());
    for &v in &tensor.data {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut file = fs::File::create(path).map_err(|e| OmniBindError::io(path, e))?;
    file.write_all(&bytes).map_err(|e| OmniBindError::io(path, e))
}

pub fn read_obt1(path: &Path) -> Result<Tensor> {
    let mut file = fs::File::open(path).map_err(|e| OmniBindError::io(path, e))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)
        .map_err(|e| OmniBindError::io(path, e))?;
    if bytes.len() < 12 || &bytes[0..4] != OBT1_MAGIC {
        return Err(OmniBindError::Format {
            path: path.to_path_buf(),
            message: "missing OBT1 magic".into(),
        });
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = 12 + rows * cols * 4;
    if bytes.len() != expected {
        return Err(OmniBindError::Format {
            path: path.to_path_buf(),
            message: format!("expected {expected} bytes, found {}", bytes.len()),
        });
    }
    let mut data = Vec::with_capacity(rows * cols);
    for chunk in bytes[12..].chunks_exact(4) {
        data.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
    }
    Ok(Tensor { rows, cols, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matmul_identity_passthrough() {
        let i2 = Tensor::identity(2);
        let m = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(i2.matmul(&m).unwrap(), m);
    }

    #[test]
    fn matmul_permutation() {
        let a = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let b = Tensor::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(a.matmul(&b).unwrap(), b);
    }

    fn matmul_oracle(a: &Tensor, b: &Tensor) -> Tensor {
        // Independent triple loop, accumulated in the same index order.
        let mut out = Tensor::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut acc = 0.0;
                for k in 0..a.cols() {
                    acc += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = Tensor::randn(3, 4, &mut rng);
            let b = Tensor::randn(4, 2, &mut rng);
            let got = a.matmul(&b).unwrap();
            let want = matmul_oracle(&a, &b);
            assert!(got.max_abs_diff(&want) < 1e-12, "seed {seed}");
        }
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Tensor::zeros(2, 3);
        let b = Tensor::zeros(2, 3);
        let err = a.matmul(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.contains("matmul"), "{msg}");
    }

    #[test]
    fn softmax_symmetry() {
        let x = Tensor::row_vector(&[0.0, 0.0]);
        let s = rowwise_softmax(&x, 1.0).unwrap();
        assert_eq!(s.row(0), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_direct_evaluation() {
        // exp-normalize of [1,2,3] by hand.
        let exps: Vec<f64> = [1.0f64, 2.0, 3.0].iter().map(|v| v.exp()).collect();
        let z: f64 = exps.iter().sum();
        let s = rowwise_softmax(&Tensor::row_vector(&[1.0, 2.0, 3.0]), 1.0).unwrap();
        for (got, want) in s.row(0).iter().zip(exps.iter().map(|e| e / z)) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((s.get(0, 0) - 0.0900).abs() < 1e-4);
        assert!((s.get(0, 1) - 0.2447).abs() < 1e-4);
        assert!((s.get(0, 2) - 0.6652).abs() < 1e-4);
    }

    #[test]
    fn softmax_shift_invariance() {
        for c in [-17.5, 0.3, 42.0] {
            let base = rowwise_softmax(&Tensor::row_vector(&[1.0, 2.0, 3.0]), 1.0).unwrap();
            let shifted =
                rowwise_softmax(&Tensor::row_vector(&[1.0 + c, 2.0 + c, 3.0 + c]), 1.0).unwrap();
            assert!(base.max_abs_diff(&shifted) < 1e-12);
        }
    }

    #[test]
    fn softmax_rejects_nonpositive_temperature() {
        let x = Tensor::row_vector(&[1.0]);
        assert!(matches!(
            rowwise_softmax(&x, 0.0),
            Err(OmniBindError::InvalidTemperature { .. })
        ));
        assert!(rowwise_softmax(&x, -1.0).is_err());
    }

    #[test]
    fn normalize_three_four_five() {
        let t = l2_normalize_rows(&Tensor::row_vector(&[3.0, 4.0])).unwrap();
        assert_eq!(t.row(0), &[0.6, 0.8]);
    }

    #[test]
    fn normalize_idempotent_on_unit_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let unit = l2_normalize_rows(&Tensor::randn(1, 6, &mut rng)).unwrap();
        let again = l2_normalize_rows(&unit).unwrap();
        assert!(unit.max_abs_diff(&again) < 1e-12);
    }

    #[test]
    fn normalize_random_rows_have_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = l2_normalize_rows(&Tensor::randn(4, 8, &mut rng)).unwrap();
        for i in 0..4 {
            assert!((norm(t.row(i)) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn normalize_zero_row_names_index() {
        let x = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        match l2_normalize_rows(&x) {
            Err(OmniBindError::DegenerateRow { row, .. }) => assert_eq!(row, 1),
            other => panic!("expected degenerate row error, got {other:?}"),
        }
    }

    #[test]
    fn kl_of_identical_rows_is_zero() {
        let p = Tensor::from_rows(&[vec![0.2, 0.3, 0.5], vec![0.7, 0.2, 0.1]]).unwrap();
        assert!(kl_rows(&p, &p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn kl_direct_evaluation() {
        // 0.5·ln(0.5/0.9) + 0.5·ln(0.5/0.1)
        let want = 0.5 * (0.5f64 / 0.9).ln() + 0.5 * (0.5f64 / 0.1).ln();
        let p = Tensor::row_vector(&[0.5, 0.5]);
        let q = Tensor::row_vector(&[0.9, 0.1]);
        let got = kl_rows(&p, &q).unwrap();
        assert!((got - want).abs() < 1e-12);
        assert!((got - 0.5108).abs() < 1e-3);
    }

    #[test]
    fn kl_zero_target_entries_contribute_zero() {
        let p = Tensor::row_vector(&[0.0, 1.0]);
        let q = Tensor::row_vector(&[0.5, 0.5]);
        let want = (1.0f64 / 0.5).ln();
        assert!((kl_rows(&p, &q).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn kl_rejects_non_distribution() {
        let p = Tensor::row_vector(&[0.5, 0.6]);
        let q = Tensor::row_vector(&[0.5, 0.5]);
        assert!(matches!(
            kl_rows(&p, &q),
            Err(OmniBindError::NotADistribution { .. })
        ));
    }

    #[test]
    fn obt1_roundtrip_quantizes_to_f32() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.obt");
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = Tensor::randn(3, 5, &mut rng);
        write_obt1(&t, &path).unwrap();
        let back = read_obt1(&path).unwrap();
        assert_eq!(back.shape(), (3, 5));
        for (a, b) in t.as_slice().iter().zip(back.as_slice()) {
            assert_eq!(*a as f32 as f64, *b);
        }
    }

    #[test]
    fn obt1_rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.obt");
        std::fs::write(&path, b"NOPE\x01\x00\x00\x00\x01\x00\x00\x00aaaa").unwrap();
        assert!(matches!(
            read_obt1(&path),
            Err(OmniBindError::Format { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn softmax_rows_sum_to_one(
            vals in proptest::collection::vec(-50.0f64..50.0, 2..12),
            tau in 0.01f64..10.0,
        ) {
            let t = Tensor::row_vector(&vals);
            let s = rowwise_softmax(&t, tau).unwrap();
            let sum: f64 = s.row(0).iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
        }

        #[test]
        fn kl_is_nonnegative(
            p_raw in proptest::collection::vec(0.01f64..1.0, 4),
            q_raw in proptest::collection::vec(0.01f64..1.0, 4),
        ) {
            let norm_p: f64 = p_raw.iter().sum();
            let norm_q: f64 = q_raw.iter().sum();
            let p = Tensor::row_vector(&p_raw.iter().map(|v| v / norm_p).collect::<Vec<_>>());
            let q = Tensor::row_vector(&q_raw.iter().map(|v| v / norm_q).collect::<Vec<_>>());
            prop_assert!(kl_rows(&p, &q).unwrap() >= -1e-9);
        }

        #[test]
        fn matmul_agrees_with_oracle(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = Tensor::randn(2, 3, &mut rng);
            let b = Tensor::randn(3, 4, &mut rng);
            let got = a.matmul(&b).unwrap();
            let want = matmul_oracle(&a, &b);
            prop_assert!(got.max_abs_diff(&want) < 1e-12);
        }
    }
}
