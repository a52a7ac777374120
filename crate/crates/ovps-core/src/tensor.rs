//! Minimal dense-tensor representation and the shared numeric kernels
//! (row normalization, cosine similarity, tempered softmax, sigmoid) used
//! by every other module.
//!
//! All arithmetic is carried out in `f64` regardless of how the data was
//! serialized; gradient checks and metric accumulation need the headroom
//! and desk-scale sizes make it cheap.

use crate::error::{Error, Result};

/// Row norms below this threshold are treated as zero vectors.
pub const EPS_NORM: f64 = 1e-12;

/// Rank-1/2/3 numeric array with shape metadata, row-major storage.
///
/// Carrier for embeddings, feature maps and masks. Construction rejects
/// empty extents, rank 0 or rank > 3, and non-finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    /// Build a tensor from a shape and row-major data, validating the
    /// construction invariants.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 3 {
            return Err(Error::InvalidShape {
                shape,
                reason: "rank must be 1, 2 or 3".into(),
            });
        }
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidShape {
                shape,
                reason: "extents must be positive".into(),
            });
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::InvalidShape {
                shape,
                reason: format!("product of extents {expected} != data length {}", data.len()),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { index });
        }
        Ok(Self { shape, data })
    }

    /// Rank-1 tensor from a vector.
    pub fn from_vec(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Self::new(vec![n], data)
    }

    /// Rank-2 tensor from rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(nrows * ncols);
        for row in rows {
            if row.len() != ncols {
                return Err(Error::InvalidShape {
                    shape: vec![nrows, ncols],
                    reason: "ragged rows".into(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(vec![nrows, ncols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Row `i` of a rank-2 tensor.
    pub fn row(&self, i: usize) -> &[f64] {
        debug_assert_eq!(self.rank(), 2);
        let w = self.shape[1];
        &self.data[i * w..(i + 1) * w]
    }

    /// Contiguous plane `i` of a rank-3 tensor, as `shape[1] * shape[2]` values.
    pub fn plane(&self, i: usize) -> &[f64] {
        debug_assert_eq!(self.rank(), 3);
        let w = self.shape[1] * self.shape[2];
        &self.data[i * w..(i + 1) * w]
    }

    /// Value at `(i, j)` of a rank-2 tensor.
    pub fn at2(&self, i: usize, j: usize) -> f64 {
        debug_assert_eq!(self.rank(), 2);
        self.data[i * self.shape[1] + j]
    }

    /// Value at `(i, j, k)` of a rank-3 tensor.
    pub fn at3(&self, i: usize, j: usize, k: usize) -> f64 {
        debug_assert_eq!(self.rank(), 3);
        self.data[(i * self.shape[1] + j) * self.shape[2] + k]
    }

    pub(crate) fn expect_rank(&self, rank: usize, context: &str) -> Result<()> {
        if self.rank() != rank {
            return Err(Error::ShapeMismatch {
                context: context.into(),
                expected: format!("rank-{rank}"),
                actual: format!("rank-{} {:?}", self.rank(), self.shape),
            });
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Divide every row of a rank-2 tensor by its Euclidean norm.
///
/// Fails with [`Error::ZeroVector`] if any row norm is at or below
/// [`EPS_NORM`]. Idempotent: normalizing twice gives bitwise-identical rows.
pub fn l2_normalize(rows: &DenseTensor) -> Result<DenseTensor> {
    rows.expect_rank(2, "l2_normalize")?;
    let (n, d) = (rows.shape()[0], rows.shape()[1]);
    let mut out = Vec::with_capacity(n * d);
    for i in 0..n {
        let row = rows.row(i);
        let nrm = norm(row);
        if nrm <= EPS_NORM {
            return Err(Error::ZeroVector { row: i, norm: nrm });
        }
        out.extend(row.iter().map(|v| v / nrm));
    }
    DenseTensor::new(vec![n, d], out)
}

/// Pairwise cosine similarity between the rows of `a` (M x D) and the rows
/// of `b` (N x D), as an M x N matrix.
///
/// Rows are unit-normalized internally, so callers may pass raw embeddings.
/// Entries are clamped to `[-1, 1]` to remove rounding excursions.
pub fn cosine_similarity_matrix(a: &DenseTensor, b: &DenseTensor) -> Result<DenseTensor> {
    a.expect_rank(2, "cosine_similarity_matrix lhs")?;
    b.expect_rank(2, "cosine_similarity_matrix rhs")?;
    if a.shape()[1] != b.shape()[1] {
        return Err(Error::ShapeMismatch {
            context: "cosine_similarity_matrix".into(),
            expected: format!("embedding width {}", a.shape()[1]),
            actual: format!("embedding width {}", b.shape()[1]),
        });
    }
    let an = l2_normalize(a)?;
    let bn = l2_normalize(b)?;
    let (m, n) = (an.shape()[0], bn.shape()[0]);
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        let ra = an.row(i);
        for j in 0..n {
            out.push(dot(ra, bn.row(j)).clamp(-1.0, 1.0));
        }
    }
    DenseTensor::new(vec![m, n], out)
}

/// Softmax with temperature `tau` over a logit slice.
///
/// Computed with max-subtraction; at the default `tau = 0.01` the logits are
/// amplified by a factor of 100 and would overflow a naive exponential.
pub fn tempered_softmax_slice(logits: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(Error::InvalidTemperature { tau });
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| ((x - max) / tau).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Softmax with temperature over a rank-1 tensor.
pub fn tempered_softmax(logits: &DenseTensor, tau: f64) -> Result<DenseTensor> {
    logits.expect_rank(1, "tempered_softmax")?;
    DenseTensor::from_vec(tempered_softmax_slice(logits.data(), tau)?)
}

/// Sum by pairwise halving; the reduction tree depends only on the slice
/// length, so chunked or parallel accumulation reproduces the same bits.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => pairwise_sum(&values[..n / 2]) + pairwise_sum(&values[n / 2..]),
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Elementwise sigmoid over a tensor of any supported rank; shape preserved.
pub fn sigmoid_map(mask_logits: &DenseTensor) -> DenseTensor {
    DenseTensor {
        shape: mask_logits.shape.clone(),
        data: mask_logits.data.iter().map(|&x| sigmoid(x)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(rows: &[Vec<f64>]) -> DenseTensor {
        DenseTensor::from_rows(rows).unwrap()
    }

    #[test]
    fn construction_rejects_bad_shapes() {
        assert!(DenseTensor::new(vec![], vec![]).is_err());
        assert!(DenseTensor::new(vec![2, 0], vec![]).is_err());
        assert!(DenseTensor::new(vec![2, 2, 2, 2], vec![0.0; 16]).is_err());
        assert!(DenseTensor::new(vec![3], vec![1.0, 2.0]).is_err());
        assert!(DenseTensor::new(vec![2], vec![1.0, f64::NAN]).is_err());
        assert!(DenseTensor::new(vec![2], vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn l2_normalize_hand_values() {
        let out = l2_normalize(&t2(&[vec![3.0, 4.0]])).unwrap();
        assert!((out.at2(0, 0) - 0.6).abs() < 1e-12);
        assert!((out.at2(0, 1) - 0.8).abs() < 1e-12);

        // unit vector fixed point
        let out = l2_normalize(&t2(&[vec![1.0, 0.0]])).unwrap();
        assert_eq!(out.row(0), &[1.0, 0.0]);

        // degenerate input
        let err = l2_normalize(&t2(&[vec![0.0, 0.0]])).unwrap_err();
        assert!(matches!(err, Error::ZeroVector { row: 0, .. }));
    }

    #[test]
    fn l2_normalize_idempotent_bitwise() {
        let x = t2(&[vec![0.3, -1.7, 2.2], vec![5.0, 1e-3, -9.4]]);
        let once = l2_normalize(&x).unwrap();
        let twice = l2_normalize(&once).unwrap();
        for (a, b) in once.data().iter().zip(twice.data()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn cosine_matrix_hand_values() {
        let a = t2(&[vec![1.0, 0.0]]);
        let b = t2(&[vec![0.0, 1.0]]);
        assert_eq!(cosine_similarity_matrix(&a, &b).unwrap().at2(0, 0), 0.0);

        let same = cosine_similarity_matrix(&a, &a).unwrap();
        assert!((same.at2(0, 0) - 1.0).abs() < 1e-12);

        let a = t2(&[vec![3.0, 4.0]]);
        let b = t2(&[vec![4.0, 3.0]]);
        let m = cosine_similarity_matrix(&a, &b).unwrap();
        // 24/25 by hand dot product
        assert!((m.at2(0, 0) - 0.96).abs() < 1e-12);
    }

    #[test]
    fn cosine_matrix_self_is_symmetric_with_unit_diagonal() {
        let a = t2(&[
            vec![0.2, -0.4, 1.0],
            vec![3.0, 2.0, -1.0],
            vec![-0.5, 0.5, 0.5],
        ]);
        let m = cosine_similarity_matrix(&a, &a).unwrap();
        for i in 0..3 {
            assert!((m.at2(i, i) - 1.0).abs() < 1e-9);
            for j in 0..3 {
                assert!((m.at2(i, j) - m.at2(j, i)).abs() < 1e-12);
                assert!(m.at2(i, j) <= 1.0 && m.at2(i, j) >= -1.0);
            }
        }
    }

    #[test]
    fn cosine_matrix_shape_mismatch() {
        let a = t2(&[vec![1.0, 0.0]]);
        let b = t2(&[vec![1.0, 0.0, 0.0]]);
        assert!(matches!(
            cosine_similarity_matrix(&a, &b),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn softmax_hand_values() {
        let p = tempered_softmax_slice(&[0.5, 0.5], 0.01).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);

        // e^2/(e^2+e), e/(e^2+e)
        let p = tempered_softmax_slice(&[0.02, 0.01], 0.01).unwrap();
        let e = std::f64::consts::E;
        assert!((p[0] - e * e / (e * e + e)).abs() < 1e-12);
        assert!((p[0] - 0.7311).abs() < 1e-4);
        assert!((p[1] - 0.2689).abs() < 1e-4);

        let p = tempered_softmax_slice(&[1.0], 0.01).unwrap();
        assert_eq!(p, vec![1.0]);

        assert!(matches!(
            tempered_softmax_slice(&[1.0], 0.0),
            Err(Error::InvalidTemperature { .. })
        ));
        assert!(matches!(
            tempered_softmax_slice(&[1.0], -0.5),
            Err(Error::InvalidTemperature { .. })
        ));
    }

    #[test]
    fn softmax_sums_to_one_and_survives_large_logits() {
        let p = tempered_softmax_slice(&[30.0, -12.0, 7.5, 0.0], 0.01).unwrap();
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn softmax_shift_invariance() {
        let logits = [0.31, -0.2, 0.11, 0.02];
        let shifted: Vec<f64> = logits.iter().map(|x| x + 5.3).collect();
        let a = tempered_softmax_slice(&logits, 0.01).unwrap();
        let b = tempered_softmax_slice(&shifted, 0.01).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_temperature_is_uniform_scaling() {
        let logits = [0.31, -0.2, 0.11, 0.02];
        let scaled: Vec<f64> = logits.iter().map(|x| x * 100.0).collect();
        let a = tempered_softmax_slice(&logits, 0.01).unwrap();
        let b = tempered_softmax_slice(&scaled, 1.0).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn pairwise_sum_matches_sequential_on_benign_data() {
        let xs: Vec<f64> = (0..37).map(|i| (i as f64) * 0.73 - 9.1).collect();
        let seq: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - seq).abs() < 1e-12);
        assert_eq!(pairwise_sum(&[]), 0.0);
        assert_eq!(pairwise_sum(&[4.5]), 4.5);
    }

    #[test]
    fn sigmoid_hand_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(20.0) - 0.9999999979).abs() < 1e-9);
        assert!((sigmoid(-20.0) - 2.06e-9).abs() < 1e-10);
        let m = sigmoid_map(&t2(&[vec![0.0, 20.0], vec![-20.0, 1.0]]));
        assert_eq!(m.shape(), &[2, 2]);
        assert!(m.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }
}
