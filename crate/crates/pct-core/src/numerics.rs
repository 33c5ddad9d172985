//! Deterministic linear algebra and statistics primitives.
//!
//! All functions are pure: no global state, 64-bit arithmetic throughout,
//! and any sampling takes an explicit seed.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fmath;
use crate::rng::{stream, Rng};

/// 1/sqrt(2*pi), the peak of the standard normal density.
pub const INV_SQRT_TAU: f64 = 0.398_942_280_401_432_7;

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds a matrix from row slices; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput("matrix rows"));
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    context: "matrix row",
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix { rows: rows.len(), cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn scale(&self, factor: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * factor).collect() }
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                context: "matrix add",
                expected: self.rows * self.cols,
                got: other.rows * other.cols,
            });
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Matrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        fmath::sqrt(self.data.iter().map(|v| v * v).sum())
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                if fmath::abs(self.get(i, j) - self.get(j, i)) > tol {
                    return false;
                }
            }
        }
        true
    }

    /// Plain `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                context: "matmul (inner)",
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a = self.row(i);
            for k in 0..other.cols {
                let mut acc = 0.0;
                for (j, &aj) in a.iter().enumerate() {
                    acc += aj * other.get(j, k);
                }
                out.set(i, k, acc);
            }
        }
        Ok(out)
    }

    /// `self * other^T`; the natural shape for batched affine layers.
    pub fn matmul_transpose(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                context: "matmul (inner)",
                expected: self.cols,
                got: other.cols,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                let b = other.row(j);
                let mut acc = 0.0;
                for k in 0..self.cols {
                    acc += a[k] * b[k];
                }
                out.set(i, j, acc);
            }
        }
        Ok(out)
    }
}

/// Second-order summary of a vector sample: mean and covariance.
#[derive(Debug, Clone)]
pub struct GaussianEstimate {
    pub mean: Vec<f64>,
    pub cov: Matrix,
}

/// Fixed-width binning of scalar values.
///
/// Value `v` lands in bin `floor((v - origin) / bin_width)`. `counts[i]`
/// holds the count for bin `min_bin + i`, so values below the origin are
/// representable without losing the invariant `sum(counts) == total`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_width: f64,
    pub origin: f64,
    pub min_bin: i64,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl Histogram {
    /// Half-open value range `[lo, hi)` of `counts[i]`.
    pub fn bin_range(&self, i: usize) -> (f64, f64) {
        let lo = self.origin + (self.min_bin + i as i64) as f64 * self.bin_width;
        (lo, lo + self.bin_width)
    }

    /// Fraction of the total mass in `counts[i]`; zero for an empty histogram.
    pub fn frequency(&self, i: usize) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.counts[i] as f64 / self.total as f64
        }
    }
}

/// A density sampled on a grid of query points.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityCurve {
    pub query_points: Vec<f64>,
    pub densities: Vec<f64>,
}

/// Numerically stable softmax (max-shifted).
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::EmptyInput("softmax logits"));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| fmath::exp(x - max)).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.iter().map(|e| e / sum).collect())
}

/// log(sum(exp(x_i))), max-shifted.
pub fn log_sum_exp(logits: &[f64]) -> Result<f64> {
    if logits.is_empty() {
        return Err(Error::EmptyInput("log_sum_exp logits"));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&x| fmath::exp(x - max)).sum();
    Ok(max + fmath::ln(sum))
}

/// Euclidean norm.
pub fn l2_norm(v: &[f64]) -> f64 {
    fmath::sqrt(v.iter().map(|x| x * x).sum())
}

/// Elementwise `a - b`; lengths must match.
pub fn vec_sub(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { context: "vec_sub", expected: a.len(), got: b.len() });
    }
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

/// Sample mean and unbiased covariance (divides by `n - 1`).
///
/// The returned covariance is exactly symmetric by construction.
pub fn estimate_mean_cov(samples: &[Vec<f64>]) -> Result<GaussianEstimate> {
    if samples.len() < 2 {
        return Err(Error::InsufficientSamples { required: 2, got: samples.len() });
    }
    let dim = samples[0].len();
    for s in samples {
        if s.len() != dim {
            return Err(Error::DimensionMismatch {
                context: "estimate_mean_cov sample",
                expected: dim,
                got: s.len(),
            });
        }
    }
    let n = samples.len() as f64;
    let mut mean = vec![0.0; dim];
    for s in samples {
        for (m, x) in mean.iter_mut().zip(s) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut cov = Matrix::zeros(dim, dim);
    for s in samples {
        for i in 0..dim {
            let di = s[i] - mean[i];
            for j in i..dim {
                let dj = s[j] - mean[j];
                let v = cov.get(i, j) + di * dj;
                cov.set(i, j, v);
            }
        }
    }
    let denom = n - 1.0;
    for i in 0..dim {
        for j in i..dim {
            let v = cov.get(i, j) / denom;
            cov.set(i, j, v);
            cov.set(j, i, v);
        }
    }
    Ok(GaussianEstimate { mean, cov })
}

/// Lower-triangular Cholesky factor of `cov + jitter*I`.
///
/// Semidefinite inputs are handled by zeroing exhausted pivot columns. If a
/// pivot goes genuinely negative the jitter is escalated by x10 up to three
/// times (starting from `1e-10 * trace / d` when the caller passed zero)
/// before giving up with [`Error::NotPositiveSemiDefinite`].
pub fn cholesky_factor(cov: &Matrix, jitter: f64) -> Result<Matrix> {
    if cov.rows() != cov.cols() {
        return Err(Error::DimensionMismatch {
            context: "cholesky (square)",
            expected: cov.rows(),
            got: cov.cols(),
        });
    }
    if !cov.is_symmetric(1e-10 * (1.0 + cov.frobenius_norm())) {
        return Err(Error::InvalidParameter { name: "cov", reason: "matrix is not symmetric" });
    }
    let d = cov.rows();
    let base = {
        let t = cov.trace();
        if t > 0.0 {
            1e-10 * t / d as f64
        } else {
            1e-10
        }
    };
    let mut attempt_jitter = jitter;
    for escalation in 0..4 {
        if let Some(l) = try_cholesky(cov, attempt_jitter) {
            return Ok(l);
        }
        if escalation == 3 {
            break;
        }
        attempt_jitter = if attempt_jitter > 0.0 { attempt_jitter * 10.0 } else { base };
    }
    Err(Error::NotPositiveSemiDefinite)
}

fn try_cholesky(cov: &Matrix, jitter: f64) -> Option<Matrix> {
    let n = cov.rows();
    let scale = (0..n).map(|i| fmath::abs(cov.get(i, i)) + jitter).fold(1.0, f64::max);
    let tol = 1e-12 * scale;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut diag = cov.get(j, j) + jitter;
        for k in 0..j {
            diag -= l.get(j, k) * l.get(j, k);
        }
        if diag > tol {
            let pivot = fmath::sqrt(diag);
            l.set(j, j, pivot);
            for i in (j + 1)..n {
                let mut v = cov.get(i, j);
                for k in 0..j {
                    v -= l.get(i, k) * l.get(j, k);
                }
                l.set(i, j, v / pivot);
            }
        } else if diag >= -tol {
            // Exhausted direction: legal for a PSD matrix only if the rest of
            // the column is already explained by previous factors.
            for i in (j + 1)..n {
                let mut v = cov.get(i, j);
                for k in 0..j {
                    v -= l.get(i, k) * l.get(j, k);
                }
                if fmath::abs(v) > 1e-7 * scale {
                    return None;
                }
            }
        } else {
            return None;
        }
    }
    Some(l)
}

/// Draws `n` vectors from `N(mean, cov)`, deterministic in `seed`.
pub fn sample_mvn(est: &GaussianEstimate, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::InvalidParameter { name: "n", reason: "must be >= 1" });
    }
    if est.mean.len() != est.cov.rows() {
        return Err(Error::DimensionMismatch {
            context: "sample_mvn mean/cov",
            expected: est.cov.rows(),
            got: est.mean.len(),
        });
    }
    let l = cholesky_factor(&est.cov, 0.0)?;
    let d = est.mean.len();
    let mut rng = Rng::new(seed, stream::MVN);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let z: Vec<f64> = (0..d).map(|_| rng.next_gaussian()).collect();
        let mut x = est.mean.clone();
        for (i, xi) in x.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, zk) in z.iter().take(i + 1).enumerate() {
                acc += l.get(i, k) * zk;
            }
            *xi += acc;
        }
        out.push(x);
    }
    Ok(out)
}

/// Gaussian-kernel density estimate evaluated at `query_points`.
///
/// `density(q) = (1 / (n h)) * sum_i K((q - x_i) / h)` with the standard
/// normal kernel K.
pub fn kde_density(samples: &[f64], bandwidth: f64, query_points: &[f64]) -> Result<DensityCurve> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("kde samples"));
    }
    if bandwidth <= 0.0 || bandwidth.is_nan() {
        return Err(Error::InvalidParameter { name: "bandwidth", reason: "must be > 0" });
    }
    let norm = INV_SQRT_TAU / (samples.len() as f64 * bandwidth);
    let densities = query_points
        .iter()
        .map(|&q| {
            let mut acc = 0.0;
            for &x in samples {
                let u = (q - x) / bandwidth;
                acc += fmath::exp(-0.5 * u * u);
            }
            acc * norm
        })
        .collect();
    Ok(DensityCurve { query_points: query_points.to_vec(), densities })
}

/// Silverman's rule-of-thumb bandwidth, `1.06 * sigma_hat * n^(-1/5)`.
///
/// Floored at 1e-9 so degenerate samples (all values equal) still produce a
/// valid, spike-like density.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    if samples.len() < 2 {
        return 1e-9;
    }
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    let sigma = fmath::sqrt(var);
    let h = 1.06 * sigma * fmath::exp(-0.2 * fmath::ln(n));
    h.max(1e-9)
}

/// Bins `values` with the given width and origin.
pub fn histogram(values: &[f64], bin_width: f64, origin: f64) -> Result<Histogram> {
    if bin_width <= 0.0 || bin_width.is_nan() {
        return Err(Error::InvalidParameter { name: "bin_width", reason: "must be > 0" });
    }
    if values.is_empty() {
        return Ok(Histogram { bin_width, origin, min_bin: 0, counts: Vec::new(), total: 0 });
    }
    let bins: Vec<i64> =
        values.iter().map(|&v| fmath::floor((v - origin) / bin_width) as i64).collect();
    let min_bin = *bins.iter().min().unwrap();
    let max_bin = *bins.iter().max().unwrap();
    let mut counts = vec![0u64; (max_bin - min_bin) as usize + 1];
    for b in &bins {
        counts[(b - min_bin) as usize] += 1;
    }
    Ok(Histogram { bin_width, origin, min_bin, counts, total: values.len() as u64 })
}
