//! Dense linear algebra, seeded randomness and a small direct solver.
//!
//! Everything here is sized for desk-scale problems: vectors of a few
//! thousand entries and square systems of at most a few hundred rows.

use std::ops::{Deref, DerefMut};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Owned vector of `f64` entries.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn from_vec(entries: Vec<f64>) -> Self {
        Self(entries)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        dot(&self.0, other)
    }

    pub fn norm2(&self) -> f64 {
        self.dot(&self.0).sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        norm_inf(&self.0)
    }

    /// `self += alpha * x`
    pub fn axpy(&mut self, alpha: f64, x: &[f64]) {
        axpy(alpha, x, &mut self.0);
    }

    pub fn scale(&mut self, alpha: f64) {
        self.0.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn sub(&self, other: &[f64]) -> DenseVector {
        DenseVector(self.0.iter().zip(other).map(|(a, b)| a - b).collect())
    }

    /// `‖self − other‖₂ / ‖other‖₂`, falling back to the absolute distance
    /// when `other` is zero.
    pub fn relative_error(&self, reference: &[f64]) -> f64 {
        let diff = self.sub(reference).norm2();
        let scale = dot(reference, reference).sqrt();
        if scale > 0.0 {
            diff / scale
        } else {
            diff
        }
    }
}

impl Deref for DenseVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for DenseVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for DenseVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl FromIterator<f64> for DenseVector {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::DimensionMismatch {
                context: "matrix data",
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    context: "matrix row",
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn max_abs(&self) -> f64 {
        norm_inf(&self.data)
    }

    /// `A x`
    pub fn matvec(&self, x: &[f64]) -> Result<DenseVector> {
        check_len("matvec", self.cols, x.len())?;
        Ok((0..self.rows).map(|r| dot(self.row(r), x)).collect())
    }

    /// `Aᵀ x`
    pub fn matvec_t(&self, x: &[f64]) -> Result<DenseVector> {
        check_len("transposed matvec", self.rows, x.len())?;
        let mut out = DenseVector::zeros(self.cols);
        for (r, &xr) in x.iter().enumerate() {
            axpy(xr, self.row(r), &mut out);
        }
        Ok(out)
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        check_len("matmul", self.cols, other.rows)?;
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let out_row = &mut out.data[r * other.cols..(r + 1) * other.cols];
            for (k, &a) in self.row(r).iter().enumerate() {
                if a != 0.0 {
                    axpy(a, other.row(k), out_row);
                }
            }
        }
        Ok(out)
    }

    /// `A D Aᵀ` for a diagonal `D` given by its entries (length `cols`).
    pub fn weighted_gram(&self, diag: &[f64]) -> Result<DenseMatrix> {
        check_len("weighted gram", self.cols, diag.len())?;
        let n = self.rows;
        let mut g = DenseMatrix::zeros(n, n);
        for i in 0..n {
            let ri = self.row(i);
            for j in i..n {
                let rj = self.row(j);
                let v: f64 = ri
                    .iter()
                    .zip(rj)
                    .zip(diag)
                    .map(|((a, b), d)| a * b * d)
                    .sum();
                g.data[i * n + j] = v;
                g.data[j * n + i] = v;
            }
        }
        Ok(g)
    }
}

fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting, followed
/// by two rounds of iterative refinement.
pub fn solve_linear_system(a: &DenseMatrix, b: &[f64]) -> Result<DenseVector> {
    let n = a.rows();
    check_len("square system", n, a.cols())?;
    check_len("right-hand side", n, b.len())?;
    if n == 0 {
        return Ok(DenseVector::zeros(0));
    }
    let lu = LuFactors::factor(a)?;
    let mut x = lu.solve(b);
    for _ in 0..2 {
        let ax = a.matvec(&x)?;
        let resid: Vec<f64> = b.iter().zip(ax.iter()).map(|(bi, ai)| bi - ai).collect();
        if norm_inf(&resid) == 0.0 {
            break;
        }
        let dx = lu.solve(&resid);
        x.axpy(1.0, &dx);
    }
    Ok(x)
}

struct LuFactors {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl LuFactors {
    fn factor(a: &DenseMatrix) -> Result<Self> {
        let n = a.rows();
        let tolerance = 1e-12 * a.max_abs();
        let mut lu = a.as_slice().to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let (pivot_row, pivot) =
                (col..n)
                    .map(|r| (r, lu[r * n + col].abs()))
                    .fold(
                        (col, -1.0),
                        |best, cur| if cur.1 > best.1 { cur } else { best },
                    );
            if pivot.is_nan() || pivot < tolerance || pivot == 0.0 {
                return Err(Error::SingularMatrix {
                    column: col,
                    pivot,
                    tolerance,
                });
            }
            if pivot_row != col {
                for c in 0..n {
                    lu.swap(col * n + c, pivot_row * n + c);
                }
                perm.swap(col, pivot_row);
            }
            let diag = lu[col * n + col];
            for r in col + 1..n {
                let factor = lu[r * n + col] / diag;
                lu[r * n + col] = factor;
                if factor != 0.0 {
                    for c in col + 1..n {
                        lu[r * n + c] -= factor * lu[col * n + c];
                    }
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    fn solve(&self, b: &[f64]) -> DenseVector {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let s: f64 = (0..r).map(|c| self.lu[r * n + c] * x[c]).sum();
            x[r] -= s;
        }
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|c| self.lu[r * n + c] * x[c]).sum();
            x[r] = (x[r] - s) / self.lu[r * n + r];
        }
        DenseVector(x)
    }
}

/// Deterministic random stream: ChaCha8 keyed by a 64-bit seed and a
/// 64-bit stream id.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    /// Independent stream for sub-task `stream` of an experiment seeded with
    /// `seed`.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        mean + std * self.standard_normal()
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform integer in `0..bound`.
    pub fn below(&mut self, bound: usize) -> usize {
        self.rng.random_range(0..bound)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        use rand::seq::SliceRandom;
        items.shuffle(&mut self.rng);
    }

    /// `count` distinct indices from `0..n`, in selection order.
    pub fn sample_indices(&mut self, n: usize, count: usize) -> Vec<usize> {
        rand::seq::index::sample(&mut self.rng, n, count).into_vec()
    }

    pub fn gaussian_vector(&mut self, len: usize, std: f64) -> DenseVector {
        (0..len).map(|_| std * self.standard_normal()).collect()
    }
}

/// Matrix with i.i.d. standard-normal entries.
pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut RngStream) -> Result<DenseMatrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument(format!(
            "gaussian matrix needs positive shape, got {rows}x{cols}"
        )));
    }
    let data = (0..rows * cols).map(|_| rng.standard_normal()).collect();
    DenseMatrix::from_vec(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual(a: &DenseMatrix, x: &[f64], b: &[f64]) -> f64 {
        let ax = a.matvec(x).unwrap();
        ax.iter()
            .zip(b)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn solve_identity() {
        let x = solve_linear_system(&DenseMatrix::identity(2), &[3.0, 4.0]).unwrap();
        assert_eq!(x.as_slice(), &[3.0, 4.0]);
    }

    #[test]
    fn solve_diagonal() {
        let a = DenseMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 4.0]]).unwrap();
        let x = solve_linear_system(&a, &[2.0, 8.0]).unwrap();
        assert_eq!(x.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn solve_hand_eliminated() {
        // x + y = 3, x + 2y = 5  =>  y = 2, x = 1
        let a = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let b = [3.0, 5.0];
        let x = solve_linear_system(&a, &b).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 2.0).abs() < 1e-14);
        assert!(residual(&a, &x, &b) <= 1e-10 * (1.0 + 5.0));
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(
            solve_linear_system(&a, &[1.0, 2.0]),
            Err(Error::SingularMatrix { .. })
        ));
    }

    #[test]
    fn non_square_is_rejected() {
        let a = DenseMatrix::zeros(2, 3);
        assert!(matches!(
            solve_linear_system(&a, &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn random_systems_up_to_200() {
        let mut rng = RngStream::new(11);
        for &n in &[1usize, 5, 50, 200] {
            let mut a = gaussian_matrix(n, n, &mut rng).unwrap();
            // diagonal shift keeps the draw well conditioned
            for i in 0..n {
                a.set(i, i, a.get(i, i) + 2.0 * (n as f64).sqrt());
            }
            let b = rng.gaussian_vector(n, 1.0);
            let x = solve_linear_system(&a, &b).unwrap();
            let bn = b.norm_inf();
            assert!(residual(&a, &x, &b) <= 1e-10 * (1.0 + bn));
            let ax = a.matvec(&x).unwrap();
            assert!(ax.relative_error(&b) < 1e-9, "n = {n}");
        }
    }

    #[test]
    fn gaussian_matrix_is_seeded() {
        let a = gaussian_matrix(2, 3, &mut RngStream::new(7)).unwrap();
        let b = gaussian_matrix(2, 3, &mut RngStream::new(7)).unwrap();
        assert_eq!(a, b);
        let c = gaussian_matrix(2, 3, &mut RngStream::new(8)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn gaussian_matrix_mean_is_near_zero() {
        let m = gaussian_matrix(1, 10_000, &mut RngStream::new(3)).unwrap();
        let mean = m.as_slice().iter().sum::<f64>() / 10_000.0;
        assert!(mean.abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn gaussian_matrix_rejects_empty_shape() {
        assert!(gaussian_matrix(0, 3, &mut RngStream::new(1)).is_err());
        assert!(gaussian_matrix(3, 0, &mut RngStream::new(1)).is_err());
    }

    #[test]
    fn streams_are_independent() {
        let mut a = RngStream::with_stream(5, 0);
        let mut b = RngStream::with_stream(5, 1);
        let va: Vec<f64> = (0..4).map(|_| a.uniform()).collect();
        let vb: Vec<f64> = (0..4).map(|_| b.uniform()).collect();
        assert_ne!(va, vb);
    }

    #[test]
    fn weighted_gram_matches_matmul() {
        let mut rng = RngStream::new(2);
        let x = gaussian_matrix(3, 5, &mut rng).unwrap();
        let d = [1.0, 2.0, 0.5, 3.0, 1.5];
        let mut xd = x.clone();
        for r in 0..3 {
            for (c, dc) in d.iter().enumerate() {
                xd.set(r, c, x.get(r, c) * dc);
            }
        }
        let expected = xd.matmul(&x.transpose()).unwrap();
        let got = x.weighted_gram(&d).unwrap();
        for (a, b) in got.as_slice().iter().zip(expected.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
