//! Dense linear algebra helpers, reproducible random streams and Gaussian sampling.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub const SYMMETRY_TOL: f64 = 1e-12;
pub const SPD_RATIO_TOL: f64 = 1e-12;
pub const RANK_TOL: f64 = 1e-10;

/// Symmetric positive definite matrix with a cached eigendecomposition.
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    mat: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    sqrt: DMatrix<f64>,
    inv_sqrt: DMatrix<f64>,
    inverse: DMatrix<f64>,
}

impl SpdMatrix {
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() || mat.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "covariance must be square and non-empty, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let scale = mat.amax().max(f64::MIN_POSITIVE);
        let asym = (&mat - mat.transpose()).amax();
        if asym > SYMMETRY_TOL * scale.max(1.0) {
            return Err(Error::NotSymmetric(asym));
        }
        let sym = (&mat + mat.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym.clone());
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if !(max > 0.0) || min <= SPD_RATIO_TOL * max {
            return Err(Error::NotPositiveDefinite(if max > 0.0 { min / max } else { min }));
        }
        let v = &eig.eigenvectors;
        let build = |f: &dyn Fn(f64) -> f64| {
            let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f));
            let m = v * d * v.transpose();
            (&m + m.transpose()) * 0.5
        };
        let sqrt = build(&|l| l.sqrt());
        let inv_sqrt = build(&|l| 1.0 / l.sqrt());
        let inverse = build(&|l| 1.0 / l);
        Ok(Self {
            mat: sym,
            eigenvalues: eig.eigenvalues.clone(),
            eigenvectors: eig.eigenvectors.clone(),
            sqrt,
            inv_sqrt,
            inverse,
        })
    }

    pub fn identity(p: usize) -> Self {
        Self::new(DMatrix::identity(p, p)).expect("identity is SPD")
    }

    /// Unit diagonal with a common off-diagonal correlation.
    pub fn equicorrelated(p: usize, rho: f64) -> Result<Self> {
        let mut m = DMatrix::from_element(p, p, rho);
        m.fill_diagonal(1.0);
        Self::new(m)
    }

    /// Block-diagonal matrix of equicorrelated blocks.
    pub fn block_equicorrelated(blocks: usize, size: usize, rho: f64) -> Result<Self> {
        let p = blocks * size;
        let mut m = DMatrix::zeros(p, p);
        for b in 0..blocks {
            for i in 0..size {
                for j in 0..size {
                    m[(b * size + i, b * size + j)] = if i == j { 1.0 } else { rho };
                }
            }
        }
        Self::new(m)
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }
    pub fn sqrt(&self) -> &DMatrix<f64> {
        &self.sqrt
    }
    pub fn inv_sqrt(&self) -> &DMatrix<f64> {
        &self.inv_sqrt
    }
    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }
    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues.max()
    }
    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues.min()
    }
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        &self.inverse * b
    }
}

/// Column basis of full column rank. Zero columns are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    mat: DMatrix<f64>,
}

impl Basis {
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        let k = mat.ncols();
        if k > mat.nrows() {
            return Err(Error::RankDeficient(format!(
                "{} columns in dimension {}",
                k,
                mat.nrows()
            )));
        }
        if k > 0 {
            let r = rank(&mat, RANK_TOL);
            if r < k {
                return Err(Error::RankDeficient(format!("basis has rank {} < {} columns", r, k)));
            }
        }
        Ok(Self { mat })
    }

    pub fn empty(p: usize) -> Self {
        Self { mat: DMatrix::zeros(p, 0) }
    }

    pub fn identity(p: usize) -> Self {
        Self { mat: DMatrix::identity(p, p) }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }
    pub fn dim(&self) -> usize {
        self.mat.ncols()
    }
    pub fn ambient(&self) -> usize {
        self.mat.nrows()
    }

    /// Euclidean orthogonal projector onto the span.
    pub fn projector(&self) -> DMatrix<f64> {
        let p = self.ambient();
        if self.dim() == 0 {
            return DMatrix::zeros(p, p);
        }
        let u = &self.mat;
        let g = u.transpose() * u;
        let ginv = g.try_inverse().expect("full column rank");
        u * ginv * u.transpose()
    }
}

/// Numerical rank with singular values relative to the largest.
pub fn rank(m: &DMatrix<f64>, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    if max <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * max).count()
}

/// Orthonormal basis of the null space of `m` (columns), singular-value tolerance relative to max(1, ||m||).
pub fn null_space(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let p = m.ncols();
    if m.nrows() == 0 {
        return DMatrix::identity(p, p);
    }
    let mut sq = DMatrix::zeros(m.nrows().max(p), p);
    sq.view_mut((0, 0), (m.nrows(), p)).copy_from(m);
    let svd = sq.svd(false, true);
    let vt = svd.v_t.expect("requested v_t");
    let max = svd.singular_values.max().max(1.0);
    let cols: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= tol * max)
        .map(|(i, _)| vt.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(p, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Counter-based random stream: one seed, many independent substreams.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
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
        StandardNormal.sample(&mut self.rng)
    }
    pub fn normal_vector(&mut self, k: usize) -> DVector<f64> {
        DVector::from_fn(k, |_, _| self.standard_normal())
    }
    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }
    pub fn below(&mut self, n: usize) -> usize {
        ((self.uniform() * n as f64) as usize).min(n.saturating_sub(1))
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Symmetric square root of an SPD matrix.
pub fn matrix_sqrt(c: &SpdMatrix) -> DMatrix<f64> {
    c.sqrt().clone()
}

/// Projection `P = C^{1/2} U (U'CU)^{-1} U' C^{1/2}` together with the roots of C.
#[derive(Debug, Clone)]
pub struct WeightedProjection {
    pub p: DMatrix<f64>,
    pub c_half: DMatrix<f64>,
    pub c_inv_half: DMatrix<f64>,
}

impl WeightedProjection {
    /// `C^{1/2} P C^{-1/2} v0`.
    pub fn mu_map(&self, v0: &DVector<f64>) -> DVector<f64> {
        &self.c_half * (&self.p * (&self.c_inv_half * v0))
    }

    /// `C^{1/2}(I - P)`, the noise factor of the closed-form statistic.
    pub fn residual_factor(&self) -> DMatrix<f64> {
        let n = self.p.nrows();
        &self.c_half * (DMatrix::identity(n, n) - &self.p)
    }

    /// `C^{1/2}(I - P)C^{-1/2}`.
    pub fn residual_map(&self) -> DMatrix<f64> {
        self.residual_factor() * &self.c_inv_half
    }
}

pub fn weighted_projection(c: &SpdMatrix, u: &Basis) -> Result<WeightedProjection> {
    let p = c.dim();
    if u.ambient() != p {
        return Err(Error::Dimension(format!("basis in R^{} but C is {}x{}", u.ambient(), p, p)));
    }
    let c_half = c.sqrt().clone();
    let c_inv_half = c.inv_sqrt().clone();
    let proj = if u.dim() == 0 {
        DMatrix::zeros(p, p)
    } else {
        let a = &c_half * u.matrix();
        if rank(&a, RANK_TOL) < u.dim() {
            return Err(Error::RankDeficient("U'CU is singular".into()));
        }
        let q = a.qr().q();
        let m = &q * q.transpose();
        (&m + m.transpose()) * 0.5
    };
    Ok(WeightedProjection { p: proj, c_half, c_inv_half })
}

/// Covariance given either as an SPD matrix or an explicit factor B with cov = BB'.
#[derive(Debug, Clone, Copy)]
pub enum CovFactor<'a> {
    Spd(&'a SpdMatrix),
    Factor(&'a DMatrix<f64>),
}

pub fn gaussian_sample(mean: &DVector<f64>, cov: CovFactor<'_>, rng: &mut RngStream) -> Result<DVector<f64>> {
    let factor = match cov {
        CovFactor::Spd(c) => c.sqrt(),
        CovFactor::Factor(b) => b,
    };
    if factor.nrows() != mean.len() {
        return Err(Error::Dimension(format!(
            "factor has {} rows, mean has length {}",
            factor.nrows(),
            mean.len()
        )));
    }
    let z = rng.normal_vector(factor.ncols());
    Ok(mean + factor * z)
}

/// Largest eigenvalue of a symmetric matrix.
pub fn symmetric_lambda_max(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new((m + m.transpose()) * 0.5).eigenvalues.max()
}

pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.amax()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sqrt_examples() {
        let i = SpdMatrix::identity(3);
        assert_relative_eq!(matrix_sqrt(&i), DMatrix::identity(3, 3), epsilon = 1e-14);
        let d = SpdMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]))).unwrap();
        let s = matrix_sqrt(&d);
        assert_relative_eq!(s, DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0])), epsilon = 1e-14);
    }

    #[test]
    fn rejects_bad_matrices() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(SpdMatrix::new(asym), Err(Error::NotSymmetric(_))));
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(SpdMatrix::new(indef), Err(Error::NotPositiveDefinite(_))));
        let rect = DMatrix::zeros(2, 3);
        assert!(matches!(SpdMatrix::new(rect), Err(Error::Dimension(_))));
    }

    #[test]
    fn mu_map_example() {
        let c = SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0])).unwrap();
        let u = Basis::new(DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
        let wp = weighted_projection(&c, &u).unwrap();
        let mu = wp.mu_map(&DVector::from_vec(vec![3.0, 2.0]));
        assert_relative_eq!(mu, DVector::from_vec(vec![3.0, 1.5]), epsilon = 1e-12);
    }

    #[test]
    fn rank_deficient_basis_rejected() {
        let u = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 0.0, 0.0]);
        assert!(matches!(Basis::new(u), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 3);
        let mut c = RngStream::new(7, 4);
        let xa: Vec<f64> = (0..5).map(|_| a.standard_normal()).collect();
        let xb: Vec<f64> = (0..5).map(|_| b.standard_normal()).collect();
        let xc: Vec<f64> = (0..5).map(|_| c.standard_normal()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn null_space_of_difference_row() {
        let a = DMatrix::from_row_slice(1, 3, &[1.0, -1.0, 0.0]);
        let n = null_space(&a, 1e-10);
        assert_eq!(n.ncols(), 2);
        assert!((&a * &n).amax() < 1e-12);
    }
}
