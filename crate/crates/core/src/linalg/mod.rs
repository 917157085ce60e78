//! Dense symmetric and SPD linear algebra.
//!
//! Everything in the crate lives on the cone of symmetric positive definite
//! matrices. [`SpdMatrix`] carries an upper-triangular factor `R` with
//! `RᵀR = A`, so inverses and log-determinants never need a fresh
//! factorization once a matrix has been certified.

mod riccati;
mod schur;

pub use riccati::{hamiltonian_eigen_check, solve_are_schur, AreProblem, HamiltonianMatrix, UnimodalityCertificate};
pub use schur::{ordered_real_schur, OrderedSchur};

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Iteration budget handed to the symmetric eigensolver.
const EIGEN_MAX_ITERS: usize = 10_000;

/// Square symmetric matrix. The upper triangle is authoritative: on
/// construction it is mirrored into the lower triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    m: DMatrix<f64>,
}

impl SymmetricMatrix {
    /// Builds from the upper triangle of `m`; the lower triangle is ignored.
    pub fn from_upper(mut m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidInput("matrix dimension must be at least 1".into()));
        }
        m.fill_lower_triangle_with_upper_triangle();
        Ok(Self { m })
    }

    /// Averages `m` with its transpose.
    pub fn symmetrize(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        Self::from_upper((m + m.transpose()) * 0.5)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            m: DMatrix::identity(n, n),
        }
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self {
            m: DMatrix::from_diagonal(&DVector::from_column_slice(d)),
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            m: DMatrix::zeros(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { m: &self.m * c }
    }

    pub fn add(&self, other: &SymmetricMatrix) -> Self {
        Self { m: &self.m + &other.m }
    }

    pub fn add_diagonal(&self, c: f64) -> Self {
        let mut m = self.m.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += c;
        }
        Self { m }
    }

    pub fn trace(&self) -> f64 {
        self.m.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.norm()
    }

    /// `Tr(self · other)` for symmetric operands, without forming the product.
    pub fn trace_product(&self, other: &SymmetricMatrix) -> f64 {
        self.m.dot(&other.m)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }
}

/// Symmetric positive definite matrix with a cached upper Cholesky factor.
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    sym: SymmetricMatrix,
    log_det: f64,
    factor: OnceLock<DMatrix<f64>>,
}

impl SpdMatrix {
    /// Wraps a matrix whose factor `r` (upper triangular, positive diagonal)
    /// is already known.
    pub fn from_upper_factor(r: DMatrix<f64>) -> Self {
        let sym = SymmetricMatrix::from_upper(r.tr_mul(&r)).expect("square factor");
        let log_det = 2.0 * r.diagonal().iter().map(|d| d.abs().ln()).sum::<f64>();
        let factor = OnceLock::new();
        let _ = factor.set(r);
        Self { sym, log_det, factor }
    }

    /// Wraps a matrix known to be SPD with a known log-determinant; the
    /// factor is computed on first use.
    pub(crate) fn from_trusted(sym: SymmetricMatrix, log_det: f64) -> Self {
        Self {
            sym,
            log_det,
            factor: OnceLock::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_upper_factor(DMatrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.sym.dim()
    }

    pub fn as_symmetric(&self) -> &SymmetricMatrix {
        &self.sym
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        self.sym.as_matrix()
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Upper-triangular `R` with `RᵀR = self`.
    pub fn factor(&self) -> Result<&DMatrix<f64>> {
        if let Some(r) = self.factor.get() {
            return Ok(r);
        }
        let r = upper_cholesky(self.sym.as_matrix())?;
        let _ = self.factor.set(r);
        Ok(self.factor.get().expect("factor just set"))
    }

    /// Inverse through the triangular factor: `A⁻¹ = R⁻¹R⁻ᵀ`.
    pub fn inverse(&self) -> Result<SpdMatrix> {
        let r_inv = upper_triangular_inverse(self.factor()?);
        let inv = &r_inv * r_inv.transpose();
        Ok(SpdMatrix::from_trusted(
            SymmetricMatrix::from_upper(inv)?,
            -self.log_det,
        ))
    }

    /// Solves `A x = b` for every column of `b`.
    pub fn solve(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let r = self.factor()?;
        let y = r
            .transpose()
            .solve_lower_triangular(b)
            .ok_or(Error::ConvergenceFailure("singular triangular factor"))?;
        r.solve_upper_triangular(&y)
            .ok_or(Error::ConvergenceFailure("singular triangular factor"))
    }

    /// `c · A` for `c > 0`, reusing the factor.
    pub fn scaled(&self, c: f64) -> Result<SpdMatrix> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "SPD scaling factor must be positive, got {c}"
            )));
        }
        Ok(SpdMatrix::from_upper_factor(self.factor()? * c.sqrt()))
    }
}

impl PartialEq for SpdMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.sym == other.sym
    }
}

fn upper_cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut r = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= r[(k, j)] * r[(k, j)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { index: j, pivot: d });
        }
        let rjj = d.sqrt();
        r[(j, j)] = rjj;
        for i in (j + 1)..n {
            let mut s = a[(j, i)];
            for k in 0..j {
                s -= r[(k, j)] * r[(k, i)];
            }
            r[(j, i)] = s / rjj;
        }
    }
    Ok(r)
}

/// Certifies `m` as SPD by computing `R` with `RᵀR = m`.
pub fn cholesky(m: &SymmetricMatrix) -> Result<SpdMatrix> {
    let r = upper_cholesky(m.as_matrix())?;
    let log_det = 2.0 * r.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let factor = OnceLock::new();
    let _ = factor.set(r);
    Ok(SpdMatrix {
        sym: m.clone(),
        log_det,
        factor,
    })
}

/// Inverse of an upper-triangular matrix with nonzero diagonal.
pub fn upper_triangular_inverse(r: &DMatrix<f64>) -> DMatrix<f64> {
    let n = r.nrows();
    let mut inv = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        inv[(j, j)] = 1.0 / r[(j, j)];
        for i in (0..j).rev() {
            let mut s = 0.0;
            for k in (i + 1)..=j {
                s += r[(i, k)] * inv[(k, j)];
            }
            inv[(i, j)] = -s / r[(i, i)];
        }
    }
    inv
}

/// Eigendecomposition of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    /// `V · diag(f(λ)) · Vᵀ`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut scaled = self.vectors.clone();
        for (j, &lam) in self.values.iter().enumerate() {
            let fl = f(lam);
            scaled.column_mut(j).scale_mut(fl);
        }
        scaled * self.vectors.transpose()
    }
}

pub fn sym_eigen(m: &SymmetricMatrix) -> Result<SymEigen> {
    let eig = SymmetricEigen::try_new(m.as_matrix().clone(), f64::EPSILON, EIGEN_MAX_ITERS)
        .ok_or(Error::ConvergenceFailure("symmetric eigensolver"))?;
    let n = m.dim();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SymEigen { values, vectors })
}

/// Symmetric square root `S` with `S·S = m`.
pub fn spd_sqrt(m: &SpdMatrix) -> Result<SpdMatrix> {
    let eig = sym_eigen(m.as_symmetric())?;
    let s = SymmetricMatrix::symmetrize(&eig.map_spectrum(|l| l.max(0.0).sqrt()))?;
    cholesky(&s)
}

/// Symmetric inverse square root `m^{-1/2}`.
pub fn spd_inv_sqrt(m: &SpdMatrix) -> Result<SpdMatrix> {
    let eig = sym_eigen(m.as_symmetric())?;
    let s = SymmetricMatrix::symmetrize(&eig.map_spectrum(|l| 1.0 / l.sqrt()))?;
    cholesky(&s)
}

/// Relative tolerance under which small negative eigenvalues count as zero.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Validates positive semi-definiteness up to `PSD_TOLERANCE · ‖m‖₂`,
/// clipping tolerated negative eigenvalues to zero.
pub fn project_psd(m: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    let eig = sym_eigen(m)?;
    let spectral = eig.values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let min = eig.values[0];
    if min >= 0.0 {
        return Ok(m.clone());
    }
    if min < -PSD_TOLERANCE * spectral {
        return Err(Error::NotPositiveSemidefinite { min_eigenvalue: min });
    }
    SymmetricMatrix::symmetrize(&eig.map_spectrum(|l| l.max(0.0)))
}

/// Reciprocal 1-norm condition number of a square matrix (0 when singular).
pub(crate) fn rcond_1(m: &DMatrix<f64>) -> f64 {
    let norm1 = |a: &DMatrix<f64>| {
        a.column_iter()
            .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0_f64, f64::max)
    };
    match m.clone().lu().try_inverse() {
        Some(inv) => {
            let denom = norm1(m) * norm1(&inv);
            if denom.is_finite() && denom > 0.0 {
                1.0 / denom
            } else {
                0.0
            }
        }
        None => 0.0,
    }
}
