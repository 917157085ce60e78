//! Algebraic Riccati equations `AᵀX + XA + XRX + Q = 0` solved through the
//! invariant subspaces of the associated Hamiltonian matrix.
//!
//! With the quadratic term entering with a plus sign, the positive definite
//! solution is the graph `[I; X]` of the invariant subspace belonging to the
//! eigenvalues of `H = [[A, R], [−Q, −Aᵀ]]` with positive real part. That is
//! the stable subspace of `−H`, the Hamiltonian of the equivalent
//! standard-form equation `(−A)ᵀX + X(−A) − XRX − Q = 0`.

use nalgebra::{Complex, DMatrix};

use super::{cholesky, ordered_real_schur, project_psd, rcond_1, SpdMatrix, SymmetricMatrix};
use crate::error::{Error, Result};

/// Below this reciprocal condition number the `X₁` block is treated as singular.
pub const X1_RCOND_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct AreProblem {
    a: DMatrix<f64>,
    r: SymmetricMatrix,
    q: SymmetricMatrix,
}

impl AreProblem {
    /// `R` must be positive semi-definite (small negative eigenvalues from
    /// rounding are clipped). `Q` may have either sign; the mode equation of
    /// the MGIG family uses `Q = −Ψ`.
    pub fn new(a: DMatrix<f64>, r: SymmetricMatrix, q: SymmetricMatrix) -> Result<Self> {
        let n = a.nrows();
        for found in [a.ncols(), r.dim(), q.dim()] {
            if found != n {
                return Err(Error::DimensionMismatch { expected: n, found });
            }
        }
        let r = project_psd(&r)?;
        Ok(Self { a, r, q })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn hamiltonian(&self) -> HamiltonianMatrix {
        HamiltonianMatrix {
            a: self.a.clone(),
            r: self.r.clone(),
            q: self.q.clone(),
        }
    }

    /// Frobenius residual of `AᵀX + XA + XRX + Q`, relative to
    /// `‖Q‖ + ‖X‖²‖R‖`.
    pub fn relative_residual(&self, x: &DMatrix<f64>) -> f64 {
        let res = self.a.transpose() * x + x * &self.a + x * self.r.as_matrix() * x + self.q.as_matrix();
        let denom = self.q.frobenius_norm() + x.norm().powi(2) * self.r.frobenius_norm();
        res.norm() / denom.max(f64::MIN_POSITIVE)
    }
}

/// `[[A, R], [−Q, −Aᵀ]]` kept in block form.
#[derive(Debug, Clone)]
pub struct HamiltonianMatrix {
    pub a: DMatrix<f64>,
    pub r: SymmetricMatrix,
    pub q: SymmetricMatrix,
}

impl HamiltonianMatrix {
    pub fn half_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn assemble(&self) -> DMatrix<f64> {
        let n = self.half_dim();
        let mut h = DMatrix::zeros(2 * n, 2 * n);
        h.view_mut((0, 0), (n, n)).copy_from(&self.a);
        h.view_mut((0, n), (n, n)).copy_from(self.r.as_matrix());
        h.view_mut((n, 0), (n, n)).copy_from(&(-self.q.as_matrix()));
        h.view_mut((n, n), (n, n)).copy_from(&(-self.a.transpose()));
        h
    }
}

#[derive(Debug, Clone)]
pub struct UnimodalityCertificate {
    pub has_imaginary: bool,
    /// All `2N` eigenvalues, sorted by real then imaginary part.
    pub eigenvalues: Vec<Complex<f64>>,
}

/// Computes the spectrum of `h` and flags eigenvalues on the imaginary axis:
/// `|Re λ| ≤ tol` together with `|Im λ| > tol`.
pub fn hamiltonian_eigen_check(h: &HamiltonianMatrix, tol: f64) -> Result<UnimodalityCertificate> {
    let schur = ordered_real_schur(&h.assemble(), |_| false)?;
    let mut eigenvalues = schur.eigenvalues();
    eigenvalues.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    let has_imaginary = eigenvalues.iter().any(|z| z.re.abs() <= tol && z.im.abs() > tol);
    Ok(UnimodalityCertificate {
        has_imaginary,
        eigenvalues,
    })
}

/// Positive definite solution of `AᵀX + XA + XRX + Q = 0` by the Schur vector
/// method.
pub fn solve_are_schur(p: &AreProblem) -> Result<SpdMatrix> {
    let n = p.dim();
    let h = p.hamiltonian().assemble();
    let axis_tol = 1e-12 * h.norm().max(1.0);
    let schur = ordered_real_schur(&h, |z| z.re > 0.0)?;
    if schur.eigenvalues().iter().any(|z| z.re.abs() <= axis_tol) || schur.selected_dim != n {
        return Err(Error::NoStabilizingSolution);
    }
    let x1 = schur.q.view((0, 0), (n, n)).clone_owned();
    let x2 = schur.q.view((n, 0), (n, n)).clone_owned();
    let rcond = rcond_1(&x1);
    if rcond < X1_RCOND_THRESHOLD {
        return Err(Error::SingularX1 { rcond });
    }
    // X = X₂X₁⁻¹  ⇔  X₁ᵀ Xᵀ = X₂ᵀ
    let xt = x1
        .transpose()
        .lu()
        .solve(&x2.transpose())
        .ok_or(Error::SingularX1 { rcond })?;
    let x = SymmetricMatrix::symmetrize(&xt.transpose())?;
    cholesky(&x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar(v: f64) -> SymmetricMatrix {
        SymmetricMatrix::from_diagonal(&[v])
    }

    #[test]
    fn hamiltonian_real_spectrum() {
        // A = 0, R = I, Q = −I: blocks [[0, I], [I, 0]]
        let h = HamiltonianMatrix {
            a: DMatrix::zeros(2, 2),
            r: SymmetricMatrix::identity(2),
            q: SymmetricMatrix::identity(2).scaled(-1.0),
        };
        let cert = hamiltonian_eigen_check(&h, 1e-10).unwrap();
        assert!(!cert.has_imaginary);
        let re: Vec<f64> = cert.eigenvalues.iter().map(|z| z.re).collect();
        for (got, want) in re.iter().zip([-1.0, -1.0, 1.0, 1.0]) {
            assert_relative_eq!(*got, want, epsilon = 1e-12);
        }
        assert!(cert.eigenvalues.iter().all(|z| z.im.abs() < 1e-12));
    }

    #[test]
    fn hamiltonian_imaginary_spectrum() {
        // A = 0, R = I, Q = I: blocks [[0, I], [−I, 0]], eigenvalues ±i
        let h = HamiltonianMatrix {
            a: DMatrix::zeros(2, 2),
            r: SymmetricMatrix::identity(2),
            q: SymmetricMatrix::identity(2),
        };
        let cert = hamiltonian_eigen_check(&h, 1e-10).unwrap();
        assert!(cert.has_imaginary);
        for z in &cert.eigenvalues {
            assert!(z.re.abs() < 1e-12);
            assert_relative_eq!(z.im.abs(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn unit_square_root() {
        // X² = I
        let p = AreProblem::new(
            DMatrix::zeros(3, 3),
            SymmetricMatrix::identity(3),
            SymmetricMatrix::identity(3).scaled(-1.0),
        )
        .unwrap();
        let x = solve_are_schur(&p).unwrap();
        assert_relative_eq!(x.as_matrix(), &DMatrix::identity(3, 3), epsilon = 1e-12);
    }

    #[test]
    fn scalar_quadratic_root() {
        // −18x + 10x² − 35 = 0
        let p = AreProblem::new(DMatrix::from_element(1, 1, -9.0), scalar(10.0), scalar(-35.0)).unwrap();
        let x = solve_are_schur(&p).unwrap();
        let want = (9.0 + 431f64.sqrt()) / 10.0;
        assert_relative_eq!(x.as_matrix()[(0, 0)], want, max_relative = 1e-12);
        assert!(p.relative_residual(x.as_matrix()) < 1e-12);
    }

    #[test]
    fn imaginary_axis_has_no_solution() {
        let p = AreProblem::new(
            DMatrix::zeros(2, 2),
            SymmetricMatrix::identity(2),
            SymmetricMatrix::identity(2),
        )
        .unwrap();
        assert_eq!(solve_are_schur(&p).unwrap_err(), Error::NoStabilizingSolution);
    }

    #[test]
    fn rejects_indefinite_r() {
        let r = SymmetricMatrix::from_diagonal(&[1.0, -1.0]);
        let err = AreProblem::new(DMatrix::zeros(2, 2), r, SymmetricMatrix::identity(2)).unwrap_err();
        assert!(matches!(err, Error::NotPositiveSemidefinite { .. }));
    }

    #[test]
    fn nonsymmetric_drift_matrix() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 1.0, -0.3, -0.2]);
        let r = SymmetricMatrix::from_diagonal(&[1.0, 2.0]);
        let q = SymmetricMatrix::from_upper(DMatrix::from_row_slice(2, 2, &[-2.0, 0.5, 0.0, -1.0])).unwrap();
        let p = AreProblem::new(a, r, q).unwrap();
        let x = solve_are_schur(&p).unwrap();
        assert!(p.relative_residual(x.as_matrix()) < 1e-12);
    }
}
