//! The Matrix Generalized Inverse Gaussian distribution.
//!
//! `MGIG_N(Ψ, Φ, ν)` has unnormalized log-density
//! `α·log|Λ| − ½Tr(ΨΛ⁻¹) − ½Tr(ΦΛ)` with `α = ν − (N+1)/2`. Its unique mode
//! solves the Riccati equation `ΛΦΛ − 2αΛ − Ψ = 0`; sampling is done by
//! importance sampling from a Wishart or Inverse-Wishart proposal.

mod importance;
mod proposal;

pub use importance::{
    ess, estimate_functional, importance_sample, mode_matched_wishart_log_weight, normalized_weights, summarize,
    ImportanceSummary, WeightedSpdSample,
};
pub use proposal::{
    build_baseline_proposal, build_mode_matched_iw, build_mode_matched_wishart, BaselineKind, ProposalDistribution,
    ProposalKind,
};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{
    cholesky, hamiltonian_eigen_check, solve_are_schur, sym_eigen, AreProblem, HamiltonianMatrix, SpdMatrix,
    SymmetricMatrix, UnimodalityCertificate,
};
use crate::wishart::SpdDraw;

#[derive(Debug, Clone)]
pub struct MgigParams {
    psi: SpdMatrix,
    phi: SpdMatrix,
    nu: f64,
}

impl MgigParams {
    pub fn new(psi: SpdMatrix, phi: SpdMatrix, nu: f64) -> Result<Self> {
        if psi.dim() != phi.dim() {
            return Err(Error::DimensionMismatch {
                expected: psi.dim(),
                found: phi.dim(),
            });
        }
        if !nu.is_finite() {
            return Err(Error::InvalidInput(format!("nu must be finite, got {nu}")));
        }
        Ok(Self { psi, phi, nu })
    }

    pub fn dim(&self) -> usize {
        self.psi.dim()
    }

    pub fn psi(&self) -> &SpdMatrix {
        &self.psi
    }

    pub fn phi(&self) -> &SpdMatrix {
        &self.phi
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// `ν − (N+1)/2`, the exponent of `|Λ|` in the density.
    pub fn alpha(&self) -> f64 {
        self.nu - 0.5 * (self.dim() as f64 + 1.0)
    }

    pub fn log_density_unnorm(&self, lam: &SpdDraw) -> Result<f64> {
        if lam.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: lam.dim(),
            });
        }
        Ok(self.alpha() * lam.log_det
            - 0.5 * self.psi.as_symmetric().trace_product(lam.inv_lambda.as_symmetric())
            - 0.5 * self.phi.as_symmetric().trace_product(lam.lambda.as_symmetric()))
    }

    /// `ΛΦΛ − 2αΛ − Ψ` in Frobenius norm, relative to `‖Ψ‖`.
    pub fn mode_residual(&self, lam: &DMatrix<f64>) -> f64 {
        let res = lam * self.phi.as_matrix() * lam - lam * (2.0 * self.alpha()) - self.psi.as_matrix();
        res.norm() / self.psi.as_matrix().norm()
    }

    /// Hamiltonian `[[−αI, Φ], [Ψ, αI]]` of the mode equation.
    pub fn hamiltonian(&self) -> HamiltonianMatrix {
        let n = self.dim();
        HamiltonianMatrix {
            a: DMatrix::identity(n, n) * -self.alpha(),
            r: self.phi.as_symmetric().clone(),
            q: self.psi.as_symmetric().scaled(-1.0),
        }
    }
}

pub fn mgig_log_density_unnorm(lam: &SpdDraw, p: &MgigParams) -> Result<f64> {
    p.log_density_unnorm(lam)
}

/// `(Ψ, Φ, ν) ↦ (Φ, Ψ, −ν)`: the law of `Λ⁻¹`.
pub fn mgig_invert_params(p: &MgigParams) -> MgigParams {
    MgigParams {
        psi: p.phi.clone(),
        phi: p.psi.clone(),
        nu: -p.nu,
    }
}

/// Closed-form mode.
///
/// With `S = Φ^{1/2}ΨΦ^{1/2}` and `Y = Φ^{1/2}ΛΦ^{1/2}` the mode equation
/// becomes `(Y − αI)² = S + α²I`, so
/// `Λ* = Φ^{−1/2}(αI + (S + α²I)^{1/2})Φ^{−1/2}`. Eigenvalues of the middle
/// factor are `α + √(sᵢ + α²) > 0`; for `α < 0` they are evaluated as
/// `sᵢ / (√(sᵢ + α²) − α)` to avoid cancellation.
pub fn mgig_mode(p: &MgigParams) -> Result<SpdMatrix> {
    let alpha = p.alpha();
    let phi_eig = sym_eigen(p.phi.as_symmetric())?;
    let phi_half = phi_eig.map_spectrum(|l| l.sqrt());
    let phi_inv_half = phi_eig.map_spectrum(|l| 1.0 / l.sqrt());

    let s = SymmetricMatrix::symmetrize(&(&phi_half * p.psi.as_matrix() * &phi_half))?;
    let s_eig = sym_eigen(&s)?;
    let y = s_eig.map_spectrum(|si| {
        let si = si.max(0.0);
        let root = (si + alpha * alpha).sqrt();
        if alpha >= 0.0 {
            alpha + root
        } else {
            si / (root - alpha)
        }
    });
    let lam = SymmetricMatrix::symmetrize(&(&phi_inv_half * y * &phi_inv_half))?;
    cholesky(&lam)
}

/// Mode through the general Hamiltonian–Schur Riccati solver.
pub fn mgig_mode_schur(p: &MgigParams) -> Result<SpdMatrix> {
    let n = p.dim();
    let problem = AreProblem::new(
        DMatrix::identity(n, n) * -p.alpha(),
        p.phi.as_symmetric().clone(),
        p.psi.as_symmetric().scaled(-1.0),
    )?;
    solve_are_schur(&problem)
}

/// Spectrum of the mode Hamiltonian; every eigenvalue is `±√(λ̃ᵢ + α²)` with
/// `λ̃ᵢ` the (positive) eigenvalues of `ΦΨ`, so none is imaginary.
pub fn mgig_unimodality_certificate(p: &MgigParams) -> Result<UnimodalityCertificate> {
    let h = p.hamiltonian();
    let tol = 1e-10 * h.assemble().norm().max(1.0);
    hamiltonian_eigen_check(&h, tol)
}

/// `±√(λ̃ᵢ + α²)` computed from the symmetric matrix `Φ^{1/2}ΨΦ^{1/2}`,
/// ascending.
pub fn mgig_hamiltonian_spectrum(p: &MgigParams) -> Result<DVector<f64>> {
    let phi_half = sym_eigen(p.phi.as_symmetric())?.map_spectrum(|l| l.sqrt());
    let s = SymmetricMatrix::symmetrize(&(&phi_half * p.psi.as_matrix() * &phi_half))?;
    let a2 = p.alpha() * p.alpha();
    let pos: Vec<f64> = sym_eigen(&s)?.values.iter().map(|l| (l + a2).sqrt()).collect();
    let mut all: Vec<f64> = pos.iter().map(|v| -v).chain(pos.iter().copied()).collect();
    all.sort_by(f64::total_cmp);
    Ok(DVector::from_vec(all))
}
