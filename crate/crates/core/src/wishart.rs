//! Wishart and Inverse-Wishart distributions over SPD matrices.
//!
//! Conventions: `W(Σ, ρ)` has kernel `|Λ|^{(ρ−N−1)/2} exp{−½Tr(Σ⁻¹Λ)}` and
//! `IW(Ψ, α)` has kernel `|Λ|^{−(α+N+1)/2} exp{−½Tr(ΨΛ⁻¹)}`. Only
//! unnormalized log-densities are provided.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{upper_triangular_inverse, SpdMatrix, SymmetricMatrix};

/// A sampled SPD matrix with its inverse and log-determinant.
#[derive(Debug, Clone)]
pub struct SpdDraw {
    pub lambda: SpdMatrix,
    pub inv_lambda: SpdMatrix,
    pub log_det: f64,
}

impl SpdDraw {
    /// Builds a draw from a known matrix, inverting through its factor.
    pub fn from_spd(lambda: SpdMatrix) -> Result<Self> {
        let inv_lambda = lambda.inverse()?;
        let log_det = lambda.log_det();
        Ok(Self {
            lambda,
            inv_lambda,
            log_det,
        })
    }

    /// `Λ = RᵀR` and `Λ⁻¹ = R⁻¹R⁻ᵀ` from an upper factor.
    pub fn from_upper_factor(r: DMatrix<f64>) -> Result<Self> {
        // A Bartlett diagonal with dof just above N−1 can underflow to (or
        // near) zero. Past a pivot ratio of √ε the inverse has no accurate
        // digits, so the draw is treated as singular.
        let diag = r.diagonal();
        let (index, pivot) = diag
            .iter()
            .copied()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap_or((0, 1.0));
        let largest = diag.iter().copied().fold(0.0, f64::max);
        if !(pivot > largest * f64::EPSILON.sqrt()) || !largest.is_finite() {
            return Err(Error::NotPositiveDefinite { index, pivot });
        }
        let r_inv = upper_triangular_inverse(&r);
        let inv = SymmetricMatrix::from_upper(&r_inv * r_inv.transpose())?;
        let lambda = SpdMatrix::from_upper_factor(r);
        let log_det = lambda.log_det();
        Ok(Self {
            inv_lambda: SpdMatrix::from_trusted(inv, -log_det),
            lambda,
            log_det,
        })
    }

    /// The same draw viewed as `Λ⁻¹`.
    pub fn inverted(self) -> Self {
        Self {
            lambda: self.inv_lambda,
            inv_lambda: self.lambda,
            log_det: -self.log_det,
        }
    }

    pub fn dim(&self) -> usize {
        self.lambda.dim()
    }
}

fn check_dof(dof: f64, dim: usize) -> Result<()> {
    let bound = dim as f64 - 1.0;
    if !(dof > bound) || !dof.is_finite() {
        return Err(Error::InvalidDof { dof, bound, dim });
    }
    Ok(())
}

/// Bartlett factor: upper triangular with `Pᵢᵢ = √χ²(ρ−i)` (0-based `i`)
/// and standard normal entries above the diagonal.
pub fn bartlett_factor<R: Rng + ?Sized>(dim: usize, dof: f64, rng: &mut R) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        let k = dof - i as f64;
        let chi2 = Gamma::new(0.5 * k, 2.0).expect("positive chi-square dof");
        p[(i, i)] = chi2.sample(rng).sqrt();
        for j in (i + 1)..dim {
            p[(i, j)] = StandardNormal.sample(rng);
        }
    }
    p
}

#[derive(Debug, Clone)]
pub struct WishartParams {
    scale: SpdMatrix,
    scale_inv: SpdMatrix,
    dof: f64,
}

impl WishartParams {
    pub fn new(scale: SpdMatrix, dof: f64) -> Result<Self> {
        check_dof(dof, scale.dim())?;
        let scale_inv = scale.inverse()?;
        Ok(Self { scale, scale_inv, dof })
    }

    pub fn dim(&self) -> usize {
        self.scale.dim()
    }

    pub fn scale(&self) -> &SpdMatrix {
        &self.scale
    }

    pub fn dof(&self) -> f64 {
        self.dof
    }

    /// Deterministic half of the sampler: `R = P·L`, `Λ = RᵀR`.
    pub fn draw_from_bartlett(&self, p: &DMatrix<f64>) -> Result<SpdDraw> {
        let l = self.scale.factor()?;
        SpdDraw::from_upper_factor(p * l)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SpdDraw> {
        let p = bartlett_factor(self.dim(), self.dof, rng);
        self.draw_from_bartlett(&p)
    }

    pub fn log_density_unnorm(&self, draw: &SpdDraw) -> f64 {
        let n = self.dim() as f64;
        0.5 * (self.dof - n - 1.0) * draw.log_det
            - 0.5 * self.scale_inv.as_symmetric().trace_product(draw.lambda.as_symmetric())
    }

    /// `(ρ−N−1)Σ`, defined when `ρ > N+1`.
    pub fn mode(&self) -> Result<SpdMatrix> {
        let bound = self.dim() as f64 + 1.0;
        if !(self.dof > bound) {
            return Err(Error::ModeNotInterior { dof: self.dof, bound });
        }
        self.scale.scaled(self.dof - bound)
    }
}

#[derive(Debug, Clone)]
pub struct InverseWishartParams {
    scale: SpdMatrix,
    /// Wishart over `Λ⁻¹` with scale `Ψ⁻¹` and the same dof.
    dual: WishartParams,
}

impl InverseWishartParams {
    pub fn new(scale: SpdMatrix, dof: f64) -> Result<Self> {
        check_dof(dof, scale.dim())?;
        let dual = WishartParams::new(scale.inverse()?, dof)?;
        Ok(Self { scale, dual })
    }

    pub fn dim(&self) -> usize {
        self.scale.dim()
    }

    pub fn scale(&self) -> &SpdMatrix {
        &self.scale
    }

    pub fn dof(&self) -> f64 {
        self.dual.dof
    }

    /// Inverts a `W(Ψ⁻¹, α)` draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SpdDraw> {
        Ok(self.dual.sample(rng)?.inverted())
    }

    pub fn draw_from_bartlett(&self, p: &DMatrix<f64>) -> Result<SpdDraw> {
        Ok(self.dual.draw_from_bartlett(p)?.inverted())
    }

    pub fn log_density_unnorm(&self, draw: &SpdDraw) -> f64 {
        let n = self.dim() as f64;
        -0.5 * (self.dof() + n + 1.0) * draw.log_det
            - 0.5 * self.scale.as_symmetric().trace_product(draw.inv_lambda.as_symmetric())
    }

    /// `Ψ/(α+N+1)`.
    pub fn mode(&self) -> Result<SpdMatrix> {
        self.scale.scaled(1.0 / (self.dof() + self.dim() as f64 + 1.0))
    }
}

pub fn wishart_sample<R: Rng + ?Sized>(p: &WishartParams, rng: &mut R) -> Result<SpdDraw> {
    p.sample(rng)
}

pub fn inverse_wishart_sample<R: Rng + ?Sized>(p: &InverseWishartParams, rng: &mut R) -> Result<SpdDraw> {
    p.sample(rng)
}

pub fn wishart_log_density_unnorm(lam: &SpdDraw, p: &WishartParams) -> f64 {
    p.log_density_unnorm(lam)
}

pub fn wishart_mode(p: &WishartParams) -> Result<SpdMatrix> {
    p.mode()
}

pub fn inverse_wishart_mode(p: &InverseWishartParams) -> Result<SpdMatrix> {
    p.mode()
}
