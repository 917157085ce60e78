//! Proposal distributions for importance sampling the MGIG.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::{mgig_mode, MgigParams};
use crate::error::{Error, Result};
use crate::linalg::{spd_sqrt, sym_eigen, SpdMatrix, SymmetricMatrix};
use crate::wishart::{InverseWishartParams, SpdDraw, WishartParams};

#[derive(Debug, Clone)]
pub enum ProposalDistribution {
    Wishart(WishartParams),
    InverseWishart(InverseWishartParams),
}

impl ProposalDistribution {
    pub fn dim(&self) -> usize {
        match self {
            Self::Wishart(w) => w.dim(),
            Self::InverseWishart(iw) => iw.dim(),
        }
    }

    pub fn dof(&self) -> f64 {
        match self {
            Self::Wishart(w) => w.dof(),
            Self::InverseWishart(iw) => iw.dof(),
        }
    }

    pub fn scale(&self) -> &SpdMatrix {
        match self {
            Self::Wishart(w) => w.scale(),
            Self::InverseWishart(iw) => iw.scale(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SpdDraw> {
        match self {
            Self::Wishart(w) => w.sample(rng),
            Self::InverseWishart(iw) => iw.sample(rng),
        }
    }

    pub fn log_density_unnorm(&self, draw: &SpdDraw) -> f64 {
        match self {
            Self::Wishart(w) => w.log_density_unnorm(draw),
            Self::InverseWishart(iw) => iw.log_density_unnorm(draw),
        }
    }

    pub fn mode(&self) -> Result<SpdMatrix> {
        match self {
            Self::Wishart(w) => w.mode(),
            Self::InverseWishart(iw) => iw.mode(),
        }
    }
}

/// Which proposal family to build for a target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProposalKind {
    /// `W(Λ*/(ρ−N−1), ρ)`.
    ModeWishart,
    /// `IW((ρ+N+1)Λ*, ρ)`.
    ModeInverseWishart,
    /// `W(Φ⁻¹, 2ν)`, the Wishart factor of the density.
    BaseWishart,
    /// `IW(Ψ, −2ν)`, the Inverse-Wishart factor of the density.
    BaseInverseWishart,
}

impl ProposalKind {
    /// Default dof for a mode-matched proposal around `mode`.
    ///
    /// Wishart: `N + 1 + min(2, κ)` where `κ` is the smallest eigenvalue of
    /// `Λ*^{1/2}ΦΛ*^{1/2}`. The cap keeps `Σ⁻¹ ≤ Φ`, so the proposal tail is
    /// never lighter than the target's.
    ///
    /// Inverse-Wishart: `−2ν` when that is a valid dof, otherwise `N + 2`.
    /// At `ρ = −2ν` the log weight reduces to `−½Tr(Λ*ΦΛ*Λ⁻¹ + ΦΛ)`, which is
    /// bounded above.
    pub fn default_rho(self, p: &MgigParams, mode: &SpdMatrix) -> Result<Option<f64>> {
        let n = p.dim() as f64;
        match self {
            Self::ModeWishart => {
                let half = spd_sqrt(mode)?;
                let tilt = SymmetricMatrix::symmetrize(&(half.as_matrix() * p.phi().as_matrix() * half.as_matrix()))?;
                let kappa = sym_eigen(&tilt)?.values[0];
                Ok(Some(n + 1.0 + kappa.min(2.0)))
            }
            Self::ModeInverseWishart => {
                let matched = -2.0 * p.nu();
                Ok(Some(if matched > n - 1.0 { matched } else { n + 2.0 }))
            }
            Self::BaseWishart | Self::BaseInverseWishart => Ok(None),
        }
    }

    /// Builds the proposal; `rho` is ignored by the factorization baselines
    /// and defaults to [`ProposalKind::default_rho`] for the others.
    pub fn build(self, p: &MgigParams, rho: Option<f64>) -> Result<ProposalDistribution> {
        match self {
            Self::BaseWishart => build_baseline_proposal(p, BaselineKind::WishartFactor),
            Self::BaseInverseWishart => build_baseline_proposal(p, BaselineKind::IwFactor),
            Self::ModeWishart | Self::ModeInverseWishart => {
                let mode = mgig_mode(p)?;
                let rho = match rho {
                    Some(r) => r,
                    None => self.default_rho(p, &mode)?.expect("mode-matched default"),
                };
                self.build_around_mode(&mode, rho)
            }
        }
    }

    /// Builds a mode-matched proposal around an already computed mode.
    pub fn build_around_mode(self, mode: &SpdMatrix, rho: f64) -> Result<ProposalDistribution> {
        let n = mode.dim() as f64;
        match self {
            Self::ModeWishart => {
                if !(rho > n + 1.0) {
                    return Err(Error::InvalidDof {
                        dof: rho,
                        bound: n + 1.0,
                        dim: mode.dim(),
                    });
                }
                let scale = mode.scaled(1.0 / (rho - n - 1.0))?;
                Ok(ProposalDistribution::Wishart(WishartParams::new(scale, rho)?))
            }
            Self::ModeInverseWishart => {
                if !(rho > n - 1.0) {
                    return Err(Error::InvalidDof {
                        dof: rho,
                        bound: n - 1.0,
                        dim: mode.dim(),
                    });
                }
                let scale = mode.scaled(rho + n + 1.0)?;
                Ok(ProposalDistribution::InverseWishart(InverseWishartParams::new(
                    scale, rho,
                )?))
            }
            _ => Err(Error::InvalidInput(format!("{self} is not a mode-matched proposal"))),
        }
    }
}

impl fmt::Display for ProposalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ModeWishart => "mode-w",
            Self::ModeInverseWishart => "mode-iw",
            Self::BaseWishart => "base-w",
            Self::BaseInverseWishart => "base-iw",
        })
    }
}

impl FromStr for ProposalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mode-w" => Ok(Self::ModeWishart),
            "mode-iw" => Ok(Self::ModeInverseWishart),
            "base-w" => Ok(Self::BaseWishart),
            "base-iw" => Ok(Self::BaseInverseWishart),
            other => Err(Error::InvalidInput(format!("unknown proposal kind '{other}'"))),
        }
    }
}

pub fn build_mode_matched_wishart(p: &MgigParams, rho: f64) -> Result<ProposalDistribution> {
    let n = p.dim() as f64;
    if !(rho > n + 1.0) {
        return Err(Error::InvalidDof {
            dof: rho,
            bound: n + 1.0,
            dim: p.dim(),
        });
    }
    ProposalKind::ModeWishart.build_around_mode(&mgig_mode(p)?, rho)
}

pub fn build_mode_matched_iw(p: &MgigParams, rho: f64) -> Result<ProposalDistribution> {
    let n = p.dim() as f64;
    if !(rho > n - 1.0) {
        return Err(Error::InvalidDof {
            dof: rho,
            bound: n - 1.0,
            dim: p.dim(),
        });
    }
    ProposalKind::ModeInverseWishart.build_around_mode(&mgig_mode(p)?, rho)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    WishartFactor,
    IwFactor,
}

/// Proposal taken from one factor of the MGIG kernel: `W(Φ⁻¹, 2ν)` when
/// `2ν > N−1`, or `IW(Ψ, −2ν)` when `−2ν > N−1`.
pub fn build_baseline_proposal(p: &MgigParams, kind: BaselineKind) -> Result<ProposalDistribution> {
    match kind {
        BaselineKind::WishartFactor => Ok(ProposalDistribution::Wishart(WishartParams::new(
            p.phi().inverse()?,
            2.0 * p.nu(),
        )?)),
        BaselineKind::IwFactor => Ok(ProposalDistribution::InverseWishart(InverseWishartParams::new(
            p.psi().clone(),
            -2.0 * p.nu(),
        )?)),
    }
}
