//! Matrix Generalized Inverse Gaussian sampling and collapsed Monte Carlo
//! matrix completion.
//!
//! The crate covers dense SPD linear algebra with a Riccati solver
//! ([`linalg`]), Wishart and Inverse-Wishart sampling ([`wishart`]), the MGIG
//! distribution with mode-matched importance sampling ([`mgig`]), the CMC
//! matrix-completion predictor ([`cmc`]), PMF/BPMF baselines
//! ([`baselines`]) and evaluation utilities ([`eval`]).

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod cmc;
pub mod data;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod mgig;
pub mod rng;
pub mod wishart;

pub use baselines::{FactorPair, GibbsChain};
pub use cmc::{CollapsedPosterior, ColumnPrediction, GapFillMethod, SamplerConfig};
pub use data::{ObservedMatrix, PmfHyperParams};
pub use error::{Error, Result};
pub use eval::{HeldOutSet, PercentileReport};
pub use linalg::{SpdMatrix, SymmetricMatrix};
pub use mgig::{ImportanceSummary, MgigParams, ProposalDistribution, ProposalKind, WeightedSpdSample};
pub use rng::SeededRng;
pub use wishart::{InverseWishartParams, SpdDraw, WishartParams};
