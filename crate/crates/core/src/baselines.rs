//! MAP-PMF by alternating ridge regression and BPMF by Gibbs sampling.
//!
//! Both use fixed isotropic priors `u ~ N(0, σ_u²I)`, `v ~ N(0, σ_v²I)` and
//! Gaussian noise `σ²`. Every row update of one factor is independent given
//! the other factor, so rows are processed in parallel.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;

use crate::data::{ObservedMatrix, PmfHyperParams};
use crate::error::{Error, Result};
use crate::eval::{log_sum_exp, normal_log_pdf};
use crate::rng::SeededRng;

/// Latent factors `U` (`N × D`) and `V` (`M × D`); `X ≈ UVᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair {
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

impl FactorPair {
    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    pub fn predict(&self, row: usize, col: usize) -> f64 {
        self.u.row(row).dot(&self.v.row(col))
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.u * self.v.transpose()
    }
}

/// Negative log posterior of the PMF model, up to a constant.
pub fn pmf_objective(x: &ObservedMatrix, f: &FactorPair, hp: &PmfHyperParams) -> f64 {
    let fit: f64 = x.observed().map(|(r, c, v)| (v - f.predict(r, c)).powi(2)).sum();
    0.5 * fit / hp.sigma2 + 0.5 * f.u.norm_squared() / hp.sigma2_u + 0.5 * f.v.norm_squared() / hp.sigma2_v
}

/// Gaussian conditional of one latent row given the other factor.
#[derive(Debug, Clone)]
pub struct RowConditional {
    pub mean: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl RowConditional {
    /// Posterior of a row with prior `N(0, prior_var·I)` whose observations
    /// `(k, x)` follow `N(⟨row, partners_k⟩, σ²)`.
    pub fn new(partners: &DMatrix<f64>, entries: &[(usize, f64)], sigma2: f64, prior_var: f64) -> Result<Self> {
        let d = partners.ncols();
        let mut precision = DMatrix::<f64>::identity(d, d) / prior_var;
        let mut rhs = DVector::<f64>::zeros(d);
        for &(k, x) in entries {
            let p = partners.row(k).transpose();
            precision.ger(1.0 / sigma2, &p, &p, 1.0);
            rhs.axpy(x / sigma2, &p, 1.0);
        }
        let chol =
            Cholesky::new(precision).ok_or(Error::ConvergenceFailure("row precision is not positive definite"))?;
        Ok(Self {
            mean: chol.solve(&rhs),
            chol,
        })
    }

    /// Covariance `P⁻¹`.
    pub fn covariance(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// `mean + L⁻ᵀz` with `LLᵀ = P` has covariance `P⁻¹`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.mean.len(), |_, _| StandardNormal.sample(rng));
        let shift = self
            .chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .expect("Cholesky factor has a positive diagonal");
        &self.mean + shift
    }
}

fn ridge_update_u(x: &ObservedMatrix, v: &DMatrix<f64>, hp: &PmfHyperParams) -> Result<DMatrix<f64>> {
    let rows: Result<Vec<DVector<f64>>> = (0..x.n_rows())
        .into_par_iter()
        .map(|n| Ok(RowConditional::new(v, &x.row_entries(n), hp.sigma2, hp.sigma2_u)?.mean))
        .collect();
    Ok(stack_rows(rows?, v.ncols()))
}

fn ridge_update_v(x: &ObservedMatrix, u: &DMatrix<f64>, hp: &PmfHyperParams) -> Result<DMatrix<f64>> {
    let rows: Result<Vec<DVector<f64>>> = (0..x.n_cols())
        .into_par_iter()
        .map(|m| Ok(RowConditional::new(u, &x.column_entries(m), hp.sigma2, hp.sigma2_v)?.mean))
        .collect();
    Ok(stack_rows(rows?, u.ncols()))
}

fn stack_rows(rows: Vec<DVector<f64>>, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmfOptions {
    pub max_iters: usize,
    /// Stop once the relative objective decrease falls below this.
    pub tol: f64,
}

impl Default for PmfOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PmfFit {
    pub factors: FactorPair,
    /// Objective after initialization and after every sweep.
    pub objective: Vec<f64>,
    pub converged: bool,
}

/// MAP estimate of `(U, V)` by alternating exact ridge solves, starting from
/// i.i.d. `N(0, 0.01)` entries.
pub fn pmf_map(x: &ObservedMatrix, hp: &PmfHyperParams, opts: PmfOptions, rng: &mut SeededRng) -> Result<PmfFit> {
    let init = Normal::new(0.0, 0.1).expect("valid normal");
    let u = DMatrix::from_fn(x.n_rows(), hp.d, |_, _| init.sample(rng));
    let v = DMatrix::from_fn(x.n_cols(), hp.d, |_, _| init.sample(rng));
    let mut f = FactorPair { u, v };
    let mut objective = vec![pmf_objective(x, &f, hp)];
    let mut converged = false;
    for _ in 0..opts.max_iters {
        f.u = ridge_update_u(x, &f.v, hp)?;
        f.v = ridge_update_v(x, &f.u, hp)?;
        let cur = pmf_objective(x, &f, hp);
        let prev = *objective.last().expect("non-empty");
        objective.push(cur);
        if (prev - cur) <= opts.tol * prev.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    Ok(PmfFit {
        factors: f,
        objective,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GibbsOptions {
    pub total_iters: usize,
    pub burn_in: usize,
    pub lag: usize,
}

impl GibbsOptions {
    pub fn new(total_iters: usize, burn_in: usize, lag: usize) -> Result<Self> {
        if lag == 0 || burn_in >= total_iters {
            return Err(Error::InvalidInput(format!(
                "need lag ≥ 1 and burn-in < total iterations (got total {total_iters}, burn-in {burn_in}, lag {lag})"
            )));
        }
        Ok(Self {
            total_iters,
            burn_in,
            lag,
        })
    }

    /// Options that keep exactly `kept` samples after the given burn-in.
    pub fn keeping(kept: usize, burn_in: usize, lag: usize) -> Result<Self> {
        Self::new(burn_in + kept * lag, burn_in, lag)
    }

    pub fn kept(&self) -> usize {
        (self.total_iters - self.burn_in) / self.lag
    }
}

#[derive(Debug, Clone)]
pub struct GibbsChain {
    pub samples: Vec<FactorPair>,
    pub burn_in: usize,
    pub lag: usize,
    pub seed: u64,
}

const SIDE_U: u64 = 0;
const SIDE_V: u64 = 1;

/// One Gibbs update of every row of `U` given `V`. Row `n` of sweep `iter`
/// draws from the stream `(seed, iter, 0, n)`.
pub fn gibbs_sweep_u(
    x: &ObservedMatrix,
    v: &DMatrix<f64>,
    hp: &PmfHyperParams,
    seed: u64,
    iter: u64,
) -> Result<DMatrix<f64>> {
    let rows: Result<Vec<DVector<f64>>> = (0..x.n_rows())
        .into_par_iter()
        .map(|n| {
            let cond = RowConditional::new(v, &x.row_entries(n), hp.sigma2, hp.sigma2_u)?;
            Ok(cond.sample(&mut SeededRng::derive(seed, &[iter, SIDE_U, n as u64])))
        })
        .collect();
    Ok(stack_rows(rows?, v.ncols()))
}

/// One Gibbs update of every row of `V` given `U`.
pub fn gibbs_sweep_v(
    x: &ObservedMatrix,
    u: &DMatrix<f64>,
    hp: &PmfHyperParams,
    seed: u64,
    iter: u64,
) -> Result<DMatrix<f64>> {
    let rows: Result<Vec<DVector<f64>>> = (0..x.n_cols())
        .into_par_iter()
        .map(|m| {
            let cond = RowConditional::new(u, &x.column_entries(m), hp.sigma2, hp.sigma2_v)?;
            Ok(cond.sample(&mut SeededRng::derive(seed, &[iter, SIDE_V, m as u64])))
        })
        .collect();
    Ok(stack_rows(rows?, u.ncols()))
}

/// Gibbs sampler over `(U, V)` with fixed priors, keeping every `lag`-th
/// state after `burn_in` sweeps.
pub fn bpmf_gibbs(
    x: &ObservedMatrix,
    hp: &PmfHyperParams,
    opts: GibbsOptions,
    seed: u64,
    init: FactorPair,
) -> Result<GibbsChain> {
    if init.u.shape() != (x.n_rows(), hp.d) || init.v.shape() != (x.n_cols(), hp.d) {
        return Err(Error::DimensionMismatch {
            expected: hp.d,
            found: init.rank(),
        });
    }
    let mut state = init;
    let mut samples = Vec::with_capacity(opts.kept());
    for t in 1..=opts.total_iters {
        state.u = gibbs_sweep_u(x, &state.v, hp, seed, t as u64)?;
        state.v = gibbs_sweep_v(x, &state.u, hp, seed, t as u64)?;
        if t > opts.burn_in && (t - opts.burn_in).is_multiple_of(opts.lag) {
            samples.push(state.clone());
        }
    }
    Ok(GibbsChain {
        samples,
        burn_in: opts.burn_in,
        lag: opts.lag,
        seed,
    })
}

/// `log (1/K) Σₖ N(value | ⟨uₙ⁽ᵏ⁾, vₘ⁽ᵏ⁾⟩, σ²)`.
pub fn bpmf_predictive_log_density(chain: &GibbsChain, row: usize, col: usize, value: f64, sigma2: f64) -> f64 {
    let terms: Vec<f64> = chain
        .samples
        .iter()
        .map(|f| normal_log_pdf(value, f.predict(row, col), sigma2))
        .collect();
    log_sum_exp(&terms) - (terms.len() as f64).ln()
}

/// Posterior-mean prediction `(1/K) Σₖ ⟨uₙ⁽ᵏ⁾, vₘ⁽ᵏ⁾⟩`.
pub fn bpmf_predictive_mean(chain: &GibbsChain, row: usize, col: usize) -> f64 {
    chain.samples.iter().map(|f| f.predict(row, col)).sum::<f64>() / chain.samples.len() as f64
}
