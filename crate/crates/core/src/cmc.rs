//! Collapsed Monte Carlo matrix completion.
//!
//! Marginalizing `V` out of the PMF model leaves columns `x_:m ~ N(0, σ_v²Λ_u)`
//! with `Λ_u = β_vI + UUᵀ`, and the posterior over `Λ_u` is approximately
//! `MGIG(ZZᵀ/σ_v², I/σ_u², (N−M+1)/2)` where `Z` is a gap-filled copy of the
//! data. Missing entries are predicted by conditioning each column's Gaussian
//! on its observed part, averaged over importance samples of `Λ_u`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::baselines::{pmf_map, PmfOptions};
use crate::data::{ObservedMatrix, PmfHyperParams};
use crate::error::{Error, Result};
use crate::eval::{log_sum_exp, normal_log_pdf, HeldOutEntry};
use crate::linalg::{cholesky, SpdMatrix, SymmetricMatrix};
use crate::mgig::{
    importance_sample, normalized_weights, ImportanceSummary, MgigParams, ProposalKind, WeightedSpdSample,
};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapFillMethod {
    /// Missing entries set to zero, after subtracting per-row observed means
    /// when `center` is set.
    ZeroPad { center: bool },
    /// Missing entries replaced by the MAP-PMF reconstruction.
    PmfPointEstimate,
}

impl fmt::Display for GapFillMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ZeroPad { center: true } => "zero",
            Self::ZeroPad { center: false } => "zero-raw",
            Self::PmfPointEstimate => "pmf",
        })
    }
}

impl FromStr for GapFillMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(Self::ZeroPad { center: true }),
            "zero-raw" => Ok(Self::ZeroPad { center: false }),
            "pmf" => Ok(Self::PmfPointEstimate),
            other => Err(Error::InvalidInput(format!("unknown gap-fill method '{other}'"))),
        }
    }
}

/// A dense stand-in for the data. Predictions are made for `Z` and shifted
/// back by `row_offsets`.
#[derive(Debug, Clone, PartialEq)]
pub struct GapFilled {
    pub z: DMatrix<f64>,
    pub row_offsets: DVector<f64>,
}

pub fn gap_fill(
    x: &ObservedMatrix,
    method: GapFillMethod,
    hp: &PmfHyperParams,
    rng: &mut SeededRng,
) -> Result<GapFilled> {
    let n = x.n_rows();
    match method {
        GapFillMethod::ZeroPad { center } => {
            let row_offsets = if center { x.row_means() } else { DVector::zeros(n) };
            let z = DMatrix::from_fn(n, x.n_cols(), |r, c| match x.get(r, c) {
                Some(v) => v - row_offsets[r],
                None => 0.0,
            });
            Ok(GapFilled { z, row_offsets })
        }
        GapFillMethod::PmfPointEstimate => {
            let fit = pmf_map(x, hp, PmfOptions::default(), rng)?;
            let z = DMatrix::from_fn(n, x.n_cols(), |r, c| {
                x.get(r, c).unwrap_or_else(|| fit.factors.predict(r, c))
            });
            Ok(GapFilled {
                z,
                row_offsets: DVector::zeros(n),
            })
        }
    }
}

/// The MGIG posterior over `Λ_u` built from gap-filled data.
#[derive(Debug, Clone)]
pub struct CollapsedPosterior {
    pub mgig: MgigParams,
    /// `σ²/σ_v²`; kept for reference, prediction does not use it.
    pub beta_v: f64,
    pub sigma2_v: f64,
    pub gap_fill_method: GapFillMethod,
    pub row_offsets: DVector<f64>,
    /// Diagonal added to `Ψ_u` to make it factorizable; zero if none.
    pub ridge: f64,
}

/// Ridge used when `ZZᵀ/σ_v²` fails to factor, relative to its mean diagonal.
pub const RIDGE_SCALE: f64 = 1e-8;

/// `Ψ_u = ZZᵀ/σ_v²`, `Φ_u = I/σ_u²`, `ν_u = (N−M+1)/2`.
pub fn build_collapsed_posterior(
    x: &ObservedMatrix,
    hp: &PmfHyperParams,
    method: GapFillMethod,
    rng: &mut SeededRng,
) -> Result<CollapsedPosterior> {
    let (n, m) = (x.n_rows(), x.n_cols());
    if n > m {
        return Err(Error::InvalidInput(format!(
            "collapsed posterior needs N ≤ M, got {n} × {m}"
        )));
    }
    let filled = gap_fill(x, method, hp, rng)?;
    let gram = SymmetricMatrix::symmetrize(&(&filled.z * filled.z.transpose() / hp.sigma2_v))?;
    let (psi, ridge) = match cholesky(&gram) {
        Ok(psi) => (psi, 0.0),
        Err(_) => {
            let eps = RIDGE_SCALE * gram.trace() / n as f64;
            if !(eps > 0.0) {
                return Err(Error::DegenerateCovariance);
            }
            let psi = cholesky(&gram.add_diagonal(eps)).map_err(|_| Error::DegenerateCovariance)?;
            (psi, eps)
        }
    };
    let phi = SpdMatrix::identity(n).scaled(1.0 / hp.sigma2_u)?;
    Ok(CollapsedPosterior {
        mgig: MgigParams::new(psi, phi, 0.5 * (n as f64 - m as f64 + 1.0))?,
        beta_v: hp.beta_v(),
        sigma2_v: hp.sigma2_v,
        gap_fill_method: method,
        row_offsets: filled.row_offsets,
        ridge,
    })
}

/// Conditional Gaussian of a column's missing entries given its observed ones.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnPrediction {
    pub col_index: usize,
    /// Ascending row indices of the predicted entries.
    pub missing_indices: Vec<usize>,
    pub mean: DVector<f64>,
    /// Symmetric PSD, `missing × missing`.
    pub covariance: DMatrix<f64>,
    /// Log predictive densities of held-out truths, in the order supplied.
    pub log_densities: Vec<f64>,
}

impl ColumnPrediction {
    fn position(&self, row: usize) -> Option<usize> {
        self.missing_indices.binary_search(&row).ok()
    }
}

/// Conditions `N(0, scale·Λ)` on the column's observed `(row, value)` pairs:
/// `μ* = C_{*o}C_{oo}⁻¹x^o` and `Σ* = C_{**} − C_{*o}C_{oo}⁻¹C_{o*}`.
///
/// A column without observations gets the marginal `N(0, C_{**})`.
pub fn predict_column(
    lam: &SpdMatrix,
    col_index: usize,
    observed: &[(usize, f64)],
    scale: f64,
) -> Result<ColumnPrediction> {
    let n = lam.dim();
    let mut is_obs = vec![false; n];
    for &(r, _) in observed {
        if r >= n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: r + 1,
            });
        }
        is_obs[r] = true;
    }
    let obs: Vec<usize> = (0..n).filter(|&r| is_obs[r]).collect();
    let missing: Vec<usize> = (0..n).filter(|&r| !is_obs[r]).collect();
    let mut x_o = DVector::zeros(obs.len());
    for &(r, v) in observed {
        x_o[obs.binary_search(&r).expect("observed row")] = v;
    }
    let c = lam.as_matrix();
    let c_mm = DMatrix::from_fn(missing.len(), missing.len(), |i, j| scale * c[(missing[i], missing[j])]);
    if obs.is_empty() || missing.is_empty() {
        return Ok(ColumnPrediction {
            col_index,
            mean: DVector::zeros(missing.len()),
            missing_indices: missing,
            covariance: c_mm,
            log_densities: Vec::new(),
        });
    }
    let c_oo = SymmetricMatrix::from_upper(DMatrix::from_fn(obs.len(), obs.len(), |i, j| {
        scale * c[(obs[i], obs[j])]
    }))?;
    let c_om = DMatrix::from_fn(obs.len(), missing.len(), |i, j| scale * c[(obs[i], missing[j])]);
    let y = cholesky(&c_oo)
        .and_then(|f| f.solve(&c_om))
        .map_err(|_| Error::SingularObservedBlock { column: col_index })?;
    let mean = y.tr_mul(&x_o);
    let cov = c_mm - c_om.tr_mul(&y);
    Ok(ColumnPrediction {
        col_index,
        missing_indices: missing,
        mean,
        covariance: (&cov + cov.transpose()) * 0.5,
        log_densities: Vec::new(),
    })
}

/// Importance-sampling settings for the CMC predictors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub samples: usize,
    pub proposal: ProposalKind,
    /// Proposal dof; `None` uses the proposal's default.
    pub rho: Option<f64>,
    /// Model columns as `N(0, σ_v²Λ)`; when false, as `N(0, Λ)`.
    pub include_sigma2_v: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            samples: 1000,
            proposal: ProposalKind::ModeInverseWishart,
            rho: None,
            include_sigma2_v: true,
        }
    }
}

/// Output of a CMC run.
#[derive(Debug, Clone)]
pub struct CmcResult {
    pub posterior: CollapsedPosterior,
    pub summary: ImportanceSummary,
    /// One entry per column with at least one unobserved entry.
    pub columns: Vec<ColumnPrediction>,
    /// Predictive log density of each held-out entry, in input order.
    pub log_densities: Vec<f64>,
    /// Predictive mean of each held-out entry, in input order.
    pub predicted_means: Vec<f64>,
    /// (sample, column) pairs skipped because `C_oo` failed to factor.
    pub skipped_pairs: usize,
}

fn draw_posterior(
    x: &ObservedMatrix,
    hp: &PmfHyperParams,
    gap: GapFillMethod,
    cfg: &SamplerConfig,
    rng: &mut SeededRng,
) -> Result<(CollapsedPosterior, Vec<WeightedSpdSample>, ImportanceSummary)> {
    let mut fill_rng = SeededRng::new(rng.next_seed());
    let posterior = build_collapsed_posterior(x, hp, gap, &mut fill_rng)?;
    let q = cfg.proposal.build(&posterior.mgig, cfg.rho)?;
    let (samples, summary) = importance_sample(&posterior.mgig, &q, cfg.samples, rng)?;
    Ok((posterior, samples, summary))
}

/// Observed pairs of a column, shifted into the gap-filled frame.
fn centered_entries(x: &ObservedMatrix, post: &CollapsedPosterior, col: usize) -> Vec<(usize, f64)> {
    x.column_entries(col)
        .into_iter()
        .map(|(r, v)| (r, v - post.row_offsets[r]))
        .collect()
}

fn group_by_column(held_out: &[HeldOutEntry], m: usize) -> Result<Vec<Vec<usize>>> {
    let mut groups = vec![Vec::new(); m];
    for (k, e) in held_out.iter().enumerate() {
        if e.col >= m {
            return Err(Error::InvalidInput(format!(
                "held-out entry ({}, {}) is outside the matrix",
                e.row, e.col
            )));
        }
        groups[e.col].push(k);
    }
    Ok(groups)
}

fn scatter(
    x: &ObservedMatrix,
    held_out: &[HeldOutEntry],
    columns: &[ColumnPrediction],
    groups: &[Vec<usize>],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut log_densities = vec![f64::NAN; held_out.len()];
    let mut means = vec![f64::NAN; held_out.len()];
    for col in columns {
        for (&k, &ld) in groups[col.col_index].iter().zip(&col.log_densities) {
            log_densities[k] = ld;
            means[k] = col.mean[col.position(held_out[k].row).expect("held-out row is missing")];
        }
    }
    if let Some(k) = means.iter().position(|m| m.is_nan()) {
        let e = held_out[k];
        if x.is_observed(e.row, e.col) {
            return Err(Error::InvalidInput(format!(
                "held-out entry ({}, {}) is also a training entry",
                e.row, e.col
            )));
        }
    }
    Ok((log_densities, means))
}

/// Columns that need a prediction.
fn incomplete_columns(x: &ObservedMatrix) -> Vec<usize> {
    (0..x.n_cols()).filter(|&c| x.observed_count(c) < x.n_rows()).collect()
}

/// Full sampler: every importance sample conditions every incomplete column.
///
/// Column means and covariances are weight-averaged over samples; held-out
/// log densities use the weighted mixture of per-sample Gaussians. A sample
/// whose `C_oo` fails to factor is skipped for that column only.
pub fn cmc_predict_full(
    x: &ObservedMatrix,
    hp: &PmfHyperParams,
    gap: GapFillMethod,
    cfg: &SamplerConfig,
    held_out: &[HeldOutEntry],
    rng: &mut SeededRng,
) -> Result<CmcResult> {
    let groups = group_by_column(held_out, x.n_cols())?;
    let (posterior, samples, summary) = draw_posterior(x, hp, gap, cfg, rng)?;
    let log_w: Vec<f64> = samples.iter().map(|s| s.log_weight).collect();
    let weights = normalized_weights(&log_w)?;
    let scale = if cfg.include_sigma2_v { hp.sigma2_v } else { 1.0 };

    let per_column: Vec<(ColumnPrediction, usize)> = incomplete_columns(x)
        .into_par_iter()
        .map(|col| {
            let entries = centered_entries(x, &posterior, col);
            let targets = &groups[col];
            let mut mixture: Vec<Vec<f64>> = vec![Vec::with_capacity(samples.len()); targets.len()];
            let mut acc: Option<ColumnPrediction> = None;
            let mut total = 0.0;
            let mut skipped = 0;
            for (s, &w) in samples.iter().zip(&weights) {
                if w == 0.0 {
                    continue;
                }
                let pred = match predict_column(&s.draw.lambda, col, &entries, scale) {
                    Ok(p) => p,
                    Err(Error::SingularObservedBlock { .. }) => {
                        skipped += 1;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                for (slot, &k) in mixture.iter_mut().zip(targets) {
                    let e = held_out[k];
                    let i = pred.position(e.row).ok_or_else(|| {
                        Error::InvalidInput(format!(
                            "held-out entry ({}, {}) is also a training entry",
                            e.row, e.col
                        ))
                    })?;
                    let mu = pred.mean[i] + posterior.row_offsets[e.row];
                    slot.push(w.ln() + normal_log_pdf(e.value, mu, pred.covariance[(i, i)]));
                }
                total += w;
                match acc.as_mut() {
                    None => {
                        acc = Some(ColumnPrediction {
                            mean: pred.mean * w,
                            covariance: pred.covariance * w,
                            ..pred
                        })
                    }
                    Some(a) => {
                        a.mean.axpy(w, &pred.mean, 1.0);
                        a.covariance += pred.covariance * w;
                    }
                }
            }
            let mut out = acc.ok_or(Error::SingularObservedBlock { column: col })?;
            out.mean /= total;
            out.covariance /= total;
            for (i, &r) in out.missing_indices.iter().enumerate() {
                out.mean[i] += posterior.row_offsets[r];
            }
            out.log_densities = mixture.iter().map(|t| log_sum_exp(t) - total.ln()).collect();
            Ok((out, skipped))
        })
        .collect::<Result<_>>()?;

    let skipped_pairs = per_column.iter().map(|(_, s)| s).sum();
    let columns: Vec<ColumnPrediction> = per_column.into_iter().map(|(c, _)| c).collect();
    let (log_densities, predicted_means) = scatter(x, held_out, &columns, &groups)?;
    Ok(CmcResult {
        posterior,
        summary,
        columns,
        log_densities,
        predicted_means,
        skipped_pairs,
    })
}

/// Mean sampler: conditions every column once on the weighted posterior
/// mean `Λ̄ = Σ wₜΛₜ / Σ wₜ`.
pub fn cmc_predict_mean_sampler(
    x: &ObservedMatrix,
    hp: &PmfHyperParams,
    gap: GapFillMethod,
    cfg: &SamplerConfig,
    held_out: &[HeldOutEntry],
    rng: &mut SeededRng,
) -> Result<CmcResult> {
    let groups = group_by_column(held_out, x.n_cols())?;
    let (posterior, _samples, summary) = draw_posterior(x, hp, gap, cfg, rng)?;
    let lam_bar = cholesky(&summary.mean_estimate)?;
    let scale = if cfg.include_sigma2_v { hp.sigma2_v } else { 1.0 };
    let columns: Vec<ColumnPrediction> = incomplete_columns(x)
        .into_par_iter()
        .map(|col| {
            let entries = centered_entries(x, &posterior, col);
            let mut pred = predict_column(&lam_bar, col, &entries, scale)?;
            for (i, &r) in pred.missing_indices.iter().enumerate() {
                pred.mean[i] += posterior.row_offsets[r];
            }
            pred.log_densities = groups[col]
                .iter()
                .map(|&k| {
                    let e = held_out[k];
                    let i = pred.position(e.row).ok_or_else(|| {
                        Error::InvalidInput(format!(
                            "held-out entry ({}, {}) is also a training entry",
                            e.row, e.col
                        ))
                    })?;
                    Ok(normal_log_pdf(e.value, pred.mean[i], pred.covariance[(i, i)]))
                })
                .collect::<Result<_>>()?;
            Ok(pred)
        })
        .collect::<Result<_>>()?;
    let (log_densities, predicted_means) = scatter(x, held_out, &columns, &groups)?;
    Ok(CmcResult {
        posterior,
        summary,
        columns,
        log_densities,
        predicted_means,
        skipped_pairs: 0,
    })
}
