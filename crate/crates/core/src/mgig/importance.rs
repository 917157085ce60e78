//! Self-normalized importance sampling over SPD matrices.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{MgigParams, ProposalDistribution};
use crate::error::{Error, Result};
use crate::linalg::SymmetricMatrix;
use crate::rng::SeededRng;
use crate::wishart::{SpdDraw, WishartParams};

#[derive(Debug, Clone)]
pub struct WeightedSpdSample {
    pub draw: SpdDraw,
    pub log_weight: f64,
}

#[derive(Debug, Clone)]
pub struct ImportanceSummary {
    /// Non-degenerate samples kept.
    pub num_samples: usize,
    pub ess: f64,
    pub mean_estimate: SymmetricMatrix,
    pub inv_mean_estimate: SymmetricMatrix,
    pub log_weight_max: f64,
    pub degenerate_count: usize,
}

/// Weights `exp(ℓᵢ − max ℓ)` normalized to sum to one. Non-finite log
/// weights get weight zero.
pub fn normalized_weights(log_weights: &[f64]) -> Result<Vec<f64>> {
    let max = log_weights
        .iter()
        .copied()
        .filter(|l| l.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::AllWeightsDegenerate {
            count: log_weights.len(),
        });
    }
    let raw: Vec<f64> = log_weights
        .iter()
        .map(|&l| if l.is_finite() { (l - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// `(Σwᵢ)² / Σwᵢ²`, evaluated after subtracting the largest log weight.
pub fn ess(log_weights: &[f64]) -> Result<f64> {
    let w = normalized_weights(log_weights)?;
    let finite = log_weights.iter().filter(|l| l.is_finite()).count() as f64;
    let sum_sq: f64 = w.iter().map(|x| x * x).sum();
    Ok((1.0 / sum_sq).clamp(1.0, finite))
}

/// Self-normalized weighted average of `f` over the samples.
pub fn estimate_functional<F>(samples: &[WeightedSpdSample], f: F) -> Result<SymmetricMatrix>
where
    F: Fn(&SpdDraw) -> SymmetricMatrix,
{
    let log_w: Vec<f64> = samples.iter().map(|s| s.log_weight).collect();
    let w = normalized_weights(&log_w)?;
    let n = samples[0].draw.dim();
    let mut acc = DMatrix::<f64>::zeros(n, n);
    for (s, wi) in samples.iter().zip(&w) {
        if *wi > 0.0 {
            acc += f(&s.draw).as_matrix() * *wi;
        }
    }
    SymmetricMatrix::symmetrize(&acc)
}

/// Reduces a sample set to its diagnostics and first-moment estimates.
pub fn summarize(samples: &[WeightedSpdSample], degenerate_count: usize) -> Result<ImportanceSummary> {
    if samples.is_empty() {
        return Err(Error::AllWeightsDegenerate {
            count: degenerate_count,
        });
    }
    let log_w: Vec<f64> = samples.iter().map(|s| s.log_weight).collect();
    Ok(ImportanceSummary {
        num_samples: samples.len(),
        ess: ess(&log_w)?,
        mean_estimate: estimate_functional(samples, |d| d.lambda.as_symmetric().clone())?,
        inv_mean_estimate: estimate_functional(samples, |d| d.inv_lambda.as_symmetric().clone())?,
        log_weight_max: log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        degenerate_count,
    })
}

/// Draws `s` samples from `q` and weights them against `p`.
///
/// Sample `i` uses its own random stream derived from one seed taken from
/// `rng`, so the result does not depend on the rayon pool size. Draws whose
/// log weight is not finite are dropped and counted.
pub fn importance_sample(
    p: &MgigParams,
    q: &ProposalDistribution,
    s: usize,
    rng: &mut SeededRng,
) -> Result<(Vec<WeightedSpdSample>, ImportanceSummary)> {
    if s == 0 {
        return Err(Error::InvalidInput("sample count must be at least 1".into()));
    }
    if q.dim() != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            found: q.dim(),
        });
    }
    let base = rng.next_seed();
    let drawn: Vec<Option<WeightedSpdSample>> = (0..s as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = SeededRng::derive(base, &[i]);
            let draw = q.sample(&mut r).ok()?;
            let log_weight = p.log_density_unnorm(&draw).ok()? - q.log_density_unnorm(&draw);
            log_weight.is_finite().then_some(WeightedSpdSample { draw, log_weight })
        })
        .collect();
    let degenerate = drawn.iter().filter(|d| d.is_none()).count();
    let samples: Vec<WeightedSpdSample> = drawn.into_iter().flatten().collect();
    let summary = summarize(&samples, degenerate)?;
    Ok((samples, summary))
}

/// Log weight for a mode-matched Wishart proposal `W(Σ, ρ)` in the reduced
/// form `(ν − ρ/2)·log|Λ| − ½Tr(ΨΛ⁻¹ + (Φ − Σ⁻¹)Λ)`.
pub fn mode_matched_wishart_log_weight(p: &MgigParams, q: &WishartParams, draw: &SpdDraw) -> Result<f64> {
    let sigma_inv = q.scale().inverse()?;
    let tilt = p.phi().as_symmetric().add(&sigma_inv.as_symmetric().scaled(-1.0));
    Ok((p.nu() - 0.5 * q.dof()) * draw.log_det
        - 0.5 * p.psi().as_symmetric().trace_product(draw.inv_lambda.as_symmetric())
        - 0.5 * tilt.trace_product(draw.lambda.as_symmetric()))
}
