//! Log loss, percentile batches, RMSE, cross-validation folds and the
//! synthetic PMF data generator.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::baselines::FactorPair;
use crate::data::{ObservedMatrix, PmfHyperParams};
use crate::error::{Error, Result};
use crate::rng::{stream_key, SeededRng};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// `log Σ exp(xᵢ)` with max subtraction; `−∞` for an empty or all `−∞` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Log density of `N(mean, var)` at `x`.
pub fn normal_log_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (LN_2PI + var.ln() + (x - mean).powi(2) / var)
}

/// A held-out entry and its true value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeldOutEntry {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// Entries withheld from training.
#[derive(Debug, Clone, PartialEq)]
pub struct HeldOutSet {
    pub entries: Vec<HeldOutEntry>,
    pub fold_id: usize,
    pub seed: u64,
    /// Drop probability for generated data; `None` for CV folds.
    pub delta: Option<f64>,
}

impl HeldOutSet {
    pub fn positions(&self) -> Vec<(usize, usize)> {
        self.entries.iter().map(|e| (e.row, e.col)).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Mean negative log density over the finite entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLoss {
    /// `+∞` when no entry is finite.
    pub value: f64,
    pub finite: usize,
    pub non_finite: usize,
}

/// `−(1/T) Σ log q(xᵢ)` over the finite log densities. Non-finite ones are
/// counted, not clipped.
pub fn log_loss(log_densities: &[f64]) -> Result<LogLoss> {
    if log_densities.is_empty() {
        return Err(Error::InvalidInput("log loss needs at least one entry".into()));
    }
    let finite: Vec<f64> = log_densities.iter().copied().filter(|l| l.is_finite()).collect();
    let value = if finite.is_empty() {
        f64::INFINITY
    } else {
        -finite.iter().sum::<f64>() / finite.len() as f64
    };
    Ok(LogLoss {
        value,
        finite: finite.len(),
        non_finite: log_densities.len() - finite.len(),
    })
}

/// Cumulative 10%-step batch means of the per-entry losses sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct PercentileReport {
    /// Batch `k` averages the `⌈(k+1)·T/10⌉` smallest losses.
    pub batch_means: [f64; 10],
    pub overall: f64,
    /// Non-finite losses, excluded from the batches.
    pub non_finite: usize,
}

impl PercentileReport {
    /// Largest batch mean, i.e. the 100% batch.
    pub fn worst(&self) -> f64 {
        self.batch_means.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn percentile_batches(losses: &[f64]) -> Result<PercentileReport> {
    let mut finite: Vec<f64> = losses.iter().copied().filter(|l| l.is_finite()).collect();
    let non_finite = losses.len() - finite.len();
    if finite.is_empty() {
        return Err(Error::InvalidInput("no finite losses to batch".into()));
    }
    finite.sort_by(f64::total_cmp);
    let t = finite.len();
    let mut prefix = Vec::with_capacity(t + 1);
    prefix.push(0.0);
    for l in &finite {
        prefix.push(prefix.last().unwrap() + l);
    }
    let mut batch_means = [0.0; 10];
    for (k, b) in batch_means.iter_mut().enumerate() {
        let count = ((k + 1) * t).div_ceil(10).max(1);
        *b = prefix[count] / count as f64;
    }
    Ok(PercentileReport {
        batch_means,
        overall: prefix[t] / t as f64,
        non_finite,
    })
}

pub fn rmse(predicted: &[f64], truth: &[f64]) -> Result<f64> {
    if predicted.len() != truth.len() || predicted.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: predicted.len(),
        });
    }
    let sse: f64 = predicted.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum();
    Ok((sse / truth.len() as f64).sqrt())
}

/// Fold of an entry, from a hash of `(seed, row, col)`.
pub fn fold_of(row: usize, col: usize, seed: u64, folds: usize) -> usize {
    (stream_key(seed, &[row as u64, col as u64]) % folds as u64) as usize
}

/// Splits the observed entries into `folds` disjoint held-out sets.
pub fn cv_folds(x: &ObservedMatrix, folds: usize, seed: u64) -> Result<Vec<HeldOutSet>> {
    if folds < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 folds, got {folds}")));
    }
    let mut sets: Vec<HeldOutSet> = (0..folds)
        .map(|fold_id| HeldOutSet {
            entries: Vec::new(),
            fold_id,
            seed,
            delta: None,
        })
        .collect();
    for (row, col, value) in x.observed() {
        sets[fold_of(row, col, seed, folds)]
            .entries
            .push(HeldOutEntry { row, col, value });
    }
    Ok(sets)
}

/// Sizes and variances for [`generate_synthetic`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub m: usize,
    pub hp: PmfHyperParams,
    pub delta: f64,
}

impl Default for SyntheticSpec {
    /// `N = 100`, `M = 6000`, `D = 5`, `σ_u² = σ_v² = 0.05`, `σ² = 0.01`,
    /// `δ = 0.1`.
    fn default() -> Self {
        Self {
            n: 100,
            m: 6000,
            hp: PmfHyperParams::default(),
            delta: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub observed: ObservedMatrix,
    pub held_out: HeldOutSet,
    pub truth: FactorPair,
    /// The complete noisy matrix before dropping.
    pub full: DMatrix<f64>,
    /// Columns whose mask was redrawn because every entry was dropped.
    pub regenerated_columns: usize,
}

/// Draws `U`, `V` from their priors, `X = UVᵀ + noise`, and drops each entry
/// independently with probability `δ`. Dropped entries form the held-out set.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticData> {
    if !(0.0..1.0).contains(&spec.delta) {
        return Err(Error::InvalidInput(format!(
            "delta must lie in [0, 1), got {}",
            spec.delta
        )));
    }
    if spec.n == 0 || spec.m == 0 {
        return Err(Error::InvalidInput("matrix dimensions must be positive".into()));
    }
    let hp = spec.hp;
    let gauss = |var: f64| Normal::new(0.0, var.sqrt()).expect("positive variance");
    let mut rng_u = SeededRng::derive(seed, &[0]);
    let mut rng_v = SeededRng::derive(seed, &[1]);
    let mut rng_e = SeededRng::derive(seed, &[2]);
    let mut rng_mask = SeededRng::derive(seed, &[3]);
    let (gu, gv, ge) = (gauss(hp.sigma2_u), gauss(hp.sigma2_v), gauss(hp.sigma2));
    let u = DMatrix::from_fn(spec.n, hp.d, |_, _| gu.sample(&mut rng_u));
    let v = DMatrix::from_fn(spec.m, hp.d, |_, _| gv.sample(&mut rng_v));
    let mut full = &u * v.transpose();
    full.iter_mut().for_each(|x| *x += ge.sample(&mut rng_e));

    let mut mask = DMatrix::from_element(spec.n, spec.m, true);
    let mut regenerated = 0;
    for c in 0..spec.m {
        let mut redrawn = false;
        loop {
            for r in 0..spec.n {
                mask[(r, c)] = !rng_mask.random_bool(spec.delta);
            }
            if mask.column(c).iter().any(|&m| m) {
                break;
            }
            redrawn = true;
        }
        regenerated += usize::from(redrawn);
    }
    let entries = (0..spec.m)
        .flat_map(|c| (0..spec.n).map(move |r| (r, c)))
        .filter(|&(r, c)| !mask[(r, c)])
        .map(|(row, col)| HeldOutEntry {
            row,
            col,
            value: full[(row, col)],
        })
        .collect();
    Ok(SyntheticData {
        observed: ObservedMatrix::new(full.clone(), mask)?,
        held_out: HeldOutSet {
            entries,
            fold_id: 0,
            seed,
            delta: Some(spec.delta),
        },
        truth: FactorPair { u, v },
        full,
        regenerated_columns: regenerated,
    })
}
