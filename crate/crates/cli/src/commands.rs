//! Subcommand implementations. Every command parses and validates all of its
//! inputs before any sampling starts and writes outputs only at the end.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use mgig_core::baselines::{
    bpmf_gibbs, bpmf_predictive_log_density, bpmf_predictive_mean, pmf_map, GibbsOptions, PmfOptions,
};
use mgig_core::cmc::{cmc_predict_full, cmc_predict_mean_sampler, GapFillMethod, SamplerConfig};
use mgig_core::eval::{cv_folds, generate_synthetic, log_loss, percentile_batches, rmse, HeldOutEntry, SyntheticSpec};
use mgig_core::mgig::{
    self, importance_sample, mgig_mode_schur, mgig_unimodality_certificate, MgigParams, ProposalKind,
};
use mgig_core::{ObservedMatrix, PmfHyperParams, SeededRng};

use crate::error::{CliError, CliResult};
use crate::io::{self, DataFormat, Triplet};
use crate::{
    CompleteArgs, EstimateArgs, FormatArg, MethodArg, ModeArgs, ModeMethod, OutputFormat, SyntheticArgs, TargetArgs,
};

fn read_target(t: &TargetArgs) -> CliResult<MgigParams> {
    if !t.nu.is_finite() {
        return Err(CliError::validation("InvalidInput: --nu must be finite"));
    }
    let psi = io::read_spd(&t.psi)?;
    let phi = io::read_spd(&t.phi)?;
    Ok(MgigParams::new(psi, phi, t.nu)?)
}

fn to_json<T: Serialize>(v: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

#[derive(Serialize)]
struct Certificate {
    has_imaginary: bool,
    /// `[re, im]` pairs, sorted.
    eigenvalues: Vec<[f64; 2]>,
}

#[derive(Serialize)]
struct ModeReport {
    dim: usize,
    nu: f64,
    alpha: f64,
    method: &'static str,
    mode: Vec<Vec<f64>>,
    residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    schur_mode: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    schur_residual: Option<f64>,
    /// `‖closed − schur‖_F / ‖closed‖_F`.
    #[serde(skip_serializing_if = "Option::is_none")]
    discrepancy: Option<f64>,
    certificate: Certificate,
}

pub fn mgig_mode(a: ModeArgs) -> CliResult<()> {
    let p = read_target(&a.target)?;
    let (mode, schur, method) = match a.method {
        ModeMethod::Closed => (mgig::mgig_mode(&p)?, None, "closed"),
        ModeMethod::Schur => (mgig_mode_schur(&p)?, None, "schur"),
        ModeMethod::Both => (mgig::mgig_mode(&p)?, Some(mgig_mode_schur(&p)?), "both"),
    };
    let cert = mgig_unimodality_certificate(&p)?;
    let text = match a.format {
        OutputFormat::Csv => io::matrix_csv(mode.as_matrix())?,
        OutputFormat::Json => to_json(&ModeReport {
            dim: p.dim(),
            nu: p.nu(),
            alpha: p.alpha(),
            method,
            mode: io::matrix_rows(mode.as_matrix()),
            residual: p.mode_residual(mode.as_matrix()),
            schur_residual: schur.as_ref().map(|s| p.mode_residual(s.as_matrix())),
            discrepancy: schur
                .as_ref()
                .map(|s| (s.as_matrix() - mode.as_matrix()).norm() / mode.as_matrix().norm()),
            schur_mode: schur.as_ref().map(|s| io::matrix_rows(s.as_matrix())),
            certificate: Certificate {
                has_imaginary: cert.has_imaginary,
                eigenvalues: cert.eigenvalues.iter().map(|z| [z.re, z.im]).collect(),
            },
        })?,
    };
    io::write_text(a.out.as_deref(), &text)?;
    if cert.has_imaginary {
        return Err(CliError::Numerical(
            "NoStabilizingSolution: Hamiltonian reported imaginary eigenvalues".into(),
        ));
    }
    Ok(())
}

#[derive(Serialize)]
struct EstimateReport {
    proposal: String,
    rho: f64,
    samples: usize,
    seed: u64,
    kept: usize,
    degenerate_count: usize,
    ess: f64,
    log_weight_max: f64,
    mean: Vec<Vec<f64>>,
    inv_mean: Vec<Vec<f64>>,
}

pub fn mgig_estimate(a: EstimateArgs) -> CliResult<()> {
    let kind = ProposalKind::from_str(&a.proposal)?;
    if a.samples == 0 {
        return Err(CliError::validation("InvalidInput: --samples must be at least 1"));
    }
    let p = read_target(&a.target)?;
    let q = kind.build(&p, a.rho)?;
    let (_, s) = importance_sample(&p, &q, a.samples, &mut SeededRng::new(a.seed))?;
    let text = to_json(&EstimateReport {
        proposal: kind.to_string(),
        rho: q.dof(),
        samples: a.samples,
        seed: a.seed,
        kept: s.num_samples,
        degenerate_count: s.degenerate_count,
        ess: s.ess,
        log_weight_max: s.log_weight_max,
        mean: io::matrix_rows(s.mean_estimate.as_matrix()),
        inv_mean: io::matrix_rows(s.inv_mean_estimate.as_matrix()),
    })?;
    io::write_text(a.out.as_deref(), &text)
}

/// `synthetic:n=30,m=300,d=5,delta=0.2[,sigma2=..,sigma2_u=..,sigma2_v=..]`.
fn parse_synthetic(spec: &str) -> CliResult<SyntheticSpec> {
    let mut s = SyntheticSpec::default();
    let mut hp = s.hp;
    for kv in spec.split(',').filter(|kv| !kv.is_empty()) {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::validation(format!("InvalidInput: '{kv}' is not key=value")))?;
        let bad = || CliError::validation(format!("InvalidInput: bad value '{v}' for '{k}'"));
        match k.trim() {
            "n" => s.n = v.parse().map_err(|_| bad())?,
            "m" => s.m = v.parse().map_err(|_| bad())?,
            "d" => hp.d = v.parse().map_err(|_| bad())?,
            "delta" => s.delta = v.parse().map_err(|_| bad())?,
            "sigma2" => hp.sigma2 = v.parse().map_err(|_| bad())?,
            "sigma2_u" => hp.sigma2_u = v.parse().map_err(|_| bad())?,
            "sigma2_v" => hp.sigma2_v = v.parse().map_err(|_| bad())?,
            other => return Err(CliError::validation(format!("InvalidInput: unknown key '{other}'"))),
        }
    }
    s.hp = PmfHyperParams::new(hp.sigma2, hp.sigma2_u, hp.sigma2_v, hp.d)?;
    if !(0.0..1.0).contains(&s.delta) || s.n == 0 || s.m == 0 {
        return Err(CliError::validation(format!(
            "InvalidInput: synthetic data needs n, m ≥ 1 and delta in [0, 1), got '{spec}'"
        )));
    }
    Ok(s)
}

fn parse_shape(s: &str) -> CliResult<(usize, usize)> {
    let bad = || CliError::validation(format!("InvalidInput: shape '{s}' is not ROWSxCOLS"));
    let (r, c) = s.split_once('x').ok_or_else(bad)?;
    Ok((
        r.trim().parse().map_err(|_| bad())?,
        c.trim().parse().map_err(|_| bad())?,
    ))
}

struct Fold {
    id: usize,
    train: ObservedMatrix,
    held: Vec<HeldOutEntry>,
}

/// Training/held-out splits. Synthetic data yields independent replicates,
/// each with the generator's own held-out set; file data is split by hashed
/// k-fold cross-validation over its observed entries.
fn build_folds(a: &CompleteArgs) -> CliResult<(Vec<Fold>, bool, String)> {
    if let Some(rest) = a.data.strip_prefix("synthetic:") {
        let spec = parse_synthetic(rest)?;
        if spec.delta == 0.0 {
            return Err(CliError::validation(
                "InvalidInput: delta = 0 leaves nothing to evaluate",
            ));
        }
        let folds = (0..a.folds)
            .map(|k| {
                let d = generate_synthetic(&spec, SeededRng::derive(a.seed, &[0, k as u64]).next_seed())?;
                Ok(Fold {
                    id: k,
                    train: d.observed,
                    held: d.held_out.entries,
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        return Ok((folds, false, a.data.clone()));
    }
    if a.folds < 2 {
        return Err(CliError::validation("InvalidInput: cross-validation needs --folds ≥ 2"));
    }
    let format = match a.format {
        FormatArg::DenseCsv => DataFormat::DenseCsv,
        FormatArg::Triplets => DataFormat::Triplets,
    };
    let shape = a.shape.as_deref().map(parse_shape).transpose()?;
    let x = io::read_observed(Path::new(&a.data), format, shape)?;
    let folds = cv_folds(&x, a.folds, a.seed)?
        .into_iter()
        .map(|set| {
            Ok(Fold {
                id: set.fold_id,
                train: x.hold_out(&set.positions())?,
                held: set.entries,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let label = Path::new(&a.data)
        .file_name()
        .map_or_else(|| a.data.clone(), |f| f.to_string_lossy().into_owned());
    Ok((folds, x.transposed(), label))
}

impl MethodArg {
    fn name(self) -> &'static str {
        match self {
            MethodArg::CmcFull => "cmc-full",
            MethodArg::CmcMean => "cmc-mean",
            MethodArg::Bpmf => "bpmf",
            MethodArg::PmfMap => "pmf-map",
        }
    }
}

struct FoldResult {
    log_densities: Option<Vec<f64>>,
    means: Vec<f64>,
    ess: Option<f64>,
    samples: Option<usize>,
    seconds: f64,
}

struct Settings {
    hp: PmfHyperParams,
    gap: GapFillMethod,
    sampler: SamplerConfig,
    gibbs: GibbsOptions,
}

fn run_fold(method: MethodArg, fold: &Fold, s: &Settings, seed: u64) -> CliResult<FoldResult> {
    let start = Instant::now();
    let mut rng = SeededRng::derive(seed, &[1, fold.id as u64]);
    let (x, held) = (&fold.train, &fold.held[..]);
    let mut out = match method {
        MethodArg::CmcFull | MethodArg::CmcMean => {
            let r = if method == MethodArg::CmcFull {
                cmc_predict_full(x, &s.hp, s.gap, &s.sampler, held, &mut rng)?
            } else {
                cmc_predict_mean_sampler(x, &s.hp, s.gap, &s.sampler, held, &mut rng)?
            };
            FoldResult {
                log_densities: Some(r.log_densities),
                means: r.predicted_means,
                ess: Some(r.summary.ess),
                samples: Some(s.sampler.samples),
                seconds: 0.0,
            }
        }
        MethodArg::Bpmf => {
            let init = pmf_map(x, &s.hp, PmfOptions::default(), &mut rng)?.factors;
            let chain = bpmf_gibbs(x, &s.hp, s.gibbs, rng.next_seed(), init)?;
            FoldResult {
                log_densities: Some(
                    held.iter()
                        .map(|e| bpmf_predictive_log_density(&chain, e.row, e.col, e.value, s.hp.sigma2))
                        .collect(),
                ),
                means: held
                    .iter()
                    .map(|e| bpmf_predictive_mean(&chain, e.row, e.col))
                    .collect(),
                ess: None,
                samples: Some(chain.samples.len()),
                seconds: 0.0,
            }
        }
        MethodArg::PmfMap => {
            let f = pmf_map(x, &s.hp, PmfOptions::default(), &mut rng)?.factors;
            FoldResult {
                log_densities: None,
                means: held.iter().map(|e| f.predict(e.row, e.col)).collect(),
                ess: None,
                samples: None,
                seconds: 0.0,
            }
        }
    };
    out.seconds = start.elapsed().as_secs_f64();
    Ok(out)
}

const ENTRY_HEADER: &[&str] = &[
    "method",
    "fold",
    "row",
    "col",
    "truth",
    "predicted_mean",
    "log_density",
    "loss",
];
const PERCENTILE_HEADER: &[&str] = &["method", "batch", "percent", "mean_loss", "non_finite"];
const SUMMARY_HEADER: &[&str] = &[
    "method",
    "dataset",
    "fold",
    "seed",
    "samples",
    "ess",
    "ll",
    "rmse",
    "held_out",
    "non_finite",
];
const TIMING_HEADER: &[&str] = &["method", "fold", "wall_seconds"];
const TRIPLET_HEADER: &[&str] = &["row", "col", "value"];

#[derive(Serialize)]
struct EntryRow {
    method: &'static str,
    fold: usize,
    row: usize,
    col: usize,
    truth: f64,
    predicted_mean: f64,
    log_density: Option<f64>,
    loss: Option<f64>,
}

#[derive(Serialize)]
struct PercentileRow {
    method: &'static str,
    batch: usize,
    percent: usize,
    mean_loss: f64,
    non_finite: usize,
}

#[derive(Serialize)]
struct SummaryRow {
    method: &'static str,
    dataset: String,
    fold: String,
    seed: u64,
    samples: Option<usize>,
    ess: Option<f64>,
    /// Mean loss over finite entries, or `n/a` for point estimates.
    ll: String,
    rmse: f64,
    held_out: usize,
    non_finite: usize,
}

#[derive(Serialize)]
struct TimingRow {
    method: &'static str,
    fold: usize,
    wall_seconds: f64,
}

pub fn complete(a: CompleteArgs) -> CliResult<()> {
    let hp = PmfHyperParams::new(a.sigma2, a.sigma2_u, a.sigma2_v, a.rank)?;
    let settings = Settings {
        hp,
        gap: GapFillMethod::from_str(&a.gap_fill)?,
        sampler: SamplerConfig {
            samples: a.samples,
            proposal: ProposalKind::from_str(&a.proposal)?,
            rho: a.rho,
            include_sigma2_v: !a.bare_lambda,
        },
        gibbs: GibbsOptions::keeping(a.gibbs_kept, a.burn_in, a.lag)?,
    };
    if a.samples == 0 || a.gibbs_kept == 0 {
        return Err(CliError::validation("InvalidInput: sample counts must be at least 1"));
    }
    if a.folds == 0 {
        return Err(CliError::validation("InvalidInput: --folds must be at least 1"));
    }
    let (folds, transposed, dataset) = build_folds(&a)?;
    if folds.iter().any(|f| f.held.is_empty()) {
        return Err(CliError::validation("InvalidInput: a fold has no held-out entries"));
    }
    let mut methods = a.method.clone();
    methods.dedup();
    let out_dir = io::resolve_out_dir(a.out_dir.clone())?;

    let (mut entries, mut percentiles, mut summary, mut timing) = (vec![], vec![], vec![], vec![]);
    for &method in &methods {
        let name = method.name();
        let mut pooled_ld = Vec::new();
        let (mut pooled_mean, mut pooled_truth) = (Vec::new(), Vec::new());
        let mut ess_values = Vec::new();
        let mut samples = None;
        for fold in &folds {
            let r = run_fold(method, fold, &settings, a.seed)?;
            timing.push(TimingRow {
                method: name,
                fold: fold.id,
                wall_seconds: r.seconds,
            });
            let truths: Vec<f64> = fold.held.iter().map(|e| e.value).collect();
            for (k, e) in fold.held.iter().enumerate() {
                let ld = r.log_densities.as_ref().map(|l| l[k]);
                let (row, col) = if transposed { (e.col, e.row) } else { (e.row, e.col) };
                entries.push(EntryRow {
                    method: name,
                    fold: fold.id,
                    row,
                    col,
                    truth: e.value,
                    predicted_mean: r.means[k],
                    log_density: ld,
                    loss: ld.map(|l| -l),
                });
            }
            let (ll, non_finite) = match &r.log_densities {
                Some(l) => {
                    let ll = log_loss(l)?;
                    (ll.value.to_string(), ll.non_finite)
                }
                None => ("n/a".to_string(), 0),
            };
            summary.push(SummaryRow {
                method: name,
                dataset: dataset.clone(),
                fold: fold.id.to_string(),
                seed: a.seed,
                samples: r.samples,
                ess: r.ess,
                ll,
                rmse: rmse(&r.means, &truths)?,
                held_out: truths.len(),
                non_finite,
            });
            if let Some(l) = r.log_densities {
                pooled_ld.extend(l);
            }
            ess_values.extend(r.ess);
            samples = r.samples;
            pooled_mean.extend(r.means);
            pooled_truth.extend(truths);
        }
        let (ll, non_finite) = if pooled_ld.is_empty() {
            ("n/a".to_string(), 0)
        } else {
            let losses: Vec<f64> = pooled_ld.iter().map(|l| -l).collect();
            let rep = percentile_batches(&losses)?;
            for (k, b) in rep.batch_means.iter().enumerate() {
                percentiles.push(PercentileRow {
                    method: name,
                    batch: k + 1,
                    percent: 10 * (k + 1),
                    mean_loss: *b,
                    non_finite: rep.non_finite,
                });
            }
            let ll = log_loss(&pooled_ld)?;
            (ll.value.to_string(), ll.non_finite)
        };
        summary.push(SummaryRow {
            method: name,
            dataset: dataset.clone(),
            fold: "all".into(),
            seed: a.seed,
            samples,
            ess: (!ess_values.is_empty()).then(|| ess_values.iter().sum::<f64>() / ess_values.len() as f64),
            ll,
            rmse: rmse(&pooled_mean, &pooled_truth)?,
            held_out: pooled_truth.len(),
            non_finite,
        });
    }
    io::write_records(&out_dir.join("entries.csv"), ENTRY_HEADER, &entries)?;
    io::write_records(&out_dir.join("percentiles.csv"), PERCENTILE_HEADER, &percentiles)?;
    io::write_records(&out_dir.join("summary.csv"), SUMMARY_HEADER, &summary)?;
    io::write_records(&out_dir.join("timing.csv"), TIMING_HEADER, &timing)?;
    Ok(())
}

#[derive(Serialize)]
struct Provenance {
    n: usize,
    m: usize,
    rank: usize,
    sigma2: f64,
    sigma2_u: f64,
    sigma2_v: f64,
    delta: f64,
    seed: u64,
    observed: usize,
    held_out: usize,
    regenerated_columns: usize,
}

pub fn gen_synthetic(a: SyntheticArgs) -> CliResult<()> {
    let spec = SyntheticSpec {
        n: a.n,
        m: a.m,
        hp: PmfHyperParams::new(a.sigma2, a.sigma2_u, a.sigma2_v, a.rank)?,
        delta: a.delta,
    };
    let d = generate_synthetic(&spec, a.seed)?;
    let out_dir: PathBuf = io::resolve_out_dir(a.out_dir)?;
    let train: Vec<Triplet> = d
        .observed
        .observed()
        .map(|(row, col, value)| Triplet { row, col, value })
        .collect();
    let held: Vec<Triplet> = d
        .held_out
        .entries
        .iter()
        .map(|e| Triplet {
            row: e.row,
            col: e.col,
            value: e.value,
        })
        .collect();
    io::write_records(&out_dir.join("train.csv"), TRIPLET_HEADER, &train)?;
    io::write_records(&out_dir.join("heldout.csv"), TRIPLET_HEADER, &held)?;
    let prov = Provenance {
        n: a.n,
        m: a.m,
        rank: a.rank,
        sigma2: a.sigma2,
        sigma2_u: a.sigma2_u,
        sigma2_v: a.sigma2_v,
        delta: a.delta,
        seed: a.seed,
        observed: train.len(),
        held_out: held.len(),
        regenerated_columns: d.regenerated_columns,
    };
    std::fs::write(out_dir.join("provenance.json"), to_json(&prov)?)?;
    Ok(())
}
