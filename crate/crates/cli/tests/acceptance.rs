//! Acceptance gate: one PASS/FAIL line per criterion with pinned tolerances.
//!
//! Runs as a plain binary (`harness = false`) so the report is always printed.
//! Criteria listed in `EXPECTED_FAILURES` are reported but do not fail the
//! run; any other failure exits nonzero.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::HashMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

use common::{gig_moment, ks_p_value, ks_statistic, random_spd, rel_err, scalar};
use mgig_core::baselines::gibbs_sweep_u;
use mgig_core::cmc::{build_collapsed_posterior, predict_column, GapFillMethod};
use mgig_core::linalg::{cholesky, spd_sqrt, sym_eigen, SymmetricMatrix};
use mgig_core::mgig::{
    build_baseline_proposal, importance_sample, mgig_mode, mgig_mode_schur, mgig_unimodality_certificate, BaselineKind,
    MgigParams, ProposalKind,
};
use mgig_core::wishart::{SpdDraw, WishartParams};
use mgig_core::{ObservedMatrix, PmfHyperParams, SeededRng};

/// End-to-end desk-scale comparison; see the project notes for the analysis.
const EXPECTED_FAILURES: &[usize] = &[8];

const MODE_RESIDUAL_TOL: f64 = 1e-10;
const SOLVER_AGREEMENT_TOL: f64 = 1e-8;
const SCALAR_MODE_TOL: f64 = 1e-10;
const SPECTRUM_TOL: f64 = 1e-8;
const ORACLE_REL_TOL: f64 = 0.02;
const ESS_RATIO: f64 = 5.0;
const IDENTITY_TOL: f64 = 1e-8;
const MC_SE: f64 = 3.0;
const CONDITIONING_TOL: f64 = 1e-9;
const WISHART_SE: f64 = 4.0;
const KS_P: f64 = 0.01;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn mode_cases() -> Vec<MgigParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    (0..200)
        .map(|_| {
            let n = rng.random_range(1..=10);
            let nu = rng.random_range(-15.0..=15.0);
            let psi = random_spd(n, &mut rng);
            let phi = random_spd(n, &mut rng);
            MgigParams::new(psi, phi, nu).unwrap()
        })
        .collect()
}

fn criterion_1() -> Outcome {
    let (mut worst_res, mut worst_agree, mut not_spd) = (0f64, 0f64, 0);
    for p in mode_cases() {
        let mode = mgig_mode(&p).unwrap();
        worst_res = worst_res.max(p.mode_residual(mode.as_matrix()));
        if sym_eigen(mode.as_symmetric()).unwrap().values[0] <= 0.0 {
            not_spd += 1;
        }
        let schur = mgig_mode_schur(&p).unwrap();
        worst_agree = worst_agree.max(rel_err(schur.as_matrix(), mode.as_matrix()));
    }
    outcome(
        worst_res < MODE_RESIDUAL_TOL && worst_agree < SOLVER_AGREEMENT_TOL && not_spd == 0,
        format!("200 cases: max residual {worst_res:.2e}, max solver gap {worst_agree:.2e}, non-SPD {not_spd}"),
    )
}

fn criterion_2() -> Outcome {
    let p = MgigParams::new(scalar(35.0), scalar(10.0), 10.0).unwrap();
    let got = mgig_mode(&p).unwrap().as_matrix()[(0, 0)];
    let want = (9.0 + 431f64.sqrt()) / 10.0;
    let err = (got - want).abs();
    outcome(
        err < SCALAR_MODE_TOL,
        format!("mode {got:.12}, expected {want:.12}, error {err:.2e}"),
    )
}

fn criterion_3() -> Outcome {
    let (mut worst, mut imaginary) = (0f64, 0);
    for p in mode_cases() {
        let half = spd_sqrt(p.phi()).unwrap();
        let s = SymmetricMatrix::symmetrize(&(half.as_matrix() * p.psi().as_matrix() * half.as_matrix())).unwrap();
        let a = p.alpha();
        let mut expected: Vec<f64> = sym_eigen(&s)
            .unwrap()
            .values
            .iter()
            .flat_map(|l| {
                let r = (l + a * a).sqrt();
                [r, -r]
            })
            .collect();
        expected.sort_by(f64::total_cmp);
        let cert = mgig_unimodality_certificate(&p).unwrap();
        if cert.has_imaginary {
            imaginary += 1;
        }
        let mut got: Vec<f64> = cert.eigenvalues.iter().map(|z| z.re).collect();
        got.sort_by(f64::total_cmp);
        let scale = expected.last().unwrap().abs().max(1.0);
        for (g, e) in got.iter().zip(&expected) {
            worst = worst.max((g - e).abs() / scale);
        }
        for z in &cert.eigenvalues {
            worst = worst.max(z.im.abs() / scale);
        }
    }
    outcome(
        worst < SPECTRUM_TOL && imaginary == 0,
        format!("200 cases: max eigenvalue error {worst:.2e}, imaginary certificates {imaginary}"),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst = 0f64;
    for t in 0..20u64 {
        let psi = 10f64.powf(rng.random_range(-1.0..2.0));
        let phi = 10f64.powf(rng.random_range(-1.0..2.0));
        let nu = rng.random_range(-15.0..15.0);
        let p = MgigParams::new(scalar(psi), scalar(phi), nu).unwrap();
        let q = ProposalKind::ModeWishart.build(&p, None).unwrap();
        let (_, s) = importance_sample(&p, &q, 50_000, &mut SeededRng::new(t)).unwrap();
        let m1 = gig_moment(psi, phi, nu, 1.0);
        let m_inv = gig_moment(psi, phi, nu, -1.0);
        worst = worst
            .max((s.mean_estimate.get(0, 0) - m1).abs() / m1)
            .max((s.inv_mean_estimate.get(0, 0) - m_inv).abs() / m_inv);
    }
    outcome(
        worst < ORACLE_REL_TOL,
        format!("20 targets, S=50000: max relative error {:.2}%", 100.0 * worst),
    )
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        0.5 * (xs[k / 2 - 1] + xs[k / 2])
    }
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let (mut matched, mut baseline) = (Vec::new(), Vec::new());
    while matched.len() < 50 {
        let nu = rng.random_range(-15.0..15.0);
        let scaled = |rng: &mut ChaCha8Rng| {
            let s = 10f64.powf(rng.random_range(-1.0..2.0));
            random_spd(2, rng).scaled(s).unwrap()
        };
        let psi = scaled(&mut rng);
        let phi = scaled(&mut rng);
        let p = MgigParams::new(psi, phi, nu).unwrap();
        let kind = if 2.0 * nu > 3.0 {
            BaselineKind::WishartFactor
        } else if -2.0 * nu > 1.0 {
            BaselineKind::IwFactor
        } else {
            continue;
        };
        let base = build_baseline_proposal(&p, kind).unwrap();
        let mode = mgig_mode(&p).unwrap();
        if rel_err(base.mode().unwrap().as_matrix(), mode.as_matrix()) < 0.5 {
            continue;
        }
        let q = ProposalKind::ModeWishart.build(&p, None).unwrap();
        let seed = rng.random();
        matched.push(
            importance_sample(&p, &q, 1000, &mut SeededRng::new(seed))
                .unwrap()
                .1
                .ess,
        );
        baseline.push(
            importance_sample(&p, &base, 1000, &mut SeededRng::new(seed))
                .unwrap()
                .1
                .ess,
        );
    }
    let (m, b) = (median(matched), median(baseline));
    outcome(
        m >= ESS_RATIO * b,
        format!(
            "50 displaced targets: median ESS {m:.1} (mode-matched) vs {b:.1} (baseline), ratio {:.1}",
            m / b
        ),
    )
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, sd: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| sd * rng.sample::<f64, _>(StandardNormal))
}

fn log_gauss_columns(x: &DMatrix<f64>, cov: &DMatrix<f64>) -> f64 {
    let n = cov.nrows();
    let chol = cov.clone().cholesky().unwrap();
    let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let quad = (x.transpose() * chol.solve(x)).trace();
    -0.5 * (x.ncols() as f64 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + log_det) + quad)
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let hp = PmfHyperParams::new(0.3, 0.7, 1.6, 2).unwrap();
    let raw = GapFillMethod::ZeroPad { center: false };
    let mut spread = 0f64;
    for _ in 0..10 {
        let x = gaussian_matrix(&mut rng, 3, 8, 1.0);
        let post = build_collapsed_posterior(
            &ObservedMatrix::dense(x.clone()).unwrap(),
            &hp,
            raw,
            &mut SeededRng::new(0),
        )
        .unwrap();
        let xxt = &x * x.transpose();
        let diffs: Vec<f64> = (0..10)
            .map(|_| {
                let lam = SpdDraw::from_spd(random_spd(3, &mut rng)).unwrap();
                let direct = -4.0 * lam.log_det
                    - 0.5 * (lam.inv_lambda.as_matrix() * &xxt).trace() / hp.sigma2_v
                    - 0.5 * lam.lambda.as_matrix().trace() / hp.sigma2_u;
                post.mgig.log_density_unnorm(&lam).unwrap() - direct
            })
            .collect();
        spread = spread.max(diffs.iter().map(|d| (d - diffs[0]).abs()).fold(0.0, f64::max));
    }

    // V-marginalization by Monte Carlo against the Gaussian column likelihood
    let (n, m, d) = (3, 6, 2);
    let (s2, su2, sv2): (f64, f64, f64) = (2.0, 1.0, 0.3);
    let mut worst_z = 0f64;
    for _ in 0..5 {
        let u = gaussian_matrix(&mut rng, n, d, su2.sqrt());
        let v_true = gaussian_matrix(&mut rng, m, d, sv2.sqrt());
        let x = &u * v_true.transpose() + gaussian_matrix(&mut rng, n, m, s2.sqrt());
        let cov = (&u * u.transpose() + DMatrix::identity(n, n) * (s2 / sv2)) * sv2;
        let exact = log_gauss_columns(&x, &cov).exp();
        let draws = 100_000;
        let noise = DMatrix::identity(n, n) * s2;
        let lik: Vec<f64> = (0..draws)
            .map(|_| {
                let v = gaussian_matrix(&mut rng, m, d, sv2.sqrt());
                log_gauss_columns(&(&x - &u * v.transpose()), &noise).exp()
            })
            .collect();
        let mean = lik.iter().sum::<f64>() / draws as f64;
        let sd = (lik.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (draws - 1) as f64).sqrt();
        worst_z = worst_z.max((mean - exact).abs() / (sd / (draws as f64).sqrt()));
    }
    outcome(
        spread < IDENTITY_TOL && worst_z < MC_SE,
        format!("identity spread {spread:.2e} over 10x10; MC marginal worst |z| {worst_z:.2} at 1e5 draws"),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst = 0f64;
    for _ in 0..100 {
        let n = rng.random_range(2..=10);
        let lam = random_spd(n, &mut rng);
        let scale = rng.random_range(0.1..3.0);
        let mut obs: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.5)).collect();
        if obs.is_empty() {
            obs.push(0);
        }
        if obs.len() == n {
            obs.pop();
        }
        let x_o = DVector::from_fn(obs.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let entries: Vec<(usize, f64)> = obs.iter().copied().zip(x_o.iter().copied()).collect();
        let p = predict_column(&lam, 0, &entries, scale).unwrap();

        // joint Gaussian conditioning through the full inverse
        let c = lam.as_matrix() * scale;
        let k = c.clone().try_inverse().unwrap();
        let mis: Vec<usize> = (0..n).filter(|i| !obs.contains(i)).collect();
        let k_mm = DMatrix::from_fn(mis.len(), mis.len(), |i, j| k[(mis[i], mis[j])]);
        let k_mo = DMatrix::from_fn(mis.len(), obs.len(), |i, j| k[(mis[i], obs[j])]);
        let cov = k_mm.try_inverse().unwrap();
        let mean = -(&cov * k_mo * &x_o);
        worst = worst
            .max((&p.mean - mean).norm() / (1.0 + p.mean.norm()))
            .max((&p.covariance - cov).norm() / p.covariance.norm());
    }
    outcome(
        worst < CONDITIONING_TOL,
        format!("100 cases: max relative deviation {worst:.2e}"),
    )
}

fn criterion_9() -> Outcome {
    let draws = 100_000;
    let sigma = cholesky(
        &SymmetricMatrix::from_upper(DMatrix::from_row_slice(
            3,
            3,
            &[2.0, 0.5, -0.3, 0.0, 1.0, 0.2, 0.0, 0.0, 0.7],
        ))
        .unwrap(),
    )
    .unwrap();
    let rho = 6.5;
    let w = WishartParams::new(sigma.clone(), rho).unwrap();
    let mut rng = SeededRng::new(909);
    let mut sum = DMatrix::zeros(3, 3);
    for _ in 0..draws {
        sum += w.sample(&mut rng).unwrap().lambda.as_matrix();
    }
    let mean = sum / draws as f64;
    let s = sigma.as_matrix();
    let mut worst_z = 0f64;
    for i in 0..3 {
        for j in 0..3 {
            // Var W_ij = ρ(Σ_ij² + Σ_iiΣ_jj)
            let se = (rho * (s[(i, j)].powi(2) + s[(i, i)] * s[(j, j)]) / draws as f64).sqrt();
            worst_z = worst_z.max((mean[(i, j)] - rho * s[(i, j)]).abs() / se);
        }
    }

    let x = ObservedMatrix::dense(DMatrix::from_row_slice(2, 2, &[0.9, -0.4, 0.3, 1.2])).unwrap();
    let hp = PmfHyperParams::new(0.5, 2.0, 1.0, 1).unwrap();
    let v = DMatrix::from_column_slice(2, 1, &[0.7, -1.3]);
    let precision = (0.49 + 1.69) / 0.5 + 1.0 / 2.0;
    let cond_mean = (0.9 * 0.7 + -0.4 * -1.3) / 0.5 / precision;
    let exact = Normal::new(cond_mean, precision.recip().sqrt()).unwrap();
    let mut xs: Vec<f64> = (0..10_000u64)
        .map(|it| gibbs_sweep_u(&x, &v, &hp, 919, it).unwrap()[(0, 0)])
        .collect();
    let p = ks_p_value(ks_statistic(&mut xs, |t| exact.cdf(t)), xs.len());
    outcome(
        worst_z < WISHART_SE && p > KS_P,
        format!("Wishart mean worst |z| {worst_z:.2} at 1e5 draws; Gibbs conditional KS p {p:.3}"),
    )
}

type Criterion = (usize, &'static str, fn() -> Outcome);

fn mgig(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_mgig"))
        .args(args)
        .env_remove("MGIG_OUT_DIR")
        .output()
        .expect("spawn mgig");
    assert!(
        out.status.success(),
        "mgig {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read_table(path: &Path) -> Vec<HashMap<String, String>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let headers = rdr.headers().unwrap().clone();
    rdr.records()
        .map(|r| {
            headers
                .iter()
                .map(String::from)
                .zip(r.unwrap().iter().map(String::from))
                .collect()
        })
        .collect()
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    mgig(&[
        "complete",
        "--data",
        "synthetic:n=30,m=300,d=5,delta=0.2",
        "--method",
        "cmc-mean,bpmf",
        "--samples",
        "1000",
        "--gibbs-kept",
        "1000",
        "--folds",
        "5",
        "--seed",
        "2024",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    let summary = read_table(&dir.path().join("summary.csv"));
    let ll = |m: &str| -> f64 {
        summary.iter().find(|r| r["method"] == m && r["fold"] == "all").unwrap()["ll"]
            .parse()
            .unwrap()
    };
    let percentiles = read_table(&dir.path().join("percentiles.csv"));
    let worst = |m: &str| -> f64 {
        percentiles
            .iter()
            .filter(|r| r["method"] == m)
            .map(|r| r["mean_loss"].parse::<f64>().unwrap())
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let (cmc, bpmf) = (ll("cmc-mean"), ll("bpmf"));
    let (wc, wb) = (worst("cmc-mean"), worst("bpmf"));
    outcome(
        cmc <= bpmf && wc <= wb,
        format!("mean held-out loss cmc-mean {cmc:.4} vs bpmf {bpmf:.4}; worst batch {wc:.4} vs {wb:.4}"),
    )
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let psi = dir.path().join("psi.csv");
    let phi = dir.path().join("phi.csv");
    std::fs::write(&psi, "2,0.5\n0.5,1\n").unwrap();
    std::fs::write(&phi, "1,0\n0,3\n").unwrap();
    let (psi, phi) = (psi.to_str().unwrap().to_owned(), phi.to_str().unwrap().to_owned());

    let mut mismatches = Vec::new();
    let mut runs = 0;
    for (proposal, nu) in [
        ("mode-w", "2.5"),
        ("mode-iw", "2.5"),
        ("base-w", "2.5"),
        ("base-iw", "-2.5"),
    ] {
        let outputs: Vec<Vec<u8>> = ["1", "1", "4"]
            .iter()
            .map(|w| {
                mgig(&[
                    "--workers",
                    w,
                    "mgig-estimate",
                    "--psi",
                    &psi,
                    "--phi",
                    &phi,
                    "--nu",
                    nu,
                    "--samples",
                    "2000",
                    "--proposal",
                    proposal,
                    "--seed",
                    "31",
                ])
                .stdout
            })
            .collect();
        runs += 3;
        if outputs.windows(2).any(|w| w[0] != w[1]) {
            mismatches.push(format!("mgig-estimate {proposal}"));
        }
    }

    let file_commands: [(&str, &[&str], &[&str]); 3] = [
        (
            "complete synthetic",
            &[
                "complete",
                "--data",
                "synthetic:n=10,m=60,d=3,delta=0.2",
                "--method",
                "cmc-full,cmc-mean,bpmf,pmf-map",
                "--samples",
                "300",
                "--gibbs-kept",
                "100",
                "--burn-in",
                "50",
                "--lag",
                "2",
                "--folds",
                "2",
                "--seed",
                "32",
            ],
            &["entries.csv", "percentiles.csv", "summary.csv"],
        ),
        (
            "complete gap-fill pmf",
            &[
                "complete",
                "--data",
                "synthetic:n=8,m=40,d=2,delta=0.3",
                "--method",
                "cmc-full",
                "--gap-fill",
                "pmf",
                "--samples",
                "200",
                "--folds",
                "2",
                "--seed",
                "33",
            ],
            &["entries.csv", "percentiles.csv", "summary.csv"],
        ),
        (
            "gen-synthetic",
            &[
                "gen-synthetic",
                "--n",
                "12",
                "--m",
                "50",
                "--delta",
                "0.2",
                "--seed",
                "34",
            ],
            &["train.csv", "heldout.csv", "provenance.json"],
        ),
    ];
    for (label, args, files) in file_commands {
        let contents: Vec<Vec<Vec<u8>>> = ["1", "1", "4"]
            .iter()
            .enumerate()
            .map(|(k, w)| {
                let out = dir.path().join(format!("{}-{k}", label.replace(' ', "-")));
                let mut full = vec!["--workers", w];
                full.extend_from_slice(args);
                full.extend_from_slice(&["--out-dir", out.to_str().unwrap()]);
                mgig(&full);
                files.iter().map(|f| std::fs::read(out.join(f)).unwrap()).collect()
            })
            .collect();
        runs += 3;
        if contents.windows(2).any(|w| w[0] != w[1]) {
            mismatches.push(label.to_string());
        }
    }
    outcome(
        mismatches.is_empty(),
        format!("{runs} runs over workers {{1, 1, 4}}: mismatched {mismatches:?}"),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "mode and Riccati correctness", criterion_1),
        (2, "scalar mode example", criterion_2),
        (3, "unimodality certificate", criterion_3),
        (4, "estimator accuracy against quadrature", criterion_4),
        (5, "ESS of mode-matched proposals", criterion_5),
        (6, "collapsed posterior identity", criterion_6),
        (7, "conditional Gaussian prediction", criterion_7),
        (8, "desk-scale CMC vs BPMF", criterion_8),
        (9, "sampler statistics", criterion_9),
        (10, "determinism across runs and workers", criterion_10),
    ];
    let mut unexpected = Vec::new();
    for (id, name, run) in criteria {
        let start = Instant::now();
        let o = run();
        let secs = start.elapsed().as_secs_f64();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        let note = match (o.pass, EXPECTED_FAILURES.contains(&id)) {
            (false, true) => " (expected)",
            (true, true) => " (expected failure now passes)",
            _ => "",
        };
        println!("{tag} criterion {id:>2}: {name}: {} [{secs:.1}s]{note}", o.detail);
        if !o.pass && !EXPECTED_FAILURES.contains(&id) {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
