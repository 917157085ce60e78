//! Test-only oracles: adaptive quadrature, a Kolmogorov–Smirnov p-value and
//! random SPD generators. None of this goes through the library's samplers.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use mgig_core::linalg::{cholesky, SpdMatrix, SymmetricMatrix};

/// Adaptive Simpson integration of `f` on `[a, b]` to relative tolerance `rel`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel: f64) -> f64 {
    // coarse pass sets the absolute scale
    let coarse = composite_simpson(f, a, b, 2048);
    let tol = rel * coarse.abs().max(f64::MIN_POSITIVE);
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, 60)
}

fn composite_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// `E[λ^k]` under the 1-D GIG kernel `λ^α exp{−(ψ/λ + φλ)/2}`, integrated in
/// `t = log λ` over `(mode/10³, mode·10³)`.
pub fn gig_moment(psi: f64, phi: f64, nu: f64, k: f64) -> f64 {
    let alpha = nu - 1.0;
    let mode = (alpha + (alpha * alpha + psi * phi).sqrt()) / phi;
    let log_kernel = |l: f64| alpha * l.ln() - 0.5 * (psi / l + phi * l);
    let peak = log_kernel(mode);
    let (a, b) = (mode.ln() - 1000f64.ln(), mode.ln() + 1000f64.ln());
    let num = adaptive_simpson(
        &|t: f64| {
            let l = t.exp();
            (log_kernel(l) - peak + t + k * t).exp()
        },
        a,
        b,
        1e-10,
    );
    let den = adaptive_simpson(
        &|t: f64| {
            let l = t.exp();
            (log_kernel(l) - peak + t).exp()
        },
        a,
        b,
        1e-10,
    );
    num / den
}

/// Asymptotic Kolmogorov–Smirnov p-value for statistic `d` on `n` points.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    let mut sum = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let term = 2.0 * (-1f64).powi(k - 1) * (-2.0 * kf * kf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-14 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// One-sample KS statistic of `xs` against `cdf`.
pub fn ks_statistic(xs: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// `BBᵀ/N + 0.5·I` with `B` standard normal.
pub fn random_spd<R: Rng>(n: usize, rng: &mut R) -> SpdMatrix {
    let b = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut a = &b * b.transpose() / n as f64;
    for i in 0..n {
        a[(i, i)] += 0.5;
    }
    cholesky(&SymmetricMatrix::from_upper(a).unwrap()).unwrap()
}

pub fn scalar(v: f64) -> SpdMatrix {
    cholesky(&SymmetricMatrix::from_diagonal(&[v])).unwrap()
}

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}
