//! Real Schur form with eigenvalue reordering.
//!
//! nalgebra provides the unordered real Schur decomposition; invariant
//! subspaces for a chosen half of the spectrum need the diagonal blocks moved
//! to the front. Adjacent blocks are exchanged with the direct swapping
//! method: solve the small Sylvester equation `A X − X B = C`, then rotate
//! with the orthogonal factor of `[−X; I]`.

use nalgebra::{Complex, DMatrix, DVector, Schur};

use crate::error::{Error, Result};

const SCHUR_MAX_ITERS: usize = 100_000;

/// `M = Q T Qᵀ` with the selected eigenvalues leading the quasi-triangular `T`.
#[derive(Debug, Clone)]
pub struct OrderedSchur {
    pub q: DMatrix<f64>,
    pub t: DMatrix<f64>,
    /// Diagonal block sizes (1 or 2) in order.
    pub blocks: Vec<usize>,
    /// Number of leading columns of `q` spanning the selected invariant subspace.
    pub selected_dim: usize,
}

impl OrderedSchur {
    /// Eigenvalues in block order; complex pairs appear consecutively.
    pub fn eigenvalues(&self) -> Vec<Complex<f64>> {
        let mut out = Vec::with_capacity(self.t.nrows());
        let mut i = 0;
        for &b in &self.blocks {
            out.extend(block_eigenvalues(&self.t, i, b));
            i += b;
        }
        out
    }
}

fn block_eigenvalues(t: &DMatrix<f64>, i: usize, size: usize) -> Vec<Complex<f64>> {
    if size == 1 {
        return vec![Complex::new(t[(i, i)], 0.0)];
    }
    let (a, b, c, d) = (t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
    let half_tr = 0.5 * (a + d);
    let disc = 0.25 * (a - d) * (a - d) + b * c;
    if disc >= 0.0 {
        let s = disc.sqrt();
        vec![Complex::new(half_tr + s, 0.0), Complex::new(half_tr - s, 0.0)]
    } else {
        let s = (-disc).sqrt();
        vec![Complex::new(half_tr, s), Complex::new(half_tr, -s)]
    }
}

fn rotate(t: &mut DMatrix<f64>, q: &mut DMatrix<f64>, start: usize, z: &DMatrix<f64>) {
    let k = z.nrows();
    let rows = z.transpose() * t.rows(start, k);
    t.rows_mut(start, k).copy_from(&rows);
    let cols = t.columns(start, k) * z;
    t.columns_mut(start, k).copy_from(&cols);
    let qc = q.columns(start, k) * z;
    q.columns_mut(start, k).copy_from(&qc);
}

/// Splits a 2×2 diagonal block with real eigenvalues into two 1×1 blocks.
fn split_real_pair(t: &mut DMatrix<f64>, q: &mut DMatrix<f64>, i: usize) {
    let (a, b, c, d) = (t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
    let lam = block_eigenvalues(t, i, 2)[0].re;
    let v1 = (b, lam - a);
    let v2 = (lam - d, c);
    let (x, y) = if v1.0.hypot(v1.1) >= v2.0.hypot(v2.1) { v1 } else { v2 };
    let nrm = x.hypot(y);
    if nrm == 0.0 {
        t[(i + 1, i)] = 0.0;
        return;
    }
    let (cs, sn) = (x / nrm, y / nrm);
    let z = DMatrix::from_row_slice(2, 2, &[cs, -sn, sn, cs]);
    rotate(t, q, i, &z);
    t[(i + 1, i)] = 0.0;
}

/// Exchanges the adjacent diagonal blocks starting at `j` of sizes `p`, `q_size`.
fn swap_blocks(t: &mut DMatrix<f64>, q: &mut DMatrix<f64>, j: usize, p: usize, q_size: usize) -> Result<()> {
    let a = t.view((j, j), (p, p)).clone_owned();
    let b = t.view((j + p, j + p), (q_size, q_size)).clone_owned();
    let c = t.view((j, j + p), (p, q_size)).clone_owned();

    let k = p * q_size;
    let mut kron = DMatrix::<f64>::zeros(k, k);
    for col in 0..q_size {
        for r in 0..p {
            let row = r + col * p;
            for kk in 0..p {
                kron[(row, kk + col * p)] += a[(r, kk)];
            }
            for l in 0..q_size {
                kron[(row, r + l * p)] -= b[(l, col)];
            }
        }
    }
    let rhs = DVector::from_column_slice(c.as_slice());
    let x = kron.full_piv_lu().solve(&rhs).ok_or(Error::ConvergenceFailure(
        "Schur block swap: Sylvester system is singular",
    ))?;
    let x = DMatrix::from_column_slice(p, q_size, x.as_slice());

    let n = p + q_size;
    let mut basis = DMatrix::<f64>::zeros(n, n);
    basis.view_mut((0, 0), (p, q_size)).copy_from(&(-&x));
    basis.view_mut((p, 0), (q_size, q_size)).fill_with_identity();
    basis.view_mut((0, q_size), (p, p)).fill_with_identity();
    let z = basis.qr().q();
    rotate(t, q, j, &z);
    t.view_mut((j + q_size, j), (p, q_size)).fill(0.0);
    Ok(())
}

/// Real Schur decomposition of `m` with every eigenvalue satisfying `select`
/// moved to the leading diagonal blocks.
pub fn ordered_real_schur(m: &DMatrix<f64>, select: impl Fn(Complex<f64>) -> bool) -> Result<OrderedSchur> {
    let n = m.nrows();
    let (mut q, mut t) = Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_ITERS)
        .ok_or(Error::ConvergenceFailure("real Schur decomposition"))?
        .unpack();
    let scale = t.norm().max(f64::MIN_POSITIVE);

    let mut blocks = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        if i + 1 < n {
            let sub = t[(i + 1, i)].abs();
            let local = t[(i, i)].abs() + t[(i + 1, i + 1)].abs();
            let tol = f64::EPSILON * if local > 0.0 { local } else { scale };
            if sub > tol {
                let disc = {
                    let (a, b, c, d) = (t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
                    0.25 * (a - d) * (a - d) + b * c
                };
                if disc >= 0.0 {
                    split_real_pair(&mut t, &mut q, i);
                    blocks.push(1);
                    i += 1;
                } else {
                    blocks.push(2);
                    if i + 2 < n {
                        t[(i + 2, i + 1)] = 0.0;
                    }
                    i += 2;
                }
                continue;
            }
            t[(i + 1, i)] = 0.0;
        }
        blocks.push(1);
        i += 1;
    }
    for r in 0..n {
        for c in 0..r.saturating_sub(1) {
            t[(r, c)] = 0.0;
        }
    }

    let mut flags: Vec<bool> = {
        let mut pos = 0;
        blocks
            .iter()
            .map(|&b| {
                let sel = select(block_eigenvalues(&t, pos, b)[0]);
                pos += b;
                sel
            })
            .collect()
    };

    // Bubble each selected block forward past unselected ones.
    let mut front = 0;
    for idx in 0..blocks.len() {
        if !flags[idx] {
            continue;
        }
        let mut cur = idx;
        while cur > front {
            let start: usize = blocks[..cur - 1].iter().sum();
            let (p, qs) = (blocks[cur - 1], blocks[cur]);
            swap_blocks(&mut t, &mut q, start, p, qs)?;
            blocks.swap(cur - 1, cur);
            flags.swap(cur - 1, cur);
            cur -= 1;
        }
        front += 1;
    }
    let selected_dim = blocks[..front].iter().sum();
    Ok(OrderedSchur {
        q,
        t,
        blocks,
        selected_dim,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check(m: &DMatrix<f64>, s: &OrderedSchur) {
        let n = m.nrows();
        let qtq = s.q.transpose() * &s.q;
        assert!((qtq - DMatrix::<f64>::identity(n, n)).norm() < 1e-12);
        let back = &s.q * &s.t * s.q.transpose();
        assert!((back - m).norm() / m.norm() < 1e-12);
    }

    #[test]
    fn orders_real_spectrum() {
        let m = DMatrix::from_row_slice(3, 3, &[3.0, 1.0, 0.5, 0.0, -2.0, 0.3, 0.0, 0.0, 1.0]);
        let s = ordered_real_schur(&m, |z| z.re < 0.0).unwrap();
        check(&m, &s);
        assert_eq!(s.selected_dim, 1);
        assert!((s.eigenvalues()[0].re + 2.0).abs() < 1e-12);
        // leading column spans the eigenvector of -2
        let v = s.q.column(0).into_owned();
        let mv = &m * &v;
        assert!((mv + 2.0 * v).norm() < 1e-12);
    }

    #[test]
    fn moves_complex_pairs() {
        // rotation block (eigenvalues 1 ± 2i) followed by real eigenvalues
        let m = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, -2.0, 0.4, 0.1, 2.0, 1.0, 0.2, 0.3, 0.0, 0.0, -3.0, 0.5, 0.0, 0.0, 0.0, -1.0,
            ],
        );
        let s = ordered_real_schur(&m, |z| z.re < 0.0).unwrap();
        check(&m, &s);
        assert_eq!(s.selected_dim, 2);
        let ev = s.eigenvalues();
        assert!(ev[0].re < 0.0 && ev[1].re < 0.0);
        assert!(ev[2].re > 0.0 && ev[3].im.abs() > 1.0);
        let basis = s.q.columns(0, 2).into_owned();
        // invariance: M·V stays inside span(V)
        let mv = &m * &basis;
        let proj = &basis * (basis.transpose() * &mv);
        assert!((mv - proj).norm() < 1e-10);
    }

    #[test]
    fn moves_complex_pair_forward() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.7, 0.0, -1.0, -3.0, 0.0, 3.0, -1.0]);
        let s = ordered_real_schur(&m, |z| z.re < 0.0).unwrap();
        check(&m, &s);
        assert_eq!(s.selected_dim, 2);
        let basis = s.q.columns(0, 2).into_owned();
        let mv = &m * &basis;
        let proj = &basis * (basis.transpose() * &mv);
        assert!((mv - proj).norm() < 1e-10);
    }
}
