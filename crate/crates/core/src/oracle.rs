//! Independent finite-difference eigenvalue oracle.
//!
//! The operator is discretised with lumped-mass linear elements on uniform
//! meshes of each segment. The junction value on the right is eliminated
//! through `y2(0) = -p y1(0)`, which leaves a single junction unknown carrying
//! mass `h1/2 + p² h2/2`, so the transmission derivative condition comes out of
//! the discrete variational form rather than a one-sided stencil. The Neumann
//! ends are natural. Symmetrising with the lumped mass gives a symmetric
//! tridiagonal matrix whose eigenvalues approximate `λ²` to second order.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::problem::{Segment, SegmentGraphProblem};

pub const MIN_CELLS: usize = 50;
const MAX_QL_ITERATIONS: usize = 60;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiscreteOperator {
    pub m1: usize,
    pub m2: usize,
    pub h1: f64,
    pub h2: f64,
    /// Symmetrised diagonal `K_ii / M_i`.
    pub diag: Vec<f64>,
    /// Symmetrised off-diagonal `K_{i,i+1} / sqrt(M_i M_{i+1})`.
    pub offdiag: Vec<f64>,
    /// Lumped mass per unknown.
    pub mass: Vec<f64>,
    /// Physical location of each unknown; the junction unknown is reported on the left.
    pub nodes: Vec<(Segment, f64)>,
}

impl DiscreteOperator {
    pub fn size(&self) -> usize {
        self.diag.len()
    }

    /// Row-major dense copy of the symmetric matrix.
    pub fn dense(&self) -> Vec<f64> {
        let n = self.size();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = self.diag[i];
            if i + 1 < n {
                a[i * n + i + 1] = self.offdiag[i];
                a[(i + 1) * n + i] = self.offdiag[i];
            }
        }
        a
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let mut d = self.diag.clone();
        let mut e = self.offdiag.clone();
        e.push(0.0);
        tql_implicit(&mut d, &mut e)?;
        d.sort_by(f64::total_cmp);
        Ok(d)
    }
}

/// Largest `|A_ij - A_ji|` of a row-major square matrix.
pub fn symmetry_residual(a: &[f64], n: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..i {
            worst = worst.max((a[i * n + j] - a[j * n + i]).abs());
        }
    }
    worst
}

/// Splits `m` cells between the segments in proportion to their lengths.
pub fn split_cells(problem: &SegmentGraphProblem, m: usize) -> (usize, usize) {
    let m1 = ((m as f64) * problem.a() / problem.total_length()).round() as usize;
    let m1 = m1.clamp(1, m - 1);
    (m1, m - m1)
}

pub fn assemble(problem: &SegmentGraphProblem, m: usize) -> Result<DiscreteOperator> {
    if m < MIN_CELLS {
        return Err(Error::InvalidArgument(format!("at least {MIN_CELLS} cells are required, got {m}")));
    }
    let (m1, m2) = split_cells(problem, m);
    assemble_cells(problem, m1, m2)
}

/// Assembly with an explicit split, `m1` cells on the left and `m2` on the right.
pub fn assemble_cells(problem: &SegmentGraphProblem, m1: usize, m2: usize) -> Result<DiscreteOperator> {
    if m1 == 0 || m2 == 0 || m1 + m2 < MIN_CELLS {
        return Err(Error::InvalidArgument(format!("invalid split {m1} + {m2}, at least {MIN_CELLS} cells are required")));
    }
    let (a, b, p) = (problem.a(), problem.b(), problem.p());
    let h1 = a / m1 as f64;
    let h2 = b / m2 as f64;
    let n = m1 + m2 + 1;
    let mut nodes = Vec::with_capacity(n);
    for j in 0..=m1 {
        nodes.push((Segment::Left, if j == m1 { 0.0 } else { -a + j as f64 * h1 }));
    }
    for j in 1..=m2 {
        nodes.push((Segment::Right, if j == m2 { b } else { j as f64 * h2 }));
    }

    let mut mass = vec![0.0; n];
    let mut kd = vec![0.0; n];
    let mut ko = vec![0.0; n - 1];
    for j in 0..m1 {
        kd[j] += 1.0 / h1;
        kd[j + 1] += 1.0 / h1;
        ko[j] = -1.0 / h1;
        mass[j] += 0.5 * h1;
        mass[j + 1] += 0.5 * h1;
    }
    // Edge between the eliminated v0 = -p u_{m1} and v1.
    let jn = m1;
    kd[jn] += p * p / h2;
    kd[jn + 1] += 1.0 / h2;
    ko[jn] = p / h2;
    mass[jn] += 0.5 * p * p * h2;
    mass[jn + 1] += 0.5 * h2;
    for j in 1..m2 {
        let i = m1 + j;
        kd[i] += 1.0 / h2;
        kd[i + 1] += 1.0 / h2;
        ko[i] = -1.0 / h2;
        mass[i] += 0.5 * h2;
        mass[i + 1] += 0.5 * h2;
    }
    for (i, &(seg, x)) in nodes.iter().enumerate() {
        let w = if i == jn {
            0.5 * h1 * problem.potential_at(Segment::Left, 0.0) + 0.5 * p * p * h2 * problem.potential_at(Segment::Right, 0.0)
        } else {
            mass[i] * problem.potential_at(seg, x)
        };
        kd[i] += w;
    }
    let diag: Vec<f64> = kd.iter().zip(&mass).map(|(k, m)| k / m).collect();
    let offdiag: Vec<f64> = (0..n - 1).map(|i| ko[i] / (mass[i] * mass[i + 1]).sqrt()).collect();
    Ok(DiscreteOperator { m1, m2, h1, h2, diag, offdiag, mass, nodes })
}

/// Implicit QL with Wilkinson shifts on a symmetric tridiagonal matrix.
/// `e[i]` couples `i` and `i+1`; `e[n-1]` is workspace. Eigenvalues overwrite `d`.
pub fn tql_implicit(d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    if e.len() != n {
        return Err(Error::InvalidArgument("off-diagonal workspace must match the diagonal length".into()));
    }
    if n == 0 {
        return Ok(());
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > MAX_QL_ITERATIONS {
                return Err(Error::Solver(format!("QL iteration did not converge for eigenvalue {l}")));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let bb = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * bb;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - bb;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Householder reduction of a dense symmetric matrix to tridiagonal form,
/// returning `(diag, offdiag)`.
pub fn householder_tridiagonal(a: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.len() != n * n {
        return Err(Error::InvalidArgument(format!("expected {} entries, got {}", n * n, a.len())));
    }
    let mut a = a.to_vec();
    let mut off = vec![0.0; n.saturating_sub(1)];
    for k in 0..n.saturating_sub(2) {
        let len = n - k - 1;
        let mut v: Vec<f64> = (0..len).map(|i| a[(k + 1 + i) * n + k]).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            off[k] = 0.0;
            continue;
        }
        let alpha = -norm.copysign(v[0]);
        v[0] -= alpha;
        let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if vn == 0.0 {
            off[k] = a[(k + 1) * n + k];
            continue;
        }
        v.iter_mut().for_each(|x| *x /= vn);
        let idx = |i: usize, j: usize| (k + 1 + i) * n + (k + 1 + j);
        let pvec: Vec<f64> = (0..len).map(|i| (0..len).map(|j| a[idx(i, j)] * v[j]).sum()).collect();
        let kk: f64 = v.iter().zip(&pvec).map(|(x, y)| x * y).sum();
        let qv: Vec<f64> = pvec.iter().zip(&v).map(|(pi, vi)| pi - kk * vi).collect();
        for i in 0..len {
            for j in 0..len {
                a[idx(i, j)] -= 2.0 * (v[i] * qv[j] + qv[i] * v[j]);
            }
        }
        off[k] = alpha;
        for i in 0..len {
            a[(k + 1 + i) * n + k] = if i == 0 { alpha } else { 0.0 };
            a[k * n + k + 1 + i] = if i == 0 { alpha } else { 0.0 };
        }
    }
    if n >= 2 {
        off[n - 2] = a[(n - 1) * n + n - 2];
    }
    let diag = (0..n).map(|i| a[i * n + i]).collect();
    Ok((diag, off))
}

/// Eigenvalues of a dense symmetric matrix, ascending.
pub fn dense_symmetric_eigenvalues(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let scale = a.iter().fold(0.0_f64, |m, x| m.max(x.abs())).max(1.0);
    let asym = symmetry_residual(a, n);
    if asym > 1e-12 * scale {
        return Err(Error::InvalidArgument(format!("matrix is not symmetric (residual {asym:e})")));
    }
    let (mut d, mut e) = householder_tridiagonal(a, n)?;
    e.push(0.0);
    tql_implicit(&mut d, &mut e)?;
    d.sort_by(f64::total_cmp);
    Ok(d)
}

/// Cyclic Jacobi rotations; slow but independent of the tridiagonal path.
pub fn jacobi_eigenvalues(a: &[f64], n: usize, max_sweeps: usize) -> Result<Vec<f64>> {
    let mut a = a.to_vec();
    for _ in 0..max_sweeps {
        let off: f64 =
            (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i * n + j].powi(2)).sum();
        let total: f64 = a.iter().map(|x| x * x).sum();
        if off <= 1e-30 * total.max(f64::MIN_POSITIVE) {
            let mut d: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
            d.sort_by(f64::total_cmp);
            return Ok(d);
        }
        for pidx in 0..n {
            for q in pidx + 1..n {
                let apq = a[pidx * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[pidx * n + pidx]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + pidx];
                    let akq = a[k * n + q];
                    a[k * n + pidx] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[pidx * n + k];
                    let aqk = a[q * n + k];
                    a[pidx * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    Err(Error::Solver(format!("Jacobi did not converge in {max_sweeps} sweeps")))
}

/// The lowest `count` discrete eigenvalues `μ_0 ≤ μ_1 ≤ …`.
pub fn fd_eigenvalues(problem: &SegmentGraphProblem, m: usize, count: usize) -> Result<Vec<f64>> {
    let op = assemble(problem, m)?;
    let mut mu = op.eigenvalues()?;
    if count > mu.len() {
        return Err(Error::InvalidArgument(format!("only {} eigenvalues exist at m = {m}", mu.len())));
    }
    mu.truncate(count);
    Ok(mu)
}

/// Lowest `count` eigenvalues on `levels` nested meshes: the split of `m`
/// cells is fixed on the coarsest mesh and both halves double at each level.
pub fn nested_eigenvalues(
    problem: &SegmentGraphProblem,
    m: usize,
    levels: usize,
    count: usize,
    exec: Execution,
) -> Result<Vec<Vec<f64>>> {
    let (m1, m2) = split_cells(problem, m.max(MIN_CELLS));
    let splits: Vec<(usize, usize)> = (0..levels).map(|j| (m1 << j, m2 << j)).collect();
    exec.try_map(&splits, |&(n1, n2)| {
        let mut mu = assemble_cells(problem, n1, n2)?.eigenvalues()?;
        if count > mu.len() {
            return Err(Error::InvalidArgument(format!("only {} eigenvalues exist at {n1} + {n2} cells", mu.len())));
        }
        mu.truncate(count);
        Ok(mu)
    })
}

/// `(4 μ_{h/2} - μ_h) / 3`, assuming the error is `O(h²)` and `fine` halves `h`.
pub fn richardson(coarse: &[f64], fine: &[f64]) -> Vec<f64> {
    coarse.iter().zip(fine).map(|(c, f)| (4.0 * f - c) / 3.0).collect()
}

/// `log2(|μ_h - μ_{h/2}| / |μ_{h/2} - μ_{h/4}|)` for each index.
pub fn convergence_order(h: &[f64], h2: &[f64], h4: &[f64]) -> Vec<f64> {
    h.iter().zip(h2).zip(h4).map(|((a, b), c)| ((a - b).abs() / (b - c).abs()).log2()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeviationRow {
    pub s: usize,
    pub lambda_q: f64,
    pub mu: f64,
    /// `sqrt(μ_s)` or `NaN` when `μ_s < 0`.
    pub sqrt_mu: f64,
    pub deviation: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeviationTable {
    pub tolerance: f64,
    pub rows: Vec<DeviationRow>,
    /// Negative discrete eigenvalues, reported and never matched to a positive root.
    pub negative: Vec<f64>,
    pub max_deviation: f64,
    pub all_pass: bool,
}

/// Matches each `(s, λ_s(q))` against `sqrt(μ_s)` of the ascending list `mu`.
pub fn compare_spectra(roots: &[(usize, f64)], mu: &[f64], tolerance: f64) -> Result<DeviationTable> {
    let mut rows = Vec::with_capacity(roots.len());
    for &(s, lambda_q) in roots {
        let &m = mu.get(s).ok_or(Error::UnknownIndex(s))?;
        let sqrt_mu = if m >= 0.0 { m.sqrt() } else { f64::NAN };
        let deviation = (lambda_q - sqrt_mu).abs();
        rows.push(DeviationRow { s, lambda_q, mu: m, sqrt_mu, deviation, pass: deviation <= tolerance });
    }
    let max_deviation = rows.iter().map(|r| r.deviation).fold(0.0, f64::max);
    let all_pass = rows.iter().all(|r| r.pass);
    let negative = mu.iter().copied().filter(|&m| m < 0.0).collect();
    Ok(DeviationTable { tolerance, rows, negative, max_deviation, all_pass })
}
