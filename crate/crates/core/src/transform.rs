//! Transformation kernels `N_k(x, t, λ)` as Neumann series of iterated Volterra
//! kernels, and the perturbed Neumann solutions on each segment.
//!
//! Everything is computed in a "native" frame `ξ ∈ [-L, 0]` with the Neumann
//! end at `ξ = -L`. The left segment is native already; the right segment is
//! mapped by `ξ = -x`, `q̃(ξ) = q2(-ξ)`, which turns `N2(x, t)` into
//! `-Ñ(-x, -t)`.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::problem::{Segment, SegmentGraphProblem};
use crate::quadrature::{cumulative, cumulative_from_right, simpson};

pub const DEFAULT_SERIES_TOL: f64 = 1e-10;
/// Nodes per segment for the full triangular kernel grid.
pub const DEFAULT_KERNEL_GRID: usize = 257;
/// Nodes per segment for the `x = 0` row used by the determinant.
pub const DEFAULT_ROW_NODES: usize = 2049;
pub const MAX_TERMS: usize = 60;
const MIN_GRID: usize = 17;

/// `sin(λu)/λ`, by its Taylor series when `|λu|` is small (value `u` at `λ = 0`).
pub fn sin_over(lambda: Complex64, u: f64) -> Complex64 {
    let z = lambda * u;
    if z.norm() < 1e-4 {
        let z2 = z * z;
        (Complex64::new(1.0, 0.0) - z2 / 6.0 + z2 * z2 / 120.0) * u
    } else {
        z.sin() / lambda
    }
}

/// Volterra kernel `K(x, t) = sin(λ(x - t))/λ`.
pub fn kernel_base(lambda: Complex64, x: f64, t: f64) -> Complex64 {
    sin_over(lambda, x - t)
}

/// Knobs shared by kernel construction and the determinant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KernelSettings {
    /// Nodes on each segment for the `x = 0` kernel row (odd).
    pub row_nodes: usize,
    pub series_tol: f64,
}

impl Default for KernelSettings {
    fn default() -> Self {
        KernelSettings { row_nodes: DEFAULT_ROW_NODES, series_tol: DEFAULT_SERIES_TOL }
    }
}

impl KernelSettings {
    pub fn validate(&self) -> Result<()> {
        check_grid(self.row_nodes)?;
        if self.row_nodes.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("row_nodes must be odd, got {}", self.row_nodes)));
        }
        check_tol(self.series_tol)
    }
}

fn check_grid(n: usize) -> Result<()> {
    if n < MIN_GRID {
        return Err(Error::InvalidArgument(format!("grid must have at least {MIN_GRID} nodes, got {n}")));
    }
    Ok(())
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0 && tol <= 1e-6) {
        return Err(Error::InvalidArgument(format!("series_tol must lie in (0, 1e-6], got {tol}")));
    }
    Ok(())
}

/// Uniform grid `ξ_j = -L + j h` on the native frame with potential samples.
struct NativeGrid {
    len: f64,
    h: f64,
    xi: Vec<f64>,
    q: Vec<f64>,
    /// `∫_{-L}^{ξ_j} |q̃|`.
    sigma: Vec<f64>,
}

impl NativeGrid {
    fn new(problem: &SegmentGraphProblem, segment: Segment, n: usize) -> Self {
        let len = match segment {
            Segment::Left => problem.a(),
            Segment::Right => problem.b(),
        };
        let h = len / (n - 1) as f64;
        let xi: Vec<f64> = (0..n).map(|j| if j + 1 == n { 0.0 } else { -len + j as f64 * h }).collect();
        let q: Vec<f64> = xi
            .iter()
            .map(|&x| match segment {
                Segment::Left => problem.potential_at(Segment::Left, x),
                Segment::Right => problem.potential_at(Segment::Right, -x),
            })
            .collect();
        let abs: Vec<f64> = q.iter().map(|v| v.abs()).collect();
        let sigma = cumulative(&abs, h);
        NativeGrid { len, h, xi, q, sigma }
    }

    fn total_sigma(&self) -> f64 {
        *self.sigma.last().unwrap()
    }

    fn is_zero(&self) -> bool {
        self.q.iter().all(|&v| v == 0.0)
    }

    /// `S(u) = sin(λu)/λ`, `C(u) = cos(λu)` at the centred coordinate `u = ξ + L/2`.
    /// Centring keeps the separable split `K(x,t) = S(x)C(t) - C(x)S(t)` well
    /// conditioned for complex `λ`.
    fn separable(&self, lambda: Complex64) -> (Vec<Complex64>, Vec<Complex64>) {
        let mid = -0.5 * self.len;
        self.xi.iter().map(|&x| (sin_over(lambda, x - mid), (lambda * (x - mid)).cos())).unzip()
    }
}

/// `cosh(βL) Σ_{m>n} L^m σ^{m-1}/(m-1)!` and the matching sum for `∂x K_m`,
/// `cosh(βL) Σ_{m>n} (Lσ)^{m-1}/(m-1)!`.
fn series_tails(beta: f64, len: f64, sigma: f64, n: usize) -> (f64, f64) {
    let x = len * sigma;
    let mut term = 1.0;
    for j in 1..=n {
        term *= x / j as f64;
    }
    // term = x^n / n!
    let mut sum = 0.0;
    let mut j = n;
    while term > 1e-300 && j < n + 400 {
        sum += term;
        j += 1;
        term *= x / j as f64;
        if term < 1e-18 * sum {
            break;
        }
    }
    let ch = (beta * len).cosh();
    (ch * len * sum, ch * sum)
}

/// The two boundary integrals of one segment produced by the kernel row at `x = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundaryIntegrals {
    pub segment: Segment,
    /// `I1 = ∫ N1(0,t) q1 cos λ(t+a)` or `I2 = ∫ N2(0,t) q2 cos λ(b-t)`.
    pub value: Complex64,
    /// Same with `∂x N_k(0, t)`.
    pub derivative: Complex64,
    pub n_terms: usize,
    pub tail_bound: f64,
}

/// Kernel row `N(0, t)` and `∂x N(0, t)` on the native grid, summed term by
/// term through the right-associated recurrence
/// `K_{n+1}(0,t) = ∫_t^0 K_n(0,s) q(s) K(s,t) ds`, which produces the same
/// iterated kernels as the left-associated one but only needs the row.
fn kernel_row(grid: &NativeGrid, lambda: Complex64, tol: f64) -> Result<(Vec<Complex64>, Vec<Complex64>, usize, f64)> {
    let n = grid.xi.len();
    let mut kn: Vec<Complex64> = grid.xi.iter().map(|&t| kernel_base(lambda, 0.0, t)).collect();
    let mut dn: Vec<Complex64> = grid.xi.iter().map(|&t| (lambda * t).cos()).collect();
    let mut sum_k = kn.clone();
    let mut sum_d = dn.clone();
    if grid.is_zero() {
        return Ok((sum_k, sum_d, 1, 0.0));
    }
    let (s, c) = grid.separable(lambda);
    let sigma = grid.total_sigma();
    let beta = lambda.im.abs();
    let mut terms = 1;
    loop {
        let (tk, td) = series_tails(beta, grid.len, sigma, terms);
        let mk = sum_k.iter().fold(0.0f64, |m, v| m.max(v.norm()));
        let md = sum_d.iter().fold(0.0f64, |m, v| m.max(v.norm()));
        if tk < tol * (1.0 + mk) && td < tol * (1.0 + md) {
            return Ok((sum_k, sum_d, terms, tk.max(td)));
        }
        if terms >= MAX_TERMS {
            return Err(Error::Series { terms, tail: tk.max(td) });
        }
        let next = |row: &[Complex64]| -> Vec<Complex64> {
            let gs: Vec<Complex64> = (0..n).map(|j| row[j] * s[j] * grid.q[j]).collect();
            let gc: Vec<Complex64> = (0..n).map(|j| row[j] * c[j] * grid.q[j]).collect();
            let rs = cumulative_from_right(&gs, grid.h);
            let rc = cumulative_from_right(&gc, grid.h);
            (0..n).map(|j| c[j] * rs[j] - s[j] * rc[j]).collect()
        };
        kn = next(&kn);
        dn = next(&dn);
        for j in 0..n {
            sum_k[j] += kn[j];
            sum_d[j] += dn[j];
        }
        terms += 1;
    }
}

/// Boundary integrals of `segment` at spectral parameter `λ`.
pub fn boundary_integrals(
    problem: &SegmentGraphProblem,
    segment: Segment,
    lambda: Complex64,
    settings: &KernelSettings,
) -> Result<BoundaryIntegrals> {
    settings.validate()?;
    let grid = NativeGrid::new(problem, segment, settings.row_nodes);
    if grid.is_zero() {
        let zero = Complex64::new(0.0, 0.0);
        return Ok(BoundaryIntegrals { segment, value: zero, derivative: zero, n_terms: 1, tail_bound: 0.0 });
    }
    let (row, drow, n_terms, tail_bound) = kernel_row(&grid, lambda, settings.series_tol)?;
    let seed: Vec<Complex64> = grid.xi.iter().map(|&t| (lambda * (t + grid.len)).cos()).collect();
    let f: Vec<Complex64> = (0..row.len()).map(|j| row[j] * seed[j] * grid.q[j]).collect();
    let g: Vec<Complex64> = (0..row.len()).map(|j| drow[j] * seed[j] * grid.q[j]).collect();
    let native = simpson(&f, grid.h);
    let native_d = simpson(&g, grid.h);
    let value = match segment {
        Segment::Left => native,
        Segment::Right => -native,
    };
    Ok(BoundaryIntegrals { segment, value, derivative: native_d, n_terms, tail_bound })
}

/// Minimum over nodes and terms of `bound - |K_n|` for the two forms of the
/// iterated-kernel estimate, and of `bound - |N|` for the two forms of the
/// kernel estimate. Negative values are violations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KernelMargins {
    /// `cosh(βd) d^n/n^n · σ(x)^{n-1}/(n-1)!` with `σ(x)` measured from the Neumann end.
    pub iterated_sharp: f64,
    /// `cosh(βd) d^n σ(x,t)^{n-1}/(n-1)!`, `σ(x,t)` the norm over `[t, x]`.
    pub iterated_standard: f64,
    /// `cosh(βd) d exp(d σ(t))`, the endpoint of `σ` taken at `t`.
    pub kernel_at_t: f64,
    /// `cosh(βd) d exp(d σ(x))`.
    pub kernel_at_x: f64,
    /// Number of node/term pairs where `|K_n|` exceeds the sharp-form
    /// estimate by more than `noise_floor`.
    pub sharp_violations: usize,
    pub standard_violations: usize,
    /// Absolute level below which grid values carry no information,
    /// `1e-13 cosh(βL) L` (the scale of the base kernel times a rounding margin).
    pub noise_floor: f64,
}

/// `N_k(x, t, λ)` on the triangular grid of one segment.
#[derive(Clone, Debug, Serialize)]
pub struct KernelSeries {
    pub segment: Segment,
    pub lambda: Complex64,
    pub grid_n: usize,
    pub n_terms: usize,
    pub tail_bound: f64,
    pub margins: KernelMargins,
    /// Native coordinates `ξ_j`.
    #[serde(skip)]
    xi: Vec<f64>,
    /// Packed lower triangle `Ñ(ξ_i, ξ_j)`, `j ≤ i`.
    #[serde(skip)]
    values: Vec<Complex64>,
    #[serde(skip)]
    sigma: Vec<f64>,
}

fn tri(i: usize, j: usize) -> usize {
    i * (i + 1) / 2 + j
}

impl KernelSeries {
    /// Physical node coordinates on the segment, in increasing order.
    pub fn nodes(&self) -> Vec<f64> {
        match self.segment {
            Segment::Left => self.xi.clone(),
            Segment::Right => self.xi.iter().rev().map(|&x| -x).collect(),
        }
    }

    /// Every grid pair as `(x, t, N(x, t))` in physical coordinates, with
    /// `t ≤ x` on the left segment and `t ≥ x` on the right one.
    pub fn entries(&self) -> Vec<(f64, f64, Complex64)> {
        let n = self.xi.len();
        let mut out = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in 0..=i {
                let v = self.values[tri(i, j)];
                out.push(match self.segment {
                    Segment::Left => (self.xi[i], self.xi[j], v),
                    Segment::Right => (-self.xi[i], -self.xi[j], -v),
                });
            }
        }
        out
    }

    /// `max |N|` over the grid.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// `N(0, t)` row in physical coordinates (`t` ascending for the left
    /// segment, the `x = 0` row of the right segment with `t` ascending).
    pub fn row_at_junction(&self) -> Vec<(f64, Complex64)> {
        let n = self.xi.len();
        let row: Vec<(f64, Complex64)> = (0..n).map(|j| (self.xi[j], self.values[tri(n - 1, j)])).collect();
        match self.segment {
            Segment::Left => row,
            Segment::Right => row.into_iter().rev().map(|(t, v)| (-t, -v)).collect(),
        }
    }

    /// `σ` measured from the Neumann end at the native node `j`.
    fn sigma_native(&self, j: usize) -> f64 {
        self.sigma[j]
    }
}

/// Builds `N_k` on the full triangular grid from the iterated kernels
/// `K_{n+1}(x,t) = ∫_t^x K(x,s) q(s) K_n(s,t) ds`, truncating when the
/// analytic tail of the iterated estimate drops below `series_tol`.
pub fn build_kernel_series(
    problem: &SegmentGraphProblem,
    segment: Segment,
    lambda: Complex64,
    grid_n: usize,
    series_tol: f64,
) -> Result<KernelSeries> {
    check_grid(grid_n)?;
    check_tol(series_tol)?;
    let grid = NativeGrid::new(problem, segment, grid_n);
    let n = grid_n;
    let beta = lambda.im.abs();
    let (s, c) = grid.separable(lambda);

    let mut kn = vec![Complex64::new(0.0, 0.0); n * (n + 1) / 2];
    for i in 0..n {
        for j in 0..=i {
            kn[tri(i, j)] = kernel_base(lambda, grid.xi[i], grid.xi[j]);
        }
    }
    let mut values = kn.clone();
    let mut margins = KernelMargins {
        iterated_sharp: f64::INFINITY,
        iterated_standard: f64::INFINITY,
        kernel_at_t: f64::INFINITY,
        kernel_at_x: f64::INFINITY,
        sharp_violations: 0,
        standard_violations: 0,
        noise_floor: 1e-13 * (beta * grid.len).cosh() * grid.len,
    };
    let record = |kn: &[Complex64], order: usize, margins: &mut KernelMargins| {
        let nf = order as f64;
        let mut fact = 1.0;
        for j in 1..order {
            fact *= j as f64;
        }
        let npow = nf.powi(order as i32);
        for i in 0..n {
            for j in 0..=i {
                let d = grid.xi[i] - grid.xi[j];
                let ch = (beta * d).cosh();
                let dn = d.powi(order as i32);
                let v = kn[tri(i, j)].norm();
                let sx = grid.sigma[i];
                let sxt = grid.sigma[i] - grid.sigma[j];
                let sharp = ch * dn / npow * sx.powi(order as i32 - 1) / fact;
                let standard = ch * dn * sxt.max(0.0).powi(order as i32 - 1) / fact;
                margins.iterated_standard = margins.iterated_standard.min(standard - v);
                margins.iterated_sharp = margins.iterated_sharp.min(sharp - v);
                if v - sharp > margins.noise_floor {
                    margins.sharp_violations += 1;
                }
                if v - standard > margins.noise_floor {
                    margins.standard_violations += 1;
                }
            }
        }
    };
    record(&kn, 1, &mut margins);

    let sigma = grid.total_sigma();
    let mut terms = 1;
    let mut tail_bound = 0.0;
    if !grid.is_zero() {
        loop {
            let (tk, _) = series_tails(beta, grid.len, sigma, terms);
            let mk = values.iter().fold(0.0f64, |m, v| m.max(v.norm()));
            tail_bound = tk;
            if tk < series_tol * (1.0 + mk) {
                break;
            }
            if terms >= MAX_TERMS {
                return Err(Error::Series { terms, tail: tk });
            }
            // Row-wise right-associated form `∫_t^x K_n(x,s) q(s) K(s,t) ds`:
            // each row is contiguous and only the first three rows are short.
            let mut next = vec![Complex64::new(0.0, 0.0); kn.len()];
            for i in 0..n {
                let row = &kn[tri(i, 0)..=tri(i, i)];
                let gs: Vec<Complex64> = (0..=i).map(|j| row[j] * (s[j] * grid.q[j])).collect();
                let gc: Vec<Complex64> = (0..=i).map(|j| row[j] * (c[j] * grid.q[j])).collect();
                let rs = cumulative_from_right(&gs, grid.h);
                let rc = cumulative_from_right(&gc, grid.h);
                for j in 0..=i {
                    next[tri(i, j)] = c[j] * rs[j] - s[j] * rc[j];
                }
            }
            kn = next;
            terms += 1;
            record(&kn, terms, &mut margins);
            for (v, k) in values.iter_mut().zip(&kn) {
                *v += k;
            }
        }
    }

    for i in 0..n {
        for j in 0..=i {
            let d = grid.xi[i] - grid.xi[j];
            let ch = (beta * d).cosh();
            let v = values[tri(i, j)].norm();
            margins.kernel_at_t = margins.kernel_at_t.min(ch * d * (d * grid.sigma[j]).exp() - v);
            margins.kernel_at_x = margins.kernel_at_x.min(ch * d * (d * grid.sigma[i]).exp() - v);
        }
    }

    Ok(KernelSeries { segment, lambda, grid_n, n_terms: terms, tail_bound, margins, xi: grid.xi, values, sigma: grid.sigma })
}

/// `min over nodes of (cosh(β|x-t|) |x-t| exp(|x-t| σ_k(t)) - |N_k(x,t)|)`.
pub fn kernel_bound_margin(series: &KernelSeries) -> f64 {
    series.margins.kernel_at_t
}

/// `min over nodes of (cosh(β|x-t|)|x-t| exp(|x-t| σ_k(x)) - |N_k|)`, the
/// form that follows from summing the iterated estimate.
pub fn kernel_bound_margin_at_x(series: &KernelSeries) -> f64 {
    let n = series.xi.len();
    let beta = series.lambda.im.abs();
    let mut m = f64::INFINITY;
    for i in 0..n {
        for j in 0..=i {
            let d = series.xi[i] - series.xi[j];
            let bound = (beta * d).cosh() * d * (d * series.sigma_native(i)).exp();
            m = m.min(bound - series.values[tri(i, j)].norm());
        }
    }
    m
}

/// Perturbed Neumann solution on one segment with unit amplitude.
#[derive(Clone, Debug, Serialize)]
pub struct HalfLineSolution {
    pub segment: Segment,
    pub lambda: Complex64,
    pub x: Vec<f64>,
    pub y: Vec<Complex64>,
    pub dy: Vec<Complex64>,
    pub iterations: usize,
    /// Max-norm difference of the last two iterates.
    pub last_update: f64,
    /// Max-norm differences `‖y_{m+1} - y_m‖` in iteration order.
    #[serde(skip)]
    pub updates: Vec<f64>,
}

/// Picard iteration on the integral equation of `segment`.
///
/// Left: `y(x) = cos λ(x+a) + ∫_{-a}^x sin λ(x-t)/λ q1(t) y(t) dt`.
/// Right: `y(x) = cos λ(b-x) - ∫_x^b sin λ(x-t)/λ q2(t) y(t) dt`.
/// Derivatives come from differentiating under the integral.
pub fn solve_halfline(
    problem: &SegmentGraphProblem,
    segment: Segment,
    lambda: Complex64,
    grid_n: usize,
    series_tol: f64,
) -> Result<HalfLineSolution> {
    check_grid(grid_n)?;
    check_tol(series_tol)?;
    let (lo, hi) = problem.interval(segment);
    let len = hi - lo;
    let h = len / (grid_n - 1) as f64;
    let x: Vec<f64> = (0..grid_n).map(|j| if j + 1 == grid_n { hi } else { lo + j as f64 * h }).collect();
    let q: Vec<f64> = x.iter().map(|&v| problem.potential_at(segment, v)).collect();
    let mid = 0.5 * (lo + hi);
    let s: Vec<Complex64> = x.iter().map(|&v| sin_over(lambda, v - mid)).collect();
    let c: Vec<Complex64> = x.iter().map(|&v| (lambda * (v - mid)).cos()).collect();
    let l2 = lambda * lambda;
    let (y0, dy0): (Vec<Complex64>, Vec<Complex64>) = match segment {
        Segment::Left => x.iter().map(|&v| ((lambda * (v - lo)).cos(), -l2 * sin_over(lambda, v - lo))).unzip(),
        Segment::Right => x.iter().map(|&v| ((lambda * (hi - v)).cos(), l2 * sin_over(lambda, hi - v))).unzip(),
    };
    let mut y = y0.clone();
    let mut dy = dy0.clone();
    let mut updates = Vec::new();
    let zero = q.iter().all(|&v| v == 0.0);
    let mut iterations = 0;
    let mut last_update = 0.0;
    if !zero {
        loop {
            if iterations >= MAX_TERMS {
                return Err(Error::Series { terms: iterations, tail: last_update });
            }
            let gc: Vec<Complex64> = (0..grid_n).map(|j| c[j] * q[j] * y[j]).collect();
            let gs: Vec<Complex64> = (0..grid_n).map(|j| s[j] * q[j] * y[j]).collect();
            let (ny, ndy): (Vec<Complex64>, Vec<Complex64>) = match segment {
                Segment::Left => {
                    let ic = cumulative(&gc, h);
                    let is = cumulative(&gs, h);
                    (0..grid_n).map(|j| (y0[j] + s[j] * ic[j] - c[j] * is[j], dy0[j] + c[j] * ic[j] + l2 * s[j] * is[j])).unzip()
                }
                Segment::Right => {
                    let ic = cumulative_from_right(&gc, h);
                    let is = cumulative_from_right(&gs, h);
                    (0..grid_n).map(|j| (y0[j] - s[j] * ic[j] + c[j] * is[j], dy0[j] - c[j] * ic[j] - l2 * s[j] * is[j])).unzip()
                }
            };
            let diff = ny.iter().zip(&y).fold(0.0f64, |m, (a, b)| m.max((a - b).norm()));
            y = ny;
            dy = ndy;
            iterations += 1;
            last_update = diff;
            updates.push(diff);
            if diff < series_tol {
                break;
            }
        }
    }
    Ok(HalfLineSolution { segment, lambda, x, y, dy, iterations, last_update, updates })
}

/// Centred second-difference residual `max |-y'' + q y - λ² y|` over interior nodes.
pub fn ode_residual(problem: &SegmentGraphProblem, sol: &HalfLineSolution) -> f64 {
    let n = sol.x.len();
    let h = sol.x[1] - sol.x[0];
    let l2 = sol.lambda * sol.lambda;
    let mut m = 0.0f64;
    for j in 1..n - 1 {
        let d2 = (sol.y[j + 1] - sol.y[j] * 2.0 + sol.y[j - 1]) / (h * h);
        let q = problem.potential_at(sol.segment, sol.x[j]);
        m = m.max((-d2 + sol.y[j] * q - l2 * sol.y[j]).norm());
    }
    m
}
