//! Localization constants around the real roots (`r`, `R`, the smallness
//! condition, the radius `ρ`, lower bounds on `Δ(0, ·)`) and zero counting on
//! the squares `γ_l` by the argument principle.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::determinant::Evaluator;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::problem::{DerivedShape, SegmentGraphProblem, DEFAULT_QUAD_NODES};
use crate::unperturbed::{eval_delta0, secular_q_prime, SpectrumTable};

/// Which normalisation of `Δ(0, λ) = λ · C · Q(λ)` the constants are built on.
///
/// `Corrected` uses `C = (1+p²)/2`, the value that makes the factorisation an
/// identity; `Paper` uses `C = 1+p²`, which halves the radius and is not sound.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstantSet {
    #[default]
    Corrected,
    Paper,
}

impl ConstantSet {
    /// The leading factor `C` multiplying `λ Q(λ)`.
    pub fn leading(self, p: f64) -> f64 {
        match self {
            ConstantSet::Corrected => 0.5 * (1.0 + p * p),
            ConstantSet::Paper => 1.0 + p * p,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SmallnessReport {
    /// `2δ1 + 4δ2(a+b)/(π - 2r)`
    pub lhs: f64,
    /// `(1+p²) q² r² / (1+|k|)`
    pub rhs_paper: f64,
    pub rhs_corrected: f64,
    pub constants: ConstantSet,
    pub holds: bool,
    /// `rhs - lhs` for the active constant set.
    pub margin: f64,
    pub degenerate: bool,
    /// Whether the safe (`max(1,p²)`-scaled) constants were used because `|p| > 1`.
    pub safe_deltas: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// `(2δ1 + 4δ2 c/(π - 2r)) / (C c |q| r)`.
pub fn rho_formula(delta1: f64, delta2: f64, shape: &DerivedShape, constants: ConstantSet) -> f64 {
    let lhs = 2.0 * delta1 + 4.0 * delta2 * shape.c / (PI - 2.0 * shape.r);
    lhs / (constants.leading(shape.p) * shape.c * shape.q.abs() * shape.r)
}

pub fn smallness_condition(problem: &SegmentGraphProblem, constants: ConstantSet) -> Result<SmallnessReport> {
    let shape = problem.derive_shape();
    let norms = problem.potential_norms(DEFAULT_QUAD_NODES)?;
    let (d1, d2) = norms.active_deltas();
    let lhs = 2.0 * d1 + 4.0 * d2 * shape.c / (PI - 2.0 * shape.r);
    let rhs_paper = (1.0 + shape.p * shape.p) * shape.q * shape.q * shape.r * shape.r / (1.0 + shape.k.abs());
    let rhs_corrected = 0.5 * rhs_paper;
    let rhs = match constants {
        ConstantSet::Corrected => rhs_corrected,
        ConstantSet::Paper => rhs_paper,
    };
    let note = shape.degenerate.then(|| "degenerate shape (q = 0 or r = 0): no localization certificate".to_string());
    Ok(SmallnessReport {
        lhs,
        rhs_paper,
        rhs_corrected,
        constants,
        holds: !shape.degenerate && lhs < rhs,
        margin: rhs - lhs,
        degenerate: shape.degenerate,
        safe_deltas: problem.p().abs() > 1.0,
        note,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalizationRadius {
    pub s: usize,
    pub lambda0: f64,
    /// Radius under the active constant set.
    pub rho: f64,
    pub rho_corrected: f64,
    pub rho_paper: f64,
    #[serde(rename = "R")]
    pub outer_radius: f64,
    pub constants: ConstantSet,
    pub valid: bool,
}

/// The radius is independent of `s`; the index only selects `λ_s(0)`.
pub fn localization_radius(
    problem: &SegmentGraphProblem,
    table: &SpectrumTable,
    s: usize,
    constants: ConstantSet,
) -> Result<LocalizationRadius> {
    if s == 0 {
        return Err(Error::InvalidArgument("the root λ = 0 has no localization radius".into()));
    }
    let lambda0 = table.lambda(s)?;
    let shape = problem.derive_shape();
    if shape.degenerate {
        return Err(Error::CertificateUnavailable(format!(
            "degenerate shape (q = {}, r = {}): the radius is undefined",
            shape.q, shape.r
        )));
    }
    let small = smallness_condition(problem, constants)?;
    let norms = problem.potential_norms(DEFAULT_QUAD_NODES)?;
    let (d1, d2) = norms.active_deltas();
    let rho_corrected = rho_formula(d1, d2, &shape, ConstantSet::Corrected);
    let rho_paper = rho_formula(d1, d2, &shape, ConstantSet::Paper);
    let rho = match constants {
        ConstantSet::Corrected => rho_corrected,
        ConstantSet::Paper => rho_paper,
    };
    Ok(LocalizationRadius {
        s,
        lambda0,
        rho,
        rho_corrected,
        rho_paper,
        outer_radius: shape.outer_radius,
        constants,
        valid: small.holds && rho < shape.outer_radius,
    })
}

/// `(|λ - λ_s|/2) |λ| C (a+b) |q| r`, the lower bound on `|Δ(0, λ)|` valid for
/// real `λ` with `|λ - λ_s| < R`.
pub fn delta0_lower_bound(shape: &DerivedShape, lambda: f64, lambda_s: f64, constants: ConstantSet) -> Result<f64> {
    let dist = (lambda - lambda_s).abs();
    if dist.is_nan() || dist >= shape.outer_radius {
        return Err(Error::Domain { lambda, radius: shape.outer_radius });
    }
    Ok(0.5 * dist * lambda.abs() * constants.leading(shape.p) * shape.c * shape.q.abs() * shape.r)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QPrimeCheck {
    pub s: usize,
    pub qprime: f64,
    /// `(a+b)|q|r`
    pub lower: f64,
    pub margin: f64,
    pub skipped: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// `|Q'(λ_s(0))| - (a+b)|q|r`, which must be positive.
pub fn qprime_lower_check(problem: &SegmentGraphProblem, table: &SpectrumTable, s: usize) -> Result<QPrimeCheck> {
    if s == 0 {
        return Err(Error::InvalidArgument("the check needs s >= 1".into()));
    }
    let shape = problem.derive_shape();
    let qprime = secular_q_prime(&shape, table.lambda(s)?);
    let lower = shape.c * shape.q.abs() * shape.r;
    let note = shape.degenerate.then(|| "degenerate shape: the lower bound is vacuous".to_string());
    Ok(QPrimeCheck { s, qprime, lower, margin: qprime.abs() - lower, skipped: shape.degenerate, note })
}

/// Right side of the complex lower estimate for `|Δ(0, λ)|`, with leading
/// constant `|λ| (1+p²)/2`:
/// `|λ| C cosh(βqc) √(1+k²) (1 - |sin αc sin αqc| - (cos²αc + k² cos²αqc)(1 + cosh²βc)/(cosh²βqc (1+k²)))^{1/2}`.
/// Returns 0 when the bracket is not positive.
pub fn complex_lower_bound(shape: &DerivedShape, lambda: Complex64) -> f64 {
    let (alpha, beta) = (lambda.re, lambda.im);
    let (c, q, k) = (shape.c, shape.q, shape.k);
    let chq = (beta * q * c).cosh();
    let ch = (beta * c).cosh();
    let k2 = k * k;
    let bracket = 1.0
        - ((alpha * c).sin() * (alpha * q * c).sin()).abs()
        - ((alpha * c).cos().powi(2) + k2 * (alpha * q * c).cos().powi(2)) * (1.0 + ch * ch) / (chq * chq * (1.0 + k2));
    if bracket <= 0.0 {
        return 0.0;
    }
    lambda.norm() * ConstantSet::Corrected.leading(shape.p) * chq * (1.0 + k2).sqrt() * bracket.sqrt()
}

/// Options for the argument-principle computations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ContourOptions {
    pub initial_nodes_per_side: usize,
    pub max_nodes_per_side: usize,
    /// A contour is rejected when `min |Δ| < zero_threshold · max |Δ|` on it.
    pub zero_threshold: f64,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for ContourOptions {
    fn default() -> Self {
        ContourOptions {
            initial_nodes_per_side: 1024,
            max_nodes_per_side: 16384,
            zero_threshold: 1e-8,
            exec: Execution::Parallel,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContourCount {
    pub l: usize,
    pub half_width: f64,
    pub winding0: i64,
    pub windingq: i64,
    /// Raw argument increments divided by 2π.
    pub winding0_raw: f64,
    pub windingq_raw: f64,
    pub refinement_nodes: usize,
    /// `min over γ_l of |Δ(0, λ)| - |Φ(λ)|`.
    pub min_gap: f64,
    /// Minimum of the complex lower estimate minus `|Φ|` over the contour (may be negative when the estimate is vacuous).
    pub min_estimate_gap: f64,
}

/// Node `j` of `n_total` equally spaced nodes running counter-clockwise around
/// the square with half-width `h` starting at the corner `h(1 - i)`.
fn square_node(h: f64, j: usize, n_total: usize) -> Complex64 {
    let per = n_total / 4;
    let side = j / per;
    let f = (j % per) as f64 / per as f64;
    let s = -h + 2.0 * h * f;
    match side {
        0 => Complex64::new(h, s),
        1 => Complex64::new(-s, h),
        2 => Complex64::new(-h, -s),
        _ => Complex64::new(s, -h),
    }
}

/// Winding number of closed samples about 0, and the largest single-step argument jump.
fn winding_of(values: &[Complex64]) -> (f64, f64) {
    let n = values.len();
    let mut total = 0.0;
    let mut jump = 0.0f64;
    for j in 0..n {
        let d = (values[(j + 1) % n] / values[j]).arg();
        total += d;
        jump = jump.max(d.abs());
    }
    (total / (2.0 * PI), jump)
}

fn near_integer(x: f64) -> Option<i64> {
    let r = x.round();
    ((x - r).abs() < 1e-3).then_some(r as i64)
}

/// Checks a sampled contour against the zero threshold, refining between the
/// two nodes around the sampled minimum.
fn touches_zero<F: Fn(Complex64) -> Complex64>(f: &F, nodes: &[Complex64], values: &[Complex64], threshold: f64) -> bool {
    let max = values.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    let (imin, vmin) =
        values.iter().enumerate().fold((0, f64::INFINITY), |acc, (j, v)| if v.norm() < acc.1 { (j, v.norm()) } else { acc });
    if vmin < threshold * max || !vmin.is_finite() {
        return true;
    }
    let n = nodes.len();
    for nb in [(imin + n - 1) % n, (imin + 1) % n] {
        for k in 1..64 {
            let z = nodes[imin] + (nodes[nb] - nodes[imin]) * (k as f64 / 64.0);
            if f(z).norm() < threshold * max {
                return true;
            }
        }
    }
    false
}

fn delta0_contour_clear(shape: &DerivedShape, l: usize, opts: &ContourOptions) -> bool {
    let h = PI * l as f64 / shape.c;
    let n = 4 * opts.initial_nodes_per_side;
    let nodes: Vec<Complex64> = (0..n).map(|j| square_node(h, j, n)).collect();
    let f = |z: Complex64| eval_delta0(shape, z);
    let values: Vec<Complex64> = nodes.iter().map(|&z| f(z)).collect();
    !touches_zero(&f, &nodes, &values, opts.zero_threshold)
}

/// Zero counts of `Δ(0, ·)` and `Δ(q, ·)` inside `γ_l`, the square with
/// vertices `πl/(a+b)(±1 ± i)`.
pub fn rouche_count(evaluator: &Evaluator, l: usize, opts: &ContourOptions) -> Result<ContourCount> {
    if l == 0 {
        return Err(Error::InvalidArgument("contour index l must be at least 1".into()));
    }
    let shape = *evaluator.shape();
    let h = PI * l as f64 / shape.c;
    let suggest = || (l + 1..=l + 16).find(|&m| delta0_contour_clear(&shape, m, opts));
    let mut per_side = opts.initial_nodes_per_side.max(4);
    let mut n = 4 * per_side;
    let mut nodes: Vec<Complex64> = (0..n).map(|j| square_node(h, j, n)).collect();
    let mut v0: Vec<Complex64> = nodes.iter().map(|&z| eval_delta0(&shape, z)).collect();
    let mut vq: Vec<Complex64> = opts.exec.try_map(&nodes, |&z| evaluator.delta_q(z))?;
    let mut previous: Option<(i64, i64)> = None;
    loop {
        let f0 = |z: Complex64| eval_delta0(&shape, z);
        let fq = |z: Complex64| evaluator.delta_q(z).unwrap_or(Complex64::new(0.0, 0.0));
        if touches_zero(&f0, &nodes, &v0, opts.zero_threshold) || touches_zero(&fq, &nodes, &vq, opts.zero_threshold) {
            return Err(Error::ContourThroughZero { l, suggested: suggest() });
        }
        let (w0, j0) = winding_of(&v0);
        let (wq, jq) = winding_of(&vq);
        let resolved = j0 < 1.0 && jq < 1.0;
        if let (Some(i0), Some(iq), true) = (near_integer(w0), near_integer(wq), resolved) {
            if previous == Some((i0, iq)) {
                let mut min_gap = f64::INFINITY;
                let mut min_estimate_gap = f64::INFINITY;
                for ((z, d0), dq) in nodes.iter().zip(&v0).zip(&vq) {
                    let phi = (dq - d0).norm();
                    min_gap = min_gap.min(d0.norm() - phi);
                    min_estimate_gap = min_estimate_gap.min(complex_lower_bound(&shape, *z) - phi);
                }
                return Ok(ContourCount {
                    l,
                    half_width: h,
                    winding0: i0,
                    windingq: iq,
                    winding0_raw: w0,
                    windingq_raw: wq,
                    refinement_nodes: per_side,
                    min_gap,
                    min_estimate_gap,
                });
            }
            previous = Some((i0, iq));
        } else {
            previous = None;
        }
        if 2 * per_side > opts.max_nodes_per_side {
            return Err(Error::ContourUnstable { nodes: per_side });
        }
        // Double the resolution, reusing the existing samples at even indices.
        per_side *= 2;
        n *= 2;
        let fresh: Vec<Complex64> = (0..n / 2).map(|j| square_node(h, 2 * j + 1, n)).collect();
        let f0: Vec<Complex64> = fresh.iter().map(|&z| eval_delta0(&shape, z)).collect();
        let fq = opts.exec.try_map(&fresh, |&z| evaluator.delta_q(z))?;
        let interleave = |old: &[Complex64], new: &[Complex64]| -> Vec<Complex64> {
            old.iter().zip(new).flat_map(|(a, b)| [*a, *b]).collect()
        };
        nodes = interleave(&nodes, &fresh);
        v0 = interleave(&v0, &f0);
        vq = interleave(&vq, &fq);
    }
}

/// Winding number of `f` around a circle, refined until it stabilises on an integer.
pub(crate) fn circle_winding<F>(f: F, center: f64, radius: f64, exec: Execution) -> Result<(i64, usize)>
where
    F: Fn(Complex64) -> Result<Complex64> + Sync + Send,
{
    let mut n = 256;
    let mut previous = None;
    while n <= 8192 {
        let nodes: Vec<Complex64> =
            (0..n).map(|j| Complex64::new(center, 0.0) + Complex64::from_polar(radius, 2.0 * PI * j as f64 / n as f64)).collect();
        let values = exec.try_map(&nodes, |&z| f(z))?;
        let (w, jump) = winding_of(&values);
        match near_integer(w) {
            Some(i) if jump < 1.0 && previous == Some(i) => return Ok((i, n)),
            Some(i) if jump < 1.0 => previous = Some(i),
            _ => previous = None,
        }
        n *= 2;
    }
    Err(Error::ContourUnstable { nodes: n / 2 })
}
