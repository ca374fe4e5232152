//! The unperturbed operator (`q1 = q2 = 0`): characteristic function, secular
//! equation `sin w = k sin(q w)`, its positive roots and the eigenfunctions.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::problem::{DerivedShape, SegmentGraphProblem};

/// Grid step (in `w`) used to bracket secular roots.
pub const SCAN_STEP: f64 = PI / 8.0;
/// Step of the verification pass that recounts sign changes.
pub const VERIFY_STEP: f64 = PI / 64.0;
const BISECTION_WIDTH: f64 = 1e-13;

/// `Δ(0, λ) = λ p² cos(λa) sin(λb) + λ cos(λb) sin(λa)`.
pub fn eval_delta0(shape: &DerivedShape, lambda: Complex64) -> Complex64 {
    let p2 = shape.p * shape.p;
    let (ca, sa) = ((lambda * shape.a).cos(), (lambda * shape.a).sin());
    let (cb, sb) = ((lambda * shape.b).cos(), (lambda * shape.b).sin());
    lambda * (ca * sb * p2 + cb * sa)
}

/// `Q(λ) = sin(λc) - k sin(qλc)`.
pub fn secular_q(shape: &DerivedShape, lambda: Complex64) -> Complex64 {
    let w = lambda * shape.c;
    w.sin() - (w * shape.q).sin() * shape.k
}

/// `Q'(λ) = c (cos(λc) - kq cos(qλc))`.
pub fn secular_q_prime(shape: &DerivedShape, lambda: f64) -> f64 {
    let w = lambda * shape.c;
    shape.c * (w.cos() - shape.k * shape.q * (shape.q * w).cos())
}

/// `Q''(λ) = -c² (sin(λc) - kq² sin(qλc))`.
pub fn secular_q_second(shape: &DerivedShape, lambda: f64) -> f64 {
    let w = lambda * shape.c;
    -shape.c * shape.c * (w.sin() - shape.k * shape.q * shape.q * (shape.q * w).sin())
}

/// The factorised form `λ ((p²+1)/2) Q(λ)`, equal to [`eval_delta0`] identically.
pub fn delta0_factorized(shape: &DerivedShape, lambda: Complex64) -> Complex64 {
    lambda * secular_q(shape, lambda) * (0.5 * (shape.p * shape.p + 1.0))
}

/// `f(w) = sin w - k sin(q w)`.
pub fn eval_secular_f(shape: &DerivedShape, w: f64) -> f64 {
    w.sin() - shape.k * (shape.q * w).sin()
}

pub fn eval_secular_f_prime(shape: &DerivedShape, w: f64) -> f64 {
    w.cos() - shape.k * shape.q * (shape.q * w).cos()
}

/// Slack `1/k² - (sin²(qw) + q² cos²(qw))` of the double-root condition; a
/// positive value rules out `f(w) = f'(w) = 0`. Infinite when `k = 0`.
pub fn simplicity_margin(shape: &DerivedShape, w: f64) -> f64 {
    if shape.k == 0.0 {
        return f64::INFINITY;
    }
    let (s, c) = (shape.q * w).sin_cos();
    1.0 / (shape.k * shape.k) - (s * s + shape.q * shape.q * c * c)
}

fn margin_json<S: Serializer>(m: &Option<f64>, ser: S) -> std::result::Result<S::Ok, S::Error> {
    match m {
        None => ser.serialize_none(),
        Some(v) if v.is_infinite() => ser.serialize_str("inf"),
        Some(v) => ser.serialize_f64(*v),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectrumEntry {
    pub s: usize,
    pub w: f64,
    pub lambda: f64,
    pub multiplicity: u8,
    /// `None` for the double eigenvalue at zero, `Some(inf)` when `k = 0`.
    #[serde(serialize_with = "margin_json")]
    pub simplicity_margin: Option<f64>,
}

/// `λ0 = 0` (double) followed by the first `n_max` positive secular roots.
/// Negative roots are `-λ_s` and are not stored.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectrumTable {
    pub entries: Vec<SpectrumEntry>,
    pub n_max: usize,
    pub root_tol: f64,
    /// `true` when `f = sin w` and the roots are `πn` exactly.
    pub closed_form: bool,
    /// Step actually used for bracketing (the coarse step unless the verification pass disagreed).
    pub scan_step: f64,
    /// Whether the first root also satisfies `w_1 < π`, which need not hold in general.
    pub w1_below_pi: bool,
}

impl SpectrumTable {
    pub fn get(&self, s: usize) -> Result<&SpectrumEntry> {
        self.entries.get(s).ok_or(Error::UnknownIndex(s))
    }

    /// Positive roots `λ_1 < λ_2 < …`.
    pub fn positive_lambdas(&self) -> Vec<f64> {
        self.entries.iter().skip(1).map(|e| e.lambda).collect()
    }

    pub fn lambda(&self, s: usize) -> Result<f64> {
        Ok(self.get(s)?.lambda)
    }
}

fn bisect(shape: &DerivedShape, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = eval_secular_f(shape, lo);
    if flo == 0.0 {
        return lo;
    }
    while hi - lo > BISECTION_WIDTH {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = eval_secular_f(shape, mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    let mut w = 0.5 * (lo + hi);
    // Newton polish, kept inside the bracket and only while it helps.
    for _ in 0..3 {
        let fw = eval_secular_f(shape, w);
        let d = eval_secular_f_prime(shape, w);
        if d == 0.0 {
            break;
        }
        let next = w - fw / d;
        if !(lo..=hi).contains(&next) || eval_secular_f(shape, next).abs() >= fw.abs() {
            break;
        }
        w = next;
    }
    w
}

fn scan_brackets(shape: &DerivedShape, step: f64, count: usize, w_limit: f64) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::with_capacity(count);
    let mut w0 = step;
    let mut f0 = eval_secular_f(shape, w0);
    while out.len() < count {
        if w0 > w_limit {
            return Err(Error::Search { lo: w0 - step, hi: w0 });
        }
        let w1 = w0 + step;
        let f1 = eval_secular_f(shape, w1);
        if f1 == 0.0 {
            out.push((w1, w1));
            // Skip past the exact zero so it is not bracketed twice.
            w0 = w1 + step;
            f0 = eval_secular_f(shape, w0);
            continue;
        }
        if (f0 > 0.0) != (f1 > 0.0) && f0 != 0.0 {
            out.push((w0, w1));
        }
        w0 = w1;
        f0 = f1;
    }
    Ok(out)
}

fn count_sign_changes(shape: &DerivedShape, from: f64, to: f64, step: f64) -> usize {
    let n = ((to - from) / step).ceil() as usize;
    let mut count = 0;
    let mut prev = eval_secular_f(shape, from);
    for j in 1..=n {
        let v = eval_secular_f(shape, (from + j as f64 * step).min(to));
        if v == 0.0 || (prev != 0.0 && (v > 0.0) != (prev > 0.0)) {
            count += 1;
        }
        prev = v;
    }
    count
}

/// Roots of `Δ(0, ·)`: zero (double) and the first `n_max` positive secular roots.
pub fn unperturbed_spectrum(problem: &SegmentGraphProblem, n_max: usize, root_tol: f64) -> Result<SpectrumTable> {
    if n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be at least 1".into()));
    }
    if !(root_tol > 0.0 && root_tol <= 1e-6) {
        return Err(Error::InvalidArgument(format!("root_tol must lie in (0, 1e-6], got {root_tol}")));
    }
    let shape = problem.derive_shape();
    let closed_form = shape.k == 0.0 || shape.q == 0.0;
    let mut scan_step = SCAN_STEP;
    let ws: Vec<f64> = if closed_form {
        (1..=n_max).map(|n| PI * n as f64).collect()
    } else {
        let w_limit = PI * (4 * n_max + 16) as f64;
        let mut brackets = scan_brackets(&shape, SCAN_STEP, n_max, w_limit)?;
        let last = brackets[n_max - 1].1;
        if count_sign_changes(&shape, VERIFY_STEP, last, VERIFY_STEP) != n_max {
            scan_step = VERIFY_STEP;
            brackets = scan_brackets(&shape, VERIFY_STEP, n_max, w_limit)?;
        }
        brackets.iter().map(|&(lo, hi)| if lo == hi { lo } else { bisect(&shape, lo, hi) }).collect()
    };

    let mut entries = vec![SpectrumEntry { s: 0, w: 0.0, lambda: 0.0, multiplicity: 2, simplicity_margin: None }];
    for (i, &w) in ws.iter().enumerate() {
        if eval_secular_f(&shape, w).abs() >= root_tol {
            return Err(Error::Search { lo: w - scan_step, hi: w + scan_step });
        }
        entries.push(SpectrumEntry {
            s: i + 1,
            w,
            lambda: w / shape.c,
            multiplicity: 1,
            simplicity_margin: Some(simplicity_margin(&shape, w)),
        });
    }
    let w1_below_pi = ws[0] < PI;
    Ok(SpectrumTable { entries, n_max, root_tol, closed_form, scan_step, w1_below_pi })
}

/// Samples of the unperturbed eigenfunction for root `s` on the two segments.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Eigenfunction0 {
    pub s: usize,
    pub lambda: f64,
    pub amplitude: f64,
    /// Multipliers of `cos λ(x+a)` and `cos λ(x-b)`.
    pub coeff_left: f64,
    pub coeff_right: f64,
    pub x_left: Vec<f64>,
    pub y_left: Vec<f64>,
    pub x_right: Vec<f64>,
    pub y_right: Vec<f64>,
    #[serde(skip)]
    a: f64,
    #[serde(skip)]
    b: f64,
    #[serde(skip)]
    p: f64,
}

impl Eigenfunction0 {
    pub fn eval_left(&self, x: f64) -> (f64, f64) {
        let l = self.lambda;
        let arg = l * (x + self.a);
        let amp = self.amplitude * self.coeff_left;
        (amp * arg.cos(), -amp * l * arg.sin())
    }

    pub fn eval_right(&self, x: f64) -> (f64, f64) {
        let l = self.lambda;
        let arg = l * (x - self.b);
        let amp = self.amplitude * self.coeff_right;
        (amp * arg.cos(), -amp * l * arg.sin())
    }

    /// `(|y2(0) + p y1(0)|, |y1'(0) + p y2'(0)|)`.
    pub fn junction_residuals(&self) -> (f64, f64) {
        let (y1, d1) = self.eval_left(0.0);
        let (y2, d2) = self.eval_right(0.0);
        ((y2 + self.p * y1).abs(), (d1 + self.p * d2).abs())
    }

    /// `(|y1'(-a)|, |y2'(b)|)`.
    pub fn neumann_residuals(&self) -> (f64, f64) {
        (self.eval_left(-self.a).1.abs(), self.eval_right(self.b).1.abs())
    }
}

fn trapezoid_sq(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2).zip(ys.windows(2)).map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] * y[0] + y[1] * y[1])).sum()
}

/// Eigenfunction `A col[cos(λb) cos λ(x+a), -p cos(λa) cos λ(x-b)]` for root `s`.
///
/// When `cos(λa)` and `cos(λb)` vanish together the first junction equation
/// is void and the coefficients come from the derivative equation instead.
/// `normalize` divides by the discrete L² norm over the two grids.
pub fn eigenfunction0(
    problem: &SegmentGraphProblem,
    table: &SpectrumTable,
    s: usize,
    grid_left: &[f64],
    grid_right: &[f64],
    normalize: bool,
) -> Result<Eigenfunction0> {
    let lambda = table.lambda(s)?;
    let (a, b, p) = (problem.a(), problem.b(), problem.p());
    for &x in grid_left {
        if !(-a..=0.0).contains(&x) {
            return Err(Error::OutOfRange { x, lo: -a, hi: 0.0 });
        }
    }
    for &x in grid_right {
        if !(0.0..=b).contains(&x) {
            return Err(Error::OutOfRange { x, lo: 0.0, hi: b });
        }
    }
    let (mut cl, mut cr) = ((lambda * b).cos(), -p * (lambda * a).cos());
    if cl.hypot(cr) < 1e-8 {
        cl = p * (lambda * b).sin();
        cr = (lambda * a).sin();
    }
    let mut ef = Eigenfunction0 {
        s,
        lambda,
        amplitude: 1.0,
        coeff_left: cl,
        coeff_right: cr,
        x_left: grid_left.to_vec(),
        y_left: Vec::new(),
        x_right: grid_right.to_vec(),
        y_right: Vec::new(),
        a,
        b,
        p,
    };
    if normalize {
        let yl: Vec<f64> = grid_left.iter().map(|&x| ef.eval_left(x).0).collect();
        let yr: Vec<f64> = grid_right.iter().map(|&x| ef.eval_right(x).0).collect();
        let norm = (trapezoid_sq(grid_left, &yl) + trapezoid_sq(grid_right, &yr)).sqrt();
        if norm > 0.0 {
            ef.amplitude = 1.0 / norm;
        }
    }
    ef.y_left = grid_left.iter().map(|&x| ef.eval_left(x).0).collect();
    ef.y_right = grid_right.iter().map(|&x| ef.eval_right(x).0).collect();
    Ok(ef)
}
