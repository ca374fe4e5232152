//! The perturbed characteristic function `Δ(q, λ) = Δ(0, λ) + Φ(λ)`, the bound
//! on `Φ` and an independent Runge–Kutta shooting evaluation.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::problem::{DerivedShape, PotentialNorms, Segment, SegmentGraphProblem, DEFAULT_QUAD_NODES};
use crate::transform::{boundary_integrals, BoundaryIntegrals, KernelSettings};
use crate::unperturbed::eval_delta0;

pub const DEFAULT_RK_STEPS: usize = 4096;
const MIN_RK_STEPS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Series,
    Shooting,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DeterminantEval {
    pub lambda: Complex64,
    pub delta0: Complex64,
    pub phi: Complex64,
    pub delta_q: Complex64,
    pub phi_bound: f64,
    pub method: Method,
}

/// Evaluates `Δ(q, ·)` for one problem, caching the shape and the potential norms.
#[derive(Clone, Debug)]
pub struct Evaluator {
    problem: SegmentGraphProblem,
    shape: DerivedShape,
    norms: PotentialNorms,
    settings: KernelSettings,
}

impl Evaluator {
    pub fn new(problem: &SegmentGraphProblem, settings: KernelSettings) -> Result<Self> {
        settings.validate()?;
        Ok(Evaluator {
            problem: problem.clone(),
            shape: problem.derive_shape(),
            norms: problem.potential_norms(DEFAULT_QUAD_NODES)?,
            settings,
        })
    }

    pub fn problem(&self) -> &SegmentGraphProblem {
        &self.problem
    }

    pub fn shape(&self) -> &DerivedShape {
        &self.shape
    }

    pub fn norms(&self) -> &PotentialNorms {
        &self.norms
    }

    pub fn settings(&self) -> &KernelSettings {
        &self.settings
    }

    pub fn delta0(&self, lambda: Complex64) -> Complex64 {
        eval_delta0(&self.shape, lambda)
    }

    fn integrals(&self, lambda: Complex64) -> Result<(BoundaryIntegrals, BoundaryIntegrals)> {
        Ok((
            boundary_integrals(&self.problem, Segment::Left, lambda, &self.settings)?,
            boundary_integrals(&self.problem, Segment::Right, lambda, &self.settings)?,
        ))
    }

    pub fn phi(&self, lambda: Complex64) -> Result<Complex64> {
        let (l, r) = self.integrals(lambda)?;
        Ok(phi_from_integrals(&self.shape, lambda, &l, &r))
    }

    /// `cosh(βa) cosh(βb) (δ1|λ| + δ2)`, with the safe constants when `|p| > 1`.
    pub fn phi_bound(&self, lambda: Complex64) -> f64 {
        let (d1, d2) = self.norms.active_deltas();
        let beta = lambda.im;
        (beta * self.shape.a).cosh() * (beta * self.shape.b).cosh() * (d1 * lambda.norm() + d2)
    }

    /// `Δ(0, λ) + Φ(λ)`, checked against the determinant of the corrected boundary system.
    pub fn eval(&self, lambda: Complex64) -> Result<DeterminantEval> {
        let (l, r) = self.integrals(lambda)?;
        let delta0 = self.delta0(lambda);
        let phi = phi_from_integrals(&self.shape, lambda, &l, &r);
        let det = det_from_integrals(&self.shape, lambda, &l, &r);
        let delta_q = delta0 + phi;
        let gap = (det - delta_q).norm();
        let scale = 1.0 + delta0.norm() + phi.norm() + entry_scale(&self.shape, lambda, &l, &r);
        if gap > 1e-10 * scale {
            return Err(Error::Solver(format!("determinant identity off by {gap:e} at λ = {lambda}")));
        }
        Ok(DeterminantEval { lambda, delta0, phi, delta_q, phi_bound: self.phi_bound(lambda), method: Method::Series })
    }

    pub fn delta_q(&self, lambda: Complex64) -> Result<Complex64> {
        Ok(self.eval(lambda)?.delta_q)
    }

    pub fn eval_many(&self, lambdas: &[Complex64], exec: Execution) -> Result<Vec<DeterminantEval>> {
        exec.try_map(lambdas, |&l| self.eval(l))
    }

    /// Shooting evaluation packaged like [`Evaluator::eval`]; `phi` is `Δ - Δ0`.
    pub fn eval_shooting(&self, lambda: Complex64, rk_steps: usize) -> Result<DeterminantEval> {
        let delta_q = shooting_delta_q(&self.problem, lambda, rk_steps)?;
        let delta0 = self.delta0(lambda);
        Ok(DeterminantEval {
            lambda,
            delta0,
            phi: delta_q - delta0,
            delta_q,
            phi_bound: self.phi_bound(lambda),
            method: Method::Shooting,
        })
    }
}

fn trig(shape: &DerivedShape, lambda: Complex64) -> (Complex64, Complex64, Complex64, Complex64) {
    let la = lambda * shape.a;
    let lb = lambda * shape.b;
    (la.cos(), lambda * la.sin(), lb.cos(), lambda * lb.sin())
}

/// `p²{λ sin λb·I1 − cos λa·I2' − I1·I2'} − λ sin λa·I2 − cos λb·I1' + I2·I1'`.
fn phi_from_integrals(shape: &DerivedShape, lambda: Complex64, l: &BoundaryIntegrals, r: &BoundaryIntegrals) -> Complex64 {
    let (ca, lsa, cb, lsb) = trig(shape, lambda);
    let (i1, i1p, i2, i2p) = (l.value, l.derivative, r.value, r.derivative);
    let p2 = shape.p * shape.p;
    (lsb * i1 - ca * i2p - i1 * i2p) * p2 - lsa * i2 - cb * i1p + i2 * i1p
}

fn det_from_integrals(shape: &DerivedShape, lambda: Complex64, l: &BoundaryIntegrals, r: &BoundaryIntegrals) -> Complex64 {
    let (ca, lsa, cb, lsb) = trig(shape, lambda);
    let p = shape.p;
    let m11 = (ca + l.value) * p;
    let m12 = cb - r.value;
    let m21 = -lsa + l.derivative;
    let m22 = (lsb - r.derivative) * p;
    m11 * m22 - m12 * m21
}

fn entry_scale(shape: &DerivedShape, lambda: Complex64, l: &BoundaryIntegrals, r: &BoundaryIntegrals) -> f64 {
    let (ca, lsa, cb, lsb) = trig(shape, lambda);
    let p = shape.p.abs();
    let m11 = (ca + l.value).norm() * p;
    let m12 = (cb - r.value).norm();
    let m21 = (-lsa + l.derivative).norm();
    let m22 = (lsb - r.derivative).norm() * p;
    m11 * m22 + m12 * m21
}

pub fn eval_phi(problem: &SegmentGraphProblem, lambda: Complex64, settings: &KernelSettings) -> Result<Complex64> {
    Evaluator::new(problem, *settings)?.phi(lambda)
}

pub fn eval_delta_q(problem: &SegmentGraphProblem, lambda: Complex64, settings: &KernelSettings) -> Result<DeterminantEval> {
    Evaluator::new(problem, *settings)?.eval(lambda)
}

pub fn phi_bound(problem: &SegmentGraphProblem, lambda: Complex64) -> Result<f64> {
    Ok(Evaluator::new(problem, KernelSettings::default())?.phi_bound(lambda))
}

/// Classical RK4 for `u'' = (q - λ²) u` over `steps` equal steps from `x0`
/// to `x1` (either direction), starting from `u = 1, u' = 0`.
fn rk4_neumann(
    problem: &SegmentGraphProblem,
    segment: Segment,
    lambda: Complex64,
    x0: f64,
    x1: f64,
    steps: usize,
) -> (Complex64, Complex64) {
    let h = (x1 - x0) / steps as f64;
    let l2 = lambda * lambda;
    let q = |j: usize| problem.potential_at(segment, if j == 2 * steps { x1 } else { x0 + 0.5 * h * j as f64 });
    let mut u = Complex64::new(1.0, 0.0);
    let mut v = Complex64::new(0.0, 0.0);
    let mut q0 = q(0);
    for n in 0..steps {
        let qm = q(2 * n + 1);
        let q1 = q(2 * n + 2);
        let f = |qq: f64, u: Complex64| u * (Complex64::new(qq, 0.0) - l2);
        let k1u = v;
        let k1v = f(q0, u);
        let k2u = v + k1v * (0.5 * h);
        let k2v = f(qm, u + k1u * (0.5 * h));
        let k3u = v + k2v * (0.5 * h);
        let k3v = f(qm, u + k2u * (0.5 * h));
        let k4u = v + k3v * h;
        let k4v = f(q1, u + k3u * h);
        u += (k1u + k2u * 2.0 + k3u * 2.0 + k4u) * (h / 6.0);
        v += (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (h / 6.0);
        q0 = q1;
    }
    (u, v)
}

/// `det[[p u1(0), u2(0)], [u1'(0), p u2'(0)]]` with `u1`, `u2` integrated
/// from their Neumann ends by fixed-step RK4.
pub fn shooting_delta_q(problem: &SegmentGraphProblem, lambda: Complex64, rk_steps: usize) -> Result<Complex64> {
    if rk_steps < MIN_RK_STEPS {
        return Err(Error::InvalidArgument(format!("rk_steps must be at least {MIN_RK_STEPS}, got {rk_steps}")));
    }
    let p = problem.p();
    let (u1, d1) = rk4_neumann(problem, Segment::Left, lambda, -problem.a(), 0.0, rk_steps);
    let (u2, d2) = rk4_neumann(problem, Segment::Right, lambda, problem.b(), 0.0, rk_steps);
    Ok(u1 * d2 * (p * p) - u2 * d1)
}

/// Richardson combination `(16 D(2N) - D(N)) / 15` of two RK4 runs.
pub fn shooting_delta_q_extrapolated(problem: &SegmentGraphProblem, lambda: Complex64, rk_steps: usize) -> Result<Complex64> {
    let coarse = shooting_delta_q(problem, lambda, rk_steps)?;
    let fine = shooting_delta_q(problem, lambda, 2 * rk_steps)?;
    Ok((fine * 16.0 - coarse) / 15.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::PotentialProfile;

    fn cx(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn config_a(c1: f64, c2: f64) -> SegmentGraphProblem {
        SegmentGraphProblem::with_constants(1.0, 2.0, 0.5, c1, c2).unwrap()
    }

    fn smooth(p: f64) -> SegmentGraphProblem {
        let q1 = PotentialProfile::CosineSeries { coeffs: vec![0.02, -0.03, 0.01] };
        let q2 = PotentialProfile::CosineSeries { coeffs: vec![0.01, 0.02, 0.0, -0.015] };
        SegmentGraphProblem::new(1.0, 2.0, p, q1, q2).unwrap()
    }

    #[test]
    fn zero_potential_gives_zero_phi() {
        let ev = Evaluator::new(&config_a(0.0, 0.0), KernelSettings::default()).unwrap();
        for l in [cx(0.5, 0.0), cx(3.0, 2.0), cx(0.0, 0.0), cx(17.0, -1.0)] {
            let e = ev.eval(l).unwrap();
            assert_eq!(e.phi, cx(0.0, 0.0));
            assert_eq!(e.delta_q, e.delta0);
            assert_eq!(e.phi_bound, 0.0);
        }
    }

    #[test]
    fn constant_potential_shifts_the_argument() {
        // With q1 = q2 = c the solutions are cosines of μ = √(λ² - c), so Δ(q, λ) = Δ(0, μ).
        let c = 0.01;
        let ev = Evaluator::new(&config_a(c, c), KernelSettings::default()).unwrap();
        for l in [cx(0.2, 0.0), cx(0.886, 0.0), cx(5.0, 0.0), cx(19.9, 0.0), cx(3.0, 2.0), cx(0.5, -1.0)] {
            let mu = (l * l - c).sqrt();
            let exact = ev.delta0(mu);
            let got = ev.delta_q(l).unwrap();
            assert!((got - exact).norm() < 1e-10 * (1.0 + exact.norm()), "{l}: {got} vs {exact}");
        }
    }

    #[test]
    fn phi_within_bound_on_examples() {
        let ev = Evaluator::new(&config_a(1e-4, 1e-4), KernelSettings::default()).unwrap();
        let e = ev.eval(cx(1.0, 0.0)).unwrap();
        assert!((e.phi_bound - 8.003_200_790_139_353e-4).abs() < 1e-15);
        assert!(e.phi.norm() <= e.phi_bound);
        let ev = Evaluator::new(&config_a(0.01, 0.01), KernelSettings::default()).unwrap();
        let l = cx(3.0, 2.0);
        let e = ev.eval(l).unwrap();
        let (d1, d2) = (ev.norms().delta1, ev.norms().delta2);
        let expect = (2.0f64).cosh() * (4.0f64).cosh() * (d1 * 13f64.sqrt() + d2);
        assert!((e.phi_bound - expect).abs() < 1e-12 * expect);
        assert!(e.phi.norm() <= e.phi_bound);
    }

    #[test]
    fn real_bound_is_affine_in_lambda() {
        let ev = Evaluator::new(&smooth(0.5), KernelSettings::default()).unwrap();
        let (d1, d2) = ev.norms().active_deltas();
        assert!((ev.phi_bound(cx(2.5, 0.0)) - (2.5 * d1 + d2)).abs() < 1e-15);
    }

    #[test]
    fn series_matches_shooting() {
        let pr = smooth(0.5);
        let ev = Evaluator::new(&pr, KernelSettings::default()).unwrap();
        for l in [cx(0.3, 0.0), cx(2.0, 0.0), cx(7.7, 0.0), cx(15.0, 0.0), cx(2.0, 1.0), cx(6.0, -0.5)] {
            let s = ev.delta_q(l).unwrap();
            let r = shooting_delta_q_extrapolated(&pr, l, 4096).unwrap();
            assert!((s - r).norm() < 1e-8 * r.norm(), "{l}: {s} vs {r}");
        }
    }

    #[test]
    fn shooting_reduces_to_unperturbed() {
        let sh = config_a(0.0, 0.0).derive_shape();
        for l in [cx(1.0, 0.0), cx(4.0, 1.0)] {
            let d = shooting_delta_q(&config_a(0.0, 0.0), l, 2048).unwrap();
            let e = eval_delta0(&sh, l);
            assert!((d - e).norm() < 1e-10 * (1.0 + e.norm()));
        }
        assert!(shooting_delta_q(&config_a(0.0, 0.0), cx(1.0, 0.0), 32).is_err());
    }

    #[test]
    fn shooting_is_fourth_order() {
        let pr = smooth(0.5);
        let l = cx(6.0, 0.0);
        let limit = shooting_delta_q_extrapolated(&pr, l, 4096).unwrap();
        let e1 = (shooting_delta_q(&pr, l, 256).unwrap() - limit).norm();
        let e2 = (shooting_delta_q(&pr, l, 512).unwrap() - limit).norm();
        let ratio = e1 / e2;
        assert!((14.0..18.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn determinant_is_even_for_real_lambda() {
        let ev = Evaluator::new(&smooth(1.7), KernelSettings::default()).unwrap();
        for x in [0.4, 2.2, 9.1] {
            let plus = ev.delta_q(cx(x, 0.0)).unwrap();
            let minus = ev.delta_q(cx(-x, 0.0)).unwrap();
            assert!((plus - minus).norm() < 1e-12 * (1.0 + plus.norm()));
            assert!(plus.im.abs() < 1e-13);
        }
    }

    #[test]
    fn value_at_zero_is_the_static_determinant() {
        // At λ = 0 the constant-potential determinant is Δ(0, i√c), nonzero.
        let c = 0.04;
        let ev = Evaluator::new(&config_a(c, c), KernelSettings::default()).unwrap();
        let got = ev.delta_q(cx(0.0, 0.0)).unwrap();
        let exact = ev.delta0(cx(0.0, c.sqrt()));
        assert!(exact.norm() > 1e-3);
        assert!((got - exact).norm() < 1e-10);
    }

    #[test]
    fn safe_bound_for_strong_coupling() {
        let pr = smooth(2.0);
        let ev = Evaluator::new(&pr, KernelSettings::default()).unwrap();
        for l in [cx(0.5, 0.0), cx(3.3, 0.0), cx(11.0, 0.0), cx(2.0, 1.0)] {
            let e = ev.eval(l).unwrap();
            assert!(e.phi.norm() <= e.phi_bound, "{l}: {} > {}", e.phi.norm(), e.phi_bound);
        }
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let ev = Evaluator::new(&smooth(0.5), KernelSettings::default()).unwrap();
        let ls: Vec<Complex64> = (1..=16).map(|j| cx(0.5 * j as f64, 0.1)).collect();
        let a = ev.eval_many(&ls, Execution::Sequential).unwrap();
        let b = ev.eval_many(&ls, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }
}
