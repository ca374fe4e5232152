//! Problem instances: segment geometry, coupling constant and potentials,
//! together with the dimensionless shape constants and potential norms that
//! every bound downstream is expressed in.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::simpson;

/// Default composite-Simpson node count for the potential norms.
pub const DEFAULT_QUAD_NODES: usize = 1025;

/// One of the two edges of the graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segment {
    /// `[-a, 0]`, carrying `q1`.
    Left,
    /// `[0, b]`, carrying `q2`.
    Right,
}

/// A real potential on one segment.
///
/// JSON form is internally tagged by `kind`:
/// `{"kind": "constant", "value": v}`,
/// `{"kind": "table", "nodes": [...], "values": [...]}` (piecewise linear),
/// `{"kind": "cosine", "coeffs": [...]}` where term `j` is
/// `coeffs[j] * cos(j*pi*(x - x0)/len)` with `x0` the left end of the segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PotentialProfile {
    Constant {
        value: f64,
    },
    Table {
        nodes: Vec<f64>,
        values: Vec<f64>,
    },
    #[serde(rename = "cosine")]
    CosineSeries {
        coeffs: Vec<f64>,
    },
}

impl PotentialProfile {
    pub fn zero() -> Self {
        PotentialProfile::Constant { value: 0.0 }
    }

    pub fn constant(value: f64) -> Self {
        PotentialProfile::Constant { value }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            PotentialProfile::Constant { value } => *value == 0.0,
            PotentialProfile::Table { values, .. } => values.iter().all(|v| *v == 0.0),
            PotentialProfile::CosineSeries { coeffs } => coeffs.iter().all(|v| *v == 0.0),
        }
    }

    fn validate(&self, lo: f64, hi: f64) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidProblem(msg));
        match self {
            PotentialProfile::Constant { value } if !value.is_finite() => {
                bad(format!("constant potential {value} is not finite"))
            }
            PotentialProfile::Constant { .. } => Ok(()),
            PotentialProfile::Table { nodes, values } => {
                if nodes.len() < 2 || nodes.len() != values.len() {
                    return bad(format!(
                        "table needs at least two nodes with matching values (got {} nodes, {} values)",
                        nodes.len(),
                        values.len()
                    ));
                }
                if nodes.iter().chain(values).any(|v| !v.is_finite()) {
                    return bad("table entries must be finite".into());
                }
                if nodes.windows(2).any(|w| w[1] <= w[0]) {
                    return bad("table nodes must be strictly ascending".into());
                }
                let slack = 1e-12 * (1.0 + (hi - lo).abs());
                if nodes[0] > lo + slack || nodes[nodes.len() - 1] < hi - slack {
                    return bad(format!(
                        "table nodes [{}, {}] do not span the segment [{lo}, {hi}]",
                        nodes[0],
                        nodes[nodes.len() - 1]
                    ));
                }
                Ok(())
            }
            PotentialProfile::CosineSeries { coeffs } if coeffs.iter().any(|v| !v.is_finite()) => {
                bad("cosine coefficients must be finite".into())
            }
            PotentialProfile::CosineSeries { .. } => Ok(()),
        }
    }

    /// Evaluates at `x` on the segment `[lo, hi]`; no range check.
    pub(crate) fn eval_on(&self, x: f64, lo: f64, hi: f64) -> f64 {
        match self {
            PotentialProfile::Constant { value } => *value,
            PotentialProfile::Table { nodes, values } => {
                let n = nodes.len();
                let j = nodes.partition_point(|&v| v <= x).clamp(1, n - 1);
                let (x0, x1) = (nodes[j - 1], nodes[j]);
                let s = ((x - x0) / (x1 - x0)).clamp(0.0, 1.0);
                values[j - 1] + s * (values[j] - values[j - 1])
            }
            PotentialProfile::CosineSeries { coeffs } => {
                let theta = std::f64::consts::PI * (x - lo) / (hi - lo);
                coeffs.iter().enumerate().map(|(j, c)| c * (j as f64 * theta).cos()).sum()
            }
        }
    }

    /// The profile `x ↦ self(-x)` on the reflected segment `[-hi, -lo]`.
    pub fn mirrored(&self) -> Self {
        match self {
            PotentialProfile::Constant { value } => PotentialProfile::Constant { value: *value },
            PotentialProfile::Table { nodes, values } => PotentialProfile::Table {
                nodes: nodes.iter().rev().map(|v| -v).collect(),
                values: values.iter().rev().copied().collect(),
            },
            PotentialProfile::CosineSeries { coeffs } => PotentialProfile::CosineSeries {
                coeffs: coeffs.iter().enumerate().map(|(j, c)| if j % 2 == 0 { *c } else { -c }).collect(),
            },
        }
    }

    pub fn scaled(&self, eps: f64) -> Self {
        match self {
            PotentialProfile::Constant { value } => PotentialProfile::Constant { value: eps * value },
            PotentialProfile::Table { nodes, values } => {
                PotentialProfile::Table { nodes: nodes.clone(), values: values.iter().map(|v| eps * v).collect() }
            }
            PotentialProfile::CosineSeries { coeffs } => {
                PotentialProfile::CosineSeries { coeffs: coeffs.iter().map(|v| eps * v).collect() }
            }
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemDoc {
    a: f64,
    b: f64,
    p: f64,
    q1: PotentialProfile,
    q2: PotentialProfile,
}

impl TryFrom<ProblemDoc> for SegmentGraphProblem {
    type Error = Error;

    fn try_from(doc: ProblemDoc) -> Result<Self> {
        SegmentGraphProblem::new(doc.a, doc.b, doc.p, doc.q1, doc.q2)
    }
}

/// `-y'' + q y` on `[-a, 0] ∪ [0, b]` with Neumann outer ends and the junction
/// conditions `y2(0) + p y1(0) = 0`, `y1'(0) + p y2'(0) = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProblemDoc")]
pub struct SegmentGraphProblem {
    a: f64,
    b: f64,
    p: f64,
    q1: PotentialProfile,
    q2: PotentialProfile,
}

impl SegmentGraphProblem {
    pub fn new(a: f64, b: f64, p: f64, q1: PotentialProfile, q2: PotentialProfile) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::InvalidProblem(format!("a must be a positive length, got {a}")));
        }
        if !(b.is_finite() && b > 0.0) {
            return Err(Error::InvalidProblem(format!("b must be a positive length, got {b}")));
        }
        if !p.is_finite() || p == 0.0 {
            return Err(Error::InvalidProblem(format!("p must be finite and nonzero, got {p}")));
        }
        q1.validate(-a, 0.0)?;
        q2.validate(0.0, b)?;
        Ok(SegmentGraphProblem { a, b, p, q1, q2 })
    }

    /// Zero potentials on both segments.
    pub fn unperturbed(a: f64, b: f64, p: f64) -> Result<Self> {
        Self::new(a, b, p, PotentialProfile::zero(), PotentialProfile::zero())
    }

    /// Constant potentials `q1 ≡ c1`, `q2 ≡ c2`.
    pub fn with_constants(a: f64, b: f64, p: f64, c1: f64, c2: f64) -> Result<Self> {
        Self::new(a, b, p, PotentialProfile::constant(c1), PotentialProfile::constant(c2))
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q1(&self) -> &PotentialProfile {
        &self.q1
    }

    pub fn q2(&self) -> &PotentialProfile {
        &self.q2
    }

    pub fn potential(&self, segment: Segment) -> &PotentialProfile {
        match segment {
            Segment::Left => &self.q1,
            Segment::Right => &self.q2,
        }
    }

    pub fn interval(&self, segment: Segment) -> (f64, f64) {
        match segment {
            Segment::Left => (-self.a, 0.0),
            Segment::Right => (0.0, self.b),
        }
    }

    pub fn total_length(&self) -> f64 {
        self.a + self.b
    }

    pub fn has_zero_potential(&self) -> bool {
        self.q1.is_zero() && self.q2.is_zero()
    }

    /// Potential value at `x`, which must lie in the segment's closed interval.
    pub fn eval_potential(&self, segment: Segment, x: f64) -> Result<f64> {
        let (lo, hi) = self.interval(segment);
        if !(lo..=hi).contains(&x) {
            return Err(Error::OutOfRange { x, lo, hi });
        }
        Ok(self.potential_at(segment, x))
    }

    pub(crate) fn potential_at(&self, segment: Segment, x: f64) -> f64 {
        let (lo, hi) = self.interval(segment);
        self.potential(segment).eval_on(x, lo, hi)
    }

    /// Same problem with both potentials scaled by `eps`.
    pub fn scaled_potentials(&self, eps: f64) -> Self {
        SegmentGraphProblem { q1: self.q1.scaled(eps), q2: self.q2.scaled(eps), ..self.clone() }
    }

    pub fn with_potentials(&self, q1: PotentialProfile, q2: PotentialProfile) -> Result<Self> {
        Self::new(self.a, self.b, self.p, q1, q2)
    }

    /// The reflection `x ↦ -x`: segments swap, coupling becomes `1/p`.
    /// The reflected operator is unitarily equivalent to the original one.
    pub fn mirrored(&self) -> Self {
        SegmentGraphProblem { a: self.b, b: self.a, p: 1.0 / self.p, q1: self.q2.mirrored(), q2: self.q1.mirrored() }
    }

    pub fn derive_shape(&self) -> DerivedShape {
        derive_shape(self)
    }

    pub fn potential_norms(&self, quad_nodes: usize) -> Result<PotentialNorms> {
        potential_norms(self, quad_nodes)
    }
}

/// Dimensionless constants of the geometry and coupling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedShape {
    pub a: f64,
    pub b: f64,
    pub p: f64,
    /// `a + b`
    pub c: f64,
    /// `(1 - p²)/(1 + p²)`
    pub k: f64,
    /// `(b - a)/(b + a)`
    pub q: f64,
    /// `(1 - |q|)(1 - |k|)`
    pub r: f64,
    /// `|q| r / (c (1 + |k|))`, the neighbourhood where the Taylor lower bound on Δ(0,·) holds.
    #[serde(rename = "R")]
    pub outer_radius: f64,
    /// `a = b`: the localization constants vanish and no certificate can be issued.
    pub degenerate: bool,
}

impl DerivedShape {
    /// Second closed form of `r`, `4 min(a,b) min(1,p²) / ((a+b)(p²+1))`.
    pub fn r_closed_form(&self) -> f64 {
        let p2 = self.p * self.p;
        4.0 * self.a.min(self.b) * p2.min(1.0) / (self.c * (p2 + 1.0))
    }
}

pub fn derive_shape(problem: &SegmentGraphProblem) -> DerivedShape {
    let (a, b, p) = (problem.a, problem.b, problem.p);
    let p2 = p * p;
    let c = a + b;
    let k = (1.0 - p2) / (1.0 + p2);
    let q = (b - a) / c;
    let r = (1.0 - q.abs()) * (1.0 - k.abs());
    let outer_radius = q.abs() * r / (c * (1.0 + k.abs()));
    DerivedShape { a, b, p, c, k, q, r, outer_radius, degenerate: q == 0.0 || r <= 0.0 }
}

/// Cumulative L¹ norms of the potentials and the perturbation constants built from them.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PotentialNorms {
    /// `σ1 = ∫_{-a}^0 |q1|`
    pub sigma1: f64,
    /// `σ2 = ∫_0^b |q2|`
    pub sigma2: f64,
    pub delta1: f64,
    pub delta2: f64,
    /// `max(1, p²) · delta1`, valid for every `p`.
    pub delta1_safe: f64,
    pub delta2_safe: f64,
    pub quad_nodes: usize,
    #[serde(skip)]
    problem: SegmentGraphProblem,
}

impl PotentialNorms {
    /// `σ1(x) = ∫_{-a}^x |q1|` for `x ∈ [-a, 0]`.
    pub fn sigma1_at(&self, x: f64) -> Result<f64> {
        let a = self.problem.a;
        if !(-a..=0.0).contains(&x) {
            return Err(Error::OutOfRange { x, lo: -a, hi: 0.0 });
        }
        Ok(abs_integral(&self.problem, Segment::Left, -a, x, self.quad_nodes))
    }

    /// `σ2(x) = ∫_x^b |q2|` for `x ∈ [0, b]`.
    pub fn sigma2_at(&self, x: f64) -> Result<f64> {
        let b = self.problem.b;
        if !(0.0..=b).contains(&x) {
            return Err(Error::OutOfRange { x, lo: 0.0, hi: b });
        }
        Ok(abs_integral(&self.problem, Segment::Right, x, b, self.quad_nodes))
    }

    /// The pair the Φ bound should use: the plain constants for `|p| ≤ 1`,
    /// the safe ones otherwise.
    pub fn active_deltas(&self) -> (f64, f64) {
        if self.problem.p.abs() > 1.0 {
            (self.delta1_safe, self.delta2_safe)
        } else {
            (self.delta1, self.delta2)
        }
    }
}

fn abs_integral(problem: &SegmentGraphProblem, segment: Segment, lo: f64, hi: f64, nodes: usize) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let h = (hi - lo) / (nodes - 1) as f64;
    let f: Vec<f64> = (0..nodes)
        .map(|j| {
            let x = if j + 1 == nodes { hi } else { lo + j as f64 * h };
            problem.potential_at(segment, x).abs()
        })
        .collect();
    simpson(&f, h)
}

/// Perturbation constants
/// `δ1 = σ1 a e^{σ1 a} + σ2 b e^{σ2 b}` and
/// `δ2 = σ1 e^{σ1 a} + σ2 e^{σ2 b} + σ1 σ2 (a+b) e^{σ1 a + σ2 b}`.
pub fn potential_norms(problem: &SegmentGraphProblem, quad_nodes: usize) -> Result<PotentialNorms> {
    if quad_nodes < 3 || quad_nodes.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("quad_nodes must be odd and >= 3, got {quad_nodes}")));
    }
    let (a, b) = (problem.a, problem.b);
    let sigma1 = abs_integral(problem, Segment::Left, -a, 0.0, quad_nodes);
    let sigma2 = abs_integral(problem, Segment::Right, 0.0, b, quad_nodes);
    let e1 = (sigma1 * a).exp();
    let e2 = (sigma2 * b).exp();
    let delta1 = sigma1 * a * e1 + sigma2 * b * e2;
    let delta2 = sigma1 * e1 + sigma2 * e2 + sigma1 * sigma2 * (a + b) * e1 * e2;
    let m = (problem.p * problem.p).max(1.0);
    Ok(PotentialNorms {
        sigma1,
        sigma2,
        delta1,
        delta2,
        delta1_safe: m * delta1,
        delta2_safe: m * delta2,
        quad_nodes,
        problem: problem.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn config_a(c1: f64, c2: f64) -> SegmentGraphProblem {
        SegmentGraphProblem::with_constants(1.0, 2.0, 0.5, c1, c2).unwrap()
    }

    #[test]
    fn shape_of_config_a() {
        let s = config_a(0.0, 0.0).derive_shape();
        assert!((s.k - 0.6).abs() < 1e-15);
        assert!((s.q - 1.0 / 3.0).abs() < 1e-15);
        assert!((s.r - 4.0 / 15.0).abs() < 1e-15);
        assert!((s.outer_radius - 1.0 / 54.0).abs() < 1e-15);
        assert!(!s.degenerate);
    }

    #[test]
    fn symmetric_unit_coupling_is_degenerate() {
        let s = SegmentGraphProblem::unperturbed(1.0, 1.0, 1.0).unwrap().derive_shape();
        assert_eq!(s.k, 0.0);
        assert_eq!(s.q, 0.0);
        assert!(s.degenerate);
    }

    #[test]
    fn strong_coupling_flips_k() {
        let s = SegmentGraphProblem::unperturbed(1.0, 2.0, 2.0).unwrap().derive_shape();
        assert!((s.k + 0.6).abs() < 1e-15);
        assert!(s.k.abs() < 1.0);
    }

    #[test]
    fn rejects_invalid_instances() {
        assert!(SegmentGraphProblem::unperturbed(0.0, 1.0, 1.0).is_err());
        assert!(SegmentGraphProblem::unperturbed(1.0, -1.0, 1.0).is_err());
        assert!(SegmentGraphProblem::unperturbed(1.0, 1.0, 0.0).is_err());
        let short = PotentialProfile::Table { nodes: vec![-0.5, 0.0], values: vec![1.0, 1.0] };
        assert!(SegmentGraphProblem::new(1.0, 1.0, 1.0, short, PotentialProfile::zero()).is_err());
        let unsorted = PotentialProfile::Table { nodes: vec![-1.0, -1.0, 0.0], values: vec![1.0, 1.0, 1.0] };
        assert!(SegmentGraphProblem::new(1.0, 1.0, 1.0, unsorted, PotentialProfile::zero()).is_err());
    }

    #[test]
    fn profile_evaluation() {
        let table = PotentialProfile::Table { nodes: vec![-1.0, 0.0], values: vec![1.0, 3.0] };
        let cosine = PotentialProfile::CosineSeries { coeffs: vec![0.0, 1.0] };
        let pr = SegmentGraphProblem::new(1.0, 2.0, 0.5, table, cosine).unwrap();
        assert_eq!(pr.eval_potential(Segment::Left, -0.5).unwrap(), 2.0);
        assert_eq!(pr.eval_potential(Segment::Right, 0.0).unwrap(), 1.0);
        assert!((pr.eval_potential(Segment::Right, 2.0).unwrap() + 1.0).abs() < 1e-15);
        let c = config_a(0.5, 0.5);
        assert_eq!(c.eval_potential(Segment::Left, -0.3).unwrap(), 0.5);
        assert!(matches!(c.eval_potential(Segment::Left, 0.1), Err(Error::OutOfRange { .. })));
        assert!(matches!(c.eval_potential(Segment::Right, -1e-9), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn mirrored_profiles_reflect() {
        let table = PotentialProfile::Table { nodes: vec![-1.0, -0.25, 0.0], values: vec![1.0, 0.2, 3.0] };
        let cosine = PotentialProfile::CosineSeries { coeffs: vec![0.1, 0.4, -0.3, 0.2] };
        let pr = SegmentGraphProblem::new(1.0, 2.0, 0.5, table, cosine).unwrap();
        let m = pr.mirrored();
        assert_eq!((m.a(), m.b(), m.p()), (2.0, 1.0, 2.0));
        for j in 0..=20 {
            let x = -1.0 + j as f64 / 20.0;
            let lhs = m.eval_potential(Segment::Right, -x).unwrap();
            assert!((lhs - pr.eval_potential(Segment::Left, x).unwrap()).abs() < 1e-14);
            let y = 2.0 * j as f64 / 20.0;
            let lhs = m.eval_potential(Segment::Left, -y).unwrap();
            assert!((lhs - pr.eval_potential(Segment::Right, y).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let doc = r#"{"a": 1, "b": 2, "p": 0.5,
            "q1": {"kind": "constant", "value": 0.01},
            "q2": {"kind": "table", "nodes": [0, 1, 2], "values": [0, 0.1, 0]}}"#;
        let pr = SegmentGraphProblem::from_json_str(doc).unwrap();
        assert_eq!(pr.q1(), &PotentialProfile::constant(0.01));
        let back = SegmentGraphProblem::from_json_str(&serde_json::to_string(&pr).unwrap()).unwrap();
        assert_eq!(back, pr);

        let extra = r#"{"a": 1, "b": 2, "p": 0.5, "z": 1,
            "q1": {"kind": "constant", "value": 0}, "q2": {"kind": "constant", "value": 0}}"#;
        assert!(SegmentGraphProblem::from_json_str(extra).is_err());
        let extra_inner = r#"{"a": 1, "b": 2, "p": 0.5,
            "q1": {"kind": "constant", "value": 0, "w": 2}, "q2": {"kind": "constant", "value": 0}}"#;
        assert!(SegmentGraphProblem::from_json_str(extra_inner).is_err());
        let zero_p = r#"{"a": 1, "b": 2, "p": 0,
            "q1": {"kind": "constant", "value": 0}, "q2": {"kind": "constant", "value": 0}}"#;
        assert!(SegmentGraphProblem::from_json_str(zero_p).is_err());
    }

    #[test]
    fn norms_vanish_for_zero_potentials() {
        let n = config_a(0.0, 0.0).potential_norms(DEFAULT_QUAD_NODES).unwrap();
        assert_eq!((n.sigma1, n.sigma2, n.delta1, n.delta2), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(n.sigma1_at(-0.5).unwrap(), 0.0);
    }

    #[test]
    fn norms_of_constant_potentials() {
        // Exact: σ1 = 0.01, σ2 = 0.04, then direct substitution.
        let n = config_a(0.01, 0.02).potential_norms(DEFAULT_QUAD_NODES).unwrap();
        assert!((n.sigma1 - 0.01).abs() < 1e-15);
        assert!((n.sigma2 - 0.04).abs() < 1e-15);
        assert!((n.delta1 - 0.096_763_467_084_838_36).abs() < 1e-14);
        assert!((n.delta2 - 0.054_744_993_518_286_28).abs() < 1e-14);

        let n = config_a(1e-4, 1e-4).potential_norms(DEFAULT_QUAD_NODES).unwrap();
        assert!((n.sigma1 - 1e-4).abs() < 1e-17);
        assert!((n.sigma2 - 2e-4).abs() < 1e-17);
        assert!((n.delta1 - 5.001_700_325_042_838e-4).abs() < 1e-15);
        assert!((n.delta2 - 3.001_500_465_096_515e-4).abs() < 1e-15);
        assert!((n.sigma1_at(-0.5).unwrap() - 5e-5).abs() < 1e-17);
        assert!((n.sigma2_at(0.5).unwrap() - 1.5e-4).abs() < 1e-17);
    }

    #[test]
    fn safe_deltas() {
        let weak = config_a(0.01, 0.02).potential_norms(65).unwrap();
        assert_eq!(weak.delta1_safe, weak.delta1);
        assert_eq!(weak.active_deltas(), (weak.delta1, weak.delta2));
        let strong = SegmentGraphProblem::with_constants(1.0, 2.0, 2.0, 0.01, 0.02).unwrap().potential_norms(65).unwrap();
        assert!((strong.delta1_safe - 4.0 * strong.delta1).abs() < 1e-16);
        assert!(strong.delta2_safe > strong.delta2);
        assert_eq!(strong.active_deltas(), (strong.delta1_safe, strong.delta2_safe));
        assert!(config_a(0.0, 0.0).potential_norms(4).is_err());
    }

    #[test]
    fn sigma_functions_are_monotone() {
        let q1 = PotentialProfile::CosineSeries { coeffs: vec![0.05, 0.1, -0.02] };
        let q2 = PotentialProfile::Table { nodes: vec![0.0, 1.0, 2.0], values: vec![0.0, -0.3, 0.1] };
        let pr = SegmentGraphProblem::new(1.0, 2.0, 0.5, q1, q2).unwrap();
        let n = pr.potential_norms(257).unwrap();
        let mut prev = -1.0;
        for j in 0..=50 {
            let v = n.sigma1_at(-1.0 + j as f64 / 50.0).unwrap();
            assert!(v >= prev);
            prev = v;
        }
        let mut prev = f64::INFINITY;
        for j in 0..=50 {
            let v = n.sigma2_at(2.0 * j as f64 / 50.0).unwrap();
            assert!(v >= 0.0 && v <= prev);
            prev = v;
        }
    }

    #[test]
    fn sigma_quadrature_converges_for_smooth_profiles() {
        let smooth = [
            PotentialProfile::constant(0.3),
            PotentialProfile::CosineSeries { coeffs: vec![0.5, 0.2, 0.1] },
            PotentialProfile::CosineSeries { coeffs: vec![-0.4, 0.1, 0.05, 0.02] },
        ];
        for q in smooth {
            let pr = SegmentGraphProblem::new(1.5, 0.7, 0.5, q.clone(), q.mirrored()).unwrap();
            let coarse = pr.potential_norms(2 * 256 + 1).unwrap();
            let fine = pr.potential_norms(4 * 256 + 1).unwrap();
            for x in [-1.5, -1.0, -0.3, 0.0] {
                assert!((coarse.sigma1_at(x).unwrap() - fine.sigma1_at(x).unwrap()).abs() < 1e-10);
            }
            assert!((coarse.sigma2 - fine.sigma2).abs() < 1e-10);
        }
    }

    proptest! {
        #[test]
        fn both_closed_forms_of_r_agree(a in 0.1f64..10.0, b in 0.1f64..10.0, p in -5.0f64..5.0) {
            prop_assume!(p.abs() > 1e-6);
            let s = SegmentGraphProblem::unperturbed(a, b, p).unwrap().derive_shape();
            let alt = s.r_closed_form();
            prop_assert!((s.r - alt).abs() <= 1e-12 * alt.abs() + 1e-15);
            prop_assert!(s.k.abs() < 1.0 && s.q.abs() < 1.0);
            if !s.degenerate {
                prop_assert!(s.r > 0.0 && s.r < 1.0);
            }
        }

        #[test]
        fn deltas_monotone_under_scaling(e1 in 0.0f64..1.0, e2 in 0.0f64..1.0) {
            let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
            let q1 = PotentialProfile::CosineSeries { coeffs: vec![0.2, -0.1, 0.05] };
            let q2 = PotentialProfile::Table { nodes: vec![0.0, 1.0, 2.0], values: vec![0.3, -0.2, 0.1] };
            let base = SegmentGraphProblem::new(1.0, 2.0, 0.5, q1, q2).unwrap();
            let nlo = base.scaled_potentials(lo).potential_norms(129).unwrap();
            let nhi = base.scaled_potentials(hi).potential_norms(129).unwrap();
            prop_assert!(nlo.delta1 <= nhi.delta1 && nlo.delta2 <= nhi.delta2);
        }
    }
}
