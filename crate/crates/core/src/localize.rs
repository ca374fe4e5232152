//! Locating the perturbed real roots inside their certified intervals.

use num_complex::Complex64;
use serde::Serialize;

use crate::bounds::{circle_winding, smallness_condition, ConstantSet, SmallnessReport};
use crate::determinant::Evaluator;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::problem::SegmentGraphProblem;
use crate::transform::KernelSettings;
use crate::unperturbed::SpectrumTable;

/// Points per radius in the interval and annulus scans.
pub const SCAN_DIVISIONS: usize = 64;
/// In advisory mode the search radius never exceeds this fraction of the
/// distance to the nearest neighbouring root.
pub const ADVISORY_GAP_FRACTION: f64 = 0.45;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LocalizeOptions {
    pub settings: KernelSettings,
    pub bisect_tol: f64,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for LocalizeOptions {
    fn default() -> Self {
        LocalizeOptions { settings: KernelSettings::default(), bisect_tol: 1e-12, exec: Execution::Parallel }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalizedRoot {
    pub s: usize,
    pub lambda0: f64,
    /// Certified radius, absent for a degenerate shape.
    pub rho: Option<f64>,
    /// Radius actually searched.
    pub radius: f64,
    pub lambda_q: Option<f64>,
    pub residual: Option<f64>,
    pub sign_changes: usize,
    /// Zero count of `Δ(q, ·)` on the circle of radius `radius` around `λ_s(0)`.
    pub winding: Option<i64>,
    pub unique: bool,
    /// `true`/`false` when the annulus `radius < |λ - λ_s(0)| < R` was scanned.
    pub annulus_clear: Option<bool>,
    pub oracle_dev: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalizationReport {
    pub constants: ConstantSet,
    /// Set when the certificate does not apply and radii are heuristic.
    pub advisory: bool,
    pub smallness: SmallnessReport,
    #[serde(rename = "R")]
    pub outer_radius: f64,
    pub roots: Vec<LocalizedRoot>,
}

fn bisect<F: Fn(f64) -> Result<f64>>(f: &F, mut lo: f64, mut hi: f64, mut flo: f64, tol: f64) -> Result<f64> {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn count_changes(values: &[f64]) -> Vec<usize> {
    (0..values.len() - 1).filter(|&j| values[j] == 0.0 || (values[j] > 0.0) != (values[j + 1] > 0.0)).collect()
}

fn localize_one(
    ev: &Evaluator,
    table: &SpectrumTable,
    s: usize,
    rho: Option<f64>,
    certified: bool,
    opts: &LocalizeOptions,
) -> Result<LocalizedRoot> {
    let lambda0 = table.lambda(s)?;
    let outer = ev.shape().outer_radius;
    let gap = {
        let below = if s >= 1 { lambda0 - table.lambda(s - 1)? } else { f64::INFINITY };
        let above = table.lambda(s + 1).map(|x| x - lambda0).unwrap_or(below);
        below.min(above)
    };
    let radius = match (rho, certified) {
        (Some(r), true) => r,
        (Some(r), false) => r.min(ADVISORY_GAP_FRACTION * gap),
        (None, _) => ADVISORY_GAP_FRACTION * gap,
    };
    let f = |l: f64| -> Result<f64> { Ok(ev.delta_q(Complex64::new(l, 0.0))?.re) };

    if ev.problem().has_zero_potential() {
        return Ok(LocalizedRoot {
            s,
            lambda0,
            rho,
            radius,
            lambda_q: Some(lambda0),
            residual: Some(0.0),
            sign_changes: 1,
            winding: Some(1),
            unique: true,
            annulus_clear: (radius < outer).then_some(true),
            oracle_dev: None,
        });
    }

    let step = radius / SCAN_DIVISIONS as f64;
    let xs: Vec<f64> = (0..=2 * SCAN_DIVISIONS).map(|j| lambda0 - radius + j as f64 * step).collect();
    let vals = xs.iter().map(|&x| f(x)).collect::<Result<Vec<f64>>>()?;
    let changes = count_changes(&vals);

    let (lambda_q, residual) = match changes.iter().min_by(|&&a, &&b| {
        let da = (0.5 * (xs[a] + xs[a + 1]) - lambda0).abs();
        let db = (0.5 * (xs[b] + xs[b + 1]) - lambda0).abs();
        da.total_cmp(&db)
    }) {
        Some(&j) => {
            let root = if vals[j] == 0.0 { xs[j] } else { bisect(&f, xs[j], xs[j + 1], vals[j], opts.bisect_tol)? };
            (Some(root), Some(ev.delta_q(Complex64::new(root, 0.0))?.norm()))
        }
        None => (None, None),
    };

    let winding =
        if radius > 0.0 { Some(circle_winding(|z| ev.delta_q(z), lambda0, radius, Execution::Sequential)?.0) } else { None };

    let annulus_clear = if radius < outer {
        let astep = (outer - radius) / SCAN_DIVISIONS as f64;
        let mut clear = true;
        for side in [-1.0, 1.0] {
            let pts: Vec<f64> = (0..SCAN_DIVISIONS).map(|j| lambda0 + side * (radius + j as f64 * astep)).collect();
            let v = pts.iter().map(|&x| f(x)).collect::<Result<Vec<f64>>>()?;
            if v.contains(&0.0) || !count_changes(&v).is_empty() {
                clear = false;
            }
        }
        Some(clear)
    } else {
        None
    };

    let unique = changes.len() == 1 && winding == Some(1);
    if certified {
        if changes.is_empty() {
            return Err(Error::CertificateViolation {
                s,
                detail: format!("no sign change of Δ(q, ·) within {lambda0} ± {radius}"),
            });
        }
        if !unique {
            return Err(Error::CertificateViolation {
                s,
                detail: format!("{} sign changes, winding {:?} on the circle of radius {radius}", changes.len(), winding),
            });
        }
        if annulus_clear == Some(false) {
            return Err(Error::CertificateViolation {
                s,
                detail: format!("sign change in the annulus {radius} < |λ - {lambda0}| < {outer}"),
            });
        }
    }
    Ok(LocalizedRoot {
        s,
        lambda0,
        rho,
        radius,
        lambda_q,
        residual,
        sign_changes: changes.len(),
        winding,
        unique,
        annulus_clear,
        oracle_dev: None,
    })
}

/// Locates `λ_s(q)` for `s = 1..=count`. With a valid certificate any missing
/// or non-unique root is a [`Error::CertificateViolation`]; otherwise the run is
/// advisory and the search radius is capped by the neighbouring roots.
pub fn localize(
    problem: &SegmentGraphProblem,
    table: &SpectrumTable,
    count: usize,
    constants: ConstantSet,
    opts: &LocalizeOptions,
) -> Result<LocalizationReport> {
    if count == 0 || count > table.n_max {
        return Err(Error::InvalidArgument(format!("count must lie in 1..={}, got {count}", table.n_max)));
    }
    let ev = Evaluator::new(problem, opts.settings)?;
    let smallness = smallness_condition(problem, constants)?;
    let shape = *ev.shape();
    let rho = if shape.degenerate {
        None
    } else {
        let (d1, d2) = ev.norms().active_deltas();
        Some(crate::bounds::rho_formula(d1, d2, &shape, constants))
    };
    let certified = smallness.holds && rho.is_some_and(|r| r < shape.outer_radius);
    let indices: Vec<usize> = (1..=count).collect();
    let roots = opts.exec.try_map(&indices, |&s| localize_one(&ev, table, s, rho, certified, opts))?;
    Ok(LocalizationReport { constants, advisory: !certified, smallness, outer_radius: shape.outer_radius, roots })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unperturbed::unperturbed_spectrum;

    fn config_a(c1: f64, c2: f64) -> SegmentGraphProblem {
        SegmentGraphProblem::with_constants(1.0, 2.0, 0.5, c1, c2).unwrap()
    }

    #[test]
    fn zero_potential_roots_are_exact() {
        let pr = config_a(0.0, 0.0);
        let t = unperturbed_spectrum(&pr, 5, 1e-12).unwrap();
        let rep = localize(&pr, &t, 5, ConstantSet::Corrected, &LocalizeOptions::default()).unwrap();
        assert!(!rep.advisory);
        for r in &rep.roots {
            assert_eq!(r.lambda_q, Some(r.lambda0));
            assert_eq!(r.residual, Some(0.0));
            assert_eq!(r.rho, Some(0.0));
        }
    }

    #[test]
    fn certified_roots_for_small_constant_potential() {
        let pr = config_a(1e-4, 1e-4);
        let t = unperturbed_spectrum(&pr, 3, 1e-12).unwrap();
        let rep = localize(&pr, &t, 3, ConstantSet::Corrected, &LocalizeOptions::default()).unwrap();
        assert!(!rep.advisory);
        for r in &rep.roots {
            assert!(r.unique && r.annulus_clear == Some(true));
            let exact = (r.lambda0 * r.lambda0 + 1e-4).sqrt();
            assert!((r.lambda_q.unwrap() - exact).abs() < 1e-10);
            assert!((r.lambda_q.unwrap() - r.lambda0).abs() < r.rho.unwrap());
        }
        assert!((rep.roots[0].lambda_q.unwrap() - 0.886_133_550_492_583).abs() < 1e-10);
    }

    #[test]
    fn large_potential_runs_in_advisory_mode() {
        let pr = config_a(0.01, 0.02);
        let t = unperturbed_spectrum(&pr, 3, 1e-12).unwrap();
        let rep = localize(&pr, &t, 3, ConstantSet::Corrected, &LocalizeOptions::default()).unwrap();
        assert!(rep.advisory);
        for r in &rep.roots {
            assert!(r.radius <= ADVISORY_GAP_FRACTION * 2.0);
            assert!(r.lambda_q.is_some());
        }
    }

    #[test]
    fn rejects_bad_counts() {
        let pr = config_a(1e-4, 1e-4);
        let t = unperturbed_spectrum(&pr, 3, 1e-12).unwrap();
        assert!(localize(&pr, &t, 0, ConstantSet::Corrected, &LocalizeOptions::default()).is_err());
        assert!(localize(&pr, &t, 4, ConstantSet::Corrected, &LocalizeOptions::default()).is_err());
    }
}
