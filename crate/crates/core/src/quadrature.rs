//! Uniform-grid quadrature used by the norms and the kernel recurrences.

use std::ops::{Add, Mul, Sub};

pub(crate) trait Field: Copy + Default + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {}
impl<T> Field for T where T: Copy + Default + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T> {}

/// Composite Simpson over an odd number of equally spaced samples.
pub(crate) fn simpson<T: Field>(f: &[T], h: f64) -> T {
    let n = f.len();
    assert!(n >= 3 && n % 2 == 1, "simpson needs an odd sample count >= 3, got {n}");
    let mut acc = f[0] + f[n - 1];
    for (j, &v) in f.iter().enumerate().take(n - 1).skip(1) {
        acc = acc + v * if j % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * (h / 3.0)
}

/// Running integral `out[j] = ∫ from x_0 to x_j` on a uniform grid.
///
/// Each panel is integrated with the cubic through four neighbouring samples
/// (one-sided at the ends), so the running values are fourth order. Two and
/// three sample inputs fall back to the trapezoid and quadratic rules.
pub(crate) fn cumulative<T: Field>(f: &[T], h: f64) -> Vec<T> {
    let n = f.len();
    let mut out = vec![T::default(); n];
    match n {
        0 | 1 => {}
        2 => out[1] = (f[0] + f[1]) * (0.5 * h),
        3 => {
            let w = h / 12.0;
            out[1] = (f[0] * 5.0 + f[1] * 8.0 - f[2]) * w;
            out[2] = out[1] + (f[1] * 8.0 + f[2] * 5.0 - f[0]) * w;
        }
        _ => {
            let w = h / 24.0;
            for j in 0..n - 1 {
                let panel = if j == 0 {
                    f[0] * 9.0 + f[1] * 19.0 - f[2] * 5.0 + f[3]
                } else if j == n - 2 {
                    f[n - 4] - f[n - 3] * 5.0 + f[n - 2] * 19.0 + f[n - 1] * 9.0
                } else {
                    (f[j] + f[j + 1]) * 13.0 - f[j - 1] - f[j + 2]
                };
                out[j + 1] = out[j] + panel * w;
            }
        }
    }
    out
}

/// Running integral from each node to the right end: `out[j] = ∫ from x_j to x_{n-1}`.
pub(crate) fn cumulative_from_right<T: Field>(f: &[T], h: f64) -> Vec<T> {
    let rev: Vec<T> = f.iter().rev().copied().collect();
    let mut out = cumulative(&rev, h);
    out.reverse();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_is_exact_on_cubics() {
        let h = 0.25;
        let f: Vec<f64> = (0..9).map(|j| (j as f64 * h).powi(3)).collect();
        assert!((simpson(&f, h) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn cumulative_is_exact_on_cubics() {
        let h = 0.1;
        let xs: Vec<f64> = (0..11).map(|j| j as f64 * h).collect();
        let f: Vec<f64> = xs.iter().map(|x| 1.0 + 2.0 * x - 3.0 * x * x + x * x * x).collect();
        let c = cumulative(&f, h);
        for (x, v) in xs.iter().zip(&c) {
            let exact = x + x * x - x * x * x + x.powi(4) / 4.0;
            assert!((v - exact).abs() < 1e-13, "{x}: {v} vs {exact}");
        }
        let r = cumulative_from_right(&f, h);
        for (j, v) in r.iter().enumerate() {
            assert!((v - (c[10] - c[j])).abs() < 1e-13);
        }
    }

    #[test]
    fn cumulative_converges_at_fourth_order() {
        let err = |n: usize| {
            let h = 2.0 / (n - 1) as f64;
            let f: Vec<f64> = (0..n).map(|j| (3.0 * j as f64 * h).cos()).collect();
            (cumulative(&f, h)[n - 1] - (6.0f64).sin() / 3.0).abs()
        };
        let ratio = err(65) / err(129);
        assert!(ratio > 12.0 && ratio < 40.0, "ratio {ratio}");
    }

    #[test]
    fn short_inputs() {
        assert_eq!(cumulative(&[1.0, 1.0], 0.5), vec![0.0, 0.5]);
        let c = cumulative(&[0.0, 1.0, 4.0], 1.0);
        assert!((c[2] - 8.0 / 3.0).abs() < 1e-14);
    }
}
