//! Bjøntegaard Delta Rate between two rate-distortion curves.
//!
//! Classical formulation: fit a third-order polynomial to `log10(rate)` as a
//! function of PSNR for each curve, integrate both fits analytically over the
//! overlapping PSNR interval, and convert the mean log-rate difference back
//! to a percentage. Negative means the test curve spends less rate at equal
//! quality.

use crate::{Error, Result};

/// A rate-distortion curve: `(rate, psnr)` samples, held sorted by PSNR.
#[derive(Debug, Clone)]
pub struct RdCurve {
    points: Vec<(f64, f64)>,
}

impl RdCurve {
    /// Validates and sorts the samples: at least four points, strictly
    /// positive finite rates, finite and pairwise distinct PSNR values.
    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::TooFewRdPoints { min: 4, got: points.len() });
        }
        for (index, &(rate, psnr)) in points.iter().enumerate() {
            if rate <= 0.0 || !rate.is_finite() {
                return Err(Error::NonPositiveRate { index, rate });
            }
            if !psnr.is_finite() {
                return Err(Error::BadPsnrValues(format!("point {index} has PSNR {psnr}")));
            }
        }
        points.sort_by(|a, b| a.1.total_cmp(&b.1));
        if points.windows(2).any(|p| p[0].1 == p[1].1) {
            return Err(Error::BadPsnrValues("duplicate PSNR values".into()));
        }
        Ok(RdCurve { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn psnr_range(&self) -> (f64, f64) {
        (self.points[0].1, self.points[self.points.len() - 1].1)
    }

    /// True when rate increases with PSNR across the whole curve.
    fn is_monotone(&self) -> bool {
        self.points.windows(2).all(|p| p[0].0 <= p[1].0)
    }
}

#[derive(Debug, Clone)]
pub struct BdRateReport {
    pub bd_rate_percent: f64,
    /// PSNR interval the integration ran over.
    pub overlap: (f64, f64),
    /// Non-fatal anomalies, e.g. non-monotone input curves.
    pub warnings: Vec<String>,
}

/// Average rate difference of `test` against `anchor` at equal quality, in
/// percent.
pub fn bd_rate(anchor: &RdCurve, test: &RdCurve) -> Result<BdRateReport> {
    let (a_lo, a_hi) = anchor.psnr_range();
    let (t_lo, t_hi) = test.psnr_range();
    let lo = a_lo.max(t_lo);
    let hi = a_hi.min(t_hi);
    if hi <= lo {
        return Err(Error::NoPsnrOverlap {
            anchor_lo: a_lo,
            anchor_hi: a_hi,
            test_lo: t_lo,
            test_hi: t_hi,
        });
    }

    let mut warnings = Vec::new();
    for (name, curve) in [("anchor", anchor), ("test", test)] {
        if !curve.is_monotone() {
            warnings.push(format!("{name} curve is not monotone in rate vs PSNR"));
        }
    }

    let mean_anchor = integrated_mean_log_rate(anchor, lo, hi);
    let mean_test = integrated_mean_log_rate(test, lo, hi);
    let avg_diff = mean_test - mean_anchor;
    Ok(BdRateReport {
        bd_rate_percent: (10f64.powf(avg_diff) - 1.0) * 100.0,
        overlap: (lo, hi),
        warnings,
    })
}

/// Fits the curve's `log10(rate)` over PSNR and returns the mean of the fit
/// over `[lo, hi]`. PSNR values are centered before fitting to keep the
/// normal equations well conditioned.
fn integrated_mean_log_rate(curve: &RdCurve, lo: f64, hi: f64) -> f64 {
    let n = curve.points.len() as f64;
    let center = curve.points.iter().map(|p| p.1).sum::<f64>() / n;
    let xs: Vec<f64> = curve.points.iter().map(|p| p.1 - center).collect();
    let ys: Vec<f64> = curve.points.iter().map(|p| p.0.log10()).collect();
    let coeffs = fit_cubic(&xs, &ys);
    definite_integral(&coeffs, lo - center, hi - center) / (hi - lo)
}

/// Least-squares cubic fit via the 4x4 normal equations.
fn fit_cubic(xs: &[f64], ys: &[f64]) -> [f64; 4] {
    let mut moments = [0f64; 7]; // sum of x^0 .. x^6
    let mut rhs = [0f64; 4]; // sum of y * x^0 .. y * x^3
    for (&x, &y) in xs.iter().zip(ys) {
        let mut p = 1.0;
        for (k, m) in moments.iter_mut().enumerate() {
            *m += p;
            if k < 4 {
                rhs[k] += y * p;
            }
            p *= x;
        }
    }
    let mut matrix = [[0f64; 4]; 4];
    for (j, row) in matrix.iter_mut().enumerate() {
        for (k, cell) in row.iter_mut().enumerate() {
            *cell = moments[j + k];
        }
    }
    solve_4x4(matrix, rhs)
}

/// Gaussian elimination with partial pivoting.
#[allow(clippy::needless_range_loop)] // rows of `a` are updated in place against the pivot row
fn solve_4x4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> [f64; 4] {
    for col in 0..4 {
        let pivot = (col..4)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..4 {
            let factor = a[row][col] / a[col][col];
            for k in col..4 {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0f64; 4];
    for row in (0..4).rev() {
        let mut acc = b[row];
        for k in row + 1..4 {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    x
}

/// Exact integral of the cubic with coefficients `c[k]` (for `x^k`) over
/// `[a, b]`.
fn definite_integral(c: &[f64; 4], a: f64, b: f64) -> f64 {
    let eval = |x: f64| {
        let x2 = x * x;
        c[0] * x + c[1] * x2 / 2.0 + c[2] * x2 * x / 3.0 + c[3] * x2 * x2 / 4.0
    };
    eval(b) - eval(a)
}
