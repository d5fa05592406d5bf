//! Penalized cubic B-spline smoother with GCV-selected penalty weight.
//!
//! Interior knots sit at evenly spaced quantiles of the observed locations so
//! that the basis has `min(40, n/2)` functions (never fewer than four). The
//! roughness penalty is the squared second divided difference of the
//! coefficients taken over their Greville abscissae, scaled by the mean
//! abscissa spacing. On uniform knots this is the usual second-difference
//! penalty; on any knots it vanishes exactly on linear functions.

use nalgebra::{DMatrix, DVector};

use super::{Grid, SmoothedCurve};
use crate::error::{Error, Result};

const ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct SmootherConfig {
    /// Upper bound on the number of B-spline basis functions.
    pub max_basis: usize,
    /// Candidate penalty weights, searched by GCV.
    pub penalties: Vec<f64>,
    /// Relative floor on the pointwise variance (times the sample variance).
    pub variance_floor: f64,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        let n = 30;
        let penalties = (0..n)
            .map(|i| 10f64.powf(-6.0 + 12.0 * i as f64 / (n - 1) as f64))
            .collect();
        Self {
            max_basis: 40,
            penalties,
            variance_floor: 1e-8,
        }
    }
}

/// Absolute lower bound for pointwise variances, used when the series is constant.
const ABSOLUTE_VARIANCE_FLOOR: f64 = 1e-12;

pub struct BSplineBasis {
    knots: Vec<f64>,
    size: usize,
}

impl BSplineBasis {
    fn new(lower: f64, upper: f64, interior: &[f64]) -> Self {
        let mut knots = vec![lower; ORDER];
        knots.extend_from_slice(interior);
        knots.extend(std::iter::repeat_n(upper, ORDER));
        let size = knots.len() - ORDER;
        Self { knots, size }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Values of all basis functions at `x` (Cox-de Boor recursion).
    pub fn eval(&self, x: f64) -> Vec<f64> {
        let t = &self.knots;
        let lower = t[ORDER - 1];
        let upper = t[self.size];
        let x = x.clamp(lower, upper);
        // knot span: t[span] <= x < t[span+1], last non-empty span at the right end
        let mut span = ORDER - 1;
        while span + 1 < self.size && x >= t[span + 1] {
            span += 1;
        }
        let mut out = vec![0.0; self.size];
        let mut n = [0.0f64; ORDER];
        n[0] = 1.0;
        let mut left = [0.0f64; ORDER];
        let mut right = [0.0f64; ORDER];
        for j in 1..ORDER {
            left[j] = x - t[span + 1 - j];
            right[j] = t[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom == 0.0 { 0.0 } else { n[r] / denom };
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        for (r, v) in n.iter().enumerate() {
            out[span + 1 - ORDER + r] = *v;
        }
        out
    }

    fn greville(&self) -> Vec<f64> {
        (0..self.size)
            .map(|j| (self.knots[j + 1] + self.knots[j + 2] + self.knots[j + 3]) / 3.0)
            .collect()
    }

    /// Second divided-difference operator over the Greville abscissae.
    fn penalty_operator(&self) -> DMatrix<f64> {
        let xi = self.greville();
        let k = self.size;
        let h = (xi[k - 1] - xi[0]) / (k - 1) as f64;
        let mut d = DMatrix::zeros(k - 2, k);
        for j in 0..k - 2 {
            let a = h / (xi[j + 1] - xi[j]);
            let b = h / (xi[j + 2] - xi[j + 1]);
            d[(j, j)] = a;
            d[(j, j + 1)] = -a - b;
            d[(j, j + 2)] = b;
        }
        d
    }
}

fn quantile(sorted: &[f64], prob: f64) -> f64 {
    let pos = prob * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Builds the basis for a set of locations, covering `[lower, upper]`.
pub fn basis_for(locations: &[f64], lower: f64, upper: f64, max_basis: usize) -> BSplineBasis {
    let mut distinct: Vec<f64> = locations.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).expect("finite locations"));
    distinct.dedup();
    let size = (distinct.len() / 2).min(max_basis).max(ORDER);
    let n_interior = size - ORDER;
    let mut interior: Vec<f64> = (1..=n_interior)
        .map(|i| quantile(&distinct, i as f64 / (n_interior + 1) as f64))
        .filter(|&k| k > lower && k < upper)
        .collect();
    interior.dedup();
    BSplineBasis::new(lower, upper, &interior)
}

struct Candidate {
    gcv: f64,
    coefficients: DVector<f64>,
    inverse: DMatrix<f64>,
    sigma2: f64,
}

/// Fits one series and evaluates the fitted curve and its pointwise variance on `grid`.
pub fn smooth_curve(series: &[(f64, f64)], grid: &Grid, config: &SmootherConfig) -> Result<SmoothedCurve> {
    if series.iter().any(|(s, v)| !s.is_finite() || !v.is_finite()) {
        return Err(Error::InvalidInput("series contains non-finite values".into()));
    }
    let locations: Vec<f64> = series.iter().map(|p| p.0).collect();
    let mut distinct = locations.clone();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if distinct.len() < ORDER {
        return Err(Error::TooFewPoints {
            found: distinct.len(),
            required: ORDER,
        });
    }
    let lower = distinct[0].min(grid.lower);
    let upper = distinct[distinct.len() - 1].max(grid.upper);
    let basis = basis_for(&locations, lower, upper, config.max_basis);
    let k = basis.size();
    let n = series.len();

    let mut x = DMatrix::zeros(n, k);
    for (row, (s, _)) in series.iter().enumerate() {
        for (col, v) in basis.eval(*s).into_iter().enumerate() {
            x[(row, col)] = v;
        }
    }
    let y = DVector::from_iterator(n, series.iter().map(|p| p.1));
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * &y;
    let d = basis.penalty_operator();
    let penalty = d.transpose() * &d;

    let mut best: Option<Candidate> = None;
    for &lambda in &config.penalties {
        let a = &xtx + &penalty * lambda;
        let Some(chol) = a.clone().cholesky() else {
            continue;
        };
        let coefficients = chol.solve(&xty);
        let inverse = chol.inverse();
        let edf = (&inverse * &xtx).trace();
        let resid = &y - &x * &coefficients;
        let rss = resid.norm_squared();
        let dof = n as f64 - edf;
        if dof <= 1e-8 {
            continue;
        }
        let gcv = n as f64 * rss / (dof * dof);
        if !gcv.is_finite() {
            continue;
        }
        if best.as_ref().is_none_or(|b| gcv < b.gcv) {
            best = Some(Candidate {
                gcv,
                coefficients,
                inverse,
                sigma2: rss / dof,
            });
        }
    }
    let best = best.ok_or(Error::SingularFit)?;

    let mean = y.mean();
    let sample_var = if n > 1 {
        y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    let floor = (config.variance_floor * sample_var).max(ABSOLUTE_VARIANCE_FLOOR);
    let cov = (&best.inverse * &xtx * &best.inverse) * best.sigma2;

    let mut values = Vec::with_capacity(grid.points);
    let mut variance = Vec::with_capacity(grid.points);
    for t in grid.locations() {
        let b = DVector::from_vec(basis.eval(t));
        values.push(b.dot(&best.coefficients));
        variance.push(cov.quad_form_sym(&b).max(floor));
    }
    SmoothedCurve::new(*grid, values, variance)
}

trait QuadForm {
    fn quad_form_sym(&self, v: &DVector<f64>) -> f64;
}

impl QuadForm for DMatrix<f64> {
    fn quad_form_sym(&self, v: &DVector<f64>) -> f64 {
        (self * v).dot(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(lower: f64, upper: f64, points: usize) -> Grid {
        Grid::new(lower, upper, points).unwrap()
    }

    #[test]
    fn partition_of_unity() {
        let locs: Vec<f64> = (0..50).map(|i| (i as f64 / 49.0).powi(2)).collect();
        let b = basis_for(&locs, 0.0, 1.0, 40);
        for x in [0.0, 0.013, 0.5, 0.77, 1.0] {
            let s: f64 = b.eval(x).iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "sum {s} at {x}");
        }
    }

    #[test]
    fn line_is_reproduced_exactly() {
        // uneven locations, so knots are non-uniform
        let series: Vec<(f64, f64)> = (0..37)
            .map(|i| {
                let s = (i as f64 / 36.0).powf(1.7) * 10.0;
                (s, 3.0 - 0.7 * s)
            })
            .collect();
        let g = grid(0.0, 10.0, 57);
        let fit = smooth_curve(&series, &g, &SmootherConfig::default()).unwrap();
        for (t, v) in g.locations().zip(fit.values.iter()) {
            assert!((v - (3.0 - 0.7 * t)).abs() < 1e-8, "{v} at {t}");
        }
    }

    #[test]
    fn three_points_rejected() {
        let series = vec![(0.0, 1.0), (0.5, 2.0), (1.0, 0.0), (1.0, 0.5)];
        let err = smooth_curve(&series, &grid(0.0, 1.0, 10), &SmootherConfig::default()).unwrap_err();
        assert!(matches!(err, Error::TooFewPoints { found: 3, .. }));
    }

    #[test]
    fn sine_matches_unpenalized_least_squares() {
        let series: Vec<(f64, f64)> = (0..200)
            .map(|i| {
                let s = 2.0 * std::f64::consts::PI * i as f64 / 199.0;
                (s, s.sin())
            })
            .collect();
        let g = grid(0.0, 2.0 * std::f64::consts::PI, 100);
        let fit = smooth_curve(&series, &g, &SmootherConfig::default()).unwrap();

        // independent route: dense least squares of the same spline space by SVD
        let locs: Vec<f64> = series.iter().map(|p| p.0).collect();
        let basis = basis_for(&locs, g.lower, g.upper, 40);
        let mut x = DMatrix::zeros(series.len(), basis.size());
        for (r, (s, _)) in series.iter().enumerate() {
            for (c, v) in basis.eval(*s).into_iter().enumerate() {
                x[(r, c)] = v;
            }
        }
        let y = DVector::from_iterator(series.len(), series.iter().map(|p| p.1));
        let coef = x.clone().svd(true, true).solve(&y, 1e-14).unwrap();
        for (i, t) in g.locations().enumerate() {
            let ls = DVector::from_vec(basis.eval(t)).dot(&coef);
            assert!((fit.values[i] - t.sin()).abs() < 1e-3);
            assert!((fit.values[i] - ls).abs() < 1e-3);
        }
    }

    #[test]
    fn translation_equivariance() {
        let series: Vec<(f64, f64)> = (0..60)
            .map(|i| {
                let s = i as f64 / 59.0;
                (s, (5.0 * s).cos() + 0.1 * ((i * 7919) % 13) as f64 / 13.0)
            })
            .collect();
        let shifted: Vec<(f64, f64)> = series.iter().map(|(s, v)| (*s, v + 12.5)).collect();
        let g = grid(0.0, 1.0, 31);
        let a = smooth_curve(&series, &g, &SmootherConfig::default()).unwrap();
        let b = smooth_curve(&shifted, &g, &SmootherConfig::default()).unwrap();
        for i in 0..g.points {
            assert!((b.values[i] - a.values[i] - 12.5).abs() < 1e-8);
            assert!((b.variance[i] - a.variance[i]).abs() <= 1e-8 * a.variance[i].max(1e-12));
        }
    }

    #[test]
    fn noisy_fit_has_positive_variance() {
        let series: Vec<(f64, f64)> = (0..80)
            .map(|i| {
                let s = i as f64 / 79.0;
                (s, s * s + 0.05 * (((i * 2654435761usize) % 1000) as f64 / 1000.0 - 0.5))
            })
            .collect();
        let g = grid(0.0, 1.0, 25);
        let fit = smooth_curve(&series, &g, &SmootherConfig::default()).unwrap();
        assert!(fit.variance.iter().all(|v| *v > 0.0 && v.is_finite()));
    }
}
