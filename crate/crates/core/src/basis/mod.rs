//! From raw irregular curves to Karhunen-Loève scores.
//!
//! The pipeline is: smooth every (unit, variable) series onto a common grid,
//! pool the weighted covariances of all variables into one operator, take
//! its eigenbasis, and project each centred curve onto the retained
//! eigenfunctions by weighted least squares.

pub mod io;
mod smoother;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sorted_eigen, Mat};
use crate::scores::ScoreSet;

pub use smoother::{smooth_curve, SmootherConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Response,
    Covariate,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Response => "response",
            Role::Covariate => "covariate",
        }
    }
}

impl std::str::FromStr for Role {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "response" => Ok(Role::Response),
            "covariate" => Ok(Role::Covariate),
            other => Err(Error::InvalidInput(format!(
                "unknown role '{other}' (expected response|covariate)"
            ))),
        }
    }
}

/// Equally spaced evaluation grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lower: f64,
    pub upper: f64,
    pub points: usize,
}

impl Grid {
    pub fn new(lower: f64, upper: f64, points: usize) -> Result<Self> {
        if points < 2 || !(upper > lower) || !lower.is_finite() || !upper.is_finite() {
            return Err(Error::InvalidInput(format!(
                "grid needs at least 2 points over a non-empty interval, got {points} over [{lower}, {upper}]"
            )));
        }
        Ok(Self { lower, upper, points })
    }

    pub fn spacing(&self) -> f64 {
        (self.upper - self.lower) / (self.points - 1) as f64
    }

    pub fn location(&self, i: usize) -> f64 {
        if i + 1 == self.points {
            self.upper
        } else {
            self.lower + i as f64 * self.spacing()
        }
    }

    pub fn locations(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.points).map(|i| self.location(i))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub role: Role,
}

/// Raw observations: `series[v][u]` holds the (location, value) pairs of
/// variable `v` on unit `u`.
#[derive(Debug, Clone)]
pub struct CurvePanel {
    pub domain: (f64, f64),
    pub units: Vec<String>,
    pub variables: Vec<Variable>,
    pub series: Vec<Vec<Vec<(f64, f64)>>>,
}

impl CurvePanel {
    pub fn new(
        domain: (f64, f64),
        units: Vec<String>,
        variables: Vec<Variable>,
        series: Vec<Vec<Vec<(f64, f64)>>>,
    ) -> Result<Self> {
        if units.len() < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 units, got {}", units.len())));
        }
        if !variables.iter().any(|v| v.role == Role::Response) {
            return Err(Error::InvalidInput("need at least one response variable".into()));
        }
        if series.len() != variables.len() || series.iter().any(|s| s.len() != units.len()) {
            return Err(Error::DimensionMismatch("series must be indexed [variable][unit]".into()));
        }
        for (v, per_unit) in series.iter().enumerate() {
            for (u, obs) in per_unit.iter().enumerate() {
                if let Some((s, _)) = obs.iter().find(|(s, _)| *s < domain.0 || *s > domain.1) {
                    return Err(Error::InvalidInput(format!(
                        "location {s} of unit '{}' variable '{}' is outside [{}, {}]",
                        units[u], variables[v].name, domain.0, domain.1
                    )));
                }
            }
        }
        Ok(Self {
            domain,
            units,
            variables,
            series,
        })
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn indices(&self, role: Role) -> Vec<usize> {
        (0..self.variables.len())
            .filter(|&v| self.variables[v].role == role)
            .collect()
    }
}

/// A smoothed curve on a common grid together with its pointwise variance.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedCurve {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub variance: Vec<f64>,
}

impl SmoothedCurve {
    pub fn new(grid: Grid, values: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        if values.len() != grid.points || variance.len() != grid.points {
            return Err(Error::DimensionMismatch(format!(
                "curve has {} values and {} variances for a {}-point grid",
                values.len(),
                variance.len(),
                grid.points
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("curve values must be finite".into()));
        }
        if variance.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput("pointwise variances must be positive".into()));
        }
        Ok(Self { grid, values, variance })
    }

    /// Curve with unit variance everywhere.
    pub fn uniform(grid: Grid, values: Vec<f64>) -> Result<Self> {
        let variance = vec![1.0; values.len()];
        Self::new(grid, values, variance)
    }

    pub fn weights(&self) -> Vec<f64> {
        self.variance.iter().map(|v| 1.0 / v).collect()
    }
}

/// Output of [`pooled_operator`]: the pooled covariance on the grid and the
/// weighted mean function of every variable.
#[derive(Debug, Clone)]
pub struct PooledOperator {
    pub matrix: Mat,
    pub means: Vec<Vec<f64>>,
}

/// Weighted pooled covariance of all variables.
///
/// `curves[j][n]` is variable `j` on unit `n`. With `w = 1/variance` and
/// `c = z - mu_j`, the entry at `(t, t')` is the average over variables of
/// `sum_n w(t) c(t) c(t') w(t') / sum_n w(t) w(t')`.
pub fn pooled_operator(curves: &[Vec<SmoothedCurve>]) -> Result<PooledOperator> {
    let Some(first) = curves.first().and_then(|c| c.first()) else {
        return Err(Error::DimensionMismatch("no curves supplied".into()));
    };
    let grid = first.grid;
    let t = grid.points;
    let n = curves[0].len();
    for per_var in curves {
        if per_var.len() != n || per_var.iter().any(|c| c.grid != grid) {
            return Err(Error::DimensionMismatch(
                "all variables need the same units on the same grid".into(),
            ));
        }
    }

    let parts: Vec<(Mat, Vec<f64>)> = curves
        .par_iter()
        .map(|per_var| {
            let weights: Vec<Vec<f64>> = per_var.iter().map(|c| c.weights()).collect();
            let mean: Vec<f64> = (0..t)
                .map(|i| {
                    let num: f64 = per_var.iter().zip(&weights).map(|(c, w)| w[i] * c.values[i]).sum();
                    let den: f64 = weights.iter().map(|w| w[i]).sum();
                    num / den
                })
                .collect();
            let mut a = DMatrix::zeros(t, n);
            let mut w = DMatrix::zeros(t, n);
            for (u, (c, wu)) in per_var.iter().zip(&weights).enumerate() {
                for i in 0..t {
                    a[(i, u)] = wu[i] * (c.values[i] - mean[i]);
                    w[(i, u)] = wu[i];
                }
            }
            let num = &a * a.transpose();
            let den = &w * w.transpose();
            (num.component_div(&den), mean)
        })
        .collect();

    let scale = 1.0 / curves.len() as f64;
    let mut matrix = Mat::zeros(t, t);
    let mut means = Vec::with_capacity(parts.len());
    for (m, mean) in parts {
        matrix += m;
        means.push(mean);
    }
    matrix *= scale;
    for i in 0..t {
        for j in (i + 1)..t {
            let v = 0.5 * (matrix[(i, j)] + matrix[(j, i)]);
            matrix[(i, j)] = v;
            matrix[(j, i)] = v;
        }
    }
    Ok(PooledOperator { matrix, means })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    Fixed(usize),
    VarianceFraction(f64),
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation::VarianceFraction(0.99)
    }
}

/// Shared orthonormal eigenbasis on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSystem {
    pub grid: Grid,
    /// `L x T`; row `l` holds `phi_l` on the grid.
    pub eigenfunctions: Mat,
    /// Operator eigenvalues (matrix eigenvalues times the grid spacing).
    pub eigenvalues: Vec<f64>,
    pub mean_functions: Vec<Vec<f64>>,
    pub explained_fraction: f64,
}

impl BasisSystem {
    pub fn len(&self) -> usize {
        self.eigenfunctions.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> f64 {
        self.grid.spacing()
    }

    pub fn with_means(mut self, means: Vec<Vec<f64>>) -> Self {
        self.mean_functions = means;
        self
    }

    /// Largest deviation of `ds * Phi Phi^T` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = &self.eigenfunctions * self.eigenfunctions.transpose() * self.spacing();
        let l = self.len();
        let mut worst: f64 = 0.0;
        for a in 0..l {
            for b in 0..l {
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((gram[(a, b)] - target).abs());
            }
        }
        worst
    }

    pub fn phi(&self, l: usize, t: usize) -> f64 {
        self.eigenfunctions[(l, t)]
    }
}

/// Eigen-decomposition of a pooled operator, truncated either at a fixed
/// length or at the smallest length reaching a cumulative variance fraction.
pub fn eigenbasis(h: &Mat, grid: Grid, truncation: Truncation) -> Result<BasisSystem> {
    let t = h.nrows();
    if h.ncols() != t || t != grid.points {
        return Err(Error::DimensionMismatch(format!(
            "operator is {}x{} for a {}-point grid",
            h.nrows(),
            h.ncols(),
            grid.points
        )));
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteEigenvalue);
    }
    let asym = (0..t)
        .flat_map(|i| (0..t).map(move |j| (i, j)))
        .map(|(i, j)| (h[(i, j)] - h[(j, i)]).abs())
        .fold(0.0, f64::max);
    if asym > 1e-10 {
        return Err(Error::InvalidInput(format!("operator is not symmetric (max asymmetry {asym:e})")));
    }
    let (values, vectors) = sorted_eigen(h);
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteEigenvalue);
    }
    let ds = grid.spacing();
    let positive: Vec<f64> = values.iter().take_while(|v| **v > 0.0).map(|v| v * ds).collect();
    let total: f64 = positive.iter().sum();
    if positive.is_empty() {
        return Err(Error::InvalidInput("operator has no positive eigenvalue".into()));
    }

    let l = match truncation {
        Truncation::Fixed(l) => {
            if l == 0 || l > positive.len() {
                return Err(Error::InvalidInput(format!(
                    "requested {l} components but only {} positive eigenvalues exist",
                    positive.len()
                )));
            }
            l
        }
        Truncation::VarianceFraction(f) => {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::InvalidInput(format!("variance fraction {f} not in (0, 1]")));
            }
            let mut acc = 0.0;
            let mut chosen = positive.len();
            for (i, v) in positive.iter().enumerate() {
                acc += v;
                if acc / total >= f - 1e-12 {
                    chosen = i + 1;
                    break;
                }
            }
            chosen
        }
    };

    let scale = 1.0 / ds.sqrt();
    let mut phi = Mat::zeros(l, t);
    for k in 0..l {
        for i in 0..t {
            phi[(k, i)] = vectors[(i, k)] * scale;
        }
    }
    let eigenvalues = positive[..l].to_vec();
    let explained_fraction = (eigenvalues.iter().sum::<f64>() / total).min(1.0);
    Ok(BasisSystem {
        grid,
        eigenfunctions: phi,
        eigenvalues,
        mean_functions: Vec::new(),
        explained_fraction,
    })
}

/// Weighted least-squares score vector `[Phi W Phi^T]^{-1} Phi W (y - mu)`.
pub fn project_scores(curve: &SmoothedCurve, basis: &BasisSystem, mean: &[f64]) -> Result<Vec<f64>> {
    let t = basis.grid.points;
    if curve.grid != basis.grid || mean.len() != t {
        return Err(Error::DimensionMismatch("curve, basis and mean must share the grid".into()));
    }
    let l = basis.len();
    let phi = &basis.eigenfunctions;
    let w = curve.weights();
    let mut gram = Mat::zeros(l, l);
    let mut rhs = DVector::zeros(l);
    for i in 0..t {
        let c = curve.values[i] - mean[i];
        for a in 0..l {
            let pa = phi[(a, i)] * w[i];
            rhs[a] += pa * c;
            for b in a..l {
                gram[(a, b)] += pa * phi[(b, i)];
            }
        }
    }
    for a in 0..l {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }
    let (vals, _) = sorted_eigen(&gram);
    let condition = vals[0] / vals[l - 1];
    if !(vals[l - 1] > 0.0) || condition > 1e12 {
        return Err(Error::SingularProjection { condition });
    }
    let chol = gram.cholesky().ok_or(Error::SingularProjection { condition })?;
    Ok(chol.solve(&rhs).iter().cloned().collect())
}

/// `mu(t) + sum_l scores_l phi_l(t)`.
pub fn reconstruct(scores: &[f64], basis: &BasisSystem, mean: &[f64]) -> Result<Vec<f64>> {
    if scores.len() != basis.len() || mean.len() != basis.grid.points {
        return Err(Error::DimensionMismatch(format!(
            "{} scores for a basis of {}, mean of length {} for {} grid points",
            scores.len(),
            basis.len(),
            mean.len(),
            basis.grid.points
        )));
    }
    Ok((0..basis.grid.points)
        .map(|i| mean[i] + scores.iter().enumerate().map(|(l, s)| s * basis.phi(l, i)).sum::<f64>())
        .collect())
}

/// Configuration of the full smoothing-to-scores pipeline.
#[derive(Debug, Clone)]
pub struct ExtractionConfig {
    pub grid_points: usize,
    /// Overrides the panel's declared domain for the evaluation grid.
    pub grid_domain: Option<(f64, f64)>,
    pub truncation: Truncation,
    pub smoother: SmootherConfig,
    /// Drop units whose smoothing fails instead of aborting.
    pub skip_failures: bool,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            grid_points: 420,
            grid_domain: None,
            truncation: Truncation::default(),
            smoother: SmootherConfig::default(),
            skip_failures: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SmoothingFailure {
    pub unit: String,
    pub variable: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct Extraction {
    pub basis: BasisSystem,
    pub scores: ScoreSet,
    /// Variable names in the order of `basis.mean_functions`.
    pub variables: Vec<Variable>,
    pub skipped: Vec<SmoothingFailure>,
}

/// Smooths every series, builds the shared basis and projects all curves.
pub fn extract_scores(panel: &CurvePanel, config: &ExtractionConfig) -> Result<Extraction> {
    let (lower, upper) = config.grid_domain.unwrap_or(panel.domain);
    let grid = Grid::new(lower, upper, config.grid_points)?;

    let jobs: Vec<(usize, usize)> = (0..panel.variables.len())
        .flat_map(|v| (0..panel.n_units()).map(move |u| (v, u)))
        .collect();
    let fitted: Vec<Result<SmoothedCurve>> = jobs
        .par_iter()
        .map(|&(v, u)| smooth_curve(&panel.series[v][u], &grid, &config.smoother))
        .collect();

    let mut skipped = Vec::new();
    let mut dropped = vec![false; panel.n_units()];
    let mut curves: Vec<Vec<Option<SmoothedCurve>>> = vec![vec![None; panel.n_units()]; panel.variables.len()];
    for ((v, u), res) in jobs.into_iter().zip(fitted) {
        match res {
            Ok(c) => curves[v][u] = Some(c),
            Err(e) if config.skip_failures => {
                dropped[u] = true;
                skipped.push(SmoothingFailure {
                    unit: panel.units[u].clone(),
                    variable: panel.variables[v].name.clone(),
                    message: e.to_string(),
                });
            }
            Err(e) => {
                return Err(Error::InvalidInput(format!(
                    "smoothing unit '{}' variable '{}': {e}",
                    panel.units[u], panel.variables[v].name
                )))
            }
        }
    }
    let kept: Vec<usize> = (0..panel.n_units()).filter(|&u| !dropped[u]).collect();
    if kept.len() < 2 {
        return Err(Error::InvalidInput("fewer than 2 units survived smoothing".into()));
    }
    let curves: Vec<Vec<SmoothedCurve>> = curves
        .into_iter()
        .map(|per_var| kept.iter().map(|&u| per_var[u].clone().expect("kept unit")).collect())
        .collect();

    let pooled = pooled_operator(&curves)?;
    let basis = eigenbasis(&pooled.matrix, grid, config.truncation)?.with_means(pooled.means);

    let l = basis.len();
    let responses = panel.indices(Role::Response);
    let covariates = panel.indices(Role::Covariate);
    let n = kept.len();
    let project_all = |vars: &[usize]| -> Result<Vec<Mat>> {
        let mut blocks = vec![Mat::zeros(n, vars.len()); l];
        for (col, &v) in vars.iter().enumerate() {
            let rows: Vec<Result<Vec<f64>>> = curves[v]
                .par_iter()
                .map(|c| project_scores(c, &basis, &basis.mean_functions[v]))
                .collect();
            for (row, s) in rows.into_iter().enumerate() {
                for (b, value) in s?.into_iter().enumerate() {
                    blocks[b][(row, col)] = value;
                }
            }
        }
        Ok(blocks)
    };
    let gamma = project_all(&responses)?;
    let chi = project_all(&covariates)?;
    let scores = ScoreSet::new(
        gamma,
        chi,
        kept.iter().map(|&u| panel.units[u].clone()).collect(),
        responses.iter().map(|&v| panel.variables[v].name.clone()).collect(),
        covariates.iter().map(|&v| panel.variables[v].name.clone()).collect(),
    )?;
    Ok(Extraction {
        basis,
        scores,
        variables: panel.variables.clone(),
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid3() -> Grid {
        Grid::new(0.0, 2.0, 3).unwrap()
    }

    #[test]
    fn identical_curves_give_zero_operator() {
        let g = grid3();
        let c = SmoothedCurve::new(g, vec![1.0, -2.0, 0.5], vec![0.3, 0.7, 1.1]).unwrap();
        let curves = vec![vec![c.clone(), c.clone(), c]];
        let h = pooled_operator(&curves).unwrap().matrix;
        assert!(h.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn uniform_weights_give_average_sample_covariance() {
        let g = grid3();
        let v1 = [vec![1.0, 2.0, 3.0], vec![3.0, 0.0, 1.0]];
        let v2 = [vec![0.0, 1.0, -1.0], vec![2.0, 5.0, 1.0]];
        let curves: Vec<Vec<SmoothedCurve>> = [&v1, &v2]
            .iter()
            .map(|units| units.iter().map(|v| SmoothedCurve::uniform(g, v.clone()).unwrap()).collect())
            .collect();
        let h = pooled_operator(&curves).unwrap().matrix;
        // brute force: per-variable 1/N covariance, averaged
        let mut expected = Mat::zeros(3, 3);
        for units in [&v1, &v2] {
            let mean: Vec<f64> = (0..3).map(|i| (units[0][i] + units[1][i]) / 2.0).collect();
            for a in 0..3 {
                for b in 0..3 {
                    let s: f64 = units.iter().map(|u| (u[a] - mean[a]) * (u[b] - mean[b])).sum();
                    expected[(a, b)] += s / 2.0 / 2.0;
                }
            }
        }
        assert!(crate::linalg::max_abs_diff(&h, &expected) < 1e-14);
    }

    #[test]
    fn negative_variance_rejected() {
        assert!(SmoothedCurve::new(grid3(), vec![0.0; 3], vec![1.0, -1.0, 1.0]).is_err());
    }

    #[test]
    fn identity_spectrum_truncation() {
        let t = 100;
        let g = Grid::new(0.0, (t - 1) as f64, t).unwrap();
        let b = eigenbasis(&Mat::identity(t, t), g, Truncation::VarianceFraction(0.99)).unwrap();
        assert_eq!(b.len(), (0.99 * t as f64).ceil() as usize);
        assert!(b.eigenvalues.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(b.orthonormality_error() < 1e-8);
    }

    #[test]
    fn rank_two_operator() {
        let t = 6;
        let g = Grid::new(0.0, 5.0, t).unwrap();
        let u = DVector::from_vec(vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0]).normalize();
        let v = DVector::from_vec(vec![1.0, -1.0, 1.0, -1.0, 1.0, -1.0]).normalize();
        let h = &u * u.transpose() * 9.0 + &v * v.transpose();
        let b = eigenbasis(&h, g, Truncation::VarianceFraction(0.9)).unwrap();
        assert_eq!(b.len(), 1);
        assert!((b.eigenvalues[0] - 9.0).abs() < 1e-12);
        assert!((b.explained_fraction - 0.9).abs() < 1e-12);
    }

    #[test]
    fn asymmetric_operator_rejected() {
        let g = Grid::new(0.0, 1.0, 2).unwrap();
        let h = Mat::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(eigenbasis(&h, g, Truncation::Fixed(1)).is_err());
        let h = Mat::from_row_slice(2, 2, &[f64::NAN, 0.0, 0.0, 1.0]);
        assert!(matches!(eigenbasis(&h, g, Truncation::Fixed(1)), Err(Error::NonFiniteEigenvalue)));
    }

    fn toy_basis() -> BasisSystem {
        let t = 50;
        let g = Grid::new(0.0, 1.0, t).unwrap();
        let mut h = Mat::zeros(t, t);
        for (k, w) in [(1.0, 4.0), (2.0, 2.0), (3.0, 1.0)] {
            let f = DVector::from_iterator(t, g.locations().map(|s| (k * std::f64::consts::PI * s).sin()));
            h += &f * f.transpose() * w;
        }
        eigenbasis(&h, g, Truncation::Fixed(3)).unwrap()
    }

    #[test]
    fn projection_of_mean_plus_first_component() {
        let b = toy_basis();
        let g = b.grid;
        let mean: Vec<f64> = g.locations().map(|s| s * s).collect();
        let values: Vec<f64> = (0..g.points).map(|i| mean[i] + 2.0 * b.phi(0, i)).collect();
        let s = project_scores(&SmoothedCurve::uniform(g, values).unwrap(), &b, &mean).unwrap();
        assert!((s[0] - 2.0).abs() < 1e-8 && s[1].abs() < 1e-8 && s[2].abs() < 1e-8);
        let s0 = project_scores(&SmoothedCurve::uniform(g, mean.clone()).unwrap(), &b, &mean).unwrap();
        assert!(s0.iter().all(|v| v.abs() < 1e-12));
        assert_eq!(reconstruct(&[0.0; 3], &b, &mean).unwrap(), mean);
    }

    #[test]
    fn weighted_projection_matches_dense_solver() {
        let b = toy_basis();
        let g = b.grid;
        let mean = vec![0.0; g.points];
        let truth = [0.7, -1.3, 0.25];
        let values = reconstruct(&truth, &b, &mean).unwrap();
        let variance: Vec<f64> = (0..g.points).map(|i| 0.1 + (i % 7) as f64).collect();
        let curve = SmoothedCurve::new(g, values.clone(), variance.clone()).unwrap();
        let s = project_scores(&curve, &b, &mean).unwrap();

        // independent: solve the weighted least-squares problem by SVD of sqrt(W) Phi^T
        let mut a = Mat::zeros(g.points, 3);
        let mut y = DVector::zeros(g.points);
        for i in 0..g.points {
            let sw = (1.0 / variance[i]).sqrt();
            for l in 0..3 {
                a[(i, l)] = sw * b.phi(l, i);
            }
            y[i] = sw * values[i];
        }
        let dense = a.svd(true, true).solve(&y, 1e-14).unwrap();
        for l in 0..3 {
            assert!((s[l] - dense[l]).abs() < 1e-10);
            assert!((s[l] - truth[l]).abs() < 1e-8);
        }
    }

    #[test]
    fn singular_projection_detected() {
        let g = Grid::new(0.0, 1.0, 4).unwrap();
        let b = BasisSystem {
            grid: g,
            eigenfunctions: Mat::from_row_slice(2, 4, &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]),
            eigenvalues: vec![1.0, 1.0],
            mean_functions: vec![],
            explained_fraction: 1.0,
        };
        let c = SmoothedCurve::uniform(g, vec![1.0; 4]).unwrap();
        assert!(matches!(project_scores(&c, &b, &[0.0; 4]), Err(Error::SingularProjection { .. })));
    }
}
