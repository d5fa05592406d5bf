//! Doubly group-penalized estimation of the block chain graph.
//!
//! The estimator minimizes
//! `F = sum_l [tr(S(B_l) Theta_l) - log det Theta_l] + nu P1(B) + rho P2(Theta)`
//! where `P1` sums the across-block norms of every (covariate, response)
//! coefficient and `P2` sums the across-block norms of every ordered
//! off-diagonal precision pair. [`fit`] alternates an exact regression step
//! and an exact precision step; each half-step is accepted only when it does
//! not increase `F`.

mod bstep;
mod covariance;
mod path;
mod theta;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{logdet_pd, Mat};
use crate::model::BlockModel;
use crate::scores::ScoreSet;

pub use bstep::{update_b, BStep};
pub use covariance::{empirical_covariances, moments, residual_covariance, BlockMoments, Covariances};
pub use path::{fit_path, fit_path_on_grid, log_grid, PathConfig, PathEntry, PathResult, Sweep, RATIO_FLOOR};
pub use theta::{rho_bound, theta_kkt, update_theta, AdmmOptions, ThetaStep};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub rho: f64,
    pub nu: f64,
    pub max_alternations: usize,
    pub inner_tol: f64,
    pub max_inner_iter: usize,
    pub admm_max_iter: usize,
    pub admm_penalty: f64,
    pub kkt_tol: f64,
    /// Penalty for the covariate precision; `None` reuses `rho`.
    pub rho_chi: Option<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            rho: 0.1,
            nu: 0.1,
            max_alternations: 3,
            inner_tol: 1e-6,
            max_inner_iter: 500,
            admm_max_iter: 5000,
            admm_penalty: 1.0,
            kkt_tol: 1e-4,
            rho_chi: None,
        }
    }
}

impl FitConfig {
    pub fn with_penalties(rho: f64, nu: f64) -> Self {
        Self { rho, nu, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [("rho", self.rho), ("nu", self.nu), ("rho_chi", self.rho_chi.unwrap_or(0.0))];
        for (name, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidInput(format!("{name} must be a finite non-negative number, got {v}")));
            }
        }
        let positive = [("inner_tol", self.inner_tol), ("admm_penalty", self.admm_penalty), ("kkt_tol", self.kkt_tol)];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_alternations == 0 || self.max_inner_iter == 0 || self.admm_max_iter == 0 {
            return Err(Error::InvalidInput("iteration limits must be at least 1".into()));
        }
        Ok(())
    }

    fn admm(&self) -> AdmmOptions {
        AdmmOptions {
            penalty: self.admm_penalty,
            tol: self.inner_tol,
            kkt_tol: self.kkt_tol,
            max_iter: self.admm_max_iter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HalfStep {
    Init,
    Regression,
    Precision,
}

/// One record per half-step of the alternation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceEntry {
    pub alternation: usize,
    pub step: HalfStep,
    pub objective: f64,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub kkt: Option<f64>,
    pub accepted: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub primal: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dual: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: BlockModel,
    pub trace: Vec<TraceEntry>,
    /// Inner iterations summed over all half-steps.
    pub iterations: usize,
    pub objective: f64,
}

impl FitResult {
    /// One JSON object per trace entry.
    pub fn write_diagnostics<W: Write>(&self, mut out: W) -> Result<()> {
        for entry in &self.trace {
            serde_json::to_writer(&mut out, entry)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn sum_group_penalty(theta: &[Mat], b: &[Mat], rho: f64, nu: f64) -> f64 {
    let mut pen = rho * theta::fused_penalty(theta);
    if b[0].nrows() > 0 {
        pen += nu * bstep::group_penalty(b);
    }
    pen
}

/// Penalized objective `F` (minimization form). Errors if some `Theta_l` is not PD.
pub fn objective(moments: &[BlockMoments], b: &[Mat], theta: &[Mat], rho: f64, nu: f64) -> Result<f64> {
    let mut f = bstep::smooth_value(moments, b, theta);
    for t in theta {
        f -= logdet_pd(t, "theta_gamma")?;
    }
    Ok(f + sum_group_penalty(theta, b, rho, nu))
}

/// `(rho_max, nu_max)`: the smallest penalties at which the fit is the
/// diagonal precision with zero regression.
pub fn penalty_bounds(scores: &ScoreSet) -> (f64, f64) {
    let m = moments(scores);
    let s0: Vec<Mat> = m.iter().map(|x| x.s_gamma.clone()).collect();
    let rho_max = rho_bound(&s0);
    let (q, p) = (scores.q(), scores.p());
    let mut nu_max: f64 = 0.0;
    for k in 0..q {
        for i in 0..p {
            let g2: f64 = m
                .iter()
                .map(|x| (2.0 * x.s_cross[(k, i)] / x.s_gamma[(i, i)]).powi(2))
                .sum();
            nu_max = nu_max.max(g2.sqrt());
        }
    }
    (rho_max, nu_max)
}

fn residual_covariances(scores: &ScoreSet, b: &[Mat]) -> Vec<Mat> {
    (0..scores.blocks())
        .map(|l| residual_covariance(&scores.gamma[l], &scores.chi[l], &b[l]))
        .collect()
}

/// Largest violation of the joint stationarity conditions of `F` at `model`.
pub fn kkt_check(model: &BlockModel, scores: &ScoreSet, rho: f64, nu: f64) -> f64 {
    let m = moments(scores);
    let mut worst: f64 = 0.0;
    if model.q > 0 {
        let grads: Vec<Mat> = m
            .iter()
            .zip(&model.b)
            .zip(&model.theta_gamma)
            .map(|((x, b), t)| x.gradient(b, t))
            .collect();
        worst = bstep::group_kkt(&model.b, &grads, nu);
    }
    let s_b = residual_covariances(scores, &model.b);
    worst.max(theta_kkt(&s_b, &model.theta_gamma, rho))
}

/// Covariate precision estimated by the precision step on `S_chi` at `rho`.
pub fn covariate_precision(scores: &ScoreSet, rho: f64, config: &FitConfig) -> Result<Vec<Mat>> {
    let s_chi: Vec<Mat> = moments(scores).into_iter().map(|x| x.s_chi).collect();
    Ok(update_theta(&s_chi, rho, None, &config.admm())?.theta)
}

pub fn fit(scores: &ScoreSet, config: &FitConfig) -> Result<FitResult> {
    fit_from(scores, config, None)
}

/// Fit starting from `warm = (B, Theta)` instead of `B = 0`, `Theta = diag(S(0))^{-1}`.
pub fn fit_from(scores: &ScoreSet, config: &FitConfig, warm: Option<(&[Mat], &[Mat])>) -> Result<FitResult> {
    config.validate()?;
    let (p, q, l) = (scores.p(), scores.q(), scores.blocks());
    if p == 0 {
        return Err(Error::InvalidInput("at least one response is required".into()));
    }
    let m = moments(scores);
    let (rho, nu) = (config.rho, config.nu);
    let admm = config.admm();

    let (mut b, mut theta) = match warm {
        Some((b, t)) => {
            if b.len() != l || t.len() != l || b.iter().any(|x| x.shape() != (q, p)) || t.iter().any(|x| x.shape() != (p, p)) {
                return Err(Error::DimensionMismatch("warm start does not match the scores".into()));
            }
            (b.to_vec(), t.to_vec())
        }
        None => {
            let s0: Vec<Mat> = m.iter().map(|x| x.s_gamma.clone()).collect();
            (vec![Mat::zeros(q, p); l], theta::diagonal_solution(&s0)?)
        }
    };
    let mut f = objective(&m, &b, &theta, rho, nu)?;
    let mut trace = vec![TraceEntry {
        alternation: 0,
        step: HalfStep::Init,
        objective: f,
        iterations: 0,
        kkt: None,
        accepted: true,
        primal: None,
        dual: None,
    }];
    let mut iterations = 0;
    let report = |trace: &[TraceEntry], e: Error| {
        log::warn!("fit at rho = {rho:e}, nu = {nu:e} failed after {} half-steps: {e}", trace.len() - 1);
        for t in trace {
            log::debug!("{}", serde_json::to_string(t).unwrap_or_default());
        }
        e
    };

    for alternation in 1..=config.max_alternations {
        let f_start = f;

        let step = update_b(&m, &theta, nu, &b, config.kkt_tol, config.max_inner_iter).map_err(|e| report(&trace, e))?;
        iterations += step.iterations;
        let candidate = objective(&m, &step.b, &theta, rho, nu)?;
        let accepted = candidate <= f;
        if accepted {
            b = step.b;
            f = candidate;
        }
        trace.push(TraceEntry {
            alternation,
            step: HalfStep::Regression,
            objective: f,
            iterations: step.iterations,
            kkt: Some(step.kkt),
            accepted,
            primal: None,
            dual: None,
        });

        let s_b = residual_covariances(scores, &b);
        let step = update_theta(&s_b, rho, Some(&theta), &admm).map_err(|e| report(&trace, e))?;
        iterations += step.iterations;
        let candidate = objective(&m, &b, &step.theta, rho, nu)?;
        let accepted = candidate <= f;
        let last = step.residuals.last().copied();
        if accepted {
            theta = step.theta;
            f = candidate;
        }
        trace.push(TraceEntry {
            alternation,
            step: HalfStep::Precision,
            objective: f,
            iterations: step.iterations,
            kkt: Some(step.kkt),
            accepted,
            primal: last.map(|r| r.0),
            dual: last.map(|r| r.1),
        });

        if (f_start - f).abs() <= config.inner_tol * f_start.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }

    let s_chi: Vec<Mat> = m.iter().map(|x| x.s_chi.clone()).collect();
    let chi = update_theta(&s_chi, config.rho_chi.unwrap_or(rho), None, &admm).map_err(|e| report(&trace, e))?;
    iterations += chi.iterations;
    let theta_chi = chi.theta;
    let model = BlockModel::new(theta, b, theta_chi)?;
    Ok(FitResult {
        model,
        trace,
        iterations,
        objective: f,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;

    fn small_scores() -> ScoreSet {
        let gamma = vec![
            Mat::from_row_slice(5, 2, &[1.0, 0.2, -0.3, 0.8, 0.5, 0.4, -1.2, -0.9, 0.3, 0.1]),
            Mat::from_row_slice(5, 2, &[0.4, -0.2, 0.9, 0.6, -0.5, 0.1, 0.2, -0.3, -1.0, 0.7]),
        ];
        let chi = vec![
            Mat::from_row_slice(5, 1, &[0.5, -0.1, 0.3, -0.8, 0.2]),
            Mat::from_row_slice(5, 1, &[0.1, 0.6, -0.4, 0.2, -0.5]),
        ];
        ScoreSet::from_blocks(gamma, chi).unwrap()
    }

    #[test]
    fn bound_of_unit_diagonal_two_by_two() {
        let s = Mat::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]);
        assert!((rho_bound(&[s]) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_scores_have_zero_bounds() {
        let gamma = Mat::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
        let chi = Mat::from_row_slice(4, 1, &[0.0, 0.0, 1.0, 1.0]);
        let s = ScoreSet::from_blocks(vec![gamma], vec![chi]).unwrap();
        assert_eq!(penalty_bounds(&s), (0.0, 0.0));
    }

    #[test]
    fn fit_at_bounds_is_fully_sparse() {
        let s = small_scores();
        let (rho, nu) = penalty_bounds(&s);
        let out = fit(&s, &FitConfig::with_penalties(rho, nu)).unwrap();
        for l in 0..2 {
            assert_eq!(out.model.b[l], Mat::zeros(1, 2));
            assert_eq!(out.model.theta_gamma[l][(0, 1)], 0.0);
        }
        assert!(kkt_check(&out.model, &s, rho, nu) <= 1e-8);
    }

    #[test]
    fn objective_trace_is_monotone_and_kkt_small() {
        let s = small_scores();
        let (rho, nu) = penalty_bounds(&s);
        let cfg = FitConfig {
            max_alternations: 50,
            ..FitConfig::with_penalties(0.3 * rho, 0.3 * nu)
        };
        let out = fit(&s, &cfg).unwrap();
        for w in out.trace.windows(2) {
            assert!(w[1].objective <= w[0].objective + 1e-10);
        }
        assert!(kkt_check(&out.model, &s, cfg.rho, cfg.nu) < 1e-3);
    }

    #[test]
    fn perturbation_raises_kkt_violation() {
        let s = small_scores();
        let (rho, nu) = penalty_bounds(&s);
        let cfg = FitConfig {
            max_alternations: 50,
            ..FitConfig::with_penalties(0.3 * rho, 0.3 * nu)
        };
        let mut model = fit(&s, &cfg).unwrap().model;
        model.b[0][(0, 0)] += 0.1;
        assert!(kkt_check(&model, &s, cfg.rho, cfg.nu) > 1e-2);
    }

    #[test]
    fn repeated_fits_are_bit_identical() {
        let s = small_scores();
        let cfg = FitConfig::with_penalties(0.05, 0.05);
        let a = fit(&s, &cfg).unwrap();
        let b = fit(&s, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(max_abs_diff(&a.model.theta_gamma[0], &b.model.theta_gamma[0]), 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(FitConfig::with_penalties(-1.0, 0.0).validate().is_err());
        assert!(FitConfig { admm_penalty: 0.0, ..FitConfig::default() }.validate().is_err());
        let text = "rho = 0.2\nnu = 0.3\n";
        let c: FitConfig = toml::from_str(text).unwrap();
        assert_eq!(c.max_alternations, 3);
        assert!(toml::from_str::<FitConfig>("rho = 1\nbogus = 2\n").is_err());
    }
}
