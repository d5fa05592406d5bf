//! Competitor estimators: the grouped precision estimator without covariates
//! and independent per-block fits combined by the OR rule.

use rayon::prelude::*;

use crate::error::Result;
use crate::linalg::Mat;
use crate::model::BlockModel;
use crate::scores::ScoreSet;
use crate::selection::criterion_report;
use crate::solver::{fit_path, fit_path_on_grid, log_grid, penalty_bounds, PathConfig, PathEntry, PathResult};

/// Grouped precision path on the response scores alone. `rho_grid = None`
/// uses the grid from the response bound and `config`.
pub fn fit_jglasso_no_covariates(scores: &ScoreSet, rho_grid: Option<&[f64]>, config: &PathConfig) -> Result<PathResult> {
    let gamma_only = scores.without_covariates();
    match rho_grid {
        Some(rho) => fit_path_on_grid(&gamma_only, rho, &[0.0], config),
        None => fit_path(&gamma_only, config),
    }
}

/// Shared penalty grids for the per-block fits: log grids from the largest
/// single-block bound.
pub fn naive_grids(scores: &ScoreSet, config: &PathConfig) -> (Vec<f64>, Vec<f64>) {
    let (mut rho_max, mut nu_max): (f64, f64) = (0.0, 0.0);
    for l in 0..scores.blocks() {
        let (r, n) = penalty_bounds(&scores.block(l));
        rho_max = rho_max.max(r);
        nu_max = nu_max.max(n);
    }
    let nu = if scores.q() == 0 {
        vec![0.0]
    } else {
        log_grid(nu_max, config.ratio_min, config.n_nu)
    };
    (log_grid(rho_max, config.ratio_min, config.n_rho), nu)
}

/// Fits every block separately on the same grid and stacks the estimates;
/// the stacked model's group norms are nonzero exactly when some block's
/// entry is (OR rule). Reports are computed on the stacked model.
pub fn fit_naive(scores: &ScoreSet, rho_grid: &[f64], nu_grid: &[f64], config: &PathConfig) -> Result<PathResult> {
    let per_block: Vec<PathResult> = (0..scores.blocks())
        .into_par_iter()
        .map(|l| fit_path_on_grid(&scores.block(l), rho_grid, nu_grid, config))
        .collect::<Result<_>>()?;
    let first = &per_block[0];
    let mut entries = Vec::with_capacity(first.entries.len());
    for (idx, e0) in first.entries.iter().enumerate() {
        let parts: Vec<&PathEntry> = per_block.iter().map(|p| &p.entries[idx]).collect();
        let model = BlockModel::new(
            parts.iter().map(|e| e.model.theta_gamma[0].clone()).collect(),
            parts.iter().map(|e| e.model.b[0].clone()).collect(),
            parts.iter().map(|e| e.model.theta_chi[0].clone()).collect(),
        )?;
        let report = criterion_report(scores, &model, config.ebic_gamma, config.edge_counting, config.keep_bias)?;
        entries.push(PathEntry {
            rho: e0.rho,
            nu: e0.nu,
            rho_index: e0.rho_index,
            nu_index: e0.nu_index,
            model,
            report,
            objective: parts.iter().map(|e| e.objective).sum(),
            iterations: parts.iter().map(|e| e.iterations).sum(),
            trace: parts.iter().flat_map(|e| e.trace.iter().cloned()).collect(),
        });
    }
    Ok(PathResult {
        rho_grid: first.rho_grid.clone(),
        nu_grid: first.nu_grid.clone(),
        sweep: first.sweep,
        ebic_gamma: first.ebic_gamma,
        entries,
    })
}

/// Full-dimension model from a response-only fit: `B = 0` and the given
/// covariate precision.
pub fn embed_without_covariates(model: &BlockModel, theta_chi: &[Mat]) -> Result<BlockModel> {
    let q = theta_chi.first().map_or(0, |t| t.nrows());
    BlockModel::new(
        model.theta_gamma.clone(),
        vec![Mat::zeros(q, model.p); model.blocks()],
        theta_chi.to_vec(),
    )
}
