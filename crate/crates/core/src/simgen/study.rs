//! Replicated simulation study: generate, sample, fit all three estimators,
//! select with each criterion and score against the truth.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::competitors::{embed_without_covariates, fit_jglasso_no_covariates, fit_naive, naive_grids};
use super::metrics::{amse, classification, path_auc_directed, path_auc_undirected};
use super::{generate_model, sample_scores, SimDesign, TrueModel};
use crate::error::{Error, Result};
use crate::model::BlockModel;
use crate::scores::ScoreSet;
use crate::selection::{kl_true, select, Criterion};
use crate::solver::{covariate_precision, fit_path, PathConfig, PathResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    pub design: SimDesign,
    pub replicates: usize,
    /// Replicate `r` uses seed `seed ^ r` for both the model and the sample.
    pub seed: u64,
    pub path: PathConfig,
    /// Criterion names as accepted by [`Criterion::from_str`](std::str::FromStr).
    pub criteria: Vec<String>,
    pub competitors: bool,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            design: SimDesign::default(),
            replicates: 20,
            seed: 2024,
            path: PathConfig::default(),
            criteria: vec!["aic".into(), "bic".into(), "ebic".into(), "jklcv".into()],
            competitors: true,
            threads: None,
        }
    }
}

impl StudyConfig {
    pub fn criteria(&self) -> Result<Vec<Criterion>> {
        self.criteria.iter().map(|c| c.parse()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.design.validate()?;
        self.path.validate()?;
        if self.replicates == 0 {
            return Err(Error::InvalidInput("replicates must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidInput("threads must be at least 1".into()));
        }
        self.criteria().map(|_| ())
    }

    pub fn replicate_seed(&self, r: usize) -> u64 {
        self.seed ^ r as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fggrm,
    Jglasso,
    Naive,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Fggrm => "fggrm",
            Method::Jglasso => "jglasso",
            Method::Naive => "naive",
        }
    }
}

/// One row per (replicate, method, criterion), scored at the selected model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub replicate: usize,
    pub seed: u64,
    pub method: Method,
    pub criterion: String,
    pub rho: f64,
    pub nu: f64,
    pub edges: usize,
    /// Response-graph AUC along the penalty sweep through the selected model.
    pub auc_y: f64,
    pub auc_xy: Option<f64>,
    pub amse: f64,
    pub kl: f64,
    pub accuracy: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub f1: f64,
}

/// Path-level curves: AUC per fixed value of the other penalty, aMSE per grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub replicate: usize,
    pub method: Method,
    pub metric: String,
    pub rho_ratio: Option<f64>,
    pub nu_ratio: Option<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ReplicateOutput {
    pub replicate: usize,
    pub rows: Vec<ReplicateRow>,
    pub curves: Vec<CurveRow>,
}

fn grid_ratio(grid: &[f64], i: usize, ratio_min: f64, n: usize) -> f64 {
    if grid.len() == 1 || n <= 1 {
        return 1.0;
    }
    let r = if ratio_min <= 0.0 { crate::solver::RATIO_FLOOR } else { ratio_min };
    r.powf(i as f64 / (n - 1) as f64)
}

/// Models of a path at fixed `nu_index` (over rho) or fixed `rho_index` (over nu),
/// from the largest penalty down.
fn slice<'a>(path: &'a PathResult, fixed_nu: Option<usize>, fixed_rho: Option<usize>) -> Vec<&'a BlockModel> {
    let mut entries: Vec<_> = path
        .entries
        .iter()
        .filter(|e| fixed_nu.is_none_or(|n| e.nu_index == n) && fixed_rho.is_none_or(|r| e.rho_index == r))
        .collect();
    entries.sort_by_key(|e| (e.rho_index, e.nu_index));
    entries.into_iter().map(|e| &e.model).collect()
}

fn path_curves(
    replicate: usize,
    method: Method,
    path: &PathResult,
    truth: &TrueModel,
    config: &PathConfig,
    curves: &mut Vec<CurveRow>,
) -> Result<()> {
    let has_b = path.entries[0].model.q > 0;
    let rho_ratio = |i: usize| grid_ratio(&path.rho_grid, i, config.ratio_min, config.n_rho);
    let nu_ratio = |i: usize| grid_ratio(&path.nu_grid, i, config.ratio_min, config.n_nu);
    for ni in 0..path.nu_grid.len() {
        curves.push(CurveRow {
            replicate,
            method,
            metric: "auc_y".into(),
            rho_ratio: None,
            nu_ratio: has_b.then(|| nu_ratio(ni)),
            value: path_auc_undirected(&slice(path, Some(ni), None), &truth.edges)?,
        });
    }
    if has_b {
        for ri in 0..path.rho_grid.len() {
            curves.push(CurveRow {
                replicate,
                method,
                metric: "auc_xy".into(),
                rho_ratio: Some(rho_ratio(ri)),
                nu_ratio: None,
                value: path_auc_directed(&slice(path, None, Some(ri)), &truth.edges)?,
            });
        }
    }
    for e in &path.entries {
        curves.push(CurveRow {
            replicate,
            method,
            metric: "amse_theta".into(),
            rho_ratio: Some(rho_ratio(e.rho_index)),
            nu_ratio: has_b.then(|| nu_ratio(e.nu_index)),
            value: amse(&e.model.theta_gamma, &truth.model.theta_gamma)?,
        });
        if has_b {
            curves.push(CurveRow {
                replicate,
                method,
                metric: "amse_b".into(),
                rho_ratio: Some(rho_ratio(e.rho_index)),
                nu_ratio: Some(nu_ratio(e.nu_index)),
                value: amse(&e.model.b, &truth.model.b)?,
            });
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn selection_rows(
    replicate: usize,
    seed: u64,
    method: Method,
    path: &PathResult,
    scores: &ScoreSet,
    truth: &TrueModel,
    criteria: &[Criterion],
    config: &PathConfig,
    rows: &mut Vec<ReplicateRow>,
) -> Result<()> {
    let (p, q) = (truth.model.p, truth.model.q);
    for &criterion in criteria {
        let sel = select(path, criterion)?;
        let e = sel.entry;
        let full = if e.model.q == q {
            e.model.clone()
        } else {
            let theta_chi = covariate_precision(scores, e.rho, &config.fit)?;
            embed_without_covariates(&e.model, &theta_chi)?
        };
        let class = classification(&full.edges(0.0), &truth.edges, p, q);
        let auc_xy = if e.model.q > 0 {
            Some(path_auc_directed(&slice(path, None, Some(e.rho_index)), &truth.edges)?)
        } else {
            None
        };
        rows.push(ReplicateRow {
            replicate,
            seed,
            method,
            criterion: match criterion {
                Criterion::Ebic(g) => format!("ebic:{g}"),
                c => c.name().to_string(),
            },
            rho: e.rho,
            nu: e.nu,
            edges: e.report.edge_count,
            auc_y: path_auc_undirected(&slice(path, Some(e.nu_index), None), &truth.edges)?,
            auc_xy,
            amse: amse(&e.model.theta_gamma, &truth.model.theta_gamma)?,
            kl: kl_true(&truth.model, &full)?,
            accuracy: class.accuracy,
            tpr: class.tpr,
            fpr: class.fpr,
            f1: class.f1,
        });
    }
    Ok(())
}

pub fn run_replicate(config: &StudyConfig, replicate: usize) -> Result<ReplicateOutput> {
    let seed = config.replicate_seed(replicate);
    let truth = generate_model(&config.design.with_seed(seed))?;
    let scores = sample_scores(&truth.model, config.design.n, seed)?;
    let criteria = config.criteria()?;
    let mut out = ReplicateOutput {
        replicate,
        ..Default::default()
    };

    let mut paths = vec![(Method::Fggrm, fit_path(&scores, &config.path)?)];
    if config.competitors {
        paths.push((Method::Jglasso, fit_jglasso_no_covariates(&scores, None, &config.path)?));
        let (rho, nu) = naive_grids(&scores, &config.path);
        paths.push((Method::Naive, fit_naive(&scores, &rho, &nu, &config.path)?));
    }
    for (method, path) in &paths {
        path_curves(replicate, *method, path, &truth, &config.path, &mut out.curves)?;
        selection_rows(replicate, seed, *method, path, &scores, &truth, &criteria, &config.path, &mut out.rows)?;
    }
    Ok(out)
}

/// Runs all replicates, in parallel by seed, calling `on_done` as each one
/// finishes. The returned outputs are in replicate order.
pub fn run_study(config: &StudyConfig, on_done: &(dyn Fn(&ReplicateOutput) + Sync)) -> Result<Vec<ReplicateOutput>> {
    config.validate()?;
    let work = || {
        (0..config.replicates)
            .into_par_iter()
            .map(|r| {
                let out = run_replicate(config, r)?;
                on_done(&out);
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()
    };
    match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidInput(e.to_string()))?
            .install(work),
        None => work(),
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Median of one metric over replicates for a (method, criterion) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub criterion: String,
    pub replicates: usize,
    pub auc_y: f64,
    pub auc_xy: Option<f64>,
    pub amse: f64,
    pub kl: f64,
    pub accuracy: f64,
    pub f1: f64,
}

pub fn summarize(rows: &[ReplicateRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(Method, String), Vec<&ReplicateRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.method, r.criterion.clone())).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((method, criterion), rs)| {
            let med = |f: &dyn Fn(&ReplicateRow) -> f64| median(&mut rs.iter().map(|r| f(r)).collect::<Vec<_>>());
            let xy: Vec<f64> = rs.iter().filter_map(|r| r.auc_xy).collect();
            SummaryRow {
                method,
                criterion,
                replicates: rs.len(),
                auc_y: med(&|r| r.auc_y),
                auc_xy: (!xy.is_empty()).then(|| median(&mut xy.clone())),
                amse: med(&|r| r.amse),
                kl: med(&|r| r.kl),
                accuracy: med(&|r| r.accuracy),
                f1: med(&|r| r.f1),
            }
        })
        .collect()
}

/// Median curve value per (method, metric, rho_ratio, nu_ratio).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub method: Method,
    pub metric: String,
    pub rho_ratio: Option<f64>,
    pub nu_ratio: Option<f64>,
    pub replicates: usize,
    pub median: f64,
}

pub fn summarize_curves(curves: &[CurveRow]) -> Vec<CurveSummary> {
    type Key = (Method, String, Option<u64>, Option<u64>);
    let mut groups: BTreeMap<Key, Vec<f64>> = BTreeMap::new();
    for c in curves {
        let key = (c.method, c.metric.clone(), c.rho_ratio.map(f64::to_bits), c.nu_ratio.map(f64::to_bits));
        groups.entry(key).or_default().push(c.value);
    }
    groups
        .into_iter()
        .map(|((method, metric, rho, nu), mut v)| CurveSummary {
            method,
            metric,
            rho_ratio: rho.map(f64::from_bits),
            nu_ratio: nu.map(f64::from_bits),
            replicates: v.len(),
            median: median(&mut v),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&mut []).is_nan());
    }

    #[test]
    fn tiny_study_has_finite_columns() {
        let config = StudyConfig {
            design: SimDesign { p: 6, q: 3, blocks: 2, n: 30, ..SimDesign::default() },
            replicates: 1,
            path: PathConfig { n_rho: 3, n_nu: 3, ratio_min: 0.1, ..PathConfig::default() },
            ..StudyConfig::default()
        };
        let out = run_study(&config, &|_| {}).unwrap();
        let rows = &out[0].rows;
        assert_eq!(rows.len(), 3 * 4);
        for r in rows {
            assert!(r.auc_y.is_finite() && r.amse.is_finite() && r.kl.is_finite() && r.accuracy.is_finite());
            assert_eq!(r.auc_xy.is_some(), r.method != Method::Jglasso);
        }
        assert!(!summarize(rows).is_empty());
        assert!(!summarize_curves(&out[0].curves).is_empty());
    }
}
