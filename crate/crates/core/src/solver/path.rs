//! Fits over a two-dimensional penalty grid with warm-started inner sweeps.

use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit, fit_from, penalty_bounds, FitConfig, TraceEntry};
use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::linalg::Mat;
use crate::model::BlockModel;
use crate::scores::ScoreSet;
use crate::selection::{criterion_report, CriterionReport, EdgeCounting};

/// Smallest grid ratio used when a ratio of zero is requested.
pub const RATIO_FLOOR: f64 = 1e-4;

/// Which penalty is swept inside each chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sweep {
    /// Outer loop over `nu`, inner warm-started sweep over `rho`.
    #[default]
    ThetaMajor,
    /// Outer loop over `rho`, inner warm-started sweep over `nu`.
    BMajor,
}

impl FromStr for Sweep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theta-major" => Ok(Sweep::ThetaMajor),
            "b-major" => Ok(Sweep::BMajor),
            _ => Err(Error::InvalidInput(format!("unknown sweep '{s}' (theta-major or b-major)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathConfig {
    pub n_rho: usize,
    pub n_nu: usize,
    pub ratio_min: f64,
    pub sweep: Sweep,
    pub warm_start: bool,
    pub ebic_gamma: f64,
    pub edge_counting: EdgeCounting,
    /// Keep the per-(block, unit) jKLCV terms in every report.
    pub keep_bias: bool,
    /// Solver settings; `rho` and `nu` are taken from the grid.
    pub fit: FitConfig,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            n_rho: 10,
            n_nu: 10,
            ratio_min: 0.01,
            sweep: Sweep::ThetaMajor,
            warm_start: true,
            ebic_gamma: 0.5,
            edge_counting: EdgeCounting::Groups,
            keep_bias: false,
            fit: FitConfig::default(),
        }
    }
}

impl PathConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_rho == 0 || self.n_nu == 0 {
            return Err(Error::InvalidInput("grid sizes must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.ratio_min) && self.ratio_min != 1.0 {
            return Err(Error::InvalidInput(format!("ratio_min must be in [0, 1], got {}", self.ratio_min)));
        }
        if !(0.0..=1.0).contains(&self.ebic_gamma) {
            return Err(Error::InvalidInput(format!("ebic_gamma must be in [0, 1], got {}", self.ebic_gamma)));
        }
        self.fit.validate()
    }
}

/// `n` log-spaced values from `max` down to `ratio * max` (ratio 0 uses [`RATIO_FLOOR`]).
pub fn log_grid(max: f64, ratio: f64, n: usize) -> Vec<f64> {
    let ratio = if ratio <= 0.0 { RATIO_FLOOR } else { ratio };
    if n == 1 {
        return vec![max];
    }
    (0..n)
        .map(|i| max * ratio.powf(i as f64 / (n - 1) as f64))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathEntry {
    pub rho: f64,
    pub nu: f64,
    pub rho_index: usize,
    pub nu_index: usize,
    pub model: BlockModel,
    pub report: CriterionReport,
    pub objective: f64,
    pub iterations: usize,
    pub trace: Vec<TraceEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathResult {
    pub rho_grid: Vec<f64>,
    pub nu_grid: Vec<f64>,
    pub sweep: Sweep,
    pub ebic_gamma: f64,
    /// Ordered by `nu_index`, then `rho_index`.
    pub entries: Vec<PathEntry>,
}

impl PathResult {
    pub fn total_iterations(&self) -> usize {
        self.entries.iter().map(|e| e.iterations).sum()
    }

    pub fn entry(&self, rho_index: usize, nu_index: usize) -> Option<&PathEntry> {
        self.entries
            .iter()
            .find(|e| e.rho_index == rho_index && e.nu_index == nu_index)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        Ok(serde_json::from_reader(file)?)
    }

    /// Rows `rho,nu,loglik,edges,aic,bic,ebic,jklcv`.
    pub fn write_criteria_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["rho", "nu", "loglik", "edges", "aic", "bic", "ebic", "jklcv"])?;
        for e in &self.entries {
            let r = &e.report;
            w.write_record([
                fmt_f64(e.rho),
                fmt_f64(e.nu),
                fmt_f64(r.loglik),
                r.edge_count.to_string(),
                fmt_f64(r.aic),
                fmt_f64(r.bic),
                fmt_f64(r.ebic),
                fmt_f64(r.jklcv),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// One JSON line per half-step of every fit, tagged with its penalties.
    pub fn write_diagnostics<W: Write>(&self, mut out: W) -> Result<()> {
        #[derive(Serialize)]
        struct Line<'a> {
            rho: f64,
            nu: f64,
            #[serde(flatten)]
            step: &'a TraceEntry,
        }
        for e in &self.entries {
            for step in &e.trace {
                serde_json::to_writer(&mut out, &Line { rho: e.rho, nu: e.nu, step })?;
                out.write_all(b"\n")?;
            }
        }
        Ok(())
    }
}

/// Fits the grid spanned by [`penalty_bounds`] and `config`.
pub fn fit_path(scores: &ScoreSet, config: &PathConfig) -> Result<PathResult> {
    config.validate()?;
    let (rho_max, nu_max) = penalty_bounds(scores);
    let rho = log_grid(rho_max, config.ratio_min, config.n_rho);
    let nu = if scores.q() == 0 {
        vec![0.0]
    } else {
        log_grid(nu_max, config.ratio_min, config.n_nu)
    };
    fit_path_on_grid(scores, &rho, &nu, config)
}

/// Fits every `(rho, nu)` pair. Grids are sorted into decreasing order; each
/// outer value runs an independent chain, parallel across chains.
pub fn fit_path_on_grid(scores: &ScoreSet, rho: &[f64], nu: &[f64], config: &PathConfig) -> Result<PathResult> {
    if rho.is_empty() || nu.is_empty() {
        return Err(Error::InvalidInput("penalty grids must be non-empty".into()));
    }
    if rho.iter().chain(nu).any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput("penalties must be finite and non-negative".into()));
    }
    let mut rho_grid = rho.to_vec();
    let mut nu_grid = nu.to_vec();
    rho_grid.sort_by(|a, b| b.total_cmp(a));
    nu_grid.sort_by(|a, b| b.total_cmp(a));

    let (outer, inner) = match config.sweep {
        Sweep::ThetaMajor => (&nu_grid, &rho_grid),
        Sweep::BMajor => (&rho_grid, &nu_grid),
    };
    let chains: Vec<Vec<PathEntry>> = outer
        .par_iter()
        .enumerate()
        .map(|(o, &outer_value)| {
            let mut warm: Option<(Vec<Mat>, Vec<Mat>)> = None;
            let mut chain = Vec::with_capacity(inner.len());
            for (i, &inner_value) in inner.iter().enumerate() {
                let (rho, nu, rho_index, nu_index) = match config.sweep {
                    Sweep::ThetaMajor => (inner_value, outer_value, i, o),
                    Sweep::BMajor => (outer_value, inner_value, o, i),
                };
                let cfg = FitConfig { rho, nu, ..config.fit.clone() };
                let result = match (&warm, config.warm_start) {
                    (Some((b, t)), true) => fit_from(scores, &cfg, Some((b, t))),
                    _ => fit(scores, &cfg),
                }?;
                let report = criterion_report(scores, &result.model, config.ebic_gamma, config.edge_counting, config.keep_bias)?;
                warm = Some((result.model.b.clone(), result.model.theta_gamma.clone()));
                chain.push(PathEntry {
                    rho,
                    nu,
                    rho_index,
                    nu_index,
                    model: result.model,
                    report,
                    objective: result.objective,
                    iterations: result.iterations,
                    trace: result.trace,
                });
            }
            Ok(chain)
        })
        .collect::<Result<_>>()?;
    let mut entries: Vec<PathEntry> = chains.into_iter().flatten().collect();
    entries.sort_by_key(|e| (e.nu_index, e.rho_index));
    Ok(PathResult {
        rho_grid,
        nu_grid,
        sweep: config.sweep,
        ebic_gamma: config.ebic_gamma,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(2.0, 0.01, 5);
        assert_eq!(g[0], 2.0);
        assert!((g[4] - 0.02).abs() < 1e-15);
        assert!(g.windows(2).all(|w| w[1] < w[0]));
        assert!((log_grid(1.0, 0.0, 3)[2] - RATIO_FLOOR).abs() < 1e-18);
        assert_eq!(log_grid(3.0, 0.1, 1), vec![3.0]);
    }

    #[test]
    fn sweep_parsing() {
        assert_eq!("b-major".parse::<Sweep>().unwrap(), Sweep::BMajor);
        assert!("diagonal".parse::<Sweep>().is_err());
    }
}
