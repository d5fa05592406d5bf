//! Synthetic star-design block models, score sampling, competitor
//! estimators and recovery metrics.

mod competitors;
mod metrics;
mod study;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, inverse_pd, min_eigenvalue, symmetrize, Mat};
use crate::model::{BlockModel, EdgeSets};
use crate::scores::ScoreSet;

pub use competitors::{embed_without_covariates, fit_jglasso_no_covariates, fit_naive, naive_grids};
pub use metrics::{
    amse, auc_from_scores, classification, path_auc_directed, path_auc_undirected, recovery_accuracy,
    Classification,
};
pub use study::{
    median, run_replicate, run_study, summarize, summarize_curves, CurveRow, CurveSummary, Method, ReplicateOutput,
    ReplicateRow, StudyConfig, SummaryRow,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimDesign {
    pub p: usize,
    pub q: usize,
    #[serde(rename = "L")]
    pub blocks: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub hub_spacing: usize,
    pub theta_range: (f64, f64),
    pub b_range: (f64, f64),
    pub covariates_per_response: usize,
    pub block_scale_exponent: f64,
    pub seed: u64,
}

impl Default for SimDesign {
    fn default() -> Self {
        Self {
            p: 20,
            q: 5,
            blocks: 3,
            n: 50,
            hub_spacing: 5,
            theta_range: (0.4, 0.5),
            b_range: (1.0, 1.4),
            covariates_per_response: 2,
            block_scale_exponent: 0.2,
            seed: 1,
        }
    }
}

impl SimDesign {
    pub fn validate(&self) -> Result<()> {
        if self.hub_spacing < 2 || self.p < self.hub_spacing {
            return Err(Error::InvalidInput(format!(
                "need hub_spacing >= 2 and p >= hub_spacing, got p = {}, hub_spacing = {}",
                self.p, self.hub_spacing
            )));
        }
        if self.blocks == 0 || self.n < 2 {
            return Err(Error::InvalidInput("need L >= 1 and N >= 2".into()));
        }
        if self.q > 0 && self.covariates_per_response > self.q {
            return Err(Error::InvalidInput(format!(
                "covariates_per_response = {} exceeds q = {}",
                self.covariates_per_response, self.q
            )));
        }
        for (name, (lo, hi)) in [("theta_range", self.theta_range), ("b_range", self.b_range)] {
            if !(lo > 0.0 && lo < hi && hi.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must satisfy 0 < low < high")));
            }
        }
        if !self.block_scale_exponent.is_finite() || self.block_scale_exponent <= 0.0 {
            return Err(Error::InvalidInput("block_scale_exponent must be positive".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// A generated model with its planted edges.
#[derive(Debug, Clone)]
pub struct TrueModel {
    pub model: BlockModel,
    pub edges: EdgeSets,
}

/// Star support: hubs `0, s, 2s, ...` (0-based) joined to the next `s - 1` indices.
pub fn star_support(p: usize, spacing: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for r in (0..p).step_by(spacing) {
        for j in (r + 1)..(r + spacing).min(p) {
            out.push((r, j));
        }
    }
    out
}

fn signed_uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    let magnitude = rng.random_range(lo..hi);
    if rng.random_bool(0.5) {
        magnitude
    } else {
        -magnitude
    }
}

/// Draws a star-design model. Per block the off-diagonal magnitudes are
/// resampled, the matrix is shifted to be PD when necessary, and its
/// covariance is rescaled to `tr(Sigma_1) / l^exponent`. The regression
/// support (covariates per response) is shared by all blocks.
pub fn generate_model(design: &SimDesign) -> Result<TrueModel> {
    design.validate()?;
    let (p, q, lb) = (design.p, design.q, design.blocks);
    let mut rng = ChaCha8Rng::seed_from_u64(design.seed);
    let support = star_support(p, design.hub_spacing);

    let mut thetas = Vec::with_capacity(lb);
    let mut first_trace = 0.0;
    for l in 0..lb {
        let mut t = Mat::identity(p, p);
        for &(i, j) in &support {
            let v = signed_uniform(&mut rng, design.theta_range);
            t[(i, j)] = v;
            t[(j, i)] = v;
        }
        let lmin = min_eigenvalue(&t);
        if lmin <= 0.05 {
            t += Mat::identity(p, p) * (lmin.abs() + 0.1);
        }
        let sigma_trace = inverse_pd(&t, "generated precision")?.trace();
        if l == 0 {
            first_trace = sigma_trace;
        }
        let target = first_trace / ((l + 1) as f64).powf(design.block_scale_exponent);
        // Sigma -> c Sigma  <=>  Theta -> Theta / c
        thetas.push(symmetrize(&(t * (sigma_trace / target))));
    }

    let mut b_support: Vec<Vec<usize>> = Vec::with_capacity(p);
    if q > 0 {
        for _ in 0..p {
            let mut ks = sample(&mut rng, q, design.covariates_per_response).into_vec();
            ks.sort_unstable();
            b_support.push(ks);
        }
    }
    let mut bs = Vec::with_capacity(lb);
    for _ in 0..lb {
        let mut b = Mat::zeros(q, p);
        for (i, ks) in b_support.iter().enumerate() {
            for &k in ks {
                b[(k, i)] = signed_uniform(&mut rng, design.b_range);
            }
        }
        bs.push(b);
    }
    let model = BlockModel::new(thetas, bs, vec![Mat::identity(q, q); lb])?;
    let edges = model.edges(0.0);
    Ok(TrueModel { model, edges })
}

/// Draws `n` independent units per block from the zero-mean Gaussian with
/// precision `model.joint_precision(l)`. Blocks are drawn in order from one
/// stream, so the result depends only on `seed`.
pub fn sample_scores(model: &BlockModel, n: usize, seed: u64) -> Result<ScoreSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let (p, q) = (model.p, model.q);
    let d = p + q;
    let mut gamma = Vec::with_capacity(model.blocks());
    let mut chi = Vec::with_capacity(model.blocks());
    for l in 0..model.blocks() {
        let sigma = inverse_pd(&model.joint_precision(l), "joint precision")?;
        let factor = cholesky(&symmetrize(&sigma), "joint covariance")?.l();
        let z = Mat::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let draws = z * factor.transpose();
        chi.push(draws.columns(0, q).into_owned());
        gamma.push(draws.columns(q, p).into_owned());
    }
    ScoreSet::from_blocks(gamma, chi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design(p: usize, q: usize, l: usize) -> SimDesign {
        SimDesign {
            p,
            q,
            blocks: l,
            seed: 11,
            ..SimDesign::default()
        }
    }

    #[test]
    fn star_support_of_ten() {
        let s = star_support(10, 5);
        let expected: Vec<(usize, usize)> = [0usize, 5]
            .iter()
            .flat_map(|&r| (1..5).map(move |s| (r, r + s)))
            .collect();
        assert_eq!(s, expected);
        let t = generate_model(&design(10, 3, 1)).unwrap();
        let support: Vec<(usize, usize)> = t.edges.undirected.iter().copied().collect();
        assert_eq!(support, expected);
    }

    #[test]
    fn traces_decrease_and_b_support_is_shared() {
        let t = generate_model(&design(20, 5, 3)).unwrap();
        let traces: Vec<f64> = t
            .model
            .theta_gamma
            .iter()
            .map(|m| inverse_pd(m, "t").unwrap().trace())
            .collect();
        assert!(traces[0] > traces[1] && traces[1] > traces[2]);
        for l in 0..3 {
            for i in 0..20 {
                let rows: Vec<usize> = (0..5).filter(|&k| t.model.b[l][(k, i)] != 0.0).collect();
                let rows0: Vec<usize> = (0..5).filter(|&k| t.model.b[0][(k, i)] != 0.0).collect();
                assert_eq!(rows.len(), 2);
                assert_eq!(rows, rows0);
            }
        }
        assert_eq!(t.edges.directed.len(), 40);
    }

    #[test]
    fn same_seed_same_scores() {
        let t = generate_model(&design(10, 3, 2)).unwrap();
        let a = sample_scores(&t.model, 30, 5).unwrap();
        let b = sample_scores(&t.model, 30, 5).unwrap();
        let c = sample_scores(&t.model, 30, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_designs_rejected() {
        assert!(generate_model(&design(3, 1, 1)).is_err());
        assert!(generate_model(&SimDesign { q: 1, ..design(10, 1, 1) }).is_err());
        assert!(generate_model(&SimDesign { theta_range: (0.5, 0.4), ..design(10, 3, 1) }).is_err());
    }
}
