//! Likelihood, information criteria, joint KL cross-validation and KL loss.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{inverse_pd, logdet_pd, trace_product, Mat};
use crate::model::BlockModel;
use crate::scores::ScoreSet;
use crate::solver::{residual_covariance, PathEntry, PathResult};

/// Entries of `Psi` with magnitude at most this count as zero in the jKLCV mask.
pub const PSI_MASK_TOL: f64 = 1e-8;

/// How `|E|` is counted in the information criteria.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeCounting {
    /// One per nonzero across-block group.
    #[default]
    Groups,
    /// One per nonzero scalar parameter in every block.
    Scalars,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasTerm {
    pub block: usize,
    pub unit: usize,
    pub chi: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub loglik: f64,
    pub edge_count: usize,
    pub aic: f64,
    pub bic: f64,
    pub ebic: f64,
    pub ebic_gamma: f64,
    pub jklcv: f64,
    pub n: usize,
    pub nodes: usize,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub bias_breakdown: Vec<BiasTerm>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Aic,
    Bic,
    Ebic(f64),
    Jklcv,
}

impl Criterion {
    pub fn name(&self) -> &'static str {
        match self {
            Criterion::Aic => "aic",
            Criterion::Bic => "bic",
            Criterion::Ebic(_) => "ebic",
            Criterion::Jklcv => "jklcv",
        }
    }

    pub fn value(&self, r: &CriterionReport) -> f64 {
        match *self {
            Criterion::Aic => r.aic,
            Criterion::Bic => r.bic,
            Criterion::Ebic(g) if g == r.ebic_gamma => r.ebic,
            Criterion::Ebic(g) => ebic_from(r.loglik, r.edge_count, r.n, r.nodes, g),
            Criterion::Jklcv => r.jklcv,
        }
    }
}

impl FromStr for Criterion {
    type Err = Error;

    /// `aic`, `bic`, `jklcv`, `ebic` (g = 0.5) or `ebic:<g>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "aic" => Ok(Criterion::Aic),
            "bic" => Ok(Criterion::Bic),
            "jklcv" => Ok(Criterion::Jklcv),
            "ebic" => Ok(Criterion::Ebic(0.5)),
            _ => match s.strip_prefix("ebic:").or_else(|| s.strip_prefix("ebic=")) {
                Some(g) => {
                    let g: f64 = g
                        .parse()
                        .map_err(|_| Error::InvalidInput(format!("invalid eBIC parameter '{g}'")))?;
                    if !(0.0..=1.0).contains(&g) {
                        return Err(Error::InvalidInput(format!("eBIC parameter must be in [0, 1], got {g}")));
                    }
                    Ok(Criterion::Ebic(g))
                }
                None => Err(Error::InvalidInput(format!("unknown criterion '{s}'"))),
            },
        }
    }
}

fn check_dims(scores: &ScoreSet, model: &BlockModel) -> Result<()> {
    if scores.p() != model.p || scores.q() != model.q || scores.blocks() != model.blocks() {
        return Err(Error::DimensionMismatch(format!(
            "scores have (p, q, L) = ({}, {}, {}), model has ({}, {}, {})",
            scores.p(),
            scores.q(),
            scores.blocks(),
            model.p,
            model.q,
            model.blocks()
        )));
    }
    Ok(())
}

fn second_moment(x: &Mat) -> Mat {
    crate::linalg::symmetrize(&(x.transpose() * x / x.nrows() as f64))
}

/// `(N/2) sum_l [log|Psi_l| - tr(S_chi,l Psi_l) + log|Theta_l| - tr(S(B_l) Theta_l)]`.
pub fn loglik(scores: &ScoreSet, model: &BlockModel) -> Result<f64> {
    check_dims(scores, model)?;
    let mut acc = 0.0;
    for l in 0..model.blocks() {
        let theta = &model.theta_gamma[l];
        let s_b = residual_covariance(&scores.gamma[l], &scores.chi[l], &model.b[l]);
        acc += logdet_pd(theta, "theta_gamma")? - trace_product(&s_b, theta);
        if model.q > 0 {
            let psi = model.psi(l);
            acc += logdet_pd(&psi, "psi")? - trace_product(&second_moment(&scores.chi[l]), &psi);
        }
    }
    Ok(scores.n() as f64 / 2.0 * acc)
}

pub fn edge_count(model: &BlockModel, counting: EdgeCounting) -> usize {
    let (p, q) = (model.p, model.q);
    match counting {
        EdgeCounting::Groups => {
            let undirected = (0..p)
                .flat_map(|i| ((i + 1)..p).map(move |j| (i, j)))
                .filter(|&(i, j)| model.theta_gamma.iter().any(|t| t[(i, j)] != 0.0))
                .count();
            let directed = (0..q)
                .flat_map(|k| (0..p).map(move |i| (k, i)))
                .filter(|&(k, i)| model.b.iter().any(|b| b[(k, i)] != 0.0))
                .count();
            undirected + directed
        }
        EdgeCounting::Scalars => {
            let mut count = 0;
            for (t, b) in model.theta_gamma.iter().zip(&model.b) {
                for i in 0..p {
                    count += ((i + 1)..p).filter(|&j| t[(i, j)] != 0.0).count();
                }
                count += b.iter().filter(|v| **v != 0.0).count();
            }
            count
        }
    }
}

pub fn aic_from(loglik: f64, edges: usize) -> f64 {
    -2.0 * loglik + 2.0 * edges as f64
}

pub fn bic_from(loglik: f64, edges: usize, n: usize) -> f64 {
    -2.0 * loglik + (n as f64).ln() * edges as f64
}

pub fn ebic_from(loglik: f64, edges: usize, n: usize, nodes: usize, g: f64) -> f64 {
    bic_from(loglik, edges, n) + 4.0 * g * edges as f64 * (nodes as f64).ln()
}

pub fn aic(scores: &ScoreSet, model: &BlockModel) -> Result<f64> {
    Ok(aic_from(loglik(scores, model)?, edge_count(model, EdgeCounting::Groups)))
}

pub fn bic(scores: &ScoreSet, model: &BlockModel) -> Result<f64> {
    Ok(bic_from(loglik(scores, model)?, edge_count(model, EdgeCounting::Groups), scores.n()))
}

pub fn ebic(scores: &ScoreSet, model: &BlockModel, g: f64) -> Result<f64> {
    let e = edge_count(model, EdgeCounting::Groups);
    Ok(ebic_from(loglik(scores, model)?, e, scores.n(), model.p + model.q, g))
}

/// `vec[(Omega^{-1} - S_n) . I]^T vec[Omega ((S - S_n) . I) Omega]`.
pub fn bias_term(omega: &Mat, omega_inv: &Mat, pooled: &Mat, unit: &Mat, mask: &Mat) -> f64 {
    let left = (omega_inv - unit).component_mul(mask);
    let right = omega * (pooled - unit).component_mul(mask) * omega;
    left.dot(&right)
}

fn mask_of(m: &Mat, tol: f64) -> Mat {
    m.map(|v| if v.abs() > tol { 1.0 } else { 0.0 })
}

/// Joint KL cross-validation score and its per-(block, unit) bias terms:
/// `-loglik / (2L) + (N L (N L - 1))^{-1} sum_{l, n} (bias_chi + bias_gamma)`.
pub fn jklcv(scores: &ScoreSet, model: &BlockModel) -> Result<(f64, Vec<BiasTerm>)> {
    check_dims(scores, model)?;
    let (n, lb) = (scores.n(), model.blocks());
    if n < 2 {
        return Err(Error::TooFewPoints { found: n, required: 2 });
    }
    let ll = loglik(scores, model)?;
    let mut terms = Vec::with_capacity(n * lb);
    for l in 0..lb {
        let theta = &model.theta_gamma[l];
        let theta_inv = inverse_pd(theta, "theta_gamma")?;
        let gamma_mask = mask_of(theta, 0.0);
        let resid = if model.q == 0 {
            scores.gamma[l].clone()
        } else {
            &scores.gamma[l] - &scores.chi[l] * &model.b[l]
        };
        let s_b = crate::linalg::symmetrize(&(resid.transpose() * &resid / n as f64));
        let chi_parts = if model.q > 0 {
            let psi = model.psi(l);
            let psi_inv = inverse_pd(&psi, "psi")?;
            let mask = mask_of(&psi, PSI_MASK_TOL);
            Some((psi, psi_inv, mask, second_moment(&scores.chi[l])))
        } else {
            None
        };
        for u in 0..n {
            let r = resid.row(u).transpose();
            let s_n = &r * r.transpose();
            let gamma = bias_term(theta, &theta_inv, &s_b, &s_n, &gamma_mask);
            let chi = match &chi_parts {
                Some((psi, psi_inv, mask, s_chi)) => {
                    let x = scores.chi[l].row(u).transpose();
                    bias_term(psi, psi_inv, s_chi, &(&x * x.transpose()), mask)
                }
                None => 0.0,
            };
            terms.push(BiasTerm { block: l, unit: u, chi, gamma });
        }
    }
    let nl = (n * lb) as f64;
    let total: f64 = terms.iter().map(|t| t.chi + t.gamma).sum();
    Ok((-ll / (2.0 * lb as f64) + total / (nl * (nl - 1.0)), terms))
}

/// Sum over blocks of the Gaussian KL divergences of the covariate and the
/// conditional response parts, true model first.
pub fn kl_true(truth: &BlockModel, estimate: &BlockModel) -> Result<f64> {
    if truth.p != estimate.p || truth.q != estimate.q || truth.blocks() != estimate.blocks() {
        return Err(Error::DimensionMismatch("true and estimated models differ in shape".into()));
    }
    let part = |a: &Mat, b: &Mat, what: &str| -> Result<f64> {
        if a.nrows() == 0 {
            return Ok(0.0);
        }
        let a_inv = inverse_pd(a, what)?;
        let tr = trace_product(&a_inv, b);
        let ld = logdet_pd(b, what)? - logdet_pd(a, what)?;
        Ok(tr - ld - a.nrows() as f64)
    };
    let mut acc = 0.0;
    for l in 0..truth.blocks() {
        acc += part(&truth.psi(l), &estimate.psi(l), "psi")?;
        acc += part(&truth.theta_gamma[l], &estimate.theta_gamma[l], "theta_gamma")?;
    }
    Ok(0.5 * acc)
}

pub fn criterion_report(
    scores: &ScoreSet,
    model: &BlockModel,
    ebic_gamma: f64,
    counting: EdgeCounting,
    keep_bias: bool,
) -> Result<CriterionReport> {
    let ll = loglik(scores, model)?;
    let e = edge_count(model, counting);
    let (n, nodes) = (scores.n(), model.p + model.q);
    let (jk, bias) = jklcv(scores, model)?;
    Ok(CriterionReport {
        loglik: ll,
        edge_count: e,
        aic: aic_from(ll, e),
        bic: bic_from(ll, e, n),
        ebic: ebic_from(ll, e, n, nodes, ebic_gamma),
        ebic_gamma,
        jklcv: jk,
        n,
        nodes,
        bias_breakdown: if keep_bias { bias } else { Vec::new() },
    })
}

#[derive(Debug, Clone)]
pub struct Selection<'a> {
    pub index: usize,
    pub entry: &'a PathEntry,
    pub value: f64,
}

/// Argmin of `criterion` over the path; ties go to the larger `(rho, nu)`.
pub fn select<'a>(path: &'a PathResult, criterion: Criterion) -> Result<Selection<'a>> {
    select_entries(&path.entries, criterion)
}

pub fn select_entries(entries: &[PathEntry], criterion: Criterion) -> Result<Selection<'_>> {
    let mut best: Option<(usize, f64)> = None;
    for (i, e) in entries.iter().enumerate() {
        let v = criterion.value(&e.report);
        if v.is_nan() {
            continue;
        }
        let better = match best {
            None => true,
            Some((j, bv)) => {
                let b = &entries[j];
                v < bv || (v == bv && (e.rho, e.nu) > (b.rho, b.nu))
            }
        };
        if better {
            best = Some((i, v));
        }
    }
    let (index, value) = best.ok_or(Error::EmptyPath)?;
    Ok(Selection {
        index,
        entry: &entries[index],
        value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_model(theta: f64, b: f64, chi: f64) -> BlockModel {
        BlockModel::new(
            vec![Mat::from_element(1, 1, theta)],
            vec![Mat::from_element(1, 1, b)],
            vec![Mat::from_element(1, 1, chi)],
        )
        .unwrap()
    }

    #[test]
    fn scalar_loglik_by_hand() {
        // S_chi = 1, S(B) = 2, Psi = 1, Theta = 0.5, B = 0
        let s = ScoreSet::from_blocks(
            vec![Mat::from_column_slice(2, 1, &[2f64.sqrt(), -(2f64.sqrt())])],
            vec![Mat::from_column_slice(2, 1, &[1.0, -1.0])],
        )
        .unwrap();
        let m = scalar_model(0.5, 0.0, 1.0);
        let ll = loglik(&s, &m).unwrap();
        assert!((ll - (-2.0 + 0.5f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn identity_loglik() {
        let g = Mat::from_row_slice(2, 2, &[1.0, 1.0, -1.0, -1.0]) * (0.5f64.sqrt() * 2f64.sqrt());
        let x = Mat::from_row_slice(2, 1, &[1.0, -1.0]);
        let s = ScoreSet::from_blocks(vec![g], vec![x]).unwrap();
        let m = BlockModel::new(vec![Mat::identity(2, 2)], vec![Mat::zeros(1, 2)], vec![Mat::identity(1, 1)]).unwrap();
        // tr S_gamma = 2, tr S_chi = 1
        assert!((loglik(&s, &m).unwrap() - (-3.0)).abs() < 1e-12);
    }

    #[test]
    fn ebic_at_zero_is_bic_and_difference_by_hand() {
        for (ll, e) in [(-12.3, 0usize), (4.5, 3), (-0.1, 17)] {
            assert_eq!(ebic_from(ll, e, 50, 6, 0.0), bic_from(ll, e, 50));
        }
        let d = ebic_from(-5.0, 3, 50, 6, 0.5) - bic_from(-5.0, 3, 50);
        assert!((d - 4.0 * 0.5 * 3.0 * 6f64.ln()).abs() < 1e-12);
        assert_eq!(aic_from(2.0, 0), -4.0);
        assert_eq!(bic_from(2.0, 0, 9), -4.0);
    }

    #[test]
    fn criteria_shift_with_edges() {
        let (ll, n, nodes, g) = (-7.25, 40usize, 9usize, 0.3);
        for k in 1..5 {
            assert!((aic_from(ll, 2 + k) - aic_from(ll, 2) - 2.0 * k as f64).abs() < 1e-12);
            assert!((bic_from(ll, 2 + k, n) - bic_from(ll, 2, n) - k as f64 * (n as f64).ln()).abs() < 1e-12);
            let de = ebic_from(ll, 2 + k, n, nodes, g) - ebic_from(ll, 2, n, nodes, g);
            let expected = k as f64 * ((n as f64).ln() + 4.0 * g * (nodes as f64).ln());
            assert!((de - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn scalar_jklcv_matches_hand_oracle() {
        // p = q = 1, L = 1, N = 2
        let (g1, g2, x1, x2) = (0.7f64, -0.2f64, 1.1f64, 0.4f64);
        let (theta, b, tchi) = (0.8f64, 0.3f64, 1.5f64);
        let s = ScoreSet::from_blocks(
            vec![Mat::from_column_slice(2, 1, &[g1, g2])],
            vec![Mat::from_column_slice(2, 1, &[x1, x2])],
        )
        .unwrap();
        let m = scalar_model(theta, b, tchi);
        let (value, terms) = jklcv(&s, &m).unwrap();

        let psi = tchi + b * theta * b;
        let sx = (x1 * x1 + x2 * x2) / 2.0;
        let (r1, r2) = (g1 - b * x1, g2 - b * x2);
        let sg = (r1 * r1 + r2 * r2) / 2.0;
        let bias = |om: f64, pooled: f64, unit: f64| (1.0 / om - unit) * om * (pooled - unit) * om;
        let mut total = 0.0;
        for (x, r) in [(x1, r1), (x2, r2)] {
            total += bias(psi, sx, x * x) + bias(theta, sg, r * r);
        }
        let ll = (psi.ln() - sx * psi + theta.ln() - sg * theta) * 2.0 / 2.0;
        let expected = -ll / 2.0 + total / (2.0 * 1.0);
        assert!((value - expected).abs() < 1e-12, "{value} vs {expected}");
        assert_eq!(terms.len(), 2);
        assert!((terms[0].chi - bias(psi, sx, x1 * x1)).abs() < 1e-12);
    }

    #[test]
    fn bias_vanishes_for_identical_units() {
        let s = ScoreSet::from_blocks(
            vec![Mat::from_row_slice(2, 2, &[0.4, -0.3, 0.4, -0.3])],
            vec![Mat::from_row_slice(2, 1, &[1.2, 1.2])],
        )
        .unwrap();
        let m = BlockModel::new(
            vec![Mat::from_row_slice(2, 2, &[2.0, 0.4, 0.4, 1.0])],
            vec![Mat::from_row_slice(1, 2, &[0.1, -0.2])],
            vec![Mat::identity(1, 1)],
        )
        .unwrap();
        let (value, terms) = jklcv(&s, &m).unwrap();
        assert!(terms.iter().all(|t| t.chi.abs() < 1e-14 && t.gamma.abs() < 1e-14));
        assert!((value + loglik(&s, &m).unwrap() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_kl_by_hand() {
        let truth = BlockModel::new(vec![Mat::identity(1, 1)], vec![Mat::zeros(1, 1)], vec![Mat::identity(1, 1)]).unwrap();
        let est = BlockModel::new(
            vec![Mat::from_element(1, 1, 2.0)],
            vec![Mat::zeros(1, 1)],
            vec![Mat::from_element(1, 1, 2.0)],
        )
        .unwrap();
        assert!((kl_true(&truth, &est).unwrap() - (1.0 - 2f64.ln())).abs() < 1e-12);
        assert!(kl_true(&truth, &truth).unwrap().abs() < 1e-12);
    }

    #[test]
    fn criterion_parsing() {
        assert_eq!("AIC".parse::<Criterion>().unwrap(), Criterion::Aic);
        assert_eq!("ebic:0.25".parse::<Criterion>().unwrap(), Criterion::Ebic(0.25));
        assert!("ebic:2".parse::<Criterion>().is_err());
        assert!("cv".parse::<Criterion>().is_err());
    }
}
