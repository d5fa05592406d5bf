//! Block-Gaussian graphical regression model and the quantities it induces.
//!
//! Orientation: `b[l]` is `q x p` and maps covariate scores to response-score
//! means through `gamma_hat = b[l]^T chi`.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::basis::BasisSystem;
use crate::error::{Error, Result};
use crate::linalg::{is_pd, Mat};

pub const DEFAULT_ZERO_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockModel {
    pub p: usize,
    pub q: usize,
    pub theta_gamma: Vec<Mat>,
    pub b: Vec<Mat>,
    pub theta_chi: Vec<Mat>,
}

impl BlockModel {
    pub fn new(theta_gamma: Vec<Mat>, b: Vec<Mat>, theta_chi: Vec<Mat>) -> Result<Self> {
        let l = theta_gamma.len();
        if l == 0 || b.len() != l || theta_chi.len() != l {
            return Err(Error::DimensionMismatch(format!(
                "{} precision, {} regression and {} covariate blocks",
                l,
                b.len(),
                theta_chi.len()
            )));
        }
        let p = theta_gamma[0].nrows();
        let q = theta_chi[0].nrows();
        let model = Self {
            p,
            q,
            theta_gamma,
            b,
            theta_chi,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn blocks(&self) -> usize {
        self.theta_gamma.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (p, q) = (self.p, self.q);
        for l in 0..self.blocks() {
            if self.theta_gamma[l].shape() != (p, p)
                || self.b[l].shape() != (q, p)
                || self.theta_chi[l].shape() != (q, q)
            {
                return Err(Error::DimensionMismatch(format!("block {} has inconsistent shapes", l + 1)));
            }
            for (name, m) in [("theta_gamma", &self.theta_gamma[l]), ("theta_chi", &self.theta_chi[l])] {
                let n = m.nrows();
                for i in 0..n {
                    for j in (i + 1)..n {
                        if (m[(i, j)] - m[(j, i)]).abs() > 1e-10 {
                            return Err(Error::InvalidInput(format!("{name}[{}] is not symmetric", l + 1)));
                        }
                    }
                }
                if !is_pd(m) {
                    return Err(Error::NonPositiveDefinite(format!("{name}[{}]", l + 1)));
                }
            }
        }
        Ok(())
    }

    /// Top-left block `Theta_chi + B Theta_gamma B^T` of the joint precision.
    pub fn psi(&self, l: usize) -> Mat {
        &self.theta_chi[l] + &self.b[l] * &self.theta_gamma[l] * self.b[l].transpose()
    }

    /// Precision of `(chi_l, gamma_l)`.
    pub fn joint_precision(&self, l: usize) -> Mat {
        let (p, q) = (self.p, self.q);
        let mut out = Mat::zeros(q + p, q + p);
        let cross = -(&self.b[l] * &self.theta_gamma[l]);
        out.view_mut((0, 0), (q, q)).copy_from(&self.psi(l));
        out.view_mut((0, q), (q, p)).copy_from(&cross);
        out.view_mut((q, 0), (p, q)).copy_from(&cross.transpose());
        out.view_mut((q, q), (p, p)).copy_from(&self.theta_gamma[l]);
        crate::linalg::symmetrize(&out)
    }

    pub fn edges(&self, zero_tol: f64) -> EdgeSets {
        let tol2 = zero_tol * zero_tol;
        let mut undirected = BTreeSet::new();
        for i in 0..self.p {
            for j in (i + 1)..self.p {
                let g: f64 = self.theta_gamma.iter().map(|t| t[(i, j)].powi(2)).sum();
                if g > tol2 {
                    undirected.insert((i, j));
                }
            }
        }
        let mut directed = BTreeSet::new();
        for k in 0..self.q {
            for i in 0..self.p {
                let g: f64 = self.b.iter().map(|b| b[(k, i)].powi(2)).sum();
                if g > tol2 {
                    directed.insert((k, i));
                }
            }
        }
        EdgeSets { undirected, directed }
    }

    /// Group norm of response pair `(i, j)` across blocks.
    pub fn theta_group_norm(&self, i: usize, j: usize) -> f64 {
        self.theta_gamma.iter().map(|t| t[(i, j)].powi(2)).sum::<f64>().sqrt()
    }

    /// Group norm of regression entry `(k, i)` across blocks.
    pub fn b_group_norm(&self, k: usize, i: usize) -> f64 {
        self.b.iter().map(|b| b[(k, i)].powi(2)).sum::<f64>().sqrt()
    }

    /// `beta[i][k]` is the `T x T` surface `sum_l b_l[k, i] phi_l(t) phi_l(s)`.
    pub fn beta_surface(&self, basis: &BasisSystem) -> Result<Vec<Vec<Mat>>> {
        self.check_basis(basis)?;
        Ok((0..self.p)
            .map(|i| (0..self.q).map(|k| self.beta_surface_pair(basis, i, k)).collect())
            .collect())
    }

    pub fn beta_surface_pair(&self, basis: &BasisSystem, i: usize, k: usize) -> Mat {
        let t = basis.grid.points;
        let mut out = Mat::zeros(t, t);
        for l in 0..self.blocks() {
            let coef = self.b[l][(k, i)];
            if coef != 0.0 {
                let phi = basis.eigenfunctions.row(l);
                out += phi.transpose() * phi * coef;
            }
        }
        out
    }

    /// Predicted response curves for one unit: `mu_i(t) + sum_l (b_l^T chi_l)_i phi_l(t)`.
    /// `chi` is `L x q`. Means are taken from `response_means` (one per response).
    pub fn conditional_mean(&self, chi: &Mat, basis: &BasisSystem, response_means: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.check_basis(basis)?;
        let t = basis.grid.points;
        if chi.shape() != (self.blocks(), self.q) {
            return Err(Error::DimensionMismatch(format!(
                "covariate scores are {:?}, expected ({}, {})",
                chi.shape(),
                self.blocks(),
                self.q
            )));
        }
        if response_means.len() != self.p || response_means.iter().any(|m| m.len() != t) {
            return Err(Error::DimensionMismatch("one mean of grid length per response required".into()));
        }
        let mut out = response_means.to_vec();
        for l in 0..self.blocks() {
            let gamma_hat = self.b[l].transpose() * chi.row(l).transpose();
            for (i, curve) in out.iter_mut().enumerate() {
                for (s, v) in curve.iter_mut().enumerate() {
                    *v += gamma_hat[i] * basis.phi(l, s);
                }
            }
        }
        Ok(out)
    }

    /// `-sum_l theta_l,ij phi_l(t) phi_l(t') / (theta_l,ii theta_l,jj - theta_l,ij^2)`.
    pub fn partial_correlation_surface(&self, basis: &BasisSystem, i: usize, j: usize) -> Result<Mat> {
        self.check_basis(basis)?;
        for idx in [i, j] {
            if idx >= self.p {
                return Err(Error::IndexOutOfRange { index: idx, size: self.p });
            }
        }
        if i == j {
            return Err(Error::InvalidInput("partial correlation surface needs i != j".into()));
        }
        let t = basis.grid.points;
        let mut out = Mat::zeros(t, t);
        for (l, th) in self.theta_gamma.iter().enumerate() {
            let num = th[(i, j)];
            if num == 0.0 {
                continue;
            }
            let den = th[(i, i)] * th[(j, j)] - num * num;
            let phi = basis.eigenfunctions.row(l);
            out += phi.transpose() * phi * (-num / den);
        }
        Ok(out)
    }

    fn check_basis(&self, basis: &BasisSystem) -> Result<()> {
        if basis.len() != self.blocks() {
            return Err(Error::DimensionMismatch(format!(
                "basis has {} functions, model has {} blocks",
                basis.len(),
                self.blocks()
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

impl Serialize for BlockModel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        ModelDocument {
            p: self.p,
            q: self.q,
            blocks: self.blocks(),
            theta_gamma: self.theta_gamma.iter().map(rows).collect(),
            b: self.b.iter().map(rows).collect(),
            theta_chi: self.theta_chi.iter().map(rows).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BlockModel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let doc = ModelDocument::deserialize(deserializer)?;
        doc.into_model().map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    p: usize,
    q: usize,
    #[serde(rename = "L")]
    blocks: usize,
    theta_gamma: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "B")]
    b: Vec<Vec<Vec<f64>>>,
    theta_chi: Vec<Vec<Vec<f64>>>,
}

impl ModelDocument {
    fn into_model(self) -> Result<BlockModel> {
        let to_mats = |list: Vec<Vec<Vec<f64>>>, r: usize, c: usize| -> Result<Vec<Mat>> {
            list.into_iter().map(|m| from_rows(m, r, c)).collect()
        };
        let model = BlockModel {
            p: self.p,
            q: self.q,
            theta_gamma: to_mats(self.theta_gamma, self.p, self.p)?,
            b: to_mats(self.b, self.q, self.p)?,
            theta_chi: to_mats(self.theta_chi, self.q, self.q)?,
        };
        let l = self.blocks;
        if l == 0 || model.theta_gamma.len() != l || model.b.len() != l || model.theta_chi.len() != l {
            return Err(Error::DimensionMismatch("block count disagrees with L".into()));
        }
        model.validate()?;
        Ok(model)
    }
}

fn rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().cloned().collect()).collect()
}

fn from_rows(rows: Vec<Vec<f64>>, r: usize, c: usize) -> Result<Mat> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(Error::DimensionMismatch(format!("expected a {r}x{c} matrix")));
    }
    Ok(Mat::from_fn(r, c, |i, j| rows[i][j]))
}

/// Estimated chain-graph edges; indices are 0-based.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EdgeSets {
    /// Response pairs `(i, j)` with `i < j`.
    pub undirected: BTreeSet<(usize, usize)>,
    /// Covariate-to-response arrows `(k, i)`.
    pub directed: BTreeSet<(usize, usize)>,
}

impl EdgeSets {
    pub fn len(&self) -> usize {
        self.undirected.len() + self.directed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
