use crate::error::{Error, Result};
use crate::linalg::{trace_product, Mat};
use crate::scores::ScoreSet;

/// Second moments of one block: `s_chi = X^T X / N`, `s_gamma = G^T G / N`
/// and `s_cross = X^T G / N` (q x p).
#[derive(Debug, Clone)]
pub struct BlockMoments {
    pub s_chi: Mat,
    pub s_gamma: Mat,
    pub s_cross: Mat,
}

impl BlockMoments {
    pub fn p(&self) -> usize {
        self.s_gamma.nrows()
    }

    pub fn q(&self) -> usize {
        self.s_chi.nrows()
    }

    /// `tr(S(B) Theta)` expanded through the moments.
    pub fn residual_trace(&self, b: &Mat, theta: &Mat) -> f64 {
        if self.q() == 0 {
            return trace_product(&self.s_gamma, theta);
        }
        let sb = &self.s_chi * b;
        trace_product(&self.s_gamma, theta) - 2.0 * trace_product(&(b.transpose() * &self.s_cross), theta)
            + trace_product(&(b.transpose() * sb), theta)
    }

    /// Gradient in `B` of `tr(S(B) Theta)`: `2 (S_chi B - S_cross) Theta`.
    pub fn gradient(&self, b: &Mat, theta: &Mat) -> Mat {
        (&self.s_chi * b - &self.s_cross) * theta * 2.0
    }
}

pub fn moments(scores: &ScoreSet) -> Vec<BlockMoments> {
    let n = scores.n() as f64;
    scores
        .gamma
        .iter()
        .zip(&scores.chi)
        .map(|(g, x)| BlockMoments {
            s_chi: crate::linalg::symmetrize(&(x.transpose() * x / n)),
            s_gamma: crate::linalg::symmetrize(&(g.transpose() * g / n)),
            s_cross: x.transpose() * g / n,
        })
        .collect()
}

/// Residual covariance `S(B) = N^{-1} sum_n (gamma_n - B^T chi_n)(gamma_n - B^T chi_n)^T`,
/// computed from the residuals so that it is PSD to rounding.
pub fn residual_covariance(gamma: &Mat, chi: &Mat, b: &Mat) -> Mat {
    let n = gamma.nrows() as f64;
    let r = if chi.ncols() == 0 { gamma.clone() } else { gamma - chi * b };
    crate::linalg::symmetrize(&(r.transpose() * &r / n))
}

/// Per-block `(S_chi, S(B), S_cross)`.
#[derive(Debug, Clone)]
pub struct Covariances {
    pub s_chi: Vec<Mat>,
    pub s_b: Vec<Mat>,
    pub s_cross: Vec<Mat>,
}

pub fn empirical_covariances(scores: &ScoreSet, b: &[Mat]) -> Result<Covariances> {
    if b.len() != scores.blocks() || b.iter().any(|m| m.shape() != (scores.q(), scores.p())) {
        return Err(Error::DimensionMismatch(format!(
            "need {} regression matrices of shape ({}, {})",
            scores.blocks(),
            scores.q(),
            scores.p()
        )));
    }
    let m = moments(scores);
    Ok(Covariances {
        s_chi: m.iter().map(|x| x.s_chi.clone()).collect(),
        s_b: (0..scores.blocks())
            .map(|l| residual_covariance(&scores.gamma[l], &scores.chi[l], &b[l]))
            .collect(),
        s_cross: m.into_iter().map(|x| x.s_cross).collect(),
    })
}
