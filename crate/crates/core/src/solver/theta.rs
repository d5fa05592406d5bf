//! Precision step: joint group graphical lasso over blocks.
//!
//! Minimizes `sum_l [tr(S_l Theta_l) - log det Theta_l] + rho sum_{i != j} ||(theta_l,ij)_l||`
//! by ADMM on the split `X = Z`. The X-update is the log-det proximal map,
//! computed per block from one eigendecomposition; the Z-update applies the
//! across-block group soft-threshold to each off-diagonal pair and leaves
//! diagonals unpenalized. The returned iterate is Z, which carries the exact
//! zeros.

use crate::error::{Error, Result};
use crate::linalg::{inverse_pd, is_pd, min_eigenvalue, symmetrize, Mat};

#[derive(Debug, Clone)]
pub struct ThetaStep {
    pub theta: Vec<Mat>,
    pub iterations: usize,
    pub kkt: f64,
    /// `(primal, dual)` residual per ADMM iteration.
    pub residuals: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy)]
pub struct AdmmOptions {
    pub penalty: f64,
    pub tol: f64,
    pub kkt_tol: f64,
    pub max_iter: usize,
}

/// `max_{i<j} sqrt(sum_l s_l,ij^2)`: smallest penalty with a diagonal solution.
pub fn rho_bound(s: &[Mat]) -> f64 {
    let p = s[0].nrows();
    let mut worst: f64 = 0.0;
    for i in 0..p {
        for j in (i + 1)..p {
            worst = worst.max(s.iter().map(|m| m[(i, j)].powi(2)).sum::<f64>().sqrt());
        }
    }
    worst
}

pub(crate) fn diagonal_solution(s: &[Mat]) -> Result<Vec<Mat>> {
    s.iter()
        .map(|m| {
            let p = m.nrows();
            let mut out = Mat::zeros(p, p);
            for i in 0..p {
                if !(m[(i, i)] > 0.0) {
                    return Err(Error::NonPositiveDefinite(format!(
                        "covariance has non-positive diagonal entry {} at {i}",
                        m[(i, i)]
                    )));
                }
                out[(i, i)] = 1.0 / m[(i, i)];
            }
            Ok(out)
        })
        .collect()
}

pub(crate) fn fused_penalty(theta: &[Mat]) -> f64 {
    let p = theta[0].nrows();
    let mut acc = 0.0;
    for i in 0..p {
        for j in (i + 1)..p {
            acc += theta.iter().map(|m| m[(i, j)].powi(2)).sum::<f64>().sqrt();
        }
    }
    // penalty counts ordered pairs
    2.0 * acc
}

/// KKT violation of the precision problem at `theta`; infinite when not PD.
pub fn theta_kkt(s: &[Mat], theta: &[Mat], rho: f64) -> f64 {
    let mut grads = Vec::with_capacity(s.len());
    for (sl, tl) in s.iter().zip(theta) {
        match inverse_pd(tl, "theta") {
            Ok(w) => grads.push(sl - w),
            Err(_) => return f64::INFINITY,
        }
    }
    let p = s[0].nrows();
    let mut worst: f64 = 0.0;
    for g in &grads {
        for i in 0..p {
            worst = worst.max(g[(i, i)].abs());
        }
    }
    for i in 0..p {
        for j in (i + 1)..p {
            let norm = theta.iter().map(|m| m[(i, j)].powi(2)).sum::<f64>().sqrt();
            let v = if norm > 0.0 {
                theta
                    .iter()
                    .zip(&grads)
                    .map(|(t, g)| (g[(i, j)] + rho * t[(i, j)] / norm).powi(2))
                    .sum::<f64>()
                    .sqrt()
            } else {
                (grads.iter().map(|g| g[(i, j)].powi(2)).sum::<f64>().sqrt() - rho).max(0.0)
            };
            worst = worst.max(v);
        }
    }
    worst
}

/// Ridge applied only for an unpenalized problem on a singular covariance.
pub(crate) fn regularize_if_singular(s: &[Mat], rho: f64) -> Vec<Mat> {
    if rho > 0.0 {
        return s.to_vec();
    }
    s.iter()
        .enumerate()
        .map(|(l, m)| {
            let p = m.nrows();
            if p > 0 && min_eigenvalue(m) < 1e-10 {
                let ridge = 1e-6 * m.trace() / p as f64;
                log::warn!("block {}: singular covariance with rho = 0, adding ridge {ridge:e}", l + 1);
                m + Mat::identity(p, p) * ridge
            } else {
                m.clone()
            }
        })
        .collect()
}

fn logdet_prox(target: &Mat, a: f64) -> Mat {
    // a X - X^{-1} = target  =>  X = Q diag((d + sqrt(d^2 + 4a)) / 2a) Q^T
    let eig = nalgebra::SymmetricEigen::new(target.clone());
    let q = eig.eigenvectors;
    let vals: Vec<f64> = eig.eigenvalues.iter().map(|&d| {
            let r = (d * d + 4.0 * a).sqrt();
            if d >= 0.0 {
                (d + r) / (2.0 * a)
            } else {
                2.0 / (r - d)
            }
        })
        .collect();
    let scaled = Mat::from_fn(q.nrows(), q.ncols(), |i, j| q[(i, j)] * vals[j]);
    symmetrize(&(scaled * q.transpose()))
}

fn frob(list: &[Mat]) -> f64 {
    list.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
}

pub fn update_theta(s: &[Mat], rho: f64, warm: Option<&[Mat]>, opts: &AdmmOptions) -> Result<ThetaStep> {
    let p = s[0].nrows();
    if p == 0 {
        return Ok(ThetaStep {
            theta: s.to_vec(),
            iterations: 0,
            kkt: 0.0,
            residuals: vec![],
        });
    }
    if rho >= rho_bound(s) {
        let theta = diagonal_solution(s)?;
        let kkt = theta_kkt(s, &theta, rho);
        return Ok(ThetaStep {
            theta,
            iterations: 0,
            kkt,
            residuals: vec![],
        });
    }
    let s = regularize_if_singular(s, rho);
    let s = s.as_slice();

    let mut z: Vec<Mat> = match warm {
        Some(w) if w.iter().all(is_pd) => w.to_vec(),
        _ => diagonal_solution(s)?,
    };
    let kkt0 = theta_kkt(s, &z, rho);
    if kkt0 <= opts.kkt_tol {
        return Ok(ThetaStep {
            theta: z,
            iterations: 0,
            kkt: kkt0,
            residuals: vec![],
        });
    }
    let mean_diag = s.iter().map(|m| m.trace()).sum::<f64>() / (s.len() * p) as f64;
    let mut a = opts.penalty / (mean_diag * mean_diag).max(1e-300);
    let mut u: Vec<Mat> = vec![Mat::zeros(p, p); s.len()];
    let mut residuals = Vec::new();
    let dim = ((s.len() * p * p) as f64).sqrt();
    let mut kkt = kkt0;
    let mut best: Option<(f64, Vec<Mat>)> = None;

    for iter in 1..=opts.max_iter {
        let x: Vec<Mat> = s
            .iter()
            .zip(&z)
            .zip(&u)
            .map(|((sl, zl), ul)| logdet_prox(&((zl - ul) * a - sl), a))
            .collect();
        let z_old = z;
        let mut z_new: Vec<Mat> = x.iter().zip(&u).map(|(x, u)| x + u).collect();
        let threshold = rho / a;
        for i in 0..p {
            for j in (i + 1)..p {
                let norm = z_new.iter().map(|m| m[(i, j)].powi(2)).sum::<f64>().sqrt();
                let scale = if norm <= threshold { 0.0 } else { 1.0 - threshold / norm };
                for m in z_new.iter_mut() {
                    let v = m[(i, j)] * scale;
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
        }
        z = z_new;
        for ((ul, xl), zl) in u.iter_mut().zip(&x).zip(&z) {
            *ul += xl - zl;
        }
        let diff: Vec<Mat> = x.iter().zip(&z).map(|(x, z)| x - z).collect();
        let step: Vec<Mat> = z.iter().zip(&z_old).map(|(z, o)| z - o).collect();
        let primal = frob(&diff);
        let dual = a * frob(&step);
        residuals.push((primal, dual));

        let eps_pri = opts.tol * (dim + frob(&x).max(frob(&z)));
        let eps_dual = opts.tol * (dim + a * frob(&u));
        if (primal <= eps_pri && dual <= eps_dual) || iter % 25 == 0 || iter == opts.max_iter {
            kkt = theta_kkt(s, &z, rho);
            if best.as_ref().is_none_or(|(k, _)| kkt < *k) {
                best = Some((kkt, z.clone()));
            }
            if kkt <= opts.kkt_tol {
                return Ok(ThetaStep {
                    theta: z,
                    iterations: iter,
                    kkt,
                    residuals,
                });
            }
        }

        // residual balancing
        let rescale = if primal > 10.0 * dual {
            2.0
        } else if dual > 10.0 * primal {
            0.5
        } else {
            1.0
        };
        if rescale != 1.0 {
            a *= rescale;
            for ul in u.iter_mut() {
                *ul /= rescale;
            }
        }
    }
    match best {
        Some((k, theta)) if k <= 10.0 * opts.kkt_tol => Ok(ThetaStep {
            theta,
            iterations: opts.max_iter,
            kkt: k,
            residuals,
        }),
        _ => Err(Error::NoConvergence {
            stage: "precision step",
            iterations: opts.max_iter,
            residual: kkt,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;

    fn opts() -> AdmmOptions {
        AdmmOptions {
            penalty: 1.0,
            tol: 1e-8,
            kkt_tol: 1e-9,
            max_iter: 20_000,
        }
    }

    #[test]
    fn unpenalized_two_by_two_is_the_inverse() {
        let s = Mat::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let out = update_theta(std::slice::from_ref(&s), 0.0, None, &opts()).unwrap();
        let expected = Mat::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 1.0]) / 0.75;
        assert!(max_abs_diff(&out.theta[0], &expected) < 1e-6);
    }

    #[test]
    fn above_bound_gives_diagonal() {
        let s = vec![
            Mat::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
            Mat::from_row_slice(2, 2, &[1.0, -0.4, -0.4, 4.0]),
        ];
        assert!((rho_bound(&s) - 0.5).abs() < 1e-15);
        let out = update_theta(&s, 0.5, None, &opts()).unwrap();
        assert_eq!(out.theta[0], Mat::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.0]));
        assert_eq!(out.theta[1], Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.25]));
    }

    #[test]
    fn identical_blocks_give_identical_estimates() {
        let s = Mat::from_row_slice(3, 3, &[1.0, 0.4, 0.1, 0.4, 1.2, -0.3, 0.1, -0.3, 0.9]);
        let out = update_theta(&[s.clone(), s], 0.1, None, &opts()).unwrap();
        assert!(max_abs_diff(&out.theta[0], &out.theta[1]) < 1e-12);
        assert!(out.kkt < 1e-8);
    }

    #[test]
    fn scaling_covariance_scales_unpenalized_solution() {
        let s = Mat::from_row_slice(3, 3, &[1.0, 0.4, 0.1, 0.4, 1.2, -0.3, 0.1, -0.3, 0.9]);
        let a = update_theta(std::slice::from_ref(&s), 0.0, None, &opts()).unwrap();
        let b = update_theta(&[&s * 3.0], 0.0, None, &opts()).unwrap();
        assert!(max_abs_diff(&(&a.theta[0] / 3.0), &b.theta[0]) < 1e-8);
    }
}
