//! Noisy curves for two variables are smoothed, pooled into one eigenbasis
//! and projected to per-component scores.

use fggrm::basis::{extract_scores, CurvePanel, ExtractionConfig, Role, Variable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() -> fggrm::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n_units = 40;
    let sd = [3.0, 1.5, 0.7];
    let mut series = vec![vec![Vec::new(); n_units]; 2];
    for var in series.iter_mut() {
        for unit in var.iter_mut() {
            let z: Vec<f64> = sd.iter().map(|s| s * rng.sample::<f64, _>(StandardNormal)).collect();
            *unit = (0..60)
                .map(|j| {
                    let t = j as f64 / 59.0;
                    let signal: f64 = z
                        .iter()
                        .enumerate()
                        .map(|(k, a)| a * ((k + 1) as f64 * std::f64::consts::PI * t).cos())
                        .sum();
                    (t, signal + 0.05 * rng.sample::<f64, _>(StandardNormal))
                })
                .collect();
        }
    }
    let panel = CurvePanel::new(
        (0.0, 1.0),
        (0..n_units).map(|u| format!("unit{u}")).collect(),
        vec![
            Variable { name: "signal".into(), role: Role::Response },
            Variable { name: "driver".into(), role: Role::Covariate },
        ],
        series,
    )?;
    let ext = extract_scores(&panel, &ExtractionConfig { grid_points: 200, ..ExtractionConfig::default() })?;
    println!(
        "{} components explain {:.4} of the pooled variance (orthonormality error {:.1e})",
        ext.basis.len(),
        ext.basis.explained_fraction,
        ext.basis.orthonormality_error()
    );
    for (l, ev) in ext.basis.eigenvalues.iter().enumerate() {
        println!("  component {}: eigenvalue {ev:.4}", l + 1);
    }
    println!("scores: N = {}, p = {}, q = {}, L = {}", ext.scores.n(), ext.scores.p(), ext.scores.q(), ext.scores.blocks());
    Ok(())
}
