//! Picks models from one path by each information criterion and compares
//! them with the generating model.

use fggrm::selection::{kl_true, select, Criterion};
use fggrm::simgen::{generate_model, recovery_accuracy, sample_scores, SimDesign};
use fggrm::solver::{fit_path, PathConfig};

fn main() -> fggrm::Result<()> {
    let design = SimDesign { p: 10, q: 3, blocks: 3, n: 30, seed: 5, ..SimDesign::default() };
    let truth = generate_model(&design)?;
    let scores = sample_scores(&truth.model, design.n, 6)?;
    let path = fit_path(&scores, &PathConfig { n_rho: 8, n_nu: 8, ..PathConfig::default() })?;
    for c in [Criterion::Aic, Criterion::Bic, Criterion::Ebic(0.5), Criterion::Jklcv] {
        let s = select(&path, c)?;
        let m = &s.entry.model;
        println!(
            "{:<6} rho {:.4} nu {:.4} edges {:>3} KL {:>8.3} accuracy {:.3}",
            c.name(),
            s.entry.rho,
            s.entry.nu,
            s.entry.report.edge_count,
            kl_true(&truth.model, m)?,
            recovery_accuracy(&m.edges(0.0), &truth.edges, m.p, m.q)
        );
    }
    Ok(())
}
