//! One fit at fixed penalties on a sampled star design.

use fggrm::simgen::{generate_model, sample_scores, SimDesign};
use fggrm::solver::{fit, kkt_check, penalty_bounds, FitConfig};

fn main() -> fggrm::Result<()> {
    let design = SimDesign { p: 10, q: 3, blocks: 3, n: 80, seed: 7, ..SimDesign::default() };
    let truth = generate_model(&design)?;
    let scores = sample_scores(&truth.model, design.n, 8)?;
    let (rho_max, nu_max) = penalty_bounds(&scores);
    println!("bounds: rho_max = {rho_max:.4}, nu_max = {nu_max:.4}");

    let config = FitConfig { max_alternations: 50, ..FitConfig::with_penalties(0.2 * rho_max, 0.2 * nu_max) };
    let result = fit(&scores, &config)?;
    for t in &result.trace {
        println!("  alternation {:>2} {:<10?} objective {:.8}", t.alternation, t.step, t.objective);
    }
    let edges = result.model.edges(0.0);
    println!(
        "{} response edges ({} true), {} covariate arrows ({} true), KKT violation {:.2e}",
        edges.undirected.len(),
        edges.undirected.intersection(&truth.edges.undirected).count(),
        edges.directed.len(),
        edges.directed.intersection(&truth.edges.directed).count(),
        kkt_check(&result.model, &scores, config.rho, config.nu)
    );
    Ok(())
}
