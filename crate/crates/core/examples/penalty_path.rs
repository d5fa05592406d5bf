//! A warm-started 6 x 6 penalty path and its criterion table.

use fggrm::simgen::{generate_model, sample_scores, SimDesign};
use fggrm::solver::{fit_path, PathConfig};

fn main() -> fggrm::Result<()> {
    let design = SimDesign { p: 10, q: 3, blocks: 2, n: 60, seed: 21, ..SimDesign::default() };
    let truth = generate_model(&design)?;
    let scores = sample_scores(&truth.model, design.n, 22)?;
    let path = fit_path(&scores, &PathConfig { n_rho: 6, n_nu: 6, ..PathConfig::default() })?;
    println!("{:>10} {:>10} {:>6} {:>12} {:>12}", "rho", "nu", "edges", "bic", "jklcv");
    for e in &path.entries {
        println!("{:>10.4} {:>10.4} {:>6} {:>12.3} {:>12.4}", e.rho, e.nu, e.report.edge_count, e.report.bic, e.report.jklcv);
    }
    println!("total inner iterations: {}", path.total_iterations());
    Ok(())
}
