//! Regression surfaces and conditional means on a synthetic basis.

use fggrm::basis::{eigenbasis, Grid, Truncation};
use fggrm::linalg::Mat;
use fggrm::model::BlockModel;

fn main() -> fggrm::Result<()> {
    let grid = Grid::new(0.0, 1.0, 50)?;
    // operator with three smooth eigenfunctions
    let h = Mat::from_fn(50, 50, |a, b| {
        let (t, s) = (grid.location(a), grid.location(b));
        (1..=3)
            .map(|k| {
                let w = (k as f64 * std::f64::consts::PI * t).sin() * (k as f64 * std::f64::consts::PI * s).sin();
                w / k as f64
            })
            .sum()
    });
    let basis = eigenbasis(&h, grid, Truncation::Fixed(3))?;

    let b: Vec<Mat> = [0.8, -0.4, 0.1].iter().map(|&v| Mat::from_element(1, 1, v)).collect();
    let model = BlockModel::new(vec![Mat::identity(1, 1); 3], b, vec![Mat::identity(1, 1); 3])?;
    let beta = model.beta_surface_pair(&basis, 0, 0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in beta.iter() {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    println!("beta(t, s) on a {} x {} grid ranges over [{lo:.3}, {hi:.3}]", beta.nrows(), beta.ncols());

    let chi = Mat::from_row_slice(3, 1, &[1.0, 0.5, -2.0]);
    let mean = model.conditional_mean(&chi, &basis, &[vec![0.0; 50]])?;
    for a in (0..50).step_by(10) {
        println!("  E[Y({:.2}) | X] = {:+.4}", grid.location(a), mean[0][a]);
    }
    Ok(())
}
