use fggrm::linalg::Mat;
use fggrm::model::BlockModel;
use fggrm::scores::ScoreSet;
use fggrm::selection::{criterion_report, select, Criterion, EdgeCounting};
use fggrm::simgen::{generate_model, median, sample_scores, SimDesign};
use fggrm::solver::{fit, fit_path, objective, moments, penalty_bounds, FitConfig, PathConfig, PathResult};
use proptest::prelude::*;

fn instance(seed: u64, p: usize, q: usize, l: usize, n: usize) -> ScoreSet {
    let design = SimDesign { p, q, blocks: l, n, seed, ..SimDesign::default() };
    let truth = generate_model(&design).unwrap();
    sample_scores(&truth.model, n, seed.wrapping_add(1)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn objective_never_increases(seed in 0u64..10_000, rf in 0.05f64..0.9, nf in 0.05f64..0.9) {
        let scores = instance(seed, 6, 3, 2, 30);
        let (rho_max, nu_max) = penalty_bounds(&scores);
        let cfg = FitConfig { max_alternations: 8, ..FitConfig::with_penalties(rf * rho_max, nf * nu_max) };
        let res = fit(&scores, &cfg).unwrap();
        for w in res.trace.windows(2) {
            prop_assert!(w[1].objective <= w[0].objective + 1e-10);
        }
        let m = moments(&scores);
        let f = objective(&m, &res.model.b, &res.model.theta_gamma, cfg.rho, cfg.nu).unwrap();
        prop_assert!((f - res.objective).abs() <= 1e-9 * f.abs().max(1.0));
    }

    #[test]
    fn zero_patterns_are_shared_across_blocks(seed in 0u64..10_000, rf in 0.05f64..0.6, nf in 0.05f64..0.6) {
        let scores = instance(seed, 6, 3, 3, 30);
        let (rho_max, nu_max) = penalty_bounds(&scores);
        let model = fit(&scores, &FitConfig::with_penalties(rf * rho_max, nf * nu_max)).unwrap().model;
        for i in 0..6 {
            for j in 0..6 {
                let zeros = model.theta_gamma.iter().filter(|t| t[(i, j)] == 0.0).count();
                prop_assert!(zeros == 0 || zeros == 3, "theta ({i}, {j})");
            }
            for k in 0..3 {
                let zeros = model.b.iter().filter(|b| b[(k, i)] == 0.0).count();
                prop_assert!(zeros == 0 || zeros == 3, "b ({k}, {i})");
            }
        }
    }

    #[test]
    fn ebic_with_zero_weight_is_bic(seed in 0u64..10_000) {
        let scores = instance(seed, 5, 2, 2, 25);
        let path = fit_path(&scores, &PathConfig { n_rho: 3, n_nu: 3, ratio_min: 0.1, ..PathConfig::default() }).unwrap();
        let a = select(&path, Criterion::Bic).unwrap();
        let b = select(&path, Criterion::Ebic(0.0)).unwrap();
        prop_assert_eq!(a.index, b.index);
        prop_assert_eq!(a.value, b.value);
    }
}

#[test]
fn sparsity_is_monotone_along_rho() {
    let scores = instance(4, 10, 3, 2, 40);
    let path = fit_path(&scores, &PathConfig { n_rho: 8, n_nu: 3, ..PathConfig::default() }).unwrap();
    for ni in 0..path.nu_grid.len() {
        let counts: Vec<usize> = (0..path.rho_grid.len())
            .map(|ri| {
                let m = &path.entry(ri, ni).unwrap().model;
                m.edges(0.0).undirected.len()
            })
            .collect();
        // rho decreases with the index, so counts should not drop
        let flips = counts.windows(2).filter(|w| w[1] < w[0]).count();
        assert!(flips <= 1, "nu index {ni}: {counts:?}");
    }
}

#[test]
fn warm_starts_save_iterations() {
    let mut ratios = Vec::new();
    for seed in 0..10 {
        let scores = instance(100 + seed, 10, 3, 2, 40);
        let cfg = PathConfig { n_rho: 5, n_nu: 4, ..PathConfig::default() };
        let warm = fit_path(&scores, &cfg).unwrap().total_iterations() as f64;
        let cold = fit_path(&scores, &PathConfig { warm_start: false, ..cfg }).unwrap().total_iterations() as f64;
        ratios.push(warm / cold);
    }
    let m = median(&mut ratios);
    assert!(m < 1.0, "median warm/cold iteration ratio {m}");
}

#[test]
fn path_json_round_trip() {
    let scores = instance(9, 5, 2, 2, 30);
    let path = fit_path(&scores, &PathConfig { n_rho: 3, n_nu: 2, ..PathConfig::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("path.json");
    path.save(&file).unwrap();
    let back = PathResult::load(&file).unwrap();
    assert_eq!(back.entries.len(), path.entries.len());
    for (a, b) in back.entries.iter().zip(&path.entries) {
        assert_eq!(a.model, b.model);
        assert_eq!(a.report, b.report);
    }
}

#[test]
fn dominated_path_has_unanimous_criteria() {
    // the sparser candidate is the diagonal maximizer, so it also fits better
    let scores = instance(12, 5, 0, 2, 200);
    let m = moments(&scores);
    let oracle: Vec<Mat> = m
        .iter()
        .map(|x| Mat::from_diagonal(&x.s_gamma.diagonal().map(|v| 1.0 / v)))
        .collect();
    let good = BlockModel::new(oracle, vec![Mat::zeros(0, 5); 2], vec![Mat::zeros(0, 0); 2]).unwrap();
    let mut bad_theta = good.theta_gamma.clone();
    for t in &mut bad_theta {
        t[(0, 1)] = 0.4 * t[(0, 0)];
        t[(1, 0)] = 0.4 * t[(0, 0)];
    }
    let bad = BlockModel::new(bad_theta, vec![Mat::zeros(0, 5); 2], vec![Mat::zeros(0, 0); 2]).unwrap();

    let rg = criterion_report(&scores, &good, 0.5, EdgeCounting::Groups, false).unwrap();
    let rb = criterion_report(&scores, &bad, 0.5, EdgeCounting::Groups, false).unwrap();
    assert!(rg.loglik > rb.loglik && rg.edge_count < rb.edge_count);
    for c in [Criterion::Aic, Criterion::Bic, Criterion::Ebic(0.5), Criterion::Ebic(1.0), Criterion::Jklcv] {
        assert!(c.value(&rg) < c.value(&rb), "{}", c.name());
    }
}
