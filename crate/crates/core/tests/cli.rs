use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fggrm::basis::io::read_basis;
use fggrm::linalg::Mat;
use fggrm::model::BlockModel;
use fggrm::scores::{read_roles, ScoreSet};
use fggrm::simgen::{generate_model, sample_scores, SimDesign};

fn fggrm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fggrm"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = fggrm(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_scores(dir: &Path, seed: u64) -> std::path::PathBuf {
    let design = SimDesign { p: 6, q: 3, blocks: 2, n: 40, seed, ..SimDesign::default() };
    let truth = generate_model(&design).unwrap();
    let scores = sample_scores(&truth.model, 40, seed).unwrap();
    let path = dir.join("scores.csv");
    scores.write_csv(&path).unwrap();
    scores.write_roles(&dir.join("roles.csv")).unwrap();
    path
}

/// Linear curves on [0, 1] in the span of `1` and `2t - 1`, scaled to be
/// orthonormal under the `grid_points` evaluation grid's `spacing * dot`
/// rule, with scores on orthogonal centred sign patterns so the pooled
/// operator is diagonal in that pair.
fn write_linear_panel(path: &Path, grid_points: usize) -> Vec<[[f64; 2]; 4]> {
    let d = 1.0 / (grid_points - 1) as f64;
    let c1 = 1.0 / (d * grid_points as f64).sqrt();
    let c2 = 1.0 / (d * (0..grid_points).map(|j| (2.0 * j as f64 * d - 1.0).powi(2)).sum::<f64>()).sqrt();
    let h = [[1.0, 1.0, -1.0, -1.0], [1.0, -1.0, 1.0, -1.0], [1.0, -1.0, -1.0, 1.0]];
    let y: [[f64; 2]; 4] = std::array::from_fn(|u| [3.0 * h[0][u], h[1][u]]);
    let x: [[f64; 2]; 4] = std::array::from_fn(|u| [2.0 * h[0][u], 0.5 * h[2][u]]);
    let mut text = String::from("unit,variable,role,location,value\n");
    for (name, role, s) in [("y", "response", &y), ("x", "covariate", &x)] {
        for (u, sc) in s.iter().enumerate() {
            for j in 0..40 {
                let t = j as f64 / 39.0;
                let v = sc[0] * c1 + sc[1] * c2 * (2.0 * t - 1.0);
                writeln!(text, "unit{u},{name},{role},{t},{v}").unwrap();
            }
        }
    }
    fs::write(path, text).unwrap();
    vec![y, x]
}

#[test]
fn project_recovers_generating_scores() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("curves.csv");
    let truth = write_linear_panel(&input, 101);
    let out = dir.path().join("proj");
    ok(&["project", "--input", p(&input), "--out", p(&out), "--grid-points", "101"]);

    let scores = ScoreSet::read_csv(&out.join("scores.csv"), &out.join("roles.csv")).unwrap();
    assert_eq!((scores.p(), scores.q(), scores.blocks()), (1, 1, 2));
    let (basis, names) = read_basis(&out.join("basis")).unwrap();
    assert_eq!(basis.len(), 2);
    assert_eq!(names, vec!["y", "x"]);
    // components are identified up to sign
    for l in 0..2 {
        let sign = scores.gamma[l][(0, 0)].signum() * truth[0][0][l].signum();
        for u in 0..4 {
            assert!((scores.gamma[l][(u, 0)] - sign * truth[0][u][l]).abs() < 1e-6, "block {l} unit {u}: {} vs {}", scores.gamma[l][(u, 0)], truth[0][u][l]);
            assert!((scores.chi[l][(u, 0)] - sign * truth[1][u][l]).abs() < 1e-6);
        }
    }
    assert!(out.join("run.toml").exists());
    assert!(out.join("basis").join("variance.csv").exists());
}

#[test]
fn malformed_row_names_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    fs::write(
        &input,
        "unit,variable,role,location,value\na,y,response,0.0,1.0\na,y,response,0.5,oops\na,y,response,1.0,2.0\n",
    )
    .unwrap();
    let out = fggrm(&["project", "--input", p(&input), "--out", p(&dir.path().join("o"))]);
    assert!(!out.status.success());
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("line 3"), "{msg}");
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("fit.toml");
    fs::write(&cfg, "[fit]\nrho = 0.1\nbogus = 1\n").unwrap();
    let scores = write_scores(dir.path(), 1);
    let out = fggrm(&["fit", "--config", p(&cfg), "--scores", p(&scores), "--out", p(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn fit_is_byte_identical_and_empty_at_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let scores = write_scores(dir.path(), 2);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&["fit", "--scores", p(&scores), "--out", p(out), "--rho-ratio", "0.3", "--nu-ratio", "0.3"]);
    }
    assert_eq!(fs::read(a.join("model.json")).unwrap(), fs::read(b.join("model.json")).unwrap());
    let run = fs::read_to_string(a.join("run.toml")).unwrap();
    assert!(run.contains("rho_ratio = 0.3"));

    let c = dir.path().join("c");
    ok(&["fit", "--scores", p(&scores), "--out", p(&c), "--rho-ratio", "1", "--nu-ratio", "1"]);
    let model = BlockModel::load(&c.join("model.json")).unwrap();
    let edges = model.edges(0.0);
    assert!(edges.undirected.is_empty() && edges.directed.is_empty());
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(c.join("fit.json")).unwrap()).unwrap();
    assert_eq!(summary["response_edges"], 0);
    assert!(fs::read_to_string(c.join("diagnostics.jsonl")).unwrap().lines().count() >= 1);
}

#[test]
fn path_then_select() {
    let dir = tempfile::tempdir().unwrap();
    let scores = write_scores(dir.path(), 3);
    let path_dir = dir.path().join("path");
    ok(&["path", "--scores", p(&scores), "--out", p(&path_dir), "--n-rho", "4", "--n-nu", "3", "--ratio-min", "0.1"]);
    let criteria = fs::read_to_string(path_dir.join("criteria.csv")).unwrap();
    assert_eq!(criteria.lines().count(), 1 + 12);

    let path_json = path_dir.join("path.json");
    let select = |criterion: &str| -> serde_json::Value {
        let out = dir.path().join(format!("sel-{criterion}"));
        ok(&["select", "--path", p(&path_json), "--criterion", criterion, "--out", p(&out), "--roles", p(&dir.path().join("roles.csv"))]);
        serde_json::from_str(&fs::read_to_string(out.join("selection.json")).unwrap()).unwrap()
    };
    let bic = select("bic");
    let ebic0 = select("ebic:0");
    for key in ["index", "rho", "nu", "value"] {
        assert_eq!(bic[key], ebic0[key], "{key}");
    }

    // edge lists agree with the selected model
    let out = dir.path().join("sel-bic");
    let model = BlockModel::load(&out.join("model.json")).unwrap();
    let edges = model.edges(0.0);
    let roles = read_roles(&dir.path().join("roles.csv")).unwrap();
    let listed = fs::read_to_string(out.join("response_edges.csv")).unwrap();
    assert_eq!(listed.lines().count() - 1, edges.undirected.len());
    for &(i, j) in &edges.undirected {
        let line = format!("{},{},", roles[i].0, roles[j].0);
        assert!(listed.lines().any(|l| l.starts_with(&line)), "missing {line}");
    }
    let arrows = fs::read_to_string(out.join("covariate_edges.csv")).unwrap();
    assert_eq!(arrows.lines().count() - 1, edges.directed.len());
}

#[test]
fn simulate_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.toml");
    fs::write(
        &cfg,
        "[study]\nreplicates = 2\nseed = 7\ncriteria = [\"aic\", \"ebic:0.5\"]\n[study.design]\np = 6\nq = 3\nL = 2\nN = 30\n[study.path]\nn_rho = 3\nn_nu = 3\n",
    )
    .unwrap();
    let out = dir.path().join("sim");
    ok(&["simulate", "--config", p(&cfg), "--out", p(&out), "--threads", "2"]);
    assert!(!out.join("replicates.partial.csv").exists());
    let rows = fs::read_to_string(out.join("replicates.csv")).unwrap();
    let header: Vec<&str> = rows.lines().next().unwrap().split(',').collect();
    assert!(header.contains(&"auc_y") && header.contains(&"kl") && header.contains(&"accuracy"));
    // 2 replicates x 3 methods x 2 criteria
    assert_eq!(rows.lines().count(), 1 + 12);
    for line in rows.lines().skip(1) {
        for field in line.split(',').skip(4) {
            // competitors without covariates leave auc_xy empty
            if field.is_empty() && line.contains(",jglasso,") {
                continue;
            }
            let v: f64 = field.parse().unwrap_or_else(|_| panic!("'{field}' in {line}"));
            assert!(v.is_finite());
        }
    }
    let summary = fs::read(out.join("summary.csv")).unwrap();
    let curves = fs::read(out.join("curve_summary.csv")).unwrap();

    let again = dir.path().join("eval");
    ok(&["eval", "--input", p(&out), "--out", p(&again)]);
    assert_eq!(fs::read(again.join("summary.csv")).unwrap(), summary);
    assert_eq!(fs::read(again.join("curve_summary.csv")).unwrap(), curves);

    let single = dir.path().join("sim1");
    ok(&["simulate", "--config", p(&cfg), "--out", p(&single), "--threads", "1"]);
    assert_eq!(fs::read(single.join("replicates.csv")).unwrap(), rows.as_bytes());
}

#[test]
fn beta_surface_grid() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("curves.csv");
    write_linear_panel(&input, 21);
    let proj = dir.path().join("proj");
    ok(&["project", "--input", p(&input), "--out", p(&proj), "--grid-points", "21"]);
    let (basis, _) = read_basis(&proj.join("basis")).unwrap();

    let b = vec![Mat::from_element(1, 1, 0.7), Mat::from_element(1, 1, -0.2)];
    let model = BlockModel::new(vec![Mat::identity(1, 1); 2], b, vec![Mat::identity(1, 1); 2]).unwrap();
    let model_path = dir.path().join("model.json");
    model.save(&model_path).unwrap();
    let out = dir.path().join("beta.csv");
    ok(&[
        "beta-surface", "--model", p(&model_path), "--basis", p(&proj.join("basis")), "--roles", p(&proj.join("roles.csv")),
        "--response", "y", "--covariate", "x", "--out", p(&out),
    ]);
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<Vec<f64>> = text.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 21);
    let d = basis.spacing();
    for (m, expected) in [(0, 0.7), (1, -0.2)] {
        let mut acc = 0.0;
        for a in 0..21 {
            for c in 0..21 {
                acc += rows[a][c + 1] * basis.phi(m, a) * basis.phi(m, c) * d * d;
            }
        }
        assert!((acc - expected).abs() < 1e-8, "component {m}: {acc}");
    }

    let zero = BlockModel::new(vec![Mat::identity(1, 1); 2], vec![Mat::zeros(1, 1); 2], vec![Mat::identity(1, 1); 2]).unwrap();
    zero.save(&model_path).unwrap();
    ok(&["beta-surface", "--model", p(&model_path), "--basis", p(&proj.join("basis")), "--response", "0", "--covariate", "0", "--out", p(&out)]);
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.lines().skip(1).all(|l| l.split(',').skip(1).all(|v| v.parse::<f64>().unwrap() == 0.0)));

    let bad = fggrm(&["beta-surface", "--model", p(&model_path), "--basis", p(&proj.join("basis")), "--response", "3", "--covariate", "0", "--out", p(&out)]);
    assert!(!bad.status.success());
}
