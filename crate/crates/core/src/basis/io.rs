//! CSV ingestion of long-format curves and export of basis artifacts.

use std::collections::HashMap;
use std::path::Path;

use super::{BasisSystem, CurvePanel, Grid, Role, Variable};
use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::linalg::Mat;
use crate::scores::{expect_header, parse_f64};

/// Reads `unit,variable,role,location,value` rows. Units and variables keep
/// their first-appearance order. The domain defaults to the observed range.
pub fn read_panel(path: &Path, domain: Option<(f64, f64)>) -> Result<CurvePanel> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    read_panel_from(&mut rdr, domain)
}

pub fn read_panel_from<R: std::io::Read>(rdr: &mut csv::Reader<R>, domain: Option<(f64, f64)>) -> Result<CurvePanel> {
    expect_header(rdr, &["unit", "variable", "role", "location", "value"])?;
    let mut units: Vec<String> = Vec::new();
    let mut unit_index: HashMap<String, usize> = HashMap::new();
    let mut variables: Vec<Variable> = Vec::new();
    let mut var_index: HashMap<String, usize> = HashMap::new();
    let mut rows: Vec<(usize, usize, f64, f64)> = Vec::new();

    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 5 {
            return Err(Error::Parse {
                line,
                message: format!("expected 5 fields, found {}", rec.len()),
            });
        }
        let role: Role = rec[2].parse().map_err(|e: Error| Error::Parse { line, message: e.to_string() })?;
        let location = parse_f64(&rec[3], line)?;
        let value = parse_f64(&rec[4], line)?;
        if !location.is_finite() || !value.is_finite() {
            return Err(Error::Parse { line, message: "non-finite location or value".into() });
        }
        let unit = rec[0].trim().to_string();
        let next = units.len();
        let u = *unit_index.entry(unit.clone()).or_insert_with(|| {
            units.push(unit);
            next
        });
        let name = rec[1].trim().to_string();
        let v = match var_index.get(&name) {
            Some(&v) => {
                if variables[v].role != role {
                    return Err(Error::Parse {
                        line,
                        message: format!("variable '{name}' changes role to {}", role.as_str()),
                    });
                }
                v
            }
            None => {
                variables.push(Variable { name: name.clone(), role });
                var_index.insert(name, variables.len() - 1);
                variables.len() - 1
            }
        };
        rows.push((v, u, location, value));
    }
    if rows.is_empty() {
        return Err(Error::Parse { line: 2, message: "no observations".into() });
    }

    let mut series = vec![vec![Vec::new(); units.len()]; variables.len()];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (v, u, s, y) in rows {
        lo = lo.min(s);
        hi = hi.max(s);
        series[v][u].push((s, y));
    }
    for per_var in &mut series {
        for obs in per_var.iter_mut() {
            obs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        }
    }
    for (v, per_var) in series.iter().enumerate() {
        if let Some(u) = per_var.iter().position(|o| o.is_empty()) {
            return Err(Error::InvalidInput(format!(
                "unit '{}' has no observations of variable '{}'",
                units[u], variables[v].name
            )));
        }
    }
    CurvePanel::new(domain.unwrap_or((lo, hi)), units, variables, series)
}

/// Writes `basis.csv` (grid and eigenfunctions), `means.csv` (grid and one
/// mean column per variable) and `variance.csv` (eigenvalues with cumulative
/// explained fraction) into `dir`.
pub fn write_basis(dir: &Path, basis: &BasisSystem, variables: &[String]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let l = basis.len();
    let mut w = csv::Writer::from_path(dir.join("basis.csv"))?;
    let mut header = vec!["location".to_string()];
    header.extend((1..=l).map(|k| format!("phi_{k}")));
    w.write_record(&header)?;
    for (i, t) in basis.grid.locations().enumerate() {
        let mut row = vec![fmt_f64(t)];
        row.extend((0..l).map(|k| fmt_f64(basis.phi(k, i))));
        w.write_record(&row)?;
    }
    w.flush()?;

    if !basis.mean_functions.is_empty() {
        if variables.len() != basis.mean_functions.len() {
            return Err(Error::DimensionMismatch("one name per mean function required".into()));
        }
        let mut w = csv::Writer::from_path(dir.join("means.csv"))?;
        let mut header = vec!["location".to_string()];
        header.extend(variables.iter().cloned());
        w.write_record(&header)?;
        for (i, t) in basis.grid.locations().enumerate() {
            let mut row = vec![fmt_f64(t)];
            row.extend(basis.mean_functions.iter().map(|m| fmt_f64(m[i])));
            w.write_record(&row)?;
        }
        w.flush()?;
    }

    let mut w = csv::Writer::from_path(dir.join("variance.csv"))?;
    w.write_record(["component", "eigenvalue", "cumulative_fraction"])?;
    let total: f64 = basis.eigenvalues.iter().sum::<f64>() / basis.explained_fraction;
    let mut acc = 0.0;
    for (k, v) in basis.eigenvalues.iter().enumerate() {
        acc += v;
        w.write_record([(k + 1).to_string(), fmt_f64(*v), fmt_f64(acc / total)])?;
    }
    w.flush()?;
    Ok(())
}

fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != header.len() {
            return Err(Error::Parse { line, message: format!("expected {} fields", header.len()) });
        }
        rows.push(rec.iter().map(|f| parse_f64(f, line)).collect::<Result<Vec<f64>>>()?);
    }
    Ok((header, rows))
}

/// Reads artifacts written by [`write_basis`]. Returns the basis and the
/// variable names of its mean functions (empty when `means.csv` is absent).
pub fn read_basis(dir: &Path) -> Result<(BasisSystem, Vec<String>)> {
    let (header, rows) = read_table(&dir.join("basis.csv"))?;
    if header.first().map(String::as_str) != Some("location") || rows.len() < 2 {
        return Err(Error::Parse { line: 1, message: "basis.csv needs a location column and 2+ rows".into() });
    }
    let t = rows.len();
    let l = header.len() - 1;
    let grid = Grid::new(rows[0][0], rows[t - 1][0], t)?;
    for (i, row) in rows.iter().enumerate() {
        let expected = grid.location(i);
        if (row[0] - expected).abs() > 1e-9 * (1.0 + expected.abs()) {
            return Err(Error::Parse { line: i + 2, message: "grid is not equally spaced".into() });
        }
    }
    let mut phi = Mat::zeros(l, t);
    for (i, row) in rows.iter().enumerate() {
        for k in 0..l {
            phi[(k, i)] = row[k + 1];
        }
    }

    let mut names = Vec::new();
    let mut means = Vec::new();
    let means_path = dir.join("means.csv");
    if means_path.exists() {
        let (header, rows) = read_table(&means_path)?;
        if rows.len() != t {
            return Err(Error::DimensionMismatch("means.csv and basis.csv grids differ".into()));
        }
        names = header[1..].to_vec();
        means = (1..header.len()).map(|c| rows.iter().map(|r| r[c]).collect()).collect();
    }

    let mut eigenvalues = vec![f64::NAN; l];
    let mut explained_fraction = f64::NAN;
    let var_path = dir.join("variance.csv");
    if var_path.exists() {
        let (_, rows) = read_table(&var_path)?;
        for (k, row) in rows.iter().enumerate().take(l) {
            eigenvalues[k] = row[1];
            explained_fraction = row[2];
        }
    }
    Ok((
        BasisSystem {
            grid,
            eigenfunctions: phi,
            eigenvalues,
            mean_functions: means,
            explained_fraction,
        },
        names,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{eigenbasis, Truncation};
    use nalgebra::DVector;

    #[test]
    fn malformed_row_is_reported_with_line() {
        let data = "unit,variable,role,location,value\na,y,response,0.0,1.0\na,y,response,oops,2.0\n";
        let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(data.as_bytes());
        match read_panel_from(&mut rdr, None) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("oops"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let data = "unit,variable,role,location,value\na,y,response,0.0\n";
        let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(data.as_bytes());
        assert!(matches!(read_panel_from(&mut rdr, None), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn role_conflict_rejected() {
        let data = "unit,variable,role,location,value\na,y,response,0,1\nb,y,covariate,0,1\n";
        let mut rdr = csv::Reader::from_reader(data.as_bytes());
        assert!(matches!(read_panel_from(&mut rdr, None), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn basis_artifacts_round_trip() {
        let g = Grid::new(1.0, 1300.0, 40).unwrap();
        let f = DVector::from_iterator(40, g.locations().map(|s| (s / 300.0).sin()));
        let h = &f * f.transpose() + Mat::identity(40, 40) * 1e-3;
        let b = eigenbasis(&h, g, Truncation::Fixed(3))
            .unwrap()
            .with_means(vec![g.locations().collect(), vec![0.5; 40]]);
        let dir = tempfile::tempdir().unwrap();
        write_basis(dir.path(), &b, &["o3".into(), "temp".into()]).unwrap();
        let (back, names) = read_basis(dir.path()).unwrap();
        assert_eq!(names, vec!["o3".to_string(), "temp".to_string()]);
        assert_eq!(back.eigenfunctions, b.eigenfunctions);
        assert_eq!(back.mean_functions, b.mean_functions);
        assert_eq!(back.eigenvalues, b.eigenvalues);
        assert_eq!(back.grid.points, 40);
    }
}
