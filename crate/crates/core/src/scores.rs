//! Karhunen-Loève score sets and their CSV form.

use std::collections::HashMap;
use std::path::Path;

use crate::basis::Role;
use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::linalg::Mat;

/// Response scores `gamma[l]` (N x p) and covariate scores `chi[l]` (N x q)
/// for every block `l`. Row `n` of each matrix belongs to unit `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub gamma: Vec<Mat>,
    pub chi: Vec<Mat>,
    pub units: Vec<String>,
    pub responses: Vec<String>,
    pub covariates: Vec<String>,
}

impl ScoreSet {
    pub fn new(
        gamma: Vec<Mat>,
        chi: Vec<Mat>,
        units: Vec<String>,
        responses: Vec<String>,
        covariates: Vec<String>,
    ) -> Result<Self> {
        let l = gamma.len();
        if l == 0 || chi.len() != l {
            return Err(Error::DimensionMismatch(format!(
                "{} response blocks and {} covariate blocks",
                gamma.len(),
                chi.len()
            )));
        }
        let n = units.len();
        let (p, q) = (responses.len(), covariates.len());
        for (g, c) in gamma.iter().zip(&chi) {
            if g.shape() != (n, p) || c.shape() != (n, q) {
                return Err(Error::DimensionMismatch(format!(
                    "block shapes {:?}/{:?}, expected ({n}, {p})/({n}, {q})",
                    g.shape(),
                    c.shape()
                )));
            }
            if g.iter().chain(c.iter()).any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("scores must be finite".into()));
            }
        }
        Ok(Self {
            gamma,
            chi,
            units,
            responses,
            covariates,
        })
    }

    /// Unlabelled score set with generated names `u1.., y1.., x1..`.
    pub fn from_blocks(gamma: Vec<Mat>, chi: Vec<Mat>) -> Result<Self> {
        let n = gamma.first().map_or(0, |g| g.nrows());
        let p = gamma.first().map_or(0, |g| g.ncols());
        let q = chi.first().map_or(0, |c| c.ncols());
        Self::new(
            gamma,
            chi,
            (1..=n).map(|i| format!("u{i}")).collect(),
            (1..=p).map(|i| format!("y{i}")).collect(),
            (1..=q).map(|i| format!("x{i}")).collect(),
        )
    }

    pub fn n(&self) -> usize {
        self.units.len()
    }
    pub fn p(&self) -> usize {
        self.responses.len()
    }
    pub fn q(&self) -> usize {
        self.covariates.len()
    }
    pub fn blocks(&self) -> usize {
        self.gamma.len()
    }

    /// Same responses with the covariates dropped.
    pub fn without_covariates(&self) -> Self {
        let n = self.n();
        Self {
            gamma: self.gamma.clone(),
            chi: vec![Mat::zeros(n, 0); self.blocks()],
            units: self.units.clone(),
            responses: self.responses.clone(),
            covariates: Vec::new(),
        }
    }

    /// Only block `l`, as a single-block score set.
    pub fn block(&self, l: usize) -> Self {
        Self {
            gamma: vec![self.gamma[l].clone()],
            chi: vec![self.chi[l].clone()],
            units: self.units.clone(),
            responses: self.responses.clone(),
            covariates: self.covariates.clone(),
        }
    }

    /// Writes `unit,block,variable,score` rows (block is 1-based).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["unit", "block", "variable", "score"])?;
        for (n, unit) in self.units.iter().enumerate() {
            for l in 0..self.blocks() {
                let block = (l + 1).to_string();
                for (i, name) in self.responses.iter().enumerate() {
                    w.write_record([unit, &block, name, &fmt_f64(self.gamma[l][(n, i)])])?;
                }
                for (k, name) in self.covariates.iter().enumerate() {
                    w.write_record([unit, &block, name, &fmt_f64(self.chi[l][(n, k)])])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Writes the `variable,role` table that accompanies the scores CSV.
    pub fn write_roles(&self, path: &Path) -> Result<()> {
        let roles: Vec<(String, Role)> = self
            .responses
            .iter()
            .map(|r| (r.clone(), Role::Response))
            .chain(self.covariates.iter().map(|c| (c.clone(), Role::Covariate)))
            .collect();
        write_roles(path, &roles)
    }

    /// Reads scores written by [`ScoreSet::write_csv`] plus a roles table.
    pub fn read_csv(scores: &Path, roles: &Path) -> Result<Self> {
        let roles = read_roles(roles)?;
        let mut rdr = csv::Reader::from_path(scores)?;
        expect_header(&mut rdr, &["unit", "block", "variable", "score"])?;

        let responses: Vec<String> = roles.iter().filter(|r| r.1 == Role::Response).map(|r| r.0.clone()).collect();
        let covariates: Vec<String> = roles.iter().filter(|r| r.1 == Role::Covariate).map(|r| r.0.clone()).collect();
        let column: HashMap<&str, (Role, usize)> = responses
            .iter()
            .enumerate()
            .map(|(i, v)| (v.as_str(), (Role::Response, i)))
            .chain(covariates.iter().enumerate().map(|(k, v)| (v.as_str(), (Role::Covariate, k))))
            .collect();

        let mut units: Vec<String> = Vec::new();
        let mut unit_index: HashMap<String, usize> = HashMap::new();
        let mut entries: Vec<(usize, usize, Role, usize, f64)> = Vec::new();
        let mut max_block = 0;
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            if rec.len() != 4 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected 4 fields, found {}", rec.len()),
                });
            }
            let unit = rec[0].to_string();
            let block: usize = rec[1].trim().parse().map_err(|e| Error::Parse {
                line,
                message: format!("block '{}': {e}", &rec[1]),
            })?;
            if block == 0 {
                return Err(Error::Parse { line, message: "blocks are numbered from 1".into() });
            }
            let &(role, col) = column.get(rec[2].trim()).ok_or_else(|| Error::Parse {
                line,
                message: format!("variable '{}' has no role", &rec[2]),
            })?;
            let value = parse_f64(&rec[3], line)?;
            let next = units.len();
            let u = *unit_index.entry(unit.clone()).or_insert_with(|| {
                units.push(unit);
                next
            });
            max_block = max_block.max(block);
            entries.push((u, block - 1, role, col, value));
        }
        let n = units.len();
        let mut gamma = vec![Mat::from_element(n, responses.len(), f64::NAN); max_block];
        let mut chi = vec![Mat::from_element(n, covariates.len(), f64::NAN); max_block];
        for (u, l, role, col, v) in entries {
            match role {
                Role::Response => gamma[l][(u, col)] = v,
                Role::Covariate => chi[l][(u, col)] = v,
            }
        }
        if gamma.iter().chain(chi.iter()).any(|m| m.iter().any(|v| v.is_nan())) {
            return Err(Error::InvalidInput("scores file is missing (unit, block, variable) entries".into()));
        }
        Self::new(gamma, chi, units, responses, covariates)
    }
}

pub(crate) fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| Error::Parse {
        line,
        message: format!("'{s}' is not a number: {e}"),
    })
}

pub(crate) fn expect_header<R: std::io::Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers()?.clone();
    let got: Vec<&str> = header.iter().map(|h| h.trim()).collect();
    if got != expected {
        return Err(Error::Parse {
            line: 1,
            message: format!("header {:?}, expected {:?}", got, expected),
        });
    }
    Ok(())
}

pub fn write_roles(path: &Path, roles: &[(String, Role)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["variable", "role"])?;
    for (v, r) in roles {
        w.write_record([v.as_str(), r.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_roles(path: &Path) -> Result<Vec<(String, Role)>> {
    let mut rdr = csv::Reader::from_path(path)?;
    expect_header(&mut rdr, &["variable", "role"])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 2 {
            return Err(Error::Parse { line, message: "expected variable,role".into() });
        }
        let role = rec[1].parse::<Role>().map_err(|e| Error::Parse { line, message: e.to_string() })?;
        out.push((rec[0].trim().to_string(), role));
    }
    Ok(out)
}
