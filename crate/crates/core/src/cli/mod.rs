//! Command-line front end. Every command reads an optional TOML config,
//! applies flag overrides, validates, runs, and stores the effective config
//! as `run.toml` beside its outputs.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::basis::io::{read_basis, read_panel, write_basis};
use crate::basis::{extract_scores, ExtractionConfig, Role, SmootherConfig, Truncation};
use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::model::BlockModel;
use crate::scores::{read_roles, ScoreSet};
use crate::selection::{select, Criterion};
use crate::simgen::{run_study, summarize, summarize_curves, CurveRow, ReplicateOutput, ReplicateRow, StudyConfig};
use crate::solver::{fit, fit_path, kkt_check, penalty_bounds, FitConfig, PathConfig, Sweep};

#[derive(Debug, Parser)]
#[command(name = "fggrm", version, about = "Functional Gaussian graphical regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Smooth long-format curves and project them on a shared eigenbasis.
    Project(ProjectArgs),
    /// Fit one model at fixed penalties.
    Fit(FitArgs),
    /// Fit a two-dimensional penalty path.
    Path(PathArgs),
    /// Pick a model from a stored path by an information criterion.
    Select(SelectArgs),
    /// Run a replicated simulation study.
    Simulate(SimulateArgs),
    /// Recompute median summaries from replication CSVs.
    Eval(EvalArgs),
    /// Evaluate one regression surface on the basis grid.
    BetaSurface(BetaArgs),
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Project(a) => cmd_project(&a.resolve()?),
        Command::Fit(a) => cmd_fit(&a.resolve()?),
        Command::Path(a) => cmd_path(&a.resolve()?),
        Command::Select(a) => cmd_select(&a.resolve()?),
        Command::Simulate(a) => cmd_simulate(&a.resolve()?),
        Command::Eval(a) => cmd_eval(&a.resolve()?),
        Command::BetaSurface(a) => cmd_beta_surface(&a.resolve()?),
    }
}

/// Process exit code for an error: 2 for bad input or configuration,
/// 3 for solver failures, 1 otherwise.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. } | Error::Config(_) | Error::InvalidInput(_) | Error::DimensionMismatch(_) => 2,
        Error::NoConvergence { .. } | Error::NonPositiveDefinite(_) => 3,
        _ => 1,
    }
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p)?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn write_run_config<T: Serialize>(path: &Path, config: &T) -> Result<()> {
    let text = toml::to_string_pretty(config).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

fn required<'a>(value: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Error::Config(format!("'{name}' must be given in the config or as a flag")))
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn roles_beside(scores: &Path) -> PathBuf {
    scores.with_file_name("roles.csv")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize().enumerate() {
        out.push(rec.map_err(|e: csv::Error| Error::Parse { line: i + 2, message: e.to_string() })?);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// project

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProjectConfig {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub grid_points: usize,
    pub domain: Option<(f64, f64)>,
    pub truncation: Truncation,
    pub max_basis: usize,
    pub skip_failures: bool,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        Self {
            input: None,
            out: None,
            grid_points: 420,
            domain: None,
            truncation: Truncation::default(),
            max_basis: SmootherConfig::default().max_basis,
            skip_failures: false,
        }
    }
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Long-format CSV with columns unit,variable,role,location,value.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    grid_points: Option<usize>,
    /// Evaluation domain as `lower,upper`.
    #[arg(long, value_parser = parse_pair)]
    domain: Option<(f64, f64)>,
    /// Keep the smallest number of components explaining this fraction.
    #[arg(long, conflicts_with = "components")]
    variance_fraction: Option<f64>,
    #[arg(long)]
    components: Option<usize>,
    #[arg(long)]
    max_basis: Option<usize>,
    /// Drop units whose curves cannot be smoothed.
    #[arg(long)]
    skip_failures: bool,
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected 'lower,upper'")?;
    let a: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((a, b))
}

impl ProjectArgs {
    fn resolve(self) -> Result<ProjectConfig> {
        let mut c: ProjectConfig = load_config(self.config.as_deref())?;
        if self.input.is_some() {
            c.input = self.input;
        }
        if self.out.is_some() {
            c.out = self.out;
        }
        set(&mut c.grid_points, self.grid_points);
        if self.domain.is_some() {
            c.domain = self.domain;
        }
        set(&mut c.truncation, self.variance_fraction.map(Truncation::VarianceFraction));
        set(&mut c.truncation, self.components.map(Truncation::Fixed));
        set(&mut c.max_basis, self.max_basis);
        c.skip_failures |= self.skip_failures;
        Ok(c)
    }
}

pub fn cmd_project(c: &ProjectConfig) -> Result<()> {
    let input = required(&c.input, "input")?;
    let out = required(&c.out, "out")?;
    let panel = read_panel(input, c.domain)?;
    let cfg = ExtractionConfig {
        grid_points: c.grid_points,
        grid_domain: c.domain,
        truncation: c.truncation,
        smoother: SmootherConfig { max_basis: c.max_basis, ..SmootherConfig::default() },
        skip_failures: c.skip_failures,
    };
    let ext = extract_scores(&panel, &cfg)?;
    fs::create_dir_all(out)?;
    ext.scores.write_csv(&out.join("scores.csv"))?;
    ext.scores.write_roles(&out.join("roles.csv"))?;
    let names: Vec<String> = ext.variables.iter().map(|v| v.name.clone()).collect();
    write_basis(&out.join("basis"), &ext.basis, &names)?;
    if !ext.skipped.is_empty() {
        let mut w = csv::Writer::from_path(out.join("skipped.csv"))?;
        w.write_record(["unit", "variable", "message"])?;
        for s in &ext.skipped {
            log::warn!("skipped unit '{}' variable '{}': {}", s.unit, s.variable, s.message);
            w.write_record([&s.unit, &s.variable, &s.message])?;
        }
        w.flush()?;
    }
    log::info!(
        "{} units, {} components explaining {:.4} of the pooled variance",
        ext.scores.n(),
        ext.basis.len(),
        ext.basis.explained_fraction
    );
    write_run_config(&out.join("run.toml"), c)
}

// ---------------------------------------------------------------------------
// fit

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitCommand {
    pub scores: Option<PathBuf>,
    /// Defaults to `roles.csv` beside the scores.
    pub roles: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Penalties as fractions of the data-dependent bounds; override `fit.rho` / `fit.nu`.
    pub rho_ratio: Option<f64>,
    pub nu_ratio: Option<f64>,
    pub fit: FitConfig,
}

#[derive(Debug, Args)]
pub struct ScoreInput {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long)]
    roles: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    io: ScoreInput,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long, conflicts_with = "rho")]
    rho_ratio: Option<f64>,
    #[arg(long, conflicts_with = "nu")]
    nu_ratio: Option<f64>,
    #[arg(long)]
    max_alternations: Option<usize>,
    #[arg(long)]
    kkt_tol: Option<f64>,
}

impl FitArgs {
    fn resolve(self) -> Result<FitCommand> {
        let mut c: FitCommand = load_config(self.io.config.as_deref())?;
        for (slot, v) in [(&mut c.scores, self.io.scores), (&mut c.roles, self.io.roles), (&mut c.out, self.io.out)] {
            if v.is_some() {
                *slot = v;
            }
        }
        if let Some(r) = self.rho {
            c.fit.rho = r;
            c.rho_ratio = None;
        }
        if let Some(n) = self.nu {
            c.fit.nu = n;
            c.nu_ratio = None;
        }
        if self.rho_ratio.is_some() {
            c.rho_ratio = self.rho_ratio;
        }
        if self.nu_ratio.is_some() {
            c.nu_ratio = self.nu_ratio;
        }
        set(&mut c.fit.max_alternations, self.max_alternations);
        set(&mut c.fit.kkt_tol, self.kkt_tol);
        Ok(c)
    }
}

fn load_scores(scores: &Option<PathBuf>, roles: &Option<PathBuf>) -> Result<ScoreSet> {
    let s = required(scores, "scores")?;
    let r = roles.clone().unwrap_or_else(|| roles_beside(s));
    ScoreSet::read_csv(s, &r)
}

#[derive(Debug, Serialize)]
struct FitSummary {
    rho: f64,
    nu: f64,
    rho_max: f64,
    nu_max: f64,
    objective: f64,
    iterations: usize,
    kkt: f64,
    response_edges: usize,
    covariate_edges: usize,
}

pub fn cmd_fit(c: &FitCommand) -> Result<()> {
    let out = required(&c.out, "out")?;
    let scores = load_scores(&c.scores, &c.roles)?;
    let (rho_max, nu_max) = penalty_bounds(&scores);
    let mut cfg = c.fit.clone();
    for (ratio, slot, bound) in [(c.rho_ratio, &mut cfg.rho, rho_max), (c.nu_ratio, &mut cfg.nu, nu_max)] {
        if let Some(r) = ratio {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::Config(format!("penalty ratio must be non-negative, got {r}")));
            }
            *slot = r * bound;
        }
    }
    let result = fit(&scores, &cfg)?;
    fs::create_dir_all(out)?;
    result.model.save(&out.join("model.json"))?;
    result.write_diagnostics(BufWriter::new(File::create(out.join("diagnostics.jsonl"))?))?;
    let edges = result.model.edges(0.0);
    write_json(
        &out.join("fit.json"),
        &FitSummary {
            rho: cfg.rho,
            nu: cfg.nu,
            rho_max,
            nu_max,
            objective: result.objective,
            iterations: result.iterations,
            kkt: kkt_check(&result.model, &scores, cfg.rho, cfg.nu),
            response_edges: edges.undirected.len(),
            covariate_edges: edges.directed.len(),
        },
    )?;
    write_run_config(&out.join("run.toml"), c)
}

// ---------------------------------------------------------------------------
// path

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathCommand {
    pub scores: Option<PathBuf>,
    pub roles: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub path: PathConfig,
}

#[derive(Debug, Args)]
pub struct PathArgs {
    #[command(flatten)]
    io: ScoreInput,
    #[arg(long)]
    n_rho: Option<usize>,
    #[arg(long)]
    n_nu: Option<usize>,
    #[arg(long)]
    ratio_min: Option<f64>,
    /// theta-major (outer nu, inner rho) or b-major.
    #[arg(long)]
    sweep: Option<Sweep>,
    #[arg(long)]
    ebic_gamma: Option<f64>,
    #[arg(long)]
    cold_start: bool,
    #[arg(long)]
    max_alternations: Option<usize>,
    /// Store per-unit jKLCV bias terms with every path entry.
    #[arg(long)]
    keep_bias: bool,
}

impl PathArgs {
    fn resolve(self) -> Result<PathCommand> {
        let mut c: PathCommand = load_config(self.io.config.as_deref())?;
        for (slot, v) in [(&mut c.scores, self.io.scores), (&mut c.roles, self.io.roles), (&mut c.out, self.io.out)] {
            if v.is_some() {
                *slot = v;
            }
        }
        let p = &mut c.path;
        set(&mut p.n_rho, self.n_rho);
        set(&mut p.n_nu, self.n_nu);
        set(&mut p.ratio_min, self.ratio_min);
        set(&mut p.sweep, self.sweep);
        set(&mut p.ebic_gamma, self.ebic_gamma);
        set(&mut p.fit.max_alternations, self.max_alternations);
        if self.cold_start {
            p.warm_start = false;
        }
        p.keep_bias |= self.keep_bias;
        Ok(c)
    }
}

#[derive(Debug, Serialize)]
struct PathSummary<'a> {
    rho_max: f64,
    nu_max: f64,
    rho_grid: &'a [f64],
    nu_grid: &'a [f64],
    models: usize,
    total_iterations: usize,
}

pub fn cmd_path(c: &PathCommand) -> Result<()> {
    let out = required(&c.out, "out")?;
    let scores = load_scores(&c.scores, &c.roles)?;
    let (rho_max, nu_max) = penalty_bounds(&scores);
    let path = fit_path(&scores, &c.path)?;
    fs::create_dir_all(out)?;
    path.save(&out.join("path.json"))?;
    path.write_criteria_csv(&out.join("criteria.csv"))?;
    path.write_diagnostics(BufWriter::new(File::create(out.join("diagnostics.jsonl"))?))?;
    write_json(
        &out.join("grid.json"),
        &PathSummary {
            rho_max,
            nu_max,
            rho_grid: &path.rho_grid,
            nu_grid: &path.nu_grid,
            models: path.entries.len(),
            total_iterations: path.total_iterations(),
        },
    )?;
    write_run_config(&out.join("run.toml"), c)
}

// ---------------------------------------------------------------------------
// select

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectCommand {
    pub path: Option<PathBuf>,
    /// Variable names for the edge lists; indices are written when absent.
    pub roles: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub criterion: String,
}

impl Default for SelectCommand {
    fn default() -> Self {
        Self { path: None, roles: None, out: None, criterion: "ebic".into() }
    }
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// `path.json` written by the path command.
    #[arg(long)]
    path: Option<PathBuf>,
    #[arg(long)]
    roles: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// aic, bic, jklcv, ebic or ebic:<g>.
    #[arg(long)]
    criterion: Option<String>,
}

impl SelectArgs {
    fn resolve(self) -> Result<SelectCommand> {
        let mut c: SelectCommand = load_config(self.config.as_deref())?;
        for (slot, v) in [(&mut c.path, self.path), (&mut c.roles, self.roles), (&mut c.out, self.out)] {
            if v.is_some() {
                *slot = v;
            }
        }
        set(&mut c.criterion, self.criterion);
        Ok(c)
    }
}

#[derive(Debug, Serialize)]
struct SelectionSummary {
    criterion: String,
    value: f64,
    index: usize,
    rho: f64,
    nu: f64,
    rho_index: usize,
    nu_index: usize,
    response_edges: usize,
    covariate_edges: usize,
}

struct Names {
    responses: Vec<String>,
    covariates: Vec<String>,
}

impl Names {
    fn new(roles: Option<&Path>, p: usize, q: usize) -> Result<Self> {
        let (mut responses, mut covariates): (Vec<String>, Vec<String>) =
            ((0..p).map(|i| i.to_string()).collect(), (0..q).map(|k| k.to_string()).collect());
        if let Some(path) = roles {
            let roles = read_roles(path)?;
            let r: Vec<String> = roles.iter().filter(|x| x.1 == Role::Response).map(|x| x.0.clone()).collect();
            let c: Vec<String> = roles.iter().filter(|x| x.1 == Role::Covariate).map(|x| x.0.clone()).collect();
            if r.len() != p || c.len() != q {
                return Err(Error::DimensionMismatch(format!(
                    "roles list {} responses and {} covariates, model has {p} and {q}",
                    r.len(),
                    c.len()
                )));
            }
            responses = r;
            covariates = c;
        }
        Ok(Self { responses, covariates })
    }
}

pub fn cmd_select(c: &SelectCommand) -> Result<()> {
    let out = required(&c.out, "out")?;
    let criterion: Criterion = c.criterion.parse()?;
    let path = crate::solver::PathResult::load(required(&c.path, "path")?)?;
    let chosen = select(&path, criterion)?;
    let model = &chosen.entry.model;
    let names = Names::new(c.roles.as_deref(), model.p, model.q)?;
    let edges = model.edges(0.0);
    fs::create_dir_all(out)?;
    model.save(&out.join("model.json"))?;

    let mut w = csv::Writer::from_path(out.join("response_edges.csv"))?;
    w.write_record(["response_a", "response_b", "group_norm"])?;
    for &(i, j) in &edges.undirected {
        w.write_record([&names.responses[i], &names.responses[j], &fmt_f64(model.theta_group_norm(i, j))])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(out.join("covariate_edges.csv"))?;
    w.write_record(["covariate", "response", "group_norm"])?;
    for &(k, i) in &edges.directed {
        w.write_record([&names.covariates[k], &names.responses[i], &fmt_f64(model.b_group_norm(k, i))])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out.join("criteria.csv"))?;
    w.write_record(["rho", "nu", "edges", "value", "selected"])?;
    for (idx, e) in path.entries.iter().enumerate() {
        w.write_record([
            fmt_f64(e.rho),
            fmt_f64(e.nu),
            e.report.edge_count.to_string(),
            fmt_f64(criterion.value(&e.report)),
            (idx == chosen.index).to_string(),
        ])?;
    }
    w.flush()?;

    let label = match criterion {
        Criterion::Ebic(g) => format!("ebic:{g}"),
        other => other.name().to_string(),
    };
    write_json(
        &out.join("selection.json"),
        &SelectionSummary {
            criterion: label,
            value: chosen.value,
            index: chosen.index,
            rho: chosen.entry.rho,
            nu: chosen.entry.nu,
            rho_index: chosen.entry.rho_index,
            nu_index: chosen.entry.nu_index,
            response_edges: edges.undirected.len(),
            covariate_edges: edges.directed.len(),
        },
    )?;
    write_run_config(&out.join("run.toml"), c)
}

// ---------------------------------------------------------------------------
// simulate / eval

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateCommand {
    pub out: Option<PathBuf>,
    pub study: StudyConfig,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long = "blocks")]
    blocks: Option<usize>,
    #[arg(long = "n")]
    n: Option<usize>,
    #[arg(long)]
    n_rho: Option<usize>,
    #[arg(long)]
    n_nu: Option<usize>,
    /// Comma-separated criteria, e.g. `aic,ebic:0.5,jklcv`.
    #[arg(long, value_delimiter = ',')]
    criteria: Option<Vec<String>>,
    #[arg(long)]
    no_competitors: bool,
}

impl SimulateArgs {
    fn resolve(self) -> Result<SimulateCommand> {
        let mut c: SimulateCommand = load_config(self.config.as_deref())?;
        if self.out.is_some() {
            c.out = self.out;
        }
        let s = &mut c.study;
        set(&mut s.replicates, self.replicates);
        set(&mut s.seed, self.seed);
        if self.threads.is_some() {
            s.threads = self.threads;
        }
        set(&mut s.design.p, self.p);
        set(&mut s.design.q, self.q);
        set(&mut s.design.blocks, self.blocks);
        set(&mut s.design.n, self.n);
        set(&mut s.path.n_rho, self.n_rho);
        set(&mut s.path.n_nu, self.n_nu);
        set(&mut s.criteria, self.criteria);
        if self.no_competitors {
            s.competitors = false;
        }
        Ok(c)
    }
}

struct PartialWriters {
    rows: csv::Writer<File>,
    curves: csv::Writer<File>,
}

impl PartialWriters {
    fn push(&mut self, out: &ReplicateOutput) -> Result<()> {
        for r in &out.rows {
            self.rows.serialize(r)?;
        }
        for c in &out.curves {
            self.curves.serialize(c)?;
        }
        self.rows.flush()?;
        self.curves.flush()?;
        Ok(())
    }
}

fn write_summaries(out: &Path, rows: &[ReplicateRow], curves: &[CurveRow]) -> Result<()> {
    write_rows(&out.join("summary.csv"), &summarize(rows))?;
    write_rows(&out.join("curve_summary.csv"), &summarize_curves(curves))
}

/// Replicates are flushed to `*.partial.csv` as they finish; on success the
/// canonical files are written in replicate order and the partial files removed.
pub fn cmd_simulate(c: &SimulateCommand) -> Result<()> {
    let out = required(&c.out, "out")?;
    c.study.validate()?;
    fs::create_dir_all(out)?;
    write_run_config(&out.join("run.toml"), c)?;
    let partial_rows = out.join("replicates.partial.csv");
    let partial_curves = out.join("curves.partial.csv");
    let writers = Mutex::new(PartialWriters {
        rows: csv::Writer::from_path(&partial_rows)?,
        curves: csv::Writer::from_path(&partial_curves)?,
    });
    let failure: Mutex<Option<Error>> = Mutex::new(None);
    let on_done = |o: &ReplicateOutput| {
        log::info!("replicate {} done", o.replicate);
        let mut w = writers.lock().unwrap_or_else(|p| p.into_inner());
        if let Err(e) = w.push(o) {
            failure.lock().unwrap_or_else(|p| p.into_inner()).get_or_insert(e);
        }
    };
    let outputs = run_study(&c.study, &on_done)?;
    if let Some(e) = failure.into_inner().unwrap_or_else(|p| p.into_inner()) {
        return Err(e);
    }
    drop(writers);
    let rows: Vec<ReplicateRow> = outputs.iter().flat_map(|o| o.rows.iter().cloned()).collect();
    let curves: Vec<CurveRow> = outputs.iter().flat_map(|o| o.curves.iter().cloned()).collect();
    write_rows(&out.join("replicates.csv"), &rows)?;
    write_rows(&out.join("curves.csv"), &curves)?;
    write_summaries(out, &rows, &curves)?;
    fs::remove_file(partial_rows)?;
    fs::remove_file(partial_curves)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalCommand {
    /// Directory holding `replicates.csv` and `curves.csv`.
    pub input: Option<PathBuf>,
    /// Defaults to `input`.
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl EvalArgs {
    fn resolve(self) -> Result<EvalCommand> {
        let mut c: EvalCommand = load_config(self.config.as_deref())?;
        if self.input.is_some() {
            c.input = self.input;
        }
        if self.out.is_some() {
            c.out = self.out;
        }
        Ok(c)
    }
}

pub fn cmd_eval(c: &EvalCommand) -> Result<()> {
    let input = required(&c.input, "input")?;
    let out = c.out.as_deref().unwrap_or(input);
    let rows: Vec<ReplicateRow> = read_rows(&input.join("replicates.csv"))?;
    let curves_path = input.join("curves.csv");
    let curves: Vec<CurveRow> = if curves_path.exists() { read_rows(&curves_path)? } else { Vec::new() };
    fs::create_dir_all(out)?;
    write_summaries(out, &rows, &curves)?;
    write_run_config(&out.join("eval.run.toml"), c)
}

// ---------------------------------------------------------------------------
// beta-surface

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BetaCommand {
    pub model: Option<PathBuf>,
    /// Directory written by the project command's basis export.
    pub basis: Option<PathBuf>,
    pub roles: Option<PathBuf>,
    /// Output CSV; the effective config goes to `<out>.run.toml`.
    pub out: Option<PathBuf>,
    /// Response and covariate as 0-based indices or, with `roles`, names.
    pub response: String,
    pub covariate: String,
}

#[derive(Debug, Args)]
pub struct BetaArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    basis: Option<PathBuf>,
    #[arg(long)]
    roles: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    response: Option<String>,
    #[arg(long)]
    covariate: Option<String>,
}

impl BetaArgs {
    fn resolve(self) -> Result<BetaCommand> {
        let mut c: BetaCommand = load_config(self.config.as_deref())?;
        for (slot, v) in [(&mut c.model, self.model), (&mut c.basis, self.basis), (&mut c.roles, self.roles), (&mut c.out, self.out)] {
            if v.is_some() {
                *slot = v;
            }
        }
        set(&mut c.response, self.response);
        set(&mut c.covariate, self.covariate);
        Ok(c)
    }
}

fn resolve_index(key: &str, names: &[String], what: &str) -> Result<usize> {
    let idx = match key.trim().parse::<usize>() {
        Ok(i) => i,
        Err(_) => names
            .iter()
            .position(|n| n == key.trim())
            .ok_or_else(|| Error::InvalidInput(format!("no {what} named '{key}'")))?,
    };
    if idx >= names.len() {
        return Err(Error::IndexOutOfRange { index: idx, size: names.len() });
    }
    Ok(idx)
}

pub fn cmd_beta_surface(c: &BetaCommand) -> Result<()> {
    let out = required(&c.out, "out")?;
    let model = BlockModel::load(required(&c.model, "model")?)?;
    let (basis, _) = read_basis(required(&c.basis, "basis")?)?;
    if c.response.is_empty() || c.covariate.is_empty() {
        return Err(Error::Config("both 'response' and 'covariate' are required".into()));
    }
    let names = Names::new(c.roles.as_deref(), model.p, model.q)?;
    let i = resolve_index(&c.response, &names.responses, "response")?;
    let k = resolve_index(&c.covariate, &names.covariates, "covariate")?;
    if basis.len() != model.blocks() {
        return Err(Error::DimensionMismatch(format!(
            "basis has {} components, model has {} blocks",
            basis.len(),
            model.blocks()
        )));
    }
    let surface = model.beta_surface_pair(&basis, i, k);
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(out)?;
    let mut header = vec!["t".to_string()];
    header.extend(basis.grid.locations().map(fmt_f64));
    w.write_record(&header)?;
    for (a, t) in basis.grid.locations().enumerate() {
        let mut row = vec![fmt_f64(t)];
        row.extend((0..basis.grid.points).map(|b| fmt_f64(surface[(a, b)])));
        w.write_record(&row)?;
    }
    w.flush()?;
    let mut cfg_path = out.as_os_str().to_owned();
    cfg_path.push(".run.toml");
    write_run_config(Path::new(&cfg_path), c)
}
