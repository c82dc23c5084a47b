//! Experiment orchestration: parameter grids, run batteries, result tables
//! and method rankings.
//!
//! A plan names datasets, one method and its grid. Every (dataset, cell,
//! run) job is independent; jobs run on the rayon pool and results are put
//! back in canonical order, so the output never depends on scheduling.
//! Deterministic methods (k-NN, decision tree, SVM) run once per cell and
//! train on training + validation; the stochastic ones (MLP, MEP) run
//! `runs` times with seeds `seed_base + i` and use the validation part for
//! model selection.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::classifier::Classifier;
use crate::corpus::FeatureSetName;
use crate::dataset::{load_split_dir, DatasetId, Split, NUM_CLASSES};
use crate::dtree::{dtree_train, TreeOptions};
use crate::error::{Error, Result};
use crate::knn::{KnnModel, K_RANGE};
use crate::mep::{mep_evolve, MepParams};
use crate::metrics::{confusion, report, summarize, ConfusionMatrix, MetricsReport, RunSummary};
use crate::mlp::{mlp_train, MlpConfig, Training, HIDDEN_RANGE};
use crate::svm::{nu_grid, svm_train, KernelKind, SvmConfig};

pub const DEFAULT_RUNS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Knn,
    Dtree,
    Mlp,
    Svm,
    Mep,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Knn, Method::Dtree, Method::Mlp, Method::Svm, Method::Mep];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Knn => "knn",
            Method::Dtree => "dtree",
            Method::Mlp => "mlp",
            Method::Svm => "svm",
            Method::Mep => "mep",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, Method::Mlp | Method::Mep)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s || (s == "ann" && *m == Method::Mlp) || (s == "dt" && *m == Method::Dtree))
            .ok_or_else(|| Error::Plan(format!("unknown method `{s}`")))
    }
}

/// One method's parameter grid.
#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    Knn { ks: Vec<usize> },
    Dtree { options: Vec<TreeOptions> },
    Mlp { hidden: Vec<usize>, training: Training, max_epochs: usize },
    Svm { kernels: Vec<KernelKind>, nus: Vec<f64> },
    Mep { params: MepParams },
}

/// Single parameter setting taken from a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Knn { k: usize },
    Dtree(TreeOptions),
    Mlp { hidden: usize, training: Training, max_epochs: usize },
    Svm { kernel: KernelKind, nu: f64 },
    Mep(MepParams),
}

impl Cell {
    pub fn method(&self) -> Method {
        match self {
            Cell::Knn { .. } => Method::Knn,
            Cell::Dtree(_) => Method::Dtree,
            Cell::Mlp { .. } => Method::Mlp,
            Cell::Svm { .. } => Method::Svm,
            Cell::Mep(_) => Method::Mep,
        }
    }

    /// Short label such as `k=8` or `kernel=linear nu=0.6`.
    pub fn label(&self) -> String {
        match self {
            Cell::Knn { k } => format!("k={k}"),
            Cell::Dtree(o) => format!("cf={} m={} global={}", o.confidence_factor, o.min_cases, u8::from(o.global_prune)),
            Cell::Mlp { hidden, .. } => format!("hidden={hidden}"),
            Cell::Svm { kernel, nu } => format!("kernel={kernel} nu={nu}"),
            Cell::Mep(p) => format!(
                "subpops={} size={} generations={}",
                p.subpopulations, p.subpopulation_size, p.generations
            ),
        }
    }
}

impl Grid {
    pub fn method(&self) -> Method {
        match self {
            Grid::Knn { .. } => Method::Knn,
            Grid::Dtree { .. } => Method::Dtree,
            Grid::Mlp { .. } => Method::Mlp,
            Grid::Svm { .. } => Method::Svm,
            Grid::Mep { .. } => Method::Mep,
        }
    }

    /// The sweep used for each method by default.
    pub fn default_for(method: Method) -> Grid {
        match method {
            Method::Knn => Grid::Knn { ks: K_RANGE.collect() },
            Method::Dtree => {
                let base = TreeOptions::default();
                let mut options = vec![base, TreeOptions { global_prune: false, ..base }];
                options.extend((1..=10).map(|c| TreeOptions { confidence_factor: c * 10, ..base }));
                options.extend((1..=30).map(|m| TreeOptions { min_cases: m, ..base }));
                let mut unique = Vec::new();
                for o in options {
                    if !unique.contains(&o) {
                        unique.push(o);
                    }
                }
                Grid::Dtree { options: unique }
            }
            Method::Mlp => Grid::Mlp { hidden: HIDDEN_RANGE.collect(), training: Training::Rprop, max_epochs: 500 },
            Method::Svm => Grid::Svm { kernels: KernelKind::ALL.to_vec(), nus: nu_grid() },
            Method::Mep => Grid::Mep { params: MepParams::default() },
        }
    }

    pub fn cells(&self) -> Vec<Cell> {
        match self {
            Grid::Knn { ks } => ks.iter().map(|&k| Cell::Knn { k }).collect(),
            Grid::Dtree { options } => options.iter().map(|&o| Cell::Dtree(o)).collect(),
            Grid::Mlp { hidden, training, max_epochs } => hidden
                .iter()
                .map(|&h| Cell::Mlp { hidden: h, training: *training, max_epochs: *max_epochs })
                .collect(),
            Grid::Svm { kernels, nus } => kernels
                .iter()
                .flat_map(|&kernel| nus.iter().map(move |&nu| Cell::Svm { kernel, nu }))
                .collect(),
            Grid::Mep { params } => vec![Cell::Mep(*params)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Plan(m));
        if self.cells().is_empty() {
            return bad(format!("{} grid is empty", self.method()));
        }
        match self {
            Grid::Knn { ks } => {
                if let Some(k) = ks.iter().find(|k| !K_RANGE.contains(k)) {
                    return bad(format!("k = {k} outside {K_RANGE:?}"));
                }
            }
            Grid::Dtree { options } => {
                for o in options {
                    o.validate()?;
                }
            }
            Grid::Mlp { hidden, max_epochs, .. } => {
                if let Some(h) = hidden.iter().find(|h| !HIDDEN_RANGE.contains(h)) {
                    return bad(format!("hidden = {h} outside {HIDDEN_RANGE:?}"));
                }
                MlpConfig { max_epochs: *max_epochs, ..MlpConfig::new(5, 0) }.validate()?;
            }
            Grid::Svm { nus, .. } => {
                for &nu in nus {
                    SvmConfig::new(KernelKind::Linear, nu).validate()?;
                }
            }
            Grid::Mep { params } => params.validate()?,
        }
        Ok(())
    }

    /// Canonical text form, used for the run fingerprint.
    fn describe(&self) -> String {
        self.cells().iter().map(Cell::label).collect::<Vec<_>>().join(";")
            + &match self {
                Grid::Mlp { training, max_epochs, .. } => format!(";training={training:?};epochs={max_epochs}"),
                Grid::Mep { params } => format!(";{params:?}"),
                _ => String::new(),
            }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub datasets: Vec<DatasetId>,
    pub grid: Grid,
    /// Runs per cell for stochastic methods; deterministic ones run once.
    pub runs: usize,
    pub seed_base: u64,
    pub data_root: PathBuf,
}

impl ExperimentPlan {
    pub fn new(method: Method, datasets: Vec<DatasetId>, data_root: impl Into<PathBuf>) -> Self {
        ExperimentPlan {
            datasets,
            grid: Grid::default_for(method),
            runs: DEFAULT_RUNS,
            seed_base: 0,
            data_root: data_root.into(),
        }
    }

    pub fn method(&self) -> Method {
        self.grid.method()
    }

    pub fn effective_runs(&self) -> usize {
        if self.method().is_stochastic() {
            self.runs
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::Plan("no datasets".into()));
        }
        if self.runs == 0 {
            return Err(Error::Plan("runs must be positive".into()));
        }
        self.grid.validate()
    }

    /// Everything that determines the results, one `key=value` per line.
    /// The data root is left out so moving the data does not change it.
    pub fn fingerprint_text(&self) -> String {
        let datasets: Vec<String> = self.datasets.iter().map(ToString::to_string).collect();
        format!(
            "method={}\ndatasets={}\nruns={}\nseed_base={}\ngrid={}\n",
            self.method(),
            datasets.join(","),
            self.effective_runs(),
            if self.method().is_stochastic() { self.seed_base } else { 0 },
            self.grid.describe()
        )
    }

    /// `run-` followed by the first 12 hex digits of the fingerprint's SHA-256.
    pub fn run_dir_name(&self) -> String {
        let digest = Sha256::digest(self.fingerprint_text().as_bytes());
        let hex: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
        format!("run-{hex}")
    }
}

/// Parses a `key=value` config file into a plan. Blank lines and `#`
/// comments are ignored. Keys: `method`, `datasets`, `runs`, `seed_base`,
/// `data_root`, plus the grid keys `k`, `hidden`, `epochs`, `training`,
/// `kernels`, `nu`, `cf`, `min_cases`, `global_prune`, `profile`,
/// `generations`.
pub fn plan_from_config(text: &str) -> Result<ExperimentPlan> {
    let mut kv = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Plan(format!("config line {}: expected key=value", i + 1)))?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    let method: Method = kv.get("method").ok_or_else(|| Error::Plan("config needs `method`".into()))?.parse()?;
    let datasets = match kv.get("datasets") {
        Some(v) => parse_datasets(v)?,
        None => all_datasets(),
    };
    let root = kv.get("data_root").map(PathBuf::from).unwrap_or_default();
    let mut plan = ExperimentPlan::new(method, datasets, root);
    let int = |key: &str, v: &str| v.parse::<u64>().map_err(|e| Error::Plan(format!("{key}: {e}")));
    if let Some(v) = kv.get("runs") {
        plan.runs = int("runs", v)? as usize;
    }
    if let Some(v) = kv.get("seed_base") {
        plan.seed_base = int("seed_base", v)?;
    }
    plan.grid = grid_from_keys(method, &kv)?;
    Ok(plan)
}

/// Builds a grid from optional overrides; missing keys keep the defaults.
pub fn grid_from_keys(method: Method, kv: &BTreeMap<String, String>) -> Result<Grid> {
    let get = |k: &str| kv.get(k).map(String::as_str);
    let mut grid = Grid::default_for(method);
    match &mut grid {
        Grid::Knn { ks } => {
            if let Some(v) = get("k") {
                *ks = parse_usize_list(v)?;
            }
        }
        Grid::Dtree { options } => {
            let explicit = ["cf", "min_cases", "global_prune"].iter().any(|k| get(k).is_some());
            if explicit {
                let cfs = get("cf").map(parse_usize_list).transpose()?.unwrap_or(vec![25]);
                let ms = get("min_cases").map(parse_usize_list).transpose()?.unwrap_or(vec![2]);
                let global = match get("global_prune") {
                    Some(v) => vec![parse_bool(v)?],
                    None => vec![true],
                };
                options.clear();
                for &g in &global {
                    for &cf in &cfs {
                        for &m in &ms {
                            options.push(TreeOptions { global_prune: g, confidence_factor: cf as u32, min_cases: m });
                        }
                    }
                }
            }
        }
        Grid::Mlp { hidden, training, max_epochs } => {
            if let Some(v) = get("hidden") {
                *hidden = parse_usize_list(v)?;
            }
            if let Some(v) = get("epochs") {
                *max_epochs = parse_usize_list(v)?.first().copied().unwrap_or(500);
            }
            if let Some(v) = get("training") {
                *training = match v {
                    "rprop" => Training::Rprop,
                    other => match other.strip_prefix("backprop") {
                        Some(rest) => Training::Backprop {
                            learning_rate: rest.trim_start_matches(':').parse().unwrap_or(0.7),
                        },
                        None => return Err(Error::Plan(format!("unknown training `{other}`"))),
                    },
                };
            }
        }
        Grid::Svm { kernels, nus } => {
            if let Some(v) = get("kernels") {
                *kernels = v.split(',').map(|s| s.trim().parse()).collect::<Result<_>>()?;
            }
            if let Some(v) = get("nu") {
                *nus = v
                    .split(',')
                    .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Plan(format!("nu: {e}"))))
                    .collect::<Result<_>>()?;
            }
        }
        Grid::Mep { params } => {
            if let Some(v) = get("profile") {
                *params = match v {
                    "full" => MepParams::default(),
                    "fast" => MepParams::fast(),
                    other => return Err(Error::Plan(format!("unknown mep profile `{other}`"))),
                };
            }
            if let Some(v) = get("generations") {
                params.generations = v.parse().map_err(|e| Error::Plan(format!("generations: {e}")))?;
            }
        }
    }
    Ok(grid)
}

/// `1..30`, `1..=30`, `5` or a comma list mixing both.
pub fn parse_usize_list(v: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    let num = |s: &str| s.trim().parse::<usize>().map_err(|e| Error::Plan(format!("`{s}`: {e}")));
    for part in v.split(',') {
        if let Some((a, b)) = part.split_once("..") {
            let b = b.trim_start_matches('=');
            out.extend(num(a)?..=num(b)?);
        } else {
            out.push(num(part)?);
        }
    }
    Ok(out)
}

fn parse_bool(v: &str) -> Result<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "on" | "yes" => Ok(true),
        "0" | "false" | "off" | "no" => Ok(false),
        other => Err(Error::Plan(format!("not a boolean: `{other}`"))),
    }
}

/// Comma-separated dataset ids; `all` expands to the nine main representations.
pub fn parse_datasets(v: &str) -> Result<Vec<DatasetId>> {
    if v.trim().eq_ignore_ascii_case("all") {
        return Ok(all_datasets());
    }
    v.split(',').map(|s| s.trim().parse()).collect()
}

/// ROST-{P,PA,PAC}-{1,2,3}.
pub fn all_datasets() -> Vec<DatasetId> {
    [FeatureSetName::P, FeatureSetName::PA, FeatureSetName::PAC]
        .into_iter()
        .flat_map(|f| (1..=3).map(move |s| DatasetId::new(f, s)))
        .collect()
}

/// Outcome of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub seed: Option<u64>,
    pub test_error: f64,
    pub confusion: ConfusionMatrix,
    /// Method-specific note, e.g. tree size or support-vector count.
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub dataset: DatasetId,
    pub cell: Cell,
    pub runs: Vec<RunResult>,
    /// Set when the cell could not be trained (e.g. infeasible ν).
    pub note: Option<String>,
}

impl CellResult {
    pub fn summary(&self) -> Option<RunSummary> {
        let errors: Vec<f64> = self.runs.iter().map(|r| r.test_error).collect();
        summarize(&errors).ok()
    }

    /// The run with the lowest test error; the earliest on ties.
    pub fn best_run(&self) -> Option<&RunResult> {
        self.runs
            .iter()
            .reduce(|best, r| if r.test_error < best.test_error { r } else { best })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub method: Method,
    pub cells: Vec<CellResult>,
}

/// Best cell of one (dataset, method), reported the way summary tables are.
#[derive(Debug, Clone, PartialEq)]
pub struct BestRow {
    pub dataset: DatasetId,
    pub method: Method,
    pub summary: RunSummary,
    pub config: String,
    pub detail: String,
}

impl ResultTable {
    /// Per dataset, the cell with the lowest best error (earliest on ties).
    pub fn best_per_dataset(&self) -> Vec<BestRow> {
        let mut out: Vec<BestRow> = Vec::new();
        let mut datasets: Vec<DatasetId> = self.cells.iter().map(|c| c.dataset).collect();
        datasets.dedup();
        for d in datasets {
            let mut best: Option<(&CellResult, RunSummary)> = None;
            for c in self.cells.iter().filter(|c| c.dataset == d) {
                if let Some(s) = c.summary() {
                    if best.is_none_or(|(_, b)| s.best < b.best) {
                        best = Some((c, s));
                    }
                }
            }
            if let Some((c, s)) = best {
                out.push(BestRow {
                    dataset: d,
                    method: self.method,
                    summary: s,
                    config: c.cell.label(),
                    detail: c.best_run().map(|r| r.detail.clone()).unwrap_or_default(),
                });
            }
        }
        out
    }

    pub fn cells_csv(&self) -> String {
        let mut s = format!("dataset,method,config,runs,best,avg,stddev,{},detail,note\n", MetricsReport::CSV_HEADER);
        for c in &self.cells {
            let summary = c.summary();
            let metrics = c
                .best_run()
                .and_then(|r| report(&r.confusion).ok())
                .map(|m| m.csv_fields())
                .unwrap_or_else(|| ",".repeat(7));
            let (best, avg, sd) = summary
                .map(|s| (format!("{:.4}", s.best), format!("{:.4}", s.avg), format!("{:.4}", s.stddev)))
                .unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{best},{avg},{sd},{metrics},{},{}",
                c.dataset,
                self.method,
                c.cell.label(),
                c.runs.len(),
                c.best_run().map(|r| r.detail.as_str()).unwrap_or(""),
                c.note.as_deref().unwrap_or("").replace(',', ";")
            );
        }
        s
    }

    pub fn runs_csv(&self) -> String {
        let mut s = String::from("dataset,method,config,run,seed,test_error\n");
        for c in &self.cells {
            for (i, r) in c.runs.iter().enumerate() {
                let seed = r.seed.map(|v| v.to_string()).unwrap_or_default();
                let _ = writeln!(s, "{},{},{},{i},{seed},{:.4}", c.dataset, self.method, c.cell.label(), r.test_error);
            }
        }
        s
    }
}

pub fn best_csv(rows: &[BestRow]) -> String {
    let mut s = String::from("dataset,method,best,avg,stddev,config,detail\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{:.4},{:.4},{:.4},{},{}",
            r.dataset, r.method, r.summary.best, r.summary.avg, r.summary.stddev, r.config, r.detail
        );
    }
    s
}

pub fn best_text(rows: &[BestRow]) -> String {
    let mut table = vec![["dataset", "method", "best %", "avg %", "stddev", "config"].map(String::from).to_vec()];
    for r in rows {
        table.push(vec![
            r.dataset.to_string(),
            r.method.to_string(),
            format!("{:.2}", r.summary.best),
            format!("{:.2}", r.summary.avg),
            format!("{:.2}", r.summary.stddev),
            r.config.clone(),
        ]);
    }
    aligned(&table)
}

/// Left-aligned columns separated by two spaces.
pub fn aligned(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r.iter().enumerate().map(|(c, v)| format!("{v:<w$}", w = widths[c])).collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

fn evaluate(model: &dyn Classifier, split: &Split, seed: Option<u64>, detail: String) -> Result<RunResult> {
    let outputs = model.predict_all(&split.test)?;
    let targets = split.test.labels();
    let confusion = confusion(&targets, &outputs, NUM_CLASSES)?;
    Ok(RunResult {
        seed,
        test_error: crate::classifier::error_percent(&targets, &outputs),
        confusion,
        detail,
    })
}

/// Trains and tests one run of one cell.
pub fn run_cell(cell: &Cell, split: &Split, seed: Option<u64>) -> Result<RunResult> {
    match *cell {
        Cell::Knn { k } => {
            let model = KnnModel::new(split.train_with_validation(), k)?;
            evaluate(&model, split, seed, String::new())
        }
        Cell::Dtree(opts) => {
            let tree = dtree_train(&split.train_with_validation(), &opts)?;
            let detail = format!("size={}", tree.size());
            evaluate(&tree, split, seed, detail)
        }
        Cell::Svm { kernel, nu } => {
            let model = svm_train(&split.train_with_validation(), &SvmConfig::new(kernel, nu))?;
            let detail = format!("sv={}", model.total_support_vectors());
            evaluate(&model, split, seed, detail)
        }
        Cell::Mlp { hidden, training, max_epochs } => {
            let cfg = MlpConfig { training, max_epochs, ..MlpConfig::new(hidden, seed.unwrap_or(0)) };
            let model = mlp_train(&split.train, &split.validation, &cfg)?;
            evaluate(&model, split, seed, String::new())
        }
        Cell::Mep(params) => {
            let run = mep_evolve(&split.train, &split.validation, &params, seed.unwrap_or(0))?;
            let detail = format!("train_errors={}", run.train_fitness);
            evaluate(&run.model, split, seed, detail)
        }
    }
}

/// Runs a plan whose splits are already in memory.
pub fn run_plan_on(plan: &ExperimentPlan, splits: &[(DatasetId, Split)]) -> Result<ResultTable> {
    plan.validate()?;
    let cells = plan.grid.cells();
    let runs = plan.effective_runs();
    let stochastic = plan.method().is_stochastic();
    let mut jobs = Vec::new();
    for d in 0..splits.len() {
        for c in 0..cells.len() {
            for r in 0..runs {
                jobs.push((d, c, r));
            }
        }
    }
    let outcomes: Vec<Result<RunResult>> = jobs
        .par_iter()
        .map(|&(d, c, r)| {
            let seed = stochastic.then(|| plan.seed_base + r as u64);
            run_cell(&cells[c], &splits[d].1, seed)
        })
        .collect();
    let mut table = ResultTable { method: plan.method(), cells: Vec::new() };
    let mut it = outcomes.into_iter();
    for (id, _) in splits {
        for cell in &cells {
            let mut result = CellResult { dataset: *id, cell: *cell, runs: Vec::new(), note: None };
            for _ in 0..runs {
                match it.next().expect("one outcome per job") {
                    Ok(r) => result.runs.push(r),
                    Err(e @ Error::InfeasibleNu { .. }) => result.note = Some(e.to_string()),
                    Err(e) => return Err(e),
                }
            }
            table.cells.push(result);
        }
    }
    Ok(table)
}

/// Loads every dataset of the plan from its data root and runs it.
pub fn run_plan(plan: &ExperimentPlan) -> Result<ResultTable> {
    plan.validate()?;
    let splits = plan
        .datasets
        .iter()
        .map(|&id| load_split_dir(&plan.data_root, id).map(|s| (id, s)))
        .collect::<Result<Vec<_>>>()?;
    run_plan_on(plan, &splits)
}

/// Writes the tables of a finished plan under `out/<run dir>/` and returns
/// that directory.
pub fn write_outputs(plan: &ExperimentPlan, table: &ResultTable, out: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = out.as_ref().join(plan.run_dir_name());
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let best = table.best_per_dataset();
    let mut files = vec![
        ("plan.txt".to_string(), plan.fingerprint_text()),
        ("cells.csv".to_string(), table.cells_csv()),
        ("runs.csv".to_string(), table.runs_csv()),
        ("best.csv".to_string(), best_csv(&best)),
        ("best.txt".to_string(), best_text(&best)),
    ];
    for b in &best {
        if let Some(c) = table
            .cells
            .iter()
            .find(|c| c.dataset == b.dataset && c.cell.label() == b.config)
            .and_then(CellResult::best_run)
        {
            files.push((format!("confusion-{}-{}.txt", b.dataset, b.method), c.confusion.to_string()));
        }
    }
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(dir)
}

/// Place of one method on one dataset; equal errors share a place.
#[derive(Debug, Clone, PartialEq)]
pub struct Placing {
    pub dataset: DatasetId,
    pub method: Method,
    pub error: f64,
    pub place: usize,
}

/// Ranks methods per dataset by ascending best error. Tied methods share the
/// place and the next place is skipped (1, 1, 3).
pub fn rank_methods(rows: &[BestRow]) -> Vec<Placing> {
    let mut sorted: Vec<&BestRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        a.dataset
            .cmp(&b.dataset)
            .then(a.summary.best.total_cmp(&b.summary.best))
            .then(a.method.cmp(&b.method))
    });
    let mut out: Vec<Placing> = Vec::with_capacity(sorted.len());
    for (i, r) in sorted.iter().enumerate() {
        let first_of_dataset = i == 0 || sorted[i - 1].dataset != r.dataset;
        let place = if first_of_dataset {
            1
        } else {
            let prev = out.last().expect("previous placing");
            if (r.summary.best - prev.error).abs() < 1e-9 {
                prev.place
            } else {
                1 + out.iter().filter(|p| p.dataset == r.dataset).count()
            }
        };
        out.push(Placing { dataset: r.dataset, method: r.method, error: r.summary.best, place });
    }
    out
}

pub fn ranking_text(placings: &[Placing]) -> String {
    let mut table = vec![["dataset", "place", "method", "error %"].map(String::from).to_vec()];
    for p in placings {
        table.push(vec![p.dataset.to_string(), p.place.to_string(), p.method.to_string(), format!("{:.2}", p.error)]);
    }
    aligned(&table)
}

/// Reads `best.csv` files back into rows, for ranking across methods.
pub fn parse_best_csv(text: &str) -> Result<Vec<BestRow>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.splitn(7, ',').collect();
        let bad = |m: &str| Error::Parse { path: "best.csv".into(), line: i + 1, message: m.to_string() };
        if f.len() < 6 {
            return Err(bad("expected at least 6 fields"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(&e.to_string()));
        out.push(BestRow {
            dataset: f[0].parse()?,
            method: f[1].parse()?,
            summary: RunSummary { best: num(f[2])?, avg: num(f[3])?, stddev: num(f[4])? },
            config: f[5].to_string(),
            detail: f.get(6).unwrap_or(&"").to_string(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(dataset: &str, method: Method, best: f64) -> BestRow {
        BestRow {
            dataset: dataset.parse().unwrap(),
            method,
            summary: RunSummary { best, avg: best, stddev: 0.0 },
            config: String::new(),
            detail: String::new(),
        }
    }

    #[test]
    fn ties_share_a_place() {
        let rows = [row("ROST-P-1", Method::Knn, 10.0), row("ROST-P-1", Method::Svm, 10.0), row("ROST-P-1", Method::Mep, 20.0)];
        let places: Vec<(Method, usize)> = rank_methods(&rows).iter().map(|p| (p.method, p.place)).collect();
        assert_eq!(places, vec![(Method::Knn, 1), (Method::Svm, 1), (Method::Mep, 3)]);
    }

    #[test]
    fn ranking_ignores_input_order() {
        let mut rows = vec![
            row("ROST-PA-2", Method::Mep, 20.40),
            row("ROST-PA-2", Method::Mlp, 24.48),
            row("ROST-PA-2", Method::Svm, 26.53),
            row("ROST-PA-2", Method::Dtree, 26.53),
            row("ROST-PA-2", Method::Knn, 32.65),
            row("ROST-P-1", Method::Knn, 53.06),
        ];
        let a = rank_methods(&rows);
        rows.reverse();
        assert_eq!(rank_methods(&rows), a);
        let pa2: Vec<_> = a.iter().filter(|p| p.dataset.to_string() == "ROST-PA-2").collect();
        assert_eq!((pa2[0].method, pa2[0].place), (Method::Mep, 1));
        assert_eq!(pa2.iter().map(|p| p.place).collect::<Vec<_>>(), vec![1, 2, 3, 3, 5]);
    }

    #[test]
    fn lists_and_config() {
        assert_eq!(parse_usize_list("1..3,7").unwrap(), vec![1, 2, 3, 7]);
        assert_eq!(parse_usize_list("5..=6").unwrap(), vec![5, 6]);
        let plan = plan_from_config("# sweep\nmethod = svm\ndatasets = ROST-PAC-1\nkernels = linear\nnu = 0.2,0.5\n").unwrap();
        assert_eq!(plan.grid.cells().len(), 2);
        assert_eq!(plan.effective_runs(), 1);
        assert!(plan_from_config("method = knn\nk = 0\n").unwrap().validate().is_err());
        assert!(plan_from_config("k = 3\n").is_err());
    }

    #[test]
    fn mlp_grid_arithmetic() {
        let plan = ExperimentPlan::new(Method::Mlp, vec!["ROST-PAC-1".parse().unwrap()], "");
        assert_eq!(plan.grid.cells().len() * plan.effective_runs(), 46 * 30);
    }

    #[test]
    fn fingerprint_ignores_data_root() {
        let a = ExperimentPlan::new(Method::Knn, all_datasets(), "/a");
        let b = ExperimentPlan { data_root: "/b".into(), ..a.clone() };
        assert_eq!(a.run_dir_name(), b.run_dir_name());
        let c = ExperimentPlan { seed_base: 1, ..a.clone() };
        assert_eq!(a.run_dir_name(), c.run_dir_name(), "knn ignores seeds");
        let d = ExperimentPlan { grid: Grid::Knn { ks: vec![1] }, ..a.clone() };
        assert_ne!(a.run_dir_name(), d.run_dir_name());
    }
}
