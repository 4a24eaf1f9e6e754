//! Multi-seed benchmark runs, aggregation and report emission.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use fimgate_core::datagen::{
    build_arx, build_lagged, ground_truth_support, standardize, LaggedDataset, SimConfig,
    StandardizeStats, SystemId,
};
use fimgate_core::eval::support_metrics;
use fimgate_core::gating::{sparsity_l1, threshold_support, ScoreVector};
use fimgate_core::trainer::{evaluate, train, FittedModel, Method, TrainConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::{self, fmt_f64};

/// Input amplitude policy for simulated series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InputRange {
    /// `[-2.5, 2.5]` for every system.
    Benchmark,
    /// The benchmark range where the system stays bounded under it, a
    /// narrower per-system range otherwise.
    Stable,
    Fixed { low: f64, high: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub systems: Vec<SystemId>,
    pub methods: Vec<Method>,
    pub n_seeds: usize,
    /// Root seed from which every run seed is derived.
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub lag: usize,
    pub noise_std: f64,
    pub burn_in: usize,
    pub input_range: InputRange,
    pub threshold: f64,
    pub train: TrainConfig,
    pub output_dir: PathBuf,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            systems: SystemId::ALL.to_vec(),
            methods: Method::ALL.to_vec(),
            n_seeds: 10,
            seed: 0,
            n_train: 4000,
            n_test: 2000,
            lag: 10,
            noise_std: 0.0,
            burn_in: 50,
            input_range: InputRange::Stable,
            threshold: 0.5,
            train: TrainConfig::default(),
            output_dir: PathBuf::from("results"),
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.systems.is_empty() {
            return bad("at least one system is required");
        }
        if self.methods.is_empty() {
            return bad("at least one method is required");
        }
        if self.n_seeds == 0 {
            return bad("n_seeds must be >= 1");
        }
        if self.lag == 0 || self.n_train < 2 || self.n_test == 0 {
            return bad("lag, n_train and n_test must be positive");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad("threshold must lie in (0, 1)");
        }
        if let InputRange::Fixed { low, high } = self.input_range {
            if !(low < high) {
                return bad("input range must satisfy low < high");
            }
        }
        self.train.validate()?;
        Ok(())
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(Error::io(path))?;
        toml::from_str(&text).map_err(|source| Error::Toml {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn sim_config(&self, system: SystemId, seed: u64) -> SimConfig {
        let mut sim = SimConfig::new(system, self.n_train + self.n_test + self.lag, seed);
        sim.noise_std = self.noise_std;
        sim.burn_in = self.burn_in;
        match self.input_range {
            InputRange::Benchmark => sim,
            InputRange::Stable => sim.with_stable_range(),
            InputRange::Fixed { low, high } => sim.with_input_range(low, high),
        }
    }
}

/// 64-bit seed from SHA-256 over the root seed and the run coordinates.
pub fn derive_seed(root: u64, system: SystemId, stream: &str, replicate: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(system.to_string().as_bytes());
    h.update([0u8]);
    h.update(stream.as_bytes());
    h.update([0u8]);
    h.update((replicate as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Seed of the simulated series. Shared by all methods of a replicate so the
/// methods are compared on identical data.
pub fn data_seed(root: u64, system: SystemId, replicate: usize) -> u64 {
    derive_seed(root, system, "data", replicate)
}

pub fn run_seed(root: u64, system: SystemId, method: Method, replicate: usize) -> u64 {
    derive_seed(root, system, method.name(), replicate)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub system: SystemId,
    pub method: Method,
    pub replicate: usize,
    pub seed: u64,
    pub test_mse: f64,
    pub alpha: ScoreVector,
    pub labels: Vec<String>,
    pub l1: f64,
    pub support_precision: f64,
    pub support_recall: f64,
    pub support_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub system: SystemId,
    pub method: Method,
    pub replicate: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreStat {
    pub column_label: String,
    pub alpha_mean: f64,
    pub alpha_std: f64,
}

/// Mean and spread over the successful seeds of one (system, method) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellAggregate {
    pub system: SystemId,
    pub method: Method,
    pub seeds: usize,
    pub mse_mean: f64,
    pub mse_std: f64,
    pub l1_mean: f64,
    pub l1_std: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub scores: Vec<ScoreStat>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub cells: Vec<CellAggregate>,
}

impl AggregateResult {
    pub fn cell(&self, system: SystemId, method: Method) -> Option<&CellAggregate> {
        self.cells.iter().find(|c| c.system == system && c.method == method)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub runs: Vec<RunResult>,
    pub failures: Vec<RunFailure>,
    pub aggregate: AggregateResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuiteStatus {
    Complete,
    /// Some runs failed but every cell has at least one result.
    Partial,
    /// At least one cell has no successful run.
    CellFailed,
}

impl SuiteResult {
    pub fn status(&self, spec: &ExperimentSpec) -> SuiteStatus {
        if self.failures.is_empty() {
            return SuiteStatus::Complete;
        }
        let cells = spec.systems.len() * spec.methods.len();
        if self.aggregate.cells.len() < cells {
            SuiteStatus::CellFailed
        } else {
            SuiteStatus::Partial
        }
    }
}

/// Population mean and standard deviation.
fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Simulated train and test sets, standardized with training statistics.
pub fn prepare_data(spec: &ExperimentSpec, system: SystemId, replicate: usize) -> Result<(LaggedDataset, LaggedDataset)> {
    let pair = spec.sim_config(system, data_seed(spec.seed, system, replicate)).run()?;
    let lagged = build_lagged(&pair, spec.lag)?;
    let (train_raw, test_raw) = lagged.split_at(spec.n_train)?;
    let (train_set, stats) = standardize(&train_raw)?;
    Ok((train_set, stats.apply(&test_raw)?))
}

/// Trains one model and scores it. Returns the fitted model alongside.
pub fn run_one(
    spec: &ExperimentSpec,
    system: SystemId,
    method: Method,
    replicate: usize,
) -> Result<(RunResult, FittedModel)> {
    let (train_set, test_set) = prepare_data(spec, system, replicate)?;
    let seed = run_seed(spec.seed, system, method, replicate);
    let config = TrainConfig {
        method,
        seed,
        ..spec.train.clone()
    };
    let model = train(&train_set, &config)?;
    let test_mse = evaluate(&model, &test_set)?;
    let recovered = threshold_support(&model.alpha, spec.threshold)?;
    let m = support_metrics(&recovered, &ground_truth_support(system), &train_set.labels);
    let result = RunResult {
        system,
        method,
        replicate,
        seed,
        test_mse,
        l1: sparsity_l1(&model.alpha),
        alpha: model.alpha.clone(),
        labels: train_set.labels.iter().map(ToString::to_string).collect(),
        support_precision: m.precision,
        support_recall: m.recall,
        support_f1: m.f1,
    };
    Ok((result, model))
}

/// Runs every (system, method, replicate) job, in parallel, and aggregates.
/// A failing run is recorded and excluded from its cell.
pub fn run_suite(spec: &ExperimentSpec) -> Result<SuiteResult> {
    spec.validate()?;
    let jobs: Vec<(SystemId, Method, usize)> = spec
        .systems
        .iter()
        .flat_map(|&s| {
            spec.methods
                .iter()
                .flat_map(move |&m| (0..spec.n_seeds).map(move |r| (s, m, r)))
        })
        .collect();
    let outcomes: Vec<std::result::Result<RunResult, RunFailure>> = jobs
        .par_iter()
        .map(|&(system, method, replicate)| {
            run_one(spec, system, method, replicate)
                .map(|(r, _)| r)
                .map_err(|e| RunFailure {
                    system,
                    method,
                    replicate,
                    message: e.to_string(),
                })
        })
        .collect();
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => runs.push(r),
            Err(f) => failures.push(f),
        }
    }
    let aggregate = aggregate(&runs);
    Ok(SuiteResult {
        runs,
        failures,
        aggregate,
    })
}

/// Groups runs by (system, method) in system/method order and summarizes each
/// group over its replicates in replicate order.
pub fn aggregate(runs: &[RunResult]) -> AggregateResult {
    let mut groups: BTreeMap<(SystemId, Method), Vec<&RunResult>> = BTreeMap::new();
    for r in runs {
        groups.entry((r.system, r.method)).or_default().push(r);
    }
    let cells = groups
        .into_iter()
        .map(|((system, method), mut rs)| {
            rs.sort_by_key(|r| r.replicate);
            let col = |f: fn(&RunResult) -> f64| rs.iter().map(|r| f(r)).collect::<Vec<_>>();
            let (mse_mean, mse_std) = mean_std(&col(|r| r.test_mse));
            let (l1_mean, l1_std) = mean_std(&col(|r| r.l1));
            let scores = rs[0]
                .labels
                .iter()
                .enumerate()
                .map(|(j, label)| {
                    let a: Vec<f64> = rs.iter().map(|r| r.alpha.as_slice()[j]).collect();
                    let (alpha_mean, alpha_std) = mean_std(&a);
                    ScoreStat {
                        column_label: label.clone(),
                        alpha_mean,
                        alpha_std,
                    }
                })
                .collect();
            CellAggregate {
                system,
                method,
                seeds: rs.len(),
                mse_mean,
                mse_std,
                l1_mean,
                l1_std,
                precision: mean_std(&col(|r| r.support_precision)).0,
                recall: mean_std(&col(|r| r.support_recall)).0,
                f1: mean_std(&col(|r| r.support_f1)).0,
                scores,
            }
        })
        .collect();
    AggregateResult { cells }
}

pub const REPORT_HEADER: [&str; 10] = [
    "system", "method", "seeds", "mse_mean", "mse_std", "l1_mean", "l1_std", "precision", "recall", "f1",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

pub fn score_file_name(system: SystemId, method: Method) -> String {
    format!("scores_{system}_{method}.csv")
}

/// Writes `report.csv` and/or `report.json` plus one score file per cell into
/// `dir`. Returns the paths written.
pub fn emit_report(agg: &AggregateResult, dir: &Path, formats: &[ReportFormat]) -> Result<Vec<PathBuf>> {
    if agg.cells.is_empty() {
        return Err(Error::Config("nothing to report".into()));
    }
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let mut written = Vec::new();
    if formats.contains(&ReportFormat::Csv) {
        let path = dir.join("report.csv");
        let mut w = io::writer(&path)?;
        w.write_record(REPORT_HEADER).map_err(Error::csv(&path))?;
        for c in &agg.cells {
            w.write_record([
                c.system.to_string(),
                c.method.to_string(),
                c.seeds.to_string(),
                fmt_f64(c.mse_mean),
                fmt_f64(c.mse_std),
                fmt_f64(c.l1_mean),
                fmt_f64(c.l1_std),
                fmt_f64(c.precision),
                fmt_f64(c.recall),
                fmt_f64(c.f1),
            ])
            .map_err(Error::csv(&path))?;
        }
        w.flush().map_err(Error::io(&path))?;
        written.push(path);
    }
    if formats.contains(&ReportFormat::Json) {
        let path = dir.join("report.json");
        let mut text = serde_json::to_string_pretty(agg).map_err(Error::json(&path))?;
        text.push('\n');
        fs::write(&path, text).map_err(Error::io(&path))?;
        written.push(path);
    }
    for c in &agg.cells {
        let path = dir.join(score_file_name(c.system, c.method));
        let mut w = io::writer(&path)?;
        w.write_record(["column_label", "alpha_mean", "alpha_std"])
            .map_err(Error::csv(&path))?;
        for s in &c.scores {
            w.write_record([s.column_label.clone(), fmt_f64(s.alpha_mean), fmt_f64(s.alpha_std)])
                .map_err(Error::csv(&path))?;
        }
        w.flush().map_err(Error::io(&path))?;
        written.push(path);
    }
    Ok(written)
}

fn parse_cell<T: std::str::FromStr>(path: &Path, row: usize, column: &str, raw: &str) -> Result<T> {
    raw.parse::<T>().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        row,
        column: column.to_string(),
        message: format!("cannot parse `{raw}`"),
    })
}

/// Rebuilds an [`AggregateResult`] from `report.csv` and the score files
/// next to it.
pub fn read_report_csv(dir: &Path) -> Result<AggregateResult> {
    let path = dir.join("report.csv");
    let (headers, rows) = io::records(&path)?;
    let idx = REPORT_HEADER
        .iter()
        .map(|name| io::column_index(&path, &headers, name))
        .collect::<Result<Vec<_>>>()?;
    let mut cells = Vec::with_capacity(rows.len());
    for (row, rec) in &rows {
        let get = |k: usize| rec.get(idx[k]).unwrap_or("");
        let num = |k: usize| parse_cell::<f64>(&path, *row, REPORT_HEADER[k], get(k));
        let system: SystemId = parse_cell(&path, *row, "system", get(0))?;
        let method: Method = parse_cell(&path, *row, "method", get(1))?;
        let score_path = dir.join(score_file_name(system, method));
        let (sh, srows) = io::records(&score_path)?;
        let (il, im, is) = (
            io::column_index(&score_path, &sh, "column_label")?,
            io::column_index(&score_path, &sh, "alpha_mean")?,
            io::column_index(&score_path, &sh, "alpha_std")?,
        );
        let scores = srows
            .iter()
            .map(|(r, s)| {
                Ok(ScoreStat {
                    column_label: s.get(il).unwrap_or("").to_string(),
                    alpha_mean: io::parse_f64(&score_path, *r, "alpha_mean", s.get(im).unwrap_or(""))?,
                    alpha_std: io::parse_f64(&score_path, *r, "alpha_std", s.get(is).unwrap_or(""))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        cells.push(CellAggregate {
            system,
            method,
            seeds: parse_cell(&path, *row, "seeds", get(2))?,
            mse_mean: num(3)?,
            mse_std: num(4)?,
            l1_mean: num(5)?,
            l1_std: num(6)?,
            precision: num(7)?,
            recall: num(8)?,
            f1: num(9)?,
            scores,
        });
    }
    Ok(AggregateResult { cells })
}

pub fn read_report_json(path: &Path) -> Result<AggregateResult> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    serde_json::from_str(&text).map_err(Error::json(path))
}

/// Stores the raw per-run results so reports can be regenerated later.
pub fn save_runs(path: &Path, suite: &SuiteResult) -> Result<()> {
    io::ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(suite).map_err(Error::json(path))?;
    text.push('\n');
    fs::write(path, text).map_err(Error::io(path))
}

pub fn load_runs(path: &Path) -> Result<SuiteResult> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    serde_json::from_str(&text).map_err(Error::json(path))
}

/// Train/test split of an external series.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestedData {
    pub train: LaggedDataset,
    pub test: LaggedDataset,
    pub stats: StandardizeStats,
}

/// Reads a two-column series and builds the unscaled ARX regressor.
pub fn ingest_raw(path: &Path, input_column: &str, output_column: &str, n_a: usize, n_b: usize) -> Result<LaggedDataset> {
    let pair = io::read_series(path, input_column, output_column)?;
    let need = n_a.max(n_b) + 2;
    if pair.len() < need {
        return Err(Error::Config(format!(
            "{}: {} rows, at least {need} required for n_a={n_a}, n_b={n_b}",
            path.display(),
            pair.len()
        )));
    }
    Ok(build_arx(&pair, n_a, n_b)?)
}

/// [`ingest_raw`] followed by a time-ordered split at `split_fraction` of the
/// rows and standardization with the training statistics.
pub fn ingest_csv(
    path: &Path,
    input_column: &str,
    output_column: &str,
    n_a: usize,
    n_b: usize,
    split_fraction: f64,
) -> Result<IngestedData> {
    if !(split_fraction > 0.0 && split_fraction < 1.0) {
        return Err(Error::Config("split fraction must lie in (0, 1)".into()));
    }
    let lagged = ingest_raw(path, input_column, output_column, n_a, n_b)?;
    let n_train = (lagged.n_rows() as f64 * split_fraction).round() as usize;
    let (train_raw, test_raw) = lagged.split_at(n_train)?;
    let (train, stats) = standardize(&train_raw)?;
    let test = stats.apply(&test_raw)?;
    Ok(IngestedData { train, test, stats })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> ExperimentSpec {
        ExperimentSpec {
            systems: vec![SystemId::F3],
            methods: vec![Method::DropIn],
            n_seeds: 2,
            n_train: 150,
            n_test: 60,
            lag: 4,
            train: TrainConfig {
                epochs: 2,
                hidden: vec![5],
                ..TrainConfig::default()
            },
            ..ExperimentSpec::default()
        }
    }

    #[test]
    fn one_cell_two_seeds() {
        let suite = run_suite(&tiny_spec()).unwrap();
        assert_eq!(suite.runs.len(), 2);
        assert_eq!(suite.aggregate.cells.len(), 1);
        assert_eq!(suite.aggregate.cells[0].seeds, 2);
        assert_eq!(suite.aggregate.cells[0].scores.len(), 8);
    }

    #[test]
    fn seeds_differ_by_coordinate() {
        let a = run_seed(0, SystemId::F3, Method::DropIn, 0);
        assert_ne!(a, run_seed(0, SystemId::F3, Method::DropIn, 1));
        assert_ne!(a, run_seed(0, SystemId::F3, Method::Stochastic, 0));
        assert_ne!(a, run_seed(0, SystemId::F4, Method::DropIn, 0));
        assert_ne!(a, run_seed(1, SystemId::F3, Method::DropIn, 0));
        assert_eq!(a, run_seed(0, SystemId::F3, Method::DropIn, 0));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = tiny_spec();
        s.systems.clear();
        assert!(s.validate().is_err());
        let mut s = tiny_spec();
        s.n_seeds = 0;
        assert!(s.validate().is_err());
        let mut s = tiny_spec();
        s.threshold = 1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn population_std() {
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 1.0));
    }
}
