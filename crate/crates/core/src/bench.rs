//! Identification orchestration and the paired Monte Carlo benchmark.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::SystemSpec;
use crate::error::{Error, Result};
use crate::estimator::{
    build_regressor, least_squares, regularised_estimate, regularised_estimate_filter, simulate_fir, Dataset,
    Hyperparameters, ImpulseResponseEstimate, Method,
};
use crate::kernel::build_regularisation_closed_form;
use crate::simulation::{generate_white_gaussian, make_dataset_for, validation_seed, ExperimentConfig};
use crate::tuning::search::{grid_search_with, refine_local_with, tune_kernel_cv_with};
use crate::tuning::{CvProblem, EvidenceFamily, GridSpec, NelderMeadOptions};

/// Tuning settings shared by every identification method.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentifyOptions {
    pub grid: GridSpec,
    pub folds: usize,
    pub refine: bool,
    pub tailored_edges: Option<Vec<f64>>,
}

impl Default for IdentifyOptions {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            folds: 2,
            refine: true,
            tailored_edges: None,
        }
    }
}

impl IdentifyOptions {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            grid: cfg.grid.clone(),
            folds: cfg.folds,
            refine: cfg.refine,
            tailored_edges: cfg.tailored_edges.clone(),
        }
    }
}

/// An estimate together with what its tuning produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Identification {
    pub estimate: ImpulseResponseEstimate,
    /// CV score of the selected hyperparameters (tuned methods only).
    pub cv_mse: Option<f64>,
    /// Grid candidates that could not be scored.
    pub tuning_failures: usize,
}

/// Identify an order-`n` FIR model from `data` with `method`.
pub fn run_identify(data: &Dataset, n: usize, method: Method, options: &IdentifyOptions) -> Result<Identification> {
    data.validate()?;
    let mut cache = None;
    identify_cached(data, n, method, options, &mut cache)
}

fn identify_cached(
    data: &Dataset,
    n: usize,
    method: Method,
    options: &IdentifyOptions,
    cache: &mut Option<CvProblem>,
) -> Result<Identification> {
    identify_inner(data, n, method, options, cache).map_err(|e| Error::Method {
        method: method.as_str().to_string(),
        source: Box::new(e),
    })
}

fn identify_inner(
    data: &Dataset,
    n: usize,
    method: Method,
    options: &IdentifyOptions,
    cache: &mut Option<CvProblem>,
) -> Result<Identification> {
    let phi = build_regressor(&data.u, n)?;
    let problem = |cache: &mut Option<CvProblem>| -> Result<()> {
        if cache.is_none() {
            *cache = Some(CvProblem::new(data, n, options.folds)?);
        }
        Ok(())
    };
    match method {
        Method::Ls => Ok(Identification {
            estimate: least_squares(&phi, &data.y)?,
            cv_mse: None,
            tuning_failures: 0,
        }),
        Method::Tc | Method::Dc => {
            problem(cache)?;
            let family = if method == Method::Tc {
                EvidenceFamily::Tc
            } else {
                EvidenceFamily::Dc
            };
            let tuned = tune_kernel_cv_with(cache.as_ref().unwrap(), family, &options.grid)?;
            let r = build_regularisation_closed_form(&tuned.spec, n)?;
            let estimate = regularised_estimate(&phi, &data.y, &r)?.tagged(method, Hyperparameters::Kernel(tuned.spec));
            Ok(Identification {
                estimate,
                cv_mse: Some(tuned.cv_mse),
                tuning_failures: tuned.failures,
            })
        }
        Method::Filter | Method::Tailored => {
            let grid = if method == Method::Tailored {
                let edges = options
                    .tailored_edges
                    .clone()
                    .or_else(|| options.grid.tailored_edges.clone())
                    .ok_or_else(|| Error::param("the tailored method needs stop-band edges"))?;
                options.grid.clone().with_tailored_edges(edges)
            } else {
                GridSpec {
                    tailored_edges: None,
                    ..options.grid.clone()
                }
            };
            grid.validate()?;
            let candidates = grid.candidates(n);
            if candidates.is_empty() {
                return Err(Error::param(format!("grid has no realisable filter candidates for n = {n}")));
            }
            problem(cache)?;
            let cv = cache.as_ref().unwrap();
            let mut tuned = grid_search_with(cv, candidates)?;
            if options.refine {
                let refined = refine_local_with(cv, &tuned.best, &NelderMeadOptions::default())?;
                if refined.cv_mse < tuned.cv_mse {
                    tuned.best = refined.best;
                    tuned.cv_mse = refined.cv_mse;
                }
            }
            let f = tuned.best.filter_matrix(n)?;
            let estimate = regularised_estimate_filter(&phi, &data.y, &f, tuned.best.lambda)?
                .tagged(method, Hyperparameters::Filter(tuned.best.clone()));
            Ok(Identification {
                estimate,
                cv_mse: Some(tuned.cv_mse),
                tuning_failures: tuned.failures,
            })
        }
        Method::Regularised => Err(Error::param(
            "method `regularised` needs a caller-supplied R; use regularised_estimate",
        )),
    }
}

/// One `(run, method)` outcome. Failed identifications carry `mse_val = NaN`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_index: usize,
    pub method: Method,
    pub mse_val: f64,
    pub hyperparameters: Hyperparameters,
    pub error: Option<String>,
}

impl RunRecord {
    pub fn is_ok(&self) -> bool {
        self.error.is_none() && self.mse_val.is_finite()
    }
}

/// Five-number summary of a method's validation MSE over successful runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub count: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

/// Share of paired runs in which `challenger` has the lower validation MSE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinEntry {
    pub challenger: Method,
    pub baseline: Method,
    pub wins: usize,
    pub paired_runs: usize,
    pub percent: f64,
}

/// Tukey box-plot data for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotRow {
    pub method: Method,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub config: ExperimentConfig,
    pub per_run: Vec<RunRecord>,
    pub summary: Vec<MethodSummary>,
    pub win_table: Vec<WinEntry>,
    /// Rows whose identification failed.
    pub failures: usize,
}

/// Sample quantile with linear interpolation between order statistics
/// (`h = (n − 1)q`). `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted_finite(values: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn summarise(method: Method, values: impl IntoIterator<Item = f64>) -> MethodSummary {
    let v = sorted_finite(values);
    if v.is_empty() {
        return MethodSummary {
            method,
            count: 0,
            median: f64::NAN,
            q1: f64::NAN,
            q3: f64::NAN,
            min: f64::NAN,
            max: f64::NAN,
        };
    }
    MethodSummary {
        method,
        count: v.len(),
        median: quantile_sorted(&v, 0.5),
        q1: quantile_sorted(&v, 0.25),
        q3: quantile_sorted(&v, 0.75),
        min: v[0],
        max: v[v.len() - 1],
    }
}

pub fn boxplot_row(method: Method, values: impl IntoIterator<Item = f64>) -> BoxplotRow {
    let v = sorted_finite(values);
    if v.is_empty() {
        return BoxplotRow {
            method,
            q1: f64::NAN,
            median: f64::NAN,
            q3: f64::NAN,
            whisker_low: f64::NAN,
            whisker_high: f64::NAN,
            outliers: Vec::new(),
        };
    }
    let (q1, median, q3) = (quantile_sorted(&v, 0.25), quantile_sorted(&v, 0.5), quantile_sorted(&v, 0.75));
    let fence = 1.5 * (q3 - q1);
    let (lo, hi) = (q1 - fence, q3 + fence);
    let inside: Vec<f64> = v.iter().copied().filter(|x| (lo..=hi).contains(x)).collect();
    BoxplotRow {
        method,
        q1,
        median,
        q3,
        whisker_low: inside.first().copied().unwrap_or(q1),
        whisker_high: inside.last().copied().unwrap_or(q3),
        outliers: v.iter().copied().filter(|x| !(lo..=hi).contains(x)).collect(),
    }
}

fn is_filter_based(m: Method) -> bool {
    matches!(m, Method::Filter | Method::Tailored)
}

/// Win percentages of every filter-based method over every other method,
/// counted on runs where both succeeded. Pairs without such runs are omitted.
pub fn win_table(methods: &[Method], per_run: &[RunRecord]) -> Vec<WinEntry> {
    let lookup = |run: usize, m: Method| {
        per_run
            .iter()
            .find(|r| r.run_index == run && r.method == m && r.is_ok())
            .map(|r| r.mse_val)
    };
    let mut runs: Vec<usize> = per_run.iter().map(|r| r.run_index).collect();
    runs.sort_unstable();
    runs.dedup();
    let mut out = Vec::new();
    for &challenger in methods.iter().filter(|m| is_filter_based(**m)) {
        for &baseline in methods.iter().filter(|m| **m != challenger) {
            let (mut wins, mut paired) = (0, 0);
            for &run in &runs {
                if let (Some(c), Some(b)) = (lookup(run, challenger), lookup(run, baseline)) {
                    paired += 1;
                    if c < b {
                        wins += 1;
                    }
                }
            }
            if paired > 0 {
                out.push(WinEntry {
                    challenger,
                    baseline,
                    wins,
                    paired_runs: paired,
                    percent: 100.0 * wins as f64 / paired as f64,
                });
            }
        }
    }
    out
}

impl McReport {
    /// Assemble a report from per-run rows in any order.
    pub fn from_rows(config: ExperimentConfig, mut per_run: Vec<RunRecord>) -> Self {
        per_run.sort_by_key(|r| (r.run_index, r.method));
        let summary = config
            .methods
            .iter()
            .map(|&m| summarise(m, per_run.iter().filter(|r| r.method == m && r.is_ok()).map(|r| r.mse_val)))
            .collect();
        let win_table = win_table(&config.methods, &per_run);
        let failures = per_run.iter().filter(|r| !r.is_ok()).count();
        Self {
            config,
            per_run,
            summary,
            win_table,
            failures,
        }
    }

    pub fn summary_for(&self, method: Method) -> Option<&MethodSummary> {
        self.summary.iter().find(|s| s.method == method)
    }

    pub fn win(&self, challenger: Method, baseline: Method) -> Option<&WinEntry> {
        self.win_table
            .iter()
            .find(|w| w.challenger == challenger && w.baseline == baseline)
    }

    pub fn boxplot(&self) -> Vec<BoxplotRow> {
        self.config
            .methods
            .iter()
            .map(|&m| boxplot_row(m, self.per_run.iter().filter(|r| r.method == m && r.is_ok()).map(|r| r.mse_val)))
            .collect()
    }
}

/// All methods of `cfg` on one run's dataset, sharing one CV problem.
pub fn run_single(cfg: &ExperimentConfig, system: &SystemSpec, run_index: usize) -> Vec<RunRecord> {
    let data = make_dataset_for(cfg, system, run_index);
    let options = IdentifyOptions::from_config(cfg);
    let u_val = generate_white_gaussian(cfg.n_val, validation_seed(cfg, run_index), 1.0);
    let y_val = system.filter_signal(&u_val);
    let mut cache = None;
    let mut methods = cfg.methods.clone();
    methods.sort_unstable();
    methods.dedup();
    methods
        .into_iter()
        .map(|method| match identify_cached(&data, cfg.n, method, &options, &mut cache) {
            Ok(id) => {
                let yhat = simulate_fir(&id.estimate.theta, &u_val);
                let mse_val = y_val.iter().zip(&yhat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / cfg.n_val as f64;
                RunRecord {
                    run_index,
                    method,
                    mse_val,
                    hyperparameters: id.estimate.hyperparameters,
                    error: None,
                }
            }
            Err(e) => RunRecord {
                run_index,
                method,
                mse_val: f64::NAN,
                hyperparameters: Hyperparameters::None,
                error: Some(e.to_string()),
            },
        })
        .collect()
}

/// Paired Monte Carlo benchmark: every method sees the same dataset within a
/// run, runs are spread over the rayon pool, and rows are sorted by
/// `(run_index, method)` so the report does not depend on scheduling.
pub fn run_benchmark(cfg: &ExperimentConfig) -> Result<McReport> {
    cfg.validate()?;
    let system = cfg.system.resolve()?;
    let rows: Vec<RunRecord> = (0..cfg.runs)
        .into_par_iter()
        .flat_map_iter(|run| run_single(cfg, &system, run))
        .collect();
    Ok(McReport::from_rows(cfg.clone(), rows))
}

/// Column order of `per_run.csv`.
pub const PER_RUN_HEADER: [&str; 5] = ["run_index", "method", "mse_val", "hyperparameters", "error"];
/// Column order of `summary` rows in `summary.json` and of `win_table.csv`.
pub const WIN_TABLE_HEADER: [&str; 5] = ["challenger", "baseline", "wins", "paired_runs", "percent"];
/// Column order of `boxplot.csv`; outliers are `;`-separated.
pub const BOXPLOT_HEADER: [&str; 7] = ["method", "q1", "median", "q3", "whisker_low", "whisker_high", "outliers"];

/// Full-precision scientific rendering used in every CSV.
pub fn format_float(v: f64) -> String {
    format!("{v:e}")
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Format {
            context: path.display().to_string(),
            message: format!("{other:?}"),
        },
    }
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for r in rows {
        w.write_record(&r).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    generated_unix_seconds: u64,
    quantiles: &'static str,
    baselines: &'static str,
    config: &'a ExperimentConfig,
    summary: &'a [MethodSummary],
    win_table: &'a [WinEntry],
    failures: usize,
}

/// Write `per_run.csv`, `summary.json`, `win_table.csv` and `boxplot.csv` into `dir`.
pub fn export_report(report: &McReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_csv(
        &dir.join("per_run.csv"),
        &PER_RUN_HEADER,
        report.per_run.iter().map(|r| {
            vec![
                r.run_index.to_string(),
                r.method.to_string(),
                format_float(r.mse_val),
                r.hyperparameters.summary(),
                r.error.clone().unwrap_or_default(),
            ]
        }),
    )?;
    write_csv(
        &dir.join("win_table.csv"),
        &WIN_TABLE_HEADER,
        report.win_table.iter().map(|w| {
            vec![
                w.challenger.to_string(),
                w.baseline.to_string(),
                w.wins.to_string(),
                w.paired_runs.to_string(),
                format_float(w.percent),
            ]
        }),
    )?;
    write_csv(
        &dir.join("boxplot.csv"),
        &BOXPLOT_HEADER,
        report.boxplot().into_iter().map(|b| {
            vec![
                b.method.to_string(),
                format_float(b.q1),
                format_float(b.median),
                format_float(b.q3),
                format_float(b.whisker_low),
                format_float(b.whisker_high),
                b.outliers.iter().map(|v| format_float(*v)).collect::<Vec<_>>().join(";"),
            ]
        }),
    )?;
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let summary = SummaryFile {
        generated_unix_seconds: stamp,
        quantiles: "linear interpolation between order statistics, h = (n - 1) q",
        baselines: "tc and dc are cross-validated re-implementations, not toolbox results",
        config: &report.config,
        summary: &report.summary,
        win_table: &report.win_table,
        failures: report.failures,
    };
    let path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&summary)?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

/// `(run_index, method, mse_val)` triples from an exported `per_run.csv`.
pub fn read_per_run_csv(path: &Path) -> Result<Vec<(usize, Method, f64)>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let bad = |message: String| Error::Format {
        context: path.display().to_string(),
        message,
    };
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let run = rec
            .get(0)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(format!("bad run_index in {rec:?}")))?;
        let method: Method = rec.get(1).unwrap_or("").parse()?;
        let mse = rec
            .get(2)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(format!("bad mse_val in {rec:?}")))?;
        out.push((run, method, mse));
    }
    Ok(out)
}
