use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    acceleration_error_modules, fit_forward_direct, fit_inverse_ensemble, forward_inputs, inverse_rmse, median,
    Estimator, ExperimentConfig, JointStats, RmseReport,
};
use crate::gp::TrainLog;
use crate::inv2fwd::{BatchDiagnostics, Inverse2Forward};
use crate::kernels::{InputLayout, KernelSpec};
use crate::rbd::{JointVector, RobotModel};
use crate::trajgen::{generate_dataset, Dataset};
use crate::{Error, Result, CODE_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Dof,
    DataEfficiency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub dof: usize,
    pub seed: u64,
    pub role: String,
    pub samples: usize,
    pub fingerprint: String,
}

/// Hyperparameter-training outcome for one joint, without wall time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub evaluations: usize,
    pub subset_points: usize,
    pub final_nll: f64,
    pub noise_std: f64,
    pub jitter: f64,
    pub hyperparameters: Vec<(String, f64)>,
}

impl From<&TrainLog> for TrainSummary {
    fn from(l: &TrainLog) -> Self {
        TrainSummary {
            evaluations: l.evaluations,
            subset_points: l.subset_points,
            final_nll: l.final_nll,
            noise_std: l.noise_std,
            jitter: l.jitter,
            hyperparameters: l.hyperparameters.clone(),
        }
    }
}

/// Result of one (estimator, DoF, seed, train size) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub estimator: Estimator,
    pub dof: usize,
    pub seed: u64,
    pub train_seconds: f64,
    pub train_samples: usize,
    pub test_samples: usize,
    pub error: Option<String>,
    /// Per-joint statistics of `|q̈ᵢ − q̈̂ᵢ|` on the test set.
    pub acceleration_error: Vec<JointStats>,
    pub inverse_rmse: Option<RmseReport>,
    pub diagnostics: Option<BatchDiagnostics>,
    pub training: Vec<TrainSummary>,
    #[serde(skip)]
    pub errors: Vec<Vec<f64>>,
    #[serde(skip)]
    pub seconds: f64,
}

/// Seed-median statistics for one (estimator, DoF, train size).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub estimator: Estimator,
    pub dof: usize,
    pub train_seconds: f64,
    pub seeds_ok: usize,
    /// Per joint: median over seeds of the per-seed median error.
    pub median_error: Vec<f64>,
    /// Median over seeds of the aggregate inverse-dynamics RMSE.
    pub inverse_rmse: Option<f64>,
    pub inverse_rmse_per_joint: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub kind: SweepKind,
    pub code_version: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub datasets: Vec<DatasetRecord>,
    pub cells: Vec<CellReport>,
    pub summary: Vec<SummaryRow>,
    pub failures: usize,
}

impl MetricsReport {
    pub fn row(&self, estimator: Estimator, dof: usize, train_seconds: Option<f64>) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| {
            r.estimator == estimator
                && r.dof == dof
                && train_seconds.is_none_or(|s| (r.train_seconds - s).abs() < 1e-9)
        })
    }
}

struct Cell<'a> {
    estimator: Estimator,
    robot: &'a RobotModel,
    seed: u64,
    train: Dataset,
    test: &'a Dataset,
}

fn evaluate(cell: &Cell, cfg: &ExperimentConfig) -> Result<(Vec<Vec<f64>>, Option<RmseReport>, Option<BatchDiagnostics>, Vec<TrainLog>)> {
    let n = cell.robot.dof();
    let truth: Vec<JointVector> = cell.test.samples.iter().map(|s| s.qdd.clone()).collect();
    let options = cfg.train_options(cell.estimator);
    match cell.estimator {
        Estimator::SeFd => {
            let kernel = KernelSpec::squared_exponential(InputLayout::forward(n));
            let (ens, logs) = fit_forward_direct(&cell.train, &kernel, &options)?;
            let pred = ens.predict(&forward_inputs(cell.test))?;
            Ok((acceleration_error_modules(&pred, &truth)?, None, None, logs))
        }
        est => {
            let (ens, logs) = fit_inverse_ensemble(&cell.train, est.family(), Some(cell.robot), &options)?;
            let rmse = inverse_rmse(&ens, cell.test)?;
            let i2f = Inverse2Forward::new(&ens, cfg.inv2fwd.clone())?;
            let queries: Vec<_> = cell
                .test
                .samples
                .iter()
                .map(|s| (s.q.clone(), s.qd.clone(), s.tau.clone()))
                .collect();
            let (out, diag) = i2f.predict_batch(&queries)?;
            let pred: Vec<JointVector> = out.into_iter().map(|(a, _)| a).collect();
            Ok((acceleration_error_modules(&pred, &truth)?, Some(rmse), Some(diag), logs))
        }
    }
}

fn run_cell(cell: &Cell, cfg: &ExperimentConfig) -> CellReport {
    let start = Instant::now();
    let mut report = CellReport {
        estimator: cell.estimator,
        dof: cell.robot.dof(),
        seed: cell.seed,
        train_seconds: cell.train.duration(),
        train_samples: cell.train.len(),
        test_samples: cell.test.len(),
        error: None,
        acceleration_error: Vec::new(),
        inverse_rmse: None,
        diagnostics: None,
        training: Vec::new(),
        errors: Vec::new(),
        seconds: 0.0,
    };
    let result = evaluate(cell, cfg).and_then(|(errors, rmse, diag, logs)| {
        let stats = errors.iter().map(|e| JointStats::of(e)).collect::<Result<Vec<_>>>()?;
        Ok((errors, stats, rmse, diag, logs))
    });
    match result {
        Ok((errors, stats, rmse, diag, logs)) => {
            report.acceleration_error = stats;
            report.inverse_rmse = rmse;
            report.diagnostics = diag;
            report.training = logs.iter().map(TrainSummary::from).collect();
            report.errors = errors;
        }
        Err(e) => {
            log::warn!(
                "{} dof={} seed={} train={}s failed: {e}",
                cell.estimator.label(),
                report.dof,
                cell.seed,
                report.train_seconds
            );
            report.error = Some(e.to_string());
        }
    }
    report.seconds = start.elapsed().as_secs_f64();
    log::info!(
        "{} dof={} seed={} train={}s done in {:.1}s",
        cell.estimator.label(),
        report.dof,
        cell.seed,
        report.train_seconds,
        report.seconds
    );
    report
}

fn summarize(cells: &[CellReport]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(Estimator, usize, u64), Vec<&CellReport>> = BTreeMap::new();
    for c in cells.iter().filter(|c| c.error.is_none()) {
        groups
            .entry((c.estimator, c.dof, c.train_seconds.to_bits()))
            .or_default()
            .push(c);
    }
    groups
        .into_iter()
        .map(|((estimator, dof, ts), group)| {
            let median_error = (0..dof)
                .map(|j| median(&group.iter().map(|c| c.acceleration_error[j].median).collect::<Vec<_>>()))
                .collect();
            let rmse: Vec<&RmseReport> = group.iter().filter_map(|c| c.inverse_rmse.as_ref()).collect();
            let (inverse_rmse, inverse_rmse_per_joint) = if rmse.is_empty() {
                (None, None)
            } else {
                (
                    Some(median(&rmse.iter().map(|r| r.aggregate).collect::<Vec<_>>())),
                    Some(
                        (0..dof)
                            .map(|j| median(&rmse.iter().map(|r| r.per_joint[j]).collect::<Vec<_>>()))
                            .collect(),
                    ),
                )
            };
            SummaryRow {
                estimator,
                dof,
                train_seconds: f64::from_bits(ts),
                seeds_ok: group.len(),
                median_error,
                inverse_rmse,
                inverse_rmse_per_joint,
            }
        })
        .collect()
}

struct Data {
    robot: RobotModel,
    seed: u64,
    train: Dataset,
    test: Dataset,
}

fn build_data(cfg: &ExperimentConfig) -> Result<(Vec<Data>, Vec<DatasetRecord>)> {
    let base = cfg.base_robot()?;
    let mut data = Vec::new();
    let mut records = Vec::new();
    for dof in cfg.dof_list(&base) {
        let robot = cfg.robot_for(&base, dof)?;
        for &seed in &cfg.seeds {
            let train = generate_dataset(&robot, &cfg.trajectory_for(&robot, seed, false)?, cfg.torque_noise_std, seed)?;
            let test_seed = seed.wrapping_add(cfg.test_seed_offset);
            let test = generate_dataset(
                &robot,
                &cfg.trajectory_for(&robot, seed, true)?,
                cfg.torque_noise_std,
                test_seed,
            )?;
            for (role, d) in [("train", &train), ("test", &test)] {
                records.push(DatasetRecord {
                    dof,
                    seed,
                    role: role.into(),
                    samples: d.len(),
                    fingerprint: d.fingerprint()?,
                });
            }
            data.push(Data {
                robot: robot.clone(),
                seed,
                train,
                test,
            });
        }
    }
    Ok((data, records))
}

fn run(cfg: &ExperimentConfig, kind: SweepKind) -> Result<MetricsReport> {
    cfg.validate()?;
    let (data, datasets) = build_data(cfg)?;
    let mut cells = Vec::new();
    for d in &data {
        let prefixes: Vec<Dataset> = match kind {
            SweepKind::Dof => vec![d.train.clone()],
            SweepKind::DataEfficiency => {
                if cfg.train_seconds.is_empty() {
                    return Err(Error::Config("data-efficiency sweep needs a train_seconds schedule".into()));
                }
                cfg.train_seconds
                    .iter()
                    .map(|&s| d.train.split(s).map(|(head, _)| head))
                    .collect::<Result<_>>()?
            }
        };
        for train in prefixes {
            for &estimator in &cfg.estimators {
                cells.push(Cell {
                    estimator,
                    robot: &d.robot,
                    seed: d.seed,
                    train: train.clone(),
                    test: &d.test,
                });
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    let reports: Vec<CellReport> = pool.install(|| cells.par_iter().map(|c| run_cell(c, cfg)).collect());
    let failures = reports.iter().filter(|c| c.error.is_some()).count();
    if failures == reports.len() {
        return Err(Error::Config(format!(
            "every sweep cell failed; first error: {}",
            reports[0].error.as_deref().unwrap_or("unknown")
        )));
    }
    Ok(MetricsReport {
        kind,
        code_version: CODE_VERSION.to_string(),
        config_hash: cfg.hash(),
        config: cfg.clone(),
        datasets,
        summary: summarize(&reports),
        cells: reports,
        failures,
    })
}

/// For every DoF and seed: generate train and test sets, fit each
/// estimator, and evaluate acceleration errors and inverse RMSE.
pub fn run_dof_sweep(cfg: &ExperimentConfig) -> Result<MetricsReport> {
    run(cfg, SweepKind::Dof)
}

/// Fit each estimator on the prefixes `train_seconds` of one training
/// trajectory and evaluate on the full test set.
pub fn run_data_efficiency(cfg: &ExperimentConfig) -> Result<MetricsReport> {
    run(cfg, SweepKind::DataEfficiency)
}

/// Write `metrics.json`, `errors_<estimator>_<dof>.csv`, `timings.json` and,
/// for data-efficiency sweeps, `curves.csv`. Returns the paths written.
pub fn write_report(report: &MetricsReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let metrics = dir.join("metrics.json");
    std::fs::write(&metrics, serde_json::to_string_pretty(report)? + "\n")?;
    written.push(metrics);

    // raw errors at the largest train size, seeds concatenated
    let seeds = &report.config.seeds;
    let mut by_file: BTreeMap<(Estimator, usize), Vec<&CellReport>> = BTreeMap::new();
    for c in report.cells.iter().filter(|c| c.error.is_none()) {
        by_file.entry((c.estimator, c.dof)).or_default().push(c);
    }
    for ((est, dof), group) in by_file {
        let largest = group.iter().map(|c| c.train_seconds).fold(f64::MIN, f64::max);
        let path = dir.join(format!("errors_{}_{}.csv", est.label(), dof));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["joint", "sample_idx", "abs_error"])?;
        for c in group.iter().filter(|c| c.train_seconds == largest) {
            let pos = seeds.iter().position(|s| *s == c.seed).unwrap_or(0);
            for (j, errs) in c.errors.iter().enumerate() {
                for (t, e) in errs.iter().enumerate() {
                    let idx = pos * c.test_samples + t;
                    w.write_record([(j + 1).to_string(), idx.to_string(), format!("{e:.16e}")])?;
                }
            }
        }
        w.flush()?;
        written.push(path);
    }

    if report.kind == SweepKind::DataEfficiency {
        let path = dir.join("curves.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["estimator", "joint", "train_seconds", "median_error"])?;
        for r in &report.summary {
            for (j, m) in r.median_error.iter().enumerate() {
                w.write_record([
                    r.estimator.label().to_string(),
                    (j + 1).to_string(),
                    format!("{}", r.train_seconds),
                    format!("{m:.16e}"),
                ])?;
            }
        }
        w.flush()?;
        written.push(path);
    }

    let mut timings = String::from("[\n");
    for (i, c) in report.cells.iter().enumerate() {
        let sep = if i + 1 < report.cells.len() { "," } else { "" };
        let _ = writeln!(
            timings,
            "  {{\"estimator\": \"{}\", \"dof\": {}, \"seed\": {}, \"train_seconds\": {}, \"seconds\": {:.3}}}{sep}",
            c.estimator.label(),
            c.dof,
            c.seed,
            c.train_seconds,
            c.seconds
        );
    }
    timings.push_str("]\n");
    let path = dir.join("timings.json");
    std::fs::write(&path, timings)?;
    written.push(path);
    Ok(written)
}
