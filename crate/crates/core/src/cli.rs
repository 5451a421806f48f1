//! `dynlearn` command line: `generate`, `fit`, `eval`, `sweep`.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration or contract
//! error, 3 unsupported model request.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::experiments::{
    acceleration_error_modules, fit_forward_direct, fit_inverse_ensemble, forward_inputs, inverse_rmse,
    run_data_efficiency, run_dof_sweep, write_report, ExperimentConfig, ForwardEnsemble, JointStats,
};
use crate::gp::{GpModel, OptimizerOptions, TrainOptions};
use crate::inv2fwd::{InertiaEstimate, Inv2FwdOptions, Inverse2Forward, InverseDynamicsEnsemble, InverseModel};
use crate::kernels::{InputLayout, KernelFamily, KernelSpec, LayoutKind};
use crate::rbd::{resolve_robot, JointVector, RobotModel};
use crate::trajgen::{generate_dataset, meta_path_for, Dataset, TrajectoryConfig};
use crate::{Error, Result, CODE_VERSION};

#[derive(Debug, Parser)]
#[command(name = "dynlearn", version, about = "Learn robot dynamics with Gaussian processes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a filtered-noise trajectory dataset from a robot model.
    Generate(GenerateArgs),
    /// Fit one GP per joint on a dataset.
    Fit(FitArgs),
    /// Evaluate fitted models (or the exact robot model) on a dataset.
    Eval(EvalArgs),
    /// Run a benchmark sweep from a TOML config.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Built-in robot name, robot file path, optionally suffixed with `@k`.
    #[arg(long)]
    pub robot: String,
    #[arg(long, default_value_t = 100.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 100.0)]
    pub rate: f64,
    #[arg(long, default_value_t = 1.0)]
    pub cutoff: f64,
    /// Per-joint position std, comma separated (default: robot file values).
    #[arg(long, value_delimiter = ',')]
    pub amplitude: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.01)]
    pub noise_std: f64,
    #[arg(long)]
    pub seed: u64,
    /// Output CSV; metadata goes to `<stem>.meta.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Se,
    Gip,
    Sp,
    Poly1,
    Poly2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Target {
    Inverse,
    Forward,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub kernel: KernelArg,
    #[arg(long, value_enum, default_value = "inverse")]
    pub target: Target,
    /// Robot kinematics for the semiparametric kernel.
    #[arg(long)]
    pub robot: Option<String>,
    #[arg(long, default_value_t = 200)]
    pub budget: usize,
    #[arg(long, default_value_t = 3)]
    pub restarts: usize,
    #[arg(long, default_value_t = 400)]
    pub subset: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Standardize inputs (SE only).
    #[arg(long)]
    pub standardize: bool,
    /// Output directory for `joint_<i>.json` and `fit_log.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalMode {
    InverseRmse,
    FdErrors,
    Components,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory written by `fit`.
    #[arg(long, conflicts_with = "oracle", required_unless_present = "oracle")]
    pub models: Option<PathBuf>,
    /// Use the exact robot model instead of learned models.
    #[arg(long)]
    pub oracle: Option<String>,
    /// Dataset (required for inverse-rmse and fd-errors).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: EvalMode,
    /// Configuration for `components`, comma separated; repeatable.
    #[arg(long = "q", value_delimiter = ',', num_args = 1, action = clap::ArgAction::Append)]
    pub q: Vec<f64>,
    /// Velocity for `components` (default zero), comma separated.
    #[arg(long, value_delimiter = ',')]
    pub qd: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1.0)]
    pub probe: f64,
    #[arg(long)]
    pub no_symmetrize: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepKindArg {
    Dof,
    DataEfficiency,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_enum)]
    pub kind: SweepKindArg,
    #[arg(long)]
    pub out: PathBuf,
    /// Allow writing into an existing output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    arguments: Vec<String>,
    config_path: Option<String>,
    config_hash: Option<String>,
    started_unix: f64,
    finished_unix: f64,
    code_version: &'a str,
    outputs: Vec<String>,
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Write JSON via a temporary file and rename.
fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, serde_json::to_string_pretty(value)? + "\n")?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn write_manifest(
    path: &Path,
    command: &str,
    config: Option<&Path>,
    started: f64,
    outputs: &[PathBuf],
) -> Result<()> {
    let config_hash = match config {
        Some(p) => Some(sha256_hex(&std::fs::read(p)?)),
        None => None,
    };
    let m = RunManifest {
        command,
        arguments: std::env::args().skip(1).collect(),
        config_path: config.map(|p| p.display().to_string()),
        config_hash,
        started_unix: started,
        finished_unix: unix_now(),
        code_version: CODE_VERSION,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    write_json_atomic(path, &m)
}

fn generate(a: &GenerateArgs) -> Result<()> {
    let started = unix_now();
    let robot = resolve_robot(&a.robot)?;
    let cfg = TrajectoryConfig {
        duration: a.duration,
        rate: a.rate,
        cutoff: a.cutoff,
        amplitude: a.amplitude.clone().unwrap_or_else(|| robot.amplitudes()),
        seed: a.seed,
    };
    let data = generate_dataset(&robot, &cfg, a.noise_std, a.seed)?;
    if let Some(dir) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    data.write(&a.out)?;
    let outputs = vec![a.out.clone(), meta_path_for(&a.out)];
    write_manifest(&a.out.with_extension("manifest.json"), "generate", None, started, &outputs)?;
    println!("wrote {} samples to {}", data.len(), a.out.display());
    Ok(())
}

fn fit(a: &FitArgs) -> Result<()> {
    let started = unix_now();
    let t0 = Instant::now();
    let data = Dataset::read(&a.data)?;
    let n = data.dof();
    let options = TrainOptions {
        optimizer: OptimizerOptions {
            budget: a.budget,
            restarts: a.restarts,
            seed: a.seed,
            ..Default::default()
        },
        subset: a.subset,
        standardize: a.standardize,
        ..Default::default()
    };
    let family = match a.kernel {
        KernelArg::Se => KernelFamily::SquaredExponential,
        KernelArg::Gip => KernelFamily::Gip,
        KernelArg::Sp => KernelFamily::Semiparametric,
        KernelArg::Poly1 => KernelFamily::Polynomial { degree: 1 },
        KernelArg::Poly2 => KernelFamily::Polynomial { degree: 2 },
    };
    let robot = a.robot.as_deref().map(resolve_robot).transpose()?;
    let (outputs, logs) = match a.target {
        Target::Inverse => {
            let (ens, logs) = fit_inverse_ensemble(&data, family, robot.as_ref(), &options)?;
            (ens.save(&a.out)?, logs)
        }
        Target::Forward => {
            let kernel = match family {
                KernelFamily::SquaredExponential => KernelSpec::squared_exponential(InputLayout::forward(n)),
                KernelFamily::Polynomial { degree } => KernelSpec::polynomial(InputLayout::forward(n), degree)?,
                KernelFamily::Gip => KernelSpec::gip(data.joint_kinds()),
                KernelFamily::Semiparametric => match &robot {
                    Some(r) => KernelSpec::semiparametric(r, 0)?,
                    None => KernelSpec::gip(data.joint_kinds()),
                },
            };
            let (ens, logs) = fit_forward_direct(&data, &kernel, &options)?;
            (ens.save(&a.out)?, logs)
        }
    };
    let log_path = a.out.join("fit_log.json");
    #[derive(Serialize)]
    struct FitLog<'a> {
        dataset: String,
        dataset_fingerprint: String,
        target: &'a str,
        wall_seconds: f64,
        joints: &'a [crate::gp::TrainLog],
    }
    write_json_atomic(
        &log_path,
        &FitLog {
            dataset: a.data.display().to_string(),
            dataset_fingerprint: data.fingerprint()?,
            target: match a.target {
                Target::Inverse => "inverse",
                Target::Forward => "forward",
            },
            wall_seconds: t0.elapsed().as_secs_f64(),
            joints: &logs,
        },
    )?;
    let mut all = outputs;
    all.push(log_path);
    write_manifest(&a.out.join("manifest.json"), "fit", None, started, &all)?;
    for (i, l) in logs.iter().enumerate() {
        println!("joint {}: nll {:.6} noise_std {:.3e}", i + 1, l.final_nll, l.noise_std);
    }
    Ok(())
}

/// Learned models loaded from a `fit` directory.
enum Loaded {
    Inverse(InverseDynamicsEnsemble),
    Forward(ForwardEnsemble),
}

fn load_models(dir: &Path) -> Result<Loaded> {
    let first = GpModel::load(&InverseDynamicsEnsemble::model_path(dir, 0))?;
    match first.layout().kind {
        LayoutKind::Inverse => Ok(Loaded::Inverse(InverseDynamicsEnsemble::load(dir)?)),
        LayoutKind::Forward => {
            let mut models = Vec::new();
            while InverseDynamicsEnsemble::model_path(dir, models.len()).exists() {
                models.push(GpModel::load(&InverseDynamicsEnsemble::model_path(dir, models.len()))?);
            }
            Ok(Loaded::Forward(ForwardEnsemble::new(models)?))
        }
    }
}

fn require_data(a: &EvalArgs) -> Result<Dataset> {
    let path = a
        .data
        .as_ref()
        .ok_or_else(|| Error::Config("--data is required for this mode".into()))?;
    Dataset::read(path)
}

fn check_dof(model: usize, data: usize) -> Result<()> {
    if model != data {
        return Err(Error::dim("dataset joints (models have a different DoF)", model, data));
    }
    Ok(())
}

#[derive(Serialize)]
struct ComponentsRecord {
    q: Vec<f64>,
    qd: Vec<f64>,
    b_hat: Vec<Vec<f64>>,
    b_raw: Vec<Vec<f64>>,
    g_hat: Vec<f64>,
    n_hat: Vec<f64>,
    symmetrized: bool,
    regularization_added: f64,
    asymmetry: f64,
    raw_eigenvalues: Vec<f64>,
}

fn rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn components_record(e: &InertiaEstimate, q: &JointVector, qd: &JointVector, n_hat: &JointVector) -> ComponentsRecord {
    ComponentsRecord {
        q: q.iter().copied().collect(),
        qd: qd.iter().copied().collect(),
        b_hat: rows(&e.b_hat),
        b_raw: rows(&e.raw),
        g_hat: e.g_hat.iter().copied().collect(),
        n_hat: n_hat.iter().copied().collect(),
        symmetrized: e.symmetrized,
        regularization_added: e.regularization_added,
        asymmetry: e.asymmetry,
        raw_eigenvalues: e.raw_eigenvalues.clone(),
    }
}

fn eval_inverse_model<M: InverseModel>(model: &M, a: &EvalArgs, options: &Inv2FwdOptions) -> Result<Vec<PathBuf>> {
    let n = model.dof();
    let mut written = Vec::new();
    match a.mode {
        EvalMode::InverseRmse => {
            let data = require_data(a)?;
            check_dof(n, data.dof())?;
            let r = inverse_rmse(model, &data)?;
            let p = a.out.join("inverse_rmse.json");
            write_json_atomic(&p, &r)?;
            println!("inverse RMSE {:.6e} N·m (per joint {:?})", r.aggregate, r.per_joint);
            written.push(p);
        }
        EvalMode::FdErrors => {
            let data = require_data(a)?;
            check_dof(n, data.dof())?;
            let i2f = Inverse2Forward::new(model, options.clone())?;
            let queries: Vec<_> = data
                .samples
                .iter()
                .map(|s| (s.q.clone(), s.qd.clone(), s.tau.clone()))
                .collect();
            let (out, diag) = i2f.predict_batch(&queries)?;
            let pred: Vec<JointVector> = out.into_iter().map(|(acc, _)| acc).collect();
            let truth: Vec<JointVector> = data.samples.iter().map(|s| s.qdd.clone()).collect();
            written.extend(write_fd_errors(&a.out, &pred, &truth, Some(&diag))?);
        }
        EvalMode::Components => {
            if a.q.is_empty() || a.q.len() % n != 0 {
                return Err(Error::Config(format!(
                    "components mode needs --q with a multiple of {n} values, got {}",
                    a.q.len()
                )));
            }
            let qd = match &a.qd {
                Some(v) if v.len() == n => JointVector::from_column_slice(v),
                Some(v) => return Err(Error::dim("--qd", n, v.len())),
                None => JointVector::zeros(n),
            };
            let queries: Vec<_> = a
                .q
                .chunks(n)
                .map(|c| (JointVector::from_column_slice(c), qd.clone(), JointVector::zeros(n)))
                .collect();
            let i2f = Inverse2Forward::new(model, options.clone())?;
            let (out, diag) = i2f.predict_batch(&queries)?;
            let records: Vec<ComponentsRecord> = out
                .iter()
                .map(|(_, c)| components_record(&c.inertia, &c.q, &c.qd, &c.n_hat))
                .collect();
            #[derive(Serialize)]
            struct Components<'a> {
                points: &'a [ComponentsRecord],
                diagnostics: &'a crate::inv2fwd::BatchDiagnostics,
            }
            let p = a.out.join("components.json");
            write_json_atomic(
                &p,
                &Components {
                    points: &records,
                    diagnostics: &diag,
                },
            )?;
            for r in &records {
                println!("q={:?}: B̂={:?} ĝ={:?}", r.q, r.b_hat, r.g_hat);
            }
            written.push(p);
        }
    }
    Ok(written)
}

fn write_fd_errors(
    dir: &Path,
    pred: &[JointVector],
    truth: &[JointVector],
    diag: Option<&crate::inv2fwd::BatchDiagnostics>,
) -> Result<Vec<PathBuf>> {
    let errors = acceleration_error_modules(pred, truth)?;
    let stats: Vec<JointStats> = errors.iter().map(|e| JointStats::of(e)).collect::<Result<_>>()?;
    let csv_path = dir.join("errors.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["joint", "sample_idx", "abs_error"])?;
    for (j, errs) in errors.iter().enumerate() {
        for (t, e) in errs.iter().enumerate() {
            w.write_record([(j + 1).to_string(), t.to_string(), format!("{e:.16e}")])?;
        }
    }
    w.flush()?;
    #[derive(Serialize)]
    struct FdErrors<'a> {
        per_joint: &'a [JointStats],
        max_abs_error: f64,
        diagnostics: Option<&'a crate::inv2fwd::BatchDiagnostics>,
    }
    let max = errors.iter().flatten().fold(0.0f64, |m, v| m.max(*v));
    let p = dir.join("fd_errors.json");
    write_json_atomic(
        &p,
        &FdErrors {
            per_joint: &stats,
            max_abs_error: max,
            diagnostics: diag,
        },
    )?;
    println!(
        "median |q̈ error| per joint {:?}, max {max:.3e}",
        stats.iter().map(|s| s.median).collect::<Vec<_>>()
    );
    Ok(vec![csv_path, p])
}

fn eval(a: &EvalArgs) -> Result<()> {
    let started = unix_now();
    std::fs::create_dir_all(&a.out)?;
    let options = Inv2FwdOptions {
        probe: a.probe,
        symmetrize: !a.no_symmetrize,
        ..Default::default()
    };
    let written = if let Some(r) = &a.oracle {
        let robot: RobotModel = resolve_robot(r)?;
        eval_inverse_model(&robot, a, &options)?
    } else {
        let dir = a.models.as_ref().expect("clap requires --models or --oracle");
        match load_models(dir)? {
            Loaded::Inverse(ens) => eval_inverse_model(&ens, a, &options)?,
            Loaded::Forward(ens) => {
                if a.mode != EvalMode::FdErrors {
                    return Err(Error::Unsupported(
                        "forward-dynamics models only support --mode fd-errors".into(),
                    ));
                }
                let data = require_data(a)?;
                check_dof(ens.dof(), data.dof())?;
                let pred = ens.predict(&forward_inputs(&data))?;
                let truth: Vec<JointVector> = data.samples.iter().map(|s| s.qdd.clone()).collect();
                write_fd_errors(&a.out, &pred, &truth, None)?
            }
        }
    };
    write_manifest(&a.out.join("manifest.json"), "eval", None, started, &written)
}

fn sweep(a: &SweepArgs) -> Result<()> {
    let started = unix_now();
    if a.out.exists() && !a.force {
        return Err(Error::Config(format!(
            "output directory {} exists; pass --force to overwrite",
            a.out.display()
        )));
    }
    let cfg = ExperimentConfig::read(&a.config)?;
    let report = match a.kind {
        SweepKindArg::Dof => run_dof_sweep(&cfg)?,
        SweepKindArg::DataEfficiency => run_data_efficiency(&cfg)?,
    };
    let written = write_report(&report, &a.out)?;
    write_manifest(&a.out.join("manifest.json"), "sweep", Some(&a.config), started, &written)?;
    if report.failures > 0 {
        eprintln!(
            "warning: {} of {} cells failed; see metrics.json",
            report.failures,
            report.cells.len()
        );
    }
    for r in &report.summary {
        println!(
            "{:<6} dof={} train={}s median |q̈ error| {:?} inverse RMSE {:?}",
            r.estimator.label(),
            r.dof,
            r.train_seconds,
            r.median_error,
            r.inverse_rmse
        );
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Fit(a) => fit(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
    }
}

/// Parse arguments, run, and map errors to exit codes.
pub fn main_with_args() -> i32 {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
