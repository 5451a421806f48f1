//! Acceptance suite. Runs without the libtest harness so that one
//! `PASS`/`FAIL` line per criterion is always printed; exits nonzero if any
//! criterion fails.

mod common;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use common::{max_abs, random_state, rng, uniform, Planar2ClosedForm};
use dynlearn::experiments::{fit_inverse_ensemble, inverse_rmse, Estimator, MetricsReport};
use dynlearn::gp::{neg_log_marginal_likelihood, nll_with_gradient, optimize_hyperparameters, GpModel, OptimizerOptions};
use dynlearn::inv2fwd::{estimate_bias, estimate_gravity, estimate_inertia, predict_acceleration, Inv2FwdOptions};
use dynlearn::kernels::{InputLayout, KernelFamily, KernelSpec};
use dynlearn::rbd::{
    bias_torque, builtin, builtin_names, forward_dynamics, gravity_torque, inertia_from_upper, inverse_dynamics,
    mass_matrix, regressor, JointKind, RobotModel, PARAMS_PER_LINK,
};
use dynlearn::trajgen::{generate_dataset, TrajectoryConfig};
use nalgebra::{DVector, Matrix3, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: String) -> Outcome {
    Outcome { ok, detail }
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> Outcome {
    let t = Instant::now();
    let mut o = f();
    let took = t.elapsed();
    o.detail = format!("{}; {:.1}s", o.detail, took.as_secs_f64());
    if let Some(limit) = limit {
        if took > limit {
            o.ok = false;
            o.detail = format!("{} exceeds {}s", o.detail, limit.as_secs());
        }
    }
    o
}

fn robots() -> Vec<RobotModel> {
    builtin_names().map(|n| builtin(n).unwrap()).collect()
}

fn oracle_correctness() -> Outcome {
    let robot = builtin("planar2").unwrap();
    let mut r = rng(101);
    let (mut closed, mut round) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let (q, qd, qdd) = random_state(&mut r, 2);
        let tau = inverse_dynamics(&robot, &q, &qd, &qdd).unwrap();
        let want = Planar2ClosedForm::torque(q.as_slice(), qd.as_slice(), qdd.as_slice());
        closed = closed.max(max_abs(&(&tau - want)));
        let back = forward_dynamics(&robot, &q, &qd, &tau).unwrap();
        round = round.max(max_abs(&(back - qdd)));
    }
    outcome(
        closed <= 1e-9 && round <= 1e-9,
        format!("closed-form {closed:.2e}, FD∘ID {round:.2e}"),
    )
}

fn decomposition() -> Outcome {
    let mut r = rng(102);
    let mut worst = 0.0f64;
    for robot in robots() {
        for _ in 0..200 {
            let (q, qd, qdd) = random_state(&mut r, robot.dof());
            let tau = inverse_dynamics(&robot, &q, &qd, &qdd).unwrap();
            let split = mass_matrix(&robot, &q).unwrap() * &qdd + bias_torque(&robot, &q, &qd).unwrap();
            worst = worst.max(max_abs(&(tau - split)));
        }
    }
    outcome(worst <= 1e-9, format!("max |ID − Bq̈ − n| {worst:.2e}"))
}

fn oracle_plug() -> Outcome {
    let robot = builtin("spatial3").unwrap();
    let opts = Inv2FwdOptions {
        symmetrize: false,
        ..Default::default()
    };
    let mut r = rng(103);
    let (mut g_err, mut b_err, mut n_err, mut a_err) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let (q, qd, _) = random_state(&mut r, 3);
        let tau = uniform(&mut r, 3, 5.0);
        g_err = g_err.max(max_abs(&(estimate_gravity(&robot, &q).unwrap() - gravity_torque(&robot, &q).unwrap())));
        let b = estimate_inertia(&robot, &q, &opts).unwrap();
        b_err = b_err.max((&b.b_hat - mass_matrix(&robot, &q).unwrap()).amax());
        n_err = n_err.max(max_abs(&(estimate_bias(&robot, &q, &qd).unwrap() - bias_torque(&robot, &q, &qd).unwrap())));
        let (acc, _) = predict_acceleration(&robot, &q, &qd, &tau, &opts).unwrap();
        a_err = a_err.max(max_abs(&(acc - forward_dynamics(&robot, &q, &qd, &tau).unwrap())));
    }
    let worst = g_err.max(b_err).max(n_err).max(a_err);
    outcome(
        worst <= 1e-8,
        format!("ĝ {g_err:.1e}, B̂ {b_err:.1e}, n̂ {n_err:.1e}, q̈ {a_err:.1e}"),
    )
}

fn random_link_parameters(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(n * PARAMS_PER_LINK);
    for _ in 0..n {
        let m: f64 = r.random_range(0.2..3.0);
        let c = uniform(r, 3, 0.5);
        let a = Matrix3::from_fn(|_, _| r.random_range(-0.3..0.3));
        let ic = a * a.transpose() + Matrix3::identity() * 0.01;
        let io = ic + m * (c.dot(&c) * Matrix3::identity() - &c * c.transpose());
        w.extend([m, m * c[0], m * c[1], m * c[2]]);
        w.extend([io[(0, 0)], io[(0, 1)], io[(0, 2)], io[(1, 1)], io[(1, 2)], io[(2, 2)]]);
    }
    w
}

fn with_link_parameters(robot: &RobotModel, w: &[f64]) -> RobotModel {
    let mut m = robot.clone();
    for (i, link) in m.links.iter_mut().enumerate() {
        let p = &w[i * PARAMS_PER_LINK..(i + 1) * PARAMS_PER_LINK];
        let com = Vector3::new(p[1], p[2], p[3]) / p[0];
        let io = inertia_from_upper([p[4], p[5], p[6], p[7], p[8], p[9]]);
        link.mass = p[0];
        link.com = com;
        link.inertia_com = io - p[0] * (com.dot(&com) * Matrix3::identity() - com * com.transpose());
    }
    m
}

fn regressor_linearity() -> Outcome {
    let mut r = rng(104);
    let mut worst = 0.0f64;
    for robot in robots() {
        let n = robot.dof();
        let (q, qd, qdd) = random_state(&mut r, n);
        let phi = regressor(&robot, &q, &qd, &qdd).unwrap();
        for _ in 0..20 {
            let w = random_link_parameters(&mut r, n);
            let tau = inverse_dynamics(&with_link_parameters(&robot, &w), &q, &qd, &qdd).unwrap();
            worst = worst.max(max_abs(&(&phi * DVector::from_vec(w) - tau)));
        }
    }
    outcome(worst <= 1e-9, format!("max |Φw − ID| {worst:.2e}"))
}

fn dataset(robot: &RobotModel, seconds: f64, rate: f64, noise: f64, seed: u64) -> dynlearn::trajgen::Dataset {
    let mut c = TrajectoryConfig::for_robot(robot, seed);
    c.duration = seconds;
    c.rate = rate;
    generate_dataset(robot, &c, noise, seed).unwrap()
}

fn gip_containment() -> Outcome {
    let robot = builtin("planar2").unwrap();
    let train = dataset(&robot, 100.0, 10.0, 0.0, 105);
    let test = dataset(&robot, 50.0, 10.0, 0.0, 106);
    let (ens, _) = fit_inverse_ensemble(&train, KernelFamily::Gip, None, &Default::default()).unwrap();
    let rmse = inverse_rmse(&ens, &test).unwrap();
    outcome(
        train.len() == 1000 && rmse.aggregate <= 1e-3,
        format!("N = {}, held-out RMSE {:.2e} N·m", train.len(), rmse.aggregate),
    )
}

fn cli_sweep(config: &Path, kind: &str, out: &Path) -> Result<MetricsReport, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_dynlearn"))
        .args(["sweep", "--kind", kind, "--force", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(String::from_utf8_lossy(&o.stderr).into_owned());
    }
    let text = std::fs::read_to_string(out.join("metrics.json")).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn summary(report: &MetricsReport, est: Estimator, dof: usize, seconds: Option<f64>) -> Result<Vec<f64>, String> {
    report
        .row(est, dof, seconds)
        .filter(|r| r.seeds_ok == report.config.seeds.len())
        .map(|r| r.median_error.clone())
        .ok_or_else(|| format!("{} at {dof} DoF missing or has failed seeds", est.label()))
}

fn inverse_rmse_trend(report: &MetricsReport) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for dof in [2, 3] {
        let rmse = |e| {
            report
                .row(e, dof, None)
                .filter(|r| r.seeds_ok == report.config.seeds.len())
                .and_then(|r| r.inverse_rmse)
        };
        match (rmse(Estimator::Gip), rmse(Estimator::Se)) {
            (Some(g), Some(s)) => {
                ok &= g < s;
                parts.push(format!("{dof} DoF GIP {g:.4} vs SE {s:.4}"));
            }
            _ => {
                ok = false;
                parts.push(format!("{dof} DoF missing"));
            }
        }
    }
    outcome(ok, parts.join(", "))
}

fn acceleration_trend(report: &MetricsReport) -> Outcome {
    let get = |e, d| summary(report, e, d, None);
    let three = (get(Estimator::Gip, 3), get(Estimator::Se, 3), get(Estimator::SeFd, 3));
    let two = (get(Estimator::Se, 2), get(Estimator::SeFd, 2));
    let (Ok(g3), Ok(s3), Ok(f3)) = three else {
        return outcome(false, "3 DoF rows missing".into());
    };
    let (Ok(s2), Ok(f2)) = two else {
        return outcome(false, "2 DoF rows missing".into());
    };
    let ordered = (0..3).filter(|&j| g3[j] <= s3[j] && s3[j] <= f3[j]).count();
    let ratios: Vec<f64> = s2.iter().zip(&f2).map(|(a, b)| a.max(*b) / a.min(*b)).collect();
    let similar = ratios.iter().all(|&r| r <= 2.0);
    outcome(
        ordered >= 2 && similar,
        format!(
            "3 DoF GIP ≤ SE ≤ SE_FD on {ordered}/3 joints (GIP {g3:.3?}, SE {s3:.3?}, SE_FD {f3:.3?}); \
             2 DoF SE/SE_FD ratios {ratios:.2?}"
        ),
    )
}

fn data_efficiency(report: &MetricsReport) -> Outcome {
    let (Ok(g30), Ok(s100)) = (
        summary(report, Estimator::Gip, 3, Some(30.0)),
        summary(report, Estimator::Se, 3, Some(100.0)),
    ) else {
        return outcome(false, "rows missing".into());
    };
    let n_max = report.datasets.iter().map(|d| d.samples).max().unwrap_or(0);
    let better = g30.iter().zip(&s100).filter(|(g, s)| g <= s).count();
    outcome(
        2 * better > g30.len() && n_max <= 2000,
        format!("GIP@30s ≤ SE@100s on {better}/{} joints (GIP {g30:.3?}, SE {s100:.3?}), N ≤ {n_max}", g30.len()),
    )
}

fn gp_properties() -> Outcome {
    let mut r = rng(109);
    let mut notes = Vec::new();
    let mut ok = true;

    let se = KernelSpec::squared_exponential(InputLayout::inverse(2));
    let x: Vec<Vec<f64>> = (0..20).map(|_| (0..6).map(|_| r.random_range(-1.5..1.5)).collect()).collect();
    let y: Vec<f64> = (0..20).map(|_| r.random_range(-2.0..2.0)).collect();
    let ymax = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let m = GpModel::fit(&x, &y, &se, 0.0).unwrap();
    let interp = x.iter().zip(&y).map(|(xi, yi)| (m.predict(xi).unwrap() - yi).abs()).fold(0.0, f64::max);
    ok &= interp <= 1e-8 * ymax;
    notes.push(format!("interpolation {:.1e}·‖y‖∞", interp / ymax));

    let robot = builtin("spatial3").unwrap().lock_after(2).unwrap();
    let families = [
        se.clone(),
        KernelSpec::polynomial(InputLayout::inverse(2), 2).unwrap(),
        KernelSpec::gip(&[JointKind::Revolute, JointKind::Revolute]),
        KernelSpec::semiparametric(&robot, 0).unwrap(),
    ];
    let mut lin = 0.0f64;
    let mut grad_err = 0.0f64;
    for k in &families {
        let log: Vec<f64> = (0..k.n_params()).map(|_| r.random_range(-0.4..0.4)).collect();
        let k = k.with_log_params(&log);
        let x: Vec<Vec<f64>> = (0..20).map(|_| (0..6).map(|_| r.random_range(-1.5..1.5)).collect()).collect();
        let y1: Vec<f64> = (0..20).map(|_| r.random_range(-1.0..1.0)).collect();
        let y2: Vec<f64> = (0..20).map(|_| r.random_range(-1.0..1.0)).collect();
        let sum: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| a + b).collect();
        let p = |y: &[f64]| GpModel::fit(&x, y, &k, 0.1).unwrap().predict_many(&x[..5]).unwrap();
        let (p1, p2, ps) = (p(&y1), p(&y2), p(&sum));
        for i in 0..5 {
            lin = lin.max((ps[i] - p1[i] - p2[i]).abs() / (1.0 + ps[i].abs()));
        }

        let noise = 0.3;
        let (_, grad) = nll_with_gradient(&x, &y1, &k, noise).unwrap();
        let mut full = k.params().log_values.clone();
        full.push(noise.ln());
        let f = |l: &[f64]| {
            let (kl, s) = l.split_at(l.len() - 1);
            neg_log_marginal_likelihood(&x, &y1, &k.with_log_params(kl), s[0].exp()).unwrap()
        };
        let frozen = &k.params().frozen;
        for i in (0..full.len()).filter(|&i| i >= frozen.len() || !frozen[i]) {
            let h = 1e-5;
            let (mut up, mut dn) = (full.clone(), full.clone());
            up[i] += h;
            dn[i] -= h;
            let fd = (f(&up) - f(&dn)) / (2.0 * h);
            grad_err = grad_err.max((fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-3));
        }
    }
    ok &= lin <= 1e-10 && grad_err <= 1e-4;
    notes.push(format!("linearity {lin:.1e}"));
    notes.push(format!("gradient rel. {grad_err:.1e}"));

    let mut monotone = true;
    for seed in 0..10 {
        let x: Vec<Vec<f64>> = (0..25).map(|_| (0..3).map(|_| r.random_range(-2.0..2.0)).collect()).collect();
        let y: Vec<f64> = x.iter().map(|p| p[0].sin() + 0.1 * p[1]).collect();
        let opts = OptimizerOptions {
            budget: 40,
            restarts: 2,
            seed,
            ..Default::default()
        };
        let k = KernelSpec::squared_exponential(InputLayout::inverse(1));
        let res = optimize_hyperparameters(&x, &y, &k, 0.1, &opts).unwrap();
        monotone &= res.trace.windows(2).all(|w| w[1] <= w[0]);
    }
    ok &= monotone;
    notes.push(format!("best-so-far monotone {monotone}"));
    outcome(ok, notes.join(", "))
}

fn same_bytes(a: &Path, b: &Path) -> Result<usize, String> {
    let mut names: Vec<_> = std::fs::read_dir(a)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.file_name()))
        .filter(|n| n != "manifest.json" && n != "timings.json")
        .collect();
    names.sort();
    for n in &names {
        let (x, y) = (std::fs::read(a.join(n)), std::fs::read(b.join(n)));
        match (x, y) {
            (Ok(x), Ok(y)) if x == y => {}
            _ => return Err(format!("{} differs", n.to_string_lossy())),
        }
    }
    Ok(names.len())
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    if args.iter().any(|a| !a.starts_with('-') && !"acceptance".contains(a.as_str())) {
        return;
    }

    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut report = |id: usize, name: &'static str, o: Outcome| {
        println!("{} criterion {id} ({name}): {}", if o.ok { "PASS" } else { "FAIL" }, o.detail);
        results.push((id, name, o));
    };

    report(1, "oracle correctness", timed(Some(Duration::from_secs(5)), oracle_correctness));
    report(2, "inertia/bias decomposition", timed(None, decomposition));
    report(3, "inverse-to-forward exactness", timed(Some(Duration::from_secs(10)), oracle_plug));
    report(4, "regressor linearity", timed(None, regressor_linearity));
    report(5, "GIP containment", timed(Some(Duration::from_secs(180)), gip_containment));

    let work = tempfile::tempdir().unwrap();
    let dof_cfg = config("acceptance_dof.toml");
    let de_cfg = config("acceptance_data_efficiency.toml");
    let t = Instant::now();
    let dof = cli_sweep(&dof_cfg, "dof", &work.path().join("dof_a"));
    let dof_time = t.elapsed();
    match &dof {
        Ok(m) => {
            let mut o = inverse_rmse_trend(m);
            o.detail = format!("{}; {:.1}s", o.detail, dof_time.as_secs_f64());
            if dof_time > Duration::from_secs(20 * 60) {
                o.ok = false;
                o.detail += " exceeds 1200s";
            }
            report(6, "inverse RMSE trend", o);
            report(7, "acceleration error trend", acceleration_trend(m));
        }
        Err(e) => {
            report(6, "inverse RMSE trend", outcome(false, e.clone()));
            report(7, "acceleration error trend", outcome(false, e.clone()));
        }
    }
    let de = timed(Some(Duration::from_secs(45 * 60)), || {
        match cli_sweep(&de_cfg, "data-efficiency", &work.path().join("de_a")) {
            Ok(m) => data_efficiency(&m),
            Err(e) => outcome(false, e),
        }
    });
    report(8, "data efficiency", de);
    report(9, "GP core properties", timed(None, gp_properties));

    let determinism = timed(None, || {
        let again = cli_sweep(&dof_cfg, "dof", &work.path().join("dof_b"))
            .and_then(|_| cli_sweep(&de_cfg, "data-efficiency", &work.path().join("de_b")));
        if let Err(e) = again {
            return outcome(false, e);
        }
        let a = same_bytes(&work.path().join("dof_a"), &work.path().join("dof_b"));
        let b = same_bytes(&work.path().join("de_a"), &work.path().join("de_b"));
        match (a, b) {
            (Ok(x), Ok(y)) => outcome(true, format!("{} output files identical", x + y)),
            (Err(e), _) | (_, Err(e)) => outcome(false, e),
        }
    });
    report(10, "determinism", determinism);

    let failed: Vec<usize> = results.iter().filter(|r| !r.2.ok).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
