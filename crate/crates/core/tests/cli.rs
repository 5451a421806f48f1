use std::path::Path;
use std::process::{Command, Output};

fn dynlearn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynlearn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn generate_follows_the_protocol_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for out in [&a, &b] {
        let o = dynlearn(&[
            "generate", "--robot", "planar2", "--duration", "100", "--rate", "100", "--cutoff", "1.0",
            "--noise-std", "0.01", "--seed", "7", "--out", p(out),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 10_001);
    assert!(text.starts_with("t,q1,q2,dq1,dq2,ddq1,ddq2,tau1,tau2"));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(
        std::fs::read(dir.path().join("a.meta.json")).unwrap(),
        std::fs::read(dir.path().join("b.meta.json")).unwrap()
    );
    assert!(dir.path().join("a.manifest.json").exists());
}

#[test]
fn generate_rejects_bad_inputs_with_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d.csv");
    let o = dynlearn(&["generate", "--robot", "planar2", "--duration", "0", "--seed", "1", "--out", p(&out)]);
    assert_eq!(code(&o), 2);
    let bad = dir.path().join("bad.robot");
    std::fs::write(&bad, "[robot]\nname = x\ngravity = 0 0 -9.81\n\n[joint 1]\nkind = hinge\n").unwrap();
    let o = dynlearn(&["generate", "--robot", p(&bad), "--seed", "1", "--out", p(&out)]);
    assert_eq!(code(&o), 2);
    let msg = stderr(&o);
    assert!(msg.contains("bad.robot:6:") && msg.contains("kind"), "{msg}");
}

#[test]
fn fit_and_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("pend.csv");
    let o = dynlearn(&[
        "generate", "--robot", "pendulum", "--duration", "20", "--rate", "10", "--noise-std", "0", "--seed", "3",
        "--out", p(&data),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let models = dir.path().join("models");
    let fit = |out: &Path| {
        dynlearn(&[
            "fit", "--data", p(&data), "--kernel", "se", "--budget", "40", "--restarts", "1", "--out", p(out),
        ])
    };
    let o = fit(&models);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(models.join("joint_1.json").exists() && !models.join("joint_2.json").exists());
    let log = json(&models.join("fit_log.json"));
    assert!(log["joints"][0]["final_nll"].is_number());
    let again = dir.path().join("again");
    assert_eq!(code(&fit(&again)), 0);
    assert_eq!(
        json(&models.join("joint_1.json"))["hyperparameters"],
        json(&again.join("joint_1.json"))["hyperparameters"]
    );

    let eval = dir.path().join("eval");
    let o = dynlearn(&[
        "eval", "--models", p(&models), "--data", p(&data), "--mode", "inverse-rmse", "--out", p(&eval),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rmse = json(&eval.join("inverse_rmse.json"))["aggregate"].as_f64().unwrap();
    assert!(rmse < 1e-2, "training-set RMSE {rmse}");

    let other = dir.path().join("planar.csv");
    dynlearn(&["generate", "--robot", "planar2", "--duration", "5", "--rate", "10", "--seed", "1", "--out", p(&other)]);
    let o = dynlearn(&["eval", "--models", p(&models), "--data", p(&other), "--mode", "fd-errors", "--out", p(&eval)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn forward_gip_is_unsupported() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    dynlearn(&["generate", "--robot", "planar2", "--duration", "5", "--rate", "10", "--seed", "1", "--out", p(&data)]);
    let o = dynlearn(&[
        "fit", "--data", p(&data), "--kernel", "gip", "--target", "forward", "--out", p(&dir.path().join("m")),
    ]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("squared exponential"), "{}", stderr(&o));
}

#[test]
fn oracle_plug_eval_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    dynlearn(&[
        "generate", "--robot", "spatial3", "--duration", "10", "--rate", "20", "--noise-std", "0", "--seed", "5",
        "--out", p(&data),
    ]);
    let out = dir.path().join("fd");
    let o = dynlearn(&["eval", "--oracle", "spatial3", "--data", p(&data), "--mode", "fd-errors", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let max = json(&out.join("fd_errors.json"))["max_abs_error"].as_f64().unwrap();
    assert!(max <= 1e-8, "{max}");

    let comp = dir.path().join("comp");
    let o = dynlearn(&["eval", "--oracle", "pendulum", "--mode", "components", "--q", "0", "--out", p(&comp)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let c = json(&comp.join("components.json"));
    let b = c["points"][0]["b_hat"][0][0].as_f64().unwrap();
    let g = c["points"][0]["g_hat"][0].as_f64().unwrap();
    assert!((b - 1.0).abs() <= 1e-12 && g.abs() <= 1e-12, "B̂ {b} ĝ {g}");
}

const SWEEP: &str = r#"
robot = "planar2"
seeds = [1]
estimators = ["se_fd", "se", "gip"]
[trajectory]
duration = 10.0
test_duration = 5.0
rate = 10.0
[optimizer]
budget = 20
restarts = 1
"#;

#[test]
fn sweep_writes_reports_and_guards_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    std::fs::write(&cfg, SWEEP).unwrap();
    let out = dir.path().join("report");
    let run = |force: bool| {
        let mut args = vec!["sweep", "--config", p(&cfg), "--kind", "dof", "--out", p(&out)];
        if force {
            args.push("--force");
        }
        dynlearn(&args)
    };
    let o = run(false);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let metrics = json(&out.join("metrics.json"));
    assert_eq!(metrics["summary"].as_array().unwrap().len(), 3);
    assert!(metrics["config_hash"].is_string());
    let manifest = json(&out.join("manifest.json"));
    let cfg_hash = manifest["config_hash"].as_str().unwrap().to_string();
    assert_eq!(cfg_hash.len(), 64);
    let first = std::fs::read(out.join("metrics.json")).unwrap();

    let o = run(false);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("--force"));
    assert_eq!(code(&run(true)), 0);
    assert_eq!(std::fs::read(out.join("metrics.json")).unwrap(), first);

    std::fs::write(&cfg, SWEEP.replace("seeds = [1]\n", "")).unwrap();
    let o = dynlearn(&["sweep", "--config", p(&cfg), "--kind", "dof", "--out", p(&dir.path().join("x"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("seeds"), "{}", stderr(&o));
}
