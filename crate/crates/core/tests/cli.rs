use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cyclic-wavemap"));
    c.env_remove("CYCLIC_WAVEMAP_THREADS");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

/// Exit code plus the parsed single-line stderr error (if any).
fn outcome(out: &Output) -> (i32, Option<serde_json::Value>) {
    let code = out.status.code().unwrap();
    let err = String::from_utf8_lossy(&out.stderr);
    if code == 0 {
        return (0, None);
    }
    assert_eq!(err.trim_end().lines().count(), 1, "stderr: {err}");
    let v: serde_json::Value = serde_json::from_str(err.trim()).unwrap();
    assert_eq!(v["code"], code);
    (code, Some(v))
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn stability_chart_outputs_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (code, err) = outcome(&run(d, &["stability-chart", "--epsilon", "0", "--out", "c.csv"]));
    assert_eq!(code, 2);
    assert_eq!(err.unwrap()["error"], "validation");

    let args = [
        "stability-chart", "--epsilon", "0.5", "--n", "3", "--lambda-min", "0.1", "--lambda-max", "60", "--grid",
        "4000", "--out", "c.csv",
    ];
    assert_eq!(outcome(&run(d, &args)).0, 0);
    let side = read_json(&d.join("c.intervals.json"));
    assert!(!side["intervals"].as_array().unwrap().is_empty());
    let csv = std::fs::read_to_string(d.join("c.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "lambda,trace,abs_trace,class");
    assert_eq!(csv.lines().count(), 4001);
    // 17 significant digits
    let first = csv.lines().nth(1).unwrap().split(',').nth(1).unwrap();
    assert_eq!(first.split('e').next().unwrap().replace(['.', '-'], "").len(), 17);

    // identical inputs give identical bytes
    let again = d.join("again");
    std::fs::create_dir(&again).unwrap();
    assert_eq!(outcome(&run(&again, &args)).0, 0);
    assert_eq!(std::fs::read(d.join("c.csv")).unwrap(), std::fs::read(again.join("c.csv")).unwrap());
    assert_eq!(
        std::fs::read(d.join("c.intervals.json")).unwrap(),
        std::fs::read(again.join("c.intervals.json")).unwrap()
    );

    assert_eq!(outcome(&run(d, &["stability-chart", "--constant", "1", "--out", "k.csv"])).0, 0);
    assert!(read_json(&d.join("k.intervals.json"))["intervals"].as_array().unwrap().is_empty());

    // nothing but the outputs is left behind
    let names: Vec<String> =
        std::fs::read_dir(d).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    assert_eq!(names.len(), 5, "{names:?}");
}

#[test]
fn geodesic_follows_sinh() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["geodesic", "--metric", "conformal:alpha=-1", "--s-max", "3", "--out", "g.csv"]);
    assert_eq!(outcome(&out).0, 0);
    let csv = std::fs::read_to_string(dir.path().join("g.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        let expect = v[0].sinh() / 2f64.sqrt();
        assert!((v[1] - expect).abs() < 1e-6 && (v[2] - expect).abs() < 1e-6);
    }
}

#[test]
fn noc_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["noc", "--f", "example2", "--ell", "4", "--out", "n.json"]);
    assert_eq!(outcome(&out).0, 0);
    let v = read_json(&dir.path().join("n.json"));
    assert_eq!(v["verdict"]["holds"], "no");
    let stdout: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(stdout, v);
    let out = run(dir.path(), &["noc", "--f", "example1", "--alpha", "-0.3"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["verdict"]["holds"], "yes");
    let (code, _) = outcome(&run(dir.path(), &["noc", "--f", "example9", "--alpha", "1"]));
    assert_eq!(code, 2);
}

#[test]
fn blowup_demo_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let base = ["--epsilon", "0.5", "--n", "3", "--delta", "1e-3"];
    let mut args = vec!["blowup-demo", "--metric", "conformal:alpha=-2", "--direction", "1,1", "--out", "cert.json"];
    args.extend(base);
    assert_eq!(outcome(&run(d, &args)).0, 0);
    let cert = read_json(&d.join("cert.json"));
    for key in ["S", "M", "A", "lambda", "y", "mu0", "b21", "b_G", "t_star", "smallness", "trajectory"] {
        assert!(cert.get(key).is_some(), "missing {key}");
    }
    assert!((cert["b_G"].as_f64().unwrap() - PI / 8f64.sqrt()).abs() < 1e-7);
    assert!(cert["smallness"].as_f64().unwrap() <= 1e-3);

    let mut args = vec!["blowup-demo", "--metric", "conformal:alpha=-0.4", "--direction", "1,1", "--out", "c2.json"];
    args.extend(base);
    let (code, err) = outcome(&run(d, &args));
    assert_eq!(code, 4);
    assert!(err.unwrap()["message"].as_str().unwrap().contains("no blow-up certified"));
    assert!(!d.join("c2.json").exists());

    let mut args = vec!["blowup-demo", "--metric", "skew:alpha=-2", "--direction", "1,0", "--out", "c3.json"];
    args.extend(base);
    let (code, err) = outcome(&run(d, &args));
    assert_eq!(code, 5);
    assert_eq!(err.unwrap()["error"], "not_distinguished");
}

#[test]
fn simulate_modes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = [
        "simulate", "--mode", "uniform", "--epsilon", "0.5", "--n", "3", "--u1", "1", "--t-end", "4", "--samples",
        "8", "--out", "uni",
    ];
    assert_eq!(outcome(&run(d, &args)).0, 0);
    let csv = std::fs::read_to_string(d.join("uni/uniform.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "t,u,u_t,v");
    // v(t) = ∫₀ᵗ (1 + 0.5 sin 2πτ)^{3/2} dτ by composite Simpson
    let oracle = |t: f64| {
        let n = 20000;
        let h = t / n as f64;
        let g = |s: f64| (1.0 + 0.5 * (2.0 * PI * s).sin()).powf(1.5);
        (0..=n)
            .map(|j| {
                let w = if j == 0 || j == n { 1.0 } else if j % 2 == 1 { 4.0 } else { 2.0 };
                w * g(j as f64 * h)
            })
            .sum::<f64>()
            * h
            / 3.0
    };
    for line in csv.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!((v[1] - oracle(v[0])).abs() < 1e-8);
    }

    let args = [
        "simulate", "--mode", "linear", "--epsilon", "0.5", "--dt", "1", "--t-end", "1", "--u0-amp", "1", "--out",
        "cfl",
    ];
    assert_eq!(outcome(&run(d, &args)).0, 2);
    assert_eq!(read_json(&d.join("cfl/manifest.json"))["termination"], "cfl_violation");

    let args = [
        "simulate", "--mode", "nonlinear", "--epsilon", "0.5", "--f", "example1", "--alpha", "-1", "--points", "64",
        "--t-end", "0.5", "--snapshots", "5", "--u0-amp", "0.1", "--out", "nl",
    ];
    assert_eq!(outcome(&run(d, &args)).0, 0);
    let manifest = read_json(&d.join("nl/manifest.json"));
    assert_eq!(manifest["termination"], "completed");
    assert_eq!(manifest["diagnostics"].as_array().unwrap().len(), 6);
    assert!(d.join("nl/snapshot_0005.csv").exists());
}

#[test]
fn config_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("cfg.toml"), "[noc]\nf = \"example1\"\nalpha = -2.0\n").unwrap();
    let out = run(d, &["noc", "--config", "cfg.toml"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["verdict"]["holds"], "no");
    // the flag wins over the file
    let out = run(d, &["noc", "--config", "cfg.toml", "--alpha", "-0.3"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["verdict"]["holds"], "yes");

    std::fs::write(d.join("bad.toml"), "[noc]\nf = \"zero\"\ncolour = 1\n").unwrap();
    let (code, err) = outcome(&run(d, &["noc", "--config", "bad.toml"]));
    assert_eq!(code, 2);
    assert!(err.unwrap()["message"].as_str().unwrap().contains("colour"));
    std::fs::write(d.join("bad2.toml"), "[nonsense]\nx = 1\n").unwrap();
    assert_eq!(outcome(&run(d, &["noc", "--config", "bad2.toml", "--f", "zero"])).0, 2);

    assert_eq!(outcome(&run(d, &["no-such-command"])).0, 2);
    assert_eq!(outcome(&run(d, &["geodesic", "--metric", "conformal:alpha=-1"])).0, 2);
}

#[test]
fn thread_override() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["noc", "--f", "zero"];
    let out = bin().current_dir(dir.path()).env("CYCLIC_WAVEMAP_THREADS", "zero").args(args).output().unwrap();
    assert_eq!(outcome(&out).0, 2);
    let out = bin().current_dir(dir.path()).env("CYCLIC_WAVEMAP_THREADS", "2").args(args).output().unwrap();
    assert_eq!(outcome(&out).0, 0);
}
