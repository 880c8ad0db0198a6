use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn kperim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kperim"))
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(cmd: &str, kernel: &Path, out: &Path, settings: &[&str]) -> Output {
    kperim().arg(cmd).arg("-k").arg(kernel).arg("-o").arg(out).args(settings).output().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn fractional(dir: &Path) -> PathBuf {
    write(dir, "frac.txt", "family = fractional\ns = 0.5\n")
}

#[test]
fn certify_fractional_reports_dec_constant_one() {
    let dir = tempfile::tempdir().unwrap();
    let k = fractional(dir.path());
    let out = dir.path().join("cert");
    let o = run("certify", &k, &out, &["hypotheses=Dec,Sym", "samples=4000"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let doc = json(&out.join("certify.json"));
    assert_eq!(doc["verdict"], "holds");
    let c0 = doc["report"][0]["constants"]["c0"].as_f64().unwrap();
    assert!((c0 - 1.0).abs() < 1e-9, "{c0}");
    assert_eq!(doc["seed"], 0);
    assert_eq!(doc["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn closedform_row() {
    let dir = tempfile::tempdir().unwrap();
    let k = fractional(dir.path());
    let out = dir.path().join("cf");
    let o = run("closedform", &k, &out, &["radii=0.5"]);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(out.join("closedform.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    assert_eq!(lines.next(), Some("r,perimeter"));
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(row[0], 0.5);
    assert!((row[1] - 8.0).abs() < 1e-12);
}

#[test]
fn counterexample_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let k = write(dir.path(), "pow.txt", "family = power\nexponent = 1.5\n");
    let out = dir.path().join("ce");
    let o = run("counterexample", &k, &out, &["delta=1", "r=0.25", "x0=2", "h=0.0078125"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let doc = json(&out.join("counterexample.json"));
    assert_eq!(doc["report"]["inequality"]["verdict"], "holds");
    assert_eq!(doc["report"]["ball_energy"].as_f64(), Some(0.0));
    assert!(doc["report"]["two_ball_perimeter"].as_f64().unwrap() <= 2.0 - 0.018);
}

#[test]
fn disconnected_poincare_witness_fails() {
    let dir = tempfile::tempdir().unwrap();
    let k = write(dir.path(), "ind.txt", "family = indicator\nradius = 1\n");
    let out = dir.path().join("pc");
    let o = run("poincare", &k, &out, &["omega=box:-2:-1+box:1:2", "h=0.125", "half_width=2.5"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let doc = json(&out.join("poincare.json"));
    assert_eq!(doc["report"]["inequality"]["constant"], "+inf");
    assert!(doc["report"]["quotient"].as_f64().unwrap() < 1e-10);
    let witness = std::fs::read_to_string(out.join("witness.grid")).unwrap();
    assert!(witness.starts_with("# config_hash="));
}

#[test]
fn malformed_kernel_spec_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let k = write(dir.path(), "bad.txt", "family = fractional\n  s 0.5\n");
    let o = run("closedform", &k, &dir.path().join("x"), &["radii=0.5"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2, column 3"), "{err}");
}

#[test]
fn malformed_config_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.txt", "command = closedform\nradii = 0.5\nseed = x\n");
    let o = kperim().arg("run").arg("-c").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("config line 3, column 8"), "{err}");
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let k = fractional(dir.path());
    let o = run("closedform", &k, &dir.path().join("x"), &["radius=0.5"]);
    assert_eq!(o.status.code(), Some(1));
    let o = kperim().arg("bogus").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = kperim().arg("closedform").arg("-o").arg(dir.path().join("y")).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn run_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let k = fractional(dir.path());
    let out = dir.path().join("cfg_out");
    let cfg = write(
        dir.path(),
        "run.txt",
        &format!("command = closedform\nkernel = {}\nout = {}\nradii = 0.25,0.5,1\n", k.display(), out.display()),
    );
    let o = kperim().arg("run").arg("-c").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let echo = std::fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(echo.contains("radii = 0.25,0.5,1"));
    assert!(echo.contains("seed = 0"));
    let doc = json(&out.join("closedform.json"));
    assert_eq!(doc["report"]["curve"]["monotone"], "holds");
}

#[test]
fn sobolev_check_csv() {
    let dir = tempfile::tempdir().unwrap();
    let k = fractional(dir.path());
    let out = dir.path().join("sob");
    let o = run("sobolev-check", &k, &out, &["q=2", "masses=geomspace:0.1:10:5"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("sobolev.csv")).unwrap();
    assert_eq!(csv.lines().nth(1), Some("m,rho,perimeter"));
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn probe_distinguishes_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let frac = fractional(dir.path());
    let out = dir.path().join("pf");
    let o = run("probe", &frac, &out, &["function=bump:0.5", "h=0.03125", "half_width=1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("probe.csv")).unwrap();
    assert_eq!(csv.lines().nth(1), Some("shell,param,partial_seminorm"));
    let k1 = write(dir.path(), "inv.txt", "family = power\nexponent = 1\n");
    let o = run("probe", &k1, &dir.path().join("pd"), &["function=bump:0.5", "h=0.03125", "half_width=1"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn optimize_writes_set_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let k = write(dir.path(), "g.txt", "family = gaussian\ndim = 2\nsigma = 0.3\n");
    let out = dir.path().join("opt");
    let o = run("optimize", &k, &out, &["set=box:-0.5,-0.25:0.5,0.25", "h=0.125", "half_width=1", "seed=7"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let best = std::fs::File::open(out.join("best.grid")).unwrap();
    let set = kperim_core::GridSet::read(best).unwrap();
    assert_eq!(set.count(), 32);
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    let p: Vec<f64> = trace.lines().skip(2).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(p.windows(2).all(|w| w[1] <= w[0]));
    assert!(p.len() > 1);
}

/// Same config and seed give byte-identical artifacts across runs and
/// worker counts.
#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let k = write(dir.path(), "f2.txt", "family = fractional\ndim = 2\ns = 0.5\n");
    let mut outputs = Vec::new();
    for (i, threads) in ["1", "4", "4"].iter().enumerate() {
        let out = dir.path().join(format!("det{i}"));
        let o = kperim()
            .env("KPERIM_THREADS", threads)
            .arg("ballcurve")
            .arg("-k")
            .arg(&k)
            .arg("-o")
            .arg(&out)
            .args(["radii=0.25,0.5,0.75", "h=0.0625"])
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push((std::fs::read(out.join("ballcurve.csv")).unwrap(), std::fs::read(out.join("ballcurve.json")).unwrap()));
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn bad_thread_count_is_a_usage_error() {
    let o = kperim().env("KPERIM_THREADS", "zero").arg("closedform").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}
