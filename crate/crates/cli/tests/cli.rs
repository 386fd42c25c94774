use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qlab_core::ObservableSeries;
use serde_json::Value;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn qlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qlab"))
        .args(args)
        .env("SOURCE_DATE_EPOCH", "0")
        .output()
        .expect("binary runs")
}

fn run_cmd(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    qlab(&args)
}

fn read_series(path: &Path) -> (ObservableSeries, Vec<String>) {
    ObservableSeries::read_csv(std::fs::File::open(path).unwrap()).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn run_writes_101_records_and_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let out = run_cmd("run", &scenario("harmonic.toml"), d, &["--quiet"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (s, comments) = read_series(&a.join("series.csv"));
    assert_eq!(s.len(), 101);
    assert_eq!(s.records()[0].t, 0.0);
    let csv = std::fs::read(a.join("series.csv")).unwrap();
    assert_eq!(csv, std::fs::read(b.join("series.csv")).unwrap());
    let header = String::from_utf8_lossy(&csv).lines().nth(1).unwrap().to_string();
    assert_eq!(
        header,
        "t,norm,energy,x_mean_1,p_mean_1,force_1,qform_x_1,qform_p_1,x_opnorm_1,h_opnorm,boundary_mass"
    );
    let m = json(&a.join("manifest.json"));
    assert_eq!(comments[0], format!("manifest={}", m["scenario_hash"].as_str().unwrap()));
    assert!(m["defaults_applied"].as_array().unwrap().iter().any(|d| d.as_str().unwrap().starts_with("evolution.dt")));
}

#[test]
fn free_particle_momentum_is_constant() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cmd("run", &scenario("free.toml"), dir.path(), &["--quiet"]);
    assert!(out.status.success());
    let (s, _) = read_series(&dir.path().join("series.csv"));
    let p = s.column(|r| r.p_mean[0]);
    let spread = p.iter().map(|v| (v - p[0]).abs()).fold(0.0, f64::max);
    assert!(spread <= 1e-10, "{spread}");
}

#[test]
fn verify_harmonic_passes_and_reports_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cmd("verify", &scenario("harmonic.toml"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS ehrenfest_r1"));
    let r = json(&dir.path().join("residuals.json"));
    assert_eq!(r["report_type"], "residuals");
    let r1 = r["per_axis"][0]["max_r1"].as_f64().unwrap();
    assert!(r1 <= 1e-6, "{r1}");
    assert_eq!(r["per_axis"][0]["axis"], 1);
    let hash = r["provenance"]["manifest_hash"].as_str().unwrap();
    assert_eq!(json(&dir.path().join("manifest.json"))["scenario_hash"], hash);
}

#[test]
fn verify_coarse_step_fails_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario("harmonic.toml")).unwrap()
        + "\n[evolution]\ndt = 0.2\nsteps = 100\nstride = 1\n";
    let cfg = dir.path().join("coarse.toml");
    std::fs::write(&cfg, text).unwrap();
    let out = run_cmd("verify", &cfg, &dir.path().join("out"), &["--quiet"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("FAIL ehrenfest_r1"), "{err}");
    let r = json(&dir.path().join("out/residuals.json"));
    assert!(r["per_axis"][0]["max_r1"].as_f64().unwrap() > 1e-6);
    assert_eq!(r["verdict"]["passed"], false);
}

#[test]
fn verify_free_particle_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cmd("verify", &scenario("free.toml"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&dir.path().join("residuals.json"));
    assert_eq!(r["result"]["ehrenfest"]["exact"], true);
    assert!(String::from_utf8_lossy(&out.stdout).contains("exact"));
}

#[test]
fn tolerance_override_changes_verdict_and_hash() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cmd(
        "verify",
        &scenario("harmonic.toml"),
        dir.path(),
        &["--quiet", "--tolerance", "residual=1e-9"],
    );
    assert_eq!(out.status.code(), Some(1));
    let r = json(&dir.path().join("residuals.json"));
    assert_eq!(r["tolerances"]["residual"], 1e-9);
    let bad = run_cmd("verify", &scenario("harmonic.toml"), dir.path(), &["--tolerance", "residul=1e-9"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("tolerances.residual"));
}

#[test]
fn config_errors_exit_two_with_key_path() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario("harmonic.toml")).unwrap().replace("[potential]", "[potental]");
    let cfg = dir.path().join("typo.toml");
    std::fs::write(&cfg, text).unwrap();
    let out = run_cmd("run", &cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("potental.kind") && err.contains("potential.kind"), "{err}");
    let missing = run_cmd("run", &dir.path().join("nope.toml"), dir.path(), &[]);
    assert_ne!(missing.status.code(), Some(0));
}

#[test]
fn propagator_abort_is_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario("free.toml"))
        .unwrap()
        .replace("steps = 5000", "steps = 40000");
    let cfg = dir.path().join("long.toml");
    std::fs::write(&cfg, text).unwrap();
    let out = run_cmd("run", &cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("box edge"));
}

#[test]
fn bound_report_has_monotone_curve() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cmd("bound", &scenario("soft_coulomb.toml"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let b = json(&dir.path().join("bound.json"));
    let c: Vec<f64> = serde_json::from_value(b["result"]["c_alpha"].clone()).unwrap();
    assert!(c.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(b["report_type"], "bound");
}

#[test]
fn relax_reaches_soft_coulomb_ground_state() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cmd("relax", &scenario("soft_coulomb.toml"), dir.path(), &["--quiet"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&dir.path().join("relax.json"));
    let e = r["result"]["energy"].as_f64().unwrap();
    assert!((e + 0.669_777_138_213_840).abs() < 1e-7, "{e}");
    let csv = std::fs::read_to_string(dir.path().join("ground_state.csv")).unwrap();
    assert!(csv.starts_with("# manifest="));
    assert_eq!(csv.lines().nth(1), Some("index_0,re,im"));
}

#[test]
fn dt_sweep_reports_second_order() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cmd("sweep", &scenario("harmonic_sweep.toml"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let s = json(&dir.path().join("sweep.json"));
    let order = s["result"]["state_order"]["order"].as_f64().unwrap();
    assert!((order - 2.0).abs() < 0.3, "{order}");
    assert_eq!(s["result"]["runs"].as_array().unwrap().len(), 3);
}

#[test]
fn generic_sweep_runs_each_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cmd(
        "sweep",
        &scenario("harmonic.toml"),
        dir.path(),
        &["--parameter", "evolution.steps", "--values", "200,400"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = json(&dir.path().join("sweep.json"));
    let runs = s["result"].as_array().unwrap();
    assert_eq!(runs.len(), 2);
    assert_ne!(runs[0]["scenario_hash"], runs[1]["scenario_hash"]);
}

#[test]
fn plot_writes_deterministic_tagged_svgs() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cmd("run", &scenario("harmonic_period.toml"), dir.path(), &["--quiet"]);
    assert!(out.status.success());
    let series = dir.path().join("series.csv");
    let (s, comments) = read_series(&series);
    assert_eq!(s.len(), 630);
    let x = s.column(|r| r.x_mean[0]);
    for (t, v) in s.times().iter().zip(&x) {
        assert!((v - t.cos()).abs() < 1e-4);
    }
    let (a, b) = (dir.path().join("p1"), dir.path().join("p2"));
    for d in [&a, &b] {
        let o = qlab(&["plot", series.to_str().unwrap(), "--out", d.to_str().unwrap(), "--quiet"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["means.svg", "norms.svg", "residuals.svg"] {
        let svg = std::fs::read_to_string(a.join(name)).unwrap();
        assert!(svg.contains(&format!("<!-- {} -->", comments[0])), "{name}");
        assert_eq!(svg, std::fs::read_to_string(b.join(name)).unwrap());
    }
}

#[test]
fn plot_rejects_empty_series() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("empty.csv");
    std::fs::write(
        &p,
        "t,norm,energy,x_mean_1,p_mean_1,force_1,qform_x_1,qform_p_1,x_opnorm_1,h_opnorm,boundary_mass\n",
    )
    .unwrap();
    let o = qlab(&["plot", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no records"));
    std::fs::write(&p, "t,norm\n0,1\n").unwrap();
    let o = qlab(&["plot", p.to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing column 'energy'"));
}

#[test]
fn thread_cap_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let run = |d: &Path, threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_qlab"))
            .args(["verify", "--quiet", "--config"])
            .arg(scenario("harmonic.toml"))
            .arg("--out")
            .arg(d)
            .env("QLAB_THREADS", threads)
            .output()
            .unwrap()
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run(&a, "1").status.success());
    assert!(run(&b, "4").status.success());
    assert_eq!(
        std::fs::read(a.join("residuals.json")).unwrap(),
        std::fs::read(b.join("residuals.json")).unwrap()
    );
    assert_eq!(run(&a, "zero").status.code(), Some(2));
}
