use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use contact_pinn::benchmarks::{Case, CaseConfig, Mode, Preset};
use contact_pinn::config::{Overrides, RunConfig};
use contact_pinn::network::Checkpoint;

const SMALL: &str = r#"
[network]
hidden = [8, 8]

[adam]
epochs = 60

[lbfgs]
max_iters = 40

[points]
interior = 200
boundary = 80
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_contact-pinn"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn write_config(dir: &Path, head: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, format!("{head}\n{SMALL}")).unwrap();
    path
}

fn train(config: &Path, out: &Path) -> Output {
    run(&["train", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn train_writes_artifacts_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "case = \"lame\"\nseed = 4");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = train(&cfg, out);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for name in [
        "checkpoint.json",
        "config.json",
        "error_report.json",
        "train_log.jsonl",
        "points.csv",
        "fields.csv",
    ] {
        assert!(a.join(name).is_file(), "missing {name}");
    }
    let report = |d: &Path| fs::read_to_string(d.join("error_report.json")).unwrap();
    assert_eq!(report(&a), report(&b));
    assert_eq!(
        fs::read(a.join("checkpoint.json")).unwrap(),
        fs::read(b.join("checkpoint.json")).unwrap()
    );
    let log = fs::read_to_string(a.join("train_log.jsonl")).unwrap();
    assert_eq!(log.lines().filter(|l| l.contains("\"Adam\"")).count(), 60);
}

#[test]
fn evaluate_is_stable_and_honours_hard_constraints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "case = \"lame\"");
    let out = dir.path().join("run");
    assert!(train(&cfg, &out).status.success());
    let pts = dir.path().join("pts.csv");
    fs::write(&pts, "y,x\n1.5,0.0\n0.0,1.5\n1.0,1.0\n").unwrap();
    let ck = out.join("checkpoint.json");
    let eval = || run(&["evaluate", "--checkpoint", ck.to_str().unwrap(), "--points", pts.to_str().unwrap()]);
    let (first, second) = (eval(), eval());
    assert!(first.status.success(), "{}", stderr(&first));
    assert_eq!(first.stdout, second.stdout);
    let text = String::from_utf8(first.stdout).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    let (ux, uy, sxy) = (rows[0].len() - 5, rows[0].len() - 4, rows[0].len() - 1);
    assert_eq!(rows[0][ux], 0.0);
    assert_eq!(rows[0][sxy], 0.0);
    assert_eq!(rows[1][uy], 0.0);
    assert_eq!(rows[1][sxy], 0.0);

    let to_file = dir.path().join("fields.csv");
    let o = run(&[
        "evaluate",
        "--checkpoint",
        ck.to_str().unwrap(),
        "--points",
        pts.to_str().unwrap(),
        "--out",
        to_file.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert_eq!(fs::read_to_string(to_file).unwrap(), text);
}

#[test]
fn evaluate_on_the_stored_test_mesh_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "case = \"block\"");
    let out = dir.path().join("run");
    assert!(train(&cfg, &out).status.success());
    let ck = out.join("checkpoint.json");
    let mesh = out.join("fields.csv");
    let eval = |name: &str| {
        let target = dir.path().join(name);
        let o = run(&[
            "evaluate",
            "--checkpoint",
            ck.to_str().unwrap(),
            "--points",
            mesh.to_str().unwrap(),
            "--out",
            target.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(target).unwrap()
    };
    let first = eval("a.csv");
    assert_eq!(first, eval("b.csv"));
    assert_eq!(String::from_utf8(first).unwrap().lines().count(), 109 * 109 + 1);
}

#[test]
fn evaluate_handles_25k_points_within_a_second() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CaseConfig::defaults(Case::Hertz, Mode::Forward, Preset::Full);
    let ck = Checkpoint::new(&cfg.initial_params().unwrap(), &cfg.transform(), Some("hertz"));
    let ck_path = dir.path().join("ck.json");
    fs::write(&ck_path, ck.to_json().unwrap()).unwrap();
    let mut pts = String::from("x,y\n");
    for i in 0..25_000 {
        let t = i as f64 / 25_000.0;
        pts.push_str(&format!("{},{}\n", 0.5 * t, -t));
    }
    let pts_path = dir.path().join("pts.csv");
    fs::write(&pts_path, pts).unwrap();
    let target = dir.path().join("out.csv");
    let start = Instant::now();
    let o = run(&[
        "evaluate",
        "--checkpoint",
        ck_path.to_str().unwrap(),
        "--points",
        pts_path.to_str().unwrap(),
        "--out",
        target.to_str().unwrap(),
    ]);
    let secs = start.elapsed().as_secs_f64();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(secs <= 1.0, "{secs} s");
}

#[test]
fn surrogate_checkpoint_rejects_spatial_only_points() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "case = \"hertz\"\nmode = \"surrogate\"\nprofile_samples = 20\n[surrogate]\nsamples = 10",
    );
    let out = dir.path().join("run");
    let o = train(&cfg, &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let pts = dir.path().join("pts.csv");
    fs::write(&pts, "x,y\n0.1,-0.5\n").unwrap();
    let ck = out.join("checkpoint.json");
    let o = run(&["evaluate", "--checkpoint", ck.to_str().unwrap(), "--points", pts.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("checkpoint expects 3 inputs"), "{}", stderr(&o));
}

#[test]
fn malformed_config_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "case = \"block\"\n\n[material\nyoung = 1.0\n").unwrap();
    let o = train(&path, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn incompressible_material_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "case = \"block\"\n[material]\nyoung = 1.0\npoisson = 0.5");
    let o = train(&cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("invalid material"), "{}", stderr(&o));
}

#[test]
fn diverging_training_exits_two_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    let text = SMALL.replace("epochs = 60", "epochs = 60\nlr = 1e200");
    fs::write(&path, format!("case = \"lame\"\n{text}")).unwrap();
    let out = dir.path().join("out");
    let o = train(&path, &out);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(!out.join("checkpoint.json").exists());
    assert!(!out.join("error_report.json").exists());
}

#[test]
fn single_method_sweep_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "case = \"block\"");
    let out = dir.path().join("sweep");
    let o = run(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--methods",
        "sigmoid",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 1);
    let table = fs::read_to_string(out.join("sweep.txt")).unwrap();
    assert!(table.contains("sigmoid"));
    assert!(!table.contains("fb"));
}

#[test]
fn sweep_rejects_cases_without_contact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "case = \"lame\"");
    let o = run(&["sweep", "--config", cfg.to_str().unwrap(), "--methods", "fb"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn shipped_configs_resolve() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(&root).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let rc = RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            rc.resolve(&Overrides::default())
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 5);
}
