//! Command-line front end: `train`, `evaluate` and `sweep`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::benchmarks::{predict, run_case, Case, CaseConfig, CaseRun, Mode, Preset};
use crate::config::{Overrides, RunConfig};
use crate::contact::KktMethod;
use crate::elasticity::ExperimentalData;
use crate::error::{Error, Result};
use crate::geometry::save_points;
use crate::io::write_atomic;
use crate::network::Checkpoint;

#[derive(Debug, Parser)]
#[command(name = "contact-pinn", version, about = "Physics-informed networks for 2D elastic contact")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    Desk,
    Full,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Desk => Preset::Desk,
            PresetArg::Full => Preset::Full,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a benchmark case and write its artifacts.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `out` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        preset: Option<PresetArg>,
    },
    /// Predict fields of a checkpoint at the points of a CSV file.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// CSV with columns `x,y` and, for surrogates, `p`.
        #[arg(long)]
        points: PathBuf,
        /// Output CSV; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a contact case once per KKT method and tabulate the errors.
    Sweep {
        /// Contact case config; the block benchmark when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated methods out of `sign`, `sigmoid`, `fb`.
        #[arg(long, value_delimiter = ',', default_value = "sign,sigmoid,fb")]
        methods: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        preset: Option<PresetArg>,
    },
}

/// Failure with its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: Error,
}

impl Failure {
    fn input(error: Error) -> Self {
        Failure { code: 1, error }
    }

    /// Errors raised while training: non-finite losses map to code 2.
    fn training(error: Error) -> Self {
        let code = if matches!(error, Error::NonFinite(_)) { 2 } else { 1 };
        Failure { code, error }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.error)
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {f}");
            f.code
        }
    }
}

pub fn run(command: Command) -> std::result::Result<(), Failure> {
    match command {
        Command::Train {
            config,
            out,
            seed,
            preset,
        } => {
            let o = Overrides {
                seed,
                preset: preset.map(Into::into),
                out,
            };
            cmd_train(&config, &o).map(|_| ())
        }
        Command::Evaluate { checkpoint, points, out } => cmd_evaluate(&checkpoint, &points, out.as_deref()),
        Command::Sweep {
            config,
            methods,
            out,
            seed,
            preset,
        } => {
            let o = Overrides {
                seed,
                preset: preset.map(Into::into),
                out,
            };
            cmd_sweep(config.as_deref(), &methods, &o).map(|_| ())
        }
    }
}

fn init_logging(level: Option<&str>) {
    let env = env_logger::Env::default().default_filter_or(level.unwrap_or("warn"));
    let _ = env_logger::Builder::from_env(env).try_init();
}

fn load_data(rc: &RunConfig) -> Result<Option<ExperimentalData>> {
    rc.data_path().map(ExperimentalData::load).transpose()
}

/// Trains the configured case and writes every artifact to the output
/// directory. Returns the directory.
pub fn cmd_train(config: &Path, overrides: &Overrides) -> std::result::Result<PathBuf, Failure> {
    let rc = RunConfig::load(config).map_err(Failure::input)?;
    init_logging(rc.log_level.as_deref());
    let cfg = rc.resolve(overrides).map_err(Failure::input)?;
    let data = load_data(&rc).map_err(Failure::input)?;
    let dir = rc.output_dir(overrides);
    std::fs::create_dir_all(&dir).map_err(|e| Failure::input(e.into()))?;
    let started = Instant::now();
    let run = run_case(&cfg, data.as_ref(), &mut |r, _| {
        if r.epoch % 500 == 0 {
            log::info!("epoch {} {:?} loss {:.6e}", r.epoch, r.phase, r.loss.total);
        }
        Ok(())
    })
    .map_err(Failure::training)?;
    log::info!("trained in {:.1} s", started.elapsed().as_secs_f64());
    write_artifacts(&dir, &run).map_err(Failure::input)?;
    Ok(dir)
}

fn json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s.into_bytes())
}

/// Writes checkpoint, resolved config, training log, error report, point
/// set, test-point fields and (contact cases) the pressure profile.
pub fn write_artifacts(dir: &Path, run: &CaseRun) -> Result<()> {
    let ck = Checkpoint::new(&run.params, &run.transform, Some(run.config.case.name()));
    write_atomic(&dir.join("checkpoint.json"), ck.to_json()?.as_bytes())?;
    write_atomic(&dir.join("config.json"), &json(&run.config)?)?;
    write_atomic(&dir.join("error_report.json"), &json(&run.report)?)?;
    let mut log = String::new();
    for r in &run.records {
        log.push_str(&serde_json::to_string(r)?);
        log.push('\n');
    }
    write_atomic(&dir.join("train_log.jsonl"), log.as_bytes())?;
    save_points(&run.points, &dir.join("points.csv"))?;
    let mut fields = String::from("x,y,ux,uy,sxx,syy,sxy\n");
    for (p, row) in run.points.test.iter().zip(run.test_fields.rows()) {
        let _ = write!(fields, "{},{}", p[0], p[1]);
        for v in row {
            let _ = write!(fields, ",{v}");
        }
        fields.push('\n');
    }
    write_atomic(&dir.join("fields.csv"), fields.as_bytes())?;
    if let Some(profile) = &run.profile {
        let mut text = String::from("x,pc\n");
        for (x, p) in profile.x.iter().zip(&profile.pc) {
            let _ = writeln!(text, "{x},{p}");
        }
        write_atomic(&dir.join("pressure_profile.csv"), text.as_bytes())?;
    }
    Ok(())
}

/// Reads `x,y[,p]` columns by header name; other columns are ignored.
pub fn read_inputs(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (x, y) = match (find("x"), find("y")) {
        (Some(x), Some(y)) => (x, y),
        _ => return Err(Error::PointFile("header must contain x and y".into())),
    };
    let mut cols = vec![x, y];
    let mut names = vec!["x".to_string(), "y".to_string()];
    if let Some(p) = find("p") {
        cols.push(p);
        names.push("p".into());
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = cols
            .iter()
            .map(|&c| {
                rec.get(c)
                    .and_then(|v| v.trim().parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::PointFile(format!("row {}: bad value in column {c}", i + 2)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::PointFile("no points".into()));
    }
    Ok((names, rows))
}

pub fn cmd_evaluate(checkpoint: &Path, points: &Path, out: Option<&Path>) -> std::result::Result<(), Failure> {
    init_logging(None);
    let ck = Checkpoint::load(checkpoint).map_err(Failure::input)?;
    let params = ck.params().map_err(Failure::input)?;
    let (names, rows) = read_inputs(points).map_err(Failure::input)?;
    let width = params.architecture().input_width;
    if names.len() != width {
        return Err(Failure::input(Error::Shape(format!(
            "checkpoint expects {width} inputs, points file has {}",
            names.len()
        ))));
    }
    let spatial: Vec<[f64; 2]> = rows.iter().map(|r| [r[0], r[1]]).collect();
    let mut text = names.join(",");
    text.push_str(",ux,uy,sxx,syy,sxy\n");
    // surrogate inputs may change per row, so predict row groups of equal load
    let fields = if width == 2 {
        predict(&params, &ck.transform, &spatial, &[]).map_err(Failure::input)?
    } else {
        let mut all = ndarray::Array2::zeros((rows.len(), 5));
        for (i, r) in rows.iter().enumerate() {
            let f = predict(&params, &ck.transform, &spatial[i..=i], &r[2..]).map_err(Failure::input)?;
            all.row_mut(i).assign(&f.row(0));
        }
        all
    };
    for (r, f) in rows.iter().zip(fields.rows()) {
        let vals: Vec<String> = r.iter().chain(f.iter()).map(|v| v.to_string()).collect();
        text.push_str(&vals.join(","));
        text.push('\n');
    }
    match out {
        Some(path) => write_atomic(path, text.as_bytes()).map_err(Failure::input),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// One method's row of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub method: String,
    pub hidden: Vec<usize>,
    pub training_time_s: f64,
    pub prediction_time_s: f64,
    pub l2_u: f64,
    pub l2_sigma: f64,
    pub max_abs_uy: f64,
    pub max_abs_syy: f64,
    pub max_abs_sxy: f64,
    pub final_loss: f64,
}

/// Aligned text rendering of sweep rows.
pub fn sweep_table(rows: &[SweepRow]) -> String {
    let mut s = format!(
        "{:<8} {:>10} {:>10} {:>10} {:>10} {:>10} {:>11} {:>11} {:>11}\n",
        "method", "hidden", "train(s)", "pred(s)", "E_u(%)", "E_s(%)", "max|uy|", "max|syy|", "max|sxy|"
    );
    for r in rows {
        let hidden = format!("{}x{}", r.hidden.len(), r.hidden.first().copied().unwrap_or(0));
        let _ = writeln!(
            s,
            "{:<8} {:>10} {:>10.2} {:>10.4} {:>10.4} {:>10.4} {:>11.3e} {:>11.3e} {:>11.3e}",
            r.method,
            hidden,
            r.training_time_s,
            r.prediction_time_s,
            100.0 * r.l2_u,
            100.0 * r.l2_sigma,
            r.max_abs_uy,
            r.max_abs_syy,
            r.max_abs_sxy
        );
    }
    s
}

/// Trains `base` once per method and returns the rows in input order.
pub fn sweep(base: &CaseConfig, methods: &[KktMethod]) -> Result<Vec<SweepRow>> {
    if base.case == Case::Lame {
        return Err(Error::Config("sweep needs a contact case".into()));
    }
    let mut rows = Vec::with_capacity(methods.len());
    for &m in methods {
        let mut cfg = base.clone();
        cfg.kkt = m;
        let t = Instant::now();
        let run = run_case(&cfg, None, &mut |_, _| Ok(()))?;
        let training_time_s = t.elapsed().as_secs_f64();
        let extra: Vec<f64> = if cfg.mode == Mode::Surrogate { vec![cfg.pressure] } else { vec![] };
        let t = Instant::now();
        predict(&run.params, &run.transform, &run.points.test, &extra)?;
        let prediction_time_s = t.elapsed().as_secs_f64();
        let r = &run.report;
        let (l2_u, l2_sigma) = r.l2_vector.as_ref().map_or((f64::NAN, f64::NAN), |e| (e.u, e.sigma));
        let max = r.max_abs.clone().unwrap_or_else(|| vec![f64::NAN; 5]);
        rows.push(SweepRow {
            method: m.name().to_string(),
            hidden: cfg.hidden.clone(),
            training_time_s,
            prediction_time_s,
            l2_u,
            l2_sigma,
            max_abs_uy: max[1],
            max_abs_syy: max[3],
            max_abs_sxy: max[4],
            final_loss: r.final_loss.total,
        });
    }
    Ok(rows)
}

pub fn cmd_sweep(config: Option<&Path>, methods: &[String], overrides: &Overrides) -> std::result::Result<Vec<SweepRow>, Failure> {
    let (base, dir, level) = match config {
        Some(path) => {
            let rc = RunConfig::load(path).map_err(Failure::input)?;
            if rc.data_path().is_some() || rc.mode() != Mode::Forward {
                return Err(Failure::input(Error::Config("sweep runs forward cases only".into())));
            }
            (rc.resolve(overrides).map_err(Failure::input)?, rc.output_dir(overrides), rc.log_level)
        }
        None => {
            let preset = overrides.preset.unwrap_or(Preset::Desk);
            let mut cfg = CaseConfig::defaults(Case::Block, Mode::Forward, preset);
            if let Some(s) = overrides.seed {
                cfg.seed = s;
            }
            let dir = overrides.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            (cfg, dir, None)
        }
    };
    init_logging(level.as_deref());
    if methods.is_empty() {
        return Err(Failure::input(Error::Config("no KKT methods given".into())));
    }
    // keep the case's KKT weight scale for every method
    let scale = match base.kkt {
        KktMethod::Sign { weights } | KktMethod::Sigmoid { weights, .. } => weights[0],
        KktMethod::FischerBurmeister { weight } => weight,
    };
    let kkts = methods
        .iter()
        .map(|m| KktMethod::from_name(m.trim()).map(|k| k.scaled(scale)))
        .collect::<Result<Vec<_>>>()
        .map_err(Failure::input)?;
    if base.case == Case::Lame {
        return Err(Failure::input(Error::Config("sweep needs a contact case".into())));
    }
    let rows = sweep(&base, &kkts).map_err(Failure::training)?;
    std::fs::create_dir_all(&dir).map_err(|e| Failure::input(e.into()))?;
    let table = sweep_table(&rows);
    write_atomic(&dir.join("sweep.json"), &json(&rows).map_err(Failure::input)?).map_err(Failure::input)?;
    write_atomic(&dir.join("sweep.txt"), table.as_bytes()).map_err(Failure::input)?;
    print!("{table}");
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_train_flags() {
        let cli = Cli::try_parse_from(["x", "train", "--config", "a.toml", "--seed", "4", "--preset", "full"]).unwrap();
        match cli.command {
            Command::Train { seed, preset, .. } => {
                assert_eq!(seed, Some(4));
                assert_eq!(preset, Some(PresetArg::Full));
            }
            _ => panic!("wrong command"),
        }
    }

    #[test]
    fn sweep_methods_split_on_commas() {
        let cli = Cli::try_parse_from(["x", "sweep", "--methods", "sign,fb"]).unwrap();
        match cli.command {
            Command::Sweep { methods, .. } => assert_eq!(methods, vec!["sign", "fb"]),
            _ => panic!("wrong command"),
        }
    }

    #[test]
    fn unknown_method_exits_one() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert_eq!(run_from_args(["x", "sweep", "--methods", "penalty", "--out", out]), 1);
    }

    #[test]
    fn missing_config_exits_one() {
        assert_eq!(run_from_args(["x", "train", "--config", "/nonexistent/c.toml"]), 1);
    }

    #[test]
    fn table_has_header_and_rows() {
        let row = SweepRow {
            method: "fb".into(),
            hidden: vec![50; 5],
            training_time_s: 1.0,
            prediction_time_s: 0.01,
            l2_u: 0.001,
            l2_sigma: 0.002,
            max_abs_uy: 1e-5,
            max_abs_syy: 2e-5,
            max_abs_sxy: 3e-5,
            final_loss: 1e-6,
        };
        let t = sweep_table(&[row]);
        assert_eq!(t.lines().count(), 2);
        assert!(t.lines().nth(1).unwrap().starts_with("fb"));
        assert!(t.contains("5x50"));
    }
}
