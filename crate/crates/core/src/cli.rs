//! Subcommands of the `hadamard` tool. Each writes `<command>.json` and
//! `<command>.csv` into the run directory, plus its artifacts.

use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::geometry::ModelCoefficients;
use crate::io::{self, GridInfo};
use crate::parametrix::ParametrixBundle;
use crate::report::{Relation, Report, Row};
use crate::states::{canonical_state, glue_states, hadamard_family, partition_windows, random_spec, static_kms, static_vacuum, Frame};
use crate::suites::{self, anchor};

pub const BUNDLE_DIR: &str = "bundle";
pub const STATE_DIR: &str = "states";
const LOCK: &str = ".lock";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Reduce,
    Parametrix,
    State,
    Verify,
    Static,
    Glue,
    Egorov,
    Sweep,
}

impl Command {
    pub const ALL: [Command; 8] =
        [Command::Reduce, Command::Parametrix, Command::State, Command::Verify, Command::Static, Command::Glue, Command::Egorov, Command::Sweep];

    pub fn name(self) -> &'static str {
        match self {
            Command::Reduce => "reduce",
            Command::Parametrix => "parametrix",
            Command::State => "state",
            Command::Verify => "verify",
            Command::Static => "static",
            Command::Glue => "glue",
            Command::Egorov => "egorov",
            Command::Sweep => "sweep",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

/// Exclusive claim on a run directory, released on drop.
pub struct RunLock {
    path: PathBuf,
    _file: File,
}

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let path = dir.join(LOCK);
        let file = OpenOptions::new().write(true).create_new(true).open(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::AlreadyExists => Error::Config(format!("run directory {} is locked by another process", dir.display())),
            _ => Error::Io(e),
        })?;
        Ok(Self { path, _file: file })
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Configuration and IO problems abort a command; anything else raised by a
/// check is recorded in the report.
fn fatal(e: &Error) -> bool {
    matches!(e, Error::Config(_) | Error::Io(_) | Error::Format(_))
}

fn collect(report: &mut Report, id: &str, rows: Result<Vec<Row>>) -> Result<()> {
    match rows {
        Ok(rows) => report.extend(rows),
        Err(e) if fatal(&e) => return Err(e),
        Err(e) => report.errors.push(format!("{id}: {e}")),
    }
    Ok(())
}

/// Runs `cmd` and writes its report; the report is returned for the exit code.
pub fn run(cmd: Command, cfg: &RunConfig, out: &Path) -> Result<Report> {
    cfg.validate()?;
    let _lock = RunLock::acquire(out)?;
    let mut report = Report::new(cmd.name());
    match cmd {
        Command::Reduce => reduce(cfg, out, &mut report)?,
        Command::Parametrix => parametrix(cfg, out, &mut report)?,
        Command::State => state(cfg, out, &mut report)?,
        Command::Verify => verify(cfg, &mut report)?,
        Command::Static => static_check(cfg, out, &mut report)?,
        Command::Glue => glue(cfg, out, &mut report)?,
        Command::Egorov => collect(&mut report, "geometry", cfg.model().and_then(|m| suites::geometry(cfg, &m)))?,
        Command::Sweep => sweep(cfg, out, &mut report)?,
    }
    fs::write(out.join(format!("{}.config.toml", cmd.name())), cfg.to_toml())?;
    report.write(out, cmd.name())?;
    Ok(report)
}

fn model(cfg: &RunConfig) -> Result<ModelCoefficients> {
    // invalid coefficients are a configuration problem
    cfg.model().map_err(|e| match e {
        Error::Hypothesis(m) => Error::Config(m),
        e => e,
    })
}

/// Sampled model coefficients at the window nodes.
#[derive(Serialize)]
struct ModelDump {
    grid: GridInfo,
    times: Vec<f64>,
    a11: Vec<Vec<f64>>,
    b1_re: Vec<Vec<f64>>,
    b1_im: Vec<Vec<f64>>,
    m: Vec<Vec<f64>>,
}

fn reduce(cfg: &RunConfig, out: &Path, report: &mut Report) -> Result<()> {
    let model = model(cfg)?;
    let times = cfg.parametrix_options().window();
    let mut dump = ModelDump { grid: GridInfo::of(model.grid()), times: times.clone(), a11: vec![], b1_re: vec![], b1_im: vec![], m: vec![] };
    let mut a11_min = f64::INFINITY;
    for &t in &times {
        let s = model.at(t)?;
        a11_min = s.a11.re().into_iter().fold(a11_min, f64::min);
        dump.a11.push(s.a11.re());
        dump.b1_re.push(s.b1.re());
        dump.b1_im.push(s.b1.values().iter().map(|v| v.im).collect());
        dump.m.push(s.m.re());
    }
    io::write_json(&out.join("model.json"), &dump)?;
    report.push(Row::new("a11_minimum", anchor::FACTORIZATION, a11_min, Relation::Gt, 0.0));
    if let Some(md) = cfg.model.metric_data() {
        let res = crate::geometry::factorization_check(&model, &md, cfg.window.t_max, cfg.seed);
        collect(report, "factorization", res.map(|v| vec![Row::new("factorization_residual", anchor::FACTORIZATION, v, Relation::Lt, 1e-8)]))?;
    }
    Ok(())
}

fn build(cfg: &RunConfig) -> Result<ParametrixBundle> {
    ParametrixBundle::build(&model(cfg)?, &cfg.parametrix_options())
}

fn parametrix(cfg: &RunConfig, out: &Path, report: &mut Report) -> Result<()> {
    let bundle = match build(cfg) {
        Ok(b) => b,
        Err(e) if fatal(&e) => return Err(e),
        Err(e) => {
            report.errors.push(format!("build: {e}"));
            return Ok(());
        }
    };
    io::write_bundle_cache(&out.join(BUNDLE_DIR), &bundle)?;
    collect(report, "bundle", suites::bundle_rows(cfg, &bundle))
}

/// Frame from the cached `r`; the cache must match the configured grid.
fn cached_frame(cfg: &RunConfig, out: &Path) -> Result<Frame> {
    let dir = out.join(BUNDLE_DIR);
    if !dir.join(io::MANIFEST).exists() {
        return Err(Error::Config(format!("no bundle cache in {}; run the parametrix command first", dir.display())));
    }
    let (manifest, r) = io::read_cached_r(&dir)?;
    if manifest.grid != (GridInfo { n: cfg.grid.n, length: cfg.grid.length }) || manifest.truncation != cfg.truncation {
        return Err(Error::Config("bundle cache was built for a different grid or truncation".into()));
    }
    Frame::new(&r)
}

fn state(cfg: &RunConfig, out: &Path, report: &mut Report) -> Result<()> {
    let frame = cached_frame(cfg, out)?;
    collect(report, "states", suites::state_families(cfg, &frame))?;
    let dir = out.join(STATE_DIR);
    io::write_state(&dir, "canonical", &canonical_state(frame.r())?)?;
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(cfg.seed);
    let spec = random_spec(frame.grid(), cfg.state.scale, &mut rng)?;
    match hadamard_family(&frame, &spec, &cfg.smoothing_check()) {
        Ok(lam) => {
            io::write_state(&dir, "family", &lam)?;
        }
        Err(e) => report.errors.push(format!("family export: {e}")),
    }
    Ok(())
}

fn verify(cfg: &RunConfig, report: &mut Report) -> Result<()> {
    let model = model(cfg)?;
    let bundle = match ParametrixBundle::build(&model, &cfg.parametrix_options()) {
        Ok(b) => b,
        Err(e) if fatal(&e) => return Err(e),
        Err(e) => {
            report.errors.push(format!("build: {e}"));
            return Ok(());
        }
    };
    collect(report, "identities", suites::exact_identities(cfg, &bundle))?;
    collect(report, "smoothing", suites::smoothing_residuals(cfg, &bundle))?;
    collect(report, "oracle", suites::compare_with_oracle(cfg, &model, &[cfg.truncation]).map(|c| suites::oracle_rows(&c, "")))?;
    collect(report, "splitting", suites::splitting(cfg, &bundle))
}

fn static_check(cfg: &RunConfig, out: &Path, report: &mut Report) -> Result<()> {
    let model = model(cfg)?;
    if !model.is_static() {
        return Err(Error::Config("the static command needs a time-independent model".into()));
    }
    let bundle = ParametrixBundle::build(&model, &cfg.parametrix_options());
    collect(report, "static", bundle.and_then(|b| suites::static_cross_check(cfg, &b)))?;
    let s = model.at(0.0)?;
    let a = crate::quantize::diff_op_matrix(&s.a11, &s.b1, &s.m)?;
    let dir = out.join(STATE_DIR);
    io::write_state(&dir, "vacuum", &static_vacuum(&a)?)?;
    io::write_state(&dir, "kms", &static_kms(&a, cfg.state.beta)?)?;
    Ok(())
}

fn glue(cfg: &RunConfig, out: &Path, report: &mut Report) -> Result<()> {
    let frame = cached_frame(cfg, out)?;
    collect(report, "gluing", suites::gluing(cfg, &frame))?;
    let lam = canonical_state(frame.r())?;
    let charts: Vec<_> = partition_windows(frame.grid(), cfg.glue.charts, cfg.glue.overlap)?.into_iter().map(|w| (w, lam.clone())).collect();
    io::write_state(&out.join(STATE_DIR), "glued", &glue_states(&charts)?)?;
    Ok(())
}

fn sweep(cfg: &RunConfig, out: &Path, report: &mut Report) -> Result<()> {
    let mut table = String::from("n,N,K,t,error\n");
    for &n in &cfg.sweep.sizes {
        let mut c = cfg.clone();
        c.grid.n = n;
        c.validate()?;
        let model = model(&c)?;
        match suites::compare_with_oracle(&c, &model, &cfg.sweep.truncations) {
            Ok(cmp) => {
                table.push_str(&cmp.csv_lines());
                report.extend(suites::oracle_rows(&cmp, &format!("_n{n}")));
            }
            Err(e) if fatal(&e) => return Err(e),
            Err(e) => report.errors.push(format!("sweep n={n}: {e}")),
        }
    }
    fs::write(out.join("sweep_table.csv"), table)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = std::env::temp_dir().join(format!("hadamard-lock-{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        let a = RunLock::acquire(&dir).unwrap();
        assert!(matches!(RunLock::acquire(&dir), Err(Error::Config(_))));
        drop(a);
        let _b = RunLock::acquire(&dir).unwrap();
        drop(_b);
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn command_names_roundtrip() {
        for c in Command::ALL {
            assert_eq!(Command::parse(c.name()), Some(c));
        }
        assert_eq!(Command::parse("nope"), None);
    }
}
