//! Command-line front end: configuration, experiment runners and report
//! writing around `gsb-renorm-core`.
//!
//! Exit codes: 0 every check passed, 1 some check failed, 2 the
//! configuration was rejected (nothing written), 3 the computation or the
//! writing of results failed (partial results removed).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod output;
pub mod presets;

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use thiserror::Error;

use config::{ExperimentConfig, Mode, Overrides};
use output::{sha256_hex, summary_text, Criterion, Manifest, OutputDir, Status};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("computation failed: {0}")]
    Compute(String),
    #[error("output error: {0}")]
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Compute(_) | RunError::Io(_) => 3,
        }
    }
}

/// Environment variable fixing the worker thread count.
pub const THREADS_VAR: &str = "GSB_RENORM_THREADS";

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigSource {
    Path(PathBuf),
    Preset(String),
    Text(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Invocation {
    pub source: ConfigSource,
    /// Mode required by the subcommand; a config asking for another mode is rejected.
    pub mode: Option<Mode>,
    pub out: Option<PathBuf>,
    pub overrides: Overrides,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub criteria: Vec<Criterion>,
    pub out_dir: PathBuf,
    /// `(file, sha256)` in write order; the manifest comes last.
    pub files: Vec<(String, String)>,
}

impl RunOutcome {
    pub fn all_passed(&self) -> bool {
        self.criteria.iter().all(|c| c.status != Status::Fail)
    }

    pub fn exit_code(&self) -> i32 {
        if self.all_passed() {
            0
        } else {
            1
        }
    }
}

pub fn load_config(source: &ConfigSource) -> Result<ExperimentConfig, RunError> {
    match source {
        ConfigSource::Path(p) => ExperimentConfig::load(p),
        ConfigSource::Preset(name) => ExperimentConfig::parse(presets::get(name)?),
        ConfigSource::Text(t) => ExperimentConfig::parse(t),
    }
}

fn thread_count() -> Result<Option<usize>, RunError> {
    match std::env::var(THREADS_VAR) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(RunError::Config(format!("{THREADS_VAR} must be a positive integer, got {v:?}"))),
        },
    }
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

fn default_out_dir(mode: Mode, seed: u64) -> PathBuf {
    Path::new("runs").join(format!("{}-seed{seed}", mode.as_str()))
}

/// Validate, compute, then write CSVs, `summary.txt` and finally `manifest.txt`.
pub fn run(inv: &Invocation) -> Result<RunOutcome, RunError> {
    let mut cfg = load_config(&inv.source)?;
    cfg.apply(&inv.overrides);
    if let Some(m) = inv.mode {
        if cfg.mode != m {
            return Err(RunError::Config(format!(
                "config mode {} does not match the command ({})",
                cfg.mode.as_str(),
                m.as_str()
            )));
        }
    }
    let canonical = cfg.canonical();
    let prepared = config::prepare(cfg)?;
    let threads = thread_count()?;
    let out_path = inv
        .out
        .clone()
        .or_else(|| prepared.config.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| default_out_dir(prepared.config.mode, prepared.config.seed));

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| RunError::Compute(e.to_string()))?;

    let started = unix_now();
    let clock = Instant::now();
    let result = pool.install(|| experiments::run_mode(&prepared))?;
    let elapsed = clock.elapsed().as_secs_f64();

    let mut out = OutputDir::create(&out_path)?;
    let written = write_results(&mut out, &prepared, &canonical, &result, pool.current_num_threads(), started, elapsed);
    if let Err(e) = written {
        out.discard();
        return Err(e);
    }
    Ok(RunOutcome { criteria: result.criteria, out_dir: out_path, files: out.inventory().to_vec() })
}

fn write_results(
    out: &mut OutputDir,
    p: &config::Prepared,
    canonical: &str,
    result: &experiments::ModeResult,
    threads: usize,
    started: f64,
    elapsed: f64,
) -> Result<(), RunError> {
    for (name, body) in &result.tables {
        out.write(name, body)?;
    }
    out.write("summary.txt", &summary_text(&result.criteria))?;

    let mut m = Manifest::default();
    m.push("tool", env!("CARGO_PKG_NAME"));
    m.push("code_version", env!("CARGO_PKG_VERSION"));
    m.push("mode", p.config.mode.as_str());
    m.push("config_sha256", sha256_hex(canonical.as_bytes()));
    m.push("seed", p.config.seed);
    m.push("n_modes", p.grid.len());
    m.push("n_max", p.basis.n_max());
    m.push("spin_dim", p.spin.dim());
    m.push("fock_dim", p.basis.dim());
    m.push("measure_space", format!("[{}, {}] with omega(k) = k", p.config.grid.mass, p.config.grid.e_max));
    for (spec, uv) in p.specs.iter().zip(p.specs.iter().map(gsb_renorm_core::model::classify_uv_case)) {
        let class = uv
            .map(|u| format!("{}{}", u.case, if u.critical { " critical" } else { "" }))
            .unwrap_or_else(|e| e.to_string());
        m.push("form_factor", format!("{} [{class}]", spec.description));
    }
    m.push("threads", threads);
    m.push("started_unix", format!("{started:.3}"));
    m.push("elapsed_seconds", format!("{elapsed:.3}"));
    for (k, v) in &result.manifest {
        m.push(k, v);
    }
    for c in &result.criteria {
        m.push(&format!("check.{}", c.id), c.status.as_str());
    }
    for (name, hash) in out.inventory() {
        m.push(&format!("sha256.{name}"), hash);
    }
    out.write("manifest.txt", &m.render())
}

/// Print the one-coupling assumption certificate for a configuration.
pub fn assume_check(source: &ConfigSource, overrides: &Overrides) -> Result<(String, bool), RunError> {
    let mut cfg = load_config(source)?;
    cfg.apply(overrides);
    cfg.mode = Mode::Triviality;
    let p = config::prepare(cfg)?;
    let cert = gsb_renorm_core::triviality::assumption_check(&p.spin).map_err(|e| RunError::Compute(e.to_string()))?;
    Ok((cert.summary(), cert.holds))
}

/// Summaries of earlier runs found under `dir` (a run directory or a parent of several).
pub fn report(dir: &Path) -> Result<String, RunError> {
    let io = |e: std::io::Error| RunError::Io(format!("{}: {e}", dir.display()));
    let mut runs = Vec::new();
    if dir.join("summary.txt").is_file() {
        runs.push(dir.to_path_buf());
    } else {
        for entry in std::fs::read_dir(dir).map_err(io)? {
            let path = entry.map_err(io)?.path();
            if path.join("summary.txt").is_file() {
                runs.push(path);
            }
        }
    }
    if runs.is_empty() {
        return Err(RunError::Io(format!("no runs under {}", dir.display())));
    }
    runs.sort();
    let mut s = String::new();
    for r in runs {
        let summary = std::fs::read_to_string(r.join("summary.txt")).map_err(io)?;
        s.push_str(&format!("# {}\n{summary}", r.display()));
    }
    Ok(s)
}
