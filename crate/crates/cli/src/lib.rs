//! Batch runner: reads a suite configuration, runs the checks on a worker
//! pool and writes a JSON manifest plus one CSV table per check kind.

pub mod checks;
pub mod config;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use checks::{Context, Record, Task};
use config::SuiteConfig;

pub const SCHEMA_VERSION: u32 = 1;
/// Overrides the worker count when `--jobs` is not given.
pub const JOBS_ENV: &str = "LOCFLOER_JOBS";
/// The shipped configuration, used when `--config` is absent.
pub const DEFAULT_CONFIG: &str = include_str!("../../../configs/suite.toml");

#[derive(Parser, Debug)]
#[command(name = "locfloer", version, about = "Index, generating-function and equivariant homology checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Suite configuration (TOML); defaults to the shipped configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the seed of the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for the manifest and CSV tables.
    #[arg(long, global = true, default_value = "locfloer-out")]
    pub out: PathBuf,
    /// Restrict to one coefficient prime (or period).
    #[arg(long, global = true)]
    pub p: Option<u32>,
    /// Restrict to one named field, germ or path.
    #[arg(long, global = true)]
    pub family: Option<String>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Conley-Zehnder indices, determinant identity, iterated signs.
    Cz,
    /// Gradient degrees and Lefschetz indices.
    Degree,
    /// Generating functions of twisted products and their defects.
    Genfunc,
    /// Local Morse homology of the declared fields.
    Homology,
    /// Smith inequalities and towers.
    Smith,
    /// Calibration followed by the supertrace checks.
    Supertrace,
    /// Everything, calibration first.
    Suite,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Cz => "cz",
            Command::Degree => "degree",
            Command::Genfunc => "genfunc",
            Command::Homology => "homology",
            Command::Smith => "smith",
            Command::Supertrace => "supertrace",
            Command::Suite => "suite",
        }
    }
}

#[derive(Serialize, Debug, Clone, PartialEq, Eq)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
}

#[derive(Serialize, Debug)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config_sha256: String,
    pub seed: u64,
    pub calibration: Option<Value>,
    pub records: Vec<Record>,
    pub summary: Summary,
    pub wall_time_ms: u64,
}

/// Exit status: 0 when every verdict passes, 1 on a failed check, 2 on a
/// usage or configuration error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(manifest) => {
            for r in manifest.records.iter().filter(|r| !r.verdict) {
                eprintln!("FAIL {} {}: {}", r.check, r.name, r.error.as_deref().unwrap_or("verdict failed"));
            }
            eprintln!("{} checks: {} passed, {} failed; manifest in {}", manifest.summary.total, manifest.summary.passed, manifest.summary.failed, cli.out.display());
            if manifest.summary.failed == 0 {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn jobs(cli: &Cli, config: &SuiteConfig) -> Result<usize, String> {
    if let Some(j) = cli.jobs {
        return if j > 0 { Ok(j) } else { Err("--jobs must be positive".into()) };
    }
    if let Ok(v) = std::env::var(JOBS_ENV) {
        return v.parse::<usize>().ok().filter(|&j| j > 0).ok_or_else(|| format!("{JOBS_ENV}={v} is not a positive integer"));
    }
    Ok(config.jobs.unwrap_or(1))
}

/// Runs the selected checks and writes the reports; configuration and I/O
/// problems are errors, failing checks are not.
pub fn execute(cli: &Cli) -> Result<Manifest, String> {
    let start = std::time::Instant::now();
    let (config, text) = match &cli.config {
        Some(path) => SuiteConfig::load(path).map_err(|e| e.to_string())?,
        None => (SuiteConfig::parse(DEFAULT_CONFIG).map_err(|e| format!("shipped configuration: {e}"))?, DEFAULT_CONFIG.to_string()),
    };
    let width = jobs(cli, &config)?;
    let fields = config.resolve_fields().map_err(|e| e.to_string())?;
    let germs = config.resolve_germs().map_err(|e| e.to_string())?;
    let mut fields_p = vec![0];
    fields_p.extend(config.primes.iter().copied());
    let ctx = Context { seed: cli.seed.unwrap_or(config.seed), fields_p, fields, germs, family: cli.family.clone(), only_p: cli.p, config };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(width).build().map_err(|e| e.to_string())?;

    let command = cli.command;
    let wants = |c: Command| command == c || command == Command::Suite;
    let mut records = Vec::new();
    let mut calibration = None;
    if wants(Command::Supertrace) {
        let dims = checks::calibration_dims(&ctx);
        if !dims.is_empty() {
            let (record, c) = pool.install(|| checks::calibrate(&ctx, &dims));
            records.push(record);
            calibration = c;
        }
    }
    let mut tasks: Vec<Task> = Vec::new();
    if wants(Command::Cz) {
        tasks.extend(checks::cz_tasks(&ctx));
    }
    if wants(Command::Degree) {
        tasks.extend(checks::degree_tasks(&ctx));
    }
    if wants(Command::Genfunc) {
        tasks.extend(checks::genfunc_tasks(&ctx));
    }
    if wants(Command::Homology) {
        tasks.extend(checks::homology_tasks(&ctx));
    }
    if wants(Command::Smith) {
        tasks.extend(checks::smith_tasks(&ctx));
    }
    if wants(Command::Supertrace) {
        tasks.extend(checks::supertrace_tasks(&ctx, calibration.as_ref()));
    }
    // Collecting an indexed parallel iterator keeps declaration order.
    records.extend(pool.install(|| tasks.into_par_iter().map(|t| t()).collect::<Vec<_>>()));

    let passed = records.iter().filter(|r| r.verdict).count();
    let summary = Summary { total: records.len(), passed, failed: records.len() - passed };
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        tool: "locfloer",
        version: env!("CARGO_PKG_VERSION"),
        command: command.name(),
        config_sha256: sha256_hex(text.as_bytes()),
        seed: ctx.seed,
        calibration: calibration.as_ref().map(|c| serde_json::to_value(c).expect("serializable")),
        records,
        summary,
        wall_time_ms: start.elapsed().as_millis() as u64,
    };
    write_reports(&cli.out, &manifest)?;
    Ok(manifest)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn write_reports(dir: &Path, manifest: &Manifest) -> Result<(), String> {
    let io = |e: std::io::Error| format!("{}: {e}", dir.display());
    std::fs::create_dir_all(dir).map_err(io)?;
    let json = serde_json::to_string_pretty(manifest).map_err(|e| e.to_string())?;
    std::fs::write(dir.join("manifest.json"), json + "\n").map_err(io)?;
    let mut tables: BTreeMap<&str, Vec<&Record>> = BTreeMap::new();
    for r in &manifest.records {
        tables.entry(r.check.as_str()).or_default().push(r);
    }
    for (check, rows) in tables {
        let mut w = csv::Writer::from_path(dir.join(format!("{check}.csv"))).map_err(|e| e.to_string())?;
        // Failed records carry different cells, so the header is the union.
        let mut header: Vec<&str> = Vec::new();
        for (k, _) in rows.iter().flat_map(|r| r.row.iter()) {
            if !header.contains(&k.as_str()) {
                header.push(k);
            }
        }
        w.write_record(&header).map_err(|e| e.to_string())?;
        for r in rows {
            let line: Vec<&str> = header.iter().map(|h| r.row.iter().find(|(k, _)| k == h).map_or("", |(_, v)| v.as_str())).collect();
            w.write_record(&line).map_err(|e| e.to_string())?;
        }
        w.flush().map_err(|e| e.to_string())?;
    }
    Ok(())
}

/// The manifest with every `wall_time_ms` field removed, for comparing runs.
pub fn strip_timing(mut v: Value) -> Value {
    match &mut v {
        Value::Object(map) => {
            map.remove("wall_time_ms");
            for x in map.values_mut() {
                *x = strip_timing(x.take());
            }
        }
        Value::Array(items) => {
            for x in items.iter_mut() {
                *x = strip_timing(x.take());
            }
        }
        _ => {}
    }
    v
}
