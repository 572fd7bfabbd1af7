//! Command-line front end: configuration, orchestration and export.

pub mod config;
pub mod output;
pub mod run;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use config::{RunConfig, UnitChoice, UnitsBlock};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUN: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "ringlattice",
    version,
    about = "Driven photonic Hofstadter lattice with a central vacancy"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run every experiment of a config (or of a manifest) and write artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; defaults to all cores.
        #[arg(long, env = "RINGLATTICE_THREADS")]
        threads: Option<usize>,
        /// Disorder seed, overriding the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        units: Option<UnitChoice>,
    },
    /// Report every problem with a config at once.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: RunConfig,
    pub version: String,
    pub wall_time_s: f64,
    pub threads: usize,
    pub files: Vec<String>,
}

fn emit_error(record: serde_json::Value, out: Option<&Path>) {
    eprintln!("{record}");
    if let Some(dir) = out {
        if std::fs::create_dir_all(dir).is_ok() {
            let _ = output::write_json(&dir.join("error.json"), &record);
        }
    }
}

fn config_error(diagnostics: Vec<String>, out: Option<&Path>) -> i32 {
    emit_error(
        json!({ "error": "invalid_config", "diagnostics": diagnostics }),
        out,
    );
    EXIT_CONFIG
}

pub fn load(path: &Path) -> Result<RunConfig, Vec<String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| vec![format!("cannot read {}: {e}", path.display())])?;
    config::parse(&text).map_err(|e| vec![e])
}

extern "C" {
    fn openblas_set_num_threads(n: std::os::raw::c_int);
}

/// Keep BLAS single-threaded: parallelism comes from the worker pool, and
/// threaded BLAS reductions are not bit-reproducible.
fn pin_blas() {
    // SAFETY: plain setter in the linked OpenBLAS; no pointers involved.
    unsafe { openblas_set_num_threads(1) }
}

pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    pin_blas();
    match cli.command {
        Command::Validate { config } => match load(&config) {
            Ok(c) => {
                let d = c.diagnostics();
                println!("{}", json!({ "diagnostics": d }));
                if d.is_empty() {
                    EXIT_OK
                } else {
                    EXIT_CONFIG
                }
            }
            Err(d) => {
                println!("{}", json!({ "diagnostics": d }));
                EXIT_CONFIG
            }
        },
        Command::Run {
            config,
            out,
            threads,
            seed,
            units,
        } => {
            let mut cfg = match load(&config) {
                Ok(c) => c,
                Err(d) => return config_error(d, Some(&out)),
            };
            if let Some(s) = seed {
                cfg.seed = Some(s);
            }
            if let Some(u) = units {
                let t_mhz = cfg.units.map_or(config::DEFAULT_T_MHZ, |b| b.t_mhz);
                cfg.units = Some(UnitsBlock { t_mhz, output: u });
            }
            let mut d = cfg.diagnostics();
            if threads == Some(0) {
                d.push("--threads must be at least 1".into());
            }
            if !d.is_empty() {
                return config_error(d, Some(&out));
            }
            let mut builder = rayon::ThreadPoolBuilder::new();
            if let Some(n) = threads {
                builder = builder.num_threads(n);
            }
            let pool = match builder.build() {
                Ok(p) => p,
                Err(e) => {
                    emit_error(
                        json!({ "error": "threads", "message": e.to_string() }),
                        Some(&out),
                    );
                    return EXIT_RUN;
                }
            };
            let start = Instant::now();
            let result = pool.install(|| run::execute(&cfg, &out, cfg.output_units()));
            match result {
                Ok(files) => {
                    let manifest = Manifest {
                        config: cfg,
                        version: ringlattice::VERSION.to_string(),
                        wall_time_s: start.elapsed().as_secs_f64(),
                        threads: pool.current_num_threads(),
                        files,
                    };
                    if let Err(e) = output::write_json(&out.join("manifest.json"), &manifest) {
                        emit_error(json!({ "error": "io", "message": e.to_string() }), None);
                        return EXIT_RUN;
                    }
                    EXIT_OK
                }
                Err(e) => {
                    emit_error(
                        json!({ "error": e.kind(), "message": e.to_string() }),
                        Some(&out),
                    );
                    EXIT_RUN
                }
            }
        }
    }
}
