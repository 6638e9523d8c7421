//! Experiment runner for `hgmrf-core`.
//!
//! Each subcommand merges its flags over the matching config-file table,
//! fills remaining defaults, validates every field before any work starts and
//! writes CSV tables or JSON reports. Output depends only on the resolved
//! configuration and seed.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use hgmrf_core::gmrf::sfar_params_for_snr;
use hgmrf_core::SfarParams;

pub use args::{Cli, Command};
pub use error::{CliError, Result};

use config::{db_to_linear, finite, positive, within, FileConfig};

pub fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::ExponentSweep(a) => commands::sweep::run(a.overlay(file.exponent_sweep)),
        Command::Validate(a) => commands::validate::run(a.overlay(file.validate)),
        Command::Efficiency(a) => commands::efficiency::run(a.overlay(file.efficiency)),
        Command::Sample(a) => commands::sample::run(a.overlay(file.sample)),
        Command::Detect(a) => commands::detect::run(a.overlay(file.detect)),
    }
}

/// SFAR parameters from the CLI's `(snr_db, zeta, sigma2)` triple.
pub(crate) fn model_params(snr_db: f64, zeta: f64, sigma2: f64) -> Result<SfarParams> {
    let snr_db = finite("snr_db", snr_db)?;
    let zeta = within("zeta", zeta, 0.0, 0.25, true)?;
    let sigma2 = positive("sigma2", sigma2)?;
    Ok(sfar_params_for_snr(db_to_linear(snr_db), zeta, sigma2)?)
}

/// Buffered sink for a file path or stdout/stderr, remembering its name for errors.
pub(crate) struct Sink {
    name: PathBuf,
    inner: BufWriter<Box<dyn Write>>,
}

impl Sink {
    pub(crate) fn file_or_stdout(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::file(p),
            None => Ok(Self::wrap("<stdout>", Box::new(io::stdout()))),
        }
    }

    pub(crate) fn file_or_stderr(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::file(p),
            None => Ok(Self::wrap("<stderr>", Box::new(io::stderr()))),
        }
    }

    fn file(path: &Path) -> Result<Self> {
        let f = File::create(path).map_err(|e| CliError::io(path, e))?;
        Ok(Self::wrap(path, Box::new(f)))
    }

    fn wrap(name: impl Into<PathBuf>, w: Box<dyn Write>) -> Self {
        Self {
            name: name.into(),
            inner: BufWriter::new(w),
        }
    }

    pub(crate) fn write_all(&mut self, bytes: &[u8]) -> Result<()> {
        self.inner.write_all(bytes).map_err(|e| CliError::io(&self.name, e))
    }

    pub(crate) fn line(&mut self, line: &str) -> Result<()> {
        self.write_all(line.as_bytes())?;
        self.write_all(b"\n")
    }

    pub(crate) fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(|e| CliError::io(&self.name, e))
    }
}

/// Pretty JSON with a trailing newline.
pub(crate) fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}
