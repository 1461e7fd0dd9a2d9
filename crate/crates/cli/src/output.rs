use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

/// Failure of a subcommand, split by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad arguments or configuration (exit 1).
    Validation(String),
    /// The numerics failed to converge or a check did not hold (exit 2).
    Numerical(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Numerical(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(m) | Failure::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<neurop_core::Error> for Failure {
    fn from(e: neurop_core::Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Validation(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Validation(format!("i/o error: {e}"))
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Validation(format!("csv error: {e}"))
    }
}

pub type CmdResult<T> = Result<T, Failure>;

/// Reads a JSON config, or the default when no path is given. Parse errors
/// name the file, line and column.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> CmdResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        Failure::Validation(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column()))
    })
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Output directory of one run: CSV tables plus a single `manifest.json`.
pub struct RunDir {
    dir: PathBuf,
    subcommand: &'static str,
    seed: u64,
    config: Value,
    started: f64,
    outputs: Vec<String>,
}

impl RunDir {
    pub fn create(dir: &Path, subcommand: &'static str, seed: u64, config: &impl Serialize) -> CmdResult<Self> {
        fs::create_dir_all(dir)?;
        Ok(RunDir {
            dir: dir.to_path_buf(),
            subcommand,
            seed,
            config: serde_json::to_value(config).expect("configs serialize"),
            started: unix_now(),
            outputs: Vec::new(),
        })
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CmdResult<()> {
        let mut w = csv::Writer::from_path(self.dir.join(name))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    pub fn file(&mut self, name: &str, contents: &str) -> CmdResult<()> {
        fs::write(self.dir.join(name), contents)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    pub fn finish(self, outcome: &CmdResult<()>) -> CmdResult<()> {
        let (status, message) = match outcome {
            Ok(()) => ("ok", Value::Null),
            Err(f) => (if f.exit_code() == 1 { "validation_error" } else { "numerical_failure" }, json!(f.to_string())),
        };
        let manifest = json!({
            "tool": "neurop",
            "version": env!("CARGO_PKG_VERSION"),
            "subcommand": self.subcommand,
            "argv": std::env::args().collect::<Vec<_>>(),
            "seed": self.seed,
            "config": self.config,
            "started_unix": self.started,
            "finished_unix": unix_now(),
            "outputs": self.outputs,
            "status": status,
            "message": message,
        });
        fs::write(
            self.dir.join("manifest.json"),
            serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
        )?;
        Ok(())
    }
}

pub fn fmt_f(v: f64) -> String {
    format!("{v}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f).unwrap_or_default()
}
