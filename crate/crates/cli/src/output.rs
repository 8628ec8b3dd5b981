use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use dynenvwalk_core::fixtures;
use dynenvwalk_core::model::{ModelLoadError, ModelSpec};
use dynenvwalk_core::Error;
use serde::Serialize;
use serde_json::{json, Value};
use sha1::{Digest, Sha1};

use crate::ModelArgs;

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or unreadable input syntax: exit 2.
    Usage(String),
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    /// Model or data failure: exit 1.
    Domain { kind: &'static str, message: String },
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Parse { .. } => 2,
            CliError::Domain { .. } | CliError::Io(_) => 1,
        }
    }

    pub fn to_json(&self) -> String {
        let v = match self {
            CliError::Usage(m) => json!({"kind": "usage", "message": m}),
            CliError::Parse {
                path,
                line,
                column,
                message,
            } => json!({"kind": "parse", "path": path, "line": line, "column": column, "message": message}),
            CliError::Domain { kind, message } => json!({"kind": kind, "message": message}),
            CliError::Io(m) => json!({"kind": "io", "message": m}),
        };
        json!({"error": v, "exit_code": self.exit_code()}).to_string()
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let kind = match &e {
            Error::InvalidModel(_) => "invalid_model",
            Error::Domain(_) => "domain",
            Error::InfiniteExponent => "infinite_exponent",
            Error::Infeasible { .. } => "infeasible",
            Error::ContractViolation(_) => "contract_violation",
            Error::OrderingViolation { .. } => "ordering_violation",
            Error::EllipticityViolation { .. } => "ellipticity_violation",
            Error::InsufficientData { .. } => "insufficient_data",
            Error::DegenerateDirection { .. } => "degenerate_direction",
            Error::Horizon { .. } => "horizon",
            Error::Config(_) => "config",
        };
        CliError::Domain {
            kind,
            message: e.to_string(),
        }
    }
}

pub fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// A loaded model with enough provenance to reproduce it.
pub struct LoadedModel {
    pub spec: ModelSpec,
    pub source: String,
    pub content_hash: String,
}

/// Git blob hash: `sha1("blob <len>\0" ++ bytes)`.
pub fn git_blob_sha1(bytes: &[u8]) -> String {
    let mut h = Sha1::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn load_model(args: &ModelArgs) -> Result<LoadedModel, CliError> {
    match (&args.model, &args.fixture) {
        (Some(path), None) => {
            let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
            let text = String::from_utf8(bytes.clone()).map_err(|_| CliError::Parse {
                path: path.display().to_string(),
                line: 0,
                column: 0,
                message: "model file is not UTF-8".into(),
            })?;
            let spec = ModelSpec::from_json(&text).map_err(|e| match e {
                ModelLoadError::Parse {
                    line,
                    column,
                    message,
                } => CliError::Parse {
                    path: path.display().to_string(),
                    line,
                    column,
                    message,
                },
                ModelLoadError::Model(e) => e.into(),
            })?;
            Ok(LoadedModel {
                spec,
                source: path.display().to_string(),
                content_hash: git_blob_sha1(&bytes),
            })
        }
        (None, Some(name)) => {
            let spec = fixtures::by_name(name).ok_or_else(|| {
                CliError::Usage(format!(
                    "unknown fixture {name:?}; known: {}",
                    fixtures::NAMES.join(", ")
                ))
            })?;
            let canonical = serde_json::to_vec_pretty(&spec.to_file()).expect("model serializes");
            Ok(LoadedModel {
                spec,
                source: format!("fixture:{name}"),
                content_hash: git_blob_sha1(&canonical),
            })
        }
        _ => Err(CliError::Usage("give exactly one of --model or --fixture".into())),
    }
}

/// Refuses to run experiments on models that fail an assumption.
pub fn require_valid(m: &LoadedModel) -> Result<(), CliError> {
    m.spec.ensure_valid()?;
    Ok(())
}

/// Output directory with a running list of files written.
pub struct OutDir {
    dir: PathBuf,
    files: Vec<String>,
    started: Instant,
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(OutDir {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    pub fn write_with<F>(&mut self, name: &str, f: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut std::io::BufWriter<fs::File>) -> Result<(), CliError>,
    {
        let p = self.path(name);
        let file = fs::File::create(&p).map_err(|e| io_err(&p, e))?;
        let mut w = std::io::BufWriter::new(file);
        f(&mut w)?;
        use std::io::Write;
        w.flush().map_err(|e| io_err(&p, e))
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("serializable");
        text.push('\n');
        let p = self.path(name);
        fs::write(&p, text).map_err(|e| io_err(&p, e))
    }

    /// `manifest.json`: everything needed to rerun the command.
    pub fn finish<C: Serialize>(
        mut self,
        command: &str,
        config: &C,
        seed: Option<u64>,
        model: Option<&LoadedModel>,
        threads: usize,
    ) -> Result<(), CliError> {
        let model_json: Value = match model {
            Some(m) => json!({
                "source": m.source,
                "git_blob_sha1": m.content_hash,
                "content": m.spec.to_file(),
            }),
            None => Value::Null,
        };
        let manifest = json!({
            "command": command,
            "config": config,
            "seed": seed,
            "model": model_json,
            "threads": threads,
            "wall_clock_seconds": self.started.elapsed().as_secs_f64(),
            "versions": {
                "dynenvwalk": env!("CARGO_PKG_VERSION"),
            },
            "outputs": self.files.clone(),
        });
        self.write_json("manifest.json", &manifest)
    }
}

pub fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}
