use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, CliResult, ErrorClass};
use crate::manifest::{digests, sha256_file, FileDigest, Manifest};

pub const PATIENTS: &str = "patients.jsonl";
pub const ENCOUNTERS: &str = "encounters.jsonl";
pub const BOOKKEEPING: &str = "bookkeeping.json";
pub const EXAMPLES: &str = "examples.jsonl";
pub const PIPELINE_REPORT: &str = "pipeline_report.json";
pub const FOLDS: &str = "folds.json";

pub fn checkpoint(model: &str, fold: usize) -> String {
    format!("models/{model}/fold{fold}.json")
}

pub fn history(model: &str, fold: usize) -> String {
    format!("models/{model}/fold{fold}.history.csv")
}

pub fn mc_predictions(model: &str, fold: usize) -> String {
    format!("mc/{model}/fold{fold}.jsonl")
}

/// Tracks what one invocation reads and writes, for its manifest.
pub struct Run {
    command: String,
    input: PathBuf,
    output: PathBuf,
    inputs: Vec<FileDigest>,
    outputs: Vec<String>,
}

impl Run {
    pub fn new(command: impl Into<String>, input: &Path, output: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(output)
            .map_err(|e| CliError::new(ErrorClass::Internal, format!("{}: {e}", output.display())))?;
        Ok(Self {
            command: command.into(),
            input: input.to_path_buf(),
            output: output.to_path_buf(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    /// Path of a required input; fails before any work if it is absent.
    pub fn input(&mut self, rel: &str) -> CliResult<PathBuf> {
        let path = self.input.join(rel);
        if !path.is_file() {
            return Err(CliError::new(
                ErrorClass::MissingInput,
                format!("required input {} does not exist", path.display()),
            ));
        }
        if !self.inputs.iter().any(|d| d.file == rel) {
            self.inputs.push(FileDigest {
                file: rel.to_string(),
                sha256: sha256_file(&path)?,
            });
        }
        Ok(path)
    }

    /// Path for an output file, creating its directory.
    pub fn output(&mut self, rel: &str) -> CliResult<PathBuf> {
        let path = self.output.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::new(ErrorClass::Internal, format!("{}: {e}", parent.display())))?;
        }
        self.outputs.push(rel.to_string());
        Ok(path)
    }

    pub fn write_text(&mut self, rel: &str, text: &str) -> CliResult<()> {
        let path = self.output(rel)?;
        std::fs::write(&path, text)
            .map_err(|e| CliError::new(ErrorClass::Internal, format!("{}: {e}", path.display())))
    }

    /// Writes `manifests/<name>.json` next to the outputs.
    pub fn finish(self, name: &str, config: &impl Serialize) -> CliResult<()> {
        let manifest = Manifest {
            tool: "sacdnet",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            config: serde_json::to_value(config).map_err(|e| CliError::new(ErrorClass::Internal, e.to_string()))?,
            inputs: self.inputs,
            outputs: digests(&self.output, &self.outputs)?,
        };
        let path = self.output.join("manifests").join(format!("{name}.json"));
        std::fs::create_dir_all(path.parent().expect("manifest dir"))
            .map_err(|e| CliError::new(ErrorClass::Internal, e.to_string()))?;
        sacdnet_core::io::write_json(&path, &manifest)?;
        Ok(())
    }
}
