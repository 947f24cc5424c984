use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliResult;

#[derive(Clone, Debug, Serialize)]
pub struct FileDigest {
    pub file: String,
    pub sha256: String,
}

/// Record of one invocation: the resolved configuration and digests of
/// every file read and written. Paths are relative to the input and
/// output directories so reruns elsewhere produce the same bytes.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| sacdnet_core::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn digests(dir: &Path, files: &[String]) -> CliResult<Vec<FileDigest>> {
    files
        .iter()
        .map(|f| {
            Ok(FileDigest {
                file: f.clone(),
                sha256: sha256_file(&dir.join(f))?,
            })
        })
        .collect()
}
