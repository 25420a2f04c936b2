use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST_FORMAT: &str = "quadbiped-manifest/1";

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to re-run a command and check its files.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub format: &'static str,
    pub toolkit_version: &'static str,
    pub subcommand: String,
    pub argv: Vec<String>,
    pub seed: u64,
    pub workers: Option<usize>,
    pub config_paths: Vec<String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

/// Digests of a file, or of every file under a directory in name order.
pub fn digest_path(path: &Path) -> Result<Vec<FileDigest>> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)
            .with_context(|| format!("reading directory {}", path.display()))?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()?;
        entries.sort();
        let mut out = Vec::new();
        for e in entries {
            out.extend(digest_path(&e)?);
        }
        return Ok(out);
    }
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(vec![FileDigest {
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    }])
}

/// Where the manifest goes when `--manifest` is not given: `<output>.manifest.json`
/// beside the primary output, which may be a file or a directory.
pub fn default_location(primary: &Path) -> PathBuf {
    let name = primary.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    primary.with_file_name(format!("{name}.manifest.json"))
}

/// Digests of several paths, each file listed once.
pub fn digest_all(paths: &[PathBuf]) -> Result<Vec<FileDigest>> {
    let mut out: Vec<FileDigest> = Vec::new();
    for p in paths {
        for d in digest_path(p)? {
            if !out.iter().any(|o| o.path == d.path) {
                out.push(d);
            }
        }
    }
    Ok(out)
}
