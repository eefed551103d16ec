//! File plumbing shared by the subcommands: atomic writes, input hashing,
//! sample loading, and the per-run reproducibility manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use drchot_core::features::{parse_samples_jsonl, Sample};

/// Write `bytes` to `path` atomically: temp file in the same directory,
/// then rename over the target.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::Builder::new()
        .prefix(".drchot-tmp")
        .tempfile_in(dir)
        .with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(bytes)
        .with_context(|| format!("writing {}", path.display()))?;
    tmp.persist(path)
        .with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

/// Canonical JSON bytes (sorted object keys, trailing newline).
pub fn canonical_json<T: Serialize>(value: &T) -> Vec<u8> {
    let value = serde_json::to_value(value).expect("serializable");
    let mut bytes = serde_json::to_vec(&value).expect("serializable");
    bytes.push(b'\n');
    bytes
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

#[derive(Serialize)]
struct InputRecord {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    params: serde_json::Value,
    inputs: Vec<InputRecord>,
    outputs: Vec<String>,
}

/// Record the command, its resolved parameters, and a hash of every input
/// next to the outputs: `<dir>/run.json` for directory outputs, or
/// `<file>.run.json` alongside a single-file output.
pub fn write_run_manifest(
    target: &Path,
    is_dir: bool,
    command: &str,
    params: serde_json::Value,
    inputs: &[PathBuf],
    outputs: &[PathBuf],
) -> Result<()> {
    let mut records = Vec::with_capacity(inputs.len());
    for input in inputs {
        let bytes = read_bytes(input)?;
        records.push(InputRecord {
            path: input.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = RunManifest {
        command,
        params,
        inputs: records,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    let path = if is_dir {
        target.join("run.json")
    } else {
        let mut name = target.file_name().unwrap_or_default().to_os_string();
        name.push(".run.json");
        target.with_file_name(name)
    };
    atomic_write(&path, &canonical_json(&manifest))
}

/// Load and concatenate sample files, requiring a uniform feature width.
pub fn load_samples(paths: &[PathBuf]) -> Result<Vec<Sample>> {
    let mut all: Vec<Sample> = Vec::new();
    for path in paths {
        let bytes = read_bytes(path)?;
        let samples =
            parse_samples_jsonl(&bytes).with_context(|| format!("parsing {}", path.display()))?;
        if let (Some(first), Some(new)) = (all.first(), samples.first()) {
            if first.features.len() != new.features.len() {
                bail!(drchot_core::Error::Dimension(format!(
                    "{} has {}-wide features, earlier files have {}",
                    path.display(),
                    new.features.len(),
                    first.features.len()
                )));
            }
        }
        all.extend(samples);
    }
    if all.is_empty() {
        bail!(drchot_core::Error::validation("samples", "no samples loaded"));
    }
    Ok(all)
}

/// Parse a JSON config file with serde defaults, or fall back to `T::default()`.
pub fn load_config<T>(path: Option<&PathBuf>) -> Result<T>
where
    T: Default + serde::de::DeserializeOwned,
{
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let bytes = read_bytes(p)?;
            let mut de = serde_json::Deserializer::from_slice(&bytes);
            serde_path_to_error::deserialize(&mut de)
                .map_err(|e| {
                    anyhow::Error::new(drchot_core::Error::Schema {
                        path: e.path().to_string(),
                        message: e.inner().to_string(),
                    })
                })
                .with_context(|| format!("parsing {}", p.display()))
        }
    }
}

/// The stable sample key used in score files: `design:col:row`.
pub fn sample_key(s: &Sample) -> String {
    format!("{}:{}:{}", s.design_id, s.col, s.row)
}
