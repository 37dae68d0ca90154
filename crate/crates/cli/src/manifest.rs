//! Run manifests: what was run, on which inputs, with which parameters.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use turnon_core::io::{parse_device_manifest, read_text, BUILTIN_PREFIX};

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub config: Option<String>,
    pub devices: Vec<String>,
    pub output_dir: String,
    pub parameters: serde_json::Value,
    /// SHA-256 of every input file, keyed by path.
    pub input_hashes: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunManifest {
    pub fn new(subcommand: &str, output_dir: &Path, parameters: serde_json::Value) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: subcommand.into(),
            config: None,
            devices: Vec::new(),
            output_dir: output_dir.display().to_string(),
            parameters,
            input_hashes: BTreeMap::new(),
        }
    }

    pub fn add_file(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.input_hashes
            .insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(())
    }

    /// Records a device reference and every file it pulls in.
    pub fn add_device(&mut self, reference: &str, base: &Path) -> Result<()> {
        self.devices.push(reference.to_string());
        if reference.starts_with(BUILTIN_PREFIX) {
            return Ok(());
        }
        let path = base.join(reference);
        self.add_file(&path)?;
        let m = parse_device_manifest(&read_text(&path)?)
            .with_context(|| format!("device manifest {}", path.display()))?;
        let dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        for f in [&m.iv_csv, &m.c_gd_csv, &m.c_ds_csv] {
            self.add_file(&dir.join(f))?;
        }
        Ok(())
    }

    /// Hash of everything except the output location, so identical runs
    /// written to different folders share a hash.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("manifest serializes");
        v.as_object_mut()
            .expect("manifest is an object")
            .remove("output_dir");
        sha256_hex(v.to_string().as_bytes())
    }

    /// Writes `manifest.json` and returns the hash recorded in every output.
    pub fn write(&self, dir: &Path) -> Result<String> {
        let h = self.hash();
        let mut v = serde_json::to_value(self)?;
        v["manifest_hash"] = serde_json::Value::String(h.clone());
        write_file(
            &dir.join("manifest.json"),
            &serde_json::to_string_pretty(&v)?,
        )?;
        Ok(h)
    }
}

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Serializes `value` with the manifest hash as an extra top-level field.
pub fn json_with_hash<T: Serialize>(value: &T, hash: &str) -> Result<String> {
    let mut v = serde_json::to_value(value)?;
    match v.as_object_mut() {
        Some(obj) => {
            obj.insert("manifest_hash".into(), hash.into());
        }
        None => v = serde_json::json!({ "manifest_hash": hash, "data": v }),
    }
    Ok(serde_json::to_string_pretty(&v)?)
}

/// Prefixes CSV text with a `# manifest_hash:` comment line.
pub fn csv_with_hash(csv: &str, hash: &str) -> String {
    format!("# manifest_hash: {hash}\n{csv}")
}
