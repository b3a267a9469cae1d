//! Directory container: `manifest.json` plus one raw little-endian `f32`
//! file per array, C-order.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use eeg2image_tensor::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayEntry {
    pub name: String,
    pub dtype: String,
    pub shape: Vec<usize>,
    pub file: String,
    pub byte_order: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContainerManifest {
    pub version: u32,
    pub arrays: Vec<ArrayEntry>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

/// In-memory contents of a container, arrays in manifest order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Container {
    pub arrays: Vec<(String, Tensor<f32>)>,
    pub metadata: BTreeMap<String, String>,
}

impl Container {
    pub fn push(&mut self, name: impl Into<String>, t: Tensor<f32>) {
        self.arrays.push((name.into(), t));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.arrays.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor<f32>> {
        self.get(name).ok_or_else(|| Error::Format(format!("container has no array named {name:?}")))
    }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && !name.starts_with('.')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

/// Writes `container` into `dir` (created if missing). The manifest is
/// written last, so a directory without one is never mistaken for complete.
pub fn write_container(dir: &Path, container: &Container) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::write(dir))?;
    let mut entries = Vec::with_capacity(container.arrays.len());
    for (name, t) in &container.arrays {
        if !valid_name(name) {
            return Err(Error::Format(format!("array name {name:?} is not a safe file name")));
        }
        if entries.iter().any(|e: &ArrayEntry| &e.name == name) {
            return Err(Error::Format(format!("duplicate array name {name:?}")));
        }
        let file = format!("{name}.f32");
        let mut bytes = Vec::with_capacity(t.numel() * 4);
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let path = dir.join(&file);
        fs::write(&path, bytes).map_err(Error::write(&path))?;
        entries.push(ArrayEntry {
            name: name.clone(),
            dtype: "f32".into(),
            shape: t.shape().to_vec(),
            file,
            byte_order: "little".into(),
        });
    }
    let manifest = ContainerManifest { version: FORMAT_VERSION, arrays: entries, metadata: container.metadata.clone() };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, json).map_err(Error::write(&path))
}

/// Writes into a sibling temporary directory and renames it over `dir`.
pub fn write_container_atomic(dir: &Path, container: &Container) -> Result<()> {
    let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or("container");
    let tmp = dir.with_file_name(format!(".{name}.tmp-{}", std::process::id()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(Error::write(&tmp))?;
    }
    write_container(&tmp, container)?;
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(Error::write(dir))?;
    }
    fs::rename(&tmp, dir).map_err(Error::write(dir))
}

pub fn read_manifest(dir: &Path) -> Result<ContainerManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let manifest: ContainerManifest =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if manifest.version != FORMAT_VERSION {
        return Err(Error::Unsupported(format!("container version {}", manifest.version)));
    }
    Ok(manifest)
}

pub fn read_container(dir: &Path) -> Result<Container> {
    let manifest = read_manifest(dir)?;
    let mut arrays: Vec<(String, Tensor<f32>)> = Vec::with_capacity(manifest.arrays.len());
    for entry in &manifest.arrays {
        if arrays.iter().any(|(n, _)| n == &entry.name) {
            return Err(Error::Integrity(format!("duplicate array name {:?}", entry.name)));
        }
        if entry.dtype != "f32" {
            return Err(Error::Unsupported(format!("dtype {:?} of array {:?}", entry.dtype, entry.name)));
        }
        if entry.byte_order != "little" {
            return Err(Error::Unsupported(format!("byte order {:?} of array {:?}", entry.byte_order, entry.name)));
        }
        if !valid_name(&entry.file) {
            return Err(Error::Format(format!("file name {:?} escapes the container", entry.file)));
        }
        let path: PathBuf = dir.join(&entry.file);
        let bytes = fs::read(&path).map_err(|e| Error::Integrity(format!("{}: {e}", path.display())))?;
        let expected = 4 * entry.shape.iter().product::<usize>();
        if bytes.len() != expected {
            return Err(Error::Integrity(format!(
                "array {:?} declares shape {:?} ({expected} bytes) but {} holds {} bytes",
                entry.name,
                entry.shape,
                entry.file,
                bytes.len()
            )));
        }
        let data = bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
        arrays.push((entry.name.clone(), Tensor::new(entry.shape.clone(), data)));
    }
    Ok(Container { arrays, metadata: manifest.metadata })
}
