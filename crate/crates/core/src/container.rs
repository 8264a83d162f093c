//! Two-file raster container: a UTF-8 `key=value` sidecar (`<name>.meta`) and
//! a raw little-endian payload (`<name>.raw`), channel-fastest, row-major.
//!
//! The same `key=value` form is used for pipeline configuration files, so the
//! parser lives here as [`KeyValues`].

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Ordered `key=value` text document.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KeyValues {
    entries: Vec<(String, String)>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses `key=value` lines. Blank lines and lines starting with `#` are
    /// skipped; keys must be unique.
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut entries: Vec<(String, String)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key=value", lineno + 1))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(format!("line {}: empty key", lineno + 1));
            }
            if entries.iter().any(|(k, _)| k == key) {
                return Err(format!("line {}: duplicate key '{key}'", lineno + 1));
            }
            entries.push((key.to_string(), value.trim().to_string()));
        }
        Ok(Self { entries })
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn parse_value<T: std::str::FromStr>(&self, key: &str) -> std::result::Result<Option<T>, String> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| format!("invalid value '{v}' for key '{key}'")),
        }
    }

    pub fn require<T: std::str::FromStr>(&self, key: &str) -> std::result::Result<T, String> {
        self.parse_value(key)?.ok_or_else(|| format!("missing key '{key}'"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn into_map(self) -> BTreeMap<String, String> {
        self.entries.into_iter().collect()
    }
}

/// Element type of a raster payload.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DType {
    F32,
    U32,
}

impl DType {
    fn as_str(self) -> &'static str {
        match self {
            DType::F32 => "f32",
            DType::U32 => "u32",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "f32" => Some(DType::F32),
            "u32" => Some(DType::U32),
            _ => None,
        }
    }
}

/// Header of a raster container.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterHeader {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub dtype: DType,
    pub channel_names: Option<Vec<String>>,
}

impl RasterHeader {
    pub fn element_count(&self) -> usize {
        self.width * self.height * self.channels
    }

    fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("width", self.width);
        kv.set("height", self.height);
        kv.set("channels", self.channels);
        kv.set("dtype", self.dtype.as_str());
        kv.set("order", "row-major");
        if let Some(names) = &self.channel_names {
            kv.set("channel_names", names.join(","));
        }
        kv
    }

    fn from_key_values(kv: &KeyValues, path: &Path) -> Result<Self> {
        let bad = |reason: String| Error::format(path, reason);
        let width: usize = kv.require("width").map_err(bad)?;
        let height: usize = kv.require("height").map_err(bad)?;
        let channels: usize = kv.require("channels").map_err(bad)?;
        let dtype_str: String = kv.require("dtype").map_err(bad)?;
        let dtype = DType::parse(&dtype_str).ok_or_else(|| bad(format!("unsupported dtype '{dtype_str}'")))?;
        if let Some(order) = kv.get("order") {
            if order != "row-major" {
                return Err(bad(format!("unsupported order '{order}'")));
            }
        }
        if width == 0 || height == 0 || channels == 0 {
            return Err(bad("width, height and channels must be >= 1".into()));
        }
        let channel_names = match kv.get("channel_names") {
            None => None,
            Some(s) => {
                let names: Vec<String> = s.split(',').map(|n| n.trim().to_string()).collect();
                if names.len() != channels {
                    return Err(bad(format!("{} channel names for {channels} channels", names.len())));
                }
                Some(names)
            }
        };
        Ok(Self {
            width,
            height,
            channels,
            dtype,
            channel_names,
        })
    }
}

/// Returns the `(meta, raw)` pair for a container base path. A trailing
/// `.meta` or `.raw` extension on `base` is ignored.
pub fn container_paths(base: &Path) -> (PathBuf, PathBuf) {
    let stem = match base.extension().and_then(|e| e.to_str()) {
        Some("meta") | Some("raw") => base.with_extension(""),
        _ => base.to_path_buf(),
    };
    let mut meta = stem.clone().into_os_string();
    meta.push(".meta");
    let mut raw = stem.into_os_string();
    raw.push(".raw");
    (PathBuf::from(meta), PathBuf::from(raw))
}

pub(crate) fn read_container(base: &Path) -> Result<(RasterHeader, Vec<u8>)> {
    let (meta_path, raw_path) = container_paths(base);
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let kv = KeyValues::parse(&text).map_err(|r| Error::format(&meta_path, r))?;
    let header = RasterHeader::from_key_values(&kv, &meta_path)?;
    let payload = fs::read(&raw_path).map_err(|e| Error::io(&raw_path, e))?;
    let expected = header.element_count() * 4;
    if payload.len() != expected {
        return Err(Error::PayloadSize {
            expected,
            found: payload.len(),
        });
    }
    Ok((header, payload))
}

pub(crate) fn write_container(base: &Path, header: &RasterHeader, payload: &[u8]) -> Result<()> {
    debug_assert_eq!(payload.len(), header.element_count() * 4);
    let (meta_path, raw_path) = container_paths(base);
    if let Some(parent) = meta_path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(&meta_path, header.to_key_values().to_text()).map_err(|e| Error::io(&meta_path, e))?;
    fs::write(&raw_path, payload).map_err(|e| Error::io(&raw_path, e))?;
    Ok(())
}

pub(crate) fn f32_payload(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub(crate) fn u32_payload(values: &[u32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub(crate) fn decode_f32(payload: &[u8]) -> Vec<f32> {
    payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

pub(crate) fn decode_u32(payload: &[u8]) -> Vec<u32> {
    payload
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}
