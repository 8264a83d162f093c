//! Binary hierarchy file.
//!
//! Layout (little-endian): magic `SPHXHIER`, `u32` metadata length, metadata
//! as `key=value` text, then per level: `u32` superpixel count, sizes
//! (`u32` each), a `u8` parent flag followed by the parent map when set, and
//! the run-length encoded label map.

use std::fs;
use std::path::Path;

use super::{replay_transitions, Hierarchy, HierarchyParams, RegionAdjacency, StopReason, SuperpixelLevel};
use crate::adjacency::{Connectivity, ImageAdjacency};
use crate::container::KeyValues;
use crate::error::{Error, Result};
use crate::rle::{decode_runs, encode_runs, runs_from_bytes, runs_to_bytes};
use crate::walks::TransitionMatrix;

const MAGIC: &[u8; 8] = b"SPHXHIER";

/// Image geometry plus free-form provenance (walk parameters, seeds, input
/// names).
#[derive(Clone, Debug, PartialEq)]
pub struct HierarchyHeader {
    pub width: usize,
    pub height: usize,
    pub connectivity: Connectivity,
    pub provenance: KeyValues,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HierarchyFile {
    pub header: HierarchyHeader,
    pub levels: Vec<SuperpixelLevel>,
    pub stop: StopReason,
    pub params: HierarchyParams,
}

const RESERVED: [&str; 7] = [
    "width",
    "height",
    "connectivity",
    "levels",
    "stop",
    "max_levels",
    "merge_threshold",
];

impl HierarchyFile {
    pub fn from_hierarchy(hierarchy: &Hierarchy, header: HierarchyHeader) -> Self {
        Self {
            header,
            levels: hierarchy.levels.clone(),
            stop: hierarchy.stop,
            params: hierarchy.params,
        }
    }

    /// Rebuilds the per-level transition matrices from the pixel-level one.
    pub fn into_hierarchy(self, t0: TransitionMatrix) -> Result<Hierarchy> {
        if t0.size() != self.header.width * self.header.height {
            return Err(Error::DimensionMismatch(format!(
                "transition matrix of size {} for a {}x{} hierarchy",
                t0.size(),
                self.header.width,
                self.header.height
            )));
        }
        let transitions = replay_transitions(&self.levels, t0)?;
        Ok(Hierarchy {
            levels: self.levels,
            transitions,
            stop: self.stop,
            params: self.params,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut meta = KeyValues::new();
        meta.set("width", self.header.width);
        meta.set("height", self.header.height);
        meta.set("connectivity", self.header.connectivity.as_number());
        meta.set("levels", self.levels.len());
        meta.set("stop", self.stop.as_str());
        meta.set("max_levels", self.params.max_levels);
        meta.set("merge_threshold", self.params.merge_threshold);
        for (k, v) in self.header.provenance.iter() {
            if !RESERVED.contains(&k) {
                meta.set(k, v);
            }
        }
        let text = meta.to_text();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        let push = |out: &mut Vec<u8>, values: &[u32]| {
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        };
        for level in &self.levels {
            out.extend_from_slice(&(level.sizes.len() as u32).to_le_bytes());
            push(&mut out, &level.sizes);
            match &level.parent {
                Some(parent) => {
                    out.push(1);
                    push(&mut out, parent);
                }
                None => out.push(0),
            }
            out.extend_from_slice(&runs_to_bytes(&encode_runs(&level.labels)));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |r: &str| Error::format(path, r.to_string());
        let mut reader = Reader { bytes, pos: 0 };
        if reader.take(8).ok_or_else(|| bad("truncated header"))? != MAGIC {
            return Err(bad("not a hierarchy file"));
        }
        let meta_len = reader.u32().ok_or_else(|| bad("truncated header"))? as usize;
        let text = std::str::from_utf8(reader.take(meta_len).ok_or_else(|| bad("truncated metadata"))?)
            .map_err(|_| bad("metadata is not UTF-8"))?;
        let meta = KeyValues::parse(text).map_err(|r| Error::format(path, r))?;
        let req = |key: &str| -> Result<String> { meta.require::<String>(key).map_err(|r| Error::format(path, r)) };
        let parse_num =
            |key: &str| -> Result<usize> { req(key)?.parse().map_err(|_| bad(&format!("invalid value for {key}"))) };
        let width = parse_num("width")?;
        let height = parse_num("height")?;
        let connectivity = Connectivity::from_number(parse_num("connectivity")? as u32)?;
        let level_count = parse_num("levels")?;
        let stop = StopReason::parse(&req("stop")?).ok_or_else(|| bad("unknown stop reason"))?;
        let params = HierarchyParams {
            max_levels: parse_num("max_levels")?,
            merge_threshold: req("merge_threshold")?
                .parse()
                .map_err(|_| bad("invalid merge_threshold"))?,
        };
        let mut provenance = KeyValues::new();
        for (k, v) in meta.iter() {
            if !RESERVED.contains(&k) {
                provenance.set(k, v);
            }
        }

        let n = width * height;
        let adjacency = ImageAdjacency::build(width, height, connectivity)?;
        let mut levels = Vec::with_capacity(level_count);
        for l in 0..level_count {
            let truncated = || bad(&format!("truncated level {l}"));
            let m = reader.u32().ok_or_else(truncated)? as usize;
            let sizes = reader.u32s(m).ok_or_else(truncated)?;
            let parent = match reader.take(1).ok_or_else(truncated)?[0] {
                0 => None,
                1 => Some(reader.u32s(m).ok_or_else(truncated)?),
                _ => return Err(bad("bad parent flag")),
            };
            let (runs, used) = runs_from_bytes(&bytes[reader.pos..]).ok_or_else(truncated)?;
            reader.pos += used;
            let labels = decode_runs(&runs);
            if labels.len() != n || labels.iter().any(|&x| x as usize >= m) {
                return Err(bad(&format!("label map of level {l} is inconsistent")));
            }
            let rag = RegionAdjacency::from_labels(&adjacency, &labels, m);
            levels.push(SuperpixelLevel {
                level: l,
                labels,
                sizes,
                parent,
                rag,
            });
        }
        if reader.pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(Self {
            header: HierarchyHeader {
                width,
                height,
                connectivity,
                provenance,
            },
            levels,
            stop,
            params,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u32s(&mut self, n: usize) -> Option<Vec<u32>> {
        let b = self.take(n.checked_mul(4)?)?;
        Some(
            b.chunks_exact(4)
                .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        )
    }
}
