//! Per-level similarities and 2-D layouts.

mod init;
mod similarities;
mod tsne;

pub use init::{
    parent_initialize, pca, pca_initialize, random_initialize, superpixel_means, InitMode, Pca, INIT_SCALE,
};
pub use similarities::{
    graph_similarities, level_dissimilarities, level_perplexity, level_probabilities, symmetrize, LevelSimilarities,
};
pub use tsne::{joint_probabilities, kl_divergence, kl_gradient, optimize_layout, Embedding, LayoutParams};

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

impl Embedding {
    /// `id,x,y` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,x,y\n");
        for (i, c) in self.coords.iter().enumerate() {
            writeln!(out, "{i},{},{}", c[0], c[1]).unwrap();
        }
        out
    }

    /// Interleaved `x, y` as little-endian f32.
    pub fn to_f32_bytes(&self) -> Vec<u8> {
        coords_to_f32_bytes(&self.coords)
    }

    /// `iteration,loss` lines with a header.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,loss\n");
        for (i, v) in self.objective_trace.iter().enumerate() {
            writeln!(out, "{i},{v}").unwrap();
        }
        out
    }

    /// Writes `<stem>.csv`, `<stem>.f32` and `<stem>.trace.csv`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        let put = |name: String, bytes: &[u8]| -> Result<()> {
            let path = dir.join(name);
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
        };
        put(format!("{stem}.csv"), self.to_csv().as_bytes())?;
        put(format!("{stem}.f32"), &self.to_f32_bytes())?;
        put(format!("{stem}.trace.csv"), self.trace_csv().as_bytes())
    }
}

pub fn coords_to_f32_bytes(coords: &[[f64; 2]]) -> Vec<u8> {
    coords
        .iter()
        .flat_map(|c| [c[0] as f32, c[1] as f32])
        .flat_map(f32::to_le_bytes)
        .collect()
}

/// Reads coordinates from an `id,x,y` CSV as written by [`Embedding::to_csv`].
pub fn read_coords_csv(path: &Path) -> Result<Vec<[f64; 2]>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut coords = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parsed = (fields.len() == 3)
            .then(|| {
                let id: usize = fields[0].trim().parse().ok()?;
                let x: f64 = fields[1].trim().parse().ok()?;
                let y: f64 = fields[2].trim().parse().ok()?;
                Some((id, x, y))
            })
            .flatten();
        match parsed {
            Some((id, x, y)) if id == coords.len() => coords.push([x, y]),
            _ => {
                return Err(Error::format(
                    path,
                    format!("line {}: expected id,x,y in id order", lineno + 1),
                ))
            }
        }
    }
    Ok(coords)
}
