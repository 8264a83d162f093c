//! Recoloring of superpixels by their embedding position under a bilinear
//! four-corner 2-D colormap.

use std::path::Path;

use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, ImageEncoder};

use crate::error::{Error, Result};

/// Corner colors at `(x_min, y_min)`, `(x_max, y_min)`, `(x_min, y_max)`,
/// `(x_max, y_max)` of the embedding bounding box.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Colormap {
    pub corners: [[u8; 3]; 4],
}

impl Default for Colormap {
    fn default() -> Self {
        Self {
            corners: [[32, 96, 255], [255, 48, 48], [32, 200, 96], [255, 224, 0]],
        }
    }
}

impl Colormap {
    /// Parses four `#rrggbb` colors separated by commas.
    pub fn parse(spec: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(format!("expected four colors, got {}", parts.len()));
        }
        let mut corners = [[0u8; 3]; 4];
        for (corner, part) in corners.iter_mut().zip(&parts) {
            let hex = part.strip_prefix('#').unwrap_or(part);
            if hex.len() != 6 {
                return Err(format!("bad color '{part}'"));
            }
            for (k, c) in corner.iter_mut().enumerate() {
                *c = u8::from_str_radix(&hex[2 * k..2 * k + 2], 16).map_err(|_| format!("bad color '{part}'"))?;
            }
        }
        Ok(Self { corners })
    }

    /// Unquantized color at relative position `(u, v)` in [0, 1]².
    pub fn color_at(&self, u: f64, v: f64) -> [f64; 3] {
        let [c00, c10, c01, c11] = self.corners;
        let mut out = [0.0; 3];
        for (k, o) in out.iter_mut().enumerate() {
            let bottom = (1.0 - u) * c00[k] as f64 + u * c10[k] as f64;
            let top = (1.0 - u) * c01[k] as f64 + u * c11[k] as f64;
            *o = (1.0 - v) * bottom + v * top;
        }
        out
    }

    /// One 8-bit color per point, relative to the points' bounding box. A
    /// zero-extent axis maps to the middle of the colormap.
    pub fn colors(&self, coords: &[[f64; 2]]) -> Vec<[u8; 3]> {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for c in coords {
            for d in 0..2 {
                lo[d] = lo[d].min(c[d]);
                hi[d] = hi[d].max(c[d]);
            }
        }
        let rel = |x: f64, d: usize| {
            if hi[d] > lo[d] {
                ((x - lo[d]) / (hi[d] - lo[d])).clamp(0.0, 1.0)
            } else {
                0.5
            }
        };
        coords
            .iter()
            .map(|c| {
                let f = self.color_at(rel(c[0], 0), rel(c[1], 1));
                f.map(|v| v.round().clamp(0.0, 255.0) as u8)
            })
            .collect()
    }
}

/// RGB raster where each pixel takes its superpixel's color.
pub fn colorize_embedding(coords: &[[f64; 2]], labels: &[u32], colormap: &Colormap) -> Result<Vec<u8>> {
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= coords.len()) {
        return Err(Error::DimensionMismatch(format!(
            "label {bad} has no embedding position ({} points); embedding and labels are from different levels",
            coords.len()
        )));
    }
    let colors = colormap.colors(coords);
    Ok(labels.iter().flat_map(|&l| colors[l as usize]).collect())
}

pub fn encode_png(rgb: &[u8], width: usize, height: usize) -> Result<Vec<u8>> {
    if rgb.len() != width * height * 3 {
        return Err(Error::DimensionMismatch(format!(
            "{} bytes for a {width}x{height} RGB raster",
            rgb.len()
        )));
    }
    let mut out = Vec::new();
    PngEncoder::new(&mut out)
        .write_image(rgb, width as u32, height as u32, ExtendedColorType::Rgb8)
        .map_err(|e| Error::InvalidArgument(format!("png encoding failed: {e}")))?;
    Ok(out)
}

pub fn write_png(path: &Path, rgb: &[u8], width: usize, height: usize) -> Result<()> {
    let bytes = encode_png(rgb, width, height)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
