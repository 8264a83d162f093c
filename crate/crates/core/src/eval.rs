//! Segmentation quality: undersegmentation error against ground truth,
//! explained variation against the image, and normalized areas under both
//! curves across granularities.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hierarchy::SuperpixelLevel;
use crate::image::{GroundTruthLabels, HighDimImage};

/// `(1/n) Σ_G Σ_{C ∩ G ≠ ∅} min(|C ∩ G|, |C \ G|)`. Background counts as a
/// segment like any other.
pub fn undersegmentation_error(labels: &[u32], gt: &GroundTruthLabels) -> Result<f64> {
    let n = labels.len();
    if n != gt.labels().len() {
        return Err(Error::DimensionMismatch(format!(
            "{n} superpixel labels but {} ground-truth labels",
            gt.labels().len()
        )));
    }
    let mut keys: Vec<u64> = labels
        .iter()
        .zip(gt.labels())
        .map(|(&c, &g)| ((c as u64) << 32) | g as u64)
        .collect();
    keys.par_sort_unstable();
    let superpixels = labels.iter().copied().max().map_or(0, |m| m as usize + 1);
    let mut size = vec![0usize; superpixels];
    for &c in labels {
        size[c as usize] += 1;
    }
    let mut total = 0usize;
    let mut i = 0;
    while i < keys.len() {
        let mut j = i;
        while j < keys.len() && keys[j] == keys[i] {
            j += 1;
        }
        let inside = j - i;
        let c = (keys[i] >> 32) as usize;
        total += inside.min(size[c] - inside);
        i = j;
    }
    Ok(total as f64 / n as f64)
}

/// Between-superpixel variance over total variance, summed over channels.
/// A constant image scores 1.
pub fn explained_variation(labels: &[u32], img: &HighDimImage) -> Result<f64> {
    let n = img.pixel_count();
    if labels.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} superpixel labels for {n} pixels",
            labels.len()
        )));
    }
    let c = img.channels();
    let m = labels.iter().copied().max().map_or(0, |x| x as usize + 1);
    let mut global = vec![0.0f64; c];
    let mut sums = vec![0.0f64; m * c];
    let mut size = vec![0usize; m];
    for (p, &l) in labels.iter().enumerate() {
        let l = l as usize;
        size[l] += 1;
        for (k, &v) in img.pixel(p).iter().enumerate() {
            global[k] += v as f64;
            sums[l * c + k] += v as f64;
        }
    }
    global.iter_mut().for_each(|g| *g /= n as f64);
    let mut total = 0.0;
    for p in 0..n {
        for (k, &v) in img.pixel(p).iter().enumerate() {
            total += (v as f64 - global[k]).powi(2);
        }
    }
    let mut between = 0.0;
    for l in 0..m {
        if size[l] == 0 {
            continue;
        }
        for k in 0..c {
            let mean = sums[l * c + k] / size[l] as f64;
            between += size[l] as f64 * (mean - global[k]).powi(2);
        }
    }
    if total == 0.0 {
        return Ok(1.0);
    }
    Ok((between / total).clamp(0.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Linear,
    Log10,
}

/// Trapezoidal area under `(m, value)` points with the `m` axis (or its
/// log10) mapped affinely onto [0, 1].
pub fn area_under_curve(points: &[(f64, f64)], axis: Axis) -> Result<f64> {
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .map(|&(m, v)| {
            let x = match axis {
                Axis::Linear => m,
                Axis::Log10 => m.log10(),
            };
            (x, v)
        })
        .collect();
    if pts.iter().any(|&(x, v)| !x.is_finite() || !v.is_finite()) {
        return Err(Error::InvalidArgument("curve points must be finite with m > 0".into()));
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (lo, hi) = match (pts.first(), pts.last()) {
        (Some(a), Some(b)) => (a.0, b.0),
        _ => (0.0, 0.0),
    };
    if lo == hi {
        return Err(Error::InvalidArgument(
            "need at least two distinct superpixel counts".into(),
        ));
    }
    let area: f64 = pts
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum();
    Ok(area / (hi - lo))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalPoint {
    pub level: usize,
    pub superpixels: usize,
    pub ue: f64,
    pub ev: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalCurve {
    /// Sorted by superpixel count, descending.
    pub points: Vec<EvalPoint>,
    pub aue: f64,
    /// Area under `1 - EV`.
    pub aev: f64,
    pub log_aue: f64,
    pub log_aev: f64,
}

impl EvalCurve {
    pub fn from_points(mut points: Vec<EvalPoint>) -> Result<Self> {
        points.sort_by(|a, b| b.superpixels.cmp(&a.superpixels).then(a.level.cmp(&b.level)));
        let ue: Vec<(f64, f64)> = points.iter().map(|p| (p.superpixels as f64, p.ue)).collect();
        let ev: Vec<(f64, f64)> = points.iter().map(|p| (p.superpixels as f64, 1.0 - p.ev)).collect();
        Ok(Self {
            aue: area_under_curve(&ue, Axis::Linear)?,
            aev: area_under_curve(&ev, Axis::Linear)?,
            log_aue: area_under_curve(&ue, Axis::Log10)?,
            log_aev: area_under_curve(&ev, Axis::Log10)?,
            points,
        })
    }

    /// `level,m,ue,ev` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,m,ue,ev\n");
        for p in &self.points {
            writeln!(out, "{},{},{},{}", p.level, p.superpixels, p.ue, p.ev).unwrap();
        }
        out
    }

    /// Areas in percent with two decimals.
    pub fn summary(&self) -> String {
        format!(
            "AUE={:.2} AEV={:.2} logAUE={:.2} logAEV={:.2}",
            100.0 * self.aue,
            100.0 * self.aev,
            100.0 * self.log_aue,
            100.0 * self.log_aev
        )
    }
}

/// UE and EV of every level.
pub fn evaluate_levels(
    levels: &[SuperpixelLevel],
    gt: &GroundTruthLabels,
    img: &HighDimImage,
) -> Result<Vec<EvalPoint>> {
    if gt.width() != img.width() || gt.height() != img.height() {
        return Err(Error::DimensionMismatch(format!(
            "ground truth is {}x{}, image {}x{}",
            gt.width(),
            gt.height(),
            img.width(),
            img.height()
        )));
    }
    levels
        .par_iter()
        .map(|level| {
            Ok(EvalPoint {
                level: level.level,
                superpixels: level.superpixel_count(),
                ue: undersegmentation_error(&level.labels, gt)?,
                ev: explained_variation(&level.labels, img)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l_shape_fixture() {
        // GT: left column 0, right column 1; superpixels: L-shape {0,2,3} and {1}
        let gt = GroundTruthLabels::new(2, 2, vec![0, 1, 0, 1]).unwrap();
        let ue = undersegmentation_error(&[0, 1, 0, 0], &gt).unwrap();
        assert_eq!(ue, 0.5);
    }

    #[test]
    fn ev_fixtures() {
        let img = HighDimImage::new(4, 1, 1, vec![0.0, 0.0, 10.0, 10.0]).unwrap();
        assert_eq!(explained_variation(&[0, 0, 1, 1], &img).unwrap(), 1.0);
        assert_eq!(explained_variation(&[0, 1, 0, 1], &img).unwrap(), 0.0);
        let flat = HighDimImage::new(2, 1, 1, vec![3.0, 3.0]).unwrap();
        assert_eq!(explained_variation(&[0, 0], &flat).unwrap(), 1.0);
    }

    #[test]
    fn area_fixtures() {
        assert_eq!(
            area_under_curve(&[(100.0, 0.0), (1.0, 1.0)], Axis::Linear).unwrap(),
            0.5
        );
        let flat = [(1000.0, 0.3), (10.0, 0.3), (2.0, 0.3)];
        assert!((area_under_curve(&flat, Axis::Linear).unwrap() - 0.3).abs() < 1e-15);
        assert!((area_under_curve(&flat, Axis::Log10).unwrap() - 0.3).abs() < 1e-15);
        assert!(area_under_curve(&[(5.0, 0.1)], Axis::Linear).is_err());
        assert!(area_under_curve(&[(5.0, 0.1), (5.0, 0.2)], Axis::Linear).is_err());
    }
}
