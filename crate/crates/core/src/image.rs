//! High-dimensional rasters, ground-truth label maps and preprocessing.
//!
//! Pixels are addressed row-major with 0-based ids `y * width + x`; values are
//! stored channel-fastest, so pixel `i` occupies `values[i*c .. (i+1)*c]`.

use std::path::Path;

use log::warn;

use crate::container::{
    decode_f32, decode_u32, f32_payload, read_container, u32_payload, write_container, DType, RasterHeader,
};
use crate::error::{Error, Result};

/// Dense `height x width x channels` attribute raster.
#[derive(Clone, Debug, PartialEq)]
pub struct HighDimImage {
    width: usize,
    height: usize,
    channels: usize,
    values: Vec<f32>,
    channel_names: Option<Vec<String>>,
}

impl HighDimImage {
    /// Builds a validated image. Every value must be finite.
    pub fn new(width: usize, height: usize, channels: usize, values: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be >= 1, got {width}x{height}x{channels}"
            )));
        }
        let expected = width * height * channels;
        if values.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height}x{channels} image needs {expected} values, got {}",
                values.len()
            )));
        }
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                pixel: idx / channels,
                channel: idx % channels,
                value: values[idx],
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            values,
            channel_names: None,
        })
    }

    pub fn with_channel_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.channels {
            return Err(Error::DimensionMismatch(format!(
                "{} channel names for {} channels",
                names.len(),
                self.channels
            )));
        }
        self.channel_names = Some(names);
        Ok(self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, payload) = read_container(path)?;
        if header.dtype != DType::F32 {
            return Err(Error::format(path, "image payload must be dtype=f32"));
        }
        let img = Self::new(header.width, header.height, header.channels, decode_f32(&payload))?;
        match header.channel_names {
            Some(names) => img.with_channel_names(names),
            None => Ok(img),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = RasterHeader {
            width: self.width,
            height: self.height,
            channels: self.channels,
            dtype: DType::F32,
            channel_names: self.channel_names.clone(),
        };
        write_container(path, &header, &f32_payload(&self.values))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of pixels `n = width * height`.
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn channel_names(&self) -> Option<&[String]> {
        self.channel_names.as_deref()
    }

    /// Attribute vector of pixel `id`.
    #[inline]
    pub fn pixel(&self, id: usize) -> &[f32] {
        &self.values[id * self.channels..(id + 1) * self.channels]
    }

    #[inline]
    pub fn pixel_id(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    /// Drops the listed channels (e.g. noisy spectral bands).
    pub fn exclude_channels(&self, excluded: &[usize]) -> Result<Self> {
        if let Some(&bad) = excluded.iter().find(|&&c| c >= self.channels) {
            return Err(Error::InvalidArgument(format!(
                "channel {bad} out of range for {} channels",
                self.channels
            )));
        }
        let keep: Vec<usize> = (0..self.channels).filter(|c| !excluded.contains(c)).collect();
        if keep.is_empty() {
            return Err(Error::InvalidArgument("all channels excluded".into()));
        }
        let mut values = Vec::with_capacity(self.pixel_count() * keep.len());
        for id in 0..self.pixel_count() {
            let px = self.pixel(id);
            values.extend(keep.iter().map(|&c| px[c]));
        }
        let img = Self::new(self.width, self.height, keep.len(), values)?;
        match &self.channel_names {
            Some(names) => img.with_channel_names(keep.iter().map(|&c| names[c].clone()).collect()),
            None => Ok(img),
        }
    }
}

/// Outcome flags of [`preprocess_clip_normalize`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PreprocessReport {
    /// Global clip threshold that was applied.
    pub threshold: f32,
    /// The image contained only zeros and was returned unchanged.
    pub all_zero: bool,
}

/// Nearest-rank order statistic: the smallest value with at least
/// `ceil(fraction * len)` values at or below it.
pub fn nearest_rank_percentile(values: &[f32], fraction: f64) -> f32 {
    assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    let rank = ((fraction * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    let (_, nth, _) = sorted.select_nth_unstable_by(rank - 1, |a, b| a.total_cmp(b));
    *nth
}

/// Clips every value at the global `percentile` order statistic, then scales
/// each channel to unit maximum. Channels whose maximum is not positive are
/// left untouched.
pub fn preprocess_clip_normalize(img: &HighDimImage, percentile: f64) -> Result<(HighDimImage, PreprocessReport)> {
    if !(percentile > 0.0 && percentile <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "percentile must be in (0, 1], got {percentile}"
        )));
    }
    if img.values.iter().all(|&v| v == 0.0) {
        warn!("preprocess: image is all zeros, returning it unchanged");
        return Ok((
            img.clone(),
            PreprocessReport {
                threshold: 0.0,
                all_zero: true,
            },
        ));
    }
    let threshold = nearest_rank_percentile(&img.values, percentile);
    let c = img.channels;
    let mut values: Vec<f32> = img.values.iter().map(|&v| v.min(threshold)).collect();
    let mut maxima = vec![f32::NEG_INFINITY; c];
    for px in values.chunks_exact(c) {
        for (m, &v) in maxima.iter_mut().zip(px) {
            *m = m.max(v);
        }
    }
    for px in values.chunks_exact_mut(c) {
        for (v, &m) in px.iter_mut().zip(&maxima) {
            if m > 0.0 {
                *v /= m;
            }
        }
    }
    let mut out = HighDimImage::new(img.width, img.height, c, values)?;
    out.channel_names = img.channel_names.clone();
    Ok((
        out,
        PreprocessReport {
            threshold,
            all_zero: false,
        },
    ))
}

/// Per-pixel ground-truth class ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundTruthLabels {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    background_id: u32,
}

impl GroundTruthLabels {
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("label map dimensions must be >= 1".into()));
        }
        if labels.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} label map needs {} labels, got {}",
                width * height,
                labels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
            background_id: 0,
        })
    }

    pub fn with_background(mut self, background_id: u32) -> Self {
        self.background_id = background_id;
        self
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, payload) = read_container(path)?;
        if header.dtype != DType::U32 || header.channels != 1 {
            return Err(Error::format(path, "label map must be dtype=u32 with channels=1"));
        }
        Self::new(header.width, header.height, decode_u32(&payload))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = RasterHeader {
            width: self.width,
            height: self.height,
            channels: 1,
            dtype: DType::U32,
            channel_names: None,
        };
        write_container(path, &header, &u32_payload(&self.labels))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn background_id(&self) -> u32 {
        self.background_id
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_with_location() {
        let err = HighDimImage::new(2, 1, 2, vec![0.0, 1.0, f32::NAN, 3.0]).unwrap_err();
        match err {
            Error::NonFinite { pixel, channel, .. } => assert_eq!((pixel, channel), (1, 0)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_size_mismatch() {
        assert!(HighDimImage::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(HighDimImage::new(0, 2, 1, vec![]).is_err());
    }

    #[test]
    fn save_load_small_image() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("tiny");
        let img = HighDimImage::new(2, 2, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        img.save(&base).unwrap();
        let back = HighDimImage::load(&base).unwrap();
        assert_eq!(back.values(), &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!((back.width(), back.height(), back.channels()), (2, 2, 1));
    }

    #[test]
    fn load_reports_payload_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("bad");
        std::fs::write(
            base.with_extension("meta"),
            "width=2\nheight=2\nchannels=1\ndtype=f32\n",
        )
        .unwrap();
        std::fs::write(base.with_extension("raw"), [0u8; 12]).unwrap();
        assert!(matches!(
            HighDimImage::load(&base),
            Err(Error::PayloadSize {
                expected: 16,
                found: 12
            })
        ));
    }

    #[test]
    fn load_reports_malformed_header() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("bad");
        std::fs::write(base.with_extension("meta"), "width=2\nchannels=1\ndtype=f32\n").unwrap();
        std::fs::write(base.with_extension("raw"), [0u8; 8]).unwrap();
        assert!(matches!(HighDimImage::load(&base), Err(Error::Format { .. })));
    }

    #[test]
    fn constant_image_normalizes_to_one() {
        let img = HighDimImage::new(3, 2, 2, vec![5.0; 12]).unwrap();
        let (out, report) = preprocess_clip_normalize(&img, 0.98).unwrap();
        assert!(!report.all_zero);
        assert!(out.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn unit_max_scaling() {
        let img = HighDimImage::new(3, 1, 1, vec![0.0, 2.0, 4.0]).unwrap();
        let (out, _) = preprocess_clip_normalize(&img, 1.0).unwrap();
        assert_eq!(out.values(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn all_zero_image_is_flagged() {
        let img = HighDimImage::new(2, 2, 1, vec![0.0; 4]).unwrap();
        let (out, report) = preprocess_clip_normalize(&img, 0.98).unwrap();
        assert!(report.all_zero);
        assert_eq!(out, img);
    }

    #[test]
    fn percentile_out_of_range() {
        let img = HighDimImage::new(1, 1, 1, vec![1.0]).unwrap();
        assert!(preprocess_clip_normalize(&img, 0.0).is_err());
        assert!(preprocess_clip_normalize(&img, 1.5).is_err());
    }

    #[test]
    fn exclude_channels_keeps_order_and_names() {
        let img = HighDimImage::new(1, 2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
            .unwrap()
            .with_channel_names(vec!["a".into(), "b".into(), "c".into()])
            .unwrap();
        let out = img.exclude_channels(&[1]).unwrap();
        assert_eq!(out.values(), &[1.0, 3.0, 4.0, 6.0]);
        assert_eq!(out.channel_names().unwrap(), &["a".to_string(), "c".to_string()]);
        assert!(img.exclude_channels(&[3]).is_err());
        assert!(img.exclude_channels(&[0, 1, 2]).is_err());
    }
}
