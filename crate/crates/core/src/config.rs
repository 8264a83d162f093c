//! Pipeline configuration in the `key=value` text form.

use std::path::{Path, PathBuf};

use crate::adjacency::Connectivity;
use crate::calibrate::Kernel;
use crate::container::KeyValues;
use crate::embedding::InitMode;
use crate::error::{Error, Result};
use crate::walks::WalkParams;

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub ground_truth: Option<PathBuf>,
    pub output: PathBuf,
    /// Clip percentile for preprocessing; `None` skips preprocessing.
    pub clip_percentile: Option<f64>,
    pub exclude_channels: Vec<usize>,
    pub perplexity: f64,
    /// Skips the perplexity clamp so tiny inputs can be processed.
    pub allow_small: bool,
    pub kernel: Kernel,
    pub exact_knn: bool,
    pub walks: WalkParams,
    pub connectivity: Connectivity,
    pub max_levels: usize,
    pub merge_threshold: f64,
    pub embed_iterations: usize,
    pub init: InitMode,
    pub embed_seed: u64,
    pub gamma: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: PathBuf::new(),
            ground_truth: None,
            output: PathBuf::from("out"),
            clip_percentile: Some(0.98),
            exclude_channels: Vec::new(),
            perplexity: 30.0,
            allow_small: false,
            kernel: Kernel::Tsne,
            exact_knn: true,
            walks: WalkParams::default(),
            connectivity: Connectivity::Four,
            max_levels: 32,
            merge_threshold: 0.0,
            embed_iterations: 1000,
            init: InitMode::Pca,
            embed_seed: 0,
            gamma: None,
        }
    }
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), T::to_string)
}

impl PipelineConfig {
    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("input", self.input.display());
        kv.set("ground_truth", opt(&self.ground_truth.as_ref().map(|p| p.display())));
        kv.set("output", self.output.display());
        kv.set("clip_percentile", opt(&self.clip_percentile));
        kv.set(
            "exclude_channels",
            self.exclude_channels
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(","),
        );
        kv.set("perplexity", self.perplexity);
        kv.set("allow_small", self.allow_small);
        kv.set("kernel", self.kernel);
        kv.set("exact_knn", self.exact_knn);
        kv.set("walks", self.walks.walks);
        kv.set("steps", self.walks.steps);
        kv.set("decay", self.walks.decay);
        kv.set("seed", self.walks.seed);
        kv.set("connectivity", self.connectivity.as_number());
        kv.set("max_levels", self.max_levels);
        kv.set("merge_threshold", self.merge_threshold);
        kv.set("embed_iterations", self.embed_iterations);
        kv.set("init", self.init.as_str());
        kv.set("embed_seed", self.embed_seed);
        kv.set("gamma", opt(&self.gamma));
        kv
    }

    /// Reads a configuration; missing keys keep their defaults.
    pub fn from_key_values(kv: &KeyValues) -> std::result::Result<Self, String> {
        fn optional<T: std::str::FromStr>(kv: &KeyValues, key: &str) -> std::result::Result<Option<Option<T>>, String> {
            match kv.get(key) {
                None => Ok(None),
                Some("none") | Some("") => Ok(Some(None)),
                Some(_) => kv.parse_value(key).map(Some),
            }
        }
        let mut c = Self::default();
        if let Some(v) = kv.get("input") {
            c.input = PathBuf::from(v);
        }
        if let Some(v) = optional::<String>(kv, "ground_truth")? {
            c.ground_truth = v.map(PathBuf::from);
        }
        if let Some(v) = kv.get("output") {
            c.output = PathBuf::from(v);
        }
        if let Some(v) = optional(kv, "clip_percentile")? {
            c.clip_percentile = v;
        }
        if let Some(v) = kv.get("exclude_channels") {
            c.exclude_channels = v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|_| format!("invalid channel index '{s}'")))
                .collect::<std::result::Result<_, _>>()?;
        }
        macro_rules! field {
            ($key:literal, $target:expr) => {
                if let Some(v) = kv.parse_value($key)? {
                    $target = v;
                }
            };
        }
        field!("perplexity", c.perplexity);
        field!("allow_small", c.allow_small);
        field!("kernel", c.kernel);
        field!("exact_knn", c.exact_knn);
        field!("walks", c.walks.walks);
        field!("steps", c.walks.steps);
        field!("decay", c.walks.decay);
        field!("seed", c.walks.seed);
        if let Some(n) = kv.parse_value::<u32>("connectivity")? {
            c.connectivity = Connectivity::from_number(n).map_err(|e| e.to_string())?;
        }
        field!("max_levels", c.max_levels);
        field!("merge_threshold", c.merge_threshold);
        field!("embed_iterations", c.embed_iterations);
        field!("init", c.init);
        field!("embed_seed", c.embed_seed);
        if let Some(v) = optional(kv, "gamma")? {
            c.gamma = v;
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let kv = KeyValues::parse(&text).map_err(|r| Error::format(path, r))?;
        Self::from_key_values(&kv).map_err(|r| Error::format(path, r))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_key_values().to_text()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let c = PipelineConfig {
            input: "data/pines".into(),
            ground_truth: Some("data/pines_gt".into()),
            exclude_channels: vec![103, 104, 105],
            perplexity: 12.5,
            allow_small: true,
            kernel: Kernel::Umap,
            walks: WalkParams {
                walks: 30,
                steps: 10,
                decay: 0.85,
                seed: 7,
            },
            connectivity: Connectivity::Eight,
            gamma: Some(0.01),
            clip_percentile: None,
            ..PipelineConfig::default()
        };
        let text = c.to_key_values().to_text();
        let back = PipelineConfig::from_key_values(&KeyValues::parse(&text).unwrap()).unwrap();
        assert_eq!(back, c);
        let default = PipelineConfig::default();
        let text = default.to_key_values().to_text();
        assert_eq!(
            PipelineConfig::from_key_values(&KeyValues::parse(&text).unwrap()).unwrap(),
            default
        );
    }
}
