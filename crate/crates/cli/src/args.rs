//! Command-line arguments.

use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use sphx_core::{Connectivity, InitMode, Kernel, PipelineConfig};

use crate::error::{CliError, CliResult};

/// Environment variable overriding the worker thread count.
pub const THREADS_ENV: &str = "SPHX_THREADS";
/// Environment variable enabling test mode, in which seeds are mandatory.
pub const TEST_MODE_ENV: &str = "SPHX_TEST_MODE";

#[derive(Debug, Parser)]
#[command(name = "sphx", version, about = "Superpixel hierarchies for high-dimensional images")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a CSV table (one row per pixel) into an image or label container.
    Convert(ConvertArgs),
    /// Build the attribute-space neighbor graph.
    Graph(BuildArgs),
    /// Build the neighbor graph, random-walk features and the superpixel hierarchy.
    Hierarchy(BuildArgs),
    /// Embed hierarchy levels in 2-D.
    Embed(EmbedArgs),
    /// Refine a superpixel selection into the level below and embed it.
    Refine(RefineArgs),
    /// Color a level's pixels by their superpixel's embedding position.
    Colorize(ColorizeArgs),
    /// Score every hierarchy level against ground truth.
    Eval(EvalArgs),
    /// Serve a built run directory to the explorer.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    /// CSV file with one row per pixel in row-major order.
    #[arg(long)]
    pub csv: PathBuf,
    #[arg(long)]
    pub width: usize,
    #[arg(long)]
    pub height: usize,
    /// Output container base path (`.meta` and `.raw` are appended).
    #[arg(long, short)]
    pub output: PathBuf,
    /// Treat the single column as integer ground-truth labels.
    #[arg(long)]
    pub labels: bool,
    /// First row holds channel names.
    #[arg(long)]
    pub header: bool,
}

/// Flags mirroring the pipeline configuration. Unset flags keep the value
/// from `--config` or the defaults.
#[derive(Debug, Default, Args)]
pub struct PipelineArgs {
    /// Configuration file in `key=value` form.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input image container.
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    /// Ground-truth label container.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Run directory receiving the artifacts.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Global clip percentile in (0, 1].
    #[arg(long, conflicts_with = "no_clip")]
    pub clip_percentile: Option<f64>,
    /// Skip clipping and normalization.
    #[arg(long)]
    pub no_clip: bool,
    /// Comma-separated channel indices to drop.
    #[arg(long, value_delimiter = ',')]
    pub exclude_channels: Option<Vec<usize>>,
    #[arg(long)]
    pub perplexity: Option<f64>,
    /// Accept inputs too small for the perplexity clamp.
    #[arg(long)]
    pub allow_small: bool,
    /// `tsne` or `umap`.
    #[arg(long)]
    pub kernel: Option<Kernel>,
    /// Use the approximate neighbor search.
    #[arg(long)]
    pub approximate_knn: bool,
    /// Random walks per pixel (M).
    #[arg(long)]
    pub walks: Option<usize>,
    /// Steps per walk (S).
    #[arg(long)]
    pub steps: Option<usize>,
    /// Visit weight decay base.
    #[arg(long)]
    pub decay: Option<f64>,
    /// Random-walk seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// 4 or 8.
    #[arg(long)]
    pub connectivity: Option<u32>,
    #[arg(long)]
    pub max_levels: Option<usize>,
    #[arg(long)]
    pub merge_threshold: Option<f64>,
}

impl PipelineArgs {
    pub fn apply(&self, mut c: PipelineConfig) -> CliResult<PipelineConfig> {
        if let Some(v) = &self.input {
            c.input = v.clone();
        }
        if let Some(v) = &self.gt {
            c.ground_truth = Some(v.clone());
        }
        if let Some(v) = &self.output {
            c.output = v.clone();
        }
        if let Some(v) = self.clip_percentile {
            if !(v > 0.0 && v <= 1.0) {
                return Err(CliError::Usage(format!("--clip-percentile must be in (0, 1], got {v}")));
            }
            c.clip_percentile = Some(v);
        }
        if self.no_clip {
            c.clip_percentile = None;
        }
        if let Some(v) = &self.exclude_channels {
            c.exclude_channels = v.clone();
        }
        if let Some(v) = self.perplexity {
            c.perplexity = v;
        }
        c.allow_small |= self.allow_small;
        if let Some(v) = self.kernel {
            c.kernel = v;
        }
        if self.approximate_knn {
            c.exact_knn = false;
        }
        if let Some(v) = self.walks {
            c.walks.walks = v;
        }
        if let Some(v) = self.steps {
            c.walks.steps = v;
        }
        if let Some(v) = self.decay {
            c.walks.decay = v;
        }
        if let Some(v) = self.seed {
            c.walks.seed = v;
        }
        if let Some(v) = self.connectivity {
            c.connectivity = Connectivity::from_number(v).map_err(|e| CliError::Usage(e.to_string()))?;
        }
        if let Some(v) = self.max_levels {
            c.max_levels = v;
        }
        if let Some(v) = self.merge_threshold {
            c.merge_threshold = v;
        }
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// Run directory written by `sphx hierarchy`.
    #[arg(long)]
    pub run: PathBuf,
    /// Level to embed; every level when omitted.
    #[arg(long)]
    pub level: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// `pca`, `random` or `parent`.
    #[arg(long)]
    pub init: Option<InitMode>,
    /// Layout seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl EmbedArgs {
    pub fn apply(&self, mut c: PipelineConfig) -> PipelineConfig {
        if let Some(v) = self.iterations {
            c.embed_iterations = v;
        }
        if let Some(v) = self.init {
            c.init = v;
        }
        if let Some(v) = self.seed {
            c.embed_seed = v;
        }
        c
    }
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    #[arg(long)]
    pub run: PathBuf,
    /// Level of the selected superpixels.
    #[arg(long)]
    pub level: usize,
    /// Comma-separated superpixel ids.
    #[arg(
        long,
        value_delimiter = ',',
        required_unless_present = "ids_file",
        conflicts_with = "ids_file"
    )]
    pub ids: Option<Vec<u32>>,
    /// File of superpixel ids separated by commas or whitespace.
    #[arg(long)]
    pub ids_file: Option<PathBuf>,
    /// Expansion threshold in [0, 1]; the configured value when omitted.
    #[arg(long, conflicts_with = "no_expand")]
    pub gamma: Option<f64>,
    /// Refine to the children only.
    #[arg(long)]
    pub no_expand: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Output directory; `<run>/refine/<reference>` by default.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ColorizeArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub level: usize,
    /// Four `#rrggbb` corner colors: bottom-left, bottom-right, top-left, top-right.
    #[arg(long)]
    pub colormap: Option<String>,
    /// PNG path; `<run>/colorized_<level>.png` by default.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub run: PathBuf,
    /// Ground-truth container; the configured one when omitted.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// CSV path; `<run>/eval.csv` by default.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Refinement jobs allowed to run at once.
    #[arg(long, default_value_t = 2)]
    pub max_jobs: usize,
    /// Largest refined subset accepted.
    #[arg(long, default_value_t = 20_000)]
    pub max_points: usize,
    /// Layout iterations for refinements.
    #[arg(long, default_value_t = 1000)]
    pub iterations: usize,
}

pub fn test_mode() -> bool {
    std::env::var(TEST_MODE_ENV).is_ok_and(|v| !v.is_empty() && v != "0")
}
