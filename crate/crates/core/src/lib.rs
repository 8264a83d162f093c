//! Superpixel hierarchies for high-dimensional images.
//!
//! Pipeline: an attribute-space kNN graph ([`neighbor_graph`]) drives random
//! walks whose visit distributions ([`walks`]) are compared with the
//! Bhattacharyya coefficient to merge spatially adjacent superpixels level by
//! level ([`hierarchy`]). Every level can be embedded in 2-D ([`embedding`]),
//! refined into its children ([`refine`]) and scored against ground truth
//! ([`eval`]).

pub mod adjacency;
pub mod calibrate;
pub mod colorize;
pub mod config;
pub mod container;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod hierarchy;
pub mod image;
pub mod knn;
pub mod neighbor_graph;
pub mod pipeline;
pub mod refine;
pub mod rle;
pub mod sparse;
pub mod union_find;
pub mod walks;

pub use adjacency::{Connectivity, ImageAdjacency};
pub use calibrate::Kernel;
pub use config::PipelineConfig;
pub use embedding::{Embedding, InitMode, LayoutParams, LevelSimilarities};
pub use error::{Error, Result};
pub use eval::EvalCurve;
pub use hierarchy::{Hierarchy, HierarchyFile, HierarchyHeader, HierarchyParams, SuperpixelLevel};
pub use image::{GroundTruthLabels, HighDimImage};
pub use knn::KnnMode;
pub use neighbor_graph::{NeighborGraph, Perplexity};
pub use refine::{RefinementRequest, RefinementResult};
pub use sparse::CsrMatrix;
pub use walks::{TransitionMatrix, WalkParams};
