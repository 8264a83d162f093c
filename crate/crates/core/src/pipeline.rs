//! End-to-end steps driven by a [`PipelineConfig`].

use crate::adjacency::ImageAdjacency;
use crate::config::PipelineConfig;
use crate::embedding::{
    graph_similarities, level_dissimilarities, level_probabilities, optimize_layout, parent_initialize, pca_initialize,
    random_initialize, superpixel_means, Embedding, InitMode, LayoutParams, LevelSimilarities,
};
use crate::error::{Error, Result};
use crate::hierarchy::{build_hierarchy, Hierarchy, HierarchyParams};
use crate::image::{preprocess_clip_normalize, HighDimImage};
use crate::knn::KnnMode;
use crate::neighbor_graph::{build_neighbor_graph, NeighborGraph, Perplexity};
use crate::walks::run_random_walks;

/// Perplexity for `n` points. With `allow_small` the clamp is skipped and the
/// value shrinks until the neighborhood fits.
pub fn perplexity_for(config: &PipelineConfig, n: usize) -> Perplexity {
    if config.allow_small {
        let p = Perplexity::unclamped(config.perplexity);
        if p.neighbor_count() >= n {
            Perplexity::for_small_input(n)
        } else {
            p
        }
    } else {
        Perplexity::clamped(config.perplexity)
    }
}

pub fn knn_mode(config: &PipelineConfig) -> KnnMode {
    if config.exact_knn {
        KnnMode::Exact
    } else {
        KnnMode::Approximate {
            seed: config.walks.seed,
        }
    }
}

/// Drops excluded channels, then clips and normalizes when configured.
pub fn prepare_image(img: &HighDimImage, config: &PipelineConfig) -> Result<HighDimImage> {
    let img = if config.exclude_channels.is_empty() {
        img.clone()
    } else {
        img.exclude_channels(&config.exclude_channels)?
    };
    match config.clip_percentile {
        Some(p) => Ok(preprocess_clip_normalize(&img, p)?.0),
        None => Ok(img),
    }
}

pub fn build_graph(img: &HighDimImage, config: &PipelineConfig) -> Result<NeighborGraph> {
    let perplexity = perplexity_for(config, img.pixel_count());
    build_neighbor_graph(img, perplexity, config.kernel, knn_mode(config))
}

/// Random walks on `graph` followed by the merge hierarchy.
pub fn build_levels(graph: &NeighborGraph, width: usize, height: usize, config: &PipelineConfig) -> Result<Hierarchy> {
    let adjacency = ImageAdjacency::build(width, height, config.connectivity)?;
    let t0 = run_random_walks(graph, config.walks)?;
    let params = HierarchyParams {
        max_levels: config.max_levels,
        merge_threshold: config.merge_threshold,
    };
    build_hierarchy(&adjacency, t0, params)
}

/// Similarities of `level`: the calibrated graph on level 0, walk overlaps
/// above.
pub fn similarities_for_level(
    hierarchy: &Hierarchy,
    graph: &NeighborGraph,
    level: usize,
    config: &PipelineConfig,
) -> Result<LevelSimilarities> {
    if level >= hierarchy.level_count() {
        return Err(Error::InvalidArgument(format!(
            "level {level} does not exist ({} levels)",
            hierarchy.level_count()
        )));
    }
    if level == 0 {
        graph_similarities(graph)
    } else {
        level_probabilities(
            &level_dissimilarities(&hierarchy.transitions[level]),
            level,
            config.kernel,
        )
    }
}

/// Starting coordinates for `m` superpixels with the given labels.
pub fn initial_layout(
    img: &HighDimImage,
    labels: &[u32],
    m: usize,
    mode: InitMode,
    parent: Option<(&[u32], &[[f64; 2]])>,
    seed: u64,
) -> Result<Vec<[f64; 2]>> {
    match (mode, parent) {
        (InitMode::Parent, Some((map, coords))) => parent_initialize(map, coords, seed),
        (InitMode::Parent, None) | (InitMode::Pca, _) if m >= 2 => {
            let means = superpixel_means(img, labels, m)?;
            pca_initialize(&means, m, img.channels(), seed)
        }
        _ => Ok(random_initialize(m, seed)),
    }
}

/// Embeds one level. `parent_coords` is the embedding of `level + 1`, used
/// by parent initialization.
pub fn embed_level(
    img: &HighDimImage,
    hierarchy: &Hierarchy,
    graph: &NeighborGraph,
    level: usize,
    config: &PipelineConfig,
    parent_coords: Option<&[[f64; 2]]>,
    progress: impl FnMut(usize, usize),
) -> Result<Embedding> {
    let sims = similarities_for_level(hierarchy, graph, level, config)?;
    let lvl = &hierarchy.levels[level];
    let parent = match (&lvl.parent, parent_coords) {
        (Some(map), Some(coords)) => Some((map.as_slice(), coords)),
        _ => None,
    };
    let init = initial_layout(
        img,
        &lvl.labels,
        lvl.superpixel_count(),
        config.init,
        parent,
        config.embed_seed,
    )?;
    let params = LayoutParams {
        iterations: config.embed_iterations,
        seed: config.embed_seed,
        ..LayoutParams::default()
    };
    optimize_layout(&sims.matrix, init, level, params, progress)
}
