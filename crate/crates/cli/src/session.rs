//! On-disk run artifacts and the loaded state shared by the later
//! subcommands and the server.

use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use sha2::{Digest, Sha256};
use sphx_core::embedding::{
    optimize_layout, parent_initialize, pca_initialize, random_initialize, read_coords_csv, superpixel_means,
};
use sphx_core::hierarchy::HierarchyFile;
use sphx_core::pipeline;
use sphx_core::refine::refine_selection;
use sphx_core::sparse::SparseFile;
use sphx_core::{
    Embedding, Hierarchy, HighDimImage, LayoutParams, LevelSimilarities, NeighborGraph, PipelineConfig,
    RefinementRequest, RefinementResult, TransitionMatrix,
};

use crate::error::{stage, CliError, CliResult};

/// File layout of a run directory.
#[derive(Clone, Debug)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.txt")
    }

    pub fn graph(&self) -> PathBuf {
        self.root.join("graph.sparse")
    }

    pub fn walks(&self) -> PathBuf {
        self.root.join("walks.sparse")
    }

    pub fn hierarchy(&self) -> PathBuf {
        self.root.join("hierarchy.sphx")
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn embedding_dir(&self) -> PathBuf {
        self.root.join("embed")
    }

    pub fn embedding_stem(level: usize) -> String {
        format!("level_{level}")
    }

    pub fn embedding_csv(&self, level: usize) -> PathBuf {
        self.embedding_dir()
            .join(format!("{}.csv", Self::embedding_stem(level)))
    }

    pub fn refine_dir(&self, reference: &str) -> PathBuf {
        self.root.join("refine").join(reference)
    }

    pub fn create(&self) -> CliResult<()> {
        std::fs::create_dir_all(&self.root).map_err(|e| CliError::io(&self.root, e))
    }

    pub fn load_config(&self) -> CliResult<PipelineConfig> {
        let path = self.config();
        if !path.exists() {
            return Err(CliError::Data(format!(
                "{} has no config.txt; run `sphx hierarchy` first",
                self.root.display()
            )));
        }
        PipelineConfig::load(&path).map_err(stage("config"))
    }
}

fn require(path: &Path, hint: &str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Data(format!("missing {}; {hint}", path.display())))
    }
}

/// Hex SHA-256 of a file.
pub fn file_hash(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Canonical form of a selection: ascending, without duplicates.
pub fn canonical_ids(ids: &[u32]) -> Vec<u32> {
    let mut ids = ids.to_vec();
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// Short stable name of a refinement, derived from everything its result
/// depends on.
pub fn refinement_ref(provenance: &str, request: &RefinementRequest, seed: u64, iterations: usize) -> String {
    let mut h = Sha256::new();
    h.update(provenance.as_bytes());
    h.update((request.level as u64).to_le_bytes());
    for id in canonical_ids(&request.selected) {
        h.update(id.to_le_bytes());
    }
    match request.gamma {
        Some(g) => h.update(g.to_bits().to_le_bytes()),
        None => h.update([0xff; 8]),
    }
    h.update(seed.to_le_bytes());
    h.update((iterations as u64).to_le_bytes());
    hex::encode(&h.finalize()[..8])
}

/// Everything a built run directory holds, loaded and validated.
pub struct Session {
    pub dir: RunDir,
    pub config: PipelineConfig,
    /// The image after channel exclusion and preprocessing.
    pub image: HighDimImage,
    pub graph: NeighborGraph,
    pub hierarchy: Hierarchy,
    pub width: usize,
    pub height: usize,
    /// Hash of the hierarchy file.
    pub provenance: String,
    similarities: Vec<OnceLock<Result<Arc<LevelSimilarities>, CliError>>>,
}

impl Session {
    pub fn load(root: &Path) -> CliResult<Self> {
        let dir = RunDir::new(root);
        let config = dir.load_config()?;
        let hint = "run `sphx hierarchy` first";
        require(&dir.graph(), hint)?;
        require(&dir.walks(), hint)?;
        require(&dir.hierarchy(), hint)?;
        let raw = HighDimImage::load(&config.input).map_err(stage("data-core"))?;
        let image = pipeline::prepare_image(&raw, &config).map_err(stage("data-core"))?;
        let graph_file = SparseFile::read(&dir.graph()).map_err(stage("neighbor-graph"))?;
        let graph = NeighborGraph::from_sparse_file(&graph_file, &dir.graph()).map_err(stage("neighbor-graph"))?;
        let walks_file = SparseFile::read(&dir.walks()).map_err(stage("walk-features"))?;
        let t0 = TransitionMatrix::from_sparse_file(&walks_file, &dir.walks()).map_err(stage("walk-features"))?;
        let file = HierarchyFile::read(&dir.hierarchy()).map_err(stage("hierarchy"))?;
        let (width, height) = (file.header.width, file.header.height);
        if (width, height) != (image.width(), image.height()) || graph.len() != image.pixel_count() {
            return Err(CliError::Data(format!(
                "artifacts in {} do not match the {}x{} input image",
                root.display(),
                image.width(),
                image.height()
            )));
        }
        let hierarchy = file.into_hierarchy(t0).map_err(stage("hierarchy"))?;
        let provenance = file_hash(&dir.hierarchy())?;
        let similarities = (0..hierarchy.level_count()).map(|_| OnceLock::new()).collect();
        Ok(Self {
            dir,
            config,
            image,
            graph,
            hierarchy,
            width,
            height,
            provenance,
            similarities,
        })
    }

    pub fn level_count(&self) -> usize {
        self.hierarchy.level_count()
    }

    pub fn check_level(&self, level: usize) -> CliResult<()> {
        if level < self.level_count() {
            Ok(())
        } else {
            Err(CliError::Usage(format!(
                "level {level} does not exist ({} levels)",
                self.level_count()
            )))
        }
    }

    /// Similarities of `level`, computed once.
    pub fn similarities(&self, level: usize) -> CliResult<Arc<LevelSimilarities>> {
        self.check_level(level)?;
        self.similarities[level]
            .get_or_init(|| {
                pipeline::similarities_for_level(&self.hierarchy, &self.graph, level, &self.config)
                    .map(Arc::new)
                    .map_err(stage("embedding"))
            })
            .clone()
    }

    /// Saved coordinates of `level`, if `sphx embed` produced them.
    pub fn saved_embedding(&self, level: usize) -> CliResult<Option<Vec<[f64; 2]>>> {
        let path = self.dir.embedding_csv(level);
        if !path.exists() {
            return Ok(None);
        }
        let coords = read_coords_csv(&path).map_err(stage("embedding"))?;
        let m = self.hierarchy.levels[level].superpixel_count();
        if coords.len() != m {
            return Err(CliError::Data(format!(
                "{} holds {} points but level {level} has {m} superpixels",
                path.display(),
                coords.len()
            )));
        }
        Ok(Some(coords))
    }

    /// Per-superpixel channel means of `level`, superpixel-major.
    pub fn channel_means(&self, level: usize) -> CliResult<Vec<f64>> {
        self.check_level(level)?;
        let lvl = &self.hierarchy.levels[level];
        superpixel_means(&self.image, &lvl.labels, lvl.superpixel_count()).map_err(stage("embedding"))
    }

    /// Embeds `level` with the configured parameters.
    pub fn embed(
        &self,
        level: usize,
        parent_coords: Option<&[[f64; 2]]>,
        progress: impl FnMut(usize, usize),
    ) -> CliResult<Embedding> {
        self.check_level(level)?;
        let sims = self.similarities(level)?;
        let lvl = &self.hierarchy.levels[level];
        let parent = match (&lvl.parent, parent_coords) {
            (Some(map), Some(coords)) => Some((map.as_slice(), coords)),
            _ => None,
        };
        let init = pipeline::initial_layout(
            &self.image,
            &lvl.labels,
            lvl.superpixel_count(),
            self.config.init,
            parent,
            self.config.embed_seed,
        )
        .map_err(stage("embedding"))?;
        let params = LayoutParams {
            iterations: self.config.embed_iterations,
            seed: self.config.embed_seed,
            ..LayoutParams::default()
        };
        optimize_layout(&sims.matrix, init, level, params, progress).map_err(stage("embedding"))
    }

    /// Subset of a refinement without its layout.
    pub fn refine(&self, request: &RefinementRequest) -> CliResult<RefinementResult> {
        request.validate(&self.hierarchy.levels).map_err(stage("refinement"))?;
        let sims = self.similarities(request.level - 1)?;
        refine_selection(&self.hierarchy.levels, &sims, request).map_err(stage("refinement"))
    }

    /// Layout of a refined subset. Points start at their parent's position in
    /// `parent_coords` when given, else at the principal components of their
    /// means.
    pub fn embed_refinement(
        &self,
        result: &RefinementResult,
        parent_coords: Option<&[[f64; 2]]>,
        seed: u64,
        iterations: usize,
        progress: impl FnMut(usize, usize),
    ) -> CliResult<Embedding> {
        let lvl = &self.hierarchy.levels[result.level];
        let k = result.subset.len();
        let init = match (parent_coords, &lvl.parent) {
            (Some(coords), Some(map)) => {
                let parents: Vec<u32> = result.subset.iter().map(|&id| map[id as usize]).collect();
                parent_initialize(&parents, coords, seed).map_err(stage("embedding"))?
            }
            _ if k >= 2 => {
                let c = self.image.channels();
                let all =
                    superpixel_means(&self.image, &lvl.labels, lvl.superpixel_count()).map_err(stage("embedding"))?;
                let means: Vec<f64> = result
                    .subset
                    .iter()
                    .flat_map(|&id| all[id as usize * c..(id as usize + 1) * c].iter().copied())
                    .collect();
                pca_initialize(&means, k, c, seed).map_err(stage("embedding"))?
            }
            _ => random_initialize(k, seed),
        };
        let params = LayoutParams {
            iterations,
            seed,
            ..LayoutParams::default()
        };
        optimize_layout(&result.matrix, init, result.level, params, progress).map_err(stage("embedding"))
    }
}
