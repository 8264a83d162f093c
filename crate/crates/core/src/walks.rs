//! Random-walk visit distributions on the neighbor graph and their
//! coarse-graining when superpixels merge.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::container::KeyValues;
use crate::error::{Error, Result};
use crate::neighbor_graph::NeighborGraph;
use crate::sparse::{CsrMatrix, SparseFile};

/// Walk count `M`, steps per walk `S`, per-step decay and RNG seed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WalkParams {
    pub walks: usize,
    pub steps: usize,
    pub decay: f64,
    pub seed: u64,
}

impl Default for WalkParams {
    fn default() -> Self {
        Self {
            walks: 50,
            steps: 25,
            decay: 0.9,
            seed: 0,
        }
    }
}

impl WalkParams {
    /// Cheaper setting for multi-megapixel rasters.
    pub fn large_image() -> Self {
        Self {
            walks: 30,
            steps: 10,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.walks == 0 || self.steps == 0 {
            return Err(Error::InvalidArgument("walk count and step count must be >= 1".into()));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "decay must be in (0, 1], got {}",
                self.decay
            )));
        }
        Ok(())
    }
}

/// Row-stochastic matrix of visit distributions over the current
/// superpixels.
///
/// Every row also carries a mass: the number of pixel-level rows merged into
/// it. Merging sums mass-weighted rows, which is the same as adding the raw
/// visit weights of all member pixels, so coarse-graining composes.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix {
    matrix: CsrMatrix,
    mass: Vec<f64>,
    params: Option<WalkParams>,
}

impl TransitionMatrix {
    /// Wraps a square matrix, normalizing rows and giving each row unit mass.
    pub fn from_matrix(mut matrix: CsrMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch("transition matrix must be square".into()));
        }
        if matrix.values().iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument(
                "transition entries must be finite and >= 0".into(),
            ));
        }
        matrix.normalize_rows();
        let mass = vec![1.0; matrix.nrows()];
        Ok(Self {
            matrix,
            mass,
            params: None,
        })
    }

    pub fn with_mass(mut self, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != self.size() {
            return Err(Error::DimensionMismatch("one mass per row required".into()));
        }
        self.mass = mass;
        Ok(self)
    }

    /// Number of superpixels `m`.
    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn params(&self) -> Option<WalkParams> {
        self.params
    }

    pub fn row(&self, r: usize) -> (&[u32], &[f64]) {
        self.matrix.row(r)
    }

    pub fn nnz(&self) -> usize {
        self.matrix.nnz()
    }

    pub fn to_sparse_file(&self) -> SparseFile {
        let mut meta = KeyValues::new();
        meta.set("kind", "transition");
        if let Some(p) = self.params {
            meta.set("walks", p.walks);
            meta.set("steps", p.steps);
            meta.set("decay", p.decay);
            meta.set("seed", p.seed);
        }
        let mut file = SparseFile::from_matrix(&self.matrix, "probability", meta);
        file.row_vectors
            .push(("mass".into(), self.mass.iter().map(|&m| m as f32).collect()));
        file
    }

    pub fn from_sparse_file(file: &SparseFile, path: &Path) -> Result<Self> {
        let bad = |r: String| Error::format(path, r);
        if file.meta.get("kind") != Some("transition") {
            return Err(bad("not a transition file".into()));
        }
        let matrix = file.matrix("probability")?;
        let mut t = Self::from_matrix(matrix)?;
        if let Some(mass) = file.row_vector("mass") {
            t.mass = mass.iter().map(|&m| m as f64).collect();
        }
        let walks: Option<usize> = file.meta.parse_value("walks").map_err(bad)?;
        if let Some(walks) = walks {
            t.params = Some(WalkParams {
                walks,
                steps: file.meta.require("steps").map_err(bad)?,
                decay: file.meta.require("decay").map_err(bad)?,
                seed: file.meta.require("seed").map_err(bad)?,
            });
        }
        Ok(t)
    }
}

/// Per-vertex RNG stream: the global seed picks the key, the vertex id the
/// stream, so results do not depend on scheduling.
fn vertex_rng(seed: u64, vertex: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(vertex as u64);
    rng
}

/// Starts `walks` walks of `steps` steps from every vertex. Step `t`
/// (1-based) deposits `decay^(t-1)` on the vertex it reaches; each row is
/// then normalized to sum 1.
pub fn run_random_walks(graph: &NeighborGraph, params: WalkParams) -> Result<TransitionMatrix> {
    params.validate()?;
    let n = graph.len();
    if graph.probabilities(0).is_none() && n > 0 {
        return Err(Error::InvalidArgument("graph has no transition probabilities".into()));
    }
    let cumulative: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            graph
                .probabilities(i)
                .unwrap()
                .iter()
                .map(|&p| {
                    acc += p;
                    acc
                })
                .collect()
        })
        .collect();
    if let Some(i) = cumulative.iter().position(|c| c.last().is_none_or(|&s| s <= 0.0)) {
        return Err(Error::InvalidArgument(format!("vertex {i} has no outgoing edges")));
    }
    let step_weight: Vec<f64> = (0..params.steps).map(|t| params.decay.powi(t as i32)).collect();

    let rows: Vec<Vec<(u32, f64)>> = (0..n)
        .into_par_iter()
        .map(|start| {
            let mut rng = vertex_rng(params.seed, start);
            let mut deposits = Vec::with_capacity(params.walks * params.steps);
            for _ in 0..params.walks {
                let mut current = start;
                for &w in &step_weight {
                    let cum = &cumulative[current];
                    let u = rng.random::<f64>() * cum[cum.len() - 1];
                    let pos = cum.partition_point(|&c| c <= u).min(cum.len() - 1);
                    current = graph.neighbors(current)[pos] as usize;
                    deposits.push((current as u32, w));
                }
            }
            deposits
        })
        .collect();
    let mut matrix = CsrMatrix::from_rows(n, rows);
    matrix.normalize_rows();
    Ok(TransitionMatrix {
        matrix,
        mass: vec![1.0; n],
        params: Some(params),
    })
}

/// Checks that `merge_map` maps onto `0..m'` without gaps and returns `m'`.
pub fn validate_merge_map(merge_map: &[u32], size: usize) -> Result<usize> {
    if merge_map.len() != size {
        return Err(Error::InvalidMergeMap(format!(
            "map has {} entries for {size} superpixels",
            merge_map.len()
        )));
    }
    let new_size = merge_map.iter().map(|&v| v as usize + 1).max().unwrap_or(0);
    let mut hit = vec![false; new_size];
    for &v in merge_map {
        hit[v as usize] = true;
    }
    if let Some(missing) = hit.iter().position(|&h| !h) {
        return Err(Error::InvalidMergeMap(format!("target id {missing} is never used")));
    }
    Ok(new_size)
}

/// Coarse-grains `t`: rows of merged superpixels are added (weighted by their
/// mass), columns are added, and rows renormalized.
pub fn merge_transition_matrix(t: &TransitionMatrix, merge_map: &[u32]) -> Result<TransitionMatrix> {
    let new_size = validate_merge_map(merge_map, t.size())?;
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); new_size];
    for (old, &new) in merge_map.iter().enumerate() {
        groups[new as usize].push(old);
    }
    let merged: Vec<(Vec<(u32, f64)>, f64)> = groups
        .par_iter()
        .map_init(
            || (vec![0.0f64; new_size], vec![false; new_size], Vec::<u32>::new()),
            |(acc, seen, touched), members| {
                let mut mass = 0.0;
                for &old in members {
                    mass += t.mass[old];
                    let w = if members.len() == 1 { 1.0 } else { t.mass[old] };
                    let (cols, vals) = t.matrix.row(old);
                    for (&c, &v) in cols.iter().zip(vals) {
                        let target = merge_map[c as usize];
                        if !seen[target as usize] {
                            seen[target as usize] = true;
                            touched.push(target);
                        }
                        acc[target as usize] += w * v;
                    }
                }
                touched.sort_unstable();
                // a lone row only has columns summed, which keeps it stochastic
                let total: f64 = if members.len() == 1 {
                    1.0
                } else {
                    touched.iter().map(|&c| acc[c as usize]).sum()
                };
                let row = touched.iter().map(|&c| (c, acc[c as usize] / total)).collect();
                for &c in touched.iter() {
                    acc[c as usize] = 0.0;
                    seen[c as usize] = false;
                }
                touched.clear();
                (row, mass)
            },
        )
        .collect();
    let (rows, mass): (Vec<_>, Vec<_>) = merged.into_iter().unzip();
    Ok(TransitionMatrix {
        matrix: CsrMatrix::from_rows(new_size, rows),
        mass,
        params: t.params,
    })
}
