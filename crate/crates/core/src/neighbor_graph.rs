//! Attribute-space neighbor graph: kNN construction, symmetrization with
//! MST bridging of disconnected components, and per-row transition
//! probabilities.

use std::path::Path;

use rayon::prelude::*;

use crate::calibrate::{calibrate_row, Kernel, RowStatus};
use crate::container::KeyValues;
use crate::error::{Error, Result};
use crate::image::HighDimImage;
use crate::knn::{knn_search, KnnMode, PointSet};
use crate::sparse::SparseFile;
use crate::union_find::UnionFind;

/// Smallest and largest perplexity accepted by the graph builder.
pub const PERPLEXITY_RANGE: (f64, f64) = (10.0, 100.0);

/// Perplexity `u`, coupled to the neighbor count by `k = 3u`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Perplexity(f64);

impl Perplexity {
    /// Clamps `u` into [`PERPLEXITY_RANGE`].
    pub fn clamped(u: f64) -> Self {
        Perplexity(u.clamp(PERPLEXITY_RANGE.0, PERPLEXITY_RANGE.1))
    }

    /// Uses `u` as given. Only meant for toy inputs with fewer points than
    /// the clamped range allows.
    pub fn unclamped(u: f64) -> Self {
        Perplexity(u)
    }

    /// Largest perplexity whose neighborhood fits into `n` points.
    pub fn for_small_input(n: usize) -> Self {
        Perplexity((n.saturating_sub(1)) as f64 / 3.0)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Neighbor count `k = 3u`.
    pub fn neighbor_count(self) -> usize {
        ((3.0 * self.0).round() as usize).max(1)
    }
}

/// Weighted attribute-space graph in compressed row form. Neighbor lists are
/// sorted by id after symmetrization and by distance before.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborGraph {
    n: usize,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    distances: Vec<f64>,
    probabilities: Option<Vec<f64>>,
    perplexity: Perplexity,
    kernel: Option<Kernel>,
    sigma: Vec<f64>,
    rho: Vec<f64>,
    row_status: Vec<RowStatus>,
    symmetric: bool,
    bridges: Vec<(u32, u32)>,
}

/// One outgoing edge used by [`NeighborGraph::from_rows`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub target: u32,
    pub distance: f64,
    pub probability: f64,
}

impl NeighborGraph {
    /// Builds a calibrated graph from explicit rows, e.g. for hand-made
    /// fixtures. Rows are sorted by target id.
    pub fn from_rows(rows: Vec<Vec<Edge>>, kernel: Kernel) -> Result<Self> {
        let n = rows.len();
        let mut offsets = vec![0];
        let mut neighbors = Vec::new();
        let mut distances = Vec::new();
        let mut probabilities = Vec::new();
        for (i, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|e| e.target);
            for e in row {
                if e.target as usize >= n || e.target as usize == i {
                    return Err(Error::InvalidArgument(format!("bad edge {i} -> {}", e.target)));
                }
                neighbors.push(e.target);
                distances.push(e.distance);
                probabilities.push(e.probability);
            }
            offsets.push(neighbors.len());
        }
        let mut graph = Self {
            n,
            offsets,
            neighbors,
            distances,
            probabilities: Some(probabilities),
            perplexity: Perplexity::unclamped(0.0),
            kernel: Some(kernel),
            sigma: vec![0.0; n],
            rho: vec![0.0; n],
            row_status: vec![RowStatus::Converged; n],
            symmetric: false,
            bridges: Vec::new(),
        };
        graph.symmetric = graph.is_structurally_symmetric();
        Ok(graph)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn perplexity(&self) -> Perplexity {
        self.perplexity
    }

    pub fn kernel(&self) -> Option<Kernel> {
        self.kernel
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Edges added to join disconnected components, as `(a, b)` with `a < b`.
    pub fn bridges(&self) -> &[(u32, u32)] {
        &self.bridges
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn distances(&self, i: usize) -> &[f64] {
        &self.distances[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn probabilities(&self, i: usize) -> Option<&[f64]> {
        self.probabilities
            .as_ref()
            .map(|p| &p[self.offsets[i]..self.offsets[i + 1]])
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn row_status(&self) -> &[RowStatus] {
        &self.row_status
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len()
    }

    fn is_structurally_symmetric(&self) -> bool {
        (0..self.n).all(|i| {
            self.neighbors(i)
                .iter()
                .all(|&j| self.neighbors(j as usize).binary_search(&(i as u32)).is_ok())
        })
    }

    /// Number of connected components of the undirected structure.
    pub fn component_count(&self) -> usize {
        let mut uf = UnionFind::new(self.n);
        for i in 0..self.n {
            for &j in self.neighbors(i) {
                uf.union(i, j as usize);
            }
        }
        uf.component_labels().1
    }

    pub fn to_sparse_file(&self) -> SparseFile {
        let mut meta = KeyValues::new();
        meta.set("kind", "neighbor-graph");
        meta.set("perplexity", self.perplexity.value());
        meta.set("kernel", self.kernel.map_or("none", Kernel::as_str));
        meta.set("symmetric", self.symmetric);
        let mut planes = vec![(
            "distance".to_string(),
            self.distances.iter().map(|&d| d as f32).collect(),
        )];
        if let Some(p) = &self.probabilities {
            planes.push(("probability".to_string(), p.iter().map(|&v| v as f32).collect()));
        }
        SparseFile {
            meta,
            nrows: self.n,
            ncols: self.n,
            offsets: self.offsets.iter().map(|&o| o as u64).collect(),
            indices: self.neighbors.clone(),
            planes,
            row_vectors: vec![
                ("sigma".to_string(), self.sigma.iter().map(|&v| v as f32).collect()),
                ("rho".to_string(), self.rho.iter().map(|&v| v as f32).collect()),
            ],
        }
    }

    /// Restores a graph written by [`NeighborGraph::to_sparse_file`].
    /// Probabilities are renormalized per row for the t-SNE kernel.
    pub fn from_sparse_file(file: &SparseFile, path: &Path) -> Result<Self> {
        let bad = |r: String| Error::format(path, r);
        if file.meta.get("kind") != Some("neighbor-graph") {
            return Err(bad("not a neighbor-graph file".into()));
        }
        let perplexity: f64 = file.meta.require("perplexity").map_err(bad)?;
        let kernel = match file.meta.get("kernel") {
            Some("none") | None => None,
            Some(k) => Some(k.parse::<Kernel>().map_err(bad)?),
        };
        let symmetric: bool = file.meta.require("symmetric").map_err(bad)?;
        let distances = file
            .plane("distance")
            .ok_or_else(|| bad("missing distance plane".into()))?
            .iter()
            .map(|&v| v as f64)
            .collect();
        let offsets: Vec<usize> = file.offsets.iter().map(|&o| o as usize).collect();
        let probabilities = file.plane("probability").map(|p| {
            let mut p: Vec<f64> = p.iter().map(|&v| v as f64).collect();
            if kernel == Some(Kernel::Tsne) {
                for w in offsets.windows(2) {
                    let row = &mut p[w[0]..w[1]];
                    let s: f64 = row.iter().sum();
                    if s > 0.0 {
                        row.iter_mut().for_each(|v| *v /= s);
                    }
                }
            }
            p
        });
        let vector = |name: &str| -> Vec<f64> {
            file.row_vector(name)
                .map(|v| v.iter().map(|&x| x as f64).collect())
                .unwrap_or_else(|| vec![0.0; file.nrows])
        };
        Ok(Self {
            n: file.nrows,
            offsets,
            neighbors: file.indices.clone(),
            distances,
            probabilities,
            perplexity: Perplexity::unclamped(perplexity),
            kernel,
            sigma: vector("sigma"),
            rho: vector("rho"),
            row_status: vec![RowStatus::Converged; file.nrows],
            symmetric,
            bridges: Vec::new(),
        })
    }
}

/// Directed kNN graph with `k = 3u` neighbors per pixel.
pub fn build_knn_graph(img: &HighDimImage, perplexity: Perplexity, mode: KnnMode) -> Result<NeighborGraph> {
    let points = PointSet::new(img.values(), img.channels());
    let k = perplexity.neighbor_count();
    let lists = knn_search(points, k, mode)?;
    let n = points.len();
    Ok(NeighborGraph {
        n,
        offsets: (0..=n).map(|i| i * k).collect(),
        neighbors: lists.neighbors,
        distances: lists.distances,
        probabilities: None,
        perplexity,
        kernel: None,
        sigma: vec![0.0; n],
        rho: vec![0.0; n],
        row_status: vec![RowStatus::Converged; n],
        symmetric: false,
        bridges: Vec::new(),
    })
}

/// Makes every edge bidirectional, then joins connected components along a
/// minimum spanning tree over component means. Each tree edge becomes one
/// bidirectional link between the closest pair of points of its two
/// components.
pub fn symmetrize_and_connect(graph: &NeighborGraph, img: &HighDimImage) -> Result<NeighborGraph> {
    let n = graph.n;
    if img.pixel_count() != n {
        return Err(Error::DimensionMismatch(format!(
            "graph has {n} vertices, image {} pixels",
            img.pixel_count()
        )));
    }
    let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
    for i in 0..n {
        for (&j, &d) in graph.neighbors(i).iter().zip(graph.distances(i)) {
            rows[i].push((j, d));
            rows[j as usize].push((i as u32, d));
        }
    }
    let points = PointSet::new(img.values(), img.channels());
    let bridges = bridging_edges(&rows, points);
    for &(a, b) in &bridges {
        let d = points.sq_dist(a as usize, b as usize);
        rows[a as usize].push((b, d));
        rows[b as usize].push((a, d));
    }

    let mut offsets = Vec::with_capacity(n + 1);
    let mut neighbors = Vec::new();
    let mut distances = Vec::new();
    offsets.push(0);
    for mut row in rows {
        row.sort_by_key(|a| a.0);
        row.dedup_by_key(|e| e.0);
        for (j, d) in row {
            neighbors.push(j);
            distances.push(d);
        }
        offsets.push(neighbors.len());
    }
    Ok(NeighborGraph {
        n,
        offsets,
        neighbors,
        distances,
        probabilities: None,
        perplexity: graph.perplexity,
        kernel: None,
        sigma: vec![0.0; n],
        rho: vec![0.0; n],
        row_status: vec![RowStatus::Converged; n],
        symmetric: true,
        bridges,
    })
}

fn bridging_edges(rows: &[Vec<(u32, f64)>], points: PointSet<'_>) -> Vec<(u32, u32)> {
    let n = rows.len();
    let mut uf = UnionFind::new(n);
    for (i, row) in rows.iter().enumerate() {
        for &(j, _) in row {
            uf.union(i, j as usize);
        }
    }
    let (labels, count) = uf.component_labels();
    if count <= 1 {
        return Vec::new();
    }
    let dim = points.dim();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); count];
    for (i, &c) in labels.iter().enumerate() {
        members[c as usize].push(i);
    }
    let means: Vec<Vec<f32>> = members
        .iter()
        .map(|m| {
            let mut acc = vec![0f64; dim];
            for &i in m {
                for (a, &v) in acc.iter_mut().zip(points.point(i)) {
                    *a += v as f64;
                }
            }
            acc.iter().map(|&a| (a / m.len() as f64) as f32).collect()
        })
        .collect();
    let mean_set: Vec<f32> = means.concat();
    let mean_points = PointSet::new(&mean_set, dim);

    // Prim's algorithm on the complete graph of component means
    let mut in_tree = vec![false; count];
    let mut best = vec![(f64::INFINITY, usize::MAX); count];
    in_tree[0] = true;
    for c in 1..count {
        best[c] = (mean_points.sq_dist(0, c), 0);
    }
    let mut tree_edges = Vec::with_capacity(count - 1);
    for _ in 1..count {
        let next = (0..count)
            .filter(|&c| !in_tree[c])
            .min_by(|&a, &b| best[a].0.total_cmp(&best[b].0).then(a.cmp(&b)))
            .unwrap();
        in_tree[next] = true;
        tree_edges.push((best[next].1, next));
        for c in 0..count {
            if !in_tree[c] {
                let d = mean_points.sq_dist(next, c);
                if d < best[c].0 {
                    best[c] = (d, next);
                }
            }
        }
    }

    let mut bridges = tree_edges
        .par_iter()
        .map(|&(a, b)| {
            let (small, large) = if members[a].len() <= members[b].len() {
                (&members[a], &members[b])
            } else {
                (&members[b], &members[a])
            };
            let mut pair = (f64::INFINITY, u32::MAX, u32::MAX);
            for &i in small {
                for &j in large {
                    let d = points.sq_dist(i, j);
                    let (lo, hi) = (i.min(j) as u32, i.max(j) as u32);
                    if d < pair.0 || (d == pair.0 && (lo, hi) < (pair.1, pair.2)) {
                        pair = (d, lo, hi);
                    }
                }
            }
            (pair.1, pair.2)
        })
        .collect::<Vec<_>>();
    bridges.sort_unstable();
    bridges
}

/// Computes per-row transition probabilities over each vertex's neighbor
/// list. The t-SNE kernel targets an entropy of `log2(u)` bits; the UMAP
/// kernel targets a row sum of `log2(3u)`.
pub fn calibrate_probabilities(graph: &NeighborGraph, perplexity: Perplexity, kernel: Kernel) -> NeighborGraph {
    let rows: Vec<_> = (0..graph.n)
        .into_par_iter()
        .map(|i| calibrate_row(graph.distances(i), kernel, perplexity.value()))
        .collect();
    let mut probabilities = Vec::with_capacity(graph.edge_count());
    let mut sigma = Vec::with_capacity(graph.n);
    let mut rho = Vec::with_capacity(graph.n);
    let mut row_status = Vec::with_capacity(graph.n);
    for row in rows {
        probabilities.extend_from_slice(&row.probabilities);
        sigma.push(row.sigma);
        rho.push(row.rho);
        row_status.push(row.status);
    }
    let unconverged = row_status.iter().filter(|&&s| s == RowStatus::Unreachable).count();
    if unconverged > 0 {
        log::warn!("calibration: {unconverged} rows did not reach the target");
    }
    NeighborGraph {
        probabilities: Some(probabilities),
        perplexity,
        kernel: Some(kernel),
        sigma,
        rho,
        row_status,
        ..graph.clone()
    }
}

/// kNN search, symmetrization and calibration in one call.
pub fn build_neighbor_graph(
    img: &HighDimImage,
    perplexity: Perplexity,
    kernel: Kernel,
    mode: KnnMode,
) -> Result<NeighborGraph> {
    let directed = build_knn_graph(img, perplexity, mode)?;
    let connected = symmetrize_and_connect(&directed, img)?;
    Ok(calibrate_probabilities(&connected, perplexity, kernel))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perplexity_clamp_and_k() {
        assert_eq!(Perplexity::clamped(30.0).neighbor_count(), 90);
        assert_eq!(Perplexity::clamped(5.0).value(), 10.0);
        assert_eq!(Perplexity::clamped(5.0).neighbor_count(), 30);
        assert_eq!(Perplexity::clamped(500.0).value(), 100.0);
    }

    fn two_clusters() -> HighDimImage {
        let mut values = Vec::new();
        for i in 0..12 {
            let base = if i < 6 { 0.0 } else { 100.0 };
            values.push(base + i as f32 * 0.1);
            values.push(base - i as f32 * 0.05);
        }
        HighDimImage::new(12, 1, 2, values).unwrap()
    }

    #[test]
    fn symmetrized_graph_is_connected_and_symmetric() {
        let img = two_clusters();
        let g = build_knn_graph(&img, Perplexity::unclamped(1.0), KnnMode::Exact).unwrap();
        assert_eq!(g.component_count(), 2);
        let s = symmetrize_and_connect(&g, &img).unwrap();
        assert_eq!(s.component_count(), 1);
        assert_eq!(s.bridges().len(), 1);
        assert!(s.is_structurally_symmetric());
        for i in 0..s.len() {
            assert!(!s.neighbors(i).contains(&(i as u32)));
        }
    }

    #[test]
    fn tsne_rows_are_stochastic() {
        let img = two_clusters();
        let g = build_neighbor_graph(&img, Perplexity::unclamped(1.0), Kernel::Tsne, KnnMode::Exact).unwrap();
        for i in 0..g.len() {
            let s: f64 = g.probabilities(i).unwrap().iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn graph_file_round_trip() {
        let img = two_clusters();
        let g = build_neighbor_graph(&img, Perplexity::unclamped(1.0), Kernel::Tsne, KnnMode::Exact).unwrap();
        let file = g.to_sparse_file();
        let bytes = file.to_bytes();
        let back = NeighborGraph::from_sparse_file(
            &SparseFile::from_bytes(&bytes, Path::new("mem")).unwrap(),
            Path::new("mem"),
        )
        .unwrap();
        assert_eq!(back.neighbors, g.neighbors);
        for i in 0..g.len() {
            for (a, b) in back.probabilities(i).unwrap().iter().zip(g.probabilities(i).unwrap()) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }
}
