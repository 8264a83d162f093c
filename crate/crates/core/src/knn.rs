//! k-nearest-neighbor search in attribute space under squared Euclidean
//! distance.
//!
//! [`KnnMode::Exact`] is a brute-force scan and the ground truth for testing.
//! [`KnnMode::Approximate`] runs NN-descent, which is much cheaper on large
//! rasters; [`sample_recall`] measures its quality against exact search.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Row-major set of `len` points of dimension `dim`.
#[derive(Clone, Copy, Debug)]
pub struct PointSet<'a> {
    data: &'a [f32],
    dim: usize,
}

impl<'a> PointSet<'a> {
    pub fn new(data: &'a [f32], dim: usize) -> Self {
        assert!(dim > 0 && data.len().is_multiple_of(dim));
        Self { data, dim }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn point(&self, i: usize) -> &'a [f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn sq_dist(&self, i: usize, j: usize) -> f64 {
        squared_euclidean(self.point(i), self.point(j))
    }
}

/// `‖a − b‖²`, accumulated in eight f32 lanes.
#[inline]
pub fn squared_euclidean(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = [0f32; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (xa, xb) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for l in 0..8 {
            let d = xa[l] - xb[l];
            acc[l] += d * d;
        }
    }
    let mut tail = 0f32;
    for i in chunks * 8..a.len() {
        let d = a[i] - b[i];
        tail += d * d;
    }
    acc.iter().map(|&x| x as f64).sum::<f64>() + tail as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KnnMode {
    Exact,
    /// NN-descent with a seeded random initialization.
    Approximate {
        seed: u64,
    },
}

/// Directed kNN lists: `k` neighbors per point, ascending by `(distance, id)`.
#[derive(Clone, Debug, PartialEq)]
pub struct KnnLists {
    pub k: usize,
    pub neighbors: Vec<u32>,
    pub distances: Vec<f64>,
}

impl KnnLists {
    pub fn len(&self) -> usize {
        self.neighbors.len().checked_div(self.k).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let span = i * self.k..(i + 1) * self.k;
        (&self.neighbors[span.clone()], &self.distances[span])
    }
}

fn by_dist_then_id(a: &(f64, u32), b: &(f64, u32)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Finds the `k` nearest other points of every point.
pub fn knn_search(points: PointSet<'_>, k: usize, mode: KnnMode) -> Result<KnnLists> {
    let n = points.len();
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    if n <= k {
        return Err(Error::TooFewPoints { n, k });
    }
    let rows: Vec<Vec<(f64, u32)>> = match mode {
        KnnMode::Exact => (0..n).into_par_iter().map(|i| exact_row(points, i, k)).collect(),
        KnnMode::Approximate { seed } => nn_descent(points, k, seed),
    };
    let mut neighbors = Vec::with_capacity(n * k);
    let mut distances = Vec::with_capacity(n * k);
    for row in rows {
        for (d, j) in row {
            neighbors.push(j);
            distances.push(d);
        }
    }
    Ok(KnnLists {
        k,
        neighbors,
        distances,
    })
}

fn exact_row(points: PointSet<'_>, i: usize, k: usize) -> Vec<(f64, u32)> {
    let mut all: Vec<(f64, u32)> = (0..points.len())
        .filter(|&j| j != i)
        .map(|j| (points.sq_dist(i, j), j as u32))
        .collect();
    all.select_nth_unstable_by(k - 1, by_dist_then_id);
    all.truncate(k);
    all.sort_unstable_by(by_dist_then_id);
    all
}

/// Bounded candidate list kept sorted by `(distance, id)`.
struct Candidates {
    items: Vec<(f64, u32, bool)>,
    k: usize,
}

impl Candidates {
    fn insert(&mut self, d: f64, j: u32) -> bool {
        if self.items.iter().any(|&(_, id, _)| id == j) {
            return false;
        }
        if self.items.len() == self.k {
            let worst = self.items[self.k - 1];
            if by_dist_then_id(&(d, j), &(worst.0, worst.1)).is_ge() {
                return false;
            }
            self.items.pop();
        }
        let pos = self
            .items
            .partition_point(|&(dd, id, _)| by_dist_then_id(&(dd, id), &(d, j)).is_lt());
        self.items.insert(pos, (d, j, true));
        true
    }
}

const NN_DESCENT_MAX_ITERS: usize = 16;
const NN_DESCENT_DELTA: f64 = 0.001;

fn nn_descent(points: PointSet<'_>, k: usize, seed: u64) -> Vec<Vec<(f64, u32)>> {
    let n = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lists: Vec<Candidates> = (0..n)
        .map(|i| {
            let mut c = Candidates {
                items: Vec::with_capacity(k),
                k,
            };
            while c.items.len() < k {
                let j = rng.random_range(0..n);
                if j != i {
                    c.insert(points.sq_dist(i, j), j as u32);
                }
            }
            c
        })
        .collect();

    for _ in 0..NN_DESCENT_MAX_ITERS {
        let mut new_sets: Vec<Vec<u32>> = vec![Vec::new(); n];
        let mut old_sets: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (i, list) in lists.iter_mut().enumerate() {
            for item in &mut list.items {
                if item.2 {
                    new_sets[i].push(item.1);
                    new_sets[item.1 as usize].push(i as u32);
                    item.2 = false;
                } else {
                    old_sets[i].push(item.1);
                    old_sets[item.1 as usize].push(i as u32);
                }
            }
        }
        let cap = 2 * k;
        for set in new_sets.iter_mut().chain(old_sets.iter_mut()) {
            set.sort_unstable();
            set.dedup();
            if set.len() > cap {
                let picked = sample(&mut rng, set.len(), cap);
                let mut kept: Vec<u32> = picked.iter().map(|p| set[p]).collect();
                kept.sort_unstable();
                *set = kept;
            }
        }
        let mut updates = 0usize;
        for v in 0..n {
            let new = &new_sets[v];
            let old = &old_sets[v];
            for (a, &p) in new.iter().enumerate() {
                for &q in new[a + 1..].iter().chain(old.iter()) {
                    if p == q {
                        continue;
                    }
                    let d = points.sq_dist(p as usize, q as usize);
                    updates += lists[p as usize].insert(d, q) as usize;
                    updates += lists[q as usize].insert(d, p) as usize;
                }
            }
        }
        if (updates as f64) < NN_DESCENT_DELTA * (n * k) as f64 {
            break;
        }
    }
    lists
        .into_iter()
        .map(|c| c.items.into_iter().map(|(d, j, _)| (d, j)).collect())
        .collect()
}

/// Fraction of true neighbors recovered, averaged over a random sample of
/// `sample_size` points checked against exact search.
pub fn sample_recall(points: PointSet<'_>, lists: &KnnLists, sample_size: usize, seed: u64) -> f64 {
    let n = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = sample(&mut rng, n, sample_size.min(n));
    let k = lists.k;
    let hits: usize = picked
        .iter()
        .map(|i| {
            let truth = exact_row(points, i, k);
            let found = lists.row(i).0;
            truth.iter().filter(|(_, j)| found.contains(j)).count()
        })
        .sum();
    hits as f64 / (picked.len() * k) as f64
}
