//! Shortest-path distances on the attribute graph and the Hausdorff distance
//! between pixel sets built on them.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::neighbor_graph::NeighborGraph;

#[derive(Clone, Copy, PartialEq)]
struct Dist(f64);

impl Eq for Dist {}

impl PartialOrd for Dist {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dist {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Distance from every vertex to the nearest source, with edge lengths equal
/// to the squared attribute distances stored in the graph.
pub fn geodesic_distances_from(graph: &NeighborGraph, sources: &[u32]) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; graph.len()];
    let mut heap = BinaryHeap::new();
    for &s in sources {
        dist[s as usize] = 0.0;
        heap.push(Reverse((Dist(0.0), s)));
    }
    while let Some(Reverse((Dist(d), v))) = heap.pop() {
        let v = v as usize;
        if d > dist[v] {
            continue;
        }
        for (&w, &len) in graph.neighbors(v).iter().zip(graph.distances(v)) {
            let nd = d + len;
            if nd < dist[w as usize] {
                dist[w as usize] = nd;
                heap.push(Reverse((Dist(nd), w)));
            }
        }
    }
    dist
}

fn sample_set(set: &[u32], samples: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
    if set.len() <= samples {
        return set.to_vec();
    }
    let mut picked: Vec<u32> = sample(rng, set.len(), samples).iter().map(|i| set[i]).collect();
    picked.sort_unstable();
    picked
}

/// Hausdorff distance between pixel sets `a` and `b` under graph geodesics.
/// Sets larger than `samples` are replaced by a uniform random sample of that
/// size.
pub fn geodesic_hausdorff(graph: &NeighborGraph, a: &[u32], b: &[u32], samples: usize, seed: u64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("Hausdorff distance of an empty set".into()));
    }
    if samples == 0 {
        return Err(Error::InvalidArgument("sample count must be >= 1".into()));
    }
    if let Some(&bad) = a.iter().chain(b).find(|&&v| v as usize >= graph.len()) {
        return Err(Error::InvalidArgument(format!("pixel {bad} not in graph")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = sample_set(a, samples, &mut rng);
    let b = sample_set(b, samples, &mut rng);
    let to_b = geodesic_distances_from(graph, &b);
    let to_a = geodesic_distances_from(graph, &a);
    let ab = a.iter().map(|&v| to_b[v as usize]).fold(0.0, f64::max);
    let ba = b.iter().map(|&v| to_a[v as usize]).fold(0.0, f64::max);
    let h = ab.max(ba);
    if !h.is_finite() {
        return Err(Error::InvalidArgument("sets lie in different graph components".into()));
    }
    Ok(h)
}
