//! Independent reference implementations used as test oracles. Everything
//! here is deliberately naive: dense matrices, exhaustive enumeration, full
//! sorts.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sphx_core::adjacency::{Connectivity, ImageAdjacency};
use sphx_core::sparse::CsrMatrix;
use sphx_core::walks::TransitionMatrix;
use sphx_core::HighDimImage;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn sq_dist64(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum()
}

/// Sort, take the nearest-rank order statistic, clip, divide by channel max.
pub fn clip_normalize_oracle(values: &[f32], channels: usize, fraction: f64) -> Vec<f32> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((fraction * sorted.len() as f64).ceil() as usize).max(1);
    let threshold = sorted[rank - 1];
    let clipped: Vec<f32> = values.iter().map(|&v| v.min(threshold)).collect();
    let mut max = vec![f32::NEG_INFINITY; channels];
    for (i, &v) in clipped.iter().enumerate() {
        max[i % channels] = max[i % channels].max(v);
    }
    clipped
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if max[i % channels] == 0.0 {
                v
            } else {
                v / max[i % channels]
            }
        })
        .collect()
}

/// Neighbor set of every point by full sort on `(distance, id)`.
pub fn brute_knn(data: &[f32], dim: usize, k: usize) -> Vec<Vec<u32>> {
    let n = data.len() / dim;
    (0..n)
        .map(|i| {
            let mut all: Vec<(f64, u32)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    (
                        sq_dist64(&data[i * dim..(i + 1) * dim], &data[j * dim..(j + 1) * dim]),
                        j as u32,
                    )
                })
                .collect();
            all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let mut ids: Vec<u32> = all[..k].iter().map(|x| x.1).collect();
            ids.sort_unstable();
            ids
        })
        .collect()
}

/// Connected components by repeated flood fill; labels numbered in order of
/// their smallest member.
pub fn flood_components(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        let mut stack = vec![s];
        label[s] = next;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if label[w] == usize::MAX {
                    label[w] = next;
                    stack.push(w);
                }
            }
        }
        next += 1;
    }
    label
}

/// Bridge edges by exhaustive search over all spanning trees of the
/// component-mean graph, then brute-force closest cross pairs.
pub fn bridging_oracle(data: &[f32], dim: usize, components: &[usize]) -> Vec<(u32, u32)> {
    let n = components.len();
    let c = components.iter().max().map_or(0, |m| m + 1);
    if c <= 1 {
        return Vec::new();
    }
    let mut means = vec![vec![0.0f64; dim]; c];
    let mut counts = vec![0usize; c];
    for i in 0..n {
        counts[components[i]] += 1;
        for d in 0..dim {
            means[components[i]][d] += data[i * dim + d] as f64;
        }
    }
    let means32: Vec<Vec<f32>> = means
        .iter()
        .zip(&counts)
        .map(|(m, &k)| m.iter().map(|&v| (v / k as f64) as f32).collect())
        .collect();
    let mut pairs = Vec::new();
    for a in 0..c {
        for b in a + 1..c {
            pairs.push((a, b, sq_dist64(&means32[a], &means32[b])));
        }
    }
    assert!(pairs.len() <= 24, "too many components for exhaustive search");
    let mut best: Option<(f64, Vec<(usize, usize)>)> = None;
    let subsets = 1u64 << pairs.len();
    for mask in 0..subsets {
        if mask.count_ones() as usize != c - 1 {
            continue;
        }
        let chosen: Vec<(usize, usize)> = (0..pairs.len())
            .filter(|&i| mask >> i & 1 == 1)
            .map(|i| (pairs[i].0, pairs[i].1))
            .collect();
        let labels = flood_components(c, &chosen);
        if labels.iter().any(|&l| l != 0) {
            continue;
        }
        let w: f64 = (0..pairs.len())
            .filter(|&i| mask >> i & 1 == 1)
            .map(|i| pairs[i].2)
            .sum();
        if best.as_ref().is_none_or(|(bw, _)| w < *bw) {
            best = Some((w, chosen));
        }
    }
    let tree = best.unwrap().1;
    let mut bridges: Vec<(u32, u32)> = tree
        .iter()
        .map(|&(a, b)| {
            let mut pair = (f64::INFINITY, 0u32, 0u32);
            for i in 0..n {
                for j in 0..n {
                    if components[i] == a && components[j] == b {
                        let d = sq_dist64(&data[i * dim..(i + 1) * dim], &data[j * dim..(j + 1) * dim]);
                        let (lo, hi) = (i.min(j) as u32, i.max(j) as u32);
                        if d < pair.0 || (d == pair.0 && (lo, hi) < (pair.1, pair.2)) {
                            pair = (d, lo, hi);
                        }
                    }
                }
            }
            (pair.1, pair.2)
        })
        .collect();
    bridges.sort_unstable();
    bridges
}

pub fn dense(t: &TransitionMatrix) -> Vec<Vec<f64>> {
    t.matrix().to_dense()
}

pub fn dense_bc(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x * y).sqrt()).sum()
}

/// Sum merged rows, then merged columns, then normalize rows.
pub fn dense_merge(t: &[Vec<f64>], map: &[u32]) -> Vec<Vec<f64>> {
    let m2 = *map.iter().max().unwrap() as usize + 1;
    let cols = t[0].len();
    let mut rows = vec![vec![0.0; cols]; m2];
    for (r, row) in t.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            rows[map[r] as usize][c] += v;
        }
    }
    let mut out = vec![vec![0.0; m2]; m2];
    for (r, row) in rows.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            out[r][map[c] as usize] += v;
        }
    }
    for row in &mut out {
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            row.iter_mut().for_each(|v| *v /= s);
        }
    }
    out
}

pub fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let m = b[0].len();
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for k in 0..b.len() {
            for j in 0..m {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

/// Random sparse row-stochastic matrix with roughly `density` fill.
pub fn random_stochastic(m: usize, density: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..m)
        .map(|i| {
            let mut row: Vec<f64> = (0..m)
                .map(|_| {
                    if r.random::<f64>() < density {
                        r.random::<f64>()
                    } else {
                        0.0
                    }
                })
                .collect();
            if row.iter().all(|&v| v == 0.0) {
                row[i] = 1.0;
            }
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
            row
        })
        .collect()
}

pub fn transition(dense: &[Vec<f64>]) -> TransitionMatrix {
    TransitionMatrix::from_matrix(CsrMatrix::from_dense(dense)).unwrap()
}

/// All-pairs shortest paths by Floyd–Warshall.
pub fn floyd_warshall(n: usize, edges: &[(usize, usize, f64)]) -> Vec<Vec<f64>> {
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for &(a, b, w) in edges {
        d[a][b] = d[a][b].min(w);
        d[b][a] = d[b][a].min(w);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
    ev
}

/// UE by looping over every (ground-truth segment, superpixel) pair.
pub fn ue_oracle(labels: &[u32], gt: &[u32]) -> f64 {
    let n = labels.len();
    let mut sps: Vec<u32> = labels.to_vec();
    sps.sort_unstable();
    sps.dedup();
    let mut segs: Vec<u32> = gt.to_vec();
    segs.sort_unstable();
    segs.dedup();
    let mut total = 0usize;
    for &g in &segs {
        for &c in &sps {
            let inside = (0..n).filter(|&p| labels[p] == c && gt[p] == g).count();
            if inside == 0 {
                continue;
            }
            let outside = (0..n).filter(|&p| labels[p] == c && gt[p] != g).count();
            total += inside.min(outside);
        }
    }
    total as f64 / n as f64
}

/// Image of two vertical halves with disjoint attribute clusters.
pub fn two_halves(width: usize, height: usize, channels: usize, seed: u64) -> HighDimImage {
    let mut r = rng(seed);
    let mut values = Vec::new();
    for _y in 0..height {
        for x in 0..width {
            let base = if x < width / 2 { 0.0 } else { 10.0 };
            for _ in 0..channels {
                values.push(base + 0.01 * r.random::<f32>());
            }
        }
    }
    HighDimImage::new(width, height, channels, values).unwrap()
}

pub fn random_image(width: usize, height: usize, channels: usize, seed: u64) -> HighDimImage {
    let mut r = rng(seed);
    let values = (0..width * height * channels).map(|_| r.random::<f32>()).collect();
    HighDimImage::new(width, height, channels, values).unwrap()
}

/// Smooth random image: a few random blobs blended across the grid, so
/// neighboring pixels tend to be similar.
pub fn smooth_image(width: usize, height: usize, channels: usize, seed: u64) -> HighDimImage {
    let mut r = rng(seed);
    let centers: Vec<(f32, f32, Vec<f32>)> = (0..5)
        .map(|_| {
            (
                r.random::<f32>() * width as f32,
                r.random::<f32>() * height as f32,
                (0..channels).map(|_| r.random::<f32>()).collect(),
            )
        })
        .collect();
    let mut values = Vec::new();
    for y in 0..height {
        for x in 0..width {
            let nearest = centers
                .iter()
                .min_by(|a, b| {
                    let da = (a.0 - x as f32).powi(2) + (a.1 - y as f32).powi(2);
                    let db = (b.0 - x as f32).powi(2) + (b.1 - y as f32).powi(2);
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            for c in 0..channels {
                values.push(nearest.2[c] + 0.05 * r.random::<f32>());
            }
        }
    }
    HighDimImage::new(width, height, channels, values).unwrap()
}

/// Number of connected pieces of every superpixel under the image grid.
pub fn pieces_per_superpixel(labels: &[u32], width: usize, height: usize, conn: Connectivity) -> Vec<usize> {
    let adj = ImageAdjacency::build(width, height, conn).unwrap();
    let edges: Vec<(usize, usize)> = adj
        .edges()
        .filter(|&(a, b)| labels[a as usize] == labels[b as usize])
        .map(|(a, b)| (a as usize, b as usize))
        .collect();
    let comp = flood_components(labels.len(), &edges);
    let m = *labels.iter().max().unwrap() as usize + 1;
    let mut seen: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (p, &l) in labels.iter().enumerate() {
        if !seen[l as usize].contains(&comp[p]) {
            seen[l as usize].push(comp[p]);
        }
    }
    seen.iter().map(Vec::len).collect()
}
