use crate::adjacency::ImageAdjacency;

/// Region adjacency graph: superpixels touching in image space. Neighbor
/// lists are sorted and contain no self-loops.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionAdjacency {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
}

impl RegionAdjacency {
    pub fn from_image(adjacency: &ImageAdjacency) -> Self {
        let n = adjacency.pixel_count();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::with_capacity(adjacency.directed_edge_count());
        offsets.push(0);
        for p in 0..n {
            neighbors.extend_from_slice(adjacency.neighbors(p));
            offsets.push(neighbors.len());
        }
        Self { offsets, neighbors }
    }

    /// Adjacency between superpixels of a pixel label map.
    pub fn from_labels(adjacency: &ImageAdjacency, labels: &[u32], count: usize) -> Self {
        Self::from_image(adjacency).coarsen(labels, count)
    }

    /// Relabels vertices through `merge_map`, dropping edges that become
    /// internal.
    pub fn coarsen(&self, merge_map: &[u32], new_size: usize) -> Self {
        let mut rows: Vec<Vec<u32>> = vec![Vec::new(); new_size];
        for r in 0..self.len() {
            let a = merge_map[r];
            for &s in self.neighbors(r) {
                let b = merge_map[s as usize];
                if a != b {
                    rows[a as usize].push(b);
                }
            }
        }
        let mut offsets = Vec::with_capacity(new_size + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for mut row in rows {
            row.sort_unstable();
            row.dedup();
            neighbors.extend(row);
            offsets.push(neighbors.len());
        }
        Self { offsets, neighbors }
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn neighbors(&self, r: usize) -> &[u32] {
        &self.neighbors[self.offsets[r]..self.offsets[r + 1]]
    }

    /// Undirected edge count.
    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.len()).all(|r| {
            self.neighbors(r)
                .iter()
                .all(|&s| s as usize != r && self.neighbors(s as usize).binary_search(&(r as u32)).is_ok())
        })
    }
}
