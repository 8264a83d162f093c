//! Spatial pixel adjacency (the image graph).

use crate::error::{Error, Result};

/// 4- or 8-neighborhood.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    pub fn from_number(n: u32) -> Result<Self> {
        match n {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            other => Err(Error::InvalidArgument(format!(
                "connectivity must be 4 or 8, got {other}"
            ))),
        }
    }

    pub fn as_number(self) -> u32 {
        match self {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }

    fn offsets(self) -> &'static [(i64, i64)] {
        const FOUR: [(i64, i64); 4] = [(0, -1), (-1, 0), (1, 0), (0, 1)];
        const EIGHT: [(i64, i64); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];
        match self {
            Connectivity::Four => &FOUR,
            Connectivity::Eight => &EIGHT,
        }
    }
}

/// Compressed adjacency lists of the pixel grid. Neighbor ids of each pixel
/// are sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageAdjacency {
    width: usize,
    height: usize,
    connectivity: Connectivity,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
}

impl ImageAdjacency {
    pub fn build(width: usize, height: usize, connectivity: Connectivity) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("width and height must be >= 1".into()));
        }
        let n = width * height;
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::with_capacity(n * connectivity.as_number() as usize);
        offsets.push(0);
        for y in 0..height as i64 {
            for x in 0..width as i64 {
                // offsets are listed in row-major order, so ids come out sorted
                for &(dx, dy) in connectivity.offsets() {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx >= 0 && ny >= 0 && nx < width as i64 && ny < height as i64 {
                        neighbors.push((ny as usize * width + nx as usize) as u32);
                    }
                }
                offsets.push(neighbors.len());
            }
        }
        Ok(Self {
            width,
            height,
            connectivity,
            offsets,
            neighbors,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn connectivity(&self) -> Connectivity {
        self.connectivity
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn neighbors(&self, pixel: usize) -> &[u32] {
        &self.neighbors[self.offsets[pixel]..self.offsets[pixel + 1]]
    }

    /// Number of directed edges (each undirected edge counted twice).
    pub fn directed_edge_count(&self) -> usize {
        self.neighbors.len()
    }

    /// Undirected edges `(a, b)` with `a < b`.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.pixel_count()).flat_map(move |p| {
            self.neighbors(p)
                .iter()
                .filter(move |&&q| (q as usize) > p)
                .map(move |&q| (p as u32, q))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pixel_has_no_neighbors() {
        let adj = ImageAdjacency::build(1, 1, Connectivity::Eight).unwrap();
        assert!(adj.neighbors(0).is_empty());
    }

    #[test]
    fn three_by_three_four_connected() {
        let adj = ImageAdjacency::build(3, 3, Connectivity::Four).unwrap();
        assert_eq!(adj.neighbors(4), &[1, 3, 5, 7]);
        for corner in [0, 2, 6, 8] {
            assert_eq!(adj.neighbors(corner).len(), 2);
        }
    }

    #[test]
    fn three_by_three_eight_connected() {
        let adj = ImageAdjacency::build(3, 3, Connectivity::Eight).unwrap();
        assert_eq!(adj.neighbors(4).len(), 8);
        for corner in [0, 2, 6, 8] {
            assert_eq!(adj.neighbors(corner).len(), 3);
        }
    }

    #[test]
    fn rejects_bad_connectivity() {
        assert!(Connectivity::from_number(6).is_err());
        assert_eq!(Connectivity::from_number(8).unwrap(), Connectivity::Eight);
    }
}
