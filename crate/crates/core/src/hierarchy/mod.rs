//! Bottom-up superpixel hierarchy.
//!
//! Each level is a partition of the pixel grid. A level is coarsened by a
//! Borůvka-style round: every superpixel proposes a merge with the spatial
//! neighbor whose visit distribution overlaps most with its own (the
//! Bhattacharyya coefficient of the two rows of the transition matrix), and
//! all proposals are resolved at once with a union-find. A superpixel whose
//! neighbors all have zero overlap proposes nothing and survives unchanged.

mod file;
mod geodesic;
mod rag;

pub use file::{HierarchyFile, HierarchyHeader};
pub use geodesic::{geodesic_distances_from, geodesic_hausdorff};
pub use rag::RegionAdjacency;

use rayon::prelude::*;

use crate::adjacency::ImageAdjacency;
use crate::error::{Error, Result};
use crate::union_find::UnionFind;
use crate::walks::{merge_transition_matrix, TransitionMatrix};

/// Overlap `Σ_t sqrt(T(r,t) T(s,t))` of two rows, clamped to at most 1.
pub fn bhattacharyya(t: &TransitionMatrix, r: usize, s: usize) -> f64 {
    let (ca, va) = t.row(r);
    let (cb, vb) = t.row(s);
    sparse_overlap(ca, va, cb, vb).min(1.0)
}

#[inline]
fn sparse_overlap(ca: &[u32], va: &[f64], cb: &[u32], vb: &[f64]) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut sum = 0.0;
    while i < ca.len() && j < cb.len() {
        match ca[i].cmp(&cb[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                sum += (va[i] * vb[j]).sqrt();
                i += 1;
                j += 1;
            }
        }
    }
    sum
}

/// One partition of the image.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperpixelLevel {
    pub level: usize,
    /// Superpixel id of every pixel.
    pub labels: Vec<u32>,
    /// Pixel count of every superpixel.
    pub sizes: Vec<u32>,
    /// Id of each superpixel on the next level; `None` on the top level.
    pub parent: Option<Vec<u32>>,
    pub rag: RegionAdjacency,
}

impl SuperpixelLevel {
    /// Level 0: every pixel is its own superpixel.
    pub fn singletons(adjacency: &ImageAdjacency) -> Self {
        let n = adjacency.pixel_count();
        Self {
            level: 0,
            labels: (0..n as u32).collect(),
            sizes: vec![1; n],
            parent: None,
            rag: RegionAdjacency::from_image(adjacency),
        }
    }

    pub fn superpixel_count(&self) -> usize {
        self.sizes.len()
    }

    fn coarsen(&self, merge_map: &[u32], new_size: usize) -> Self {
        let mut sizes = vec![0u32; new_size];
        for (old, &new) in merge_map.iter().enumerate() {
            sizes[new as usize] += self.sizes[old];
        }
        Self {
            level: self.level + 1,
            labels: self.labels.iter().map(|&l| merge_map[l as usize]).collect(),
            sizes,
            parent: None,
            rag: self.rag.coarsen(merge_map, new_size),
        }
    }
}

/// Result of one merge round.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelMerge {
    /// Old id to new id, contiguous, numbered by smallest member.
    pub merge_map: Vec<u32>,
    pub new_size: usize,
    /// Chosen neighbor and its coefficient for superpixels that proposed a merge.
    pub intents: Vec<Option<(u32, f64)>>,
}

impl LevelMerge {
    pub fn merged_count(&self) -> usize {
        self.merge_map.len() - self.new_size
    }
}

/// One Borůvka round. Superpixels propose a merge with their highest-overlap
/// spatial neighbor (lowest id on ties) when that overlap exceeds
/// `threshold`; chained and mutual proposals collapse into one superpixel.
pub fn boruvka_merge_level(rag: &RegionAdjacency, t: &TransitionMatrix, threshold: f64) -> Result<LevelMerge> {
    let m = rag.len();
    if t.size() != m {
        return Err(Error::DimensionMismatch(format!(
            "{m} superpixels but transition matrix of size {}",
            t.size()
        )));
    }
    let intents: Vec<Option<(u32, f64)>> = (0..m)
        .into_par_iter()
        .map(|r| {
            let mut best: Option<(u32, f64)> = None;
            for &s in rag.neighbors(r) {
                let bc = bhattacharyya(t, r, s as usize);
                if best.is_none_or(|(_, b)| bc > b) {
                    best = Some((s, bc));
                }
            }
            best.filter(|&(_, bc)| bc > threshold)
        })
        .collect();
    let mut uf = UnionFind::new(m);
    for (r, intent) in intents.iter().enumerate() {
        if let Some((s, _)) = intent {
            uf.union(r, *s as usize);
        }
    }
    let (merge_map, new_size) = uf.component_labels();
    Ok(LevelMerge {
        merge_map,
        new_size,
        intents,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HierarchyParams {
    /// Maximum number of coarsening rounds above level 0.
    pub max_levels: usize,
    /// Minimum overlap a best neighbor needs for a merge; 0 disables the
    /// threshold beyond the zero-overlap rule.
    pub merge_threshold: f64,
}

impl Default for HierarchyParams {
    fn default() -> Self {
        Self {
            max_levels: 32,
            merge_threshold: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    MaxLevels,
    SingleSuperpixel,
    /// A round produced no merges; further rounds would repeat it.
    Stalled,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::MaxLevels => "max-levels",
            StopReason::SingleSuperpixel => "single-superpixel",
            StopReason::Stalled => "stalled",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "max-levels" => Some(StopReason::MaxLevels),
            "single-superpixel" => Some(StopReason::SingleSuperpixel),
            "stalled" => Some(StopReason::Stalled),
            _ => None,
        }
    }
}

/// All levels, from single pixels upwards, with one transition matrix per
/// level.
#[derive(Clone, Debug)]
pub struct Hierarchy {
    pub levels: Vec<SuperpixelLevel>,
    pub transitions: Vec<TransitionMatrix>,
    pub stop: StopReason,
    pub params: HierarchyParams,
}

impl Hierarchy {
    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn level_sizes(&self) -> Vec<usize> {
        self.levels.iter().map(SuperpixelLevel::superpixel_count).collect()
    }

    /// Ids on level `level - 1` whose parent is in `selected`, ascending.
    pub fn children(&self, level: usize, selected: &[u32]) -> Result<Vec<u32>> {
        if level == 0 || level >= self.levels.len() {
            return Err(Error::InvalidArgument(format!("level {level} has no children")));
        }
        let m = self.levels[level].superpixel_count();
        let mut chosen = vec![false; m];
        for &id in selected {
            if id as usize >= m {
                return Err(Error::InvalidArgument(format!("superpixel {id} not on level {level}")));
            }
            chosen[id as usize] = true;
        }
        let parent = self.levels[level - 1]
            .parent
            .as_ref()
            .expect("lower levels have parents");
        Ok((0..parent.len() as u32)
            .filter(|&c| chosen[parent[c as usize] as usize])
            .collect())
    }
}

/// Repeats merge rounds until `max_levels` rounds ran, one superpixel is
/// left, or a round merges nothing.
pub fn build_hierarchy(adjacency: &ImageAdjacency, t0: TransitionMatrix, params: HierarchyParams) -> Result<Hierarchy> {
    if t0.size() != adjacency.pixel_count() {
        return Err(Error::DimensionMismatch(format!(
            "{} pixels but transition matrix of size {}",
            adjacency.pixel_count(),
            t0.size()
        )));
    }
    let mut levels = vec![SuperpixelLevel::singletons(adjacency)];
    let mut transitions = vec![t0];
    let stop = loop {
        let current = levels.last().unwrap();
        if current.superpixel_count() == 1 {
            break StopReason::SingleSuperpixel;
        }
        if levels.len() > params.max_levels {
            break StopReason::MaxLevels;
        }
        let round = boruvka_merge_level(&current.rag, transitions.last().unwrap(), params.merge_threshold)?;
        if round.merged_count() == 0 {
            break StopReason::Stalled;
        }
        let next = current.coarsen(&round.merge_map, round.new_size);
        let next_t = merge_transition_matrix(transitions.last().unwrap(), &round.merge_map)?;
        log::info!(
            "level {}: {} -> {} superpixels",
            next.level,
            round.merge_map.len(),
            round.new_size
        );
        levels.last_mut().unwrap().parent = Some(round.merge_map);
        levels.push(next);
        transitions.push(next_t);
    };
    Ok(Hierarchy {
        levels,
        transitions,
        stop,
        params,
    })
}

/// Rebuilds the transition matrices of all levels from the pixel-level
/// matrix and the stored parent maps.
pub fn replay_transitions(levels: &[SuperpixelLevel], t0: TransitionMatrix) -> Result<Vec<TransitionMatrix>> {
    let mut out = vec![t0];
    for level in &levels[..levels.len().saturating_sub(1)] {
        let parent = level
            .parent
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("missing parent map".into()))?;
        let next = merge_transition_matrix(out.last().unwrap(), parent)?;
        out.push(next);
    }
    Ok(out)
}
