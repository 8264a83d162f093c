//! Refinement of a superpixel selection into its children one level down.

use crate::embedding::LevelSimilarities;
use crate::error::{Error, Result};
use crate::hierarchy::SuperpixelLevel;
use crate::sparse::CsrMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct RefinementRequest {
    /// Level of the selection; the result lives on `level - 1`.
    pub level: usize,
    pub selected: Vec<u32>,
    /// Expansion threshold; `None` disables expansion.
    pub gamma: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefinementResult {
    pub level: usize,
    /// Ascending ids on `level`.
    pub subset: Vec<u32>,
    /// Number of subset members that are children of the selection.
    pub children: usize,
    /// Similarities restricted to the subset, rows normalized.
    pub matrix: CsrMatrix,
    /// Rows of `matrix` left empty by the slice.
    pub isolated: Vec<bool>,
}

impl RefinementRequest {
    pub fn validate(&self, levels: &[SuperpixelLevel]) -> Result<()> {
        if self.level == 0 || self.level >= levels.len() {
            return Err(Error::InvalidArgument(format!(
                "refinement level must be in 1..{}, got {}",
                levels.len(),
                self.level
            )));
        }
        if self.selected.is_empty() {
            return Err(Error::InvalidArgument("empty selection".into()));
        }
        let m = levels[self.level].superpixel_count();
        if let Some(&bad) = self.selected.iter().find(|&&id| id as usize >= m) {
            return Err(Error::InvalidArgument(format!(
                "superpixel {bad} does not exist on level {} ({m} superpixels)",
                self.level
            )));
        }
        if let Some(g) = self.gamma {
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::InvalidArgument(format!("gamma must be in [0, 1], got {g}")));
            }
        }
        Ok(())
    }
}

/// Children of the selection plus, with expansion, every superpixel `j` with
/// `p_ij > gamma` for some child `i`. The similarity matrix of the lower level
/// is sliced to the subset and its rows renormalized.
pub fn refine_selection(
    levels: &[SuperpixelLevel],
    similarities: &LevelSimilarities,
    req: &RefinementRequest,
) -> Result<RefinementResult> {
    req.validate(levels)?;
    let lower = &levels[req.level - 1];
    let m = lower.superpixel_count();
    if similarities.size() != m {
        return Err(Error::DimensionMismatch(format!(
            "similarities of size {} for level {} with {m} superpixels",
            similarities.size(),
            req.level - 1
        )));
    }
    let parent = lower.parent.as_ref().expect("levels below the top have parents");
    let mut selected = vec![false; levels[req.level].superpixel_count()];
    for &id in &req.selected {
        selected[id as usize] = true;
    }
    let mut member = vec![false; m];
    let children: Vec<u32> = (0..m as u32)
        .filter(|&c| selected[parent[c as usize] as usize])
        .collect();
    for &c in &children {
        member[c as usize] = true;
    }
    if let Some(gamma) = req.gamma {
        for &c in &children {
            let (cols, vals) = similarities.matrix.row(c as usize);
            for (&j, &p) in cols.iter().zip(vals) {
                if p > gamma {
                    member[j as usize] = true;
                }
            }
        }
    }
    let subset: Vec<u32> = (0..m as u32).filter(|&i| member[i as usize]).collect();
    let mut matrix = similarities.matrix.submatrix(&subset);
    matrix.normalize_rows();
    let isolated = (0..subset.len()).map(|r| matrix.row_nnz(r) == 0).collect();
    Ok(RefinementResult {
        level: req.level - 1,
        subset,
        children: children.len(),
        matrix,
        isolated,
    })
}
