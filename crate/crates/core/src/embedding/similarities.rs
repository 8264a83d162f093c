use rayon::prelude::*;

use crate::calibrate::{calibrate_row, Kernel, RowStatus};
use crate::error::{Error, Result};
use crate::neighbor_graph::NeighborGraph;
use crate::sparse::CsrMatrix;
use crate::walks::TransitionMatrix;

/// Symmetric similarity matrix of one level.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelSimilarities {
    pub level: usize,
    /// Symmetrized probabilities; not globally normalized.
    pub matrix: CsrMatrix,
    pub kernel: Kernel,
    pub perplexity_used: f64,
    /// Rows without any finite-distance neighbor.
    pub isolated: Vec<bool>,
}

impl LevelSimilarities {
    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn isolated_count(&self) -> usize {
        self.isolated.iter().filter(|&&b| b).count()
    }
}

/// Perplexity used on a level with `m` superpixels: `max(10, min(m/100, 100))`.
pub fn level_perplexity(m: usize) -> f64 {
    (m as f64 / 100.0).clamp(10.0, 100.0)
}

/// Bhattacharyya distances `-ln(Σ_t sqrt(T(r,t) T(s,t)))` for all pairs with
/// positive overlap, diagonal included, via the sparse product `√T √Tᵀ`.
pub fn level_dissimilarities(t: &TransitionMatrix) -> CsrMatrix {
    let root = t.matrix().map_values(f64::sqrt);
    let root_t = root.transpose();
    let m = root.nrows();
    let rows: Vec<Vec<(u32, f64)>> = (0..m)
        .into_par_iter()
        .map_init(
            || (vec![0.0f64; m], vec![false; m], Vec::<u32>::new()),
            |(acc, seen, touched), r| {
                let (cols, vals) = root.row(r);
                for (&c, &a) in cols.iter().zip(vals) {
                    let (others, bvals) = root_t.row(c as usize);
                    for (&s, &b) in others.iter().zip(bvals) {
                        if !seen[s as usize] {
                            seen[s as usize] = true;
                            touched.push(s);
                        }
                        acc[s as usize] += a * b;
                    }
                }
                touched.sort_unstable();
                let row = touched
                    .iter()
                    .filter(|&&s| acc[s as usize] > 0.0)
                    .map(|&s| (s, -acc[s as usize].min(1.0).ln()))
                    .collect();
                for &s in touched.iter() {
                    acc[s as usize] = 0.0;
                    seen[s as usize] = false;
                }
                touched.clear();
                row
            },
        )
        .collect();
    CsrMatrix::from_rows(m, rows)
}

/// Symmetrizes conditional probabilities: `(p + pᵀ)/2` for t-SNE, the fuzzy
/// union `p + pᵀ - p∘pᵀ` for UMAP.
pub fn symmetrize(conditional: &CsrMatrix, kernel: Kernel) -> CsrMatrix {
    let transposed = conditional.transpose();
    match kernel {
        Kernel::Tsne => conditional.zip_union(&transposed, |a, b| (a + b) / 2.0),
        Kernel::Umap => conditional.zip_union(&transposed, |a, b| (a + b) - a * b),
    }
}

/// Calibrates every row of `d` over its off-diagonal finite entries at the
/// level perplexity for `d.nrows()` superpixels, then symmetrizes.
pub fn level_probabilities(d: &CsrMatrix, level: usize, kernel: Kernel) -> Result<LevelSimilarities> {
    let m = d.nrows();
    if d.ncols() != m {
        return Err(Error::DimensionMismatch("dissimilarity matrix must be square".into()));
    }
    let u = level_perplexity(m);
    let rows: Vec<(Vec<(u32, f64)>, bool)> = (0..m)
        .into_par_iter()
        .map(|r| {
            let (cols, vals) = d.row(r);
            let (ids, dist): (Vec<u32>, Vec<f64>) = cols
                .iter()
                .zip(vals)
                .filter(|&(&c, &v)| c as usize != r && v.is_finite())
                .map(|(&c, &v)| (c, v))
                .unzip();
            let cal = calibrate_row(&dist, kernel, u);
            let isolated = cal.status == RowStatus::Isolated;
            (ids.into_iter().zip(cal.probabilities).collect(), isolated)
        })
        .collect();
    let (rows, isolated): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let conditional = CsrMatrix::from_rows(m, rows);
    Ok(LevelSimilarities {
        level,
        matrix: symmetrize(&conditional, kernel),
        kernel,
        perplexity_used: u,
        isolated,
    })
}

/// Level-0 similarities straight from the calibrated neighbor graph.
pub fn graph_similarities(graph: &NeighborGraph) -> Result<LevelSimilarities> {
    let kernel = graph
        .kernel()
        .ok_or_else(|| Error::InvalidArgument("neighbor graph has no probabilities".into()))?;
    let n = graph.len();
    let rows = (0..n)
        .map(|i| {
            let p = graph.probabilities(i).expect("calibrated graph");
            graph.neighbors(i).iter().copied().zip(p.iter().copied()).collect()
        })
        .collect();
    let conditional = CsrMatrix::from_rows(n, rows);
    Ok(LevelSimilarities {
        level: 0,
        matrix: symmetrize(&conditional, kernel),
        kernel,
        perplexity_used: graph.perplexity().value(),
        isolated: (0..n).map(|i| graph.neighbors(i).is_empty()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perplexity_rule() {
        assert_eq!(level_perplexity(500), 10.0);
        assert_eq!(level_perplexity(50_000), 100.0);
        assert_eq!(level_perplexity(2_500), 25.0);
    }

    #[test]
    fn dissimilarity_of_half_overlap() {
        let t = TransitionMatrix::from_matrix(CsrMatrix::from_dense(&[vec![1.0, 0.0], vec![0.5, 0.5]])).unwrap();
        let d = level_dissimilarities(&t);
        assert!((d.get(0, 1) - (-(0.5f64.sqrt()).ln())).abs() < 1e-15);
        assert_eq!(d.get(0, 1), d.get(1, 0));
        assert!(d.get(0, 0).abs() < 1e-9);
    }

    #[test]
    fn disjoint_rows_have_no_entry() {
        let t = TransitionMatrix::from_matrix(CsrMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, 1.0]])).unwrap();
        let d = level_dissimilarities(&t);
        assert_eq!(d.row_nnz(0), 1);
        let p = level_probabilities(&d, 1, Kernel::Tsne).unwrap();
        assert_eq!(p.isolated, vec![true, true]);
        assert_eq!(p.matrix.nnz(), 0);
    }

    #[test]
    fn umap_symmetrization_is_fuzzy_union() {
        let c = CsrMatrix::from_dense(&[vec![0.0, 0.5], vec![0.2, 0.0]]);
        let s = symmetrize(&c, Kernel::Umap);
        assert!((s.get(0, 1) - 0.6).abs() < 1e-15);
        assert_eq!(s.get(0, 1), s.get(1, 0));
    }
}
