use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image::HighDimImage;

/// Standard deviation of initial coordinates.
pub const INIT_SCALE: f64 = 1e-4;

/// Starting layout of an embedding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitMode {
    /// First two principal components of the superpixel mean attributes.
    Pca,
    Random,
    /// Position of the superpixel's parent in the next level's embedding.
    Parent,
}

impl InitMode {
    pub fn as_str(self) -> &'static str {
        match self {
            InitMode::Pca => "pca",
            InitMode::Random => "random",
            InitMode::Parent => "parent",
        }
    }
}

impl std::str::FromStr for InitMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "pca" => Ok(InitMode::Pca),
            "random" => Ok(InitMode::Random),
            "parent" => Ok(InitMode::Parent),
            other => Err(format!("unknown init mode '{other}' (expected pca, random or parent)")),
        }
    }
}

/// Mean attribute vector of each superpixel, row-major `m x channels`.
pub fn superpixel_means(img: &HighDimImage, labels: &[u32], m: usize) -> Result<Vec<f64>> {
    if labels.len() != img.pixel_count() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} pixels",
            labels.len(),
            img.pixel_count()
        )));
    }
    let c = img.channels();
    let mut sums = vec![0.0f64; m * c];
    let mut counts = vec![0usize; m];
    for (p, &l) in labels.iter().enumerate() {
        let l = l as usize;
        if l >= m {
            return Err(Error::InvalidArgument(format!(
                "label {l} out of range for {m} superpixels"
            )));
        }
        counts[l] += 1;
        for (s, &v) in sums[l * c..(l + 1) * c].iter_mut().zip(img.pixel(p)) {
            *s += v as f64;
        }
    }
    for (l, &n) in counts.iter().enumerate() {
        if n > 0 {
            sums[l * c..(l + 1) * c].iter_mut().for_each(|s| *s /= n as f64);
        }
    }
    Ok(sums)
}

/// Principal axes of a point set.
#[derive(Clone, Debug)]
pub struct Pca {
    /// Unscaled scores on the first two axes, one pair per point.
    pub scores: Vec<[f64; 2]>,
    /// Variance along each of the two axes.
    pub explained_variance: [f64; 2],
    /// Total variance over all dimensions.
    pub total_variance: f64,
}

/// Variance below this fraction of the total marks a missing component.
const RANK_TOLERANCE: f64 = 1e-12;

/// PCA of `m` points of dimension `dim` given row-major.
pub fn pca(data: &[f64], m: usize, dim: usize) -> Result<Pca> {
    if m < 2 || dim == 0 || data.len() != m * dim {
        return Err(Error::InvalidArgument("PCA needs at least two points".into()));
    }
    let x = DMatrix::from_row_slice(m, dim, data);
    let mean = x.row_mean();
    let centered = DMatrix::from_fn(m, dim, |i, j| x[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / (m as f64 - 1.0);
    let total_variance = cov.trace();
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut scores = vec![[0.0; 2]; m];
    let mut explained_variance = [0.0; 2];
    for (k, &axis) in order.iter().take(2).enumerate() {
        let mut v = eig.eigenvectors.column(axis).into_owned();
        // fix the sign so the largest loading is positive
        let pivot = v
            .iter()
            .copied()
            .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            v.neg_mut();
        }
        explained_variance[k] = eig.eigenvalues[axis].max(0.0);
        let proj = &centered * v;
        for (i, s) in scores.iter_mut().enumerate() {
            s[k] = proj[i];
        }
    }
    Ok(Pca {
        scores,
        explained_variance,
        total_variance,
    })
}

fn noise(m: usize, seed: u64) -> impl Iterator<Item = f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, INIT_SCALE).expect("valid normal");
    (0..m).map(move |_| normal.sample(&mut rng))
}

/// Seeded Gaussian layout with standard deviation [`INIT_SCALE`].
pub fn random_initialize(m: usize, seed: u64) -> Vec<[f64; 2]> {
    let values: Vec<f64> = noise(2 * m, seed).collect();
    values.chunks_exact(2).map(|c| [c[0], c[1]]).collect()
}

/// PCA layout rescaled so the first coordinate has standard deviation
/// [`INIT_SCALE`]. Components without variance are replaced by seeded noise.
pub fn pca_initialize(data: &[f64], m: usize, dim: usize, seed: u64) -> Result<Vec<[f64; 2]>> {
    let p = pca(data, m, dim)?;
    let floor = RANK_TOLERANCE * p.total_variance.max(f64::MIN_POSITIVE);
    let mut coords = p.scores;
    let mut fill = noise(2 * m, seed);
    let mut scale = None;
    for k in 0..2 {
        if p.explained_variance[k] > floor && p.total_variance > 0.0 {
            if scale.is_none() {
                scale = Some(INIT_SCALE / p.explained_variance[k].sqrt());
            }
            let s = scale.unwrap();
            coords.iter_mut().for_each(|c| c[k] *= s);
        } else {
            coords.iter_mut().for_each(|c| c[k] = fill.next().unwrap());
        }
    }
    Ok(coords)
}

/// Each point starts at its parent's position plus seeded noise.
pub fn parent_initialize(parent: &[u32], parent_coords: &[[f64; 2]], seed: u64) -> Result<Vec<[f64; 2]>> {
    if let Some(&bad) = parent.iter().find(|&&p| p as usize >= parent_coords.len()) {
        return Err(Error::InvalidArgument(format!("parent {bad} has no coordinates")));
    }
    let jitter = random_initialize(parent.len(), seed);
    Ok(parent
        .iter()
        .zip(jitter)
        .map(|(&p, j)| {
            let base = parent_coords[p as usize];
            [base[0] + 0.01 * j[0], base[1] + 0.01 * j[1]]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_points_get_noise() {
        let data = vec![1.0; 10 * 3];
        let c = pca_initialize(&data, 10, 3, 1).unwrap();
        assert!(c.iter().all(|p| p[0].abs() < 1e-3 && p[1].abs() < 1e-3));
        assert!(c.iter().any(|p| p[0] != 0.0));
        assert_eq!(c, pca_initialize(&data, 10, 3, 1).unwrap());
    }

    #[test]
    fn first_axis_has_target_spread() {
        let data: Vec<f64> = (0..20)
            .flat_map(|i| [i as f64, 0.5 * i as f64 + (i % 3) as f64])
            .collect();
        let c = pca_initialize(&data, 20, 2, 0).unwrap();
        let mean = c.iter().map(|p| p[0]).sum::<f64>() / 20.0;
        let var = c.iter().map(|p| (p[0] - mean).powi(2)).sum::<f64>() / 19.0;
        assert!((var.sqrt() - INIT_SCALE).abs() < 1e-12);
    }
}
