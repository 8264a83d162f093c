//! Per-row bandwidth calibration shared by the pixel-level neighbor graph and
//! the superpixel levels.
//!
//! Both kernels search `sigma` by bisection in log space over
//! `[SIGMA_MIN, SIGMA_MAX]`.

/// Lower end of the bandwidth search interval.
pub const SIGMA_MIN: f64 = 1e-12;
/// Upper end of the bandwidth search interval.
pub const SIGMA_MAX: f64 = 1e12;
/// Bisection steps before a row is declared non-converged.
pub const MAX_ITERATIONS: usize = 200;
/// Accepted deviation from the entropy target, in bits.
pub const ENTROPY_TOLERANCE: f64 = 1e-5;
/// Accepted deviation of the UMAP row sum from `log2(k)`.
pub const UMAP_SUM_TOLERANCE: f64 = 1e-5;

/// Transition kernel used to turn distances into probabilities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Kernel {
    /// Gaussian kernel normalized per row, calibrated to a perplexity.
    Tsne,
    /// Shifted exponential kernel, calibrated so the row sums to `log2(k)`.
    Umap,
}

impl Kernel {
    pub fn as_str(self) -> &'static str {
        match self {
            Kernel::Tsne => "tsne",
            Kernel::Umap => "umap",
        }
    }
}

impl std::str::FromStr for Kernel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tsne" => Ok(Kernel::Tsne),
            "umap" => Ok(Kernel::Umap),
            other => Err(format!("unknown kernel '{other}' (expected tsne or umap)")),
        }
    }
}

impl std::fmt::Display for Kernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowStatus {
    Converged,
    /// All distances equal; probabilities are uniform.
    Degenerate,
    /// Target outside the reachable range; the limiting distribution at the
    /// nearer end of the search interval was used.
    Unreachable,
    /// No neighbors at all.
    Isolated,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RowCalibration {
    pub probabilities: Vec<f64>,
    pub sigma: f64,
    /// Row minimum distance (UMAP kernel only, zero otherwise).
    pub rho: f64,
    pub status: RowStatus,
}

impl RowCalibration {
    fn isolated() -> Self {
        Self {
            probabilities: Vec::new(),
            sigma: 0.0,
            rho: 0.0,
            status: RowStatus::Isolated,
        }
    }
}

/// Shannon entropy in bits of a probability vector.
pub fn entropy_bits(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.log2()).sum::<f64>()
}

fn gaussian_row(shifted: &[f64], sigma: f64) -> Vec<f64> {
    let mut w: Vec<f64> = shifted.iter().map(|&d| (-d / sigma).exp()).collect();
    let z: f64 = w.iter().sum();
    for x in &mut w {
        *x /= z;
    }
    w
}

/// Bisection on `ln sigma` for a quantity that increases with sigma.
fn bisect(target: f64, tol: f64, eval: impl Fn(f64) -> f64) -> (f64, RowStatus) {
    let (mut lo, mut hi) = (SIGMA_MIN.ln(), SIGMA_MAX.ln());
    if eval(SIGMA_MAX) < target - tol {
        return (SIGMA_MAX, RowStatus::Unreachable);
    }
    if eval(SIGMA_MIN) > target + tol {
        return (SIGMA_MIN, RowStatus::Unreachable);
    }
    let mut sigma = (0.5 * (lo + hi)).exp();
    for _ in 0..MAX_ITERATIONS {
        sigma = (0.5 * (lo + hi)).exp();
        let value = eval(sigma);
        if (value - target).abs() <= tol {
            return (sigma, RowStatus::Converged);
        }
        if value > target {
            hi = sigma.ln();
        } else {
            lo = sigma.ln();
        }
    }
    (sigma, RowStatus::Unreachable)
}

/// Gaussian row `p_j ∝ exp(-d_j / sigma)` whose entropy is `log2(perplexity)`.
pub fn calibrate_tsne_row(distances: &[f64], perplexity: f64) -> RowCalibration {
    if distances.is_empty() {
        return RowCalibration::isolated();
    }
    let dmin = distances.iter().copied().fold(f64::INFINITY, f64::min);
    let dmax = distances.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if dmin == dmax {
        let u = 1.0 / distances.len() as f64;
        return RowCalibration {
            probabilities: vec![u; distances.len()],
            sigma: SIGMA_MAX,
            rho: 0.0,
            status: RowStatus::Degenerate,
        };
    }
    // shifting by the row minimum leaves the normalized row unchanged
    let shifted: Vec<f64> = distances.iter().map(|&d| d - dmin).collect();
    let target = perplexity.log2();
    let (sigma, status) = bisect(target, ENTROPY_TOLERANCE, |s| entropy_bits(&gaussian_row(&shifted, s)));
    let probabilities = if status == RowStatus::Unreachable && sigma == SIGMA_MAX {
        vec![1.0 / distances.len() as f64; distances.len()]
    } else {
        gaussian_row(&shifted, sigma)
    };
    RowCalibration {
        probabilities,
        sigma,
        rho: 0.0,
        status,
    }
}

fn umap_row(distances: &[f64], rho: f64, sigma: f64) -> Vec<f64> {
    distances.iter().map(|&d| (-(d - rho).max(0.0) / sigma).exp()).collect()
}

/// Shifted exponential row `p_j = exp(-(d_j - rho) / sigma)` summing to
/// `log2(k)`, with `rho` the row minimum.
pub fn calibrate_umap_row(distances: &[f64], k: usize) -> RowCalibration {
    if distances.is_empty() {
        return RowCalibration::isolated();
    }
    let rho = distances.iter().copied().fold(f64::INFINITY, f64::min);
    let target = (k.max(1) as f64).log2();
    let (sigma, mut status) = bisect(target, UMAP_SUM_TOLERANCE, |s| umap_row(distances, rho, s).iter().sum());
    if distances.iter().all(|&d| d == rho) {
        status = RowStatus::Degenerate;
    }
    RowCalibration {
        probabilities: umap_row(distances, rho, sigma),
        sigma,
        rho,
        status,
    }
}

/// Calibrates one row with the given kernel. `perplexity` drives the t-SNE
/// entropy target; the UMAP target uses `k = 3 * perplexity`.
pub fn calibrate_row(distances: &[f64], kernel: Kernel, perplexity: f64) -> RowCalibration {
    match kernel {
        Kernel::Tsne => calibrate_tsne_row(distances, perplexity),
        Kernel::Umap => calibrate_umap_row(distances, (3.0 * perplexity).round() as usize),
    }
}
