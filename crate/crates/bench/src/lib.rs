//! Synthetic inputs for the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sphx_core::HighDimImage;

/// Piecewise-constant image of `blocks x blocks` regions with distinct random
/// spectra plus uniform noise of amplitude `noise`.
pub fn blocky_image(
    width: usize,
    height: usize,
    channels: usize,
    blocks: usize,
    noise: f32,
    seed: u64,
) -> HighDimImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spectra: Vec<f32> = (0..blocks * blocks * channels).map(|_| rng.random::<f32>()).collect();
    let mut values = Vec::with_capacity(width * height * channels);
    for y in 0..height {
        for x in 0..width {
            let b = (y * blocks / height) * blocks + x * blocks / width;
            for c in 0..channels {
                values.push(spectra[b * channels + c] + noise * (rng.random::<f32>() - 0.5));
            }
        }
    }
    HighDimImage::new(width, height, channels, values).expect("finite values")
}
