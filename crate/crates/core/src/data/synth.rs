use rand_distr::{Distribution, StandardNormal};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

/// Gaussian mixture with class `c` centred at `separation * e_c` (vertices
/// of a scaled simplex) and unit-variance spherical noise. Requires
/// `dims >= num_classes`. Examples are ordered by class.
pub fn synth_gaussian_mixture(
    num_classes: usize,
    dims: usize,
    per_class: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if num_classes == 0 || per_class == 0 {
        return Err(Error::config("synth", "num_classes and per_class must be positive"));
    }
    if dims < num_classes {
        return Err(Error::config(
            "synth",
            format!("dims ({dims}) must be at least num_classes ({num_classes})"),
        ));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(Error::config("synth", "separation must be nonnegative"));
    }
    let mut rng = stream(seed, Purpose::Synthetic, &[]);
    let mut features = Vec::with_capacity(num_classes * per_class * dims);
    let mut labels = Vec::with_capacity(num_classes * per_class);
    for c in 0..num_classes {
        for _ in 0..per_class {
            for j in 0..dims {
                let noise: f64 = StandardNormal.sample(&mut rng);
                let mean = if j == c { separation } else { 0.0 };
                features.push((mean + noise) as f32);
            }
            labels.push(c);
        }
    }
    Dataset::new(features, dims, labels, num_classes)
}
