//! Quantum projection noise: each point is re-drawn as `Binomial(shots, p)/shots`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{GsdError, Result};
use crate::fit::binomial_sigma;
use crate::imaging::{ImageGrid, Profile};

pub fn add_shot_noise(values: &[f64], shots: u32, seed: u64) -> Result<Vec<f64>> {
    if shots == 0 {
        return Err(GsdError::domain("shots must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    values
        .iter()
        .map(|&p| {
            if !(0.0..=1.0).contains(&p) {
                return Err(GsdError::domain(format!("probability {p} outside [0, 1]")));
            }
            let k = Binomial::new(shots as u64, p).map_err(|e| GsdError::domain(e.to_string()))?.sample(&mut rng);
            Ok(k as f64 / shots as f64)
        })
        .collect()
}

/// Noisy copy of a profile carrying the per-point binomial sigma of the
/// resampled values.
pub fn noisy_profile(profile: &Profile, shots: u32, seed: u64) -> Result<Profile> {
    let value = add_shot_noise(&profile.value, shots, seed)?;
    let sigma = value.iter().map(|&p| binomial_sigma(p, shots)).collect();
    Profile::new(profile.coordinate.clone(), value, Some(sigma))
}

pub fn noisy_image(image: &ImageGrid, shots: u32, seed: u64) -> Result<ImageGrid> {
    let mut out = image.clone();
    out.values = add_shot_noise(&image.values, shots, seed)?;
    Ok(out)
}
