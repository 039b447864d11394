use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use super::image::{CtImage, WindowSpec};
use crate::error::{Error, Result};

/// Image-domain Poisson noise on pseudo-intensities.
///
/// Each pixel's training-window value is read as a line integral `mu`, the
/// detector sees `Poisson(i0 * exp(-mu))` photons, and the log-transformed
/// count is mapped back to HU. Larger `i0` means a higher dose and less noise.
pub fn simulate_low_dose(ndct: &CtImage, photon_count: f64, seed: u64) -> Result<CtImage> {
    if !(photon_count > 0.0 && photon_count.is_finite()) {
        return Err(Error::Invalid(format!(
            "photon count must be positive and finite, got {photon_count}"
        )));
    }
    let window = WindowSpec::TRAINING;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noisy = Vec::with_capacity(ndct.pixels().len());
    for &hu in ndct.pixels() {
        let mu = ((hu as f64 - window.lo() as f64) / window.width()).clamp(0.0, 1.0);
        let expected = photon_count * (-mu).exp();
        let poisson = Poisson::new(expected)
            .map_err(|e| Error::Invalid(format!("poisson rate {expected}: {e}")))?;
        let counts: f64 = poisson.sample(&mut rng);
        let mu_noisy = -(counts.max(1.0) / photon_count).ln();
        noisy.push((window.lo() as f64 + mu_noisy * window.width()) as f32);
    }
    CtImage::from_hu_clamped(ndct.id(), ndct.width(), ndct.height(), noisy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctdata::phantom::{generate_phantom, PhantomSpec};

    fn noise_variance(clean: &CtImage, noisy: &CtImage) -> f64 {
        let diffs: Vec<f64> = clean
            .pixels()
            .iter()
            .zip(noisy.pixels())
            .map(|(a, b)| *b as f64 - *a as f64)
            .collect();
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / diffs.len() as f64
    }

    #[test]
    fn huge_dose_is_near_identity() {
        let clean = generate_phantom(&PhantomSpec::default().with_seed(3)).unwrap();
        let noisy = simulate_low_dose(&clean, 1e12, 11).unwrap();
        let close = clean
            .pixels()
            .iter()
            .zip(noisy.pixels())
            .filter(|(a, b)| (*a - *b).abs() <= 1.0)
            .count();
        assert!(close as f64 >= 0.99 * clean.pixels().len() as f64);
    }

    #[test]
    fn same_seed_same_noise() {
        let clean = generate_phantom(&PhantomSpec::default().with_seed(5)).unwrap();
        let a = simulate_low_dose(&clean, 1e4, 99).unwrap();
        let b = simulate_low_dose(&clean, 1e4, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.id(), clean.id());
        assert_eq!((a.width(), a.height()), (clean.width(), clean.height()));
    }

    #[test]
    fn noise_shrinks_with_dose() {
        let spec = PhantomSpec::default();
        let (mut low, mut high) = (0.0, 0.0);
        for seed in 0..100 {
            let clean = generate_phantom(&spec.with_seed(seed)).unwrap();
            low += noise_variance(&clean, &simulate_low_dose(&clean, 1e4, seed + 1000).unwrap());
            high += noise_variance(&clean, &simulate_low_dose(&clean, 1e5, seed + 1000).unwrap());
        }
        assert!(low > high, "variance at 1e4 ({low}) should exceed 1e5 ({high})");
    }

    #[test]
    fn non_positive_dose_is_rejected() {
        let clean = generate_phantom(&PhantomSpec::default()).unwrap();
        assert!(simulate_low_dose(&clean, 0.0, 1).is_err());
        assert!(simulate_low_dose(&clean, -5.0, 1).is_err());
    }
}
