//! Measurement noise and parameter-uncertainty injection.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{NoiseConfig, UncertaintyConfig};
use crate::dynamics::PlantScaling;
use crate::Vec8;

/// Adds i.i.d. Gaussian noise to every component of `q` and `q̇`.
///
/// Zero mean and zero deviation returns the inputs untouched without
/// drawing from the generator.
pub fn measure<R: Rng>(q: &Vec8, qd: &Vec8, rng: &mut R, noise: &NoiseConfig) -> (Vec8, Vec8) {
    if noise.mean == 0.0 && noise.std_dev == 0.0 {
        return (*q, *qd);
    }
    let dist = Normal::new(noise.mean, noise.std_dev).expect("validated noise deviation");
    let mut qm = *q;
    let mut qdm = *qd;
    for v in qm.iter_mut().chain(qdm.iter_mut()) {
        *v += dist.sample(rng);
    }
    (qm, qdm)
}

/// Plant scaling in force at time `t`.
pub fn apply_uncertainty(t: f64, cfg: &UncertaintyConfig) -> PlantScaling {
    if t < cfg.time_s {
        return PlantScaling::default();
    }
    PlantScaling {
        inertia: 1.0 + cfg.factor * cfg.inertia_sign,
        actuation: 1.0 + cfg.factor * cfg.actuation_sign,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_noise_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = Vec8::from_fn(|i, _| i as f64);
        let cfg = NoiseConfig {
            mean: 0.0,
            std_dev: 0.0,
        };
        assert_eq!(measure(&q, &q, &mut rng, &cfg), (q, q));
    }

    #[test]
    fn same_seed_same_stream() {
        let cfg = NoiseConfig::default();
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            assert_eq!(
                measure(&Vec8::zeros(), &Vec8::zeros(), &mut a, &cfg),
                measure(&Vec8::zeros(), &Vec8::zeros(), &mut b, &cfg)
            );
        }
    }

    #[test]
    fn uncertainty_step() {
        let cfg = UncertaintyConfig::default();
        assert_eq!(apply_uncertainty(14.999, &cfg), PlantScaling::default());
        let s = apply_uncertainty(15.0, &cfg);
        assert!((s.actuation - 0.9).abs() < 1e-15 && (s.inertia - 1.1).abs() < 1e-15);
        let off = UncertaintyConfig { factor: 0.0, ..cfg };
        assert_eq!(apply_uncertainty(20.0, &off), PlantScaling::default());
    }
}
