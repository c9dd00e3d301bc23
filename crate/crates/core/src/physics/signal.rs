use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{cascade_gain, ChannelMatrices, PhaseConfig};
use crate::error::{Error, Result};

/// `y[k] = G x[k] + n[k]` with circularly-symmetric Gaussian noise of total
/// standard deviation `noise_sigma`.
pub fn simulate_received_signal(
    ch: &ChannelMatrices,
    cfg: &PhaseConfig,
    x: &[Complex64],
    noise_sigma: f64,
    rng_seed: u64,
) -> Result<Vec<Complex64>> {
    if x.is_empty() {
        return Err(Error::Empty("transmitted sample sequence"));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::invalid(format!("noise sigma {noise_sigma} must be >= 0")));
    }
    let gain = cascade_gain(ch, cfg)?;
    if noise_sigma == 0.0 {
        return Ok(x.iter().map(|&s| gain * s).collect());
    }
    let normal = Normal::new(0.0, noise_sigma / std::f64::consts::SQRT_2)
        .map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    Ok(x.iter()
        .map(|&s| {
            let re = normal.sample(&mut rng);
            let im = normal.sample(&mut rng);
            gain * s + Complex64::new(re, im)
        })
        .collect())
}

/// `10 log10( (1/K) Σ |y[k]|² )`.
pub fn received_power_db(y: &[Complex64]) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::Empty("received sample sequence"));
    }
    let energy: f64 = y.iter().map(|s| (s * s.conj()).re).sum();
    if energy == 0.0 {
        return Err(Error::DegeneratePower);
    }
    Ok(10.0 * (energy / y.len() as f64).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::physics::PhaseTable;

    fn instance() -> (ChannelMatrices, PhaseConfig) {
        let h = Grid::from_fn(3, 2, |r, c| Complex64::new(1.0 + r as f64, 0.5 * c as f64));
        let g = Grid::from_fn(3, 2, |r, c| Complex64::new(0.25, (r + c) as f64 * 0.1));
        let cfg = PhaseConfig::new(
            Grid::from_fn(3, 2, |r, c| ((r + c) % 2) as u8),
            PhaseTable::binary(),
        )
        .unwrap();
        (ChannelMatrices::new(h, g).unwrap(), cfg)
    }

    #[test]
    fn unit_and_doubled_power() {
        let one = Complex64::new(1.0, 0.0);
        assert_eq!(received_power_db(&[one; 4]).unwrap(), 0.0);
        let p = received_power_db(&[Complex64::new(2.0, 0.0)]).unwrap();
        assert!((p - 6.020_599_913_279_624).abs() < 1e-12);
    }

    #[test]
    fn zero_power_is_an_error() {
        let z = Complex64::new(0.0, 0.0);
        assert!(matches!(received_power_db(&[z, z]), Err(Error::DegeneratePower)));
        assert!(matches!(received_power_db(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn noiseless_is_exact_scaling() {
        let (ch, cfg) = instance();
        let g = cascade_gain(&ch, &cfg).unwrap();
        let x: Vec<Complex64> = (0..5).map(|k| Complex64::new(k as f64, -1.0)).collect();
        let y = simulate_received_signal(&ch, &cfg, &x, 0.0, 9).unwrap();
        for (yk, xk) in y.iter().zip(&x) {
            assert_eq!(*yk, g * xk);
        }
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let (ch, cfg) = instance();
        let x = vec![Complex64::new(1.0, 0.0); 64];
        let a = simulate_received_signal(&ch, &cfg, &x, 0.3, 42).unwrap();
        let b = simulate_received_signal(&ch, &cfg, &x, 0.3, 42).unwrap();
        let c = simulate_received_signal(&ch, &cfg, &x, 0.3, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn empty_input_rejected() {
        let (ch, cfg) = instance();
        assert!(simulate_received_signal(&ch, &cfg, &[], 0.0, 0).is_err());
    }
}
