//! Univariate samplers: log-gamma, half-Cauchy, inverse-gamma.

use rand::Rng;
use rand_distr::{Cauchy, Distribution, Gamma};

use crate::error::{Error, Result};

/// Draw from LG(shape, rate): the logarithm of a Gamma(shape, rate) variate.
///
/// The mean is digamma(shape) - ln(rate).
pub fn sample_log_gamma<R: Rng>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    if shape <= 0.0 || rate <= 0.0 {
        return Err(Error::Numerical(format!(
            "log-gamma requires positive parameters, got shape={shape}, rate={rate}"
        )));
    }
    let gamma = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::Numerical(format!("gamma sampler: {e}")))?;
    Ok(gamma.sample(rng).ln())
}

/// Draw from a half-Cauchy distribution with the given scale.
pub fn sample_half_cauchy<R: Rng>(scale: f64, rng: &mut R) -> Result<f64> {
    if scale <= 0.0 {
        return Err(Error::Numerical(format!(
            "half-Cauchy requires a positive scale, got {scale}"
        )));
    }
    let cauchy =
        Cauchy::new(0.0, scale).map_err(|e| Error::Numerical(format!("cauchy sampler: {e}")))?;
    Ok(cauchy.sample(rng).abs())
}

/// Draw from an inverse-gamma distribution in the rate parameterization,
/// i.e. density proportional to x^(-shape-1) exp(-rate/x).
pub fn sample_inv_gamma<R: Rng>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    if shape <= 0.0 || rate <= 0.0 {
        return Err(Error::Numerical(format!(
            "inverse-gamma requires positive parameters, got shape={shape}, rate={rate}"
        )));
    }
    let gamma = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::Numerical(format!("gamma sampler: {e}")))?;
    Ok(1.0 / gamma.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use statrs::function::gamma::digamma;

    #[test]
    fn log_gamma_mean_matches_digamma() {
        let mut rng = rng_from_seed(11);
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| sample_log_gamma(1.0, 1.0, &mut rng).unwrap())
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        // Var of LG(1,1) is trigamma(1) = pi^2/6.
        let se = (std::f64::consts::PI.powi(2) / 6.0 / n as f64).sqrt();
        assert!(
            (mean - digamma(1.0)).abs() < 3.0 * se,
            "mean {mean} vs digamma(1) {}",
            digamma(1.0)
        );
    }

    #[test]
    fn log_gamma_rate_is_a_location_shift() {
        let mut rng = rng_from_seed(12);
        let n = 100_000;
        let kappa = 7.5;
        let m1: f64 = (0..n)
            .map(|_| sample_log_gamma(2.0, kappa, &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        let m2: f64 = (0..n)
            .map(|_| sample_log_gamma(2.0, 1.0, &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        let se = (2.0 * 0.6449 / n as f64).sqrt();
        assert!(((m2 - m1) - kappa.ln()).abs() < 4.0 * se);
    }

    #[test]
    fn log_gamma_large_shape_mean() {
        let mut rng = rng_from_seed(13);
        let n = 50_000;
        let mean: f64 = (0..n)
            .map(|_| sample_log_gamma(1000.0, 1000.0, &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        let expected = digamma(1000.0) - 1000.0f64.ln(); // about -0.0005
        let se = (1.0 / 1000.0 / n as f64).sqrt();
        assert!((mean - expected).abs() < 4.0 * se);
    }

    #[test]
    fn half_cauchy_median_is_scale() {
        let mut rng = rng_from_seed(14);
        let n = 100_000;
        let mut draws: Vec<f64> = (0..n)
            .map(|_| sample_half_cauchy(1.0, &mut rng).unwrap())
            .collect();
        assert!(draws.iter().all(|&x| x > 0.0));
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = draws[n / 2];
        assert!((median - 1.0).abs() < 0.02, "median {median}");
    }

    #[test]
    fn inv_gamma_mean() {
        let mut rng = rng_from_seed(15);
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| sample_inv_gamma(3.0, 2.0, &mut rng).unwrap())
            .collect();
        assert!(draws.iter().all(|&x| x > 0.0));
        let mean = draws.iter().sum::<f64>() / n as f64;
        // mean = rate/(shape-1) = 1, var = rate^2/((shape-1)^2 (shape-2)) = 1
        let se = (1.0 / n as f64).sqrt();
        assert!((mean - 1.0).abs() < 4.0 * se, "mean {mean}");
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut rng = rng_from_seed(16);
        assert!(sample_log_gamma(0.0, 1.0, &mut rng).is_err());
        assert!(sample_half_cauchy(-1.0, &mut rng).is_err());
        assert!(sample_inv_gamma(1.0, 0.0, &mut rng).is_err());
    }
}
