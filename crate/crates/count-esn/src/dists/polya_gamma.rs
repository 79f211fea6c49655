//! Pólya-Gamma sampling.
//!
//! PG(b, c) draws are built from an exact rejection sampler for PG(1, c)
//! (alternating-series method on the Jacobi-theta representation), summed for
//! the integer part of b, plus a truncated sum-of-gammas series for the
//! fractional remainder. The truncation level is a configuration constant;
//! at the default of 200 terms the relative moment error is about 1e-3 of the
//! fractional part's contribution.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Default number of series terms for the fractional-part sampler.
pub const DEFAULT_PG_TRUNC: usize = 200;

const T_BOUNDARY: f64 = 0.64;
const LN_PI: f64 = 1.1447298858494002;
const HALF_LN_2PI: f64 = 0.9189385332046727;

fn log_norm_cdf(s: f64) -> f64 {
    if s > -35.0 {
        (0.5 * erfc(-s / std::f64::consts::SQRT_2)).ln()
    } else {
        // Asymptotic left tail: ln phi(s) - ln |s| + ln(1 - 1/s^2 + 3/s^4)
        let s2 = s * s;
        -0.5 * s2 - HALF_LN_2PI - (-s).ln() + (1.0 - 1.0 / s2 + 3.0 / (s2 * s2)).ln()
    }
}

/// ln P(X <= x) for X inverse-Gaussian with mean 1/z and shape 1.
fn log_inv_gauss_cdf(x: f64, z: f64) -> f64 {
    let rx = x.sqrt();
    let a = log_norm_cdf((x * z - 1.0) / rx);
    let b = 2.0 * z + log_norm_cdf(-(x * z + 1.0) / rx);
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Coefficient a_n(x) of the alternating series for the PG(1, .) kernel.
fn series_coef(n: usize, x: f64, t: f64) -> f64 {
    let np = n as f64 + 0.5;
    let lg = if x <= t {
        LN_PI + np.ln() + 1.5 * ((2.0 / (std::f64::consts::PI * x)).ln()) - 2.0 * np * np / x
    } else {
        LN_PI + np.ln() - 0.5 * np * np * std::f64::consts::PI.powi(2) * x
    };
    lg.exp()
}

/// Inverse-Gaussian(mean mu, shape 1) draw (Michael-Schucany-Haas).
fn sample_inv_gauss<R: Rng>(mu: f64, rng: &mut R) -> f64 {
    let nu: f64 = StandardNormal.sample(rng);
    let y = nu * nu;
    let x = mu + 0.5 * mu * mu * y - 0.5 * mu * (4.0 * mu * y + (mu * y).powi(2)).sqrt();
    let u: f64 = rng.random();
    if u > mu / (mu + x) {
        mu * mu / x
    } else {
        x
    }
}

/// Inverse-Gaussian(mean 1/z, shape 1) truncated to (0, t).
fn sample_trunc_inv_gauss<R: Rng>(z: f64, t: f64, rng: &mut R) -> f64 {
    if z < 1.0 / t {
        // Proposal x = t/(1 + t E)^2 from a squared-exponential pair, tilted
        // by exp(-z^2 x / 2).
        loop {
            let (mut e1, mut e2): (f64, f64);
            loop {
                e1 = Exp1.sample(rng);
                e2 = Exp1.sample(rng);
                if e1 * e1 <= 2.0 * e2 / t {
                    break;
                }
            }
            let x = t / ((1.0 + t * e1) * (1.0 + t * e1));
            let u: f64 = rng.random::<f64>().max(1e-300);
            if u.ln() <= -0.5 * z * z * x {
                return x;
            }
        }
    } else {
        loop {
            let x = sample_inv_gauss(1.0 / z, rng);
            if x > 0.0 && x < t {
                return x;
            }
        }
    }
}

/// Exact PG(1, c) draw by alternating-series rejection.
fn sample_pg_one<R: Rng>(c: f64, rng: &mut R) -> f64 {
    let z = 0.5 * c.abs();
    let t = T_BOUNDARY;
    let k = std::f64::consts::PI.powi(2) / 8.0 + 0.5 * z * z;
    let log_p = (std::f64::consts::PI / (2.0 * k)).ln() - k * t;
    let log_q = std::f64::consts::LN_2 - z + log_inv_gauss_cdf(t, z);
    let exp_branch_prob = 1.0 / (1.0 + (log_q - log_p).exp());
    loop {
        let x = if rng.random::<f64>() < exp_branch_prob {
            let e: f64 = Exp1.sample(rng);
            t + e / k
        } else {
            sample_trunc_inv_gauss(z, t, rng)
        };
        let mut s = series_coef(0, x, t);
        let y: f64 = rng.random::<f64>() * s;
        let mut n = 0usize;
        loop {
            n += 1;
            if n % 2 == 1 {
                s -= series_coef(n, x, t);
                if y <= s {
                    return 0.25 * x;
                }
            } else {
                s += series_coef(n, x, t);
                if y > s {
                    break;
                }
            }
            if n > 5000 {
                break; // numerically unresolved; draw a fresh proposal
            }
        }
    }
}

/// Truncated sum-of-gammas draw for PG(b, c) with small non-integer b.
fn sample_pg_series<R: Rng>(b: f64, c: f64, trunc: usize, rng: &mut R) -> Result<f64> {
    let gamma = Gamma::new(b, 1.0).map_err(|e| Error::Numerical(format!("gamma sampler: {e}")))?;
    let shift = (c / (2.0 * std::f64::consts::PI)).powi(2);
    let mut total = 0.0;
    for k in 1..=trunc.max(1) {
        let d = (k as f64 - 0.5).powi(2) + shift;
        total += gamma.sample(rng) / d;
    }
    Ok(total / (2.0 * std::f64::consts::PI.powi(2)))
}

/// Draw from the Pólya-Gamma distribution PG(b, c), b > 0.
///
/// Integer parts of b use exact PG(1, c) draws; the fractional remainder uses
/// the truncated series with `trunc` terms.
pub fn sample_pg<R: Rng>(b: f64, c: f64, trunc: usize, rng: &mut R) -> Result<f64> {
    if !(b > 0.0) || !b.is_finite() || !c.is_finite() {
        return Err(Error::Numerical(format!(
            "Pólya-Gamma requires finite b > 0, got b={b}, c={c}"
        )));
    }
    let m = b.floor();
    let mut frac = b - m;
    let mut whole = m as u64;
    if frac < 1e-12 * (1.0 + b) {
        frac = 0.0;
    } else if frac > 1.0 - 1e-12 * (1.0 + b) {
        frac = 0.0;
        whole += 1;
    }
    let mut total = 0.0;
    for _ in 0..whole {
        total += sample_pg_one(c, rng);
    }
    if frac > 0.0 {
        total += sample_pg_series(frac, c, trunc, rng)?;
    }
    Ok(total.max(f64::MIN_POSITIVE))
}

/// Mean of PG(b, c): b/(2c) tanh(c/2), with the c -> 0 limit b/4.
pub fn pg_mean(b: f64, c: f64) -> f64 {
    if c.abs() < 1e-8 {
        b / 4.0
    } else {
        b / (2.0 * c) * (0.5 * c).tanh()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn pg_var(b: f64, c: f64) -> f64 {
        if c.abs() < 1e-8 {
            b / 24.0
        } else {
            let sech2 = (0.5 * c).cosh().powi(-2);
            b / (4.0 * c.powi(3)) * (c.sinh() - c) * sech2
        }
    }

    fn check_mean(b: f64, c: f64, seed: u64) {
        let mut rng = rng_from_seed(seed);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let d = sample_pg(b, c, DEFAULT_PG_TRUNC, &mut rng).unwrap();
            assert!(d > 0.0);
            sum += d;
        }
        let mean = sum / n as f64;
        let se = (pg_var(b, c) / n as f64).sqrt();
        assert!(
            (mean - pg_mean(b, c)).abs() < 3.0 * se,
            "PG({b},{c}): mean {mean} expected {} (3se {})",
            pg_mean(b, c),
            3.0 * se
        );
    }

    #[test]
    fn mean_pg_1_0() {
        check_mean(1.0, 0.0, 51);
    }

    #[test]
    fn mean_pg_2_1() {
        assert!((pg_mean(2.0, 1.0) - 0.5f64.tanh()).abs() < 1e-12);
        check_mean(2.0, 1.0, 52);
    }

    #[test]
    fn mean_fractional_b() {
        check_mean(0.5, 2.0, 53);
        check_mean(3.7, 0.3, 54);
    }

    #[test]
    fn laplace_transform_pg_1_0() {
        let mut rng = rng_from_seed(55);
        let n = 100_000;
        let ts = [0.5, 1.0, 2.0];
        let mut sums = [0.0; 3];
        for _ in 0..n {
            let d = sample_pg(1.0, 0.0, DEFAULT_PG_TRUNC, &mut rng).unwrap();
            for (s, t) in sums.iter_mut().zip(ts) {
                *s += (-d * t).exp();
            }
        }
        for (s, t) in sums.iter().zip(ts) {
            let emp = s / n as f64;
            let expected = 1.0 / (t / 2.0f64).sqrt().cosh();
            assert!(
                (emp - expected).abs() < 0.002,
                "t={t}: {emp} vs {expected}"
            );
        }
    }

    #[test]
    fn devroye_and_series_routes_agree() {
        // Distributional agreement between the two independent constructions
        // at b = 1, via a two-sample KS test.
        let mut rng = rng_from_seed(56);
        let n = 20_000;
        let c = 1.3;
        let mut a: Vec<f64> = (0..n).map(|_| sample_pg_one(c, &mut rng)).collect();
        let mut b: Vec<f64> = (0..n)
            .map(|_| sample_pg_series(1.0, c, 400, &mut rng).unwrap())
            .collect();
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mut ks: f64 = 0.0;
        let (mut i, mut j) = (0usize, 0usize);
        while i < n && j < n {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            ks = ks.max((i as f64 / n as f64 - j as f64 / n as f64).abs());
        }
        assert!(ks < 0.025, "two-sample KS {ks}");
    }

    #[test]
    fn rejects_nonpositive_b() {
        let mut rng = rng_from_seed(57);
        assert!(sample_pg(0.0, 1.0, DEFAULT_PG_TRUNC, &mut rng).is_err());
        assert!(sample_pg(-2.0, 1.0, DEFAULT_PG_TRUNC, &mut rng).is_err());
    }
}
