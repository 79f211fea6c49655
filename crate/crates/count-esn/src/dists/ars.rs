//! Exact sampling from smooth univariate log-concave densities via adaptive
//! rejection sampling with tangent-line envelopes (Gilks-Wild style).
//!
//! The envelope is the lower hull of tangents to the log-density at a set of
//! abscissae; rejected proposals are inserted as new abscissae, so the
//! envelope tightens as the sampler runs. Draws are exact.

use rand::Rng;

use crate::error::{Error, Result};

/// A univariate log-concave target known up to an additive constant.
pub trait LogConcave {
    fn log_density(&self, x: f64) -> f64;
    fn dlog_density(&self, x: f64) -> f64;
}

const MAX_POINTS: usize = 64;
const MAX_REJECTS: usize = 1000;

struct Envelope {
    xs: Vec<f64>,
    hs: Vec<f64>,
    ds: Vec<f64>,
    /// Breakpoints between consecutive tangents; len = xs.len() - 1.
    zs: Vec<f64>,
    /// Log-mass under each tangent piece; len = xs.len().
    log_mass: Vec<f64>,
}

impl Envelope {
    fn new(xs: Vec<f64>, hs: Vec<f64>, ds: Vec<f64>) -> Self {
        let mut env = Envelope {
            xs,
            hs,
            ds,
            zs: Vec::new(),
            log_mass: Vec::new(),
        };
        env.rebuild();
        env
    }

    fn rebuild(&mut self) {
        let k = self.xs.len();
        self.zs.clear();
        for i in 0..k - 1 {
            let (x0, h0, d0) = (self.xs[i], self.hs[i], self.ds[i]);
            let (x1, h1, d1) = (self.xs[i + 1], self.hs[i + 1], self.ds[i + 1]);
            let z = if (d0 - d1).abs() > 1e-12 * (1.0 + d0.abs().max(d1.abs())) {
                (h1 - h0 - x1 * d1 + x0 * d0) / (d0 - d1)
            } else {
                0.5 * (x0 + x1)
            };
            // Concavity implies breakpoints are ordered; enforce under fp noise.
            let z = z.clamp(x0, x1);
            let z = if let Some(&prev) = self.zs.last() {
                z.max(prev)
            } else {
                z
            };
            self.zs.push(z);
        }
        self.log_mass.clear();
        for i in 0..k {
            let a = if i == 0 {
                f64::NEG_INFINITY
            } else {
                self.zs[i - 1]
            };
            let b = if i == k - 1 {
                f64::INFINITY
            } else {
                self.zs[i]
            };
            self.log_mass
                .push(piece_log_mass(self.xs[i], self.hs[i], self.ds[i], a, b));
        }
    }

    fn insert(&mut self, x: f64, h: f64, d: f64) -> bool {
        if self.xs.len() >= MAX_POINTS || !h.is_finite() || !d.is_finite() {
            return false;
        }
        let pos = self.xs.partition_point(|&v| v < x);
        let sep = 1e-11 * (1.0 + x.abs());
        if (pos > 0 && (x - self.xs[pos - 1]).abs() < sep)
            || (pos < self.xs.len() && (self.xs[pos] - x).abs() < sep)
        {
            return false;
        }
        // Keep slopes non-increasing so the tangent hull stays valid.
        if (pos > 0 && d > self.ds[pos - 1] + 1e-9 * (1.0 + d.abs()))
            || (pos < self.ds.len() && d < self.ds[pos] - 1e-9 * (1.0 + d.abs()))
        {
            return false;
        }
        self.xs.insert(pos, x);
        self.hs.insert(pos, h);
        self.ds.insert(pos, d);
        self.rebuild();
        true
    }

    /// Sample a point from the normalized envelope. Returns (x, hull value).
    fn sample<R: Rng>(&self, rng: &mut R) -> Option<(f64, f64)> {
        let max_lm = self
            .log_mass
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        if !max_lm.is_finite() {
            return None;
        }
        let weights: Vec<f64> = self.log_mass.iter().map(|lm| (lm - max_lm).exp()).collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut idx = weights.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            if u < *w {
                idx = i;
                break;
            }
            u -= w;
        }
        let a = if idx == 0 {
            f64::NEG_INFINITY
        } else {
            self.zs[idx - 1]
        };
        let b = if idx == self.xs.len() - 1 {
            f64::INFINITY
        } else {
            self.zs[idx]
        };
        let d = self.ds[idx];
        let u2: f64 = rng.random::<f64>().max(1e-300);
        let x = sample_piece(a, b, d, u2)?;
        let hull = self.hs[idx] + d * (x - self.xs[idx]);
        Some((x, hull))
    }
}

/// Log of the integral of exp(h0 + d (x - x0)) over (a, b).
fn piece_log_mass(x0: f64, h0: f64, d: f64, a: f64, b: f64) -> f64 {
    let c = h0 - d * x0;
    if a.is_infinite() && b.is_infinite() {
        return f64::INFINITY; // flat tangent over the whole line: improper
    }
    if a.is_infinite() {
        // requires d > 0
        return if d > 0.0 {
            c + d * b - d.ln()
        } else {
            f64::INFINITY
        };
    }
    if b.is_infinite() {
        return if d < 0.0 {
            c + d * a - (-d).ln()
        } else {
            f64::INFINITY
        };
    }
    if b <= a {
        return f64::NEG_INFINITY;
    }
    let span = d * (b - a);
    if span.abs() < 1e-10 {
        c + d * 0.5 * (a + b) + (b - a).ln()
    } else if d > 0.0 {
        c + d * b + (-(-span).exp_m1()).ln() - d.ln()
    } else {
        c + d * a + (-span.exp_m1()).ln() - (-d).ln()
    }
}

/// Inverse-CDF draw from the exponential tilt exp(d x) restricted to (a, b).
fn sample_piece(a: f64, b: f64, d: f64, u: f64) -> Option<f64> {
    if a.is_infinite() {
        return if d > 0.0 { Some(b + u.ln() / d) } else { None };
    }
    if b.is_infinite() {
        return if d < 0.0 { Some(a + u.ln() / d) } else { None };
    }
    let span = d * (b - a);
    let x = if span.abs() < 1e-10 {
        a + u * (b - a)
    } else if d > 0.0 {
        // x = b + ln(u + (1-u) e^{-span}) / d, stable for large span
        b + (u + (1.0 - u) * (-span).exp()).ln() / d
    } else {
        a + ((1.0 - u) + u * span.exp()).ln() / d
    };
    Some(x.clamp(a.min(b), b.max(a)))
}

/// Locate the mode of the target by expanding a sign-change bracket for the
/// derivative from `init` and bisecting it.
fn find_mode<T: LogConcave>(target: &T, init: f64) -> Result<(f64, f64)> {
    let mut x = init;
    if !target.log_density(x).is_finite() {
        x = 0.0;
    }
    let d0 = target.dlog_density(x);
    if !d0.is_finite() {
        return Err(Error::Numerical(
            "log-concave sampler: non-finite derivative at start".into(),
        ));
    }
    let mut step = 1.0 + 0.1 * x.abs();
    let (mut lo, mut hi);
    if d0 > 0.0 {
        lo = x;
        hi = x + step;
        let mut tries = 0;
        while target.dlog_density(hi) > 0.0 {
            lo = hi;
            step *= 2.0;
            hi += step;
            tries += 1;
            if tries > 200 {
                return Err(Error::Numerical(
                    "log-concave sampler: density appears improper (no right wall)".into(),
                ));
            }
        }
    } else {
        hi = x;
        lo = x - step;
        let mut tries = 0;
        while target.dlog_density(lo) <= 0.0 {
            hi = lo;
            step *= 2.0;
            lo -= step;
            tries += 1;
            if tries > 200 {
                return Err(Error::Numerical(
                    "log-concave sampler: density appears improper (no left wall)".into(),
                ));
            }
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if target.dlog_density(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-9 * (1.0 + mid.abs()) {
            break;
        }
    }
    let mode = 0.5 * (lo + hi);
    // Curvature scale from a centered difference of the derivative.
    let h = 1e-5 * (1.0 + mode.abs());
    let curv = (target.dlog_density(mode - h) - target.dlog_density(mode + h)) / (2.0 * h);
    let scale = if curv.is_finite() && curv > 0.0 {
        curv.sqrt().recip()
    } else {
        1.0
    };
    Ok((mode, scale))
}

/// Draw one exact sample from a log-concave target.
///
/// `init` is a hint for locating the mode (e.g. the current value in a Gibbs
/// scan); it does not affect the distribution of the returned draw.
pub fn sample_log_concave<T: LogConcave, R: Rng>(
    target: &T,
    init: f64,
    rng: &mut R,
) -> Result<f64> {
    let (mode, scale) = find_mode(target, init)?;

    // Initial abscissae must have d > 0 on the left and d < 0 on the right.
    let mut left = mode - 1.5 * scale;
    let mut tries = 0;
    while target.dlog_density(left) <= 0.0 || !target.log_density(left).is_finite() {
        left = mode - 0.5 * (mode - left);
        tries += 1;
        if tries > 100 {
            return Err(Error::Numerical(
                "log-concave sampler: failed to find left support point".into(),
            ));
        }
    }
    let mut right = mode + 1.5 * scale;
    tries = 0;
    while target.dlog_density(right) >= 0.0 || !target.log_density(right).is_finite() {
        right = mode + 0.5 * (right - mode);
        tries += 1;
        if tries > 100 {
            return Err(Error::Numerical(
                "log-concave sampler: failed to find right support point".into(),
            ));
        }
    }
    let xs = vec![left, mode, right];
    let hs: Vec<f64> = xs.iter().map(|&x| target.log_density(x)).collect();
    let ds: Vec<f64> = xs.iter().map(|&x| target.dlog_density(x)).collect();
    let mut env = Envelope::new(xs, hs, ds);

    for _ in 0..MAX_REJECTS {
        let Some((x, hull)) = env.sample(rng) else {
            return Err(Error::Numerical(
                "log-concave sampler: degenerate envelope".into(),
            ));
        };
        let hx = target.log_density(x);
        let u: f64 = rng.random::<f64>().max(1e-300);
        if u.ln() <= hx - hull {
            return Ok(x);
        }
        env.insert(x, hx, target.dlog_density(x));
    }
    Err(Error::Numerical(
        "log-concave sampler: rejection cap exceeded".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use statrs::function::gamma::digamma;

    struct Gaussian;
    impl LogConcave for Gaussian {
        fn log_density(&self, x: f64) -> f64 {
            -0.5 * x * x
        }
        fn dlog_density(&self, x: f64) -> f64 {
            -x
        }
    }

    /// Log-gamma LG(shape, rate) log-density: shape*x - rate*e^x.
    struct LogGammaTarget {
        shape: f64,
        rate: f64,
    }
    impl LogConcave for LogGammaTarget {
        fn log_density(&self, x: f64) -> f64 {
            self.shape * x - self.rate * x.clamp(-700.0, 700.0).exp()
        }
        fn dlog_density(&self, x: f64) -> f64 {
            self.shape - self.rate * x.clamp(-700.0, 700.0).exp()
        }
    }

    fn normal_cdf(x: f64) -> f64 {
        0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
    }

    #[test]
    fn gaussian_draws_pass_ks() {
        let mut rng = rng_from_seed(21);
        let n = 20_000;
        let mut draws: Vec<f64> = (0..n)
            .map(|_| sample_log_concave(&Gaussian, 3.0, &mut rng).unwrap())
            .collect();
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut ks: f64 = 0.0;
        for (i, x) in draws.iter().enumerate() {
            let f = normal_cdf(*x);
            ks = ks
                .max((f - i as f64 / n as f64).abs())
                .max(((i + 1) as f64 / n as f64 - f).abs());
        }
        assert!(ks < 0.015, "KS statistic {ks}");
    }

    #[test]
    fn log_gamma_moments_match() {
        let mut rng = rng_from_seed(22);
        let target = LogGammaTarget {
            shape: 3.0,
            rate: 2.0,
        };
        let n = 50_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| sample_log_concave(&target, 0.0, &mut rng).unwrap())
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let expected_mean = digamma(3.0) - 2.0f64.ln();
        let trigamma3 = 0.394934066848226; // psi'(3)
        assert!(
            (mean - expected_mean).abs() < 4.0 * (trigamma3 / n as f64).sqrt(),
            "mean {mean} vs {expected_mean}"
        );
        assert!((var / trigamma3 - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn extreme_shape_is_stable() {
        let mut rng = rng_from_seed(23);
        let target = LogGammaTarget {
            shape: 1000.0,
            rate: 1000.0,
        };
        let n = 20_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| sample_log_concave(&target, 5.0, &mut rng).unwrap())
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let expected = digamma(1000.0) - 1000.0f64.ln();
        assert!((mean - expected).abs() < 4.0 * (0.001f64 / n as f64).sqrt());
    }

    #[test]
    fn improper_target_errors() {
        struct Improper;
        impl LogConcave for Improper {
            fn log_density(&self, x: f64) -> f64 {
                x
            }
            fn dlog_density(&self, _x: f64) -> f64 {
                1.0
            }
        }
        let mut rng = rng_from_seed(24);
        assert!(sample_log_concave(&Improper, 0.0, &mut rng).is_err());
    }
}
