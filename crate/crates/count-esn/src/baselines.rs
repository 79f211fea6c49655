//! Intercept-only and Poisson INGARCH(1,1) reference models.

use serde::{Deserialize, Serialize};
use statrs::distribution::{DiscreteCDF, Poisson};

use crate::error::{Error, Result};

/// Poisson MLE of a constant mean; the point forecast at any horizon.
pub fn fit_intercept(y: &[u64]) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    y.iter().map(|&v| v as f64).sum::<f64>() / y.len() as f64
}

/// Fitted count feedback model lambda_t = beta0 + alpha1 lambda_{t-1}
/// + beta1 y_{t-1} with Poisson conditionals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngarchFit {
    pub beta0: f64,
    pub alpha1: f64,
    pub beta1: f64,
    pub loglik: f64,
    pub converged: bool,
    /// True when the fit fell back to the intercept model (short or
    /// degenerate series).
    pub fallback: bool,
    /// True when the optimum sits against the stationarity constraint.
    pub boundary: bool,
}

/// Conditional means along the observed series; lambda_1 is the sample mean.
pub fn lambda_path(fit: &IngarchFit, y: &[u64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(y.len());
    let mut lambda = fit_intercept(y);
    out.push(lambda);
    for t in 1..y.len() {
        lambda = fit.beta0 + fit.alpha1 * lambda + fit.beta1 * y[t - 1] as f64;
        out.push(lambda);
    }
    out
}

/// One-step-ahead mean: lambda_{T+1} = beta0 + alpha1 lambda_T + beta1 y_T.
pub fn one_step_mean(fit: &IngarchFit, lambda_last: f64, y_last: u64) -> f64 {
    fit.beta0 + fit.alpha1 * lambda_last + fit.beta1 * y_last as f64
}

fn conditional_loglik(y: &[u64], beta0: f64, alpha1: f64, beta1: f64) -> f64 {
    let mut lambda = fit_intercept(y);
    let mut ll = y[0] as f64 * lambda.max(1e-300).ln() - lambda;
    for t in 1..y.len() {
        lambda = beta0 + alpha1 * lambda + beta1 * y[t - 1] as f64;
        ll += y[t] as f64 * lambda.max(1e-300).ln() - lambda;
    }
    ll
}

/// Objective and gradient in the unconstrained parameterization
/// (log beta0, a, b) with alpha1 = a^2, beta1 = b^2, plus a log-barrier on
/// the stationarity margin 1 - alpha1 - beta1.
fn objective(y: &[u64], u: &[f64; 3], barrier: f64) -> (f64, [f64; 3]) {
    let ybar = fit_intercept(y);
    let beta0 = u[0].exp();
    let (a, b) = (u[1], u[2]);
    let alpha1 = a * a;
    let beta1 = b * b;
    let margin = 1.0 - alpha1 - beta1;
    if margin <= 0.0 {
        return (f64::NEG_INFINITY, [0.0; 3]);
    }
    let mut lambda = ybar;
    let mut ll = y[0] as f64 * lambda.max(1e-300).ln() - lambda;
    // Sensitivities of lambda_t to (beta0, alpha1, beta1).
    let mut s = [0.0f64; 3];
    let mut grad = [0.0f64; 3];
    for t in 1..y.len() {
        let prev = lambda;
        s = [
            1.0 + alpha1 * s[0],
            prev + alpha1 * s[1],
            y[t - 1] as f64 + alpha1 * s[2],
        ];
        lambda = beta0 + alpha1 * prev + beta1 * y[t - 1] as f64;
        let w = y[t] as f64 / lambda.max(1e-300) - 1.0;
        ll += y[t] as f64 * lambda.max(1e-300).ln() - lambda;
        grad[0] += w * s[0];
        grad[1] += w * s[1];
        grad[2] += w * s[2];
    }
    let obj = ll + barrier * margin.ln();
    let dmargin = barrier / margin;
    // Chain rule to (log beta0, a, b).
    let g = [
        grad[0] * beta0,
        (grad[1] - dmargin) * 2.0 * a,
        (grad[2] - dmargin) * 2.0 * b,
    ];
    (obj, g)
}

/// Maximize the conditional Poisson log-likelihood by BFGS over the
/// transformed parameters, tightening the interior penalty in stages.
pub fn fit_ingarch11(y: &[u64]) -> Result<IngarchFit> {
    if y.is_empty() {
        return Err(Error::Data("cannot fit an empty series".into()));
    }
    let ybar = fit_intercept(y);
    if y.len() < 10 || ybar == 0.0 {
        return Ok(IngarchFit {
            beta0: ybar,
            alpha1: 0.0,
            beta1: 0.0,
            loglik: if ybar > 0.0 {
                conditional_loglik(y, ybar, 0.0, 0.0)
            } else {
                0.0
            },
            converged: true,
            fallback: true,
            boundary: false,
        });
    }

    let mut u = [(0.4 * ybar).max(1e-3).ln(), 0.35f64, 0.55f64];
    for barrier in [1e-2, 1e-5, 1e-9] {
        u = bfgs(|v| objective(y, v, barrier), u, 500, 1e-8);
    }
    let (obj, grad) = objective(y, &u, 1e-9);
    let beta0 = u[0].exp();
    let alpha1 = u[1] * u[1];
    let beta1 = u[2] * u[2];
    let gnorm = grad.iter().map(|g| g.abs()).fold(0.0, f64::max);
    let converged = obj.is_finite() && gnorm < 1e-4 * (1.0 + obj.abs());
    Ok(IngarchFit {
        beta0,
        alpha1,
        beta1,
        loglik: conditional_loglik(y, beta0, alpha1, beta1),
        converged,
        fallback: false,
        boundary: alpha1 + beta1 > 0.98,
    })
}

/// Small dense BFGS with Armijo backtracking (maximization).
fn bfgs<F>(f: F, start: [f64; 3], max_iter: usize, tol: f64) -> [f64; 3]
where
    F: Fn(&[f64; 3]) -> (f64, [f64; 3]),
{
    let mut x = start;
    let (mut fx, mut g) = f(&x);
    let mut h = [[0.0f64; 3]; 3];
    for (i, row) in h.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _ in 0..max_iter {
        let gnorm = g.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if gnorm < tol * (1.0 + fx.abs()) {
            break;
        }
        // Ascent direction d = H g.
        let mut d = [0.0f64; 3];
        for i in 0..3 {
            for j in 0..3 {
                d[i] += h[i][j] * g[j];
            }
        }
        let slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if slope <= 0.0 {
            // Reset curvature if the model turned indefinite.
            h = [[0.0; 3]; 3];
            for (i, row) in h.iter_mut().enumerate() {
                row[i] = 1.0;
            }
            d = g;
        }
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..50 {
            let cand = [x[0] + step * d[0], x[1] + step * d[1], x[2] + step * d[2]];
            let (fc, gc) = f(&cand);
            if fc.is_finite() && fc >= fx + 1e-4 * step * slope {
                // BFGS update on the inverse Hessian (maximization form).
                let sv = [cand[0] - x[0], cand[1] - x[1], cand[2] - x[2]];
                let yv = [g[0] - gc[0], g[1] - gc[1], g[2] - gc[2]];
                let sy: f64 = sv.iter().zip(&yv).map(|(a, b)| a * b).sum();
                if sy > 1e-12 {
                    let mut hy = [0.0f64; 3];
                    for i in 0..3 {
                        for j in 0..3 {
                            hy[i] += h[i][j] * yv[j];
                        }
                    }
                    let yhy: f64 = yv.iter().zip(&hy).map(|(a, b)| a * b).sum();
                    let c1 = (sy + yhy) / (sy * sy);
                    for i in 0..3 {
                        for j in 0..3 {
                            h[i][j] += c1 * sv[i] * sv[j]
                                - (hy[i] * sv[j] + sv[i] * hy[j]) / sy;
                        }
                    }
                }
                x = cand;
                fx = fc;
                g = gc;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    x
}

/// Smallest k with Poisson(lambda) CDF at least p.
pub fn poisson_quantile(lambda: f64, p: f64) -> Result<u64> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Config(format!("quantile level must be in [0,1), got {p}")));
    }
    if lambda <= 0.0 {
        return Ok(0);
    }
    let dist =
        Poisson::new(lambda).map_err(|e| Error::Numerical(format!("poisson cdf: {e}")))?;
    let mut hi = (2.0 * lambda).ceil().max(8.0) as u64;
    while dist.cdf(hi) < p {
        hi *= 2;
        if hi > 1 << 60 {
            return Err(Error::Numerical("poisson quantile overflow".into()));
        }
    }
    let mut lo = 0u64;
    while lo < hi {
        let mid = (lo + hi) / 2;
        if dist.cdf(mid) >= p {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(lo)
}

/// Equal-tail Poisson prediction interval at the plug-in mean.
pub fn ingarch_interval(lambda_next: f64, level: f64) -> Result<(f64, f64)> {
    if !(0.0 < level && level < 1.0) {
        return Err(Error::Config(format!("interval level must be in (0,1), got {level}")));
    }
    if lambda_next <= 0.0 {
        return Ok((0.0, 0.0));
    }
    let alpha = 1.0 - level;
    let l = poisson_quantile(lambda_next, alpha / 2.0)?;
    let u = poisson_quantile(lambda_next, 1.0 - alpha / 2.0)?;
    Ok((l as f64, u as f64))
}
