//! Shared numeric fitting routines.
//!
//! Everything here is a pure, deterministic function: ordinary least squares
//! on transformed axes for the power-law and exponential fits, and a damped
//! Newton maximizer for the left-truncated log-normal likelihood. The fits
//! are kept closed-form wherever possible so repeated runs are bit-identical.

use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// Ordinary least-squares line plus the coefficient of determination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

/// Power law `y = c * x^(-q)` fitted by least squares in log-log space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLawFit {
    /// Decay exponent q (positive when y falls with x).
    pub exponent: f64,
    /// Prefactor c.
    pub prefactor: f64,
    /// R-squared of the straight line in log-log coordinates.
    pub r_squared: f64,
    pub n_points: usize,
}

/// Exponential decay `y = A * exp(-beta * x)` fitted by least squares of
/// `ln y` on `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentialFit {
    pub amplitude: f64,
    pub decay_rate: f64,
    /// R-squared of the straight line in semi-log coordinates.
    pub r_squared: f64,
    pub n_points: usize,
}

/// Maximum-likelihood parameters of a log-normal law left-truncated at a
/// known point, fitted to samples that all lie at or above it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncatedLogNormalFit {
    /// Mean of ln x for the untruncated parent law.
    pub mu: f64,
    /// Variance of ln x for the untruncated parent law.
    pub sigma_sq: f64,
    /// Total log-likelihood at the optimum.
    pub log_likelihood: f64,
    pub n_points: usize,
    pub converged: bool,
    /// Infinity norm of the mean log-likelihood gradient at the returned
    /// parameters.
    pub gradient_norm: f64,
    pub iterations: usize,
}

/// OLS of ys on xs with R-squared. Needs at least 3 points and nonzero
/// variance in xs. Constant ys fit exactly (R-squared 1 by convention).
pub fn linear_regression_r2(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() {
        return Err(Error::numeric("regression inputs differ in length"));
    }
    let n = xs.len();
    if n < 3 {
        return Err(Error::numeric(format!(
            "regression needs at least 3 points, got {n}"
        )));
    }
    if xs.iter().any(|v| !v.is_finite()) || ys.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("regression inputs must be finite"));
    }
    let nf = n as f64;
    let mean_x = xs.iter().sum::<f64>() / nf;
    let mean_y = ys.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let dx = x - mean_x;
        let dy = y - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::numeric("zero variance in x"));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res = ys
        .iter()
        .zip(xs)
        .map(|(&y, &x)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum::<f64>();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
        n_points: n,
    })
}

/// Fit `y = c * x^(-q)` by OLS of ln y on ln x. All xs and ys must be
/// strictly positive; at least 3 points.
pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> Result<PowerLawFit> {
    if xs.len() != ys.len() {
        return Err(Error::numeric("power-law inputs differ in length"));
    }
    if xs.len() < 3 {
        return Err(Error::numeric(format!(
            "power-law fit needs at least 3 points, got {}",
            xs.len()
        )));
    }
    if xs.iter().any(|&x| x <= 0.0) {
        return Err(Error::numeric("power-law fit requires positive x"));
    }
    if ys.iter().any(|&y| y <= 0.0) {
        return Err(Error::numeric("power-law fit requires positive y"));
    }
    let lx: Vec<f64> = xs.iter().map(|&x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|&y| y.ln()).collect();
    let line = linear_regression_r2(&lx, &ly)?;
    Ok(PowerLawFit {
        exponent: -line.slope,
        prefactor: line.intercept.exp(),
        r_squared: line.r_squared,
        n_points: xs.len(),
    })
}

/// Fit `y = A * exp(-beta * x)` by OLS of ln y on x. All ys must be strictly
/// positive; at least 3 points.
pub fn fit_exponential(xs: &[f64], ys: &[f64]) -> Result<ExponentialFit> {
    if xs.len() != ys.len() {
        return Err(Error::numeric("exponential inputs differ in length"));
    }
    if xs.len() < 3 {
        return Err(Error::numeric(format!(
            "exponential fit needs at least 3 points, got {}",
            xs.len()
        )));
    }
    if ys.iter().any(|&y| y <= 0.0) {
        return Err(Error::numeric("exponential fit requires positive y"));
    }
    let ly: Vec<f64> = ys.iter().map(|&y| y.ln()).collect();
    let line = linear_regression_r2(xs, &ly)?;
    Ok(ExponentialFit {
        amplitude: line.intercept.exp(),
        decay_rate: -line.slope,
        r_squared: line.r_squared,
        n_points: xs.len(),
    })
}

/// Standard normal density.
fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal survival function 1 - CDF(x).
fn survival(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Inverse Mills ratio phi(a) / (1 - CDF(a)). Uses the asymptotic expansion
/// once the survival function gets too small to divide by.
fn mills_inverse(a: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return 0.0;
    }
    if a < 8.0 {
        phi(a) / survival(a)
    } else {
        let inv = 1.0 / a;
        let inv2 = inv * inv;
        a + inv * (1.0 - inv2 * (2.0 - 10.0 * inv2))
    }
}

/// Mean log-likelihood of the left-truncated normal in theta = (mu, ln sigma)
/// over log-samples ys (already transformed), with truncation at tau.
fn trunc_normal_mean_ll(ys: &[f64], tau: f64, mu: f64, s: f64) -> f64 {
    let n = ys.len() as f64;
    let inv_var = (-2.0 * s).exp();
    let sq: f64 = ys.iter().map(|&y| (y - mu) * (y - mu)).sum();
    let alpha = if tau == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        (tau - mu) * (-s).exp()
    };
    let ln_surv = if alpha == f64::NEG_INFINITY {
        0.0
    } else {
        let sv = survival(alpha);
        if sv > 0.0 {
            sv.ln()
        } else {
            // Deep truncation: ln S(a) ~ ln(phi(a)/a) for large a.
            -0.5 * alpha * alpha - LN_SQRT_2PI - alpha.ln()
        }
    };
    -LN_SQRT_2PI - s - 0.5 * inv_var * sq / n - ln_surv
}

/// Gradient of the mean log-likelihood in (mu, s = ln sigma).
fn trunc_normal_mean_grad(ys: &[f64], tau: f64, mu: f64, s: f64) -> (f64, f64) {
    let n = ys.len() as f64;
    let inv_sigma = (-s).exp();
    let inv_var = inv_sigma * inv_sigma;
    let sd: f64 = ys.iter().map(|&y| y - mu).sum::<f64>() / n;
    let sq: f64 = ys.iter().map(|&y| (y - mu) * (y - mu)).sum::<f64>() / n;
    let (lambda, alpha) = if tau == f64::NEG_INFINITY {
        (0.0, f64::NEG_INFINITY)
    } else {
        let alpha = (tau - mu) * inv_sigma;
        (mills_inverse(alpha), alpha)
    };
    let g_mu = inv_var * sd - lambda * inv_sigma;
    let g_s = -1.0 + inv_var * sq - if lambda == 0.0 { 0.0 } else { lambda * alpha };
    (g_mu, g_s)
}

/// Hessian of the mean log-likelihood in (mu, s).
fn trunc_normal_mean_hess(ys: &[f64], tau: f64, mu: f64, s: f64) -> (f64, f64, f64) {
    let n = ys.len() as f64;
    let inv_sigma = (-s).exp();
    let inv_var = inv_sigma * inv_sigma;
    let sd: f64 = ys.iter().map(|&y| y - mu).sum::<f64>() / n;
    let sq: f64 = ys.iter().map(|&y| (y - mu) * (y - mu)).sum::<f64>() / n;
    let (lambda, alpha) = if tau == f64::NEG_INFINITY {
        (0.0, f64::NEG_INFINITY)
    } else {
        let alpha = (tau - mu) * inv_sigma;
        (mills_inverse(alpha), alpha)
    };
    // d(lambda)/d(alpha) = lambda * (lambda - alpha)
    let dl = if lambda == 0.0 { 0.0 } else { lambda * (lambda - alpha) };
    let h_mm = -inv_var * (1.0 - dl);
    let mut h_ms = -2.0 * inv_var * sd;
    let mut h_ss = -2.0 * inv_var * sq;
    if lambda != 0.0 {
        h_ms += inv_sigma * (dl * alpha + lambda);
        h_ss += alpha * (dl * alpha + lambda);
    }
    (h_mm, h_ms, h_ss)
}

/// MLE of a log-normal law left-truncated at `truncation_point`, fitted to
/// samples that all lie at or above it. Damped Newton on (mu, ln sigma);
/// converged when the mean-gradient infinity norm drops below 1e-8 or after
/// 200 iterations. Falls back to bisection on the profile likelihood if a
/// Newton step cannot make progress. A truncation point of zero (or anything
/// non-positive) selects the untruncated closed form.
pub fn fit_truncated_lognormal(samples: &[f64], truncation_point: f64) -> Result<TruncatedLogNormalFit> {
    let n = samples.len();
    if n < 30 {
        return Err(Error::numeric(format!(
            "truncated log-normal fit needs at least 30 samples, got {n}"
        )));
    }
    if samples.iter().any(|&x| !x.is_finite() || x <= 0.0) {
        return Err(Error::numeric(
            "truncated log-normal fit requires finite positive samples",
        ));
    }
    if truncation_point > 0.0 {
        if let Some(&bad) = samples.iter().find(|&&x| x < truncation_point) {
            return Err(Error::numeric(format!(
                "sample {bad} lies below the truncation point {truncation_point}"
            )));
        }
    }
    let tau = if truncation_point > 0.0 {
        truncation_point.ln()
    } else {
        f64::NEG_INFINITY
    };
    let ys: Vec<f64> = samples.iter().map(|&x| x.ln()).collect();
    let nf = n as f64;
    let mean_y = ys.iter().sum::<f64>() / nf;
    let var_y = ys.iter().map(|&y| (y - mean_y) * (y - mean_y)).sum::<f64>() / nf;
    if var_y <= 0.0 {
        return Err(Error::numeric(
            "zero variance: all samples equal, log-normal fit is degenerate",
        ));
    }

    // Moment start; for truncated data this understates sigma but Newton
    // recovers quickly.
    let mut mu = mean_y;
    let mut s = 0.5 * var_y.ln();

    const GRAD_TOL: f64 = 1e-8;
    const MAX_ITER: usize = 200;

    let mut ll = trunc_normal_mean_ll(&ys, tau, mu, s);
    let mut iterations = 0;
    let mut converged = false;
    let mut need_fallback = false;

    for iter in 0..MAX_ITER {
        iterations = iter + 1;
        let (g_mu, g_s) = trunc_normal_mean_grad(&ys, tau, mu, s);
        let gnorm = g_mu.abs().max(g_s.abs());
        if gnorm < GRAD_TOL {
            converged = true;
            break;
        }
        let (h_mm, h_ms, h_ss) = trunc_normal_mean_hess(&ys, tau, mu, s);
        let det = h_mm * h_ss - h_ms * h_ms;
        // Newton direction solving H d = -g; require a negative-definite
        // Hessian so the step points uphill.
        if !(h_mm < 0.0 && det > 0.0) || !det.is_finite() {
            need_fallback = true;
            break;
        }
        let d_mu = (-g_mu * h_ss + g_s * h_ms) / det;
        let d_s = (-g_s * h_mm + g_mu * h_ms) / det;
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand_mu = mu + step * d_mu;
            let cand_s = s + step * d_s;
            let cand_ll = trunc_normal_mean_ll(&ys, tau, cand_mu, cand_s);
            if cand_ll.is_finite() && cand_ll >= ll - 1e-14 * ll.abs().max(1.0) {
                mu = cand_mu;
                s = cand_s;
                ll = cand_ll;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            need_fallback = true;
            break;
        }
    }

    if need_fallback {
        let (fmu, fs) = profile_bisection(&ys, tau, mean_y, var_y);
        mu = fmu;
        s = fs;
        let (g_mu, g_s) = trunc_normal_mean_grad(&ys, tau, mu, s);
        converged = g_mu.abs().max(g_s.abs()) < GRAD_TOL;
    }

    let (g_mu, g_s) = trunc_normal_mean_grad(&ys, tau, mu, s);
    let gradient_norm = g_mu.abs().max(g_s.abs());
    let sigma_sq = (2.0 * s).exp();
    let log_likelihood = trunc_normal_mean_ll(&ys, tau, mu, s) * nf;
    if !converged {
        return Err(Error::numeric(format!(
            "truncated log-normal fit did not converge after {iterations} iterations \
             (mean-gradient infinity norm {gradient_norm:.3e})"
        )));
    }
    Ok(TruncatedLogNormalFit {
        mu,
        sigma_sq,
        log_likelihood,
        n_points: n,
        converged,
        gradient_norm,
        iterations,
    })
}

/// For a fixed s, g_mu is strictly decreasing in mu, so the inner problem has
/// a unique root found by bracketed bisection.
fn solve_mu_given_s(ys: &[f64], tau: f64, s: f64, mu_guess: f64) -> f64 {
    let sigma = s.exp();
    let g = |mu: f64| trunc_normal_mean_grad(ys, tau, mu, s).0;
    let mut lo = mu_guess - sigma;
    let mut hi = mu_guess + sigma;
    let mut width = sigma;
    for _ in 0..200 {
        if g(lo) > 0.0 {
            break;
        }
        width *= 2.0;
        lo -= width;
    }
    width = sigma;
    for _ in 0..200 {
        if g(hi) < 0.0 {
            break;
        }
        width *= 2.0;
        hi += width;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Fallback optimizer: 50 bisection steps on s = ln sigma over the profile
/// likelihood (mu solved exactly for each s).
fn profile_bisection(ys: &[f64], tau: f64, mean_y: f64, var_y: f64) -> (f64, f64) {
    // d/ds of the profile likelihood equals g_s at (mu*(s), s).
    let h = |s: f64, guess: f64| -> (f64, f64) {
        let mu = solve_mu_given_s(ys, tau, s, guess);
        (trunc_normal_mean_grad(ys, tau, mu, s).1, mu)
    };
    let s0 = 0.5 * var_y.ln();
    let mut lo = s0 - 1.0;
    let mut hi = s0 + 1.0;
    let mut mu_guess = mean_y;
    let mut width = 1.0;
    for _ in 0..200 {
        let (v, mu) = h(lo, mu_guess);
        mu_guess = mu;
        if v > 0.0 {
            break;
        }
        width *= 2.0;
        lo -= width;
    }
    width = 1.0;
    for _ in 0..200 {
        let (v, mu) = h(hi, mu_guess);
        mu_guess = mu;
        if v < 0.0 {
            break;
        }
        width *= 2.0;
        hi += width;
    }
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        let (v, mu) = h(mid, mu_guess);
        mu_guess = mu;
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = 0.5 * (lo + hi);
    (solve_mu_given_s(ys, tau, s, mu_guess), s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn power_law_exact() {
        let xs: Vec<f64> = (1..=12).map(|r| r as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| 7.0 * x.powf(-2.0)).collect();
        let fit = fit_power_law(&xs, &ys).unwrap();
        assert!((fit.exponent - 2.0).abs() < 1e-12);
        assert!((fit.prefactor - 7.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn power_law_constant_ys() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [5.0, 5.0, 5.0, 5.0];
        let fit = fit_power_law(&xs, &ys).unwrap();
        assert!(fit.exponent.abs() < 1e-12);
        assert!((fit.prefactor - 5.0).abs() < 1e-12);
    }

    #[test]
    fn power_law_rejects_underdetermined_and_nonpositive() {
        assert!(fit_power_law(&[1.0], &[1.0]).is_err());
        assert!(fit_power_law(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(fit_power_law(&[1.0, 2.0, 3.0], &[1.0, -2.0, 3.0]).is_err());
        assert!(fit_power_law(&[1.0, 2.0, 3.0], &[1.0, 0.0, 3.0]).is_err());
    }

    #[test]
    fn power_law_scale_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let xs: Vec<f64> = (1..=12).map(|r| r as f64).collect();
            let ys: Vec<f64> = xs
                .iter()
                .map(|&x| 3.0 * x.powf(-1.3) * (1.0 + rng.gen_range(-0.05..0.05)))
                .collect();
            let base = fit_power_law(&xs, &ys).unwrap();
            let k = rng.gen_range(0.5..100.0);
            let scaled: Vec<f64> = ys.iter().map(|&y| k * y).collect();
            let fit = fit_power_law(&xs, &scaled).unwrap();
            assert!((fit.exponent - base.exponent).abs() < 1e-10);
            assert!((fit.prefactor - k * base.prefactor).abs() < 1e-9 * base.prefactor * k);
            assert!((fit.r_squared - base.r_squared).abs() < 1e-10);
        }
    }

    #[test]
    fn exponential_exact() {
        let xs: Vec<f64> = (0..10).map(|i| 500.0 + 700.0 * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| 3.0 * (-x / 4000.0).exp()).collect();
        let fit = fit_exponential(&xs, &ys).unwrap();
        assert!((fit.amplitude - 3.0).abs() / 3.0 < 1e-9);
        assert!((fit.decay_rate - 2.5e-4).abs() / 2.5e-4 < 1e-9);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exponential_constant_ys_gives_zero_rate() {
        let xs = [1.0, 2.0, 3.0];
        let ys = [4.0, 4.0, 4.0];
        let fit = fit_exponential(&xs, &ys).unwrap();
        assert!(fit.decay_rate.abs() < 1e-12);
    }

    #[test]
    fn exponential_rejects_nonpositive_y() {
        assert!(fit_exponential(&[1.0, 2.0, 3.0], &[1.0, -1.0, 1.0]).is_err());
    }

    #[test]
    fn linear_perfect_and_flat() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|&x| 2.5 * x - 1.0).collect();
        let fit = linear_regression_r2(&xs, &ys).unwrap();
        assert!((fit.slope - 2.5).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);

        // Zero sample covariance, nonconstant y: R^2 = 0.
        let ys2 = [1.0, 2.0, 2.0, 1.0];
        let fit2 = linear_regression_r2(&xs, &ys2).unwrap();
        assert!(fit2.slope.abs() < 1e-12);
        assert!(fit2.r_squared.abs() < 1e-12);
    }

    #[test]
    fn linear_rejects_zero_x_variance() {
        assert!(linear_regression_r2(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
    }

    fn sample_truncated_lognormal(
        rng: &mut ChaCha8Rng,
        mu: f64,
        sigma: f64,
        trunc: f64,
        n: usize,
    ) -> Vec<f64> {
        let normal = Normal::new(mu, sigma).unwrap();
        let ln_t = trunc.ln();
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let z: f64 = normal.sample(rng);
            if z >= ln_t {
                out.push(z.exp());
            }
        }
        out
    }

    #[test]
    fn untruncated_matches_moment_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let normal = Normal::new(0.4, 1.3).unwrap();
        let samples: Vec<f64> = (0..5000)
            .map(|_| {
                let z: f64 = normal.sample(&mut rng);
                z.exp()
            })
            .collect();
        let fit = fit_truncated_lognormal(&samples, 0.0).unwrap();
        let ys: Vec<f64> = samples.iter().map(|x| x.ln()).collect();
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let var = ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / ys.len() as f64;
        assert!((fit.mu - mean).abs() < 1e-9);
        assert!((fit.sigma_sq - var).abs() < 1e-9);
    }

    #[test]
    fn truncated_recovers_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples = sample_truncated_lognormal(&mut rng, 0.0, 1.0, 1.0, 100_000);
        let fit = fit_truncated_lognormal(&samples, 1.0).unwrap();
        assert!(fit.converged);
        assert!(fit.mu.abs() < 0.03, "mu = {}", fit.mu);
        assert!((fit.sigma_sq - 1.0).abs() < 0.15, "sigma_sq = {}", fit.sigma_sq);
        assert!(fit.gradient_norm < 1e-8);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let samples = sample_truncated_lognormal(&mut rng, 1.0, 1.4, 1.0, 2000);
        let ys: Vec<f64> = samples.iter().map(|x| x.ln()).collect();
        let (mu, s) = (0.7, 0.2);
        let (g_mu, g_s) = trunc_normal_mean_grad(&ys, 0.0, mu, s);
        let h = 1e-6;
        let fd_mu = (trunc_normal_mean_ll(&ys, 0.0, mu + h, s)
            - trunc_normal_mean_ll(&ys, 0.0, mu - h, s))
            / (2.0 * h);
        let fd_s = (trunc_normal_mean_ll(&ys, 0.0, mu, s + h)
            - trunc_normal_mean_ll(&ys, 0.0, mu, s - h))
            / (2.0 * h);
        assert!((g_mu - fd_mu).abs() / fd_mu.abs().max(1.0) < 1e-5);
        assert!((g_s - fd_s).abs() / fd_s.abs().max(1.0) < 1e-5);
    }

    #[test]
    fn degenerate_samples_rejected() {
        let samples = vec![3.0; 100];
        assert!(fit_truncated_lognormal(&samples, 1.0).is_err());
    }

    #[test]
    fn too_few_or_below_truncation_rejected() {
        let samples = vec![2.0; 10];
        assert!(fit_truncated_lognormal(&samples, 1.0).is_err());
        let mut ok: Vec<f64> = (0..50).map(|i| 1.5 + i as f64 * 0.1).collect();
        ok[7] = 0.5;
        assert!(fit_truncated_lognormal(&ok, 1.0).is_err());
    }

    #[test]
    fn mills_inverse_is_continuous_at_switch() {
        let below = mills_inverse(7.999_999);
        let above = mills_inverse(8.000_001);
        assert!((below - above).abs() < 1e-4, "{below} vs {above}");
    }
}
