//! Forward, reverse and merged reverse transition kernels.
//!
//! Every kernel is an isotropic Gaussian. The merged kernel collapses `k`
//! consecutive reverse posterior steps that share one `x0` estimate into a
//! single affine-Gaussian map
//!
//! ```text
//! x_{t-k} = c_x0 * x0 + c_xt * x_t + sqrt(var) * z
//! ```
//!
//! with `c_x0 = sum_i Gamma_{t-i-1}^{t-k+1} gamma_{t-i}`,
//! `c_xt = Gamma_t^{t-k+1}` and `var = sum_i (Gamma_{t-i-1}^{t-k+1})^2 sigma_{t-i}^2`.

use std::fmt::Write as _;

use nalgebra::DVector;

use crate::error::{check_dim, DpirError, Result};
use crate::schedule::NoiseSchedule;

/// Coefficients of the `k`-step merged reverse kernel starting at `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergedTransitionCoeffs {
    pub t: usize,
    pub k: usize,
    pub c_x0: f64,
    pub c_xt: f64,
    pub var: f64,
}

impl MergedTransitionCoeffs {
    pub fn mean(&self, xt: &DVector<f64>, x0: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(xt.len(), x0.len())?;
        Ok(x0 * self.c_x0 + xt * self.c_xt)
    }

    /// Draw `x_{t-k}` given a standard-normal `noise` vector.
    pub fn sample(
        &self,
        xt: &DVector<f64>,
        x0: &DVector<f64>,
        noise: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        check_dim(xt.len(), noise.len())?;
        Ok(self.mean(xt, x0)? + noise * self.var.sqrt())
    }

    /// Target timestep `t - k`.
    pub fn target(&self) -> usize {
        self.t - self.k
    }
}

/// Isotropic Gaussian transition.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStep {
    pub mean: DVector<f64>,
    pub stddev: f64,
}

/// `gamma_t = sqrt(alpha_bar(t-1)) * beta_t / (1 - alpha_bar(t))`, the `x0`
/// coefficient of a single reverse posterior step.
pub fn gamma_small(s: &NoiseSchedule, t: usize) -> Result<f64> {
    s.check_t(t, 1)?;
    Ok(gamma_small_unchecked(s, t))
}

fn gamma_small_unchecked(s: &NoiseSchedule, t: usize) -> f64 {
    let lab = s.log_alpha_bars();
    (0.5 * lab[t - 1]).exp() * s.betas()[t - 1] / -lab[t].exp_m1()
}

/// `Gamma_i^j = sqrt(prod_{n=j..i} alpha_n) * (1 - alpha_bar(j-1)) / (1 - alpha_bar(i))`
/// for `i >= j`, and `1` for `i < j`.
pub fn gamma_cap(s: &NoiseSchedule, i: usize, j: usize) -> Result<f64> {
    if j == 0 || j > s.steps() + 1 {
        return Err(DpirError::TimestepOutOfRange {
            t: j,
            lo: 1,
            hi: s.steps() + 1,
        });
    }
    s.check_t(i, 0)?;
    Ok(gamma_cap_unchecked(s, i, j))
}

fn gamma_cap_unchecked(s: &NoiseSchedule, i: usize, j: usize) -> f64 {
    if i < j {
        return 1.0;
    }
    let lab = s.log_alpha_bars();
    let root = (0.5 * (lab[i] - lab[j - 1])).exp();
    root * (-lab[j - 1].exp_m1()) / (-lab[i].exp_m1())
}

/// Merged `k`-step reverse kernel from `t` to `t - k`.
pub fn merged_coeffs(s: &NoiseSchedule, t: usize, k: usize) -> Result<MergedTransitionCoeffs> {
    s.check_t(t, 1)?;
    if k == 0 || k > t {
        return Err(DpirError::InvalidMerge { t, k });
    }
    let j = t - k + 1;
    let mut c_x0 = 0.0;
    let mut var = 0.0;
    for i in 0..k {
        let g = gamma_cap_unchecked(s, t - i - 1, j);
        c_x0 += g * gamma_small_unchecked(s, t - i);
        var += g * g * s.reverse_sigma2_unchecked(t - i);
    }
    Ok(MergedTransitionCoeffs {
        t,
        k,
        c_x0,
        c_xt: gamma_cap_unchecked(s, t, j),
        var,
    })
}

/// CSV dump `t,k,c_x0,c_xt,var` for the requested `(t, k)` pairs.
pub fn merged_coeffs_csv(s: &NoiseSchedule, pairs: &[(usize, usize)]) -> Result<String> {
    let mut out = String::from("t,k,c_x0,c_xt,var\n");
    for &(t, k) in pairs {
        let c = merged_coeffs(s, t, k)?;
        let _ = writeln!(out, "{t},{k},{:.16e},{:.16e},{:.16e}", c.c_x0, c.c_xt, c.var);
    }
    Ok(out)
}

/// `q(x_t | x_0) = N(sqrt(alpha_bar(t)) x0, (1 - alpha_bar(t)) I)`.
pub fn forward_marginal(s: &NoiseSchedule, x0: &DVector<f64>, t: usize) -> Result<GaussianStep> {
    let ab = s.alpha_bar(t)?;
    s.check_t(t, 1)?;
    Ok(GaussianStep {
        mean: x0 * ab.sqrt(),
        stddev: s.one_minus_alpha_bar(t)?.sqrt(),
    })
}

/// One reverse posterior step `x_t -> x_{t-1}` with an `x0` estimate.
/// Without noise the posterior mean is returned.
pub fn posterior_step(
    s: &NoiseSchedule,
    xt: &DVector<f64>,
    x0_hat: &DVector<f64>,
    t: usize,
    noise: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    let c = merged_coeffs(s, t, 1)?;
    match noise {
        Some(z) => c.sample(xt, x0_hat, z),
        None => c.mean(xt, x0_hat),
    }
}

/// Conditional score from an `x0` estimate:
/// `(sqrt(alpha_bar(t)) x0_hat - x_t) / (1 - alpha_bar(t))`.
pub fn score_from_x0(
    s: &NoiseSchedule,
    x0_hat: &DVector<f64>,
    xt: &DVector<f64>,
    t: usize,
) -> Result<DVector<f64>> {
    s.check_t(t, 1)?;
    check_dim(xt.len(), x0_hat.len())?;
    let ab = s.alpha_bar(t)?;
    let den = s.one_minus_alpha_bar(t)?;
    Ok((x0_hat * ab.sqrt() - xt) / den)
}

/// Posterior mean written through the score:
/// `(x_t + (1 - alpha_t) score) / sqrt(alpha_t)`.
pub fn mean_from_score(
    s: &NoiseSchedule,
    xt: &DVector<f64>,
    score: &DVector<f64>,
    t: usize,
) -> Result<DVector<f64>> {
    check_dim(xt.len(), score.len())?;
    let beta = s.beta(t)?;
    let alpha = s.alpha(t)?;
    Ok((xt + score * beta) / alpha.sqrt())
}

/// Variance injected by a DDIM step from `t` to `t_next` at stochasticity `eta`.
pub fn ddim_sigma2(s: &NoiseSchedule, t: usize, t_next: usize, eta: f64) -> Result<f64> {
    s.check_t(t, 1)?;
    if t_next >= t {
        return Err(DpirError::InvalidParameter {
            name: "t_next",
            reason: format!("t_next = {t_next} must be below t = {t}"),
        });
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(DpirError::InvalidParameter {
            name: "eta",
            reason: format!("{eta} is outside [0, 1]"),
        });
    }
    let lab = s.log_alpha_bars();
    let ratio = s.one_minus_alpha_bar(t_next)? / s.one_minus_alpha_bar(t)?;
    // 1 - alpha_bar(t) / alpha_bar(t_next) = -expm1(ln ab_t - ln ab_next)
    let step = -(lab[t] - lab[t_next]).exp_m1();
    Ok(eta * eta * ratio * step)
}

/// DDIM update from `t` to `t_next < t`:
///
/// `x_next = sqrt(ab_next) x0 + sqrt(1 - ab_next - sd^2) (x_t - sqrt(ab_t) x0) / sqrt(1 - ab_t) + sd z`
///
/// `eta = 0` is deterministic and ignores `noise`.
pub fn ddim_step(
    s: &NoiseSchedule,
    xt: &DVector<f64>,
    x0_hat: &DVector<f64>,
    t: usize,
    t_next: usize,
    eta: f64,
    noise: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    check_dim(xt.len(), x0_hat.len())?;
    let sd2 = ddim_sigma2(s, t, t_next, eta)?;
    let ab_t = s.alpha_bar(t)?;
    let ab_next = s.alpha_bar(t_next)?;
    let mut dir2 = s.one_minus_alpha_bar(t_next)? - sd2;
    if dir2 < 0.0 {
        // eta <= 1 keeps this nonnegative up to rounding
        if dir2 < -1e-12 {
            return Err(DpirError::DdimParametrization(dir2));
        }
        dir2 = 0.0;
    }
    let eps_hat = (xt - x0_hat * ab_t.sqrt()) / s.one_minus_alpha_bar(t)?.sqrt();
    let mut next = x0_hat * ab_next.sqrt() + eps_hat * dir2.sqrt();
    if sd2 > 0.0 {
        if let Some(z) = noise {
            check_dim(xt.len(), z.len())?;
            next += z * sd2.sqrt();
        }
    }
    Ok(next)
}
