//! Discrete DDPM noise schedule.
//!
//! Timesteps follow the usual convention: data lives at `t = 0`, the
//! forward variances `beta_t` are indexed `1..=T`, and `alpha_bar(0) = 1`.
//! Cumulative products are kept as prefix sums of `ln(alpha_t)` so that
//! long products and ratios of products never underflow.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{DpirError, Result};

/// Reverse-process variance parametrization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceParam {
    /// `sigma_t^2 = beta_t`
    #[default]
    Beta,
    /// `sigma_t^2 = (1 - alpha_bar(t-1)) / (1 - alpha_bar(t)) * beta_t`
    TildeBeta,
}

impl std::str::FromStr for VarianceParam {
    type Err = DpirError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "beta" => Ok(Self::Beta),
            "tilde_beta" | "tilde-beta" => Ok(Self::TildeBeta),
            other => Err(DpirError::InvalidParameter {
                name: "variance_param",
                reason: format!("unknown parametrization `{other}` (expected beta | tilde_beta)"),
            }),
        }
    }
}

impl std::fmt::Display for VarianceParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Beta => "beta",
            Self::TildeBeta => "tilde_beta",
        })
    }
}

/// Immutable noise schedule with every derived scalar sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    log_alphas: Vec<f64>,
    /// `log_alpha_bars[t] = sum_{s <= t} ln(alpha_s)`, length `T + 1`.
    log_alpha_bars: Vec<f64>,
    alpha_bars: Vec<f64>,
    variance_param: VarianceParam,
}

impl NoiseSchedule {
    /// Linear schedule `beta_t = beta_start + (t-1)/(T-1) * (beta_end - beta_start)`.
    pub fn linear(
        steps: usize,
        beta_start: f64,
        beta_end: f64,
        variance_param: VarianceParam,
    ) -> Result<Self> {
        if steps == 0 {
            return Err(DpirError::InvalidSchedule("T must be at least 1".into()));
        }
        if !(beta_start > 0.0 && beta_start < 1.0) || !(beta_end > 0.0 && beta_end < 1.0) {
            return Err(DpirError::InvalidSchedule(format!(
                "betas must lie in (0, 1), got [{beta_start}, {beta_end}]"
            )));
        }
        if beta_start > beta_end {
            return Err(DpirError::InvalidSchedule(format!(
                "beta_start {beta_start} exceeds beta_end {beta_end}"
            )));
        }
        let betas = if steps == 1 {
            vec![beta_start]
        } else {
            let span = beta_end - beta_start;
            let denom = (steps - 1) as f64;
            (0..steps)
                .map(|i| beta_start + (i as f64) / denom * span)
                .collect()
        };
        Self::from_betas(betas, variance_param)
    }

    /// Schedule from explicit betas, each strictly inside `(0, 1)`.
    pub fn from_betas(betas: Vec<f64>, variance_param: VarianceParam) -> Result<Self> {
        if let Some((i, b)) = betas
            .iter()
            .enumerate()
            .find(|(_, &b)| !(b > 0.0 && b < 1.0))
        {
            return Err(DpirError::InvalidSchedule(format!(
                "beta_{} = {b} is outside (0, 1)",
                i + 1
            )));
        }
        Self::build(betas, variance_param)
    }

    /// Like [`from_betas`](Self::from_betas) but also admits `beta_t = 1`,
    /// which drives `alpha_bar` to exactly zero from that step on. Only meant
    /// for limit checks on synthetic schedules.
    pub fn synthetic(betas: Vec<f64>, variance_param: VarianceParam) -> Result<Self> {
        if let Some((i, b)) = betas
            .iter()
            .enumerate()
            .find(|(_, &b)| !(b > 0.0 && b <= 1.0))
        {
            return Err(DpirError::InvalidSchedule(format!(
                "beta_{} = {b} is outside (0, 1]",
                i + 1
            )));
        }
        Self::build(betas, variance_param)
    }

    fn build(betas: Vec<f64>, variance_param: VarianceParam) -> Result<Self> {
        if betas.is_empty() {
            return Err(DpirError::InvalidSchedule("T must be at least 1".into()));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let log_alphas: Vec<f64> = betas.iter().map(|b| (-b).ln_1p()).collect();
        let mut log_alpha_bars = Vec::with_capacity(betas.len() + 1);
        log_alpha_bars.push(0.0);
        let mut acc = 0.0;
        for la in &log_alphas {
            acc += la;
            log_alpha_bars.push(acc);
        }
        let alpha_bars = log_alpha_bars.iter().map(|l| l.exp()).collect();
        Ok(Self {
            betas,
            alphas,
            log_alphas,
            log_alpha_bars,
            alpha_bars,
            variance_param,
        })
    }

    /// Same betas, different reverse-variance parametrization.
    pub fn with_variance_param(&self, variance_param: VarianceParam) -> Self {
        Self {
            variance_param,
            ..self.clone()
        }
    }

    /// Number of diffusion steps `T`.
    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn variance_param(&self) -> VarianceParam {
        self.variance_param
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn log_alphas(&self) -> &[f64] {
        &self.log_alphas
    }

    /// `ln alpha_bar(t)` for `t = 0..=T`.
    pub fn log_alpha_bars(&self) -> &[f64] {
        &self.log_alpha_bars
    }

    /// `alpha_bar(t)` for `t = 0..=T`.
    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub(crate) fn check_t(&self, t: usize, lo: usize) -> Result<()> {
        if t < lo || t > self.steps() {
            Err(DpirError::TimestepOutOfRange {
                t,
                lo,
                hi: self.steps(),
            })
        } else {
            Ok(())
        }
    }

    pub fn beta(&self, t: usize) -> Result<f64> {
        self.check_t(t, 1)?;
        Ok(self.betas[t - 1])
    }

    pub fn alpha(&self, t: usize) -> Result<f64> {
        self.check_t(t, 1)?;
        Ok(self.alphas[t - 1])
    }

    /// Cumulative signal retention `alpha_bar(t)`, `alpha_bar(0) = 1`.
    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.check_t(t, 0)?;
        Ok(self.alpha_bars[t])
    }

    /// `ln alpha_bar(t)`.
    pub fn log_alpha_bar(&self, t: usize) -> Result<f64> {
        self.check_t(t, 0)?;
        Ok(self.log_alpha_bars[t])
    }

    /// `1 - alpha_bar(t)` evaluated without cancellation.
    pub fn one_minus_alpha_bar(&self, t: usize) -> Result<f64> {
        self.check_t(t, 0)?;
        Ok(-self.log_alpha_bars[t].exp_m1())
    }

    /// Standard deviation of `x_t / sqrt(alpha_bar(t))` around `x_0`.
    pub fn tilde_sigma(&self, t: usize) -> Result<f64> {
        self.check_t(t, 1)?;
        Ok(self.tilde_sigma2_unchecked(t).sqrt())
    }

    pub(crate) fn tilde_sigma2_unchecked(&self, t: usize) -> f64 {
        // (1 - a) / a = exp(-ln a) - 1
        (-self.log_alpha_bars[t]).exp_m1()
    }

    /// Reverse-step variance `sigma_t^2` under this schedule's parametrization.
    pub fn reverse_sigma2(&self, t: usize) -> Result<f64> {
        self.check_t(t, 1)?;
        Ok(self.reverse_sigma2_unchecked(t))
    }

    pub(crate) fn reverse_sigma2_unchecked(&self, t: usize) -> f64 {
        let beta = self.betas[t - 1];
        match self.variance_param {
            VarianceParam::Beta => beta,
            VarianceParam::TildeBeta => {
                let num = -self.log_alpha_bars[t - 1].exp_m1();
                let den = -self.log_alpha_bars[t].exp_m1();
                num / den * beta
            }
        }
    }

    /// CSV dump `t,beta,alpha,alpha_bar,tilde_sigma,reverse_sigma2`, one row
    /// per `t = 1..=T`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,beta,alpha,alpha_bar,tilde_sigma,reverse_sigma2\n");
        for t in 1..=self.steps() {
            let _ = writeln!(
                out,
                "{t},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.betas[t - 1],
                self.alphas[t - 1],
                self.alpha_bars[t],
                self.tilde_sigma2_unchecked(t).sqrt(),
                self.reverse_sigma2_unchecked(t),
            );
        }
        out
    }
}
