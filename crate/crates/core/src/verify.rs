//! Property suites behind `dpir verify`.
//!
//! Each suite compares a closed form against an independent computation
//! (brute-force composition, direct Gaussian conditioning, Monte Carlo) and
//! reports the worst error next to its tolerance.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kernels::{ddim_sigma2, ddim_step, merged_coeffs, score_from_x0};
use crate::oracle::{mc_trace_quadratic, trace_quadratic, LinearGaussianWorld};
use crate::rng::{standard_normal_vec, stream_rng};
use crate::schedule::{NoiseSchedule, VarianceParam};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub max_error: f64,
    pub tolerance: f64,
}

impl CheckResult {
    /// Passes when `max_error < tolerance`.
    pub fn below(name: impl Into<String>, max_error: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            passed: max_error < tolerance,
            max_error,
            tolerance,
        }
    }

    /// Passes when `max_error <= tolerance`.
    pub fn within(name: impl Into<String>, max_error: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            passed: max_error <= tolerance,
            max_error,
            tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<CheckResult>,
    pub runtime_ms: u128,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// One line per check: `PASS name max_error=... tol=...`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!(
                "{} {}/{} max_error={:.3e} tol={:.3e}\n",
                if c.passed { "PASS" } else { "FAIL" },
                self.suite,
                c.name,
                c.max_error,
                c.tolerance
            ));
        }
        out.push_str(&format!(
            "{} {} ({} ms)\n",
            if self.passed() { "PASS" } else { "FAIL" },
            self.suite,
            self.runtime_ms
        ));
        out
    }
}

/// `|a - b| / |b|`, with `0` when both are exactly equal.
pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }
}

/// `(c_x0, c_xt, var)` of `k` chained single reverse steps from `t`, each
/// built directly from `alpha_bar` and composed as affine-Gaussian maps.
pub fn brute_force_composition(s: &NoiseSchedule, t: usize, k: usize) -> (f64, f64, f64) {
    let ab = s.alpha_bars();
    let (mut a, mut b, mut v) = (0.0, 1.0, 0.0);
    for u in ((t - k + 1)..=t).rev() {
        let beta = s.betas()[u - 1];
        let c0 = ab[u - 1].sqrt() * beta / (1.0 - ab[u]);
        let c1 = (1.0 - beta).sqrt() * (1.0 - ab[u - 1]) / (1.0 - ab[u]);
        let sigma2 = match s.variance_param() {
            VarianceParam::Beta => beta,
            VarianceParam::TildeBeta => beta * (1.0 - ab[u - 1]) / (1.0 - ab[u]),
        };
        a = c0 + c1 * a;
        b *= c1;
        v = c1 * c1 * v + sigma2;
    }
    (a, b, v)
}

/// `(t, k)` pairs: the fixed anchors plus random pairs up to `count`.
pub fn lemma2_pairs(big_t: usize, count: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(usize, usize)> = [(big_t, 5), (big_t, 250), (big_t, big_t), (1, 1), (big_t, 1)]
        .into_iter()
        .filter(|&(t, k)| k <= t && t <= big_t)
        .collect();
    if big_t >= 1000 {
        pairs.push((1000, 995));
        pairs.push((1000, 750));
    }
    pairs.sort_unstable();
    pairs.dedup();
    let mut rng = stream_rng(seed, 2);
    while pairs.len() < count {
        let t = rng.random_range(1..=big_t);
        let k = rng.random_range(1..=t);
        pairs.push((t, k));
    }
    pairs
}

/// Merged kernel against brute-force composition, both parametrizations.
pub fn lemma2(big_t: usize, pairs: usize, seed: u64, tol: f64) -> Result<SuiteReport> {
    let start = Instant::now();
    let mut checks = Vec::new();
    for vp in [VarianceParam::Beta, VarianceParam::TildeBeta] {
        let s = NoiseSchedule::linear(big_t, 1e-4, 2e-2, vp)?;
        let (mut e0, mut e1, mut ev) = (0.0f64, 0.0f64, 0.0f64);
        for (t, k) in lemma2_pairs(big_t, pairs, seed) {
            let m = merged_coeffs(&s, t, k)?;
            let (a, b, v) = brute_force_composition(&s, t, k);
            e0 = e0.max(rel_err(m.c_x0, a));
            e1 = e1.max(rel_err(m.c_xt, b));
            ev = ev.max(rel_err(m.var, v));
        }
        checks.push(CheckResult::below(format!("{vp}/c_x0"), e0, tol));
        checks.push(CheckResult::below(format!("{vp}/c_xt"), e1, tol));
        checks.push(CheckResult::below(format!("{vp}/var"), ev, tol));
    }
    Ok(SuiteReport {
        suite: "lemma2".into(),
        checks,
        runtime_ms: start.elapsed().as_millis(),
    })
}

/// Conditional score through the fused `x0` estimate against the direct
/// Gaussian score of `p(x_t | y)` on random worlds.
pub fn lemma1(worlds: usize, seed: u64, tol: f64) -> Result<SuiteReport> {
    let start = Instant::now();
    let s = NoiseSchedule::linear(1000, 1e-4, 2e-2, VarianceParam::Beta)?;
    let mut rng = stream_rng(seed, 1);
    let mut worst = 0.0f64;
    for i in 0..worlds {
        let n = rng.random_range(1..=16);
        let m = rng.random_range(1..=24);
        let w = LinearGaussianWorld::random(n, m, seed.wrapping_add(i as u64), 1.0)?;
        let x0 = w.sample_prior(&mut rng);
        let y = w.observe(&x0, &mut rng)?;
        let t = rng.random_range(1..=s.steps());
        let ab = s.alpha_bar(t)?;
        let xt = &x0 * ab.sqrt() + standard_normal_vec(&mut rng, n) * s.one_minus_alpha_bar(t)?.sqrt();
        let x0_hat = w.cond_x0_given_y_xt(&s, &y, &xt, t)?.mean;
        let via_x0 = score_from_x0(&s, &x0_hat, &xt, t)?;
        let direct = w.analytic_score_xt_given_y(&s, &y, &xt, t)?;
        worst = worst.max((via_x0 - direct).amax());
    }
    Ok(SuiteReport {
        suite: "lemma1".into(),
        checks: vec![CheckResult::below("score_max_abs", worst, tol)],
        runtime_ms: start.elapsed().as_millis(),
    })
}

/// Activation-step existence, the inequality above it, and Monte-Carlo
/// agreement of both sides.
pub fn prop1(worlds: usize, draws: usize, seed: u64, std_errs: f64) -> Result<SuiteReport> {
    let start = Instant::now();
    let s = NoiseSchedule::linear(1000, 1e-4, 2e-2, VarianceParam::Beta)?;
    let weights: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    let mut rng = stream_rng(seed, 3);
    let mut missing_tau = 0usize;
    let mut worst_violation = 0.0f64;
    let mut worst_lhs_z = 0.0f64;
    let mut worst_rhs_z = 0.0f64;
    for i in 0..worlds {
        let n = rng.random_range(2..=8);
        let m = rng.random_range(2..=8);
        let w = LinearGaussianWorld::random(n, m, seed.wrapping_add(100 + i as u64), 1.0)?;
        let x0 = w.sample_prior(&mut rng);
        let lhs = w.prop1_lhs(&x0)?;
        let mc_seed = seed.wrapping_mul(31).wrapping_add(i as u64);
        worst_lhs_z = worst_lhs_z.max(w.mc_prop1_lhs(&x0, draws, mc_seed)?.z_score(lhs));
        for &wt in &weights {
            match w.find_tau(&s, &x0, wt)? {
                None => missing_tau += 1,
                Some(tau) => {
                    for t in (tau + 1)..=s.steps() {
                        let rhs = w.prop1_rhs(&s, &x0, wt, t)?;
                        worst_violation = worst_violation.max(lhs - rhs);
                    }
                    let t = (tau + 1).min(s.steps());
                    let rhs = w.prop1_rhs(&s, &x0, wt, t)?;
                    let mc = w.mc_prop1_rhs(&s, &x0, wt, t, draws, mc_seed)?;
                    worst_rhs_z = worst_rhs_z.max(mc.z_score(rhs));
                }
            }
        }
    }
    Ok(SuiteReport {
        suite: "prop1".into(),
        checks: vec![
            CheckResult::within("tau_missing", missing_tau as f64, 0.0),
            CheckResult::within("inequality_violation", worst_violation, 0.0),
            CheckResult::within("lhs_mc_z", worst_lhs_z, std_errs),
            CheckResult::within("rhs_mc_z", worst_rhs_z, std_errs),
        ],
        runtime_ms: start.elapsed().as_millis(),
    })
}

/// `E[xᵀBx] = Σ sigma_i² B_ii` for `x ~ N(0, diag(sigma²))`, against Monte Carlo.
pub fn trace_lemma(pairs: usize, n: usize, draws: usize, seed: u64, std_errs: f64) -> Result<SuiteReport> {
    let start = Instant::now();
    let mut rng = stream_rng(seed, 4);
    let mut worst = 0.0f64;
    for i in 0..pairs {
        let sigma = DVector::from_fn(n, |_, _| rng.random_range(0.2..2.0));
        let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let exact = trace_quadratic(&sigma, &b)?;
        let mc = mc_trace_quadratic(&sigma, &b, draws, seed.wrapping_add(i as u64))?;
        worst = worst.max(mc.z_score(exact));
    }
    Ok(SuiteReport {
        suite: "trace".into(),
        checks: vec![CheckResult::within("mc_z", worst, std_errs)],
        runtime_ms: start.elapsed().as_millis(),
    })
}

/// DDIM special cases: the deterministic fixed point, the one-step
/// `eta = 1` variance, and the stride-5 step count.
pub fn ddim(big_t: usize, seed: u64, tol: f64) -> Result<SuiteReport> {
    let start = Instant::now();
    let s = NoiseSchedule::linear(big_t, 1e-4, 2e-2, VarianceParam::TildeBeta)?;
    let mut rng = stream_rng(seed, 5);
    let x0 = standard_normal_vec(&mut rng, 3);

    let mut fixed_point = 0.0f64;
    let mut var_err = 0.0f64;
    for t in 1..=big_t {
        let xt = &x0 * s.alpha_bar(t)?.sqrt();
        for t_next in [t - 1, t / 2] {
            let next = ddim_step(&s, &xt, &x0, t, t_next, 0.0, None)?;
            let want = &x0 * s.alpha_bar(t_next)?.sqrt();
            fixed_point = fixed_point.max((next - want).amax());
        }
        var_err = var_err.max(rel_err(ddim_sigma2(&s, t, t - 1, 1.0)?, s.reverse_sigma2(t)?));
    }

    let tau = 250.min(big_t);
    let mut steps = 0usize;
    let mut t = tau;
    let mut x = standard_normal_vec(&mut rng, 3);
    while t > 0 {
        let t_next = t.saturating_sub(5);
        x = ddim_step(&s, &x, &x0, t, t_next, 0.0, None)?;
        t = t_next;
        steps += 1;
    }
    let expected_steps = tau.div_ceil(5);
    Ok(SuiteReport {
        suite: "ddim".into(),
        checks: vec![
            CheckResult::below("eta0_fixed_point", fixed_point, tol),
            CheckResult::below("eta1_tilde_variance_rel", var_err, tol),
            CheckResult::within("stride5_step_count", steps.abs_diff(expected_steps) as f64, 0.0),
            CheckResult::below("stride5_lands_on_x0", (x - &x0).amax(), tol),
        ],
        runtime_ms: start.elapsed().as_millis(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suites_pass() {
        let r = lemma2(50, 40, 3, 1e-10).unwrap();
        assert!(r.passed(), "{}", r.render());
        let r = ddim(100, 1, 1e-10).unwrap();
        assert!(r.passed(), "{}", r.render());
        let r = lemma1(10, 2, 1e-8).unwrap();
        assert!(r.passed(), "{}", r.render());
    }

    #[test]
    fn failing_tolerance_is_reported() {
        let r = trace_lemma(2, 3, 1000, 1, -1.0).unwrap();
        assert!(!r.passed());
        assert!(r.render().contains("FAIL trace"));
    }

    #[test]
    fn anchor_pairs_are_present() {
        let p = lemma2_pairs(1000, 200, 7);
        assert_eq!(p.len(), 200);
        assert!(p.contains(&(1000, 995)) && p.contains(&(1000, 750)));
        assert!(p.iter().all(|&(t, k)| 1 <= k && k <= t && t <= 1000));
    }
}
