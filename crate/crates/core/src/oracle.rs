//! Linear-Gaussian ground truth.
//!
//! With a Gaussian prior `x0 ~ N(mu0, Sigma0)` and the linear observation
//! `y = A x0 + n`, `n ~ N(0, sigma_y^2 I)`, every conditional expectation the
//! sampler needs is available in closed form. This module builds such worlds
//! and exposes the analytic conditionals, the conditional score, and the
//! back-projection error bounds used to reason about the activation step.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, DpirError, Result};
use crate::rng::{standard_normal_vec, stream_rng, StreamRng};
use crate::schedule::NoiseSchedule;
use crate::stats::{mc_mean, McEstimate};

const SPECTRAL_SLACK: f64 = 1e-12;
const PSD_FLOOR: f64 = -1e-10;

/// Prior and observation operator of a linear inverse problem.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianWorld {
    mu0: DVector<f64>,
    sigma0: DMatrix<f64>,
    a: DMatrix<f64>,
    sigma_y: f64,
    seed: Option<u64>,
    allow_violations: bool,
}

impl LinearGaussianWorld {
    /// Validated world. `‖A‖₂ ≤ 1` and `0 < sigma_y ≤ 1` are enforced unless
    /// `allow_violations` is set; `Sigma0` must always be symmetric positive
    /// definite.
    pub fn new(
        mu0: DVector<f64>,
        sigma0: DMatrix<f64>,
        a: DMatrix<f64>,
        sigma_y: f64,
        allow_violations: bool,
    ) -> Result<Self> {
        let n = mu0.len();
        if n == 0 || a.nrows() == 0 {
            return Err(DpirError::WorldPrecondition("N and M must be >= 1".into()));
        }
        if sigma0.shape() != (n, n) {
            return Err(DpirError::WorldPrecondition(format!(
                "Sigma0 is {:?}, expected ({n}, {n})",
                sigma0.shape()
            )));
        }
        check_dim(n, a.ncols())?;
        let asym = (&sigma0 - sigma0.transpose()).amax();
        if asym > 1e-12 * sigma0.amax().max(1.0) {
            return Err(DpirError::WorldPrecondition(format!(
                "Sigma0 is not symmetric (max asymmetry {asym:e})"
            )));
        }
        let min_eig = SymmetricEigen::new(sigma0.clone()).eigenvalues.min();
        if min_eig <= 0.0 {
            return Err(DpirError::WorldPrecondition(format!(
                "Sigma0 is not positive definite (min eigenvalue {min_eig:e})"
            )));
        }
        if !(sigma_y > 0.0) || !sigma_y.is_finite() {
            return Err(DpirError::WorldPrecondition(format!(
                "sigma_y must be positive and finite, got {sigma_y}"
            )));
        }
        if !allow_violations {
            let norm = spectral_norm(&a);
            if norm > 1.0 + SPECTRAL_SLACK {
                return Err(DpirError::WorldPrecondition(format!(
                    "‖A‖₂ = {norm} exceeds 1"
                )));
            }
            if sigma_y > 1.0 {
                return Err(DpirError::WorldPrecondition(format!(
                    "sigma_y = {sigma_y} exceeds 1"
                )));
            }
        }
        Ok(Self {
            mu0,
            sigma0,
            a,
            sigma_y,
            seed: None,
            allow_violations,
        })
    }

    /// `A = I`, `Sigma0 = I`, `mu0 = 0`.
    pub fn identity(n: usize, sigma_y: f64) -> Result<Self> {
        Self::new(
            DVector::zeros(n),
            DMatrix::identity(n, n),
            DMatrix::identity(n, n),
            sigma_y,
            sigma_y > 1.0,
        )
    }

    /// Random world, deterministic under `seed`. `A` is a Gaussian matrix
    /// rescaled to spectral norm `spectral_cap`; `Sigma0` has a random
    /// eigenbasis with eigenvalues in `[0.1, 2]`; `sigma_y` is drawn from
    /// `[0.05, 1]`.
    pub fn random(n: usize, m: usize, seed: u64, spectral_cap: f64) -> Result<Self> {
        Self::random_impl(n, m, seed, spectral_cap, false)
    }

    /// As [`random`](Self::random) but allows `spectral_cap > 1`.
    pub fn random_unchecked(n: usize, m: usize, seed: u64, spectral_cap: f64) -> Result<Self> {
        Self::random_impl(n, m, seed, spectral_cap, true)
    }

    fn random_impl(
        n: usize,
        m: usize,
        seed: u64,
        spectral_cap: f64,
        allow_violations: bool,
    ) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(DpirError::WorldPrecondition("N and M must be >= 1".into()));
        }
        if !(spectral_cap > 0.0) {
            return Err(DpirError::InvalidParameter {
                name: "spectral_cap",
                reason: format!("must be positive, got {spectral_cap}"),
            });
        }
        if spectral_cap > 1.0 && !allow_violations {
            return Err(DpirError::WorldPrecondition(format!(
                "spectral_cap = {spectral_cap} exceeds 1"
            )));
        }
        let mut rng = stream_rng(seed, 0);
        let raw = DMatrix::from_fn(m, n, |_, _| crate::rng::standard_normal(&mut rng));
        let a = &raw * (spectral_cap / spectral_norm(&raw));

        let g = DMatrix::from_fn(n, n, |_, _| crate::rng::standard_normal(&mut rng));
        let q = g.qr().q();
        let eigs = DVector::from_fn(n, |_, _| rng.random_range(0.1..=2.0));
        let mut sigma0 = &q * DMatrix::from_diagonal(&eigs) * q.transpose();
        symmetrize(&mut sigma0);

        let mu0 = standard_normal_vec(&mut rng, n) * 0.5;
        let sigma_y = rng.random_range(0.05..=1.0);
        let mut world = Self::new(mu0, sigma0, a, sigma_y, allow_violations)?;
        world.seed = Some(seed);
        Ok(world)
    }

    pub fn with_sigma_y(mut self, sigma_y: f64) -> Result<Self> {
        let allow = self.allow_violations || sigma_y > 1.0;
        let seed = self.seed;
        self = Self::new(self.mu0, self.sigma0, self.a, sigma_y, allow)?;
        self.seed = seed;
        Ok(self)
    }

    pub fn signal_dim(&self) -> usize {
        self.mu0.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn mu0(&self) -> &DVector<f64> {
        &self.mu0
    }

    pub fn sigma0(&self) -> &DMatrix<f64> {
        &self.sigma0
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn sigma_y(&self) -> f64 {
        self.sigma_y
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Draw `x0` from the prior.
    pub fn sample_prior(&self, rng: &mut StreamRng) -> DVector<f64> {
        let l = self
            .sigma0
            .clone()
            .cholesky()
            .expect("Sigma0 validated positive definite")
            .unpack();
        &self.mu0 + l * standard_normal_vec(rng, self.signal_dim())
    }

    /// `y = A x0 + n`.
    pub fn observe(&self, x0: &DVector<f64>, rng: &mut StreamRng) -> Result<DVector<f64>> {
        check_dim(self.signal_dim(), x0.len())?;
        Ok(&self.a * x0 + standard_normal_vec(rng, self.obs_dim()) * self.sigma_y)
    }

    /// `x0 | y`.
    pub fn cond_x0_given_y(&self, y: &DVector<f64>) -> Result<GaussianDist> {
        check_dim(self.obs_dim(), y.len())?;
        let noise = DVector::from_element(self.obs_dim(), self.sigma_y * self.sigma_y);
        condition_linear(&self.mu0, &self.sigma0, &self.a, &noise, y)
    }

    /// `x0 | x_t` under `x_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps`; `t = 0` is
    /// the noiseless observation.
    pub fn cond_x0_given_xt(
        &self,
        s: &NoiseSchedule,
        xt: &DVector<f64>,
        t: usize,
    ) -> Result<GaussianDist> {
        check_dim(self.signal_dim(), xt.len())?;
        let n = self.signal_dim();
        let ab = s.alpha_bar(t)?;
        let h = DMatrix::identity(n, n) * ab.sqrt();
        let noise = DVector::from_element(n, s.one_minus_alpha_bar(t)?);
        condition_linear(&self.mu0, &self.sigma0, &h, &noise, xt)
    }

    /// `x0 | (y, x_t)`: conditioning on the stacked observation.
    pub fn cond_x0_given_y_xt(
        &self,
        s: &NoiseSchedule,
        y: &DVector<f64>,
        xt: &DVector<f64>,
        t: usize,
    ) -> Result<GaussianDist> {
        check_dim(self.obs_dim(), y.len())?;
        check_dim(self.signal_dim(), xt.len())?;
        let (n, m) = (self.signal_dim(), self.obs_dim());
        let ab = s.alpha_bar(t)?;
        let mut h = DMatrix::zeros(m + n, n);
        h.rows_mut(0, m).copy_from(&self.a);
        h.rows_mut(m, n).fill_diagonal(ab.sqrt());
        let mut noise = DVector::zeros(m + n);
        noise.rows_mut(0, m).fill(self.sigma_y * self.sigma_y);
        noise.rows_mut(m, n).fill(s.one_minus_alpha_bar(t)?);
        let mut z = DVector::zeros(m + n);
        z.rows_mut(0, m).copy_from(y);
        z.rows_mut(m, n).copy_from(xt);
        condition_linear(&self.mu0, &self.sigma0, &h, &noise, &z)
    }

    /// `∇_{x_t} ln p(x_t | y)`: `x_t | y ~ N(sqrt(ab) m, ab C + (1 - ab) I)`.
    pub fn analytic_score_xt_given_y(
        &self,
        s: &NoiseSchedule,
        y: &DVector<f64>,
        xt: &DVector<f64>,
        t: usize,
    ) -> Result<DVector<f64>> {
        check_dim(self.signal_dim(), xt.len())?;
        let post = self.cond_x0_given_y(y)?;
        let ab = s.alpha_bar(t)?;
        let n = self.signal_dim();
        let cov = &post.cov * ab + DMatrix::identity(n, n) * s.one_minus_alpha_bar(t)?;
        let chol = cov
            .cholesky()
            .ok_or(DpirError::NotPositiveDefinite("cov(x_t | y)"))?;
        let resid = xt - &post.mean * ab.sqrt();
        Ok(-chol.solve(&resid))
    }

    /// `E_{y|x0} ‖x0 - Aᵀy‖² = ‖(I - AᵀA) x0‖² + sigma_y² ‖A‖_F²`.
    pub fn prop1_lhs(&self, x0: &DVector<f64>) -> Result<f64> {
        check_dim(self.signal_dim(), x0.len())?;
        let ata_x = self.a.transpose() * (&self.a * x0);
        let delta = x0 - ata_x;
        Ok(delta.norm_squared() + self.sigma_y * self.sigma_y * self.a.norm_squared())
    }

    /// `E_{y,x_t|x0} ‖x0 - (w Aᵀy + (1-w) x̃_t)‖² = w² lhs + (1-w)² σ̃_t² N`.
    pub fn prop1_rhs(&self, s: &NoiseSchedule, x0: &DVector<f64>, w: f64, t: usize) -> Result<f64> {
        check_open_weight(w)?;
        let lhs = self.prop1_lhs(x0)?;
        let st2 = s.tilde_sigma(t)?.powi(2);
        Ok(w * w * lhs + (1.0 - w) * (1.0 - w) * st2 * self.signal_dim() as f64)
    }

    /// Smallest `tau` such that `prop1_lhs <= prop1_rhs` for every `t > tau`.
    ///
    /// `Some(0)` means the inequality holds at every `t >= 1`; `None` means it
    /// fails even at `t = T`, so no activation step exists on this schedule.
    pub fn find_tau(&self, s: &NoiseSchedule, x0: &DVector<f64>, w: f64) -> Result<Option<usize>> {
        check_open_weight(w)?;
        let lhs = self.prop1_lhs(x0)?;
        let holds = |t: usize| -> Result<bool> { Ok(lhs <= self.prop1_rhs(s, x0, w, t)?) };
        let big_t = s.steps();
        if !holds(big_t)? {
            return Ok(None);
        }
        // sigma_tilde grows with t, so the predicate is monotone.
        let (mut lo, mut hi) = (1usize, big_t);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if holds(mid)? {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        Ok(Some(lo - 1))
    }

    /// Monte-Carlo estimate of `prop1_lhs` over observation noise draws.
    pub fn mc_prop1_lhs(&self, x0: &DVector<f64>, draws: usize, seed: u64) -> Result<McEstimate> {
        check_dim(self.signal_dim(), x0.len())?;
        let ax = &self.a * x0;
        let at = self.a.transpose();
        Ok(mc_mean(draws, seed, |rng| {
            let y = &ax + standard_normal_vec(rng, self.obs_dim()) * self.sigma_y;
            (x0 - &at * y).norm_squared()
        }))
    }

    /// Monte-Carlo estimate of `prop1_rhs` over joint `(n, eps_t)` draws.
    pub fn mc_prop1_rhs(
        &self,
        s: &NoiseSchedule,
        x0: &DVector<f64>,
        w: f64,
        t: usize,
        draws: usize,
        seed: u64,
    ) -> Result<McEstimate> {
        check_open_weight(w)?;
        check_dim(self.signal_dim(), x0.len())?;
        let ab = s.alpha_bar(t)?;
        let one_m = s.one_minus_alpha_bar(t)?;
        let ax = &self.a * x0;
        let at = self.a.transpose();
        let n = self.signal_dim();
        Ok(mc_mean(draws, seed, |rng| {
            let y = &ax + standard_normal_vec(rng, self.obs_dim()) * self.sigma_y;
            let xt = x0 * ab.sqrt() + standard_normal_vec(rng, n) * one_m.sqrt();
            let est = &at * y * w + xt * ((1.0 - w) / ab.sqrt());
            (x0 - est).norm_squared()
        }))
    }
}

fn check_open_weight(w: f64) -> Result<()> {
    if w > 0.0 && w < 1.0 {
        Ok(())
    } else {
        Err(DpirError::InvalidParameter {
            name: "w",
            reason: format!("{w} is outside (0, 1)"),
        })
    }
}

/// Multivariate Gaussian carrier.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDist {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianDist {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `mean + L z` with `L` the Cholesky factor of `cov` (eigen-factor for
    /// singular covariances).
    pub fn sample(&self, rng: &mut impl Rng) -> DVector<f64> {
        let z = standard_normal_vec(rng, self.dim());
        &self.mean + self.factor() * z
    }

    fn factor(&self) -> DMatrix<f64> {
        match self.cov.clone().cholesky() {
            Some(c) => c.unpack(),
            None => {
                let eig = SymmetricEigen::new(self.cov.clone());
                let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
                &eig.eigenvectors * DMatrix::from_diagonal(&roots)
            }
        }
    }
}

/// Condition `x ~ N(mu, sigma)` on `z = H x + v`, `v ~ N(0, diag(noise))`.
///
/// Innovation form with a Cholesky solve; the returned covariance is
/// symmetrized and checked against a small negative eigenvalue floor.
pub fn condition_linear(
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    h: &DMatrix<f64>,
    noise: &DVector<f64>,
    z: &DVector<f64>,
) -> Result<GaussianDist> {
    check_dim(h.nrows(), z.len())?;
    check_dim(h.nrows(), noise.len())?;
    let sh = sigma * h.transpose();
    let mut innovation = h * &sh;
    for (i, v) in noise.iter().enumerate() {
        innovation[(i, i)] += v;
    }
    symmetrize(&mut innovation);
    let chol = innovation
        .cholesky()
        .ok_or(DpirError::NotPositiveDefinite("innovation covariance"))?;
    // gain^T = S^{-1} H Sigma
    let gain_t = chol.solve(&sh.transpose());
    let resid = z - h * mu;
    let mean = mu + gain_t.transpose() * resid;
    let mut cov = sigma - sh * gain_t;
    symmetrize(&mut cov);
    let min_eig = SymmetricEigen::new(cov.clone()).eigenvalues.min();
    if min_eig < PSD_FLOOR * cov.amax().max(1.0) {
        return Err(DpirError::NotPositiveDefinite("posterior covariance"));
    }
    Ok(GaussianDist { mean, cov })
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

/// `tr(diag(sigma²) B) = Σ_i sigma_i² B_ii`.
pub fn trace_quadratic(sigma: &DVector<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if b.shape() != (sigma.len(), sigma.len()) {
        return Err(DpirError::DimensionMismatch {
            expected: sigma.len(),
            got: b.nrows().max(b.ncols()),
        });
    }
    if let Some(v) = sigma.iter().find(|v| !(**v > 0.0)) {
        return Err(DpirError::InvalidParameter {
            name: "sigma",
            reason: format!("entries must be positive, found {v}"),
        });
    }
    Ok(sigma
        .iter()
        .enumerate()
        .map(|(i, s)| s * s * b[(i, i)])
        .sum())
}

/// Monte-Carlo estimate of `E[xᵀ B x]` for `x ~ N(0, diag(sigma²))`.
pub fn mc_trace_quadratic(
    sigma: &DVector<f64>,
    b: &DMatrix<f64>,
    draws: usize,
    seed: u64,
) -> Result<McEstimate> {
    trace_quadratic(sigma, b)?;
    Ok(mc_mean(draws, seed, |rng| {
        let x = standard_normal_vec(rng, sigma.len()).component_mul(sigma);
        x.dot(&(b * &x))
    }))
}

/// On-disk world description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldFile {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub mu0: Vec<f64>,
    #[serde(rename = "Sigma0")]
    pub sigma0: Vec<Vec<f64>>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub sigma_y: f64,
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub allow_violations: bool,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>], nrows: usize, ncols: usize, name: &str) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(DpirError::WorldPrecondition(format!(
            "{name} must be {nrows}x{ncols}"
        )));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl From<&LinearGaussianWorld> for WorldFile {
    fn from(w: &LinearGaussianWorld) -> Self {
        Self {
            n: w.signal_dim(),
            m: w.obs_dim(),
            mu0: w.mu0.iter().copied().collect(),
            sigma0: to_rows(&w.sigma0),
            a: to_rows(&w.a),
            sigma_y: w.sigma_y,
            seed: w.seed,
            allow_violations: w.allow_violations,
        }
    }
}

impl TryFrom<WorldFile> for LinearGaussianWorld {
    type Error = DpirError;

    fn try_from(f: WorldFile) -> Result<Self> {
        check_dim(f.n, f.mu0.len())?;
        let sigma0 = from_rows(&f.sigma0, f.n, f.n, "Sigma0")?;
        let a = from_rows(&f.a, f.m, f.n, "A")?;
        let mut w = Self::new(
            DVector::from_vec(f.mu0),
            sigma0,
            a,
            f.sigma_y,
            f.allow_violations,
        )?;
        w.seed = f.seed;
        Ok(w)
    }
}

impl LinearGaussianWorld {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&WorldFile::from(self)).expect("world serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: WorldFile = serde_json::from_str(text)
            .map_err(|e| DpirError::WorldPrecondition(format!("world JSON: {e}")))?;
        file.try_into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::VarianceParam;

    fn schedule() -> NoiseSchedule {
        NoiseSchedule::linear(1000, 1e-4, 2e-2, VarianceParam::Beta).unwrap()
    }

    #[test]
    fn random_world_is_deterministic_and_capped() {
        let a = LinearGaussianWorld::random(5, 7, 42, 0.8).unwrap();
        let b = LinearGaussianWorld::random(5, 7, 42, 0.8).unwrap();
        assert_eq!(a, b);
        assert!((spectral_norm(a.a()) - 0.8).abs() < 1e-10);
        let eig = SymmetricEigen::new(a.sigma0().clone()).eigenvalues;
        assert!(eig.min() >= 0.1 - 1e-10 && eig.max() <= 2.0 + 1e-10);
        assert!(LinearGaussianWorld::random(5, 7, 42, 1.5).is_err());
        assert!(LinearGaussianWorld::random_unchecked(5, 7, 42, 1.5).is_ok());
    }

    #[test]
    fn identity_world_is_exact() {
        let w = LinearGaussianWorld::identity(4, 0.5).unwrap();
        assert_eq!(w.a(), &DMatrix::identity(4, 4));
        assert_eq!(w.sigma0(), &DMatrix::identity(4, 4));
        assert_eq!(w.mu0(), &DVector::zeros(4));
    }

    #[test]
    fn rejects_precondition_violations() {
        let big_a = DMatrix::identity(2, 2) * 1.5;
        let r = LinearGaussianWorld::new(DVector::zeros(2), DMatrix::identity(2, 2), big_a, 0.5, false);
        assert!(matches!(r, Err(DpirError::WorldPrecondition(_))));
        let r = LinearGaussianWorld::new(
            DVector::zeros(2),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            2.0,
            false,
        );
        assert!(r.is_err());
        let not_pd = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(LinearGaussianWorld::new(DVector::zeros(2), not_pd, DMatrix::identity(2, 2), 0.5, true).is_err());
    }

    #[test]
    fn symmetric_case_conditionals() {
        let w = LinearGaussianWorld::identity(3, 1.0).unwrap();
        let y = DVector::from_vec(vec![2.0, -4.0, 1.0]);
        let post = w.cond_x0_given_y(&y).unwrap();
        assert!((post.mean - &y / 2.0).amax() < 1e-15);
        assert!((post.cov - DMatrix::identity(3, 3) / 2.0).amax() < 1e-15);
    }

    #[test]
    fn uninformative_observation_limit() {
        let w = LinearGaussianWorld::random(4, 3, 5, 1.0).unwrap().with_sigma_y(1e6).unwrap();
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let post = w.cond_x0_given_y(&y).unwrap();
        assert!((&post.mean - w.mu0()).amax() < 1e-4);
        assert!((&post.cov - w.sigma0()).amax() < 1e-4);
    }

    #[test]
    fn xt_conditioning_limits() {
        let w = LinearGaussianWorld::random(3, 2, 9, 1.0).unwrap();
        let s = schedule();
        let xt = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        let at_zero = w.cond_x0_given_xt(&s, &xt, 0).unwrap();
        assert!((at_zero.mean - &xt).amax() < 1e-12);
        let at_end = w.cond_x0_given_xt(&s, &xt, 1000).unwrap();
        // the pull away from the prior mean shrinks like sqrt(ab_T) |Sigma0| |x_t|
        let bound = s.alpha_bar(1000).unwrap().sqrt() * w.sigma0().norm() * xt.norm();
        assert!((at_end.mean - w.mu0()).norm() < bound);
    }

    #[test]
    fn one_dimensional_score_value() {
        let w = LinearGaussianWorld::identity(1, 1.0).unwrap();
        let s = NoiseSchedule::from_betas(vec![0.5], VarianceParam::Beta).unwrap();
        let y = DVector::from_element(1, 1.0);
        let xt = DVector::from_element(1, 2.0);
        let score = w.analytic_score_xt_given_y(&s, &y, &xt, 1).unwrap();
        // m = 1/2, C = 1/2, ab = 1/2: cov = 1/4 + 1/2 = 3/4
        let mean = 0.5f64.sqrt() * 0.5;
        let expected = -(2.0 - mean) / 0.75;
        assert!((score[0] - expected).abs() < 1e-14);

        let at_mean = DVector::from_element(1, mean);
        assert!(w.analytic_score_xt_given_y(&s, &y, &at_mean, 1).unwrap()[0].abs() < 1e-15);
    }

    #[test]
    fn prop1_closed_forms() {
        let s = schedule();
        let x0 = DVector::from_vec(vec![0.4, -0.2, 0.9]);
        let perfect = LinearGaussianWorld::identity(3, 1e-300).unwrap();
        assert!(perfect.prop1_lhs(&x0).unwrap() < 1e-300);

        let blind = LinearGaussianWorld::new(
            DVector::zeros(3),
            DMatrix::identity(3, 3),
            DMatrix::zeros(2, 3),
            0.5,
            false,
        )
        .unwrap();
        assert!((blind.prop1_lhs(&x0).unwrap() - x0.norm_squared()).abs() < 1e-15);

        let w = LinearGaussianWorld::random(3, 4, 2, 1.0).unwrap();
        let lhs = w.prop1_lhs(&x0).unwrap();
        let near_one = w.prop1_rhs(&s, &x0, 1.0 - 1e-9, 300).unwrap();
        assert!(((near_one - lhs) / lhs).abs() < 1e-6);
        let half = w.prop1_rhs(&s, &x0, 0.5, 300).unwrap();
        let extra = 0.25 * s.tilde_sigma(300).unwrap().powi(2) * 3.0;
        assert!((half - (0.25 * lhs + extra)).abs() < 1e-12);
        assert!(w.prop1_rhs(&s, &x0, 1.0, 300).is_err());
        assert!(w.find_tau(&s, &x0, 0.0).is_err());
    }

    #[test]
    fn find_tau_matches_linear_scan() {
        let s = schedule();
        for seed in 0..5 {
            let w = LinearGaussianWorld::random(8, 12, seed, 1.0).unwrap();
            let x0 = w.sample_prior(&mut stream_rng(seed, 99));
            for &wt in &[0.1, 0.5, 0.9] {
                let lhs = w.prop1_lhs(&x0).unwrap();
                let scan = (1..=1000)
                    .rev()
                    .take_while(|&t| lhs <= w.prop1_rhs(&s, &x0, wt, t).unwrap())
                    .last()
                    .map(|t| t - 1);
                assert_eq!(w.find_tau(&s, &x0, wt).unwrap(), scan);
            }
        }
    }

    #[test]
    fn find_tau_is_zero_for_a_near_perfect_restorer() {
        // lhs = N sigma_y² = 4e-6 stays below (1 - w)² sigma_tilde_1² N / (1 - w²) = 1.33e-4
        let s = schedule();
        let w = LinearGaussianWorld::identity(4, 1e-3).unwrap();
        let x0 = DVector::from_vec(vec![0.5, -0.5, 1.0, 0.0]);
        assert_eq!(w.find_tau(&s, &x0, 0.5).unwrap(), Some(0));
        // a weight near one needs far noisier steps before the inequality holds
        assert!(w.find_tau(&s, &x0, 0.999).unwrap().unwrap() > 0);
    }

    #[test]
    fn trace_quadratic_cases() {
        let ones = DVector::from_element(5, 1.0);
        assert!((trace_quadratic(&ones, &DMatrix::identity(5, 5)).unwrap() - 5.0).abs() < 1e-15);
        let off = DMatrix::from_fn(5, 5, |i, j| if i == j { 0.0 } else { 3.0 });
        assert_eq!(trace_quadratic(&ones, &off).unwrap(), 0.0);
        assert!(trace_quadratic(&ones, &DMatrix::identity(4, 4)).is_err());
        assert!(trace_quadratic(&DVector::from_element(2, 0.0), &DMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn world_json_round_trip_is_bit_exact() {
        let w = LinearGaussianWorld::random(4, 6, 17, 0.9).unwrap();
        let text = w.to_json();
        let back = LinearGaussianWorld::from_json(&text).unwrap();
        assert_eq!(w, back);
        assert_eq!(text, back.to_json());
        assert!(LinearGaussianWorld::from_json(&text.replace("\"sigma_y\"", "\"sigma_z\"")).is_err());
    }
}
