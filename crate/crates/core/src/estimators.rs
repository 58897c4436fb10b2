//! Denoiser / Restorer / Fuser contracts and their analytic implementations.
//!
//! The conditional score needs `E[x0 | y, x_t]`. The stack approximates it
//! as `fuse(restore(y), denoise(x_t / sqrt(ab_t), sigma_tilde_t), t)`:
//!
//! * a [`Denoiser`] estimates `E[x0 | x_t]` from the rescaled noisy state,
//! * a [`Restorer`] estimates `E[x0 | y]` from the observation alone,
//! * a [`Fuser`] merges both estimates into `E[x0 | y, x_t]`.
//!
//! Implementations here are the closed-form ones available on a
//! linear-Gaussian world; any other implementation (e.g. a trained network)
//! plugs in through the same traits.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{check_dim, DpirError, Result};
use crate::oracle::{condition_linear, LinearGaussianWorld};
use crate::schedule::NoiseSchedule;

/// Affine map `v -> matrix * v + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl AffineMap {
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.matrix * v + &self.offset
    }
}

/// Estimates `E[x0 | x_t]` from `x̃_t = x_t / sqrt(ab_t)` and its noise level.
pub trait Denoiser: Send + Sync {
    fn denoise(&self, x_tilde: &DVector<f64>, sigma_tilde: f64) -> Result<DVector<f64>>;

    /// Affine form in `x̃` at the given noise level, when the estimator is linear.
    fn affine_form(&self, _sigma_tilde: f64) -> Option<AffineMap> {
        None
    }

    fn name(&self) -> String;
}

/// Estimates `E[x0 | y]`.
pub trait Restorer: Send + Sync {
    fn restore(&self, y: &DVector<f64>) -> Result<DVector<f64>>;

    /// Affine form in `y`, when the estimator is linear.
    fn affine_form(&self) -> Option<AffineMap> {
        None
    }

    fn name(&self) -> String;
}

/// Estimates `E[x0 | y, x_t]` from the restorer and denoiser outputs.
pub trait Fuser: Send + Sync {
    fn fuse(&self, x0_ir: &DVector<f64>, x0_d: &DVector<f64>, t: usize) -> Result<DVector<f64>>;

    fn name(&self) -> String;
}

fn check_sigma(sigma_tilde: f64) -> Result<()> {
    if sigma_tilde >= 0.0 {
        Ok(())
    } else {
        Err(DpirError::InvalidParameter {
            name: "sigma_tilde",
            reason: format!("must be nonnegative, got {sigma_tilde}"),
        })
    }
}

/// Returns its input: the denoiser that trusts `x̃_t` completely.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityDenoiser;

impl Denoiser for IdentityDenoiser {
    fn denoise(&self, x_tilde: &DVector<f64>, sigma_tilde: f64) -> Result<DVector<f64>> {
        check_sigma(sigma_tilde)?;
        Ok(x_tilde.clone())
    }

    fn affine_form(&self, _sigma_tilde: f64) -> Option<AffineMap> {
        None
    }

    fn name(&self) -> String {
        "identity".into()
    }
}

/// Exact posterior mean of `x0` given `x̃ = x0 + sigma_tilde * eps` under the
/// Gaussian prior: `mu0 + Sigma0 (Sigma0 + sigma_tilde² I)⁻¹ (x̃ - mu0)`.
#[derive(Debug, Clone)]
pub struct GaussianDenoiser {
    mu0: DVector<f64>,
    eigvecs: DMatrix<f64>,
    eigvals: DVector<f64>,
}

impl GaussianDenoiser {
    pub fn new(world: &LinearGaussianWorld) -> Self {
        let eig = SymmetricEigen::new(world.sigma0().clone());
        Self {
            mu0: world.mu0().clone(),
            eigvecs: eig.eigenvectors,
            eigvals: eig.eigenvalues,
        }
    }

    fn shrinkage(&self, sigma_tilde: f64) -> DMatrix<f64> {
        let s2 = sigma_tilde * sigma_tilde;
        let d = self.eigvals.map(|l| l / (l + s2));
        &self.eigvecs * DMatrix::from_diagonal(&d) * self.eigvecs.transpose()
    }
}

impl Denoiser for GaussianDenoiser {
    fn denoise(&self, x_tilde: &DVector<f64>, sigma_tilde: f64) -> Result<DVector<f64>> {
        check_sigma(sigma_tilde)?;
        check_dim(self.mu0.len(), x_tilde.len())?;
        if sigma_tilde == 0.0 {
            return Ok(x_tilde.clone());
        }
        let s2 = sigma_tilde * sigma_tilde;
        // Q diag(l / (l + s2)) Qᵀ (x̃ - mu0), applied without forming the matrix
        let proj = self.eigvecs.tr_mul(&(x_tilde - &self.mu0));
        let scaled = DVector::from_fn(proj.len(), |i, _| {
            let l = self.eigvals[i];
            proj[i] * l / (l + s2)
        });
        Ok(&self.mu0 + &self.eigvecs * scaled)
    }

    fn affine_form(&self, sigma_tilde: f64) -> Option<AffineMap> {
        let h = self.shrinkage(sigma_tilde);
        let offset = &self.mu0 - &h * &self.mu0;
        Some(AffineMap { matrix: h, offset })
    }

    fn name(&self) -> String {
        "gaussian".into()
    }
}

/// `Aᵀ y`.
#[derive(Debug, Clone)]
pub struct BackProjection {
    at: DMatrix<f64>,
}

impl BackProjection {
    pub fn new(a: &DMatrix<f64>) -> Self {
        Self { at: a.transpose() }
    }
}

impl Restorer for BackProjection {
    fn restore(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.at.ncols(), y.len())?;
        Ok(&self.at * y)
    }

    fn affine_form(&self) -> Option<AffineMap> {
        Some(AffineMap {
            matrix: self.at.clone(),
            offset: DVector::zeros(self.at.nrows()),
        })
    }

    fn name(&self) -> String {
        "backprojection".into()
    }
}

/// Exact `E[x0 | y] = mu0 + Sigma0 Aᵀ (A Sigma0 Aᵀ + sigma_y² I)⁻¹ (y - A mu0)`.
#[derive(Debug, Clone)]
pub struct MmseRestorer {
    map: AffineMap,
}

impl MmseRestorer {
    pub fn new(world: &LinearGaussianWorld) -> Result<Self> {
        let m = world.obs_dim();
        let noise = DVector::from_element(m, world.sigma_y() * world.sigma_y());
        // Conditioning on each unit vector recovers the gain column by column.
        let base = condition_linear(world.mu0(), world.sigma0(), world.a(), &noise, &DVector::zeros(m))?;
        let mut gain = DMatrix::zeros(world.signal_dim(), m);
        for j in 0..m {
            let e = DVector::from_fn(m, |i, _| if i == j { 1.0 } else { 0.0 });
            let post = condition_linear(world.mu0(), world.sigma0(), world.a(), &noise, &e)?;
            gain.set_column(j, &(post.mean - &base.mean));
        }
        Ok(Self {
            map: AffineMap {
                matrix: gain,
                offset: base.mean,
            },
        })
    }
}

impl Restorer for MmseRestorer {
    fn restore(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.map.matrix.ncols(), y.len())?;
        Ok(self.map.apply(y))
    }

    fn affine_form(&self) -> Option<AffineMap> {
        Some(self.map.clone())
    }

    fn name(&self) -> String {
        "mmse".into()
    }
}

/// How a convex fuser weights the restorer against the denoiser over time.
#[derive(Debug, Clone, PartialEq)]
pub enum FusionWeightPolicy {
    Constant(f64),
    /// `w(t) = 1 / (1 + exp(-(t - midpoint) / slope))`
    Logistic { midpoint: f64, slope: f64 },
    /// Per-timestep weight minimizing the expected squared error of the
    /// fused estimate on a linear-Gaussian world.
    OracleOptimal,
}

impl FusionWeightPolicy {
    /// Logistic policy centred on the activation step `tau`.
    pub fn logistic_default(tau: usize) -> Self {
        Self::Logistic {
            midpoint: tau as f64,
            slope: (tau as f64 / 5.0).max(1.0),
        }
    }
}

/// `w(t) x0_ir + (1 - w(t)) x0_d`.
#[derive(Debug, Clone)]
pub struct ConvexFuser {
    policy: FusionWeightPolicy,
    /// Precomputed weights for `t = 0..=T` under `OracleOptimal`.
    table: Option<Vec<f64>>,
}

impl ConvexFuser {
    pub fn constant(w: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&w) {
            return Err(DpirError::InvalidParameter {
                name: "w",
                reason: format!("{w} is outside [0, 1]"),
            });
        }
        Ok(Self {
            policy: FusionWeightPolicy::Constant(w),
            table: None,
        })
    }

    pub fn logistic(midpoint: f64, slope: f64) -> Result<Self> {
        if !(slope > 0.0) || !midpoint.is_finite() {
            return Err(DpirError::InvalidParameter {
                name: "slope",
                reason: format!("logistic needs a finite midpoint and positive slope, got ({midpoint}, {slope})"),
            });
        }
        Ok(Self {
            policy: FusionWeightPolicy::Logistic { midpoint, slope },
            table: None,
        })
    }

    /// Oracle-optimal weights for a linear denoiser/restorer pair.
    pub fn oracle_optimal(
        world: &LinearGaussianWorld,
        s: &NoiseSchedule,
        denoiser: &dyn Denoiser,
        restorer: &dyn Restorer,
    ) -> Result<Self> {
        let table = (0..=s.steps())
            .map(|t| {
                if t == 0 {
                    Ok(0.0)
                } else {
                    optimal_weight(world, s.tilde_sigma(t)?, denoiser, restorer)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            policy: FusionWeightPolicy::OracleOptimal,
            table: Some(table),
        })
    }

    pub fn policy(&self) -> &FusionWeightPolicy {
        &self.policy
    }

    pub fn weight(&self, t: usize) -> Result<f64> {
        match (&self.policy, &self.table) {
            (FusionWeightPolicy::Constant(w), _) => Ok(*w),
            (FusionWeightPolicy::Logistic { midpoint, slope }, _) => {
                Ok(1.0 / (1.0 + (-(t as f64 - midpoint) / slope).exp()))
            }
            (FusionWeightPolicy::OracleOptimal, Some(table)) => {
                table.get(t).copied().ok_or(DpirError::TimestepOutOfRange {
                    t,
                    lo: 0,
                    hi: table.len() - 1,
                })
            }
            (FusionWeightPolicy::OracleOptimal, None) => {
                unreachable!("oracle policy is always built with a table")
            }
        }
    }
}

impl Fuser for ConvexFuser {
    fn fuse(&self, x0_ir: &DVector<f64>, x0_d: &DVector<f64>, t: usize) -> Result<DVector<f64>> {
        check_dim(x0_ir.len(), x0_d.len())?;
        let w = self.weight(t)?;
        if w == 1.0 {
            return Ok(x0_ir.clone());
        }
        if w == 0.0 {
            return Ok(x0_d.clone());
        }
        Ok(x0_ir * w + x0_d * (1.0 - w))
    }

    fn name(&self) -> String {
        match &self.policy {
            FusionWeightPolicy::Constant(w) => format!("convex:constant:{w}"),
            FusionWeightPolicy::Logistic { midpoint, slope } => {
                format!("convex:logistic:{midpoint}:{slope}")
            }
            FusionWeightPolicy::OracleOptimal => "convex:oracle".into(),
        }
    }
}

/// Expected squared-error moments of two affine estimators of `x0` on a
/// Gaussian world: `(E‖e_ir‖², E‖e_d‖², E[e_irᵀ e_d])`.
pub fn error_moments(
    world: &LinearGaussianWorld,
    sigma_tilde: f64,
    denoiser: &dyn Denoiser,
    restorer: &dyn Restorer,
) -> Result<(f64, f64, f64)> {
    let n = world.signal_dim();
    let eye = DMatrix::<f64>::identity(n, n);
    let r = restorer
        .affine_form()
        .ok_or_else(|| DpirError::Estimator(format!("restorer `{}` is not affine", restorer.name())))?;
    let d = match denoiser.affine_form(sigma_tilde) {
        Some(d) => d,
        None if denoiser.name() == "identity" => AffineMap {
            matrix: eye.clone(),
            offset: DVector::zeros(n),
        },
        None => {
            return Err(DpirError::Estimator(format!(
                "denoiser `{}` is not affine",
                denoiser.name()
            )))
        }
    };
    let sigma0 = world.sigma0();
    let mu0 = world.mu0();
    // e_ir = (I - P A) delta + bias_ir - P n
    let ir_lin = &eye - &r.matrix * world.a();
    let ir_bias = &ir_lin * mu0 - &r.offset;
    // e_d = (I - R) delta + bias_d - sigma_tilde R eps
    let d_lin = &eye - &d.matrix;
    let d_bias = &d_lin * mu0 - &d.offset;

    let a = (&ir_lin * sigma0 * ir_lin.transpose()).trace()
        + ir_bias.norm_squared()
        + world.sigma_y().powi(2) * r.matrix.norm_squared();
    let b = (&d_lin * sigma0 * d_lin.transpose()).trace()
        + d_bias.norm_squared()
        + sigma_tilde * sigma_tilde * d.matrix.norm_squared();
    let c = (&ir_lin * sigma0 * d_lin.transpose()).trace() + ir_bias.dot(&d_bias);
    Ok((a, b, c))
}

/// Closed-form minimizer over `w ∈ [0, 1]` of
/// `E‖x0 - (w x0_ir + (1 - w) x0_d)‖² = w² a + 2 w (1 - w) c + (1 - w)² b`.
pub fn optimal_weight(
    world: &LinearGaussianWorld,
    sigma_tilde: f64,
    denoiser: &dyn Denoiser,
    restorer: &dyn Restorer,
) -> Result<f64> {
    let (a, b, c) = error_moments(world, sigma_tilde, denoiser, restorer)?;
    let curvature = a + b - 2.0 * c;
    if curvature <= 0.0 {
        // identical estimators: any weight is optimal
        return Ok(1.0);
    }
    Ok(((b - c) / curvature).clamp(0.0, 1.0))
}

/// Product-of-experts fusion that is exact on a Gaussian world when fed the
/// exact marginal conditionals `E[x0 | y]` and `E[x0 | x_t]`.
///
/// With precisions `P0 = Sigma0⁻¹`, `P_y = P0 + AᵀA / sigma_y²` and
/// `P_t = P0 + (ab_t / (1 - ab_t)) I`, information adds:
/// `E[x0 | y, x_t] = (P_y + P_t - P0)⁻¹ (P_y m_y + P_t m_t - P0 mu0)`.
#[derive(Debug, Clone)]
pub struct ExactFuser {
    schedule: NoiseSchedule,
    p0: DMatrix<f64>,
    p0_mu0: DVector<f64>,
    p_y: DMatrix<f64>,
    /// eigendecomposition of `P_y`, so `(P_y + s I)⁻¹` costs one basis change
    py_vecs: DMatrix<f64>,
    py_vals: DVector<f64>,
}

impl ExactFuser {
    pub fn new(world: &LinearGaussianWorld, schedule: &NoiseSchedule) -> Result<Self> {
        let p0 = world
            .sigma0()
            .clone()
            .cholesky()
            .ok_or(DpirError::NotPositiveDefinite("Sigma0"))?
            .inverse();
        let p0_mu0 = &p0 * world.mu0();
        let at = world.a().transpose();
        let mut p_y = &p0 + &at * world.a() / world.sigma_y().powi(2);
        crate::oracle::symmetrize(&mut p_y);
        let eig = SymmetricEigen::new(p_y.clone());
        Ok(Self {
            schedule: schedule.clone(),
            p0,
            p0_mu0,
            p_y,
            py_vecs: eig.eigenvectors,
            py_vals: eig.eigenvalues,
        })
    }
}

impl Fuser for ExactFuser {
    fn fuse(&self, x0_ir: &DVector<f64>, x0_d: &DVector<f64>, t: usize) -> Result<DVector<f64>> {
        check_dim(self.p0_mu0.len(), x0_ir.len())?;
        check_dim(self.p0_mu0.len(), x0_d.len())?;
        self.schedule.check_t(t, 1)?;
        // ab / (1 - ab) = 1 / sigma_tilde²
        let snr = 1.0 / self.schedule.tilde_sigma(t)?.powi(2);
        let h = &self.p_y * x0_ir + &self.p0 * x0_d + x0_d * snr - &self.p0_mu0;
        let proj = self.py_vecs.tr_mul(&h);
        let scaled = DVector::from_fn(proj.len(), |i, _| proj[i] / (self.py_vals[i] + snr));
        Ok(&self.py_vecs * scaled)
    }

    fn name(&self) -> String {
        "exact".into()
    }
}

/// Denoiser selection by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenoiserKind {
    Identity,
    Gaussian,
}

/// Restorer selection by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RestorerKind {
    BackProjection,
    Mmse,
}

/// Fuser selection: `convex:<policy>` or `exact`.
#[derive(Debug, Clone, PartialEq)]
pub enum FuserKind {
    Convex(FusionPolicySpec),
    Exact,
}

/// Unresolved convex policy; `logistic` without parameters resolves against
/// the activation step.
#[derive(Debug, Clone, PartialEq)]
pub enum FusionPolicySpec {
    Constant(f64),
    Logistic(Option<(f64, f64)>),
    Oracle,
}

fn parse_err(what: &str, text: &str) -> DpirError {
    DpirError::Estimator(format!("unknown {what} `{text}`"))
}

impl FromStr for DenoiserKind {
    type Err = DpirError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Self::Identity),
            "gaussian" => Ok(Self::Gaussian),
            _ => Err(parse_err("denoiser (identity | gaussian)", s)),
        }
    }
}

impl FromStr for RestorerKind {
    type Err = DpirError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "backprojection" => Ok(Self::BackProjection),
            "mmse" => Ok(Self::Mmse),
            _ => Err(parse_err("restorer (backprojection | mmse)", s)),
        }
    }
}

impl FromStr for FuserKind {
    type Err = DpirError;
    fn from_str(s: &str) -> Result<Self> {
        if s == "exact" {
            return Ok(Self::Exact);
        }
        let parts: Vec<&str> = s.split(':').collect();
        let num = |p: &str| -> Result<f64> { p.parse::<f64>().map_err(|_| parse_err("fuser number", p)) };
        let policy = match parts.as_slice() {
            ["convex", "constant", w] => FusionPolicySpec::Constant(num(w)?),
            ["convex", "logistic"] => FusionPolicySpec::Logistic(None),
            ["convex", "logistic", m, k] => FusionPolicySpec::Logistic(Some((num(m)?, num(k)?))),
            ["convex", "oracle"] => FusionPolicySpec::Oracle,
            _ => {
                return Err(parse_err(
                    "fuser (exact | convex:constant:<w> | convex:logistic[:<t0>:<slope>] | convex:oracle)",
                    s,
                ))
            }
        };
        Ok(Self::Convex(policy))
    }
}

impl fmt::Display for DenoiserKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Identity => "identity",
            Self::Gaussian => "gaussian",
        })
    }
}

impl fmt::Display for RestorerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::BackProjection => "backprojection",
            Self::Mmse => "mmse",
        })
    }
}

/// The Denoiser / Restorer / Fuser triple.
#[derive(Clone)]
pub struct EstimatorStack {
    pub denoiser: Arc<dyn Denoiser>,
    pub restorer: Arc<dyn Restorer>,
    pub fuser: Arc<dyn Fuser>,
}

impl fmt::Debug for EstimatorStack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EstimatorStack")
            .field("denoiser", &self.denoiser.name())
            .field("restorer", &self.restorer.name())
            .field("fuser", &self.fuser.name())
            .finish()
    }
}

impl EstimatorStack {
    pub fn new(
        denoiser: Arc<dyn Denoiser>,
        restorer: Arc<dyn Restorer>,
        fuser: Arc<dyn Fuser>,
    ) -> Self {
        Self {
            denoiser,
            restorer,
            fuser,
        }
    }

    /// Build a stack from named components on a world. `tau` resolves the
    /// default logistic policy. The exact fuser is only exact when fed the
    /// exact marginals, so it requires `gaussian` + `mmse`.
    pub fn from_kinds(
        world: &LinearGaussianWorld,
        schedule: &NoiseSchedule,
        denoiser: DenoiserKind,
        restorer: RestorerKind,
        fuser: &FuserKind,
        tau: usize,
    ) -> Result<Self> {
        let d: Arc<dyn Denoiser> = match denoiser {
            DenoiserKind::Identity => Arc::new(IdentityDenoiser),
            DenoiserKind::Gaussian => Arc::new(GaussianDenoiser::new(world)),
        };
        let r: Arc<dyn Restorer> = match restorer {
            RestorerKind::BackProjection => Arc::new(BackProjection::new(world.a())),
            RestorerKind::Mmse => Arc::new(MmseRestorer::new(world)?),
        };
        let f: Arc<dyn Fuser> = match fuser {
            FuserKind::Exact => {
                if denoiser != DenoiserKind::Gaussian || restorer != RestorerKind::Mmse {
                    return Err(DpirError::Estimator(format!(
                        "fuser `exact` requires denoiser `gaussian` and restorer `mmse`, got `{denoiser}` and `{restorer}`"
                    )));
                }
                Arc::new(ExactFuser::new(world, schedule)?)
            }
            FuserKind::Convex(FusionPolicySpec::Constant(w)) => Arc::new(ConvexFuser::constant(*w)?),
            FuserKind::Convex(FusionPolicySpec::Logistic(params)) => {
                let (m, k) = params.unwrap_or_else(|| match FusionWeightPolicy::logistic_default(tau) {
                    FusionWeightPolicy::Logistic { midpoint, slope } => (midpoint, slope),
                    _ => unreachable!(),
                });
                Arc::new(ConvexFuser::logistic(m, k)?)
            }
            FuserKind::Convex(FusionPolicySpec::Oracle) => {
                Arc::new(ConvexFuser::oracle_optimal(world, schedule, d.as_ref(), r.as_ref())?)
            }
        };
        Ok(Self::new(d, r, f))
    }

    pub fn denoise(&self, x_tilde: &DVector<f64>, sigma_tilde: f64) -> Result<DVector<f64>> {
        self.denoiser.denoise(x_tilde, sigma_tilde)
    }

    pub fn restore(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.restorer.restore(y)
    }

    pub fn fuse(&self, x0_ir: &DVector<f64>, x0_d: &DVector<f64>, t: usize) -> Result<DVector<f64>> {
        self.fuser.fuse(x0_ir, x0_d, t)
    }
}
