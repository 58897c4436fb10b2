//! Full, accelerated, accelerated+DDIM and diffused-start sampling runs.
//!
//! Every run caches one restorer evaluation and then spends one denoiser and
//! one fuser evaluation per visited reverse timestep. `nfe_total` counts the
//! denoise/fuse steps plus the single restorer call.
//!
//! Randomness: run `r` under seed `s` uses ChaCha stream `(s, r)`. The start
//! of the trajectory (`x_T`, the merged-jump noise, the diffused-start
//! noise) is drawn from the head of the stream and the per-step noise from a
//! far-away word offset of the same stream, so two modes started from the
//! same `(seed, run)` share their per-step noise sequence.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DpirError, Result};
use crate::estimators::EstimatorStack;
use crate::kernels::{ddim_step, merged_coeffs, MergedTransitionCoeffs};
use crate::metrics;
use crate::oracle::LinearGaussianWorld;
use crate::rng::{standard_normal_vec, stream_rng, StreamRng};
use crate::schedule::NoiseSchedule;
use crate::stats::Moments;

/// Word offset of the per-step noise within a run's stream.
const STEP_NOISE_WORD_POS: u128 = 1 << 64;

/// Reverse-process variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum SamplerMode {
    /// `T` fused posterior steps from pure noise.
    Full,
    /// Merged jump `T -> tau` with the restorer estimate, then `tau` fused steps.
    Accelerated,
    /// Merged jump `T -> tau`, then DDIM on the grid `tau, tau - stride, ..., 0`.
    AcceleratedDdim { stride: usize, eta: f64 },
    /// `x_tau` obtained by forward-diffusing the restorer estimate, then `tau` fused steps.
    DiffusedStart,
}

impl fmt::Display for SamplerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Full => f.write_str("full"),
            Self::Accelerated => f.write_str("accelerated"),
            Self::AcceleratedDdim { stride, eta } => write!(f, "accelerated_ddim:{stride}:{eta}"),
            Self::DiffusedStart => f.write_str("diffused_start"),
        }
    }
}

impl FromStr for SamplerMode {
    type Err = DpirError;

    /// `full`, `accelerated`, `accelerated_ddim:<stride>[:<eta>]`, `diffused_start`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || DpirError::Sampler(format!(
            "unknown mode `{s}` (full | accelerated | accelerated_ddim:<stride>[:<eta>] | diffused_start)"
        ));
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["full"] => Ok(Self::Full),
            ["accelerated"] => Ok(Self::Accelerated),
            ["diffused_start"] => Ok(Self::DiffusedStart),
            ["accelerated_ddim", stride] => Ok(Self::AcceleratedDdim {
                stride: stride.parse().map_err(|_| bad())?,
                eta: 0.0,
            }),
            ["accelerated_ddim", stride, eta] => Ok(Self::AcceleratedDdim {
                stride: stride.parse().map_err(|_| bad())?,
                eta: eta.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub tau: usize,
    pub mode: SamplerMode,
    pub seed: u64,
    pub num_samples: usize,
    /// Keep every visited `(t, x_t)` in the trace.
    #[serde(default)]
    pub record_states: bool,
}

impl SamplerConfig {
    pub fn new(mode: SamplerMode, tau: usize, seed: u64) -> Self {
        Self {
            tau,
            mode,
            seed,
            num_samples: 1,
            record_states: false,
        }
    }

    pub fn with_num_samples(mut self, n: usize) -> Self {
        self.num_samples = n;
        self
    }

    pub fn with_states(mut self, record: bool) -> Self {
        self.record_states = record;
        self
    }
}

/// Noteworthy-but-allowed run conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceFlag {
    /// Accelerated run with `tau = T`: nothing to merge, no jump taken.
    NoMergedJump,
    /// `stride` does not divide `tau`; the last DDIM segment is shorter.
    ShortenedFinalSegment { from: usize, to: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleTrace {
    pub states: Vec<(usize, DVector<f64>)>,
    pub nfe_denoiser: usize,
    pub nfe_restorer: usize,
    pub nfe_fuser: usize,
    pub nfe_total: usize,
    pub x0_final: DVector<f64>,
    /// The cached restorer output used for the whole run.
    pub restorer_output: DVector<f64>,
    pub flags: Vec<TraceFlag>,
}

/// Gaussian law of the starting state given the restorer estimate `m`:
/// `x_start ~ N(mean_coeff * m, var * I)` (with `x_T ~ N(0, I)` integrated out).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StartMarginal {
    pub t: usize,
    pub mean_coeff: f64,
    pub var: f64,
}

/// Everything that does not depend on `y`: the merged jump, per-step
/// coefficients and the DDIM grid, computed once.
#[derive(Debug, Clone)]
pub struct Sampler {
    schedule: NoiseSchedule,
    stack: EstimatorStack,
    config: SamplerConfig,
    jump: Option<MergedTransitionCoeffs>,
    /// `steps[t - 1]` is the single-step kernel from `t`, for `t = 1..=tau`.
    steps: Vec<MergedTransitionCoeffs>,
    ddim_grid: Vec<usize>,
    flags: Vec<TraceFlag>,
}

impl Sampler {
    pub fn new(schedule: &NoiseSchedule, stack: EstimatorStack, config: SamplerConfig) -> Result<Self> {
        let big_t = schedule.steps();
        let tau = config.tau;
        if tau > big_t {
            return Err(DpirError::Sampler(format!("tau = {tau} exceeds T = {big_t}")));
        }
        let mut flags = Vec::new();
        let mut ddim_grid = Vec::new();
        let (jump, step_count) = match config.mode {
            SamplerMode::Full => (None, big_t),
            SamplerMode::DiffusedStart => (None, tau),
            SamplerMode::Accelerated | SamplerMode::AcceleratedDdim { .. } => {
                if tau == big_t {
                    flags.push(TraceFlag::NoMergedJump);
                    (None, tau)
                } else {
                    (Some(merged_coeffs(schedule, big_t, big_t - tau)?), tau)
                }
            }
        };
        if let SamplerMode::AcceleratedDdim { stride, eta } = config.mode {
            if stride == 0 {
                return Err(DpirError::Sampler("DDIM stride must be at least 1".into()));
            }
            if stride > tau {
                return Err(DpirError::Sampler(format!("DDIM stride {stride} exceeds tau = {tau}")));
            }
            if !(0.0..=1.0).contains(&eta) {
                return Err(DpirError::Sampler(format!("DDIM eta {eta} is outside [0, 1]")));
            }
            let mut t = tau;
            while t > 0 {
                ddim_grid.push(t);
                if t < stride {
                    flags.push(TraceFlag::ShortenedFinalSegment { from: t, to: 0 });
                }
                t = t.saturating_sub(stride);
            }
            ddim_grid.push(0);
        }
        let steps = if matches!(config.mode, SamplerMode::AcceleratedDdim { .. }) {
            Vec::new()
        } else {
            (1..=step_count)
                .map(|t| merged_coeffs(schedule, t, 1))
                .collect::<Result<_>>()?
        };
        Ok(Self {
            schedule: schedule.clone(),
            stack,
            config,
            jump,
            steps,
            ddim_grid,
            flags,
        })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    /// The DDIM nodes `tau, ..., 0` (empty outside DDIM mode).
    pub fn ddim_grid(&self) -> &[usize] {
        &self.ddim_grid
    }

    /// The number of denoise/fuse evaluations a run performs.
    pub fn denoise_steps(&self) -> usize {
        match self.config.mode {
            SamplerMode::AcceleratedDdim { .. } => self.ddim_grid.len() - 1,
            _ => self.steps.len(),
        }
    }

    /// Closed-form law of the state the fused reverse steps start from.
    pub fn start_marginal(&self) -> StartMarginal {
        let s = &self.schedule;
        let big_t = s.steps();
        match (self.config.mode, &self.jump) {
            (SamplerMode::Full, _) => StartMarginal {
                t: big_t,
                mean_coeff: 0.0,
                var: 1.0,
            },
            (SamplerMode::DiffusedStart, _) => {
                let t = self.config.tau;
                StartMarginal {
                    t,
                    mean_coeff: s.alpha_bars()[t].sqrt(),
                    var: -s.log_alpha_bars()[t].exp_m1(),
                }
            }
            (_, Some(j)) => StartMarginal {
                t: j.target(),
                mean_coeff: j.c_x0,
                var: j.c_xt * j.c_xt + j.var,
            },
            (_, None) => StartMarginal {
                t: big_t,
                mean_coeff: 0.0,
                var: 1.0,
            },
        }
    }

    /// Draw the starting state and its timestep.
    pub fn start_state(&self, x_ir: &DVector<f64>, rng: &mut StreamRng) -> Result<(usize, DVector<f64>)> {
        let n = x_ir.len();
        let big_t = self.schedule.steps();
        match self.config.mode {
            SamplerMode::DiffusedStart => {
                let t = self.config.tau;
                if t == 0 {
                    return Ok((0, x_ir.clone()));
                }
                let m = self.start_marginal();
                let z = standard_normal_vec(rng, n);
                Ok((t, x_ir * m.mean_coeff + z * m.var.sqrt()))
            }
            _ => {
                let x_big_t = standard_normal_vec(rng, n);
                match &self.jump {
                    Some(j) => {
                        let z = standard_normal_vec(rng, n);
                        Ok((j.target(), j.sample(&x_big_t, x_ir, &z)?))
                    }
                    None => Ok((big_t, x_big_t)),
                }
            }
        }
    }

    fn x0_estimate(&self, x_ir: &DVector<f64>, x: &DVector<f64>, t: usize) -> Result<DVector<f64>> {
        let s = &self.schedule;
        let scale = (-0.5 * s.log_alpha_bars()[t]).exp();
        let x_tilde = x * scale;
        let d = self.stack.denoise(&x_tilde, s.tilde_sigma(t)?)?;
        self.stack.fuse(x_ir, &d, t)
    }

    /// One run on stream `(seed, run_index)`.
    pub fn run(&self, y: &DVector<f64>, run_index: u64) -> Result<SampleTrace> {
        let mut rng = stream_rng(self.config.seed, run_index);
        self.run_with_rng(y, &mut rng)
    }

    pub fn run_with_rng(&self, y: &DVector<f64>, rng: &mut StreamRng) -> Result<SampleTrace> {
        let x_ir = self.stack.restore(y)?;
        let n = x_ir.len();
        let mut step_rng = rng.clone();
        step_rng.set_word_pos(STEP_NOISE_WORD_POS);

        let record = self.config.record_states;
        let mut states = Vec::new();
        let (t0, mut x) = self.start_state(&x_ir, rng)?;
        if record {
            states.push((t0, x.clone()));
        }
        let mut evals = 0usize;

        if let SamplerMode::AcceleratedDdim { eta, .. } = self.config.mode {
            for pair in self.ddim_grid.windows(2) {
                let (t, t_next) = (pair[0], pair[1]);
                let x0_hat = self.x0_estimate(&x_ir, &x, t)?;
                evals += 1;
                let last = t_next == 0;
                let noise = if last || eta == 0.0 {
                    None
                } else {
                    Some(standard_normal_vec(&mut step_rng, n))
                };
                x = ddim_step(&self.schedule, &x, &x0_hat, t, t_next, eta, noise.as_ref())?;
                if record {
                    states.push((t_next, x.clone()));
                }
            }
        } else {
            for t in (1..=t0).rev() {
                let x0_hat = self.x0_estimate(&x_ir, &x, t)?;
                evals += 1;
                let c = &self.steps[t - 1];
                x = if t > 1 {
                    let z = standard_normal_vec(&mut step_rng, n);
                    c.sample(&x, &x0_hat, &z)?
                } else {
                    c.mean(&x, &x0_hat)?
                };
                if record {
                    states.push((t - 1, x.clone()));
                }
            }
        }

        Ok(SampleTrace {
            states,
            nfe_denoiser: evals,
            nfe_restorer: 1,
            nfe_fuser: evals,
            nfe_total: evals + 1,
            x0_final: x,
            restorer_output: x_ir,
            flags: self.flags.clone(),
        })
    }

    /// `config.num_samples` runs with stream ids `first_run..`, in order.
    pub fn run_many(&self, y: &DVector<f64>, first_run: u64) -> Result<Vec<SampleTrace>> {
        (0..self.config.num_samples as u64)
            .into_par_iter()
            .map(|r| self.run(y, first_run + r))
            .collect()
    }
}

/// One row of a `tau` sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub tau: usize,
    pub mse: f64,
    pub mse_std_err: f64,
    pub nfe_total: usize,
}

/// A ground-truth signal with its observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub x0: DVector<f64>,
    pub y: DVector<f64>,
}

/// `count` problems drawn from the world on stream `(seed, u64::MAX)`.
pub fn draw_problems(world: &LinearGaussianWorld, count: usize, seed: u64) -> Result<Vec<Problem>> {
    let mut rng = stream_rng(seed, u64::MAX);
    (0..count)
        .map(|_| {
            let x0 = world.sample_prior(&mut rng);
            let y = world.observe(&x0, &mut rng)?;
            Ok(Problem { x0, y })
        })
        .collect()
}

/// Per-`tau` mean squared error of `x0_final` over every problem and
/// `config.num_samples` runs each. Run `(j, r)` uses stream
/// `j * num_samples + r` for every `tau` (common random numbers).
pub fn sweep_tau<F>(
    schedule: &NoiseSchedule,
    make_stack: F,
    problems: &[Problem],
    tau_list: &[usize],
    config: &SamplerConfig,
) -> Result<Vec<SweepRow>>
where
    F: Fn(usize) -> Result<EstimatorStack>,
{
    if tau_list.is_empty() {
        return Err(DpirError::Sampler("tau list is empty".into()));
    }
    if problems.is_empty() {
        return Err(DpirError::Sampler("problem set is empty".into()));
    }
    let per = config.num_samples as u64;
    tau_list
        .iter()
        .map(|&tau| {
            let cfg = SamplerConfig { tau, ..config.clone() };
            let sampler = Sampler::new(schedule, make_stack(tau)?, cfg)?;
            let jobs: Vec<(usize, u64)> = (0..problems.len())
                .flat_map(|j| (0..per).map(move |r| (j, r)))
                .collect();
            let results: Vec<(f64, usize)> = jobs
                .par_iter()
                .map(|&(j, r)| {
                    let p = &problems[j];
                    let trace = sampler.run(&p.y, j as u64 * per + r)?;
                    Ok((metrics::mse(&p.x0, &trace.x0_final)?, trace.nfe_total))
                })
                .collect::<Result<_>>()?;
            let mut m = Moments::default();
            for (e, _) in &results {
                m.push(*e);
            }
            Ok(SweepRow {
                tau,
                mse: m.mean(),
                mse_std_err: m.std_err(),
                nfe_total: results[0].1,
            })
        })
        .collect()
}

/// Paired errors of the merged-jump start against the diffused start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedRow {
    pub run: u64,
    pub mse_proposed: f64,
    pub mse_baseline: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub tau: usize,
    pub rows: Vec<PairedRow>,
    pub mean_proposed: f64,
    pub mean_baseline: f64,
    /// mean of `mse_proposed - mse_baseline`
    pub mean_diff: f64,
    pub diff_std_err: f64,
}

/// Run the accelerated sampler and the diffused-start baseline on the same
/// problems with the same `(seed, run)` streams.
pub fn compare_starts(
    schedule: &NoiseSchedule,
    stack: &EstimatorStack,
    problems: &[Problem],
    tau: usize,
    seed: u64,
) -> Result<CompareReport> {
    if problems.is_empty() {
        return Err(DpirError::Sampler("problem set is empty".into()));
    }
    let proposed = Sampler::new(schedule, stack.clone(), SamplerConfig::new(SamplerMode::Accelerated, tau, seed))?;
    let baseline = Sampler::new(schedule, stack.clone(), SamplerConfig::new(SamplerMode::DiffusedStart, tau, seed))?;
    let rows: Vec<PairedRow> = problems
        .par_iter()
        .enumerate()
        .map(|(j, p)| {
            let run = j as u64;
            let a = proposed.run(&p.y, run)?;
            let b = baseline.run(&p.y, run)?;
            Ok(PairedRow {
                run,
                mse_proposed: metrics::mse(&p.x0, &a.x0_final)?,
                mse_baseline: metrics::mse(&p.x0, &b.x0_final)?,
            })
        })
        .collect::<Result<_>>()?;
    let (mut mp, mut mb, mut md) = (Moments::default(), Moments::default(), Moments::default());
    for r in &rows {
        mp.push(r.mse_proposed);
        mb.push(r.mse_baseline);
        md.push(r.mse_proposed - r.mse_baseline);
    }
    Ok(CompareReport {
        tau,
        rows,
        mean_proposed: mp.mean(),
        mean_baseline: mb.mean(),
        mean_diff: md.mean(),
        diff_std_err: md.std_err(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{DenoiserKind, FuserKind, RestorerKind};
    use crate::schedule::VarianceParam;

    fn setup(steps: usize) -> (NoiseSchedule, LinearGaussianWorld, EstimatorStack) {
        let s = NoiseSchedule::linear(steps, 1e-4, 2e-2, VarianceParam::Beta).unwrap();
        let w = LinearGaussianWorld::random(3, 2, 11, 1.0).unwrap();
        let stack = EstimatorStack::from_kinds(
            &w,
            &s,
            DenoiserKind::Gaussian,
            RestorerKind::Mmse,
            &FuserKind::Exact,
            0,
        )
        .unwrap();
        (s, w, stack)
    }

    fn y() -> DVector<f64> {
        DVector::from_vec(vec![0.4, -0.2])
    }

    #[test]
    fn nfe_accounting() {
        let (s, _, stack) = setup(1000);
        let cases = [
            (SamplerMode::Full, 0, 1001),
            (SamplerMode::Accelerated, 5, 6),
            (SamplerMode::Accelerated, 0, 1),
            (SamplerMode::Accelerated, 1000, 1001),
            (SamplerMode::AcceleratedDdim { stride: 5, eta: 0.0 }, 250, 51),
            (SamplerMode::AcceleratedDdim { stride: 250, eta: 0.0 }, 250, 2),
            (SamplerMode::AcceleratedDdim { stride: 7, eta: 0.0 }, 250, 37),
            (SamplerMode::DiffusedStart, 40, 41),
            (SamplerMode::DiffusedStart, 0, 1),
        ];
        for (mode, tau, nfe) in cases {
            let sm = Sampler::new(&s, stack.clone(), SamplerConfig::new(mode, tau, 1)).unwrap();
            let tr = sm.run(&y(), 0).unwrap();
            assert_eq!(tr.nfe_total, nfe, "{mode} tau {tau}");
            assert_eq!(tr.nfe_restorer, 1);
            assert_eq!(tr.nfe_denoiser, nfe - 1);
            assert_eq!(tr.nfe_fuser, nfe - 1);
        }
    }

    #[test]
    fn single_step_schedule() {
        let (s, _, stack) = setup(1);
        let tr = Sampler::new(&s, stack, SamplerConfig::new(SamplerMode::Full, 0, 1))
            .unwrap()
            .run(&y(), 0)
            .unwrap();
        assert_eq!((tr.nfe_denoiser, tr.nfe_total), (1, 2));
    }

    #[test]
    fn flags_and_errors() {
        let (s, _, stack) = setup(1000);
        let flagged = Sampler::new(&s, stack.clone(), SamplerConfig::new(SamplerMode::Accelerated, 1000, 1)).unwrap();
        assert_eq!(flagged.run(&y(), 0).unwrap().flags, vec![TraceFlag::NoMergedJump]);
        let short = Sampler::new(
            &s,
            stack.clone(),
            SamplerConfig::new(SamplerMode::AcceleratedDdim { stride: 7, eta: 0.0 }, 250, 1),
        )
        .unwrap();
        assert_eq!(short.ddim_grid().first(), Some(&250));
        assert_eq!(&short.ddim_grid()[35..], &[5, 0]);
        assert_eq!(short.run(&y(), 0).unwrap().flags, vec![TraceFlag::ShortenedFinalSegment { from: 5, to: 0 }]);

        for (mode, tau) in [
            (SamplerMode::Accelerated, 1001),
            (SamplerMode::AcceleratedDdim { stride: 6, eta: 0.0 }, 5),
            (SamplerMode::AcceleratedDdim { stride: 0, eta: 0.0 }, 5),
            (SamplerMode::AcceleratedDdim { stride: 1, eta: 1.5 }, 5),
        ] {
            assert!(Sampler::new(&s, stack.clone(), SamplerConfig::new(mode, tau, 1)).is_err());
        }
        let sm = Sampler::new(&s, stack, SamplerConfig::new(SamplerMode::Full, 0, 1)).unwrap();
        assert!(sm.run(&DVector::zeros(5), 0).is_err());
    }

    #[test]
    fn diffused_start_at_zero_returns_restorer_output() {
        let (s, _, stack) = setup(1000);
        let sm = Sampler::new(&s, stack.clone(), SamplerConfig::new(SamplerMode::DiffusedStart, 0, 9)).unwrap();
        let tr = sm.run(&y(), 3).unwrap();
        assert_eq!(tr.x0_final, stack.restore(&y()).unwrap());
    }

    #[test]
    fn deterministic_and_stream_separated() {
        let (s, _, stack) = setup(1000);
        let cfg = SamplerConfig::new(SamplerMode::AcceleratedDdim { stride: 5, eta: 0.5 }, 250, 4)
            .with_states(true)
            .with_num_samples(3);
        let sm = Sampler::new(&s, stack, cfg).unwrap();
        let a = sm.run_many(&y(), 0).unwrap();
        let b = sm.run_many(&y(), 0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].x0_final, a[1].x0_final);
        assert_eq!(a[0].states.len(), 51);
        assert_eq!(a[0].states.last().unwrap().0, 0);
        assert_eq!(a[1], sm.run(&y(), 1).unwrap());
    }

    #[test]
    fn mode_names_round_trip() {
        for m in [
            SamplerMode::Full,
            SamplerMode::Accelerated,
            SamplerMode::AcceleratedDdim { stride: 5, eta: 0.25 },
            SamplerMode::DiffusedStart,
        ] {
            assert_eq!(m.to_string().parse::<SamplerMode>().unwrap(), m);
        }
        assert_eq!(
            "accelerated_ddim:5".parse::<SamplerMode>().unwrap(),
            SamplerMode::AcceleratedDdim { stride: 5, eta: 0.0 }
        );
        assert!("ddim".parse::<SamplerMode>().is_err());
    }

    #[test]
    fn sweep_rows_and_compare() {
        let (s, w, stack) = setup(200);
        let problems = draw_problems(&w, 4, 2).unwrap();
        let cfg = SamplerConfig::new(SamplerMode::Accelerated, 0, 5).with_num_samples(2);
        let rows = sweep_tau(&s, |_| Ok(stack.clone()), &problems, &[0, 10, 50], &cfg).unwrap();
        assert_eq!(rows.iter().map(|r| r.nfe_total).collect::<Vec<_>>(), vec![1, 11, 51]);
        assert!(sweep_tau(&s, |_| Ok(stack.clone()), &problems, &[], &cfg).is_err());

        let rep = compare_starts(&s, &stack, &problems, 20, 3).unwrap();
        assert_eq!(rep.rows.len(), 4);
        assert_eq!(rep, compare_starts(&s, &stack, &problems, 20, 3).unwrap());
    }
}
