//! Acceptance suite. Runs each criterion in sequence (so the runtime budgets
//! are measured without contention), prints one `PASS`/`FAIL` line per
//! criterion and exits non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use dpir_core::costmodel::cost_table;
use dpir_core::estimators::{DenoiserKind, EstimatorStack, FuserKind, RestorerKind};
use dpir_core::oracle::LinearGaussianWorld;
use dpir_core::sampler::{Sampler, SamplerConfig, SamplerMode};
use dpir_core::stats::{two_sample_mean_z, variance_ratio, Moments};
use dpir_core::verify;
use dpir_core::{NoiseSchedule, VarianceParam};
use nalgebra::DVector;

const SEED: u64 = 7;

const LEMMA2_REL_TOL: f64 = 1e-10;
const LEMMA2_PAIRS: usize = 200;
const LEMMA2_BUDGET: Duration = Duration::from_secs(5);

const LEMMA1_ABS_TOL: f64 = 1e-8;
const LEMMA1_WORLDS: usize = 100;
const LEMMA1_BUDGET: Duration = Duration::from_secs(10);

const PROP1_WORLDS: usize = 20;
const PROP1_DRAWS: usize = 100_000;
const PROP1_STD_ERRS: f64 = 3.0;
const PROP1_BUDGET: Duration = Duration::from_secs(60);

const TRACE_PAIRS: usize = 10;
const TRACE_DIM: usize = 6;
const TRACE_DRAWS: usize = 1_000_000;
const TRACE_STD_ERRS: f64 = 3.0;
const TRACE_BUDGET: Duration = Duration::from_secs(30);

const RECOVERY_RUNS: usize = 10_000;
const RECOVERY_TAU: usize = 250;
const RECOVERY_MEAN_STD_ERRS: f64 = 3.0;
const RECOVERY_TRACE_REL: f64 = 0.05;
const RECOVERY_TWO_SAMPLE_Z: f64 = 4.0;
const RECOVERY_BUDGET: Duration = Duration::from_secs(120);

const START_REL_TOL: f64 = 1e-10;

const DDIM_DRAWS: usize = 100_000;
const DDIM_TAU: usize = 100;
const DDIM_Z: f64 = 4.0;
const DDIM_VAR_RATIO: f64 = 0.03;

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

fn timed(budget: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let o = f();
    let took = start.elapsed();
    let in_budget = took < budget;
    Outcome::new(
        o.passed && in_budget,
        format!("{} runtime={:.1}s budget={}s", o.detail, took.as_secs_f64(), budget.as_secs()),
    )
}

fn from_report(report: &verify::SuiteReport) -> Outcome {
    let detail = report
        .checks
        .iter()
        .map(|c| format!("{}={:.3e}(tol {:.1e})", c.name, c.max_error, c.tolerance))
        .collect::<Vec<_>>()
        .join(" ");
    Outcome::new(report.passed(), detail)
}

fn linear(vp: VarianceParam) -> NoiseSchedule {
    NoiseSchedule::linear(1000, 1e-4, 2e-2, vp).unwrap()
}

fn exact_stack(w: &LinearGaussianWorld, s: &NoiseSchedule) -> EstimatorStack {
    EstimatorStack::from_kinds(w, s, DenoiserKind::Gaussian, RestorerKind::Mmse, &FuserKind::Exact, 0).unwrap()
}

fn lemma2() -> Outcome {
    timed(LEMMA2_BUDGET, || {
        from_report(&verify::lemma2(1000, LEMMA2_PAIRS, SEED, LEMMA2_REL_TOL).unwrap())
    })
}

fn lemma1() -> Outcome {
    timed(LEMMA1_BUDGET, || {
        from_report(&verify::lemma1(LEMMA1_WORLDS, SEED, LEMMA1_ABS_TOL).unwrap())
    })
}

fn prop1() -> Outcome {
    timed(PROP1_BUDGET, || {
        from_report(&verify::prop1(PROP1_WORLDS, PROP1_DRAWS, SEED, PROP1_STD_ERRS).unwrap())
    })
}

fn trace() -> Outcome {
    timed(TRACE_BUDGET, || {
        from_report(&verify::trace_lemma(TRACE_PAIRS, TRACE_DIM, TRACE_DRAWS, SEED, TRACE_STD_ERRS).unwrap())
    })
}

fn nfe() -> Outcome {
    let s = linear(VarianceParam::Beta);
    let w = LinearGaussianWorld::identity(1, 0.5).unwrap();
    let y = DVector::from_element(1, 0.3);
    let count = |mode, tau| {
        Sampler::new(&s, exact_stack(&w, &s), SamplerConfig::new(mode, tau, SEED))
            .unwrap()
            .run(&y, 0)
            .unwrap()
            .nfe_total
    };
    let got = [
        count(SamplerMode::Accelerated, 5),
        count(SamplerMode::AcceleratedDdim { stride: 5, eta: 0.0 }, 250),
        count(SamplerMode::Full, 0),
    ];
    let want = [6, 51, 1001];
    Outcome::new(got == want, format!("got {got:?} want {want:?}"))
}

fn cost() -> Outcome {
    let rows = cost_table(&[(1.2, 4.8, 500), (4.8, 5.2, 500), (4.8, 0.0, 10), (4.3, 1.9, 5)]).unwrap();
    let got: Vec<f64> = rows.iter().map(|r| r.total_tflop).collect();
    let want = [604.8, 2405.2, 48.0, 23.4];
    Outcome::new(got == want, format!("got {got:?} want {want:?}"))
}

fn recovery() -> Outcome {
    timed(RECOVERY_BUDGET, || {
        let s = linear(VarianceParam::Beta);
        let w = LinearGaussianWorld::random(3, 3, 1, 1.0).unwrap().with_sigma_y(0.1).unwrap();
        let y = DVector::from_vec(vec![0.3, -0.2, 0.5]);
        let post = w.cond_x0_given_y(&y).unwrap();
        let run = |mode, tau| {
            let cfg = SamplerConfig::new(mode, tau, SEED).with_num_samples(RECOVERY_RUNS);
            let traces = Sampler::new(&s, exact_stack(&w, &s), cfg).unwrap().run_many(&y, 0).unwrap();
            (0..3)
                .map(|d| Moments::from_slice(&traces.iter().map(|t| t.x0_final[d]).collect::<Vec<_>>()))
                .collect::<Vec<_>>()
        };
        let full = run(SamplerMode::Full, 0);
        let fast = run(SamplerMode::Accelerated, RECOVERY_TAU);
        let tr = post.cov.trace();
        let mut passed = true;
        let mut detail = String::new();
        for (label, m) in [("full", &full), ("accel", &fast)] {
            let z = (0..3)
                .map(|d| (m[d].mean() - post.mean[d]).abs() / m[d].std_err())
                .fold(0.0, f64::max);
            let trace_rel = (m.iter().map(Moments::variance).sum::<f64>() / tr - 1.0).abs();
            passed &= z < RECOVERY_MEAN_STD_ERRS && trace_rel < RECOVERY_TRACE_REL;
            detail += &format!("{label}: mean_z={z:.2} trace_rel={trace_rel:.3} ");
        }
        let z2 = (0..3).map(|d| two_sample_mean_z(&full[d], &fast[d])).fold(0.0, f64::max);
        passed &= z2 < RECOVERY_TWO_SAMPLE_Z;
        detail += &format!("full_vs_accel_z={z2:.2}");
        Outcome::new(passed, detail)
    })
}

fn start_equivalence() -> Outcome {
    let mut betas: Vec<f64> = (0..500).map(|i| 1e-4 + 4e-5 * i as f64).collect();
    *betas.last_mut().unwrap() = 1.0;
    let s = NoiseSchedule::synthetic(betas, VarianceParam::TildeBeta).unwrap();
    let w = LinearGaussianWorld::identity(2, 0.5).unwrap();
    let stack = exact_stack(&w, &s);
    let mut worst = 0.0f64;
    for tau in [1usize, 5, 50, 250, 400, 499] {
        let p = Sampler::new(&s, stack.clone(), SamplerConfig::new(SamplerMode::Accelerated, tau, SEED))
            .unwrap()
            .start_marginal();
        let b = Sampler::new(&s, stack.clone(), SamplerConfig::new(SamplerMode::DiffusedStart, tau, SEED))
            .unwrap()
            .start_marginal();
        worst = worst
            .max(verify::rel_err(p.mean_coeff, b.mean_coeff))
            .max(verify::rel_err(p.var, b.var));
    }
    Outcome::new(worst < START_REL_TOL, format!("max_rel={worst:.3e} tol={START_REL_TOL:e}"))
}

fn ddim_consistency() -> Outcome {
    let s = linear(VarianceParam::TildeBeta);
    let w = LinearGaussianWorld::identity(1, 0.4).unwrap();
    let y = DVector::from_element(1, 0.6);
    let run = |mode, seed| {
        let cfg = SamplerConfig::new(mode, DDIM_TAU, seed).with_num_samples(DDIM_DRAWS);
        let traces = Sampler::new(&s, exact_stack(&w, &s), cfg).unwrap().run_many(&y, 0).unwrap();
        Moments::from_slice(&traces.iter().map(|t| t.x0_final[0]).collect::<Vec<_>>())
    };
    let ancestral = run(SamplerMode::Accelerated, SEED);
    let ddim = run(SamplerMode::AcceleratedDdim { stride: 1, eta: 1.0 }, SEED + 1);
    let z = two_sample_mean_z(&ancestral, &ddim);
    let ratio = variance_ratio(&ancestral, &ddim);
    Outcome::new(
        z < DDIM_Z && (ratio - 1.0).abs() < DDIM_VAR_RATIO,
        format!("mean_z={z:.2} var_ratio={ratio:.4}"),
    )
}

const DETERMINISM_CONFIG: &str = r#"{
  "world": {"random": {"n": 3, "m": 3, "seed": 1, "sigma_y": 0.1}},
  "sampler": {"tau": 50, "mode": {"kind": "accelerated"}, "seed": 11, "num_samples": 4},
  "output_dir": "out",
  "problems": 8,
  "tau_list": [0, 10, 50]
}"#;

/// Every output file, with `runtime_ms` lines dropped (wall-clock time is
/// not a numeric result).
fn cli_outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let cfg = dir.join("config.json");
    std::fs::write(&cfg, DETERMINISM_CONFIG).unwrap();
    let cfg = cfg.to_str().unwrap().to_owned();
    let report = dir.join("lemma2.json").to_str().unwrap().to_owned();
    let runs: [&[&str]; 6] = [
        &["sample", "--config", &cfg],
        &["sweep-tau", "--config", &cfg],
        &["compare-starts", "--config", &cfg],
        &["schedule", "--merged", "1000:995,1000:750"],
        &["verify", "lemma2", "--pairs", "50", "--report", &report],
        &["cost"],
    ];
    let mut out = Vec::new();
    for (i, args) in runs.iter().enumerate() {
        let o = Command::new(env!("CARGO_BIN_EXE_dpir"))
            .args(*args)
            .env_remove("DPIR_SEED")
            .output()
            .unwrap();
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        out.push((format!("stdout{i}"), o.stdout));
    }
    let mut files: Vec<_> = std::fs::read_dir(dir.join("out"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .chain([dir.join("lemma2.json")])
        .collect();
    files.sort();
    for f in files {
        out.push((f.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&f).unwrap()));
    }
    out.into_iter()
        .map(|(name, bytes)| {
            let kept: Vec<&str> = std::str::from_utf8(&bytes)
                .unwrap()
                .lines()
                .filter(|l| !l.contains("runtime_ms") && !l.contains(" ms)"))
                .collect();
            (name, kept.join("\n").into_bytes())
        })
        .collect()
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (ra, rb) = (cli_outputs(a.path()), cli_outputs(b.path()));
    let differing: Vec<&str> = ra
        .iter()
        .zip(&rb)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    let passed = ra.len() == rb.len() && differing.is_empty();
    Outcome::new(passed, format!("{} outputs compared, differing: {differing:?}", ra.len()))
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        ("merged-kernel exactness", lemma2),
        ("conditional score identity", lemma1),
        ("fusion activation bound", prop1),
        ("trace identity", trace),
        ("NFE accounting", nfe),
        ("cost table", cost),
        ("posterior recovery", recovery),
        ("diffused-start equivalence", start_equivalence),
        ("DDIM consistency", ddim_consistency),
        ("CLI determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::new(false, format!("panicked: {msg}"))
        });
        if !o.passed {
            failed += 1;
        }
        println!(
            "{} criterion {:>2} {name}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
