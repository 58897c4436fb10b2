//! `dpir`: schedules, verification suites, sampling experiments and cost tables.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or configuration error.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use dpir_core::costmodel::{cost_table, CostRow};
use dpir_core::kernels::merged_coeffs_csv;
use dpir_core::metrics::{self, MetricReport};
use dpir_core::sampler::{compare_starts, draw_problems, sweep_tau, Sampler, SamplerMode, SweepRow, TraceFlag};
use dpir_core::verify::{self, SuiteReport};
use dpir_core::{NoiseSchedule, VarianceParam};
use serde::Serialize;

use config::{ConfigError, ExperimentConfig, LoadedConfig, Tolerances, SEED_ENV};
use output::{num, trace_csv, write_atomic};

#[derive(Debug, Parser)]
#[command(name = "dpir", version, about = "Conditional diffusion sampling with a restoration prior")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Dump the noise schedule (and optionally merged-kernel coefficients) as CSV.
    Schedule {
        #[arg(long = "T", default_value_t = 1000)]
        steps: usize,
        #[arg(long, default_value_t = 1e-4)]
        beta_start: f64,
        #[arg(long, default_value_t = 2e-2)]
        beta_end: f64,
        #[arg(long, default_value = "beta")]
        variance_param: VarianceParam,
        /// Merged-kernel pairs `t:k`; switches the output to `t,k,c_x0,c_xt,var`.
        #[arg(long, value_delimiter = ',')]
        merged: Vec<String>,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a property suite and print pass/fail with the worst error.
    Verify {
        suite: Suite,
        #[arg(long = "T", default_value_t = 1000)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// (t, k) pairs for lemma2.
        #[arg(long, default_value_t = 200)]
        pairs: usize,
        /// Random worlds (lemma1: 100, prop1: 20) or (sigma, B) pairs (trace: 10).
        #[arg(long)]
        worlds: Option<usize>,
        /// Monte-Carlo draws (prop1: 1e5, trace: 1e6).
        #[arg(long)]
        draws: Option<usize>,
        /// Read tolerances from an experiment config.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// One sampling run: writes trace.csv and summary.json.
    Sample {
        #[arg(long)]
        config: PathBuf,
    },
    /// MSE against tau: writes sweep.csv and summary.json.
    SweepTau {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `tau_list` from the config.
        #[arg(long, value_delimiter = ',')]
        taus: Vec<usize>,
    },
    /// Merged-jump start against the diffused start on paired runs.
    CompareStarts {
        #[arg(long)]
        config: PathBuf,
    },
    /// `per_nfe * nfe + fixed` for each triple; the published reference rows when none given.
    Cost {
        #[arg(long)]
        per_nfe: Vec<f64>,
        #[arg(long)]
        fixed: Vec<f64>,
        #[arg(long)]
        nfe: Vec<u64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Lemma1,
    Lemma2,
    Prop1,
    Trace,
    Ddim,
}

/// Why a command did not succeed.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Verification,
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<dpir_core::DpirError> for Failure {
    fn from(e: dpir_core::DpirError) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Usage(format!("cannot write {}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Schedule {
            steps,
            beta_start,
            beta_end,
            variance_param,
            merged,
            out,
        } => cmd_schedule(steps, beta_start, beta_end, variance_param, &merged, out.as_deref()),
        Command::Verify {
            suite,
            steps,
            seed,
            pairs,
            worlds,
            draws,
            config,
            report,
        } => {
            let tol = match config {
                Some(p) => load(&p)?.config.tolerances,
                None => Tolerances::default(),
            };
            cmd_verify(suite, steps, seed, pairs, worlds, draws, &tol, report.as_deref())
        }
        Command::Sample { config } => cmd_sample(&load(&config)?),
        Command::SweepTau { config, taus } => cmd_sweep(&load(&config)?, taus),
        Command::CompareStarts { config } => cmd_compare(&load(&config)?),
        Command::Cost { per_nfe, fixed, nfe } => cmd_cost(&per_nfe, &fixed, &nfe),
    }
}

fn load(path: &Path) -> Result<LoadedConfig, Failure> {
    let seed = std::env::var(SEED_ENV).ok();
    Ok(ExperimentConfig::load(path, seed.as_deref())?)
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => write_atomic(p, text).map_err(|e| io_failure(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_schedule(
    steps: usize,
    beta_start: f64,
    beta_end: f64,
    vp: VarianceParam,
    merged: &[String],
    out: Option<&Path>,
) -> Result<(), Failure> {
    let s = NoiseSchedule::linear(steps, beta_start, beta_end, vp)?;
    if merged.is_empty() {
        return emit(out, &s.to_csv());
    }
    let pairs = merged
        .iter()
        .map(|p| {
            let (t, k) = p
                .split_once(':')
                .ok_or_else(|| Failure::Usage(format!("--merged expects t:k, got `{p}`")))?;
            let parse = |v: &str| v.parse::<usize>().map_err(|_| Failure::Usage(format!("--merged: bad integer `{v}`")));
            Ok((parse(t)?, parse(k)?))
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    emit(out, &merged_coeffs_csv(&s, &pairs)?)
}

#[allow(clippy::too_many_arguments)]
fn cmd_verify(
    suite: Suite,
    steps: usize,
    seed: u64,
    pairs: usize,
    worlds: Option<usize>,
    draws: Option<usize>,
    tol: &Tolerances,
    report_path: Option<&Path>,
) -> Result<(), Failure> {
    let report: SuiteReport = match suite {
        Suite::Lemma2 => verify::lemma2(steps, pairs, seed, tol.lemma2_rel)?,
        Suite::Lemma1 => verify::lemma1(worlds.unwrap_or(100), seed, tol.lemma1_abs)?,
        Suite::Prop1 => verify::prop1(worlds.unwrap_or(20), draws.unwrap_or(100_000), seed, tol.mc_std_errs)?,
        Suite::Trace => verify::trace_lemma(worlds.unwrap_or(10), 6, draws.unwrap_or(1_000_000), seed, tol.mc_std_errs)?,
        Suite::Ddim => verify::ddim(steps, seed, tol.ddim_rel)?,
    };
    print!("{}", report.render());
    if let Some(p) = report_path {
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        write_atomic(p, &(json + "\n")).map_err(|e| io_failure(p, e))?;
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}

#[derive(Debug, Serialize)]
struct SampleSummary {
    config_hash: String,
    seed: u64,
    mode: String,
    tau: usize,
    nfe_total: usize,
    nfe_denoiser: usize,
    nfe_restorer: usize,
    nfe_fuser: usize,
    mse: f64,
    metrics: MetricReport,
    restorer_mse: f64,
    flags: Vec<TraceFlag>,
    runtime_ms: u128,
}

fn to_json(v: &impl Serialize) -> String {
    serde_json::to_string_pretty(v).expect("summary serializes") + "\n"
}

fn cmd_sample(loaded: &LoadedConfig) -> Result<(), Failure> {
    let start = Instant::now();
    let c = &loaded.config;
    let schedule = c.schedule.build()?;
    let world = c.world.build(&loaded.base_dir)?;
    let stack = c.estimators.build(&world, &schedule, c.sampler.tau)?;
    let sampler = Sampler::new(&schedule, stack, c.sampler.clone().with_states(true))?;
    let problem = draw_problems(&world, 1, c.sampler.seed)?.remove(0);
    let trace = sampler.run(&problem.y, 0)?;
    let report = metrics::evaluate(&problem.x0, &trace.x0_final, 1.0)?;
    let summary = SampleSummary {
        config_hash: c.hash(),
        seed: c.sampler.seed,
        mode: c.sampler.mode.to_string(),
        tau: c.sampler.tau,
        nfe_total: trace.nfe_total,
        nfe_denoiser: trace.nfe_denoiser,
        nfe_restorer: trace.nfe_restorer,
        nfe_fuser: trace.nfe_fuser,
        mse: report.mse,
        metrics: report,
        restorer_mse: metrics::mse(&problem.x0, &trace.restorer_output)?,
        flags: trace.flags.clone(),
        runtime_ms: start.elapsed().as_millis(),
    };
    let dir = &loaded.output_dir();
    let trace_text = trace_csv(&trace);
    let summary_text = to_json(&summary);
    write_out(dir, &[("trace.csv", &trace_text), ("summary.json", &summary_text)])?;
    print!("{summary_text}");
    Ok(())
}

fn write_out(dir: &Path, files: &[(&str, &str)]) -> Result<(), Failure> {
    for (name, text) in files {
        let p = dir.join(name);
        write_atomic(&p, text).map_err(|e| io_failure(&p, e))?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct SweepSummary {
    config_hash: String,
    seed: u64,
    mode: String,
    problems: usize,
    num_samples: usize,
    rows: Vec<SweepRow>,
    runtime_ms: u128,
}

fn cmd_sweep(loaded: &LoadedConfig, taus: Vec<usize>) -> Result<(), Failure> {
    let start = Instant::now();
    let c = &loaded.config;
    let tau_list = if taus.is_empty() { c.tau_list.clone() } else { taus };
    if tau_list.is_empty() {
        return Err(ConfigError::new("tau_list", "is empty and no --taus given").into());
    }
    let schedule = c.schedule.build()?;
    let world = c.world.build(&loaded.base_dir)?;
    let problems = draw_problems(&world, c.problems, c.sampler.seed)?;
    let rows = sweep_tau(
        &schedule,
        |tau| c.estimators.build(&world, &schedule, tau).map_err(|e| dpir_core::DpirError::Estimator(e.to_string())),
        &problems,
        &tau_list,
        &c.sampler,
    )?;
    let mut csv = String::from("tau,mse,mse_std_err,nfe_total\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{},{}\n", r.tau, num(r.mse), num(r.mse_std_err), r.nfe_total));
    }
    let summary = to_json(&SweepSummary {
        config_hash: c.hash(),
        seed: c.sampler.seed,
        mode: c.sampler.mode.to_string(),
        problems: c.problems,
        num_samples: c.sampler.num_samples,
        rows,
        runtime_ms: start.elapsed().as_millis(),
    });
    write_out(&loaded.output_dir(), &[("sweep.csv", &csv), ("summary.json", &summary)])?;
    print!("{csv}");
    Ok(())
}

#[derive(Debug, Serialize)]
struct CompareSummary {
    config_hash: String,
    seed: u64,
    tau: usize,
    nfe_total: usize,
    problems: usize,
    mse: f64,
    mse_baseline: f64,
    mean_diff: f64,
    diff_std_err: f64,
    runtime_ms: u128,
}

fn cmd_compare(loaded: &LoadedConfig) -> Result<(), Failure> {
    let start = Instant::now();
    let c = &loaded.config;
    if c.sampler.mode != SamplerMode::Accelerated {
        return Err(ConfigError::new("sampler.mode", "compare-starts needs {\"kind\": \"accelerated\"}").into());
    }
    let schedule = c.schedule.build()?;
    let world = c.world.build(&loaded.base_dir)?;
    let stack = c.estimators.build(&world, &schedule, c.sampler.tau)?;
    let problems = draw_problems(&world, c.problems, c.sampler.seed)?;
    let rep = compare_starts(&schedule, &stack, &problems, c.sampler.tau, c.sampler.seed)?;
    let mut csv = String::from("run,mse_proposed,mse_baseline\n");
    for r in &rep.rows {
        csv.push_str(&format!("{},{},{}\n", r.run, num(r.mse_proposed), num(r.mse_baseline)));
    }
    let summary = to_json(&CompareSummary {
        config_hash: c.hash(),
        seed: c.sampler.seed,
        tau: rep.tau,
        nfe_total: rep.tau + 1,
        problems: rep.rows.len(),
        mse: rep.mean_proposed,
        mse_baseline: rep.mean_baseline,
        mean_diff: rep.mean_diff,
        diff_std_err: rep.diff_std_err,
        runtime_ms: start.elapsed().as_millis(),
    });
    write_out(&loaded.output_dir(), &[("compare.csv", &csv), ("summary.json", &summary)])?;
    print!("{summary}");
    Ok(())
}

/// Published reference configurations `(x, y, NFE)`.
const REFERENCE_COSTS: [(f64, f64, u64); 4] = [(1.2, 4.8, 500), (4.8, 5.2, 500), (4.8, 0.0, 10), (4.3, 1.9, 5)];

fn cmd_cost(per_nfe: &[f64], fixed: &[f64], nfe: &[u64]) -> Result<(), Failure> {
    let triples: Vec<(f64, f64, u64)> = if per_nfe.is_empty() && fixed.is_empty() && nfe.is_empty() {
        REFERENCE_COSTS.to_vec()
    } else {
        if per_nfe.len() != nfe.len() || fixed.len() > per_nfe.len() {
            return Err(Failure::Usage(format!(
                "cost needs one --per-nfe and --nfe per row (got {} and {}); --fixed defaults to 0",
                per_nfe.len(),
                nfe.len()
            )));
        }
        per_nfe
            .iter()
            .zip(nfe)
            .enumerate()
            .map(|(i, (&x, &n))| (x, fixed.get(i).copied().unwrap_or(0.0), n))
            .collect()
    };
    let rows: Vec<CostRow> = cost_table(&triples)?;
    println!("{}", serde_json::to_string_pretty(&rows).expect("cost rows serialize"));
    Ok(())
}
