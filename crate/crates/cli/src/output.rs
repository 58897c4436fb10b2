//! Result files. Every file is rendered fully in memory first and then
//! moved into place, so a failed run never leaves a partial file behind.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use dpir_core::sampler::SampleTrace;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write `contents` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// `step_index,t,nfe_denoiser,nfe_fuser,x[0],x[1],...`, one row per visited state.
pub fn trace_csv(trace: &SampleTrace) -> String {
    let dim = trace.x0_final.len();
    let mut out = String::from("step_index,t,nfe_denoiser,nfe_fuser");
    for i in 0..dim {
        let _ = write!(out, ",x[{i}]");
    }
    out.push('\n');
    for (step, (t, x)) in trace.states.iter().enumerate() {
        // the start state precedes every evaluation; each later state follows one
        let _ = write!(out, "{step},{t},{step},{step}");
        for v in x.iter() {
            out.push(',');
            out.push_str(&num(*v));
        }
        out.push('\n');
    }
    out
}
