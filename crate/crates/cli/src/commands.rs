use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use steptiming::adapter::TimingMode;
use steptiming::sim::{max_push_sweep, run_scenario, SimConfig, SweepSettings};

use crate::report::{write_sweep_csv, write_trace_csv, Summary};
use crate::scenario::{builtin_text, echo_scenario, parse_scenario, BUILTIN_NAMES};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_FAILED: u8 = 2;

/// Where a scenario comes from.
#[derive(Debug, Clone)]
pub enum Source {
    File(PathBuf),
    Builtin(String),
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn load(src: &Source) -> Result<SimConfig, ConfigError> {
    let (label, text) = match src {
        Source::File(p) => {
            let text = fs::read_to_string(p).map_err(|e| ConfigError(format!("{}: {e}", p.display())))?;
            (p.display().to_string(), text)
        }
        Source::Builtin(name) => {
            let text = builtin_text(name).ok_or_else(|| {
                ConfigError(format!("unknown built-in scenario `{name}` (available: {})", BUILTIN_NAMES.join(", ")))
            })?;
            (format!("builtin:{name}"), text.to_string())
        }
    };
    parse_scenario(&text).map_err(|e| ConfigError(format!("{label}: {e}")))
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Run one scenario. Exit 0 when it recovered (or ran clean), 2 otherwise.
pub fn cmd_run(cfg: &SimConfig, mode: Option<TimingMode>, out: Option<&Path>, stdout: &mut dyn Write) -> Result<u8> {
    let mut cfg = cfg.clone();
    if let Some(m) = mode {
        cfg.mode = m;
    }
    cfg.record_cycles = out.is_some();
    let trace = run_scenario(&cfg)?;
    let summary = Summary::new(&cfg, &trace);
    let text = summary.render();
    if let Some(dir) = out {
        create_out(dir)?;
        let f = fs::File::create(dir.join("trace.csv"))?;
        write_trace_csv(&trace, BufWriter::new(f))?;
        fs::write(dir.join("summary.txt"), &text)?;
    }
    stdout.write_all(text.as_bytes())?;
    Ok(if summary.recovered { EXIT_OK } else { EXIT_FAILED })
}

#[derive(Debug, Clone, Copy)]
pub struct SweepArgs {
    pub theta_min: f64,
    pub theta_max: f64,
    pub theta_step: f64,
    pub settings: SweepSettings,
}

pub fn thetas(a: &SweepArgs) -> Result<Vec<f64>> {
    if !(a.theta_step > 0.0) || a.theta_max < a.theta_min {
        bail!(ConfigError("need theta_step > 0 and theta_min <= theta_max".into()));
    }
    let n = ((a.theta_max - a.theta_min) / a.theta_step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| a.theta_min + i as f64 * a.theta_step).collect())
}

/// Maximum recoverable push per direction for both controller modes.
pub fn cmd_sweep(cfg: &SimConfig, args: &SweepArgs, out: Option<&Path>, stdout: &mut dyn Write) -> Result<u8> {
    let th = thetas(args)?;
    let run = |mode| {
        let mut c = cfg.clone();
        c.mode = mode;
        max_push_sweep(&c, &th, &args.settings)
    };
    let adaptive = run(TimingMode::Adaptive)?;
    let fixed = run(TimingMode::Fixed)?;
    let mut buf = Vec::new();
    write_sweep_csv(&adaptive, &fixed, &mut buf)?;
    if let Some(dir) = out {
        create_out(dir)?;
        fs::write(dir.join("sweep.csv"), &buf)?;
    }
    stdout.write_all(&buf)?;
    Ok(EXIT_OK)
}

pub fn cmd_validate(cfg: &SimConfig, stdout: &mut dyn Write) -> io::Result<u8> {
    stdout.write_all(echo_scenario(cfg).as_bytes())?;
    Ok(EXIT_OK)
}
