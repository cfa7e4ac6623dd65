use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use steptiming::adapter::TimingMode;
use steptiming::sim::SweepSettings;
use steptiming_cli::commands::{self, ConfigError, Source, SweepArgs, EXIT_CONFIG, EXIT_FAILED};

#[derive(Parser)]
#[command(name = "steptiming", version, about = "Step location and timing adaptation on a LIPM biped")]
struct Cli {
    /// Use an embedded scenario (fig2a, fig2b, nominal_1ms, inplace) instead of a file.
    #[arg(long, global = true, value_name = "NAME")]
    scenario_builtin: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Adaptive,
    Fixed,
}

impl From<Mode> for TimingMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Adaptive => TimingMode::Adaptive,
            Mode::Fixed => TimingMode::Fixed,
        }
    }
}

#[derive(Args)]
struct ScenarioArg {
    /// Scenario file.
    scenario: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario; writes trace.csv and summary.txt with --out.
    Run {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Override the controller mode of the scenario.
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Maximum recoverable push per direction, adaptive vs fixed timing.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long, default_value_t = -90.0, allow_negative_numbers = true)]
        theta_min: f64,
        #[arg(long, default_value_t = 90.0, allow_negative_numbers = true)]
        theta_max: f64,
        #[arg(long, default_value_t = 15.0)]
        theta_step: f64,
        /// Push onset (s); defaults to the start of the first left-stance step after one step.
        #[arg(long)]
        push_time: Option<f64>,
        #[arg(long, default_value_t = 0.1)]
        push_duration: f64,
        #[arg(long, default_value_t = 1500.0)]
        force_max: f64,
        #[arg(long, default_value_t = 1.0)]
        resolution: f64,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Parse a scenario and print the effective configuration.
    Validate {
        #[command(flatten)]
        scenario: ScenarioArg,
    },
}

fn source(arg: &ScenarioArg, builtin: &Option<String>) -> Result<Source, ConfigError> {
    match (&arg.scenario, builtin) {
        (Some(p), None) => Ok(Source::File(p.clone())),
        (None, Some(b)) => Ok(Source::Builtin(b.clone())),
        (Some(_), Some(_)) => Err(ConfigError("give either a scenario file or --scenario-builtin, not both".into())),
        (None, None) => Err(ConfigError("no scenario given (file path or --scenario-builtin NAME)".into())),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let arg = match &cli.command {
        Command::Run { scenario, .. } | Command::Sweep { scenario, .. } | Command::Validate { scenario } => scenario,
    };
    let cfg = match source(arg, &cli.scenario_builtin).and_then(|s| commands::load(&s)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let mut out = io::stdout().lock();
    let result = match &cli.command {
        Command::Run { out: dir, mode, .. } => commands::cmd_run(&cfg, mode.map(Into::into), dir.as_deref(), &mut out),
        Command::Sweep { theta_min, theta_max, theta_step, push_time, push_duration, force_max, resolution, out: dir, .. } => {
            let args = SweepArgs {
                theta_min: *theta_min,
                theta_max: *theta_max,
                theta_step: *theta_step,
                settings: SweepSettings {
                    push_time: *push_time,
                    push_duration: *push_duration,
                    force_max: *force_max,
                    resolution: *resolution,
                },
            };
            commands::cmd_sweep(&cfg, &args, dir.as_deref(), &mut out)
        }
        Command::Validate { .. } => commands::cmd_validate(&cfg, &mut out).map_err(Into::into),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let config = e.downcast_ref::<ConfigError>().is_some()
                || e.downcast_ref::<steptiming::sim::SimError>().is_some_and(|s| matches!(s, steptiming::sim::SimError::Config(_)));
            ExitCode::from(if config { EXIT_CONFIG } else { EXIT_FAILED })
        }
    }
}
