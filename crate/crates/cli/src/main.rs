//! `irrisim`: calibrate, simulate and evaluate the spiking irrigation
//! controller, and report its energy.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;

use config::{Mode, Overrides, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "irrisim",
    version,
    about = "Spiking irrigation controller on a simulated neuromorphic fabric"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML run configuration; a previous run's manifest.toml reproduces it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, value_enum)]
    crop: Option<Crop>,
    /// Keep every n-th sensor sample.
    #[arg(long, global = true, value_name = "N")]
    stride: Option<usize>,
    /// Device mismatch coefficient of variation.
    #[arg(long, global = true, value_name = "F")]
    cv: Option<f64>,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    /// Integration step in ms.
    #[arg(long, global = true, value_name = "MS")]
    dt: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Crop {
    Apple,
    Kiwi,
    Custom,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Compressed,
    Realtime,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the controller on a sensor series (synthetic if no input).
    Simulate {
        /// SMP CSV (`timestamp_iso8601,smp_kpa`).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Fill missing sample slots with the previous reading.
        #[arg(long)]
        fill_gaps: bool,
    },
    /// FI curves of the calibrated encoder groups and the state neuron.
    FiCurve,
    /// Calibrate the encoder and tune the attractor weight.
    Calibrate,
    /// Compare network commands with the hysteresis oracle.
    Evaluate {
        /// SMP CSV to derive oracle commands from; without it a synthetic
        /// batch is evaluated per crop.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Network commands CSV (`t_iso8601,action`).
        #[arg(long)]
        commands: Option<PathBuf>,
        /// Compare the oracle with itself.
        #[arg(long)]
        self_compare: bool,
        /// Synthetic traces per crop.
        #[arg(long)]
        traces: Option<usize>,
        #[arg(long)]
        fill_gaps: bool,
    },
    /// Energy of an event log and the duty-cycle budget.
    Power {
        /// Event log, CSV or `.bin`.
        #[arg(long)]
        events: Option<PathBuf>,
        /// NetworkSpec TOML the log was produced on.
        #[arg(long)]
        network: Option<PathBuf>,
        #[arg(long, value_name = "PJ")]
        e_spike: Option<u64>,
        #[arg(long, value_name = "PJ")]
        e_enc: Option<u64>,
        #[arg(long, value_name = "PJ")]
        e_br: Option<u64>,
        #[arg(long, value_name = "PJ")]
        e_rt: Option<u64>,
        #[arg(long, value_name = "PJ")]
        e_pulse: Option<u64>,
    },
    /// Generate a synthetic SMP series.
    Synth,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::FiCurve => "fi-curve",
            Command::Calibrate => "calibrate",
            Command::Evaluate { .. } => "evaluate",
            Command::Power { .. } => "power",
            Command::Synth => "synth",
        }
    }
}

/// Failure with its exit status.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(irrisim_core::Error),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(irrisim_core::Error::Divergence { .. }) => 3,
            CliError::Core(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => e.fmt(f),
        }
    }
}

impl From<irrisim_core::Error> for CliError {
    fn from(e: irrisim_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

fn overrides(cli: &Cli) -> Overrides {
    let c = &cli.common;
    let mut o = Overrides {
        seed: c.seed,
        cv: c.cv,
        crop: c.crop.map(|k| {
            match k {
                Crop::Apple => "apple",
                Crop::Kiwi => "kiwi",
                Crop::Custom => "custom",
            }
            .to_string()
        }),
        stride: c.stride,
        mode: c.mode.map(|m| match m {
            ModeArg::Compressed => Mode::Compressed,
            ModeArg::Realtime => Mode::Realtime,
        }),
        dt_ms: c.dt,
        ..Overrides::default()
    };
    match &cli.command {
        Command::Simulate { input, fill_gaps } => {
            o.input.clone_from(input);
            o.fill_gaps = *fill_gaps;
        }
        Command::Evaluate {
            input,
            commands,
            self_compare,
            traces,
            fill_gaps,
        } => {
            o.input.clone_from(input);
            o.commands.clone_from(commands);
            o.self_compare = *self_compare;
            o.traces = *traces;
            o.fill_gaps = *fill_gaps;
        }
        Command::Power {
            events,
            network,
            e_spike,
            e_enc,
            e_br,
            e_rt,
            e_pulse,
        } => {
            o.events.clone_from(events);
            o.network.clone_from(network);
            o.e_spike_pj = *e_spike;
            o.e_enc_pj = *e_enc;
            o.e_br_pj = *e_br;
            o.e_rt_pj = *e_rt;
            o.e_pulse_pj = *e_pulse;
        }
        Command::FiCurve | Command::Calibrate | Command::Synth => {}
    }
    o
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(&overrides(&cli));
    cfg.command = cli.command.name().to_string();
    cfg.validate()?;
    std::fs::create_dir_all(&cli.common.out)?;
    commands::dispatch(cfg, &cli.common.out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
