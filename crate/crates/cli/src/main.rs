use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod manifest;
mod plot;

/// Turn-on transient simulation and E_on prediction for a SiC half-bridge.
#[derive(Debug, Parser)]
#[command(name = "turnon", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one turn-on from a configuration file.
    Simulate(SimulateArgs),
    /// Predict E_on from device curves alone, for one or more ΔV values.
    Predict(PredictArgs),
    /// Repeat a simulation or prediction over a list of parameter values.
    Sweep(SweepArgs),
    /// Check the comparison table and, with curves, rerun its predictions.
    Validate(ValidateArgs),
    /// Segment an existing trace CSV into turn-on phases.
    Phases(PhasesArgs),
}

/// Values that replace the corresponding configuration entries.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long, allow_negative_numbers = true)]
    pub v_dc: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub delta_v: Option<f64>,
    /// Load current magnitude (A).
    #[arg(long, allow_negative_numbers = true)]
    pub i_l: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub r_g_s1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub gate_on: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub t_end: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub rel_tol: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub abs_tol: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub max_step: Option<f64>,
    /// Recovery charge of S2 (C).
    #[arg(long, allow_negative_numbers = true)]
    pub q_rr_s2: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
    /// Also write waveforms.svg.
    #[arg(long)]
    pub plot: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Device manifest path or `builtin:sic80`.
    #[arg(long)]
    pub device_s1: String,
    /// Defaults to the S1 device.
    #[arg(long)]
    pub device_s2: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub v_dc: f64,
    /// Comma-separated ΔV values (V).
    #[arg(
        long,
        value_delimiter = ',',
        required = true,
        allow_negative_numbers = true
    )]
    pub delta_v: Vec<f64>,
    #[arg(long, allow_negative_numbers = true, default_value_t = 10.0)]
    pub i_out: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = 20.0)]
    pub gate_on: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = 10.0)]
    pub r_g: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = 20.0)]
    pub v_ds_probe: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    #[value(name = "delta_v_v")]
    DeltaV,
    #[value(name = "v_dc_v")]
    VDc,
    #[value(name = "i_l_a")]
    ILoad,
    #[value(name = "r_g_s1_ohm")]
    RGate,
    /// Multiplies both solver tolerances.
    #[value(name = "tol_scale")]
    TolScale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepMode {
    Simulate,
    Predict,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_enum)]
    pub param: SweepParam,
    #[arg(
        long,
        value_delimiter = ',',
        required = true,
        allow_negative_numbers = true
    )]
    pub values: Vec<f64>,
    #[arg(long, value_enum, default_value = "simulate")]
    pub mode: SweepMode,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Folder holding comparison_devices.json and the device curves.
    #[arg(long)]
    pub curve_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Exit nonzero when the table arithmetic check fails.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct PhasesArgs {
    #[arg(long)]
    pub trace: PathBuf,
    /// Configuration supplying devices, scenario and segmentation settings.
    #[arg(long, conflicts_with_all = ["device_s1", "device_s2", "scenario"])]
    pub config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    pub device_s1: Option<String>,
    #[arg(long)]
    pub device_s2: Option<String>,
    /// zvs, hs, izvs_case1 or izvs_case2.
    #[arg(long, required_unless_present = "config")]
    pub scenario: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub plot: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Validate(a) => commands::validate(&a),
        Command::Phases(a) => commands::phases(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
