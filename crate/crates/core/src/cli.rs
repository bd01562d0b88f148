//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 I/O error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::cube::CubeConfig;
use crate::error::Error;
use crate::event::{
    parse_event_text, read_event_records, validate_stream, ParseOptions, PolarityConvention,
    SensorGeometry,
};
use crate::lambda::{LambdaConfig, LambdaMode, DEFAULT_EPSILON};
use crate::pipeline::{run_reconstruct, run_simulate, ColorOutput, ReconstructionConfig};
use crate::render::NormalizationMode;
use crate::simulator::{SceneKind, SceneParams, SimulatorConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "evframe", version, about = "Reconstruct intensity frames from event-camera data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Reconstruct a frame stack from an event file
    Reconstruct(ReconstructArgs),
    /// Simulate an analytic scene into an event file plus ground truth
    Simulate(SimulateArgs),
    /// Validate an event file and print statistics
    Info(InfoArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LambdaArg {
    Sigmoid,
    Maxabs,
    Exp,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NormArg {
    Global,
    Perframe,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ColorArg {
    Gray,
    Map,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolarityArg {
    Signed,
    Zero01,
}

impl From<PolarityArg> for PolarityConvention {
    fn from(p: PolarityArg) -> Self {
        match p {
            PolarityArg::Signed => PolarityConvention::Signed,
            PolarityArg::Zero01 => PolarityConvention::ZeroOne,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SceneArg {
    Constant,
    Ramp,
    Sine,
}

#[derive(Debug, Args)]
struct SensorArgs {
    #[arg(long)]
    width: u16,
    #[arg(long)]
    height: u16,
}

#[derive(Debug, Args)]
struct ReconstructArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    sensor: SensorArgs,
    /// Events per window
    #[arg(long)]
    k: usize,
    /// Total events to use (default: all)
    #[arg(long)]
    nu: Option<usize>,
    #[arg(long, value_enum, default_value = "sigmoid")]
    lambda: LambdaArg,
    /// Floor for the maxabs weights
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long, value_enum, default_value = "global")]
    norm: NormArg,
    #[arg(long, value_enum, default_value = "gray")]
    color: ColorArg,
    #[arg(long, value_enum, default_value = "zero01")]
    polarity: PolarityArg,
    /// Stable-sort events by timestamp instead of rejecting unsorted input
    #[arg(long)]
    sort: bool,
    /// Worker threads (default: all available)
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    scene: SceneArg,
    #[command(flatten)]
    sensor: SensorArgs,
    /// Contrast threshold in log-luminance
    #[arg(long)]
    threshold: f64,
    /// Number of luminance samples
    #[arg(long)]
    samples: usize,
    /// Log-luminance amplitude (ramp: rise per period)
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
    #[arg(long, default_value_t = 1.0)]
    period: f64,
    /// Phase offset spread across the pixels, in periods
    #[arg(long, default_value_t = 1.0)]
    phase: f64,
    /// Simulated time span in seconds
    #[arg(long, default_value_t = 1.0)]
    duration: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct InfoArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    sensor: SensorArgs,
    #[arg(long, value_enum, default_value = "zero01")]
    polarity: PolarityArg,
}

fn exit_code(err: &Error) -> i32 {
    if err.is_io() {
        EXIT_IO
    } else {
        EXIT_DATA
    }
}

fn fail(stderr: &mut dyn Write, err: &dyn std::fmt::Display, code: i32) -> i32 {
    let _ = writeln!(stderr, "error: {err}");
    code
}

/// Runs the CLI on `args` (including the program name).
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    match cli.command {
        Command::Reconstruct(a) => reconstruct(a, stdout, stderr),
        Command::Simulate(a) => simulate(a, stdout, stderr),
        Command::Info(a) => info(a, stdout, stderr),
    }
}

fn geometry(sensor: &SensorArgs) -> Result<SensorGeometry, Error> {
    SensorGeometry::new(sensor.width, sensor.height)
}

fn reconstruct(a: ReconstructArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let setup = || -> Result<_, Error> {
        let geometry = geometry(&a.sensor)?;
        let mode = match a.lambda {
            LambdaArg::Sigmoid => LambdaMode::Sigmoid,
            LambdaArg::Maxabs => LambdaMode::MaxAbs,
            LambdaArg::Exp => LambdaMode::Exponential,
        };
        let config = ReconstructionConfig {
            cube: CubeConfig::new(a.k, a.nu)?,
            lambda: LambdaConfig::new(mode, a.epsilon)?,
            normalization: match a.norm {
                NormArg::Global => NormalizationMode::Global,
                NormArg::Perframe => NormalizationMode::PerFrame,
            },
            color: match a.color {
                ColorArg::Gray => ColorOutput::Gray,
                ColorArg::Map => ColorOutput::Map,
            },
            output_dir: a.out.clone(),
            threads: a.threads,
        };
        let mut options = ParseOptions::new(a.polarity.into());
        options.sort = a.sort;
        let file = File::open(&a.input)?;
        let stream = parse_event_text(BufReader::new(file), geometry, options)?;
        Ok((stream, config))
    };
    let (stream, config) = match setup() {
        Ok(v) => v,
        Err(e) => return fail(stderr, &e, exit_code(&e)),
    };
    match run_reconstruct(&stream, &config) {
        Ok(report) => {
            let _ = write!(stdout, "{report}");
            EXIT_OK
        }
        Err(e) => fail(stderr, &e, exit_code(&e.source)),
    }
}

fn simulate(a: SimulateArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let result = (|| -> Result<_, Error> {
        let config = SimulatorConfig::new(a.threshold, geometry(&a.sensor)?)?;
        let scene = SceneParams {
            kind: match a.scene {
                SceneArg::Constant => SceneKind::Constant,
                SceneArg::Ramp => SceneKind::Ramp,
                SceneArg::Sine => SceneKind::Sine,
            },
            amplitude: a.amplitude,
            period: a.period,
            spatial_phase: a.phase,
            duration: a.duration,
            samples: a.samples,
        };
        run_simulate(&scene, &config, &a.out)
    })();
    match result {
        Ok(report) => {
            let _ = write!(stdout, "{report}");
            EXIT_OK
        }
        Err(e) => fail(stderr, &e, exit_code(&e)),
    }
}

fn info(a: InfoArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let result = (|| -> Result<_, Error> {
        let geometry = geometry(&a.sensor)?;
        let file = File::open(&a.input)?;
        let records = read_event_records(BufReader::new(file), a.polarity.into())?;
        let events: Vec<_> = records.iter().map(|r| r.event).collect();
        Ok(validate_stream(geometry, &events))
    })();
    let report = match result {
        Ok(r) => r,
        Err(e) => return fail(stderr, &e, exit_code(&e)),
    };
    let mut out = String::new();
    out.push_str(&format!("count: {}\n", report.count));
    match report.time_span {
        Some((t0, t1)) => out.push_str(&format!("time_span: [{t0}, {t1}]\n")),
        None => out.push_str("time_span: none\n"),
    }
    out.push_str(&format!("on_events: {}\n", report.on_count));
    out.push_str(&format!("off_events: {}\n", report.off_count));
    out.push_str(&format!("max_events_per_pixel: {}\n", report.max_events_per_pixel));
    out.push_str(&format!("violations: {}\n", report.violations.len()));
    for v in &report.violations {
        out.push_str(&format!("violation: {v}\n"));
    }
    let _ = write!(stdout, "{out}");
    if report.is_valid() {
        EXIT_OK
    } else {
        EXIT_DATA
    }
}
