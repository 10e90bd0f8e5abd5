//! `flexitac`: drive the virtual tactile pad from the command line.
//!
//! Exit codes: 0 success, 2 usage, 3 validation/config errors,
//! 4 runtime/transport errors.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "flexitac", version, about = "Virtual tactile pad toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scene into a frame log (.ftlog).
    Simulate {
        /// Scene description JSON.
        #[arg(long)]
        scene: PathBuf,
        /// Output frame log path.
        #[arg(long)]
        out: PathBuf,
        /// Sensor-noise RNG seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the virtual device, streaming encoded frames at a fixed rate.
    Stream {
        /// Scene description JSON; one physics step per frame.
        #[arg(long)]
        scene: PathBuf,
        /// Frame rate in hertz.
        #[arg(long, default_value_t = 100.0)]
        rate_hz: f64,
        /// Number of frames to emit.
        #[arg(long)]
        frames: u64,
        /// Sink: a file path or tcp://HOST:PORT.
        #[arg(long)]
        out: String,
        /// Emit back-to-back without pacing; bytes are identical to the
        /// real-time stream.
        #[arg(long)]
        non_realtime: bool,
        /// Sensor-noise RNG seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Feed a frame log through the decoder and print stream statistics.
    Replay {
        /// Input .ftlog.
        #[arg(long)]
        log: PathBuf,
    },
    /// Fit (k_n, k_d) from a log against a replayed scene and report
    /// histogram overlap before/after.
    Calibrate {
        /// Input .ftlog with the measured response.
        #[arg(long)]
        log: PathBuf,
        /// Scene that replays the same load schedule.
        #[arg(long)]
        scene: PathBuf,
        /// Taxel whose curve drives the fit, as R,C.
        #[arg(long, value_parser = commands::parse_taxel)]
        taxel: (usize, usize),
        /// Report JSON output path.
        #[arg(long)]
        out: PathBuf,
        /// Seed for the before/after re-simulations.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Histogram bins over the normalized range.
        #[arg(long, default_value_t = 32)]
        bins: usize,
        /// Also write the extracted force-response curve CSV here.
        #[arg(long)]
        dump_curve: Option<PathBuf>,
    },
    /// Lift tactile frames to 3D points and merge with a visual cloud.
    Fuse {
        /// Input .ftlog.
        #[arg(long)]
        log: PathBuf,
        /// Visual points CSV with columns x_m,y_m,z_m,feature.
        #[arg(long)]
        visual: PathBuf,
        /// Output fused CSV path; without --frame-index one file per
        /// frame is written with a .NNNNN index suffix.
        #[arg(long)]
        out: PathBuf,
        /// Pad pose as w,x,y,z,tx,ty,tz (identity if omitted).
        #[arg(long)]
        pose: Option<String>,
        /// Expected pad preset, cross-checked against the log.
        #[arg(long)]
        pad: Option<String>,
        /// Fuse only this frame index.
        #[arg(long)]
        frame_index: Option<usize>,
        /// Drop tactile points with normalized magnitude below this.
        #[arg(long, default_value_t = 0.0)]
        drop_below: f64,
        /// Normalization noise floor in counts.
        #[arg(long, default_value_t = 0)]
        noise_floor: u16,
        /// Normalization full scale in counts (default: ADC max).
        #[arg(long)]
        full_scale: Option<u16>,
    },
    /// Print per-taxel min/max/mean over a log.
    Stats {
        /// Input .ftlog.
        #[arg(long)]
        log: PathBuf,
        /// Expected pad preset, cross-checked against the log.
        #[arg(long)]
        pad: Option<String>,
    },
}

fn main() -> ExitCode {
    // Die quietly on SIGPIPE (e.g. `flexitac stats ... | head`) instead
    // of panicking on a failed stdout write.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }

    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(commands::CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(4)
        }
    }
}
