use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use tiltbeam::harness::{self, CsvSink, ExperimentConfig, GainRow, Mode, SweepRow};
use tiltbeam::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_DIAGNOSTIC: u8 = 3;

#[derive(Parser)]
#[command(name = "tiltbeam", version, about = "Energy-efficient joint beamforming and antenna tilt")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a power sweep and write the result CSV.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Built-in preset used when no config file is given (desk or full).
        #[arg(long, default_value = "desk")]
        preset: String,
        #[arg(long, default_value = "results.csv")]
        out: PathBuf,
        /// Optional CSV of 3D-over-2D gains per sweep point.
        #[arg(long)]
        gain_out: Option<PathBuf>,
        #[arg(long)]
        drops: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Solve one drop with full outer and inner traces.
    Drop {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, default_value_t = 46.0)]
        p_dbm: f64,
        #[arg(long, default_value = "3d_cluster")]
        mode: Mode,
    },
    /// Run the built-in consistency checks.
    Validate {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print configuration.
    Config {
        #[arg(long)]
        print_defaults: bool,
        #[arg(long, default_value = "desk")]
        preset: String,
    },
}

fn load(config: Option<&PathBuf>, preset: &str) -> tiltbeam::Result<ExperimentConfig> {
    match config {
        Some(p) => ExperimentConfig::load(p),
        None => ExperimentConfig::preset(preset),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config = e.chain().any(|c| {
                matches!(c.downcast_ref::<Error>(), Some(Error::Config(_) | Error::Parse(_)))
            });
            ExitCode::from(if config { EXIT_CONFIG } else { 1 })
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Config { print_defaults, preset } => {
            let cfg = ExperimentConfig::preset(&preset)?;
            if print_defaults {
                print!("{}", cfg.to_toml()?);
            } else {
                println!("use --print-defaults to print the {preset} configuration");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { config } => {
            let cfg = load(config.as_ref(), "desk")?;
            let checks = harness::self_check(&cfg)?;
            let mut ok = true;
            for c in &checks {
                println!("{} {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(EXIT_DIAGNOSTIC) })
        }
        Command::Drop { config, index, p_dbm, mode } => {
            let cfg = load(config.as_ref(), "desk")?;
            cfg.validate()?;
            let (ctx, r) = harness::trace_drop(&cfg, &cfg.network, index, p_dbm, mode)?;
            print!("{}", harness::render_trace(&ctx, &r, mode, p_dbm));
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { config, preset, out, gain_out, drops, seed, workers } => {
            let mut cfg = load(config.as_ref(), &preset)?;
            if let Some(d) = drops {
                cfg.num_drops = d;
            }
            if let Some(s) = seed {
                cfg.base_seed = s;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            cfg.validate()?;
            let open = |p: &PathBuf| File::create(p).with_context(|| format!("creating {}", p.display()));
            let mut rows = CsvSink::new(BufWriter::new(open(&out)?), SweepRow::HEADER)?;
            let mut gains = match &gain_out {
                Some(p) => Some(CsvSink::new(BufWriter::new(open(p)?), GainRow::HEADER)?),
                None => None,
            };
            let result = harness::run_sweep(&cfg, |point| {
                for r in &point.rows {
                    rows.write_line(&r.to_csv_line())?;
                    eprintln!(
                        "{:>5} dBm K={} M={} {:<13} ee={:.5} +- {:.5} ({} drops)",
                        r.p_max_dbm,
                        r.users_per_cell,
                        r.antennas,
                        r.mode.as_str(),
                        r.mean_ee,
                        r.stderr_ee,
                        r.drops
                    );
                }
                if let (Some(sink), Some(g)) = (gains.as_mut(), &point.gain) {
                    sink.write_line(&g.to_csv_line())?;
                }
                Ok(())
            })?;
            let d = result.diagnostics;
            eprintln!(
                "done in {:.1}s: {} inner solves, {} hit the iteration cap, {} failed solves",
                result.wall_time_s, d.inner_solves, d.inner_nonconverged, d.failed_solves
            );
            if d.exceeds(cfg.max_nonconverged_fraction) {
                eprintln!("solver diagnostics exceed the configured threshold");
                return Ok(ExitCode::from(EXIT_DIAGNOSTIC));
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
