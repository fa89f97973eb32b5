//! `qrl`: run readout experiments or analyze recorded traces.
//!
//! Exit codes: 0 success, 1 analysis failure, 2 configuration error, 3 I/O error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qrl_core::config::ConfigError;
use qrl_core::experiments::EXPERIMENTS;
use qrl_core::traceio::{import_traces, TraceIoError};
use qrl_core::{analyze_experiment, parse_config, run_experiment, ExperimentError, SimParams};

const AFTER_HELP: &str = "\
Experiments: hist, power-sweep, purify, herald, budget, reset, jumps.

Each run writes report.json, the resolved config.txt and CSV artifacts to the
output directory, and prints the report on stdout.

CSV artifacts:
  histogram*.csv, purified_histogram.csv   voltage,ground_count,excited_count
  power_sweep.csv   nbar,snr,f_single,f_single_se,f_integrated,f_integrated_se,
                    tau_f_ns,t1_readout_us,t1_readout_se_us,t1_model_us
  budget.csv        entry,loss,stderr,method
  dwells.csv        state,duration_ns,limit_ns  (completed dwells and the longest
                    duration each could have had, dead time subtracted)
  trace files (.csv) label,t_s_ns,t_a_ns,t_b_ns,t_d_ns,sample_dt_ns,s0,s1,...
                    label 0 = ground, 1 = excited; t_s_ns is NaN without a herald

traces.qrt is packed little-endian binary: \"QRT1\", version u16, sample_dt_ns
f64, n_records u64, samples_per_record u64, then per record label u8, t_S t_A
t_B t_D as f64 ns, and f32 samples.

Exit codes: 0 ok, 1 analysis failure, 2 config error, 3 I/O error.";

#[derive(Parser)]
#[command(name = "qrl", version, about = "Single-shot qubit readout simulator and analysis", after_help = AFTER_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate and analyze a named experiment.
    Run {
        experiment: String,
        /// key = value configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Overrides run.master_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (created if missing).
        #[arg(long, default_value = "qrl-out")]
        out: PathBuf,
        /// Append the hidden state paths to traces.qrt.
        #[arg(long)]
        export_truth: bool,
    },
    /// Analyze a trace file (.qrt binary or .csv).
    Analyze {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        experiment: String,
        /// Analysis settings and noise level; defaults apply without it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write report.json and artifacts here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Analysis(String),
    Config(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Analysis(_) => 1,
            Failure::Config(_) => 2,
            Failure::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Analysis(m) | Failure::Config(m) | Failure::Io(m) => m,
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        let msg = e.to_string();
        match e {
            ExperimentError::Io(_) => Failure::Io(msg),
            ExperimentError::Analysis(_) => Failure::Analysis(msg),
            ExperimentError::Unknown(_)
            | ExperimentError::NeedsSimulation(_)
            | ExperimentError::Sim(_)
            | ExperimentError::Input(_) => Failure::Config(msg),
        }
    }
}

fn load_config(path: &Path) -> Result<SimParams, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e: ConfigError| Failure::Config(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))
}

// A closed stdout (e.g. piped into `head`) is not an error.
fn print_report(report: &qrl_core::ExperimentReport) {
    use std::io::Write;
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            experiment,
            config,
            seed,
            out,
            export_truth,
        } => {
            if !EXPERIMENTS.contains(&experiment.as_str()) {
                return Err(ExperimentError::Unknown(experiment).into());
            }
            let mut params = load_config(&config)?;
            if let Some(seed) = seed {
                params.master_seed = seed;
            }
            create_dir(&out)?;
            let report = run_experiment(&experiment, &params, Some(&out), export_truth)?;
            print_report(&report);
        }
        Command::Analyze {
            traces,
            experiment,
            config,
            out,
        } => {
            let params = match config {
                Some(path) => load_config(&path)?,
                None => SimParams::default(),
            };
            let records = import_traces(&traces).map_err(|e: TraceIoError| Failure::Io(e.to_string()))?;
            if let Some(dir) = &out {
                create_dir(dir)?;
            }
            let source = traces.display().to_string();
            let report = analyze_experiment(&experiment, records, &source, &params, out.as_deref())?;
            print_report(&report);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("qrl: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
