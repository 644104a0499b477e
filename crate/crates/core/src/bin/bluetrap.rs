use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bluetrap::app::{self, Command, RunInputs, PROFILE_DIR_ENV};
use bluetrap::Error;

#[derive(Parser)]
#[command(name = "bluetrap", version, about = "Single atoms in a blue-detuned intracavity dipole trap")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Profile name or `.profile` path; each subcommand has its own default.
    #[arg(long, global = true)]
    profile: Option<String>,

    /// Config file applied on top of the profile.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// `section.key=value` override, applied last. Repeatable.
    #[arg(long = "set", global = true)]
    overrides: Vec<String>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory for output files.
    #[arg(long, short, global = true, default_value = "out")]
    output: PathBuf,

    /// Print the merged configuration and exit.
    #[arg(long, global = true)]
    dump_config: bool,
}

#[derive(Subcommand, Clone)]
enum Cmd {
    /// Trap potential on a plane, plus barriers and trap frequencies.
    PotentialMap,
    /// Weak-excitation response across the probe grid and at the detection point.
    QedResponse,
    /// Synthesize a photon-counting transmission spectrum.
    Spectrum,
    /// Fit the normal-mode model to a spectrum.
    Fit {
        /// Spectrum CSV; synthesized from the configuration if omitted.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Bayes-optimal detection confidence and Monte Carlo check.
    Detect,
    /// Single-atom capture trajectory.
    Trace,
    /// Storage time against probe power.
    Storage,
}

impl Cmd {
    fn command(&self) -> Command {
        match self {
            Cmd::PotentialMap => Command::PotentialMap,
            Cmd::QedResponse => Command::QedResponse,
            Cmd::Spectrum => Command::Spectrum,
            Cmd::Fit { .. } => Command::Fit,
            Cmd::Detect => Command::Detect,
            Cmd::Trace => Command::Trace,
            Cmd::Storage => Command::Storage,
        }
    }
}

fn run(cli: Cli) -> Result<i32, Error> {
    let command = cli.command.command();
    let profile_dir = std::env::var_os(PROFILE_DIR_ENV).map(PathBuf::from);
    let profile_name = cli.profile.as_deref().unwrap_or(app::default_profile(command));
    let profile = app::resolve_profile(profile_name, profile_dir.as_deref())?;
    let config_text = cli.config.as_ref().map(std::fs::read_to_string).transpose()?;
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("run.seed={seed}"));
    }
    let config = app::layered_config(&profile, config_text.as_deref(), &overrides)?;
    if cli.dump_config {
        print!("{}", bluetrap::config::emit_config(&config));
        return Ok(0);
    }

    let inputs = RunInputs {
        spectrum_csv: match &cli.command {
            Cmd::Fit { input: Some(path) } => Some(std::fs::read_to_string(path)?),
            _ => None,
        },
    };
    let output = app::run_subcommand(command, &config, &inputs)?;
    std::fs::create_dir_all(&cli.output)?;
    for f in &output.files {
        std::fs::write(cli.output.join(&f.name), &f.contents)?;
    }
    print!("{}", output.report);
    println!("wrote {} files to {}", output.files.len(), cli.output.display());
    Ok(output.status)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(status) => ExitCode::from(status as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
