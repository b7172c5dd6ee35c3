use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wban_cli::{
    cmd_opcount, cmd_randomness, cmd_simulate, cmd_vectors, CliError, OpcountFormat, RunConfig, VectorMode,
};
use wban_core::simnet::Profile;

#[derive(Parser)]
#[command(name = "wban", version, about = "IAMKeys and KEMESIS simulator and analysis tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Number of frames (simulate: IAMKeys slots; randomness: frames per scheme)
    #[arg(long)]
    frames: Option<u64>,
    /// Uniform loss probability on every link direction, in [0, 1]
    #[arg(long)]
    loss: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// analysis (16x8 table, 8-bit cells) or realistic (256x16, 16-bit)
    #[arg(long)]
    profile: Option<Profile>,
    /// Scenario file: `key = value` lines, `#` comments, `at N: replay I` and
    /// `at N: flip I B` adversary lines. Flags override its values.
    #[arg(long)]
    script: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

impl RunArgs {
    fn into_config(self) -> RunConfig {
        RunConfig {
            profile: self.profile,
            frames: self.frames,
            loss: self.loss,
            seed: self.seed,
            script: self.script,
            out: self.out,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario; writes trace.log, trace.csv and summary.txt to --out
    Simulate(RunArgs),
    /// Record selector choices on a lossless link; writes randomness.csv and randomness.txt
    #[command(after_help = "randomness.csv columns: scheme,frame,index,field,variant\n  \
        iamkeys: index = reference slot 0..5, field = hashable field, variant = tone\n  \
        kemesis: index = FRAME_NO, field = FIELD_NO, variant = KEY_USED\n\
        randomness.txt: raw chi-square statistic and degrees of freedom per column, \
        omitted below two frames")]
    Randomness(RunArgs),
    /// Print the op-count scenario tables
    #[command(after_help = "CSV columns: scheme,scenario,alpha,beta,gamma,encrypt,decrypt")]
    Opcount {
        #[arg(long)]
        csv: bool,
    },
    /// Write or check golden hex vectors
    Vectors {
        #[command(subcommand)]
        mode: VectorCommand,
    },
}

#[derive(Subcommand)]
enum VectorCommand {
    Generate { path: PathBuf },
    Verify { path: PathBuf },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => {
            let report = cmd_simulate(&args.into_config())?;
            print!("{}", report.summary);
        }
        Command::Randomness(args) => {
            let report = cmd_randomness(&args.into_config())?;
            print!("{}", report.summary());
        }
        Command::Opcount { csv } => {
            let format = if csv { OpcountFormat::Csv } else { OpcountFormat::Text };
            print!("{}", cmd_opcount(format));
        }
        Command::Vectors { mode } => {
            let (mode, path) = match mode {
                VectorCommand::Generate { path } => (VectorMode::Generate, path),
                VectorCommand::Verify { path } => (VectorMode::Verify, path),
            };
            let n = cmd_vectors(mode, &path)?;
            println!("{n} vectors ok");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
