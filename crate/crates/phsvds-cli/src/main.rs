use clap::{Parser, Subcommand};
use phsvds_cli::commands::{self, AnalyzeArgs, CompareArgs, GenerateArgs, SvdsArgs};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "phsvds", version, about = "Sparse singular-value solver toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute singular triplets of a Matrix Market matrix.
    Svds(SvdsArgs),
    /// Report spectrum properties and convergence-rate predictions.
    Analyze(AnalyzeArgs),
    /// Trace solver and baseline residuals per iteration as CSV.
    Compare(CompareArgs),
    /// Write synthetic test matrices as Matrix Market files.
    Generate(GenerateArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // --help and --version walk through here too; only genuine
            // usage errors exit 1.
            let code = u8::from(err.use_stderr());
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Svds(args) => commands::cmd_svds(&args),
        Command::Analyze(args) => commands::cmd_analyze(&args),
        Command::Compare(args) => commands::cmd_compare(&args),
        Command::Generate(args) => commands::cmd_generate(&args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
