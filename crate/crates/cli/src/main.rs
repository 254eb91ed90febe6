use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use strongcoupling_cli::output::Format;
use strongcoupling_cli::{execute, Command, Invocation};

/// Strong-coupling expansion of a spin-1/2 source in a pseudoscalar field.
#[derive(Parser, Debug)]
#[command(name = "strongcoupling", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,

    /// Flat `section.key = value` configuration file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Force serial, bit-reproducible reductions.
    #[arg(long)]
    serial: bool,

    /// Pin the source at rest (c = 0).
    #[arg(long)]
    fixed_source: bool,

    #[arg(long, value_name = "PATH", default_value = "out")]
    output_dir: PathBuf,

    #[arg(long, value_enum, default_value_t = Format::Both)]
    format: Format,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let inv = Invocation {
        command: args.command,
        config: args.config,
        serial: args.serial,
        fixed_source: args.fixed_source,
        output_dir: args.output_dir,
        format: args.format,
    };
    match execute(&inv) {
        Ok(summary) => {
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            for path in &summary.written {
                println!("{}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
