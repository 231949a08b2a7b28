use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use abel_cli::commands::{EXIT_OK, EXIT_USAGE};
use abel_cli::{parse_config, run, Command, RunInputs};
use clap::Parser;

/// Nonconstant-sign periodic solutions of x x' = A(t) + B(t) x + C(t) x^2.
#[derive(Parser, Debug)]
#[command(name = "abel2", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Problem file.
    config: PathBuf,
    /// Directory receiving the output files.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Solution CSV checked by `verify`.
    #[arg(long)]
    solution: Option<PathBuf>,
}

fn exit(code: i32) -> ExitCode {
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return exit(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    let text = match fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", cli.config.display());
            return exit(EXIT_USAGE);
        }
    };
    let cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}: {e}", cli.config.display());
            return exit(EXIT_USAGE);
        }
    };
    let mut inputs = RunInputs::default();
    if let Some(path) = &cli.solution {
        match fs::read_to_string(path) {
            Ok(t) => inputs.solution_csv = Some(t),
            Err(e) => {
                eprintln!("cannot read {}: {e}", path.display());
                return exit(EXIT_USAGE);
            }
        }
    }

    let out = run(cli.command, &cfg, &inputs);
    eprint!("{}", out.stderr);
    print!("{}", out.stdout);
    if !out.files.is_empty() {
        if let Err(e) = fs::create_dir_all(&cli.out) {
            eprintln!("cannot create {}: {e}", cli.out.display());
            return exit(EXIT_USAGE);
        }
        for (name, body) in &out.files {
            let path = cli.out.join(name);
            if let Err(e) = fs::write(&path, body) {
                eprintln!("cannot write {}: {e}", path.display());
                return exit(EXIT_USAGE);
            }
        }
    }
    exit(out.code)
}
