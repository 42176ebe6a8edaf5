use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use rsgd_cli::args::Cli;
use rsgd_cli::commands::{execute, Console};

fn main() -> ExitCode {
    // clap exits with 2 on usage errors and 0 for --help/--version.
    let cli = Cli::parse();
    let (stdout, stderr) = (std::io::stdout(), std::io::stderr());
    let (mut out, mut err) = (stdout.lock(), stderr.lock());
    let result = execute(cli, &mut Console { out: &mut out, err: &mut err });
    let _ = out.flush();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            let _ = writeln!(err, "error: {e}");
            ExitCode::from(code as u8)
        }
    }
}
