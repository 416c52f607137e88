use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(vbgrowth_cli::run_cli(std::env::args_os()))
}
