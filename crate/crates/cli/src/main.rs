use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(signest_cli::run(std::env::args_os()))
}
