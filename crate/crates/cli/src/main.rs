use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(toolpose_cli::run(std::env::args_os()))
}
