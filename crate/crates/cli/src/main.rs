use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(dfx_cli::run(std::env::args_os()))
}
