use std::process::ExitCode;

fn main() -> ExitCode {
    chns_cli::main_with_args(std::env::args_os())
}
