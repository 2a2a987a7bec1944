use std::process::ExitCode;

fn main() -> ExitCode {
    jumpgp::cli::main_with_args(std::env::args_os())
}
