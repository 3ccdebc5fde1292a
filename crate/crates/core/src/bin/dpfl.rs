use std::process::ExitCode;

fn main() -> ExitCode {
    dpfl_core::cli::main_with(std::env::args_os())
}
