use std::process::ExitCode;

fn main() -> ExitCode {
    healthledger::cli::main_with(std::env::args_os())
}
