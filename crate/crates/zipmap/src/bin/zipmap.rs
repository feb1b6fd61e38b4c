use std::process::ExitCode;

fn main() -> ExitCode {
    zipmap::cli::main_from_env()
}
