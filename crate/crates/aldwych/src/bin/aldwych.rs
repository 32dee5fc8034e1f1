use std::process::ExitCode;

fn main() -> ExitCode {
    aldwych::cli::main()
}
