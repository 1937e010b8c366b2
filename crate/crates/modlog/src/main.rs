use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(modlog::cli::main())
}
