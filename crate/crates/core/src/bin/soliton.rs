use std::process::ExitCode;

fn main() -> ExitCode {
    soliton_core::cli::main()
}
