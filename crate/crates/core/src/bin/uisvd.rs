use std::process::ExitCode;

fn main() -> ExitCode {
    uisvd::cli::main_with_args(std::env::args_os())
}
