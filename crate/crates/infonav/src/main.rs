use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(infonav::cli::run(std::env::args()) as u8)
}
