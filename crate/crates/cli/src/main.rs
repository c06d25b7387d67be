use std::process::ExitCode;

fn main() -> ExitCode {
    weavenet_cli::run(std::env::args_os().collect())
}
