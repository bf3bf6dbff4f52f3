use std::process::ExitCode;

fn main() -> ExitCode {
    vgae_defense_cli::run_from_args(std::env::args_os())
}
