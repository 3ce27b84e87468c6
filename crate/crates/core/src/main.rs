use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BOARS_LOG", "warn")).init();
    boars::cli::main_with(std::env::args_os())
}
