use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("STSC_LOG_LEVEL", "warn"))
        .format_timestamp(None)
        .init();
    ExitCode::from(stsc::cli::run(std::env::args_os()))
}
