fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("LOG_LEVEL", "warn")).init();
    std::process::exit(robust_harvest::cli::main_with_args(std::env::args_os()));
}
