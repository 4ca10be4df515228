fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let stdout = std::io::stdout();
    let code = psvm::cli::main_with_args(std::env::args_os(), &mut stdout.lock());
    std::process::exit(code);
}
