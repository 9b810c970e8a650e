use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = ragtune_cli::Cli::parse();
    if let Err(e) = ragtune_cli::execute(cli) {
        eprintln!("ragtune: {e}");
        std::process::exit(e.exit_code());
    }
}
