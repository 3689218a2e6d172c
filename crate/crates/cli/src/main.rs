use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BLOCKCLIQUE_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = blockclique_cli::Cli::parse();
    if let Err(e) = blockclique_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
