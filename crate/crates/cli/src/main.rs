use clap::Parser;
use xaiseg_cli::args::Cli;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = xaiseg_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code().into());
    }
}
