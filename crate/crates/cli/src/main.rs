use clap::Parser;

fn main() {
    let cli = sacdnet_cli::Cli::parse();
    if let Err(err) = sacdnet_cli::run(&cli) {
        eprintln!("{}", err.to_json());
        std::process::exit(err.exit_code());
    }
}
