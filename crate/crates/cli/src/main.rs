use clap::Parser;

fn main() {
    let cli = symmflow_cli::Cli::parse();
    if let Err(e) = symmflow_cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
