use clap::Parser;
use data_agent_cli::command::Cli;

fn main() {
    let cli = Cli::parse();
    if let Err(e) = cli.run() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
