use clap::Parser;

fn main() {
    let cli = chemostab_cli::Cli::parse();
    std::process::exit(chemostab_cli::execute(&cli));
}
