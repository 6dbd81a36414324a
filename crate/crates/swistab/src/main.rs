use clap::Parser;

fn main() {
    swistab::cli::init_logging();
    let cli = swistab::cli::Cli::parse();
    std::process::exit(swistab::cli::run(cli));
}
