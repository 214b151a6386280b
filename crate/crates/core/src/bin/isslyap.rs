use clap::Parser;
use iss_lyap::cli::{main_with, Cli};

fn main() {
    std::process::exit(main_with(Cli::parse()));
}
