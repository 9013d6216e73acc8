use clap::Parser;
use scalekit::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(msg) => println!("{msg}"),
        Err(e) => {
            eprintln!("scalekit: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
