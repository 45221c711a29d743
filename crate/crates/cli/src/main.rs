use clap::Parser;

use carewatch_cli::error::exit;
use carewatch_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Some(dir)) => println!("wrote {}", dir.display()),
        Ok(None) => {}
        Err(e) => {
            eprintln!("{}", e.to_json());
            std::process::exit(e.exit_code());
        }
    }
    std::process::exit(exit::OK);
}
