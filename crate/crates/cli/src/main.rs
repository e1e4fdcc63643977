use clap::Parser;

use conquer_cli::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let exit = run(cli, &mut stdout.lock());
    std::process::exit(exit.code());
}
