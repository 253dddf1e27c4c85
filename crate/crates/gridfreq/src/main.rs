use clap::Parser;

use gridfreq::cli::{self, Cli};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version arrive here too; they exit cleanly.
            let code = if e.use_stderr() { cli::EXIT_INVALID } else { cli::EXIT_OK };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    std::process::exit(cli::dispatch(cli));
}
