use clap::Parser;
use keyloom_cli::{configure_threads, run, Cli};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // Usage errors are user errors; help and version are not errors.
            std::process::exit(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Err(e) = configure_threads().and_then(|_| run(cli)) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
