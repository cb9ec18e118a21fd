use clap::Parser;

use lexsimp_cli::{error::CliError, run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let mut stdout = std::io::stdout().lock();
    if let Err(e) = run(cli, &mut stdout) {
        eprintln!("error: {e}");
        if let CliError::Data { diagnostics, .. } = &e {
            for d in diagnostics {
                eprintln!("  {d}");
            }
        }
        std::process::exit(e.exit_code());
    }
}
