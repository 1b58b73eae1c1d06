use clap::Parser;
use smoothrl_bench::cli::{run, Cli};
use smoothrl_bench::BenchError;

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return;
        }
        Err(e) => {
            let err = BenchError::Usage(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            std::process::exit(err.exit_code());
        }
    };
    let mut stdout = std::io::stdout().lock();
    let mut stderr = std::io::stderr();
    if let Err(e) = run(cli, &mut stdout, &mut stderr) {
        eprintln!("{}", e.to_json());
        std::process::exit(e.exit_code());
    }
}
