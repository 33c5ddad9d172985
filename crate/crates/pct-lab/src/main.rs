use std::process::ExitCode;

fn main() -> ExitCode {
    let args = std::env::args().skip(1);
    let parsed = match pct_lab::cli::parse_args(args) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match pct_lab::cli::run(parsed) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
