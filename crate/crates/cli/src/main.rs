use clap::Parser;

fn main() {
    let cli = match qforecast_cli::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                qforecast_cli::EXIT_USAGE
            } else {
                qforecast_cli::EXIT_OK
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    std::process::exit(qforecast_cli::execute(cli));
}
