use clap::Parser;
use harvnet_cli::args::Cli;

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 64,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = harvnet_cli::run(cli) {
        eprintln!("harvnet: error: {e}");
        std::process::exit(e.exit_code());
    }
}
