use clap::Parser;

fn main() {
    let cli = hopforge::cli::Cli::parse();
    hopforge::logging::init(cli.log_level);
    match hopforge::cli::run(cli) {
        Ok(summary) => {
            print!("{summary}");
        }
        Err(err) => {
            eprintln!("{}", err.to_json());
            std::process::exit(err.exit_code());
        }
    }
}
