use clap::Parser;

fn main() {
    let cli = drp::casecli::Cli::parse();
    match drp::casecli::run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    }
}
