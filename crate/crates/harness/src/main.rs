use clap::Parser;

fn main() {
    let cli = recompose_harness::cli::Cli::parse();
    if let Err(e) = recompose_harness::cli::run(cli) {
        eprintln!("recompose: {e}");
        std::process::exit(e.exit_code());
    }
}
