use clap::Parser;

fn main() {
    let cli = bench_cli::cli::Cli::parse();
    std::process::exit(bench_cli::cli::run(&cli));
}
