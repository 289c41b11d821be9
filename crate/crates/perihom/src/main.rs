fn main() { std::process::exit(perihom::cli::cli_main(std::env::args())) }
