fn main() { std::process::exit(prbm::experiments::cli_main(std::env::args().collect())) }
